use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{greedy_cover, kmnc_profile, kmnc_sets, BaselineConfig};
use crate::error::Result;
use crate::io::report::TimingRow;
use crate::nss::rank_descending;
use crate::select::{Budget, NssConfig, Selection, SelectorKind};
use crate::tensor::Tensor;

/// Phase timings per selector and budget, in selector-major order. Each
/// selector runs once untimed first to warm caches; random selection is
/// reported as zero time.
pub fn overhead_bench(
    selection: &Selection,
    selectors: &[SelectorKind],
    budgets: &[Budget],
    nss: &NssConfig,
    baseline: &BaselineConfig,
) -> Result<Vec<TimingRow>> {
    let n = selection.len();
    let mut rows = Vec::with_capacity(selectors.len() * budgets.len());
    for &kind in selectors {
        if let Some(&first) = budgets.first() {
            selection.run(kind, first, nss, baseline)?;
        }
        for &budget in budgets {
            let (_, t) = selection.run(kind, budget, nss, baseline)?;
            let (scoring, ordering) =
                if kind == SelectorKind::Random { (0.0, 0.0) } else { (t.scoring.as_secs_f64(), t.ordering.as_secs_f64()) };
            rows.push(TimingRow {
                selector: kind.name().into(),
                budget: budget.fraction_of(n),
                scoring_secs: scoring,
                ordering_secs: ordering,
            });
        }
    }
    Ok(rows)
}

fn min_time(repeats: usize, mut f: impl FnMut()) -> Duration {
    (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed()
        })
        .min()
        .expect("at least one repeat")
}

/// Time of the NSS ordering phase (the descending sort) on `n` and `2n`
/// uniformly random scores, best of `repeats`.
pub fn nss_ordering_scaling(n: usize, repeats: usize, seed: u64) -> (Duration, Duration) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores: Vec<f32> = (0..2 * n).map(|_| rng.gen()).collect();
    let time = |m: usize| {
        min_time(repeats, || {
            std::hint::black_box(rank_descending(&scores[..m]));
        })
    };
    (time(n), time(2 * n))
}

/// Time of the KMNC greedy loop on `n` and `2n` random candidates with a fixed
/// neuron count, selecting `budget_fraction` of the candidates, best of
/// `repeats`.
pub fn kmnc_greedy_scaling(
    n: usize,
    neurons: usize,
    bins: usize,
    budget_fraction: f64,
    repeats: usize,
    seed: u64,
) -> Result<(Duration, Duration)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = |rows: usize| {
        let data = (0..rows * neurons).map(|_| rng.gen::<f32>()).collect();
        Tensor::new(vec![rows, neurons], data)
    };
    let train = random(256)?;
    let candidates = random(2 * n)?;
    let profile = kmnc_profile(0, &train, bins)?;
    let time = |m: usize| -> Result<Duration> {
        let subset = Tensor::new(vec![m, neurons], candidates.data()[..m * neurons].to_vec())?;
        let sets = kmnc_sets(&profile, &subset)?;
        let budget = Budget::Fraction(budget_fraction).resolve(m)?;
        Ok(min_time(repeats, || {
            std::hint::black_box(greedy_cover(&sets, budget));
        }))
    };
    Ok((time(n)?, time(2 * n)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_helpers_run() {
        let (a, b) = nss_ordering_scaling(1000, 2, 0);
        assert!(a > Duration::ZERO && b > Duration::ZERO);
        let (a, b) = kmnc_greedy_scaling(50, 8, 10, 0.2, 1, 0).unwrap();
        assert!(b >= a / 2);
    }
}
