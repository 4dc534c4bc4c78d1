use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nss::identify::{identify_on, Identification, SensitiveFraction};
use crate::nss::sensitivity::tnss_scores;
use crate::nss::traces::PairTraces;
use crate::scalar::Scalar;

/// Indices ordered by descending score; equal scores keep ascending index.
/// A stable merge sort, `O(n log n)`.
pub fn rank_descending<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

#[derive(Clone, Debug, PartialEq)]
pub struct NssOutcome<T> {
    pub identification: Identification<T>,
    /// TNSScore of every candidate, by candidate index.
    pub scores: Vec<T>,
    /// Every candidate in priority order.
    pub order: Vec<usize>,
    pub budget: usize,
}

impl<T> NssOutcome<T> {
    pub fn selected(&self) -> &[usize] {
        &self.order[..self.budget]
    }
}

/// Identifies sensitive neurons on all pairs, scores every pair on them and
/// keeps the `budget` highest scores.
pub fn select<T: Scalar>(traces: &PairTraces<T>, k: SensitiveFraction, budget: usize) -> Result<NssOutcome<T>> {
    finish(traces, identify_on(traces, k, None)?, budget)
}

/// Like [`select`], but identifies sensitive neurons on a seeded random subset
/// holding `fraction` of the pairs (at least one).
pub fn select_with_subset<T: Scalar>(
    traces: &PairTraces<T>,
    k: SensitiveFraction,
    budget: usize,
    fraction: f64,
    seed: u64,
) -> Result<NssOutcome<T>> {
    finish(traces, identify_with_subset(traces, k, fraction, seed)?, budget)
}

/// Sensitive-neuron identification on a seeded subset of `ceil(fraction * n)`
/// pairs; `fraction = 1` uses every pair.
pub fn identify_with_subset<T: Scalar>(
    traces: &PairTraces<T>,
    k: SensitiveFraction,
    fraction: f64,
    seed: u64,
) -> Result<Identification<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("identification fraction {fraction} outside (0, 1]")));
    }
    if fraction == 1.0 || traces.is_empty() {
        return identify_on(traces, k, None);
    }
    let n = traces.len();
    let m = ((fraction * n as f64).ceil() as usize).clamp(1, n.max(1));
    let mut subset = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, m).into_vec();
    subset.sort_unstable();
    identify_on(traces, k, Some(&subset))
}

fn finish<T: Scalar>(traces: &PairTraces<T>, identification: Identification<T>, budget: usize) -> Result<NssOutcome<T>> {
    if budget == 0 {
        return Err(Error::InvalidParameter("selection budget must be positive".into()));
    }
    let scores = tnss_scores(traces, &identification.sensitive)?;
    let order = rank_descending(&scores);
    let budget = budget.min(order.len());
    Ok(NssOutcome { identification, scores, order, budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nss::sensitivity::NeuronAddress;
    use crate::Exact;
    use proptest::prelude::*;

    fn table_two() -> PairTraces<Exact> {
        let q = |n: i64| Exact::new(n, 100);
        PairTraces::from_rows(
            0,
            &[
                (vec![q(40), q(50)], vec![q(30), q(40)]),
                (vec![q(20), q(40)], vec![q(20), q(40)]),
                (vec![q(40), q(50)], vec![q(30), q(30)]),
                (vec![q(80), q(50)], vec![q(70), q(45)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn table_two_full_ranking() {
        let out = select(&table_two(), SensitiveFraction::new(1.0).unwrap(), 4).unwrap();
        assert_eq!(out.order, vec![2, 0, 3, 1]);
        assert_eq!(out.scores, vec![Exact::new(1, 5), Exact::from(0), Exact::new(3, 10), Exact::new(3, 20)]);
    }

    #[test]
    fn table_two_budget_one() {
        let out = select(&table_two(), SensitiveFraction::new(1.0).unwrap(), 1).unwrap();
        assert_eq!(out.selected(), &[2]);
    }

    #[test]
    fn identical_pairs_rank_by_index() {
        let rows = vec![(vec![0.2f64, 0.7], vec![0.2, 0.7]); 5];
        let t = PairTraces::from_rows(0, &rows).unwrap();
        let out = select(&t, SensitiveFraction::DEFAULT, 5).unwrap();
        assert_eq!(out.order, vec![0, 1, 2, 3, 4]);
        assert!(out.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn rank_ties_are_stable() {
        assert_eq!(rank_descending(&[1.0f32, 3.0, 1.0, 3.0, 2.0]), vec![1, 3, 4, 0, 2]);
        assert_eq!(rank_descending(&[f64::INFINITY, 0.0, f64::INFINITY]), vec![0, 2, 1]);
    }

    #[test]
    fn subset_identification_is_seeded() {
        let rows: Vec<(Vec<f64>, Vec<f64>)> =
            (0..40).map(|p| ((0..6).map(|i| (p * i) as f64).collect(), (0..6).map(|i| (p + i) as f64).collect())).collect();
        let t = PairTraces::from_rows(0, &rows).unwrap();
        let k = SensitiveFraction::new(0.5).unwrap();
        let a = select_with_subset(&t, k, 5, 0.25, 1).unwrap();
        assert_eq!(a, select_with_subset(&t, k, 5, 0.25, 1).unwrap());
        assert!(select_with_subset(&t, k, 5, 0.0, 1).is_err());
        assert_eq!(select_with_subset(&t, k, 5, 1.0, 9).unwrap(), select(&t, k, 5).unwrap());
    }

    fn traces_strategy() -> impl Strategy<Value = PairTraces<f64>> {
        (1usize..30, 1usize..8).prop_flat_map(|(n, w)| {
            (prop::collection::vec(-2.0f64..2.0, n * w), prop::collection::vec(-2.0f64..2.0, n * w))
                .prop_map(move |(a, b)| PairTraces::new(0, w, a, b).unwrap())
        })
    }

    proptest! {
        #[test]
        fn budget_law(t in traces_strategy(), budget in 1usize..40, k in 0.01f64..=1.0) {
            let out = select(&t, SensitiveFraction::new(k).unwrap(), budget).unwrap();
            let sel = out.selected();
            prop_assert_eq!(sel.len(), budget.min(t.len()));
            let chosen: std::collections::BTreeSet<_> = sel.iter().copied().collect();
            let min_sel = sel.iter().map(|&i| out.scores[i]).fold(f64::INFINITY, f64::min);
            for i in (0..t.len()).filter(|i| !chosen.contains(i)) {
                prop_assert!(out.scores[i] <= min_sel);
            }
            prop_assert!(out.scores.iter().all(|&s| s >= 0.0));
        }

        #[test]
        fn monotone_in_sensitive_set(t in traces_strategy(), cut in 0usize..8) {
            let all: Vec<_> = (0..t.width()).map(|index| NeuronAddress { layer: 0, index }).collect();
            let part = &all[..cut.min(all.len()).max(1)];
            let a = tnss_scores(&t, part).unwrap();
            let b = tnss_scores(&t, &all).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(x <= y);
            }
        }

        #[test]
        fn permutation_invariance(t in traces_strategy(), seed in any::<u64>(), budget in 1usize..10) {
            let n = t.len();
            let mut perm: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled = t.subset(&perm).unwrap();
            let k = SensitiveFraction::new(0.5).unwrap();
            let a = select(&t, k, budget).unwrap();
            let b = select(&shuffled, k, budget).unwrap();
            let mut sa = a.scores.clone();
            let mut sb = b.scores.clone();
            sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
            sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
            // sensitivity sums may differ in the last bit when summed in another order
            for (x, y) in sa.iter().zip(&sb) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            for (i, &orig) in perm.iter().enumerate() {
                prop_assert!((b.scores[i] - a.scores[orig]).abs() <= 1e-9);
            }
        }
    }
}
