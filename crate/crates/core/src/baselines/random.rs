use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A seeded uniformly random permutation of `0..count`.
pub fn random_order(count: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// `budget` distinct indices drawn uniformly without replacement.
pub fn random_select(count: usize, budget: usize, seed: u64) -> Result<Vec<usize>> {
    if budget > count {
        return Err(Error::BudgetExceeds { requested: budget, available: count });
    }
    let mut order = random_order(count, seed);
    order.truncate(budget);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_budget_takes_everything() {
        let mut all = random_select(9, 9, 3).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn seeded() {
        assert_eq!(random_select(50, 5, 1).unwrap(), random_select(50, 5, 1).unwrap());
        assert!(matches!(random_select(3, 4, 0), Err(Error::BudgetExceeds { requested: 4, available: 3 })));
    }

    #[test]
    fn single_pick_is_uniform() {
        let trials = 10_000;
        let mut hits = [0usize; 10];
        for seed in 0..trials {
            hits[random_select(10, 1, seed).unwrap()[0]] += 1;
        }
        for h in hits {
            let f = h as f64 / trials as f64;
            assert!((f - 0.1).abs() <= 0.01, "{hits:?}");
        }
    }
}
