use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::parallel;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Cached training activations grouped by class.
#[derive(Clone, Debug, PartialEq)]
pub struct DsaReference<T> {
    width: usize,
    by_class: Vec<Vec<Vec<T>>>,
}

impl<T: Real> DsaReference<T> {
    /// Keeps at most `cap / classes` (at least one) activations per class,
    /// chosen by a seeded uniform subsample and stored in index order.
    pub fn new(activations: &Tensor<T>, labels: &[usize], classes: usize, cap: usize, seed: u64) -> Result<Self> {
        if activations.batch() == 0 {
            return Err(Error::Empty("training activations"));
        }
        if labels.len() != activations.batch() {
            return Err(Error::InvalidShape(format!("{} labels for {} activations", labels.len(), activations.batch())));
        }
        if cap < classes {
            return Err(Error::InvalidParameter(format!("DSA cap {cap} is below the class count {classes}")));
        }
        let quota = cap / classes;
        let mut by_class = Vec::with_capacity(classes);
        for c in 0..classes {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            let mut keep = if members.len() > quota {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                sample(&mut rng, members.len(), quota).into_iter().map(|j| members[j]).collect()
            } else {
                members
            };
            keep.sort_unstable();
            by_class.push(keep.into_iter().map(|i| activations.row(i).to_vec()).collect());
        }
        Ok(Self { width: activations.row_len(), by_class })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.by_class.iter().map(Vec::len).collect()
    }
}

fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// Nearest vector in `set` (first on ties) and its distance.
fn nearest<'a, T: Real>(set: impl Iterator<Item = &'a Vec<T>>, q: &[T]) -> Option<(&'a Vec<T>, T)> {
    set.map(|v| (v, distance(v, q))).fold(None, |best, cur| match best {
        Some((_, d)) if d <= cur.1 => best,
        _ => Some(cur),
    })
}

/// `dist_a / dist_b`: `dist_a` from the activation to the nearest cached
/// activation of the predicted class (`x_a`), `dist_b` from `x_a` to the
/// nearest activation of any other class. A zero `dist_b`, or a class with no
/// cached activations, gives `+inf`.
pub fn dsa_score<T: Real>(reference: &DsaReference<T>, activation: &[T], predicted: usize) -> T {
    let Some((x_a, dist_a)) = reference.by_class.get(predicted).and_then(|s| nearest(s.iter(), activation)) else {
        return T::infinity();
    };
    let others = reference.by_class.iter().enumerate().filter(|&(c, _)| c != predicted).flat_map(|(_, s)| s.iter());
    match nearest(others, x_a) {
        Some((_, dist_b)) if dist_b > T::zero() => dist_a / dist_b,
        _ => T::infinity(),
    }
}

pub fn dsa_scores<T: Real>(reference: &DsaReference<T>, activations: &Tensor<T>, predicted: &[usize]) -> Result<Vec<T>> {
    if activations.row_len() != reference.width() || predicted.len() != activations.batch() {
        return Err(Error::InvalidShape(format!(
            "activations {:?} with {} predictions do not match reference width {}",
            activations.shape(),
            predicted.len(),
            reference.width()
        )));
    }
    Ok(parallel::map_indexed(activations.batch(), |i| dsa_score(reference, activations.row(i), predicted[i])))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two clusters in 2-D around (0, 0) and (10, 0).
    fn clusters() -> (Tensor<f64>, Vec<usize>) {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (c, cx) in [(0usize, 0.0f64), (1, 10.0)] {
            for (dx, dy) in [(0.0, 0.0), (0.5, 0.0), (-0.5, 0.0), (0.0, 0.5), (0.0, -0.5)] {
                data.extend_from_slice(&[cx + dx, dy]);
                labels.push(c);
            }
        }
        (Tensor::new(vec![10, 2], data).unwrap(), labels)
    }

    fn brute_force(train: &Tensor<f64>, labels: &[usize], q: &[f64], c: usize) -> f64 {
        let d = |a: &[f64], b: &[f64]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let same: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let a = *same.iter().min_by(|&&i, &&j| d(train.row(i), q).partial_cmp(&d(train.row(j), q)).unwrap()).unwrap();
        let dist_a = d(train.row(a), q);
        let dist_b = (0..labels.len())
            .filter(|&i| labels[i] != c)
            .map(|i| d(train.row(i), train.row(a)))
            .fold(f64::INFINITY, f64::min);
        dist_a / dist_b
    }

    #[test]
    fn between_clusters_is_more_surprising() {
        let (train, labels) = clusters();
        let r = DsaReference::new(&train, &labels, 2, 1000, 0).unwrap();
        let centre = dsa_score(&r, &[0.1, 0.1], 0);
        let between = dsa_score(&r, &[5.0, 0.0], 0);
        assert!(between > centre);
        assert!((between - brute_force(&train, &labels, &[5.0, 0.0], 0)).abs() < 1e-12);
        assert!((centre - brute_force(&train, &labels, &[0.1, 0.1], 0)).abs() < 1e-12);
    }

    #[test]
    fn cached_point_has_zero_surprise() {
        let (train, labels) = clusters();
        let r = DsaReference::new(&train, &labels, 2, 1000, 0).unwrap();
        assert_eq!(dsa_score(&r, &[10.5, 0.0], 1), 0.0);
    }

    #[test]
    fn invariant_under_global_scaling() {
        let (train, labels) = clusters();
        let scaled = train.map(|v| v * 3.5);
        let r1 = DsaReference::new(&train, &labels, 2, 1000, 0).unwrap();
        let r2 = DsaReference::new(&scaled, &labels, 2, 1000, 0).unwrap();
        let a = dsa_score(&r1, &[2.0, 1.0], 0);
        let b = dsa_score(&r2, &[7.0, 3.5], 0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases_are_infinite() {
        let train = Tensor::new(vec![2, 1], vec![1.0f64, 1.0]).unwrap();
        let r = DsaReference::new(&train, &[0, 1], 3, 30, 0).unwrap();
        assert_eq!(dsa_score(&r, &[0.0], 0), f64::INFINITY); // dist_b = 0
        assert_eq!(dsa_score(&r, &[0.0], 2), f64::INFINITY); // no class-2 reference
    }

    #[test]
    fn per_class_quota() {
        let (train, labels) = clusters();
        let r = DsaReference::new(&train, &labels, 2, 6, 4).unwrap();
        assert_eq!(r.class_sizes(), vec![3, 3]);
        assert_eq!(r, DsaReference::new(&train, &labels, 2, 6, 4).unwrap());
        assert!(DsaReference::new(&train, &labels, 2, 1, 0).is_err());
    }
}
