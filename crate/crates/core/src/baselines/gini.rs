use crate::parallel;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// `1 - sum_c p_c^2` of one probability row.
pub fn gini_impurity<T: Real>(probs: &[T]) -> T {
    T::one() - probs.iter().map(|&p| p * p).sum::<T>()
}

/// Gini impurity of every row of a `[n, classes]` probability tensor.
pub fn gini_scores<T: Real>(probs: &Tensor<T>) -> Vec<T> {
    parallel::map_indexed(probs.batch(), |i| gini_impurity(probs.row(i)))
}
