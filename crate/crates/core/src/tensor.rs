use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

/// Dense row-major n-dimensional array.
///
/// When a tensor carries a batch, the batch dimension is the leftmost one and
/// [`Tensor::row`] returns one batch element.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape(format!("{shape:?} must be non-empty with positive dimensions")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} holds {expected} elements but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![T::zero(); n] }
    }

    /// Stacks equally-shaped items along a new leading batch dimension.
    pub fn stack<'a, I>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Tensor<T>>,
    {
        let mut iter = items.into_iter();
        let first = iter.next().ok_or(Error::Empty("tensor stack"))?;
        let mut data = first.data.clone();
        let mut count = 1;
        for item in iter {
            if item.shape != first.shape {
                return Err(Error::InvalidShape(format!(
                    "cannot stack {:?} with {:?}",
                    item.shape, first.shape
                )));
            }
            data.extend_from_slice(&item.data);
            count += 1;
        }
        let mut shape = Vec::with_capacity(first.shape.len() + 1);
        shape.push(count);
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Size of the leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements per batch element.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.data.chunks_exact(self.row_len().max(1))
    }

    /// Extracts batch element `i` as a standalone tensor.
    pub fn item(&self, i: usize) -> Tensor<T> {
        Tensor { shape: self.shape[1..].to_vec(), data: self.row(i).to_vec() }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Converts element-wise; `None` if a value is not representable.
    pub fn cast<U: Scalar>(&self) -> Option<Tensor<U>> {
        let data = self.data.iter().map(|v| v.to_f64().and_then(U::from_f64)).collect::<Option<Vec<_>>>()?;
        Some(Tensor { shape: self.shape.clone(), data })
    }
}

impl<T: Real> Tensor<T> {
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0f32; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], Vec::<f32>::new()).is_err());
        assert!(Tensor::new(vec![], vec![1f32]).is_err());
    }

    #[test]
    fn stack_and_rows() {
        let a = Tensor::new(vec![2], vec![1f32, 2.0]).unwrap();
        let b = Tensor::new(vec![2], vec![3f32, 4.0]).unwrap();
        let s = Tensor::stack([&a, &b]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.row(1), &[3.0, 4.0]);
        assert_eq!(s.item(0), a);
        assert_eq!(s.rows().count(), 2);
    }

    #[test]
    fn stack_rejects_mixed_shapes() {
        let a = Tensor::new(vec![2], vec![1f32, 2.0]).unwrap();
        let b = Tensor::new(vec![1], vec![3f32]).unwrap();
        assert!(Tensor::stack([&a, &b]).is_err());
    }

    #[test]
    fn cast_round_trips_small_integers() {
        let a = Tensor::new(vec![3], vec![1f32, -2.0, 0.5]).unwrap();
        let b: Tensor<f64> = a.cast().unwrap();
        assert_eq!(b.data(), &[1.0, -2.0, 0.5]);
    }
}
