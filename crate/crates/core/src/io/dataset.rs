use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Images `[n, c, h, w]` with pixels in `[0, 1]` and one class label each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    images: Tensor<f32>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::InvalidShape(format!("dataset images must be [n, c, h, w], got {:?}", images.shape())));
        }
        if images.batch() != labels.len() {
            return Err(Error::Idx(format!("{} images but {} labels", images.batch(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidParameter(format!("label {bad} is not below class count {class_count}")));
        }
        if images.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self { images, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Shape of a single image, `[c, h, w]`.
    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn image(&self, i: usize) -> Tensor<f32> {
        self.images.item(i)
    }

    /// Relabels the class count, e.g. when a split misses some classes.
    pub fn with_class_count(self, class_count: usize) -> Result<Self> {
        Self::new(self.images, self.labels, class_count)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("dataset subset"));
        }
        let w = self.images.row_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.images.row(i));
            labels.push(self.labels[i]);
        }
        let mut shape = self.images.shape().to_vec();
        shape[0] = indices.len();
        Self::new(Tensor::new(shape, data)?, labels, self.class_count)
    }

    /// First `n` items.
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Appends further labeled images of the same shape.
    pub fn concat(&self, images: &[Tensor<f32>], labels: &[usize]) -> Result<Self> {
        let mut data = self.images.data().to_vec();
        for img in images {
            if img.shape() != self.image_shape() {
                return Err(Error::InvalidShape(format!("image {:?} vs {:?}", img.shape(), self.image_shape())));
            }
            data.extend_from_slice(img.data());
        }
        let mut shape = self.images.shape().to_vec();
        shape[0] += images.len();
        let mut all = self.labels.clone();
        all.extend_from_slice(labels);
        Self::new(Tensor::new(shape, data)?, all, self.class_count)
    }
}
