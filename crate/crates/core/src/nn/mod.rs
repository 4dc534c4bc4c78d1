//! Sequential networks: layer specs, shape inference and forward evaluation
//! with activation capture.

pub mod forward;
pub mod layer;
pub mod model;
pub mod ops;

pub use forward::{argmax, forward, logits, model_input, predict, probabilities, ActivationTrace};
pub use layer::{infer_shapes, LayerSpec};
pub use model::{LayerId, Param, Sequential, Weights};
