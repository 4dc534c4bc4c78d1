//! Stochastic-gradient training for the sequential models of [`crate::nn`].

pub mod backprop;
pub mod init;
pub mod sgd;

pub use backprop::{loss, loss_and_grads};
pub use init::init_weights;
pub use sgd::{accuracy, history_csv, train, train_with, EpochStats, TrainConfig, TrainOutcome};
