//! Neuron-sensitivity guided selection of test inputs for small neural-network
//! classifiers.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`mutation`] pairs every unlabeled input `x` with a benign mutation `x'`;
//! 2. [`nss`] accumulates per-neuron sensitivity `|N_i(x) - N_i(x')|` over the
//!    pairs, keeps the most sensitive fraction of neurons and ranks every pair by
//!    its summed sensitivity on those neurons;
//! 3. [`baselines`] provides the comparison selectors (random, Gini impurity,
//!    activation and k-multisection coverage, distance-based surprise);
//! 4. [`eval`] measures fault detection, fault-type coverage, overhead and
//!    retraining gains.
//!
//! Numeric code is generic over the scalar type. Network evaluation needs a
//! floating type ([`Real`]); the sensitivity and ranking core only needs an
//! ordered signed field ([`Scalar`]), so it also runs on exact rationals
//! ([`Exact`]).

pub mod baselines;
pub mod error;
pub mod eval;
pub mod io;
pub mod mutation;
pub mod nn;
pub mod nss;
pub mod parallel;
pub mod scalar;
pub mod select;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::{Real, Scalar};
pub use tensor::Tensor;

/// Exact rational scalar for reproducing hand-computed sensitivity tables.
pub type Exact = num_rational::Ratio<i64>;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Weights32 = nn::Weights<f32>;
pub type Weights64 = nn::Weights<f64>;
pub type PairTraces32 = nss::PairTraces<f32>;
pub type ExactPairTraces = nss::PairTraces<Exact>;
