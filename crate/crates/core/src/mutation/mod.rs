//! Benign, label-preserving image mutations and candidate-pair generation.

pub mod candidates;
pub mod spec;
pub mod transform;

pub use candidates::{generate_candidates, generate_with_spec, CandidateLog, CandidatePair, CandidateSet, LogEntry};
pub use spec::{sample_spec, MutationKind, MutationSpec};
pub use transform::mutate;
