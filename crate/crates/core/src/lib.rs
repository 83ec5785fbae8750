//! Coverage-guided fuzzing for small image classifiers.
//!
//! The crate bundles a minimal inference engine that records per-neuron
//! activations ([`model`]), six neuron coverage criteria ([`coverage`]),
//! semantics-preserving image mutation ([`mutation`]), batch and power
//! scheduling ([`scheduler`]) and the fuzz loop that ties them together
//! ([`fuzz`]).

pub mod corpus;
pub mod coverage;
pub mod error;
pub mod fuzz;
pub mod image;
pub mod model;
pub mod mutation;
pub mod rng;
pub mod scheduler;
pub mod tensor;

pub use coverage::{CoverageState, CriterionConfig, CriterionKind, Item, NeuronProfile};
pub use error::{Error, Result};
pub use fuzz::{FailedTest, FuzzConfig, FuzzOutcome, FuzzReport};
pub use image::Image;
pub use model::{load_model, quantize_model, ActivationTrace, Layer, Model};
pub use mutation::{MutationConfig, Seed, Transform};
pub use scheduler::{Batch, PoolEntry, ScheduleConfig};
pub use tensor::Tensor;
