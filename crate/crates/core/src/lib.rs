//! Scenario-conditioned wireless channel generation and evaluation.
//!
//! The crate simulates labeled MIMO-OFDM channel tensors with a parametric
//! cluster model, trains a conditional diffusion model on them, distills it
//! into a one-step consistency model, uses generated channels to augment a
//! superimposed-pilot neural receiver, and quantifies both generation
//! fidelity and link performance.

pub mod channel;
pub mod consistency;
pub mod diffusion;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod sip;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
