//! Behavior and driver-state pattern mining for multimodal driving telemetry.
//!
//! The pipeline segments kinematic streams with Bayesian change-point
//! detection, turns continuous channels into discrete words with a Gaussian
//! mixture codebook, infers behavior and state patterns per segment with
//! latent Dirichlet allocation, and relates the two with nonparametric tests.

pub mod bcp;
pub mod gaze;
pub mod ingest;
pub mod numeric;
pub mod par;
pub mod pipeline;
pub mod quantize;
pub mod stats;
pub mod synth;
pub mod topics;

pub use par::Exec;
