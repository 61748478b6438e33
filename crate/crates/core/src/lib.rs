//! Aleatoric mapping agents.
//!
//! Curiosity-driven exploration where the intrinsic reward is the forward
//! prediction error minus a learned, per-dimension aleatoric variance. The
//! crate contains the numeric core ([`nn`]), the forward predictors
//! ([`predict`]), reward shaping ([`reward`]), the three environments
//! ([`env`]), the learners ([`agent`]) and the experiment drivers
//! ([`experiment`]).

pub mod agent;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod predict;
pub mod reward;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::{RngStream, Stream};
pub use tensor::Tensor;
