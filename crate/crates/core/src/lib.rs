//! Continual learning for ReLU networks that keeps interval-verified
//! properties intact across retraining rounds.
//!
//! The pieces, bottom up:
//!
//! * [`nn`]: dense ReLU networks, backprop, growth.
//! * [`interval`]: interval propagation, verification and certificates.
//! * [`augment`]: samples drawn from certified input boxes.
//! * [`trainer`]: the composite objective and one retraining round.
//! * [`clip`]: bias clipping, interpolants and relaxation.
//! * [`scenario`]: multi-round experiments driven by TOML files.

pub mod augment;
pub mod clip;
pub mod data;
pub mod error;
pub mod interval;
pub mod nn;
pub mod persist;
pub mod scenario;
pub mod trainer;

pub use error::{Error, Result};
pub use interval::{validate_certificate, verify, Certificate, Interval, LayerBox, PostCondition, Property};
pub use nn::Network;
pub use trainer::{ccl_retrain, train_sgd, Mode, TrainConfig};

// The guide's code blocks run as doctests through these modules.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/clipping.md")]
    mod clipping {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
}
