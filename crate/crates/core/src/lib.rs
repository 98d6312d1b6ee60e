//! SNR-progressive speech enhancement with pitch-conditioned harmonic compensation.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod app;
pub mod compensation;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod nn;
pub mod pitch;
pub mod signal;
pub mod synth;
pub mod system;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
