//! Pitch estimation from an intermediate estimate and comb filtering of the noisy input.

pub mod comb;
pub mod estimator;

pub use comb::{
    apply_pitch_filter, comb_response, decode_bins, decode_pitch, CombFilterSpec, PitchPosterior,
    COMB_WEIGHTS,
};
pub use estimator::{PitchEstimator, PITCH_GROUP};
