//! Progressive SE model: phase encoder, encoder, stacked SE blocks and per-stage decoders.

pub mod batch;
pub mod blocks;
pub mod config;
pub mod se;

pub use batch::{log_magnitude_feature, specs_to_tensor, tensor_to_specs};
pub use config::{BlockKind, ModelConfig, PitchEstimatorConfig, PitchInput};
pub use se::{decoder_group, se_block_group, PhaseEncoder, SeModel, SeOutputs};
