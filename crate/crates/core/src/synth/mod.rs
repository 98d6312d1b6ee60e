//! Noisy/clean pair synthesis, SNR-progressive targets and pitch labels.

pub mod dataset;
pub mod f0;
pub mod labels;
pub mod ladder;
pub mod mixing;
pub mod rir;
pub mod toy;

pub use f0::{extract_f0, PitchTrack};
pub use labels::{f0_to_label_matrix, PitchBins, PitchLabelMatrix};
pub use ladder::{make_progressive_targets, ProgressiveTargetSet};
pub use mixing::mix_at_snr;
pub use rir::{early_reflection_target, RoomImpulseResponse};
