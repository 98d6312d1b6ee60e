//! Objective metrics, SNR-bucketed reports and spectrogram images.

pub mod metrics;
pub mod plot;
pub mod report;
pub mod stoi;

pub use metrics::{accuracy_from_bins, pitch_accuracy, sdr};
pub use plot::render_spectrogram;
pub use report::{format_report, MetricPlugin, MetricReport, SnrBucket, UtteranceMetrics};
pub use stoi::stoi;
