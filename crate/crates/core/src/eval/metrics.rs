//! Plain SDR and frame-level pitch accuracy.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::signal::Waveform;
use crate::synth::labels::argmax_rows;

/// `10 log10(||s||^2 / ||s - s_hat||^2)`; an exact match returns `f64::INFINITY`.
pub fn sdr(s_hat: &Waveform, s: &Waveform) -> Result<f64> {
    if s_hat.len() != s.len() {
        return Err(Error::LengthMismatch(s_hat.len(), s.len()));
    }
    let ps: f64 = s.samples.iter().map(|v| v * v).sum();
    if ps == 0.0 {
        return Err(Error::Silent("reference"));
    }
    let pe: f64 = s_hat
        .samples
        .iter()
        .zip(&s.samples)
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    if pe == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (ps / pe).log10())
}

/// Percentage of frames whose argmax bins agree within one bin. The last column is the unvoiced
/// class: two unvoiced rows agree, an unvoiced and a voiced row never do.
pub fn pitch_accuracy(p_hat: &Array2<f32>, p: &Array2<f32>) -> Result<f64> {
    if p_hat.dim() != p.dim() {
        return Err(Error::ShapeMismatch {
            expected: p.shape().to_vec(),
            got: p_hat.shape().to_vec(),
        });
    }
    Ok(accuracy_from_bins(
        &argmax_rows(p_hat),
        &argmax_rows(p),
        p.ncols() - 1,
    ))
}

/// Same measure on decoded bin indices, `unvoiced` being the unvoiced index.
pub fn accuracy_from_bins(est: &[usize], truth: &[usize], unvoiced: usize) -> f64 {
    if truth.is_empty() {
        return 100.0;
    }
    let hits = est
        .iter()
        .zip(truth)
        .filter(|&(&a, &b)| match (a >= unvoiced, b >= unvoiced) {
            (true, true) => true,
            (false, false) => a.abs_diff(b) <= 1,
            _ => false,
        })
        .count();
    100.0 * hits as f64 / truth.len() as f64
}
