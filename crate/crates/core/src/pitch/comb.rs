//! Pitch decoding and the symmetric three-tap comb filter applied frame by frame.

use ndarray::Array2;
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{reflect_pad, stft, stft_frames, ComplexSpectrogram, StftConfig, Waveform};
use crate::synth::labels::{argmax_rows, PitchBins};

/// Taps at `-tau`, `0`, `+tau`: the interior of a 5-point Hann window, normalized to unit sum.
pub const COMB_WEIGHTS: [f64; 3] = [0.25, 0.5, 0.25];
pub const IDENTITY_WEIGHTS: [f64; 3] = [0.0, 1.0, 0.0];

/// Posterior over N pitch bins plus an unvoiced column, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchPosterior {
    pub data: Array2<f32>,
}

impl PitchPosterior {
    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn argmax_rows(&self) -> Vec<usize> {
        argmax_rows(&self.data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombFilterSpec {
    /// Period in samples; 0 marks an unvoiced frame.
    pub tau: usize,
    pub weights: [f64; 3],
}

impl CombFilterSpec {
    pub fn unvoiced() -> Self {
        Self {
            tau: 0,
            weights: IDENTITY_WEIGHTS,
        }
    }

    pub fn voiced(tau: usize) -> Self {
        Self {
            tau,
            weights: COMB_WEIGHTS,
        }
    }

    pub fn is_voiced(&self) -> bool {
        self.tau > 0
    }

    pub fn f0_hz(&self, sample_rate_hz: u32) -> Option<f64> {
        self.is_voiced()
            .then(|| sample_rate_hz as f64 / self.tau as f64)
    }
}

/// Hard-argmax decoding: unvoiced column → identity filter, otherwise `tau = round(fs / f_bin)`.
pub fn decode_pitch(
    p_hat: &PitchPosterior,
    bins: &PitchBins,
    cfg: &StftConfig,
) -> Vec<CombFilterSpec> {
    decode_bins(&p_hat.argmax_rows(), bins, cfg)
}

pub fn decode_bins(argmax: &[usize], bins: &PitchBins, cfg: &StftConfig) -> Vec<CombFilterSpec> {
    argmax
        .iter()
        .map(|&b| {
            if b >= bins.unvoiced() {
                CombFilterSpec::unvoiced()
            } else {
                let tau = (cfg.sample_rate_hz as f64 / bins.center_hz(b)).round() as usize;
                CombFilterSpec::voiced(tau.max(1))
            }
        })
        .collect()
}

/// Frequency response `sum_i w_i e^{-j omega i tau}` of the taps at `i in {-1, 0, 1}`.
pub fn comb_response(weights: &[f64; 3], tau: usize, omega: f64) -> Complex64 {
    (-1i64..=1)
        .zip(weights)
        .map(|(i, w)| Complex64::from_polar(*w, -omega * (i * tau as i64) as f64))
        .sum()
}

/// Filters each STFT frame's segment before windowing and DFT. Taps reaching outside the
/// padded signal read zeros; unvoiced frames are copied unchanged.
pub fn apply_pitch_filter(
    x: &Waveform,
    specs: &[CombFilterSpec],
    cfg: &StftConfig,
) -> Result<ComplexSpectrogram> {
    let frames = cfg.frame_count(x.len());
    if specs.len() != frames {
        return Err(Error::LengthMismatch(specs.len(), frames));
    }
    if specs.iter().all(|s| !s.is_voiced()) {
        return stft(x, cfg);
    }
    if x.len() < cfg.win_len_samples {
        return Err(Error::TooShort {
            len: x.len(),
            win: cfg.win_len_samples,
        });
    }
    let padded = reflect_pad(&x.samples, cfg.pad());
    let (hop, win) = (cfg.hop_samples, cfg.win_len_samples);
    let at = |p: isize| {
        if p >= 0 && (p as usize) < padded.len() {
            padded[p as usize]
        } else {
            0.0
        }
    };
    Ok(stft_frames(frames, cfg, |t, buf| {
        let spec = specs[t];
        let start = t * hop;
        if !spec.is_voiced() {
            buf.copy_from_slice(&padded[start..start + win]);
            return;
        }
        let tau = spec.tau as isize;
        for (n, b) in buf.iter_mut().enumerate() {
            let p = (start + n) as isize;
            *b = spec.weights[0] * at(p + tau)
                + spec.weights[1] * at(p)
                + spec.weights[2] * at(p - tau);
        }
    }))
}

/// Per-frame decoded f0 dump rows: `(frame_index, f0_hz, voiced)`.
pub fn f0_rows(specs: &[CombFilterSpec], sample_rate_hz: u32) -> Vec<(usize, f64, bool)> {
    specs
        .iter()
        .enumerate()
        .map(|(t, s)| (t, s.f0_hz(sample_rate_hz).unwrap_or(0.0), s.is_voiced()))
        .collect()
}
