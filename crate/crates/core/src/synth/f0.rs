//! Frame-synchronous f0 extraction with the YIN difference function.
//!
//! Each STFT frame `t` (centered on sample `t * hop`) gets one estimate. The
//! cumulative-mean-normalized difference d'(τ) is searched for the first dip
//! below the voicing threshold, refined to its local minimum and then
//! parabolically interpolated. No dip means unvoiced.

use serde::{Deserialize, Serialize};

use crate::signal::{StftConfig, Waveform};

pub const F0_MIN_HZ: f64 = 62.5;
pub const F0_MAX_HZ: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YinConfig {
    pub threshold: f64,
    pub integration_len: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Frames whose mean power falls below this are unvoiced without analysis.
    pub silence_power: f64,
}

impl Default for YinConfig {
    fn default() -> Self {
        Self {
            threshold: 0.2,
            integration_len: 512,
            f_min: F0_MIN_HZ,
            f_max: F0_MAX_HZ,
            silence_power: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    /// 0 for unvoiced frames.
    pub f0_hz: Vec<f64>,
    pub voicing: Vec<bool>,
    pub hop: usize,
}

impl PitchTrack {
    pub fn frames(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn unvoiced(frames: usize, hop: usize) -> Self {
        Self {
            f0_hz: vec![0.0; frames],
            voicing: vec![false; frames],
            hop,
        }
    }
}

pub fn extract_f0(s: &Waveform, cfg: &StftConfig) -> PitchTrack {
    extract_f0_with(s, cfg, &YinConfig::default())
}

pub fn extract_f0_with(s: &Waveform, cfg: &StftConfig, yin: &YinConfig) -> PitchTrack {
    let fs = s.sample_rate_hz as f64;
    let frames = cfg.frame_count(s.len());
    let tau_min = ((fs / yin.f_max).floor() as usize).saturating_sub(2).max(2);
    let tau_max = (fs / yin.f_min).ceil() as usize + 2;
    let w = yin.integration_len;
    let seg_len = w + tau_max;
    let mut seg = vec![0.0; seg_len];
    let mut diff = vec![0.0; tau_max + 2];
    let mut cmnd = vec![0.0; tau_max + 2];
    let mut track = PitchTrack::unvoiced(frames, cfg.hop_samples);

    for t in 0..frames {
        let start = (t * cfg.hop_samples) as isize - (seg_len / 2) as isize;
        for (j, v) in seg.iter_mut().enumerate() {
            let idx = start + j as isize;
            *v = if idx >= 0 && (idx as usize) < s.len() {
                s.samples[idx as usize]
            } else {
                0.0
            };
        }
        let power = seg[..w].iter().map(|v| v * v).sum::<f64>() / w as f64;
        if power < yin.silence_power {
            continue;
        }
        for tau in 1..=tau_max + 1 {
            let mut acc = 0.0;
            for j in 0..w.min(seg_len - tau) {
                let d = seg[j] - seg[j + tau];
                acc += d * d;
            }
            diff[tau] = acc;
        }
        cmnd[0] = 1.0;
        let mut running = 0.0;
        for tau in 1..=tau_max + 1 {
            running += diff[tau];
            cmnd[tau] = if running > 0.0 {
                diff[tau] * tau as f64 / running
            } else {
                1.0
            };
        }
        let Some(mut tau) = (tau_min..=tau_max).find(|&tau| cmnd[tau] < yin.threshold) else {
            continue;
        };
        while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
            tau += 1;
        }
        let (a, b, c) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-12 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let f0 = (fs / (tau as f64 + shift)).clamp(yin.f_min, yin.f_max);
        track.f0_hz[t] = f0;
        track.voicing[t] = true;
    }
    track
}
