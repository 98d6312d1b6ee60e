use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::signal::{irfft, rfft, Waveform, SAMPLE_RATE_HZ};

/// Early reflections kept in the training target: 50 ms at 16 kHz.
pub const EARLY_REFLECTION_SAMPLES: usize = 800;

#[derive(Debug, Clone, PartialEq)]
pub struct RoomImpulseResponse {
    /// Tap 0 is the direct path.
    pub taps: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl RoomImpulseResponse {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidConfig("impulse response has no taps".into()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("impulse response".into()));
        }
        Ok(Self {
            taps,
            sample_rate_hz: SAMPLE_RATE_HZ,
        })
    }

    pub fn identity() -> Self {
        Self {
            taps: vec![1.0],
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }

    /// Exponentially decaying Gaussian tail after a unit direct path.
    ///
    /// The envelope falls by 60 dB after `t60_s`; the tail energy is scaled to
    /// `tail_energy` relative to the direct path.
    pub fn synthetic(t60_s: f64, tail_energy: f64, seed: u64) -> Result<Self> {
        if !(t60_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "T60 must be positive, got {t60_s}"
            )));
        }
        let fs = SAMPLE_RATE_HZ as f64;
        let len = (t60_s * fs).ceil() as usize + 1;
        let decay = 3.0 * std::f64::consts::LN_10 / (t60_s * fs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut taps = vec![0.0; len];
        taps[0] = 1.0;
        // a 1 ms gap separates the direct path from the diffuse tail
        let onset = 16.min(len - 1);
        for (n, tap) in taps.iter_mut().enumerate().skip(onset) {
            let g: f64 = StandardNormal.sample(&mut rng);
            *tap = g * (-decay * n as f64).exp();
        }
        let energy: f64 = taps[1..].iter().map(|t| t * t).sum();
        if energy > 0.0 {
            let scale = (tail_energy / energy).sqrt();
            taps[1..].iter_mut().for_each(|t| *t *= scale);
        }
        Self::new(taps)
    }
}

/// Linear convolution truncated to `out_len` samples, computed with FFTs.
pub fn fft_convolve(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return vec![0.0; out_len];
    }
    let full = a.len() + b.len() - 1;
    let n = full.next_power_of_two();
    let mut pa = a.to_vec();
    pa.resize(n, 0.0);
    let mut pb = b.to_vec();
    pb.resize(n, 0.0);
    let fa = rfft(&pa);
    let fb = rfft(&pb);
    let prod: Vec<_> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = irfft(&prod, n);
    out.resize(out_len.max(n), 0.0);
    out.truncate(out_len);
    if out_len > full {
        out[full..].iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

/// Returns `(s_dry * h, s_dry * h[..800])`, both truncated to the dry length.
pub fn early_reflection_target(s_dry: &Waveform, h: &RoomImpulseResponse) -> (Waveform, Waveform) {
    let len = s_dry.len();
    let early = &h.taps[..h.taps.len().min(EARLY_REFLECTION_SAMPLES)];
    let reverberant = fft_convolve(&s_dry.samples, &h.taps, len);
    let target = fft_convolve(&s_dry.samples, early, len);
    (Waveform::new(reverberant), Waveform::new(target))
}
