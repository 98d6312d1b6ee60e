//! STFT analysis/synthesis, power-law compression and SNR arithmetic.
//!
//! Frames are centered: the waveform is reflect-padded by half a window on
//! both sides, so frame `t` is centered on sample `t * hop`. Synthesis uses
//! the same periodic Hann window and divides by the squared-window envelope,
//! which gives exact reconstruction wherever the envelope is non-zero.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_RATE_HZ: u32 = 16_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    PeriodicHann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate_hz: u32,
    pub win_len_samples: usize,
    pub hop_samples: usize,
    pub dft_len: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: SAMPLE_RATE_HZ,
            win_len_samples: 512,
            hop_samples: 256,
            dft_len: 512,
            window: WindowKind::PeriodicHann,
        }
    }
}

impl StftConfig {
    pub fn n_freqs(&self) -> usize {
        self.dft_len / 2 + 1
    }

    pub fn pad(&self) -> usize {
        self.win_len_samples / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.win_len_samples != self.dft_len {
            return Err(Error::InvalidConfig(
                "window length must equal DFT length".into(),
            ));
        }
        if self.hop_samples * 2 != self.win_len_samples {
            return Err(Error::InvalidConfig(
                "hop must be half the window length".into(),
            ));
        }
        if !self.dft_len.is_multiple_of(2) || self.dft_len == 0 {
            return Err(Error::InvalidConfig(
                "DFT length must be even and positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        1 + len / self.hop_samples
    }

    pub fn window(&self) -> Vec<f64> {
        let n = self.win_len_samples;
        (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// T×F complex STFT matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: Array2<Complex64>,
    pub config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn zeros(frames: usize, config: StftConfig) -> Self {
        Self {
            data: Array2::zeros((frames, config.n_freqs())),
            config,
        }
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn freqs(&self) -> usize {
        self.data.ncols()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.data.mapv(|c| c.norm())
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Power-law compressed spectrum: magnitude `|S|^gamma` with the phase of `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSpectrum {
    pub real_c: Array2<f64>,
    pub imag_c: Array2<f64>,
    pub gamma: f64,
}

struct FftPair {
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

type PlanCache = (RealFftPlanner<f64>, HashMap<usize, Arc<FftPair>>);

thread_local! {
    static PLANS: RefCell<PlanCache> =
        RefCell::new((RealFftPlanner::new(), HashMap::new()));
}

fn plans(n: usize) -> Arc<FftPair> {
    PLANS.with(|p| {
        let (planner, cache) = &mut *p.borrow_mut();
        cache
            .entry(n)
            .or_insert_with(|| {
                Arc::new(FftPair {
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    })
}

/// Forward real DFT of `input` (length n) into n/2+1 bins.
pub(crate) fn rfft(input: &[f64]) -> Vec<Complex64> {
    let pair = plans(input.len());
    let mut buf = input.to_vec();
    let mut out = pair.forward.make_output_vec();
    pair.forward
        .process(&mut buf, &mut out)
        .expect("fft buffer sizes are derived from the plan");
    out
}

/// Inverse real DFT with 1/n normalization; imaginary parts of DC and Nyquist are ignored.
pub(crate) fn irfft(spec: &[Complex64], n: usize) -> Vec<f64> {
    let pair = plans(n);
    let mut buf = spec.to_vec();
    buf[0].im = 0.0;
    let last = buf.len() - 1;
    buf[last].im = 0.0;
    let mut out = pair.inverse.make_output_vec();
    pair.inverse
        .process(&mut buf, &mut out)
        .expect("fft buffer sizes are derived from the plan");
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// Reflect-pad (no edge repeat) by `pad` samples on both sides.
pub(crate) fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let len = x.len() as isize;
    (0..x.len() + 2 * pad)
        .map(|i| {
            let mut idx = i as isize - pad as isize;
            if idx < 0 {
                idx = -idx;
            }
            if idx >= len {
                idx = 2 * (len - 1) - idx;
            }
            x[idx.clamp(0, len - 1) as usize]
        })
        .collect()
}

fn check_rate(x: &Waveform, cfg: &StftConfig) -> Result<()> {
    if x.sample_rate_hz != cfg.sample_rate_hz {
        return Err(Error::ConfigMismatch(format!(
            "waveform is {} Hz, config expects {} Hz",
            x.sample_rate_hz, cfg.sample_rate_hz
        )));
    }
    Ok(())
}

/// Windowed DFT of pre-padded frames; `frame_source(t)` yields the `win_len` samples of frame t.
pub(crate) fn stft_frames<F>(
    frames: usize,
    cfg: &StftConfig,
    mut frame_source: F,
) -> ComplexSpectrogram
where
    F: FnMut(usize, &mut [f64]),
{
    let window = cfg.window();
    let mut out = ComplexSpectrogram::zeros(frames, *cfg);
    let mut buf = vec![0.0; cfg.win_len_samples];
    for t in 0..frames {
        frame_source(t, &mut buf);
        for (b, w) in buf.iter_mut().zip(&window) {
            *b *= w;
        }
        let spec = rfft(&buf);
        for (dst, src) in out.data.row_mut(t).iter_mut().zip(spec) {
            *dst = src;
        }
    }
    out
}

pub fn stft(x: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    check_rate(x, cfg)?;
    if x.len() < cfg.win_len_samples {
        return Err(Error::TooShort {
            len: x.len(),
            win: cfg.win_len_samples,
        });
    }
    let padded = reflect_pad(&x.samples, cfg.pad());
    let frames = cfg.frame_count(x.len());
    let (hop, win) = (cfg.hop_samples, cfg.win_len_samples);
    Ok(stft_frames(frames, cfg, |t, buf| {
        buf.copy_from_slice(&padded[t * hop..t * hop + win])
    }))
}

fn window_envelope(frames: usize, cfg: &StftConfig) -> Vec<f64> {
    let window = cfg.window();
    let total = (frames - 1) * cfg.hop_samples + cfg.win_len_samples;
    let mut env = vec![0.0; total];
    for t in 0..frames {
        let start = t * cfg.hop_samples;
        for (e, w) in env[start..start + window.len()].iter_mut().zip(&window) {
            *e += w * w;
        }
    }
    env
}

/// Inverse STFT. `length` defaults to `(T - 1) * hop`, the length that produced T frames.
pub fn istft(s: &ComplexSpectrogram, cfg: &StftConfig, length: Option<usize>) -> Result<Waveform> {
    cfg.validate()?;
    if s.config != *cfg {
        return Err(Error::ConfigMismatch(
            "spectrogram was produced with a different STFT config".into(),
        ));
    }
    if s.freqs() != cfg.n_freqs() {
        return Err(Error::ShapeMismatch {
            expected: vec![s.frames(), cfg.n_freqs()],
            got: vec![s.frames(), s.freqs()],
        });
    }
    let frames = s.frames();
    if frames == 0 {
        return Ok(Waveform::zeros(length.unwrap_or(0)));
    }
    let window = cfg.window();
    let env = window_envelope(frames, cfg);
    let mut acc = vec![0.0; env.len()];
    let mut row: Vec<Complex64> = Vec::with_capacity(cfg.n_freqs());
    for t in 0..frames {
        row.clear();
        row.extend(s.data.row(t).iter().copied());
        let frame = irfft(&row, cfg.dft_len);
        let start = t * cfg.hop_samples;
        for ((a, f), w) in acc[start..start + window.len()]
            .iter_mut()
            .zip(&frame)
            .zip(&window)
        {
            *a += f * w;
        }
    }
    let pad = cfg.pad();
    let len = length.unwrap_or((frames - 1) * cfg.hop_samples);
    let samples = (0..len)
        .map(|i| {
            let j = i + pad;
            if j < acc.len() && env[j] > 1e-11 {
                acc[j] / env[j]
            } else {
                0.0
            }
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate_hz: cfg.sample_rate_hz,
    })
}

/// Vector-Jacobian product of [`istft`]: maps dL/dy (time domain) to dL/dRe + i·dL/dIm
/// for every bin of a T-frame spectrogram.
pub(crate) fn istft_backward(grad: &[f64], frames: usize, cfg: &StftConfig) -> Array2<Complex64> {
    let window = cfg.window();
    let env = window_envelope(frames, cfg);
    let pad = cfg.pad();
    let mut g = vec![0.0; env.len()];
    for (i, v) in grad.iter().enumerate() {
        let j = i + pad;
        if j < g.len() && env[j] > 1e-11 {
            g[j] = v / env[j];
        }
    }
    let n = cfg.dft_len;
    let nf = cfg.n_freqs();
    let mut out = Array2::zeros((frames, nf));
    let mut u = vec![0.0; n];
    for t in 0..frames {
        let start = t * cfg.hop_samples;
        for ((dst, gv), w) in u.iter_mut().zip(&g[start..start + n]).zip(&window) {
            *dst = gv * w;
        }
        let spec = rfft(&u);
        for (k, (dst, v)) in out.row_mut(t).iter_mut().zip(spec).enumerate() {
            let edge = k == 0 || k == nf - 1;
            let c = if edge { 1.0 } else { 2.0 } / n as f64;
            *dst = Complex64::new(c * v.re, if edge { 0.0 } else { c * v.im });
        }
    }
    out
}

pub fn compress(s: &ComplexSpectrogram, gamma: f64) -> CompressedSpectrum {
    let mut real_c = Array2::zeros(s.data.raw_dim());
    let mut imag_c = Array2::zeros(s.data.raw_dim());
    for ((c, r), i) in s.data.iter().zip(real_c.iter_mut()).zip(imag_c.iter_mut()) {
        let m = c.norm();
        if m > 0.0 {
            let scale = m.powf(gamma - 1.0);
            *r = c.re * scale;
            *i = c.im * scale;
        }
    }
    CompressedSpectrum {
        real_c,
        imag_c,
        gamma,
    }
}

pub fn uncompress(c: &CompressedSpectrum, config: StftConfig) -> ComplexSpectrogram {
    let mut data = Array2::zeros(c.real_c.raw_dim());
    for ((d, r), i) in data.iter_mut().zip(c.real_c.iter()).zip(c.imag_c.iter()) {
        let m = r.hypot(*i);
        if m != 0.0 {
            let scale = m.powf(1.0 / c.gamma - 1.0);
            *d = Complex64::new(r * scale, i * scale);
        }
    }
    ComplexSpectrogram { data, config }
}

/// SNR of `x` against the reference `s`, using full-utterance mean power.
pub fn snr_db(x: &Waveform, s: &Waveform) -> Result<f64> {
    if x.len() != s.len() {
        return Err(Error::LengthMismatch(x.len(), s.len()));
    }
    let ps = s.power();
    if ps == 0.0 {
        return Err(Error::Silent("reference"));
    }
    let pn = x
        .samples
        .iter()
        .zip(&s.samples)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    if pn == 0.0 {
        return Err(Error::InfiniteRatio);
    }
    Ok(10.0 * (ps / pn).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Direct O(N^2) DFT used as an oracle.
    fn brute_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .fold(Complex64::new(0.0, 0.0), |acc, (i, v)| {
                        let ang = -2.0 * PI * (k * i) as f64 / n as f64;
                        acc + Complex64::new(v * ang.cos(), v * ang.sin())
                    })
            })
            .collect()
    }

    #[test]
    fn ten_second_clip_frame_count() {
        let cfg = StftConfig::default();
        let s = stft(&Waveform::zeros(160_000), &cfg).unwrap();
        assert!((s.frames() as i64 - 625).abs() <= 1, "{}", s.frames());
        assert_eq!(s.freqs(), 257);
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = StftConfig::default();
        let s = stft(&Waveform::zeros(4096), &cfg).unwrap();
        assert!(s.data.iter().all(|c| c.norm() == 0.0));
        let y = istft(&s, &cfg, Some(4096)).unwrap();
        assert!(y.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sine_peaks_at_bin_32() {
        let cfg = StftConfig::default();
        let x = Waveform::new(
            (0..16000)
                .map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin())
                .collect(),
        );
        let s = stft(&x, &cfg).unwrap();
        let row = s.data.row(10);
        let argmax = (0..257)
            .max_by(|a, b| row[*a].norm().partial_cmp(&row[*b].norm()).unwrap())
            .unwrap();
        assert_eq!(argmax, 32);
        // cross-check one frame against a direct DFT
        let padded = reflect_pad(&x.samples, 256);
        let w = cfg.window();
        let frame: Vec<f64> = (0..512).map(|n| padded[10 * 256 + n] * w[n]).collect();
        let oracle = brute_dft(&frame);
        for (a, b) in row.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn too_short_is_error() {
        let cfg = StftConfig::default();
        assert!(matches!(
            stft(&Waveform::zeros(100), &cfg),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn round_trip_two_seconds() {
        let cfg = StftConfig::default();
        let x = random_wave(32_000, 7);
        let y = istft(&stft(&x, &cfg).unwrap(), &cfg, Some(x.len())).unwrap();
        let err: f64 = x
            .samples
            .iter()
            .zip(&y.samples)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let norm: f64 = x.samples.iter().map(|a| a * a).sum();
        assert!((err / norm).sqrt() < 1e-6);
        let maxabs = x
            .samples
            .iter()
            .zip(&y.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(maxabs < 1e-6);
    }

    #[test]
    fn istft_config_mismatch() {
        let cfg = StftConfig::default();
        let s = stft(&random_wave(2048, 1), &cfg).unwrap();
        let other = StftConfig {
            hop_samples: 128,
            win_len_samples: 256,
            dft_len: 256,
            ..cfg
        };
        assert!(istft(&s, &other, None).is_err());
    }

    #[test]
    fn istft_backward_is_adjoint() {
        // <istft(S), g> == <S, istft_backward(g)> with the real inner product on (re, im).
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames = 9;
        let mut s = ComplexSpectrogram::zeros(frames, cfg);
        for c in s.data.iter_mut() {
            *c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let len = (frames - 1) * cfg.hop_samples;
        let g: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = istft(&s, &cfg, Some(len)).unwrap();
        let lhs: f64 = y.samples.iter().zip(&g).map(|(a, b)| a * b).sum();
        let adj = istft_backward(&g, frames, &cfg);
        let mut rhs = 0.0;
        for (k, (a, b)) in s.data.iter().zip(adj.iter()).enumerate() {
            let bin = k % cfg.n_freqs();
            let im = if bin == 0 || bin == cfg.n_freqs() - 1 {
                0.0
            } else {
                a.im * b.im
            };
            rhs += a.re * b.re + im;
        }
        assert!(
            (lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn compress_examples() {
        let cfg = StftConfig::default();
        let mut s = ComplexSpectrogram::zeros(1, cfg);
        s.data[[0, 0]] = Complex64::new(8.0, 0.0);
        s.data[[0, 1]] = Complex64::new(0.0, 0.0);
        s.data[[0, 2]] = Complex64::new(-3.0, 4.0);
        let c = compress(&s, 1.0 / 3.0);
        assert!((c.real_c[[0, 0]] - 2.0).abs() < 1e-12);
        assert_eq!(c.imag_c[[0, 0]], 0.0);
        assert_eq!((c.real_c[[0, 1]], c.imag_c[[0, 1]]), (0.0, 0.0));
        let mag = c.real_c[[0, 2]].hypot(c.imag_c[[0, 2]]);
        assert!((mag - 5f64.powf(1.0 / 3.0)).abs() < 1e-12);
        let ident = compress(&s, 1.0);
        assert!(
            (ident.real_c[[0, 2]] + 3.0).abs() < 1e-12
                && (ident.imag_c[[0, 2]] - 4.0).abs() < 1e-12
        );
        let back = uncompress(&c, cfg);
        assert!((back.data[[0, 2]] - s.data[[0, 2]]).norm() < 1e-12);
    }

    #[test]
    fn snr_examples() {
        let s = Waveform::new(vec![1.0, -1.0, 1.0, -1.0]);
        let x0 = Waveform::new(vec![2.0, -2.0, 2.0, -2.0]);
        assert!(snr_db(&x0, &s).unwrap().abs() < 1e-12);
        let r = (0.1f64).sqrt();
        let x10 = Waveform::new(s.samples.iter().map(|v| v + r * v).collect());
        assert!((snr_db(&x10, &s).unwrap() - 10.0).abs() < 1e-9);
        assert!(matches!(snr_db(&s, &s), Err(Error::InfiniteRatio)));
        assert!(matches!(
            snr_db(&s, &Waveform::zeros(4)),
            Err(Error::Silent(_))
        ));
    }

    #[test]
    fn snr_tone_plus_half_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 16000;
        let s: Vec<f64> = (0..n)
            .map(|i| (2.0f64).sqrt() * (2.0 * PI * 220.0 * i as f64 / 16000.0).sin())
            .collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0f64)).collect();
        let nrms = mean_power(&noise).sqrt();
        let x: Vec<f64> = s
            .iter()
            .zip(&noise)
            .map(|(a, b)| a + 0.5 * b / nrms)
            .collect();
        let snr = snr_db(&Waveform::new(x), &Waveform::new(s)).unwrap();
        assert!((snr - 10.0 * 4f64.log10()).abs() < 0.01, "{snr}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn stft_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
                let cfg = StftConfig::default();
                let x = random_wave(2048, seed);
                let y = random_wave(2048, seed + 1);
                let mix = Waveform::new(x.samples.iter().zip(&y.samples).map(|(p, q)| a * p + b * q).collect());
                let lhs = stft(&mix, &cfg).unwrap();
                let sx = stft(&x, &cfg).unwrap();
                let sy = stft(&y, &cfg).unwrap();
                for ((l, p), q) in lhs.data.iter().zip(sx.data.iter()).zip(sy.data.iter()) {
                    prop_assert!((l - (p * a + q * b)).norm() < 1e-6);
                }
            }

            #[test]
            fn compress_keeps_phase(re in -50.0f64..50.0, im in -50.0f64..50.0, gamma in 0.05f64..1.0) {
                let cfg = StftConfig::default();
                let mut s = ComplexSpectrogram::zeros(1, cfg);
                s.data[[0, 5]] = Complex64::new(re, im);
                let c = compress(&s, gamma);
                let (cr, ci) = (c.real_c[[0, 5]], c.imag_c[[0, 5]]);
                prop_assert!((cr * cr + ci * ci - s.data[[0, 5]].norm().powf(2.0 * gamma)).abs() < 1e-6);
                if s.data[[0, 5]].norm() > 1e-12 {
                    prop_assert!((ci.atan2(cr) - im.atan2(re)).abs() < 1e-9);
                }
            }

            #[test]
            fn snr_scale_invariant(seed in 0u64..1000, c in prop_oneof![-10.0f64..-0.01, 0.01f64..10.0]) {
                let s = random_wave(512, seed);
                let n = random_wave(512, seed + 7);
                let x = Waveform::new(s.samples.iter().zip(&n.samples).map(|(a, b)| a + 0.3 * b).collect());
                let base = snr_db(&x, &s).unwrap();
                let scaled = snr_db(&x.scaled(c), &s.scaled(c)).unwrap();
                prop_assert!((base - scaled).abs() < 1e-9);
            }
        }
    }
}
