//! Short-time objective intelligibility: 10 kHz resampling, silent-frame removal, 1/3-octave
//! band envelopes and clipped 384 ms segment correlations averaged over bands and segments.

use realfft::RealFftPlanner;

use crate::error::{Error, Result};
use crate::signal::Waveform;

const FS: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = 128;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let (mut sum, mut term, q) = (1.0, 1.0, x * x / 4.0);
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

/// Kaiser-windowed sinc anti-aliasing filter (60 dB rejection, 10% roll-off), normalized to unit
/// sum and scaled by `up`.
fn resample_filter(up: usize, down: usize) -> Vec<f64> {
    let stop = 1.0 / (2 * up.max(down)) as f64;
    let rejection_db = 60.0;
    let half = ((rejection_db - 8.0) / (28.714 * stop / 10.0)).ceil() as i64;
    let beta = 0.1102 * (rejection_db - 8.7);
    let len = (2 * half + 1) as usize;
    let i0b = bessel_i0(beta);
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 - half as f64;
            let r = 2.0 * i as f64 / (len - 1) as f64 - 1.0;
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
            w * 2.0 * up as f64 * stop * sinc(2.0 * stop * t)
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v *= up as f64 / sum);
    h
}

/// Polyphase rational resampling by `up / down` with the filter centered on each output sample;
/// the output has `ceil(len * up / down)` samples.
pub fn resample(x: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    let g = gcd(from_hz as u64, to_hz as u64);
    let (up, down) = ((to_hz as u64 / g) as usize, (from_hz as u64 / g) as usize);
    if up == down {
        return x.to_vec();
    }
    let h = resample_filter(up, down);
    let half = (h.len() - 1) / 2;
    let n_out = (x.len() * up).div_ceil(down);
    (0..n_out)
        .map(|m| {
            // Upsampled position m*down; input n contributes through tap m*down + half - n*up.
            let centre = m * down + half;
            let n_lo = (centre + 1).saturating_sub(h.len()).div_ceil(up);
            let n_hi = (centre / up).min(x.len().saturating_sub(1));
            (n_lo..=n_hi)
                .filter(|&n| n < x.len())
                .map(|n| x[n] * h[centre - n * up])
                .sum()
        })
        .collect()
}

/// Hann window without its zero end points (`FRAME + 2` points, trimmed).
fn window() -> Vec<f64> {
    (1..=FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (FRAME + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

/// Drops frames of both signals where the reference energy is more than 40 dB below its
/// loudest frame, then overlap-adds the windowed survivors.
fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let frames: Vec<(Vec<f64>, Vec<f64>)> = frame_starts(x.len())
        .map(|i| {
            (
                w.iter().zip(&x[i..i + FRAME]).map(|(a, b)| a * b).collect(),
                w.iter().zip(&y[i..i + FRAME]).map(|(a, b)| a * b).collect(),
            )
        })
        .collect();
    let energy: Vec<f64> = frames
        .iter()
        .map(|(fx, _)| 20.0 * (fx.iter().map(|v| v * v).sum::<f64>().sqrt() + EPS).log10())
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<&(Vec<f64>, Vec<f64>)> = frames
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(f, _)| f)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let len = (kept.len() - 1) * HOP + FRAME;
    let (mut xs, mut ys) = (vec![0.0; len], vec![0.0; len]);
    for (j, (fx, fy)) in kept.iter().enumerate() {
        for n in 0..FRAME {
            xs[j * HOP + n] += fx[n];
            ys[j * HOP + n] += fy[n];
        }
    }
    (xs, ys)
}

/// 1/3-octave band edges as FFT-bin ranges `[lo, hi)`.
fn band_ranges() -> Vec<(usize, usize)> {
    let freqs: Vec<f64> = (0..=NFFT / 2)
        .map(|k| k as f64 * FS as f64 / NFFT as f64)
        .collect();
    let nearest = |f: f64| {
        let mut best = 0;
        for (k, &v) in freqs.iter().enumerate() {
            if (v - f).powi(2) < (freqs[best] - f).powi(2) {
                best = k;
            }
        }
        best
    };
    (0..BANDS)
        .map(|k| {
            let k = k as f64;
            (
                nearest(MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0)),
                nearest(MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0)),
            )
        })
        .collect()
}

/// Band envelopes `[band][frame]` of the windowed 512-point spectra.
fn band_envelopes(x: &[f64], w: &[f64], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(NFFT);
    let mut buf = fft.make_input_vec();
    let mut spec = fft.make_output_vec();
    let mut out = vec![Vec::new(); bands.len()];
    for i in frame_starts(x.len()) {
        buf.fill(0.0);
        for n in 0..FRAME {
            buf[n] = w[n] * x[i + n];
        }
        fft.process(&mut buf, &mut spec).expect("fft buffer sizes");
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            out[b].push(
                spec[lo..hi]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum::<f64>()
                    .sqrt(),
            );
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Intelligibility of `s_hat` against the clean reference `s`, in `[-1, 1]`.
pub fn stoi(s_hat: &Waveform, s: &Waveform) -> Result<f64> {
    if s_hat.len() != s.len() {
        return Err(Error::LengthMismatch(s_hat.len(), s.len()));
    }
    let x = resample(&s.samples, s.sample_rate_hz, FS);
    let y = resample(&s_hat.samples, s_hat.sample_rate_hz, FS);
    let w = window();
    let (x, y) = remove_silent_frames(&x, &y, &w);
    let bands = band_ranges();
    let xe = band_envelopes(&x, &w, &bands);
    let ye = band_envelopes(&y, &w, &bands);
    let frames = xe[0].len();
    if frames < SEGMENT {
        return Err(Error::TooShort {
            len: frames * HOP,
            win: SEGMENT * HOP,
        });
    }
    let clip = 1.0 + 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let segments = frames - SEGMENT + 1;
    for m in SEGMENT..=frames {
        for (xb, yb) in xe.iter().zip(&ye) {
            let xs = &xb[m - SEGMENT..m];
            let ys = &yb[m - SEGMENT..m];
            let g = norm(xs) / (norm(ys) + EPS);
            let mut yp: Vec<f64> = ys
                .iter()
                .zip(xs)
                .map(|(a, b)| (a * g).min(b * clip))
                .collect();
            let mut xc = xs.to_vec();
            for v in [&mut yp, &mut xc] {
                let mean = v.iter().sum::<f64>() / SEGMENT as f64;
                v.iter_mut().for_each(|a| *a -= mean);
                let n = norm(v) + EPS;
                v.iter_mut().for_each(|a| *a /= n);
            }
            total += yp.iter().zip(&xc).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(total / (segments * BANDS) as f64)
}
