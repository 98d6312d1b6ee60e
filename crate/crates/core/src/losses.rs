//! Training objectives with analytic gradients, evaluated in f64.
//!
//! Spectra are handled as interleaved `[re, im]` slices; the compressed domain is
//! `c = z (|z|^2 + eps)^((gamma - 1) / 2)`.

use ndarray::Array2;
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::graph::{Backward, BackwardCtx};
use crate::nn::{Graph, Tensor, Var};
use crate::signal::{istft, istft_backward, ComplexSpectrogram, StftConfig, Waveform};
use crate::synth::ProgressiveTargetSet;

/// Guard inside power-law compression.
pub const COMPRESS_EPS: f64 = 1e-12;
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub eps_log: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            beta: 0.3,
            lambda: 1.0,
            gamma: 1.0 / 3.0,
            eps_log: 1e-8,
        }
    }
}

fn safe_mag(re: f64, im: f64) -> f64 {
    (re * re + im * im + COMPRESS_EPS).sqrt()
}

/// ε-safe power-law compression of interleaved RI values.
pub fn compress_ri(raw: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; raw.len()];
    for (o, z) in out.chunks_exact_mut(2).zip(raw.chunks_exact(2)) {
        let k = (z[0] * z[0] + z[1] * z[1] + COMPRESS_EPS).powf(0.5 * (gamma - 1.0));
        o[0] = z[0] * k;
        o[1] = z[1] * k;
    }
    out
}

/// Inverse of the compression up to the guard: `z = c |c|^(1/gamma - 1)`.
pub fn uncompress_ri(c: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; c.len()];
    for (o, z) in out.chunks_exact_mut(2).zip(c.chunks_exact(2)) {
        let k = (z[0] * z[0] + z[1] * z[1] + COMPRESS_EPS).powf(0.5 * (1.0 / gamma - 1.0));
        o[0] = z[0] * k;
        o[1] = z[1] * k;
    }
    out
}

/// Vector-Jacobian product of [`uncompress_ri`] at `c`.
fn uncompress_ri_vjp(c: &[f64], grad_raw: &[f64], gamma: f64) -> Vec<f64> {
    let a1 = 1.0 / gamma - 1.0;
    let mut out = vec![0.0; c.len()];
    for ((o, z), g) in out
        .chunks_exact_mut(2)
        .zip(c.chunks_exact(2))
        .zip(grad_raw.chunks_exact(2))
    {
        let (re, im) = (z[0], z[1]);
        let r2 = re * re + im * im + COMPRESS_EPS;
        let s = r2.powf(0.5 * a1);
        let q = a1 * s / r2;
        o[0] = g[0] * (s + q * re * re) + g[1] * q * re * im;
        o[1] = g[1] * (s + q * im * im) + g[0] * q * re * im;
    }
    out
}

/// `alpha * sum (|S_c| - |Ŝ_c|)^2 + beta * sum |S_c - Ŝ_c|^2` on compressed RI values; returns the
/// value and its gradient with respect to `est`.
pub fn freq_loss_compressed(est: &[f64], target: &[f64], w: &LossWeights) -> (f64, Vec<f64>) {
    assert_eq!(est.len(), target.len(), "freq loss operand lengths");
    let mut loss = 0.0;
    let mut grad = vec![0.0; est.len()];
    for ((g, e), t) in grad
        .chunks_exact_mut(2)
        .zip(est.chunks_exact(2))
        .zip(target.chunks_exact(2))
    {
        let (me, mt) = (safe_mag(e[0], e[1]), safe_mag(t[0], t[1]));
        let dm = me - mt;
        let (dr, di) = (e[0] - t[0], e[1] - t[1]);
        loss += w.alpha * dm * dm + w.beta * (dr * dr + di * di);
        g[0] = 2.0 * w.alpha * dm * e[0] / me + 2.0 * w.beta * dr;
        g[1] = 2.0 * w.alpha * dm * e[1] / me + 2.0 * w.beta * di;
    }
    (loss, grad)
}

/// `0.5 * sum_t log10((s - ŝ)^2 + eps) - log10(s^2 + eps)` and its gradient with respect to `ŝ`.
pub fn temp_loss_samples(est: &[f64], target: &[f64], eps: f64) -> (f64, Vec<f64>) {
    assert_eq!(est.len(), target.len(), "temporal loss operand lengths");
    let ln10 = std::f64::consts::LN_10;
    let mut loss = 0.0;
    let grad = est
        .iter()
        .zip(target)
        .map(|(e, s)| {
            let r = s - e;
            loss += 0.5 * (((r * r + eps).log10()) - (s * s + eps).log10());
            -r / (ln10 * (r * r + eps))
        })
        .collect();
    (loss, grad)
}

/// Summed binary cross-entropy (natural log) with the estimate clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_sum(p_hat: &[f64], p: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(p_hat.len(), p.len(), "bce operand lengths");
    let mut loss = 0.0;
    let grad = p_hat
        .iter()
        .zip(p)
        .map(|(q, y)| {
            let qc = q.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            loss -= y * qc.ln() + (1.0 - y) * (1.0 - qc).ln();
            if *q == qc {
                -y / qc + (1.0 - y) / (1.0 - qc)
            } else {
                0.0
            }
        })
        .collect();
    (loss, grad)
}

fn interleave(s: &ComplexSpectrogram) -> Vec<f64> {
    s.data.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn check_same(a: &ComplexSpectrogram, b: &ComplexSpectrogram) -> Result<()> {
    if a.data.dim() != b.data.dim() {
        let (x, y) = (a.data.dim(), b.data.dim());
        return Err(Error::ShapeMismatch {
            expected: vec![y.0, y.1],
            got: vec![x.0, x.1],
        });
    }
    Ok(())
}

pub fn loss_freq(
    s_hat: &ComplexSpectrogram,
    s: &ComplexSpectrogram,
    w: &LossWeights,
) -> Result<f64> {
    check_same(s_hat, s)?;
    let est = compress_ri(&interleave(s_hat), w.gamma);
    let tgt = compress_ri(&interleave(s), w.gamma);
    Ok(freq_loss_compressed(&est, &tgt, w).0)
}

pub fn loss_temp(s_hat: &Waveform, s: &Waveform, eps: f64) -> Result<f64> {
    if s_hat.len() != s.len() {
        return Err(Error::LengthMismatch(s_hat.len(), s.len()));
    }
    Ok(temp_loss_samples(&s_hat.samples, &s.samples, eps).0)
}

pub fn loss_ovrl(
    s_hat_spec: &ComplexSpectrogram,
    s_spec: &ComplexSpectrogram,
    s_hat: &Waveform,
    s: &Waveform,
    w: &LossWeights,
) -> Result<f64> {
    Ok(loss_freq(s_hat_spec, s_spec, w)? + w.lambda * loss_temp(s_hat, s, w.eps_log)?)
}

/// Identical contract to [`loss_ovrl`], applied to the compensated output.
pub fn loss_hc(
    s_tilde_spec: &ComplexSpectrogram,
    s_spec: &ComplexSpectrogram,
    s_tilde: &Waveform,
    s: &Waveform,
    w: &LossWeights,
) -> Result<f64> {
    loss_ovrl(s_tilde_spec, s_spec, s_tilde, s, w)
}

/// Sum over stages of [`loss_ovrl`]; waveforms come from the inverse STFT at the target length.
pub fn loss_pl(
    outputs: &[ComplexSpectrogram],
    targets: &ProgressiveTargetSet,
    w: &LossWeights,
    cfg: &StftConfig,
) -> Result<f64> {
    if outputs.len() != targets.targets.len() {
        return Err(Error::LengthMismatch(outputs.len(), targets.targets.len()));
    }
    let mut total = 0.0;
    for (o, t) in outputs.iter().zip(&targets.targets) {
        let wave = istft(o, cfg, Some(t.waveform.len()))?;
        total += loss_ovrl(o, &t.spectrogram, &wave, &t.waveform, w)?;
    }
    Ok(total)
}

pub fn loss_pitch_bce(p_hat: &Array2<f32>, p: &Array2<f32>) -> Result<f64> {
    if p_hat.dim() != p.dim() {
        let (a, b) = (p_hat.dim(), p.dim());
        return Err(Error::ShapeMismatch {
            expected: vec![b.0, b.1],
            got: vec![a.0, a.1],
        });
    }
    let a: Vec<f64> = p_hat.iter().map(|v| *v as f64).collect();
    let b: Vec<f64> = p.iter().map(|v| *v as f64).collect();
    Ok(bce_sum(&a, &b).0)
}

/// One item's targets for the overall loss: compressed RI spectrum and waveform.
#[derive(Debug, Clone)]
pub struct LossTarget {
    pub compressed: Vec<f64>,
    pub wave: Vec<f64>,
}

impl LossTarget {
    pub fn new(spec: &ComplexSpectrogram, wave: &Waveform, gamma: f64) -> Self {
        Self {
            compressed: compress_ri(&interleave(spec), gamma),
            wave: wave.samples.clone(),
        }
    }
}

/// Per-item components of the overall loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub freq: f64,
    pub temp: f64,
}

impl LossParts {
    pub fn total(&self, lambda: f64) -> f64 {
        self.freq + lambda * self.temp
    }
}

/// Overall loss of one compressed-RI estimate `[T, F, 2]` with its gradient.
pub fn ovrl_item(
    est: &[f64],
    target: &LossTarget,
    frames: usize,
    w: &LossWeights,
    cfg: &StftConfig,
) -> Result<(LossParts, Vec<f64>)> {
    let (freq, mut grad) = freq_loss_compressed(est, &target.compressed, w);
    let raw = uncompress_ri(est, w.gamma);
    let nf = cfg.n_freqs();
    let data = Array2::from_shape_vec(
        (frames, nf),
        raw.chunks_exact(2)
            .map(|z| Complex64::new(z[0], z[1]))
            .collect(),
    )
    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let wave = istft(
        &ComplexSpectrogram { data, config: *cfg },
        cfg,
        Some(target.wave.len()),
    )?;
    let (temp, gwave) = temp_loss_samples(&wave.samples, &target.wave, w.eps_log);
    if w.lambda != 0.0 {
        let gspec = istft_backward(&gwave, frames, cfg);
        let graw: Vec<f64> = gspec
            .iter()
            .flat_map(|c| [w.lambda * c.re, w.lambda * c.im])
            .collect();
        for (g, d) in grad.iter_mut().zip(uncompress_ri_vjp(est, &graw, w.gamma)) {
            *g += d;
        }
    }
    Ok((LossParts { freq, temp }, grad))
}

struct MeanOfItems {
    grads: Vec<f32>,
}

impl Backward for MeanOfItems {
    fn backward(&self, c: &BackwardCtx) -> Vec<Option<Tensor>> {
        let k = c.grad.item();
        vec![Some(Tensor::from_vec(
            c.inputs[0].shape(),
            self.grads.iter().map(|g| g * k).collect(),
        ))]
    }
}

impl Graph {
    /// Batch mean of the overall loss for estimates `[B, T, F, 2]` (compressed RI).
    pub fn ovrl_loss(
        &mut self,
        est: Var,
        targets: &[LossTarget],
        w: &LossWeights,
        cfg: &StftConfig,
    ) -> Result<(Var, Vec<LossParts>)> {
        let sh = self.shape(est).to_vec();
        if sh.len() != 4 || sh[0] != targets.len() || sh[2] != cfg.n_freqs() || sh[3] != 2 {
            return Err(Error::ShapeMismatch {
                expected: vec![
                    targets.len(),
                    sh.get(1).copied().unwrap_or(0),
                    cfg.n_freqs(),
                    2,
                ],
                got: sh,
            });
        }
        let (b, frames) = (sh[0], sh[1]);
        let item = frames * cfg.n_freqs() * 2;
        let data = self.value(est).data();
        let mut parts = Vec::with_capacity(b);
        let mut grads = Vec::with_capacity(data.len());
        let mut total = 0.0;
        for (i, t) in targets.iter().enumerate() {
            if t.compressed.len() != item {
                return Err(Error::LengthMismatch(t.compressed.len(), item));
            }
            let e: Vec<f64> = data[i * item..(i + 1) * item]
                .iter()
                .map(|v| *v as f64)
                .collect();
            let (p, g) = ovrl_item(&e, t, frames, w, cfg)?;
            total += p.total(w.lambda);
            parts.push(p);
            grads.extend(g.iter().map(|v| (v / b as f64) as f32));
        }
        let v = self.push(
            Tensor::scalar((total / b as f64) as f32),
            &[est],
            MeanOfItems { grads },
        );
        Ok((v, parts))
    }

    /// Batch mean of the summed BCE between posteriors `[B, T, N+1]` and labels of equal size.
    pub fn bce_loss(&mut self, p_hat: Var, labels: &[f32]) -> Result<Var> {
        let sh = self.shape(p_hat).to_vec();
        let n = self.value(p_hat).len();
        if labels.len() != n {
            return Err(Error::LengthMismatch(labels.len(), n));
        }
        let b = sh[0].max(1) as f64;
        let q: Vec<f64> = self.value(p_hat).data().iter().map(|v| *v as f64).collect();
        let y: Vec<f64> = labels.iter().map(|v| *v as f64).collect();
        let (loss, g) = bce_sum(&q, &y);
        let grads = g.iter().map(|v| (v / b) as f32).collect();
        Ok(self.push(
            Tensor::scalar((loss / b) as f32),
            &[p_hat],
            MeanOfItems { grads },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_bin(mag: f64, phase: f64) -> Vec<f64> {
        compress_ri(&[mag * phase.cos(), mag * phase.sin()], 1.0 / 3.0)
    }

    #[test]
    fn freq_worked_examples() {
        let w = LossWeights::default();
        let (l, _) = freq_loss_compressed(&one_bin(1.0, 0.3), &one_bin(8.0, 0.3), &w);
        assert!((l - 1.0).abs() < 1e-9, "{l}");
        let (l, _) =
            freq_loss_compressed(&one_bin(1.0, std::f64::consts::PI), &one_bin(1.0, 0.0), &w);
        assert!((l - 1.2).abs() < 1e-9, "{l}");
        let x = one_bin(3.0, 1.0);
        assert_eq!(freq_loss_compressed(&x, &x, &w).0, 0.0);
    }

    #[test]
    fn temp_worked_examples() {
        let (l, _) = temp_loss_samples(&[0.9, 0.9], &[1.0, 1.0], 1e-30);
        assert!((l + 2.0).abs() < 1e-9);
        let s = [0.3, -0.2, 0.5];
        let e1 = [0.25, -0.1, 0.55];
        let e2: Vec<f64> = s.iter().zip(&e1).map(|(a, b)| a + 2.0 * (b - a)).collect();
        let (l1, _) = temp_loss_samples(&e1, &s, 0.0);
        let (l2, _) = temp_loss_samples(&e2, &s, 0.0);
        assert!((l2 - l1 - 0.5 * 3.0 * 4f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn bce_worked_examples() {
        assert!((bce_sum(&[0.5], &[0.5]).0 - std::f64::consts::LN_2).abs() < 1e-12);
        let mut q = vec![1.0 / 226.0; 226];
        let mut y = vec![0.0; 226];
        y[17] = 1.0;
        let row = bce_sum(&q, &y).0;
        let oracle = -(1.0f64 / 226.0).ln() - 225.0 * (1.0f64 - 1.0 / 226.0).ln();
        assert!(
            (row - oracle).abs() < 1e-12 && (row - 6.41832).abs() < 1e-5,
            "{row}"
        );
        q.iter_mut().zip(&y).for_each(|(a, b)| *a = *b);
        assert!(bce_sum(&q, &y).0 < 1e-4);
    }

    use crate::signal::stft;
    use crate::synth::ladder::make_progressive_targets;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 1e-4;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    /// Central differences of `f` at `x` for every coordinate.
    fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut p = x.to_vec();
        (0..x.len())
            .map(|i| {
                p[i] = x[i] + H;
                let up = f(&p);
                p[i] = x[i] - H;
                let down = f(&p);
                p[i] = x[i];
                (up - down) / (2.0 * H)
            })
            .collect()
    }

    /// Value in `[lo, hi]` with a random sign.
    fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        let v = rng.random_range(lo..hi);
        if rng.random() {
            v
        } else {
            -v
        }
    }

    #[test]
    fn freq_gradient_matches_finite_differences() {
        let w = LossWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let est: Vec<f64> = (0..16).map(|_| signed(&mut rng, 0.2, 2.0)).collect();
            let tgt: Vec<f64> = est
                .iter()
                .map(|e| e + signed(&mut rng, 0.01, 1.0))
                .collect();
            let (_, g) = freq_loss_compressed(&est, &tgt, &w);
            let n = numeric_grad(&est, |x| freq_loss_compressed(x, &tgt, &w).0);
            for (a, b) in g.iter().zip(&n) {
                assert!(rel(*a, *b) < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn temp_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let s: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e: Vec<f64> = s.iter().map(|v| v + signed(&mut rng, 0.05, 1.0)).collect();
            let (_, g) = temp_loss_samples(&e, &s, 1e-8);
            let n = numeric_grad(&e, |x| temp_loss_samples(x, &s, 1e-8).0);
            for (a, b) in g.iter().zip(&n) {
                assert!(rel(*a, *b) < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let q: Vec<f64> = (0..16).map(|_| rng.random_range(0.05..0.95)).collect();
            let y: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
            let (_, g) = bce_sum(&q, &y);
            let n = numeric_grad(&q, |x| bce_sum(x, &y).0);
            for (a, b) in g.iter().zip(&n) {
                assert!(rel(*a, *b) < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn overall_gradient_matches_finite_differences() {
        let cfg = StftConfig::default();
        let w = LossWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let len = 1024;
        let s = Waveform::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect());
        let target = LossTarget::new(&stft(&s, &cfg).unwrap(), &s, w.gamma);
        let noisy = Waveform::new(
            s.samples
                .iter()
                .map(|v| v + rng.random_range(-0.3..0.3))
                .collect(),
        );
        let spec = stft(&noisy, &cfg).unwrap();
        let est = compress_ri(&interleave(&spec), w.gamma);
        let frames = spec.frames();
        let (_, g) = ovrl_item(&est, &target, frames, &w, &cfg).unwrap();
        let f = |x: &[f64]| {
            ovrl_item(x, &target, frames, &w, &cfg)
                .unwrap()
                .0
                .total(w.lambda)
        };
        let mut p = est.clone();
        for _ in 0..40 {
            let i = rng.random_range(0..est.len());
            p[i] = est[i] + H;
            let up = f(&p);
            p[i] = est[i] - H;
            let down = f(&p);
            p[i] = est[i];
            let n = (up - down) / (2.0 * H);
            assert!(
                rel(g[i], n) < 1e-3 || (g[i] - n).abs() < 1e-6,
                "index {i}: {} vs {n}",
                g[i]
            );
        }
    }

    fn ladder(seed: u64, k: usize) -> ProgressiveTargetSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Waveform::new((0..3000).map(|n| (n as f64 * 0.031).sin() * 0.5).collect());
        let n = Waveform::new((0..5000).map(|_| rng.random_range(-0.5..0.5)).collect());
        make_progressive_targets(&s, &n, -5.0, k, 5.0, seed, &StftConfig::default()).unwrap()
    }

    fn noisy_outputs(t: &ProgressiveTargetSet, seed: u64) -> Vec<ComplexSpectrogram> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        t.targets
            .iter()
            .map(|x| {
                let mut o = x.spectrogram.clone();
                o.data.iter_mut().for_each(|c| {
                    *c += Complex64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1))
                });
                o
            })
            .collect()
    }

    #[test]
    fn progressive_loss_is_a_sum_of_stage_losses() {
        let cfg = StftConfig::default();
        let w = LossWeights::default();
        let t = ladder(5, 3);
        let outs = noisy_outputs(&t, 6);
        let total = loss_pl(&outs, &t, &w, &cfg).unwrap();
        let stages: Vec<f64> = outs
            .iter()
            .zip(&t.targets)
            .map(|(o, x)| {
                loss_ovrl(
                    o,
                    &x.spectrogram,
                    &istft(o, &cfg, Some(x.waveform.len())).unwrap(),
                    &x.waveform,
                    &w,
                )
                .unwrap()
            })
            .collect();
        assert!((total - stages.iter().sum::<f64>()).abs() < 1e-10);
        // Perturbing output 1 changes only its own summand.
        let mut moved = outs.clone();
        moved[1].data.iter_mut().for_each(|c| *c *= 1.5);
        let delta = loss_pl(&moved, &t, &w, &cfg).unwrap() - total;
        let x = &t.targets[1];
        let own = loss_ovrl(
            &moved[1],
            &x.spectrogram,
            &istft(&moved[1], &cfg, Some(x.waveform.len())).unwrap(),
            &x.waveform,
            &w,
        )
        .unwrap();
        assert!((delta - (own - stages[1])).abs() < 1e-8);
        assert!(loss_pl(&outs[..2], &t, &w, &cfg).is_err());
    }

    #[test]
    fn single_target_ladder_reduces_to_overall_loss() {
        let cfg = StftConfig::default();
        let w = LossWeights::default();
        let t = ladder(7, 0);
        let outs = noisy_outputs(&t, 8);
        let c = t.clean();
        let want = loss_ovrl(
            &outs[0],
            &c.spectrogram,
            &istft(&outs[0], &cfg, Some(c.waveform.len())).unwrap(),
            &c.waveform,
            &w,
        )
        .unwrap();
        assert_eq!(loss_pl(&outs, &t, &w, &cfg).unwrap(), want);
    }

    #[test]
    fn lambda_weights_only_the_temporal_term() {
        let cfg = StftConfig::default();
        let t = ladder(9, 1);
        let outs = noisy_outputs(&t, 10);
        let x = &t.targets[0];
        let wave = istft(&outs[0], &cfg, Some(x.waveform.len())).unwrap();
        let at = |lambda: f64| {
            let w = LossWeights {
                lambda,
                ..LossWeights::default()
            };
            loss_ovrl(&outs[0], &x.spectrogram, &wave, &x.waveform, &w).unwrap()
        };
        let freq = loss_freq(&outs[0], &x.spectrogram, &LossWeights::default()).unwrap();
        let temp = loss_temp(&wave, &x.waveform, 1e-8).unwrap();
        assert_eq!(at(0.0), freq);
        assert!((at(2.0) - freq - 2.0 * temp).abs() < 1e-9);
        let hc = loss_hc(
            &outs[0],
            &x.spectrogram,
            &wave,
            &x.waveform,
            &LossWeights::default(),
        )
        .unwrap();
        assert_eq!(hc.to_bits(), at(1.0).to_bits());
        assert_eq!(
            loss_freq(&x.spectrogram, &x.spectrogram, &LossWeights::default()).unwrap(),
            0.0
        );
    }

    proptest! {
        #[test]
        fn freq_loss_is_nonnegative_and_zero_only_on_equality(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut b = a.clone();
            let w = LossWeights::default();
            prop_assert_eq!(freq_loss_compressed(&a, &b, &w).0, 0.0);
            let i = rng.random_range(0..b.len());
            b[i] += signed(&mut rng, 1e-3, 1.0);
            prop_assert!(freq_loss_compressed(&a, &b, &w).0 > 0.0);
        }

        #[test]
        fn bce_is_convex(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<f64> = (0..10).map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { rng.random_range(0.0..0.2) }).collect();
            let a: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
            for t in [0.25, 0.5, 0.75] {
                let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
                let lhs = bce_sum(&mix, &p).0;
                let rhs = t * bce_sum(&a, &p).0 + (1.0 - t) * bce_sum(&b, &p).0;
                prop_assert!(lhs <= rhs + 1e-9);
            }
        }
    }
}
