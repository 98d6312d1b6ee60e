//! Conversions between spectrograms and `[B, T, F, 2]` real/imaginary tensors.

use ndarray::Array2;
use realfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::signal::{ComplexSpectrogram, StftConfig};

fn check_batch(specs: &[&ComplexSpectrogram]) -> Result<(usize, usize)> {
    let first = specs
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty batch".into()))?;
    let (t, f) = (first.frames(), first.freqs());
    for s in specs {
        if (s.frames(), s.freqs()) != (t, f) {
            return Err(Error::ShapeMismatch {
                expected: vec![t, f],
                got: vec![s.frames(), s.freqs()],
            });
        }
    }
    Ok((t, f))
}

/// Raw spectrograms as `[B, T, F, 2]`, optionally power-law compressed with `gamma`.
pub fn specs_to_tensor(specs: &[&ComplexSpectrogram], gamma: Option<f64>) -> Result<Tensor> {
    let (t, f) = check_batch(specs)?;
    let mut data = Vec::with_capacity(specs.len() * t * f * 2);
    for s in specs {
        for c in s.data.iter() {
            let (re, im) = match gamma {
                Some(g) => {
                    let m = c.norm();
                    if m > 0.0 {
                        let k = m.powf(g - 1.0);
                        (c.re * k, c.im * k)
                    } else {
                        (0.0, 0.0)
                    }
                }
                None => (c.re, c.im),
            };
            data.push(re as f32);
            data.push(im as f32);
        }
    }
    Ok(Tensor::from_vec(&[specs.len(), t, f, 2], data))
}

/// Inverse of [`specs_to_tensor`]; `gamma` undoes the compression.
pub fn tensor_to_specs(
    t: &Tensor,
    cfg: &StftConfig,
    gamma: Option<f64>,
) -> Result<Vec<ComplexSpectrogram>> {
    let s = t.shape();
    if s.len() != 4 || s[3] != 2 || s[2] != cfg.n_freqs() {
        return Err(Error::ShapeMismatch {
            expected: vec![0, 0, cfg.n_freqs(), 2],
            got: s.to_vec(),
        });
    }
    let (b, frames, f) = (s[0], s[1], s[2]);
    Ok((0..b)
        .map(|i| {
            let chunk = &t.data()[i * frames * f * 2..(i + 1) * frames * f * 2];
            let vals = chunk.chunks_exact(2).map(|p| {
                let (re, im) = (p[0] as f64, p[1] as f64);
                match gamma {
                    Some(g) => {
                        let m = re.hypot(im);
                        // Zero stays zero; NaN must propagate so callers can detect it.
                        if m == 0.0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            let k = m.powf(1.0 / g - 1.0);
                            Complex64::new(re * k, im * k)
                        }
                    }
                    None => Complex64::new(re, im),
                }
            });
            ComplexSpectrogram {
                data: Array2::from_shape_vec((frames, f), vals.collect()).expect("shape checked"),
                config: *cfg,
            }
        })
        .collect())
}

/// `log(|S| + eps)` of compressed RI values `[B, T, F, 2]` as `[B, T, F, 1]`.
pub fn log_magnitude_feature(compressed: &Tensor, gamma: f64, eps: f64) -> Tensor {
    let s = compressed.shape();
    let vals = compressed
        .data()
        .chunks_exact(2)
        .map(|p| {
            let m = (p[0] as f64).hypot(p[1] as f64).powf(1.0 / gamma);
            (m + eps).ln() as f32
        })
        .collect();
    Tensor::from_vec(&[s[0], s[1], s[2], 1], vals)
}
