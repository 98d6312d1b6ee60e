//! Layer-style and batch normalization.

use crate::nn::graph::{Backward, BackwardCtx, Graph, Var};
use crate::nn::tensor::Tensor;

struct GroupNorm {
    group: usize,
    affine: usize,
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
}

impl Backward for GroupNorm {
    fn backward(&self, c: &BackwardCtx) -> Vec<Option<Tensor>> {
        let gamma = c.inputs[1].data();
        let g = c.grad.data();
        let a = self.affine;
        let mut dgamma = vec![0.0f32; a];
        let mut dbeta = vec![0.0f32; a];
        for (i, (gv, xh)) in g.iter().zip(&self.xhat).enumerate() {
            dgamma[i % a] += gv * xh;
            dbeta[i % a] += gv;
        }
        let dx = c.needs(0).then(|| {
            let mut dx = vec![0.0f32; g.len()];
            let n = self.group as f32;
            for (gi, inv) in self.inv_std.iter().enumerate() {
                let r = gi * self.group..(gi + 1) * self.group;
                let (mut s1, mut s2) = (0.0f32, 0.0f32);
                for i in r.clone() {
                    let dxh = g[i] * gamma[i % a];
                    s1 += dxh;
                    s2 += dxh * self.xhat[i];
                }
                let (m1, m2) = (s1 / n, s2 / n);
                for i in r {
                    let dxh = g[i] * gamma[i % a];
                    dx[i] = inv * (dxh - m1 - self.xhat[i] * m2);
                }
            }
            Tensor::from_vec(c.inputs[0].shape(), dx)
        });
        vec![
            dx,
            c.needs(1).then(|| Tensor::from_vec(&[a], dgamma)),
            c.needs(2).then(|| Tensor::from_vec(&[a], dbeta)),
        ]
    }
}

struct BatchNormTrain {
    channels: usize,
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
}

impl Backward for BatchNormTrain {
    fn backward(&self, c: &BackwardCtx) -> Vec<Option<Tensor>> {
        let ch = self.channels;
        let gamma = c.inputs[1].data();
        let g = c.grad.data();
        let m = (g.len() / ch) as f32;
        let mut dgamma = vec![0.0f32; ch];
        let mut dbeta = vec![0.0f32; ch];
        for (i, (gv, xh)) in g.iter().zip(&self.xhat).enumerate() {
            dgamma[i % ch] += gv * xh;
            dbeta[i % ch] += gv;
        }
        let dx = c.needs(0).then(|| {
            let dx: Vec<f32> = g
                .iter()
                .zip(&self.xhat)
                .enumerate()
                .map(|(i, (gv, xh))| {
                    let j = i % ch;
                    gamma[j] * self.inv_std[j] * (gv - dbeta[j] / m - xh * dgamma[j] / m)
                })
                .collect();
            Tensor::from_vec(c.inputs[0].shape(), dx)
        });
        vec![
            dx,
            c.needs(1).then(|| Tensor::from_vec(&[ch], dgamma)),
            c.needs(2).then(|| Tensor::from_vec(&[ch], dbeta)),
        ]
    }
}

struct ChannelAffine {
    channels: usize,
    scale: Vec<f32>,
    xhat: Vec<f32>,
}

impl Backward for ChannelAffine {
    fn backward(&self, c: &BackwardCtx) -> Vec<Option<Tensor>> {
        let ch = self.channels;
        let g = c.grad.data();
        let mut dgamma = vec![0.0f32; ch];
        let mut dbeta = vec![0.0f32; ch];
        for (i, (gv, xh)) in g.iter().zip(&self.xhat).enumerate() {
            dgamma[i % ch] += gv * xh;
            dbeta[i % ch] += gv;
        }
        let dx = c.needs(0).then(|| {
            Tensor::from_vec(
                c.inputs[0].shape(),
                g.iter()
                    .enumerate()
                    .map(|(i, gv)| gv * self.scale[i % ch])
                    .collect(),
            )
        });
        vec![
            dx,
            c.needs(1).then(|| Tensor::from_vec(&[ch], dgamma)),
            c.needs(2).then(|| Tensor::from_vec(&[ch], dbeta)),
        ]
    }
}

/// Running statistics produced by a training-mode batch-norm call.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f32>,
    pub var_unbiased: Vec<f32>,
}

impl Graph {
    /// Normalizes each contiguous block of `group` elements to zero mean and unit variance,
    /// then applies `gamma[i % A] * xhat + beta[i % A]` where `A = gamma.len()` divides the
    /// group or spans a whole number of groups.
    pub fn group_norm(&mut self, x: Var, group: usize, gamma: Var, beta: Var, eps: f32) -> Var {
        let xv = self.value(x);
        let a = self.value(gamma).len();
        assert!(
            group > 0
                && xv.len().is_multiple_of(group)
                && (group.is_multiple_of(a)
                    || (a.is_multiple_of(group) && xv.len().is_multiple_of(a))),
            "group_norm: group {group}, affine {a}, len {}",
            xv.len()
        );
        assert_eq!(self.value(beta).len(), a);
        let (gm, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0f32; xv.len()];
        let mut y = vec![0.0f32; xv.len()];
        let mut inv_std = Vec::with_capacity(xv.len() / group);
        for (gi, chunk) in xv.data().chunks_exact(group).enumerate() {
            let mean = chunk.iter().map(|v| *v as f64).sum::<f64>() / group as f64;
            let var = chunk
                .iter()
                .map(|v| (*v as f64 - mean).powi(2))
                .sum::<f64>()
                / group as f64;
            let inv = (1.0 / (var + eps as f64).sqrt()) as f32;
            inv_std.push(inv);
            let base = gi * group;
            for (j, v) in chunk.iter().enumerate() {
                let h = (*v - mean as f32) * inv;
                xhat[base + j] = h;
                y[base + j] = h * gm[(base + j) % a] + bt[(base + j) % a];
            }
        }
        let out = Tensor::from_vec(xv.shape(), y);
        self.push(
            out,
            &[x, gamma, beta],
            GroupNorm {
                group,
                affine: a,
                xhat,
                inv_std,
            },
        )
    }

    /// Layer norm over the last dimension with per-channel affine.
    pub fn layer_norm_last(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Var {
        let c = self.value(x).last_dim();
        self.group_norm(x, c, gamma, beta, eps)
    }

    /// Batch norm over channels in the last dimension. In training mode the batch statistics
    /// are used and returned; otherwise the running statistics are applied as a fixed affine map.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f32],
        running_var: &[f32],
        train: bool,
        eps: f32,
    ) -> (Var, Option<BatchStats>) {
        let xv = self.value(x);
        let ch = xv.last_dim();
        let (gm, bt) = (self.value(gamma).data(), self.value(beta).data());
        let m = xv.rows();
        if train {
            let mut mean = vec![0.0f64; ch];
            for row in xv.data().chunks_exact(ch) {
                for (a, v) in mean.iter_mut().zip(row) {
                    *a += *v as f64;
                }
            }
            mean.iter_mut().for_each(|v| *v /= m as f64);
            let mut var = vec![0.0f64; ch];
            for row in xv.data().chunks_exact(ch) {
                for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    *a += (*v as f64 - mu).powi(2);
                }
            }
            let biased: Vec<f64> = var.iter().map(|v| v / m as f64).collect();
            let inv_std: Vec<f32> = biased
                .iter()
                .map(|v| (1.0 / (v + eps as f64).sqrt()) as f32)
                .collect();
            let mut xhat = vec![0.0f32; xv.len()];
            let mut y = vec![0.0f32; xv.len()];
            for (i, v) in xv.data().iter().enumerate() {
                let j = i % ch;
                let h = (*v - mean[j] as f32) * inv_std[j];
                xhat[i] = h;
                y[i] = h * gm[j] + bt[j];
            }
            let stats = BatchStats {
                mean: mean.iter().map(|v| *v as f32).collect(),
                var_unbiased: var
                    .iter()
                    .map(|v| (v / (m.max(2) - 1) as f64) as f32)
                    .collect(),
            };
            let out = Tensor::from_vec(xv.shape(), y);
            (
                self.push(
                    out,
                    &[x, gamma, beta],
                    BatchNormTrain {
                        channels: ch,
                        xhat,
                        inv_std,
                    },
                ),
                Some(stats),
            )
        } else {
            let inv: Vec<f32> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            let scale: Vec<f32> = inv.iter().zip(gm).map(|(i, g)| i * g).collect();
            let mut xhat = vec![0.0f32; xv.len()];
            let mut y = vec![0.0f32; xv.len()];
            for (i, v) in xv.data().iter().enumerate() {
                let j = i % ch;
                let h = (*v - running_mean[j]) * inv[j];
                xhat[i] = h;
                y[i] = h * gm[j] + bt[j];
            }
            let out = Tensor::from_vec(xv.shape(), y);
            (
                self.push(
                    out,
                    &[x, gamma, beta],
                    ChannelAffine {
                        channels: ch,
                        scale,
                        xhat,
                    },
                ),
                None,
            )
        }
    }
}
