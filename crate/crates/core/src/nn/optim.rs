//! Adam and global-norm gradient clipping.

use std::collections::BTreeMap;

use crate::nn::param::{ParamId, ParamKind, ParamStore};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// First and second moments keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    pub moments: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Applies one bias-corrected update to every parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)], lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (id, g) in grads {
            let p = store.get_mut(*id);
            assert_eq!(
                p.kind,
                ParamKind::Weight,
                "optimizer step on buffer {}",
                p.name
            );
            let (m, v) = self
                .moments
                .entry(p.name.clone())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (((w, gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let gd = *gi as f64;
                let mn = b1 * *mi as f64 + (1.0 - b1) * gd;
                let vn = b2 * *vi as f64 + (1.0 - b2) * gd * gd;
                *mi = mn as f32;
                *vi = vn as f32;
                let upd = lr * (mn / c1) / ((vn / c2).sqrt() + self.cfg.eps);
                *w = (*w as f64 - upd) as f32;
            }
        }
    }
}

/// Scales gradients in place so their joint L2 norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [(ParamId, Tensor)], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|(_, g)| g.sq_norm()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = (max_norm / norm) as f32;
        grads.iter_mut().for_each(|(_, g)| g.scale_assign(k));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add(
            "g",
            "w",
            ParamKind::Weight,
            Tensor::from_vec(&[2], vec![1.0, -1.0]),
        );
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(
            &mut store,
            &[(id, Tensor::from_vec(&[2], vec![0.5, -2.0]))],
            0.1,
        );
        let v = store.get(id).value.data();
        // bias-corrected first step is lr * sign(g)
        assert!((v[0] - 0.9).abs() < 1e-6 && (v[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![(ParamId(0), Tensor::from_vec(&[2], vec![3.0, 4.0]))];
        let n = clip_global_norm(&mut g, 1.0);
        assert!((n - 5.0).abs() < 1e-12);
        assert!((g[0].1.sq_norm().sqrt() - 1.0).abs() < 1e-6);
    }
}
