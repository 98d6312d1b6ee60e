//! Parameterized layers: each holds `ParamId`s and binds them through a [`Session`].

use rand::Rng;

use crate::nn::conv::Conv2dSpec;
use crate::nn::graph::Var;
use crate::nn::init::{orthogonal, uniform_fan_in};
use crate::nn::lstm::LstmDir;
use crate::nn::param::{ParamId, ParamKind, ParamStore, Session};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        group: &str,
        name: &str,
        inp: usize,
        out: usize,
        bias: bool,
    ) -> Self {
        let w = store.add(
            group,
            &format!("{name}.w"),
            ParamKind::Weight,
            uniform_fan_in(rng, &[out, inp], inp),
        );
        let b = bias.then(|| {
            store.add(
                group,
                &format!("{name}.b"),
                ParamKind::Weight,
                uniform_fan_in(rng, &[out], inp),
            )
        });
        Self { w, b }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let w = s.param(self.w);
        let b = self.b.map(|b| s.param(b));
        s.graph.linear(x, w, b)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub spec: Conv2dSpec,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        group: &str,
        name: &str,
        cin: usize,
        cout: usize,
        spec: Conv2dSpec,
    ) -> Self {
        let fan_in = cin * spec.kernel.0 * spec.kernel.1;
        let w = store.add(
            group,
            &format!("{name}.w"),
            ParamKind::Weight,
            uniform_fan_in(rng, &[cout, spec.kernel.0, spec.kernel.1, cin], fan_in),
        );
        let b = store.add(
            group,
            &format!("{name}.b"),
            ParamKind::Weight,
            uniform_fan_in(rng, &[cout], fan_in),
        );
        Self { w, b, spec }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let (w, b) = (s.param(self.w), s.param(self.b));
        s.graph.conv2d(x, w, b, self.spec)
    }
}

/// Normalization over contiguous blocks of `group` elements with `affine` learnable scale/shift entries.
#[derive(Debug, Clone)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f32,
}

impl Norm {
    pub fn new(store: &mut ParamStore, group: &str, name: &str, affine: usize) -> Self {
        let gamma = store.add(
            group,
            &format!("{name}.gamma"),
            ParamKind::Weight,
            Tensor::full(&[affine], 1.0),
        );
        let beta = store.add(
            group,
            &format!("{name}.beta"),
            ParamKind::Weight,
            Tensor::zeros(&[affine]),
        );
        Self {
            gamma,
            beta,
            eps: 1e-5,
        }
    }

    /// Normalizes over the trailing `block` elements (e.g. `T*F*D` for a global norm).
    pub fn forward(&self, s: &mut Session, x: Var, block: usize) -> Var {
        let (g, b) = (s.param(self.gamma), s.param(self.beta));
        s.graph.group_norm(x, block, g, b, self.eps)
    }
}

#[derive(Debug, Clone)]
pub struct PRelu {
    pub alpha: ParamId,
}

impl PRelu {
    pub fn new(store: &mut ParamStore, group: &str, name: &str) -> Self {
        Self {
            alpha: store.add(
                group,
                &format!("{name}.alpha"),
                ParamKind::Weight,
                Tensor::scalar(0.25),
            ),
        }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let a = s.param(self.alpha);
        s.graph.prelu(x, a)
    }
}

#[derive(Debug, Clone)]
pub struct BiLstm {
    dirs: [[ParamId; 3]; 2],
    pub hidden: usize,
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        group: &str,
        name: &str,
        inp: usize,
        hidden: usize,
    ) -> Self {
        let mut dirs = [[ParamId(0); 3]; 2];
        for (d, tag) in ["fwd", "bwd"].iter().enumerate() {
            let w_ih = uniform_fan_in(rng, &[4 * hidden, inp], hidden);
            let mut w_hh = Vec::with_capacity(4 * hidden * hidden);
            for _ in 0..4 {
                w_hh.extend_from_slice(orthogonal(rng, hidden, hidden).data());
            }
            let mut b = vec![0.0f32; 4 * hidden];
            // forget-gate bias 1 keeps early gradients flowing through the cell
            b[hidden..2 * hidden].fill(1.0);
            dirs[d] = [
                store.add(
                    group,
                    &format!("{name}.{tag}.w_ih"),
                    ParamKind::Weight,
                    w_ih,
                ),
                store.add(
                    group,
                    &format!("{name}.{tag}.w_hh"),
                    ParamKind::Weight,
                    Tensor::from_vec(&[4 * hidden, hidden], w_hh),
                ),
                store.add(
                    group,
                    &format!("{name}.{tag}.b"),
                    ParamKind::Weight,
                    Tensor::from_vec(&[4 * hidden], b),
                ),
            ];
        }
        Self { dirs, hidden }
    }

    /// `[N, L, In]` → `[N, L, 2H]`.
    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let mut dir = |d: usize| LstmDir {
            w_ih: s.param(self.dirs[d][0]),
            w_hh: s.param(self.dirs[d][1]),
            b: s.param(self.dirs[d][2]),
        };
        let (f, b) = (dir(0), dir(1));
        s.graph.bilstm(x, f, b)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f32,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, group: &str, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(
                group,
                &format!("{name}.gamma"),
                ParamKind::Weight,
                Tensor::full(&[channels], 1.0),
            ),
            beta: store.add(
                group,
                &format!("{name}.beta"),
                ParamKind::Weight,
                Tensor::zeros(&[channels]),
            ),
            running_mean: store.add(
                group,
                &format!("{name}.running_mean"),
                ParamKind::Buffer,
                Tensor::zeros(&[channels]),
            ),
            running_var: store.add(
                group,
                &format!("{name}.running_var"),
                ParamKind::Buffer,
                Tensor::full(&[channels], 1.0),
            ),
            momentum: 0.1,
        }
    }

    /// Channels in the last dimension.
    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let train = s.training(self.gamma);
        let (g, b) = (s.param(self.gamma), s.param(self.beta));
        let rm = s.buffer(self.running_mean).data().to_vec();
        let rv = s.buffer(self.running_var).data().to_vec();
        let (y, stats) = s.graph.batch_norm(x, g, b, &rm, &rv, train, 1e-5);
        if let Some(st) = stats {
            let m = self.momentum;
            let mix = |old: &[f32], new: &[f32]| -> Tensor {
                Tensor::from_vec(
                    &[old.len()],
                    old.iter()
                        .zip(new)
                        .map(|(o, n)| (1.0 - m) * o + m * n)
                        .collect(),
                )
            };
            s.push_buffer_update(self.running_mean, mix(&rm, &st.mean));
            s.push_buffer_update(self.running_var, mix(&rv, &st.var_unbiased));
        }
        y
    }
}
