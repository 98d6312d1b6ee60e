//! SE blocks operating on channel-last feature maps `[B, T, F, D]`.

use rand::Rng;

use crate::model::config::{BlockKind, ModelConfig};
use crate::nn::layers::{BiLstm, Linear, Norm, PRelu};
use crate::nn::{ParamId, ParamKind, ParamStore, Session, Tensor, Var};

/// Norm, unfold, BiLSTM, transposed-conv projection and residual along dim 1 of `[N, L, D]`.
#[derive(Debug, Clone)]
struct SeqPass {
    norm: Norm,
    rnn: BiLstm,
    proj: Linear,
    bias: ParamId,
    kernel: usize,
    dim: usize,
}

impl SeqPass {
    fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        group: &str,
        name: &str,
        dim: usize,
        hidden: usize,
        kernel: usize,
    ) -> Self {
        let norm = Norm::new(store, group, &format!("{name}.norm"), dim);
        let rnn = BiLstm::new(
            store,
            rng,
            group,
            &format!("{name}.rnn"),
            kernel * dim,
            hidden,
        );
        let proj = Linear::new(
            store,
            rng,
            group,
            &format!("{name}.proj"),
            2 * hidden,
            kernel * dim,
            false,
        );
        let bias = store.add(
            group,
            &format!("{name}.proj_bias"),
            ParamKind::Weight,
            Tensor::zeros(&[dim]),
        );
        Self {
            norm,
            rnn,
            proj,
            bias,
            kernel,
            dim,
        }
    }

    fn forward(&self, s: &mut Session, x: Var) -> Var {
        let y = self.norm.forward(s, x, self.dim);
        let u = if self.kernel > 1 {
            s.graph.unfold_seq(y, self.kernel)
        } else {
            y
        };
        let r = self.rnn.forward(s, u);
        let p = self.proj.forward(s, r);
        let f = if self.kernel > 1 {
            s.graph.fold_seq(p, self.kernel)
        } else {
            p
        };
        let b = s.param(self.bias);
        let f = s.graph.add_bias(f, b);
        s.graph.add(f, x)
    }
}

/// Applies `pass` to every frequency row (intra) of `[B, T, F, D]`.
fn along_freq(s: &mut Session, pass: &SeqPass, x: Var) -> Var {
    let sh = s.graph.shape(x).to_vec();
    let r = s.graph.reshape(x, &[sh[0] * sh[1], sh[2], sh[3]]);
    let y = pass.forward(s, r);
    s.graph.reshape(y, &sh)
}

/// Applies `pass` along time for every frequency (inter) of `[B, T, F, D]`.
fn along_time(s: &mut Session, pass: &SeqPass, x: Var) -> Var {
    let sh = s.graph.shape(x).to_vec();
    let p = s.graph.permute(x, &[0, 2, 1, 3]);
    let r = s.graph.reshape(p, &[sh[0] * sh[2], sh[1], sh[3]]);
    let y = pass.forward(s, r);
    let y = s.graph.reshape(y, &[sh[0], sh[2], sh[1], sh[3]]);
    s.graph.permute(y, &[0, 2, 1, 3])
}

/// 1x1 projection, PReLU and per-head norm over (F, channels).
#[derive(Debug, Clone)]
struct HeadProj {
    lin: Linear,
    act: PRelu,
    norm: Norm,
    per_head: usize,
}

impl HeadProj {
    fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        group: &str,
        name: &str,
        dim: usize,
        heads: usize,
        per_head: usize,
        freqs: usize,
    ) -> Self {
        Self {
            lin: Linear::new(
                store,
                rng,
                group,
                &format!("{name}.lin"),
                dim,
                heads * per_head,
                true,
            ),
            act: PRelu::new(store, group, &format!("{name}.act")),
            norm: Norm::new(
                store,
                group,
                &format!("{name}.norm"),
                heads * freqs * per_head,
            ),
            per_head,
        }
    }

    /// `[B, T, F, D]` → `[B*L, T, F*E]`.
    fn forward(&self, s: &mut Session, x: Var, heads: usize) -> Var {
        let sh = s.graph.shape(x).to_vec();
        let (b, t, f) = (sh[0], sh[1], sh[2]);
        let e = self.per_head;
        let y = self.lin.forward(s, x);
        let y = self.act.forward(s, y);
        let y = s.graph.reshape(y, &[b, t, f, heads, e]);
        let y = s.graph.permute(y, &[0, 1, 3, 2, 4]);
        let y = self.norm.forward(s, y, f * e);
        let y = s.graph.permute(y, &[0, 2, 1, 3, 4]);
        s.graph.reshape(y, &[b * heads, t, f * e])
    }
}

#[derive(Debug, Clone)]
struct Attention {
    q: HeadProj,
    k: HeadProj,
    v: HeadProj,
    out: Linear,
    out_act: PRelu,
    out_norm: Norm,
    heads: usize,
}

impl Attention {
    fn forward(&self, s: &mut Session, x: Var) -> Var {
        let sh = s.graph.shape(x).to_vec();
        let (b, t, f, d) = (sh[0], sh[1], sh[2], sh[3]);
        let l = self.heads;
        let q = self.q.forward(s, x, l);
        let k = self.k.forward(s, x, l);
        let v = self.v.forward(s, x, l);
        let scores = s.graph.bmm(q, k, true);
        let scores = s
            .graph
            .scale(scores, 1.0 / ((f * self.q.per_head) as f32).sqrt());
        let att = s.graph.softmax_last(scores);
        let y = s.graph.bmm(att, v, false);
        let dv = self.v.per_head;
        let y = s.graph.reshape(y, &[b, l, t, f, dv]);
        let y = s.graph.permute(y, &[0, 2, 3, 1, 4]);
        let y = s.graph.reshape(y, &[b, t, f, d]);
        let y = self.out.forward(s, y);
        let y = self.out_act.forward(s, y);
        let y = self.out_norm.forward(s, y, f * d);
        s.graph.add(y, x)
    }
}

/// One SE block; all variants map `[B, T, F, D]` to the same shape.
#[derive(Debug, Clone)]
pub struct SeBlock {
    intra: SeqPass,
    inter: SeqPass,
    attention: Option<Attention>,
}

impl SeBlock {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, group: &str, cfg: &ModelConfig) -> Self {
        let (d, h) = (cfg.embed_dim, cfg.rnn_hidden);
        let kernel = match cfg.block {
            BlockKind::GridNet => cfg.unfold_kernel,
            BlockKind::Recurrent => 1,
        };
        let intra = SeqPass::new(store, rng, group, "intra", d, h, kernel);
        let inter = SeqPass::new(store, rng, group, "inter", d, h, kernel);
        let attention = (cfg.block == BlockKind::GridNet).then(|| {
            let (l, e, f) = (cfg.attn_heads, cfg.qk_channels(), cfg.n_freqs);
            Attention {
                q: HeadProj::new(store, rng, group, "attn.q", d, l, e, f),
                k: HeadProj::new(store, rng, group, "attn.k", d, l, e, f),
                v: HeadProj::new(store, rng, group, "attn.v", d, l, d / l, f),
                out: Linear::new(store, rng, group, "attn.out.lin", d, d, true),
                out_act: PRelu::new(store, group, "attn.out.act"),
                out_norm: Norm::new(store, group, "attn.out.norm", f * d),
                heads: l,
            }
        });
        Self {
            intra,
            inter,
            attention,
        }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let y = along_freq(s, &self.intra, x);
        let y = along_time(s, &self.inter, y);
        match &self.attention {
            Some(a) => a.forward(s, y),
            None => y,
        }
    }
}
