//! Convolutional-recurrent pitch estimator producing a per-frame posterior.

use rand::Rng;

use crate::model::config::PitchEstimatorConfig;
use crate::nn::conv::Conv2dSpec;
use crate::nn::layers::{BatchNorm, BiLstm, Conv2d, Linear, PRelu};
use crate::nn::{ParamStore, Session, Var};

pub const PITCH_GROUP: &str = "pitch_estimator";
/// Floor inside the log-magnitude input feature.
pub const LOG_FEATURE_EPS: f64 = 1e-7;

#[derive(Debug, Clone)]
struct ConvBlock {
    conv: Conv2d,
    bn: BatchNorm,
    act: PRelu,
}

#[derive(Debug, Clone)]
pub struct PitchEstimator {
    convs: Vec<ConvBlock>,
    rnns: Vec<BiLstm>,
    out: Linear,
    pub cfg: PitchEstimatorConfig,
}

impl PitchEstimator {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        cfg: &PitchEstimatorConfig,
        n_freqs: usize,
    ) -> Self {
        let g = PITCH_GROUP;
        let (kt, kf) = cfg.conv_kernel;
        let spec = Conv2dSpec {
            kernel: (kt, kf),
            stride: cfg.conv_stride,
            pad: (kt / 2, kf / 2),
        };
        let mut cin = 1;
        let convs = cfg
            .conv_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let b = ConvBlock {
                    conv: Conv2d::new(store, rng, g, &format!("conv{i}"), cin, c, spec),
                    bn: BatchNorm::new(store, g, &format!("bn{i}"), c),
                    act: PRelu::new(store, g, &format!("act{i}")),
                };
                cin = c;
                b
            })
            .collect();
        let mut inp = cfg.reduced_freqs(n_freqs) * cin;
        let rnns = cfg
            .rnn_hidden
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let r = BiLstm::new(store, rng, g, &format!("rnn{i}"), inp, h);
                inp = 2 * h;
                r
            })
            .collect();
        let out = Linear::new(store, rng, g, "out", inp, cfg.out_dim, true);
        Self {
            convs,
            rnns,
            out,
            cfg: cfg.clone(),
        }
    }

    /// Log-magnitude features `[B, T, F, 1]` → posterior `[B, T, N+1]` in (0, 1).
    pub fn forward(&self, s: &mut Session, feat: Var) -> Var {
        let mut x = feat;
        for b in &self.convs {
            x = b.conv.forward(s, x);
            x = b.bn.forward(s, x);
            x = b.act.forward(s, x);
        }
        let sh = s.graph.shape(x).to_vec();
        x = s.graph.reshape(x, &[sh[0], sh[1], sh[2] * sh[3]]);
        for r in &self.rnns {
            x = r.forward(s, x);
        }
        let logits = self.out.forward(s, x);
        s.graph.sigmoid(logits)
    }
}
