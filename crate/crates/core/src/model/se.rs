//! Progressive SE network: phase encoder, encoder, K+1 SE blocks and per-block decoders.

use rand::Rng;

use crate::model::blocks::SeBlock;
use crate::model::config::ModelConfig;
use crate::nn::conv::Conv2dSpec;
use crate::nn::init::uniform_fan_in;
use crate::nn::layers::{Conv2d, Linear, Norm};
use crate::nn::{ParamId, ParamKind, ParamStore, Session, Var};

pub fn se_block_group(i: usize) -> String {
    format!("se_block[{i}]")
}

pub fn decoder_group(k: usize) -> String {
    format!("decoder[{k}]")
}

/// Complex time convolution, magnitude compression and a 1x1 real projection.
#[derive(Debug, Clone)]
pub struct PhaseEncoder {
    wr: ParamId,
    wi: ParamId,
    br: ParamId,
    bi: ParamId,
    mix: Linear,
}

/// Compression exponent inside the phase encoder.
const PE_ALPHA: f32 = 0.5;
const PE_EPS: f32 = 1e-8;
const PE_TIME_KERNEL: usize = 3;

impl PhaseEncoder {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, channels: usize) -> Self {
        let g = "phase_encoder";
        let k = PE_TIME_KERNEL;
        let mut w = |name: &str, shape: &[usize]| {
            store.add(g, name, ParamKind::Weight, uniform_fan_in(rng, shape, k))
        };
        let (wr, wi, br, bi) = (
            w("wr", &[channels, k]),
            w("wi", &[channels, k]),
            w("br", &[channels]),
            w("bi", &[channels]),
        );
        let mix = Linear::new(store, rng, g, "mix", 2 * channels, channels, true);
        Self {
            wr,
            wi,
            br,
            bi,
            mix,
        }
    }

    /// Raw RI `[B, T, F, 2]` → real features `[B, T, F, C]`.
    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let (wr, wi, br, bi) = (
            s.param(self.wr),
            s.param(self.wi),
            s.param(self.br),
            s.param(self.bi),
        );
        let z = s.graph.complex_conv_time(x, wr, wi, br, bi);
        let z = s.graph.complex_compress(z, PE_ALPHA, PE_EPS);
        self.mix.forward(s, z)
    }
}

#[derive(Debug, Clone)]
pub struct SeModel {
    pub cfg: ModelConfig,
    phase_encoder: Option<PhaseEncoder>,
    enc_conv: Conv2d,
    enc_norm: Norm,
    blocks: Vec<SeBlock>,
    /// `decoders[k-1]` is decoder k; intermediate decoders are absent without progressive learning.
    decoders: Vec<Option<Conv2d>>,
}

/// Progressive outputs in the compressed RI domain, `[B, T, F, 2]` each; index k-1 holds output k.
pub struct SeOutputs {
    pub outputs: Vec<Option<Var>>,
}

impl SeOutputs {
    pub fn final_output(&self) -> Var {
        self.outputs
            .last()
            .copied()
            .flatten()
            .expect("the last decoder always exists")
    }
}

impl SeModel {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, cfg: &ModelConfig) -> Self {
        let d = cfg.embed_dim;
        let phase_encoder = (!cfg.no_pe).then(|| PhaseEncoder::new(store, rng, cfg.pe_channels));
        let cin = if cfg.no_pe { 2 } else { cfg.pe_channels };
        let enc_conv = Conv2d::new(
            store,
            rng,
            "encoder",
            "conv",
            cin,
            d,
            Conv2dSpec::same(cfg.enc_kernel.0, cfg.enc_kernel.1),
        );
        let enc_norm = Norm::new(store, "encoder", "gln", d);
        let blocks = (0..=cfg.k)
            .map(|i| SeBlock::new(store, rng, &se_block_group(i), cfg))
            .collect();
        let decoders = (1..=cfg.k + 1)
            .map(|k| {
                (!cfg.no_pl || k == cfg.k + 1).then(|| {
                    Conv2d::new(
                        store,
                        rng,
                        &decoder_group(k),
                        "deconv",
                        d,
                        2,
                        Conv2dSpec::same(3, 3),
                    )
                })
            })
            .collect();
        Self {
            cfg: cfg.clone(),
            phase_encoder,
            enc_conv,
            enc_norm,
            blocks,
            decoders,
        }
    }

    /// Encoder stream entering the first SE block.
    pub fn encode(&self, s: &mut Session, x_raw: Var, x_comp: Var) -> Var {
        let feat = match &self.phase_encoder {
            Some(pe) => pe.forward(s, x_raw),
            None => x_comp,
        };
        let y = self.enc_conv.forward(s, feat);
        let sh = s.graph.shape(y).to_vec();
        self.enc_norm.forward(s, y, sh[1] * sh[2] * sh[3])
    }

    /// Runs blocks `from..=to` on `stream` and decodes after each; returns the final stream.
    pub fn run_blocks(
        &self,
        s: &mut Session,
        mut stream: Var,
        from: usize,
        to: usize,
        outputs: &mut SeOutputs,
    ) -> Var {
        for i in from..=to {
            stream = self.blocks[i].forward(s, stream);
            if let Some(dec) = &self.decoders[i] {
                outputs.outputs[i] = Some(dec.forward(s, stream));
            }
        }
        stream
    }

    /// Full forward pass: `x_raw` holds the noisy RI values, `x_comp` their compressed form.
    pub fn progressive_forward(&self, s: &mut Session, x_raw: Var, x_comp: Var) -> SeOutputs {
        let mut out = SeOutputs {
            outputs: vec![None; self.cfg.k + 1],
        };
        let stream = self.encode(s, x_raw, x_comp);
        self.run_blocks(s, stream, 0, self.cfg.k, &mut out);
        out
    }

    pub fn phase_encoder(&self) -> Option<&PhaseEncoder> {
        self.phase_encoder.as_ref()
    }

    pub fn groups(&self) -> Vec<String> {
        let mut g = Vec::new();
        if self.phase_encoder.is_some() {
            g.push("phase_encoder".to_string());
        }
        g.push("encoder".to_string());
        g.extend((0..=self.cfg.k).map(se_block_group));
        g.extend(
            (1..=self.cfg.k + 1)
                .filter(|k| self.decoders[k - 1].is_some())
                .map(decoder_group),
        );
        g
    }
}
