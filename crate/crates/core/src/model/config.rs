use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Realization of each SE block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    /// Frequency recurrence, time recurrence and full-utterance multi-head self-attention.
    GridNet,
    /// Frequency and time recurrences only; a light stand-in for fast runs.
    Recurrent,
}

/// Spectrogram the pitch estimator reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PitchInput {
    /// The last intermediate estimate `S̃_K`.
    #[default]
    Intermediate,
    /// The noisy input `X`.
    Noisy,
    /// The coarse final estimate `S̃_{K+1}`.
    Coarse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchEstimatorConfig {
    pub conv_channels: Vec<usize>,
    pub conv_kernel: (usize, usize),
    pub conv_stride: (usize, usize),
    pub rnn_hidden: Vec<usize>,
    /// N+1 posterior columns (N voiced bins plus unvoiced).
    pub out_dim: usize,
}

impl Default for PitchEstimatorConfig {
    fn default() -> Self {
        Self {
            conv_channels: vec![16, 32, 64, 128, 256],
            conv_kernel: (3, 3),
            conv_stride: (1, 2),
            rnn_hidden: vec![512, 256, 128],
            out_dim: 226,
        }
    }
}

impl PitchEstimatorConfig {
    pub fn toy() -> Self {
        Self {
            conv_channels: vec![8, 16],
            rnn_hidden: vec![64],
            ..Self::default()
        }
    }

    /// Frequency bins left after the strided convolution stack.
    pub fn reduced_freqs(&self, n_freqs: usize) -> usize {
        let (k, s) = (self.conv_kernel.1, self.conv_stride.1);
        self.conv_channels
            .iter()
            .fold(n_freqs, |f, _| (f + 2 * (k / 2) - k) / s + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of intermediate targets; the network has K+1 SE blocks and K+1 decoders.
    pub k: usize,
    pub pe_channels: usize,
    pub embed_dim: usize,
    pub rnn_hidden: usize,
    pub attn_heads: usize,
    /// Per-head query/key channels are `ceil(attn_qk_dim / F)`.
    pub attn_qk_dim: usize,
    pub unfold_kernel: usize,
    pub unfold_stride: usize,
    pub enc_kernel: (usize, usize),
    pub enc_stride: (usize, usize),
    pub block: BlockKind,
    /// Power-law compression of the decoder output domain.
    pub gamma: f64,
    pub n_freqs: usize,
    pub no_pe: bool,
    pub no_pl: bool,
    pub no_hc: bool,
    #[serde(default)]
    pub pitch_input: PitchInput,
    pub pitch: PitchEstimatorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k: 4,
            pe_channels: 4,
            embed_dim: 32,
            rnn_hidden: 100,
            attn_heads: 4,
            attn_qk_dim: 512,
            unfold_kernel: 4,
            unfold_stride: 1,
            enc_kernel: (3, 3),
            enc_stride: (1, 1),
            block: BlockKind::GridNet,
            gamma: 1.0 / 3.0,
            n_freqs: 257,
            no_pe: false,
            no_pl: false,
            no_hc: false,
            pitch_input: PitchInput::Intermediate,
            pitch: PitchEstimatorConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Small configuration for tests and desk-scale runs.
    pub fn toy() -> Self {
        Self {
            k: 2,
            embed_dim: 8,
            rnn_hidden: 16,
            attn_heads: 2,
            pitch: PitchEstimatorConfig::toy(),
            ..Self::default()
        }
    }

    pub fn qk_channels(&self) -> usize {
        self.attn_qk_dim.div_ceil(self.n_freqs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k < 1 {
            return bad("K must be at least 1".into());
        }
        let dims = [
            self.pe_channels,
            self.embed_dim,
            self.rnn_hidden,
            self.attn_heads,
            self.attn_qk_dim,
            self.unfold_kernel,
            self.n_freqs,
        ];
        if dims.contains(&0) {
            return bad("all model dimensions must be positive".into());
        }
        if !self.embed_dim.is_multiple_of(self.attn_heads) {
            return bad(format!(
                "embed_dim {} is not divisible by attn_heads {}",
                self.embed_dim, self.attn_heads
            ));
        }
        if self.unfold_stride != 1 || self.enc_stride != (1, 1) {
            return bad("only unit unfold and encoder strides are supported".into());
        }
        if self.enc_kernel.0.is_multiple_of(2) || self.enc_kernel.1.is_multiple_of(2) {
            return bad("encoder kernel sizes must be odd".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        let p = &self.pitch;
        if p.conv_channels.is_empty()
            || p.rnn_hidden.is_empty()
            || p.conv_channels.contains(&0)
            || p.rnn_hidden.contains(&0)
            || p.out_dim < 2
        {
            return bad("pitch estimator dimensions must be positive".into());
        }
        Ok(())
    }
}
