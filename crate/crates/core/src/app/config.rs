//! Flat run configuration covering every hyperparameter; defaults are the full-scale setup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricPlugin;
use crate::losses::LossWeights;
use crate::model::{BlockKind, ModelConfig, PitchEstimatorConfig, PitchInput};
use crate::nn::optim::AdamConfig;
use crate::signal::{StftConfig, WindowKind};
use crate::synth::dataset::SynthesisConfig;
use crate::synth::PitchBins;
use crate::train::{LrSchedule, Stage, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sample_rate_hz: u32,
    pub win_len_samples: usize,
    pub hop_samples: usize,
    pub dft_len: usize,

    pub k: usize,
    pub delta_snr_db: f64,
    pub gamma: f64,
    pub pitch_bins: usize,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,

    pub block: BlockKind,
    pub pe_channels: usize,
    pub embed_dim: usize,
    pub rnn_hidden: usize,
    pub attn_heads: usize,
    pub attn_qk_dim: usize,
    pub unfold_kernel: usize,
    pub enc_kernel: [usize; 2],
    pub pitch_input: PitchInput,
    pub pitch_conv_channels: Vec<usize>,
    pub pitch_conv_kernel: [usize; 2],
    pub pitch_conv_stride: [usize; 2],
    pub pitch_rnn_hidden: Vec<usize>,

    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub eps_log: f64,

    pub batch_size: usize,
    pub crop_s: f64,
    pub warmup_steps: u64,
    pub lr_scale: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip: f64,
    pub steps_per_epoch: u64,
    pub epochs_pl: u64,
    pub epochs_pitch: u64,
    pub epochs_hc: u64,
    pub hc_teacher_forcing: f64,

    pub seed: u64,
    pub deterministic: bool,
    pub no_pe: bool,
    pub no_hc: bool,
    pub no_pl: bool,

    /// External metrics as `NAME=command template` entries.
    pub metric_plugins: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let stft = StftConfig::default();
        let bins = PitchBins::default();
        let w = LossWeights::default();
        let t = TrainConfig::default();
        Self {
            sample_rate_hz: stft.sample_rate_hz,
            win_len_samples: stft.win_len_samples,
            hop_samples: stft.hop_samples,
            dft_len: stft.dft_len,
            k: m.k,
            delta_snr_db: 5.0,
            gamma: m.gamma,
            pitch_bins: bins.n,
            f0_min_hz: bins.f_min,
            f0_max_hz: bins.f_max,
            block: m.block,
            pe_channels: m.pe_channels,
            embed_dim: m.embed_dim,
            rnn_hidden: m.rnn_hidden,
            attn_heads: m.attn_heads,
            attn_qk_dim: m.attn_qk_dim,
            unfold_kernel: m.unfold_kernel,
            enc_kernel: [m.enc_kernel.0, m.enc_kernel.1],
            pitch_input: m.pitch_input,
            pitch_conv_channels: m.pitch.conv_channels.clone(),
            pitch_conv_kernel: [m.pitch.conv_kernel.0, m.pitch.conv_kernel.1],
            pitch_conv_stride: [m.pitch.conv_stride.0, m.pitch.conv_stride.1],
            pitch_rnn_hidden: m.pitch.rnn_hidden.clone(),
            alpha: w.alpha,
            beta: w.beta,
            lambda: w.lambda,
            eps_log: w.eps_log,
            batch_size: t.batch_size,
            crop_s: 8.0,
            warmup_steps: t.schedule.warmup_steps,
            lr_scale: t.schedule.scale,
            adam_beta1: t.adam.beta1,
            adam_beta2: t.adam.beta2,
            adam_eps: t.adam.eps,
            grad_clip: t.grad_clip,
            steps_per_epoch: t.steps_per_epoch,
            epochs_pl: 150,
            epochs_pitch: 150,
            epochs_hc: 150,
            hc_teacher_forcing: t.hc_teacher_forcing,
            seed: 0,
            deterministic: false,
            no_pe: false,
            no_hc: false,
            no_pl: false,
            metric_plugins: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Desk-scale preset: the small model with a short warmup and a few hundred steps per stage.
    /// The temporal loss weight is lowered because at this scale the full-weight log-ratio term
    /// drives the final output to silence.
    pub fn toy() -> Self {
        let m = ModelConfig::toy();
        Self {
            k: m.k,
            embed_dim: m.embed_dim,
            rnn_hidden: m.rnn_hidden,
            attn_heads: m.attn_heads,
            pitch_conv_channels: m.pitch.conv_channels.clone(),
            pitch_rnn_hidden: m.pitch.rnn_hidden.clone(),
            batch_size: 2,
            crop_s: 0.5,
            lambda: 0.1,
            warmup_steps: 50,
            lr_scale: 1000.0,
            steps_per_epoch: 100,
            epochs_pl: 4,
            epochs_pitch: 15,
            epochs_hc: 1,
            ..Self::default()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.as_ref().display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig {
            sample_rate_hz: self.sample_rate_hz,
            win_len_samples: self.win_len_samples,
            hop_samples: self.hop_samples,
            dft_len: self.dft_len,
            window: WindowKind::PeriodicHann,
        }
    }

    pub fn bins(&self) -> Result<PitchBins> {
        PitchBins::new(self.pitch_bins, self.f0_min_hz, self.f0_max_hz)
    }

    pub fn synthesis(&self) -> Result<SynthesisConfig> {
        Ok(SynthesisConfig {
            stft: self.stft(),
            k: self.k,
            delta_snr_db: self.delta_snr_db,
            bins: self.bins()?,
        })
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            k: self.k,
            pe_channels: self.pe_channels,
            embed_dim: self.embed_dim,
            rnn_hidden: self.rnn_hidden,
            attn_heads: self.attn_heads,
            attn_qk_dim: self.attn_qk_dim,
            unfold_kernel: self.unfold_kernel,
            unfold_stride: 1,
            enc_kernel: (self.enc_kernel[0], self.enc_kernel[1]),
            enc_stride: (1, 1),
            block: self.block,
            gamma: self.gamma,
            n_freqs: self.stft().n_freqs(),
            no_pe: self.no_pe,
            no_pl: self.no_pl,
            no_hc: self.no_hc,
            pitch_input: self.pitch_input,
            pitch: PitchEstimatorConfig {
                conv_channels: self.pitch_conv_channels.clone(),
                conv_kernel: (self.pitch_conv_kernel[0], self.pitch_conv_kernel[1]),
                conv_stride: (self.pitch_conv_stride[0], self.pitch_conv_stride[1]),
                rnn_hidden: self.pitch_rnn_hidden.clone(),
                out_dim: self.pitch_bins + 1,
            },
        }
    }

    pub fn loss(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            gamma: self.gamma,
            eps_log: self.eps_log,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            crop_samples: (self.crop_s * self.sample_rate_hz as f64).round() as usize,
            schedule: LrSchedule {
                warmup_steps: self.warmup_steps,
                scale: self.lr_scale,
            },
            adam: AdamConfig {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                eps: self.adam_eps,
            },
            grad_clip: self.grad_clip,
            loss: self.loss(),
            steps_per_epoch: self.steps_per_epoch,
            hc_teacher_forcing: self.hc_teacher_forcing,
            seed: self.seed,
        }
    }

    pub fn epochs(&self, stage: Stage) -> u64 {
        match stage {
            Stage::Pl => self.epochs_pl,
            Stage::Pitch => self.epochs_pitch,
            Stage::Hc => self.epochs_hc,
        }
    }

    pub fn plugins(&self) -> Result<Vec<MetricPlugin>> {
        self.metric_plugins
            .iter()
            .map(|e| match e.split_once('=') {
                Some((name, cmd)) if !name.trim().is_empty() => Ok(MetricPlugin {
                    name: name.trim().to_string(),
                    command: cmd.trim().to_string(),
                }),
                _ => Err(Error::InvalidConfig(format!(
                    "metric plugin `{e}` is not NAME=command"
                ))),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.stft().validate()?;
        self.bins()?;
        self.model().validate()?;
        self.plugins()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size == 0 || self.steps_per_epoch == 0 || !(self.crop_s > 0.0) {
            return bad("batch size, steps per epoch and crop length must be positive");
        }
        if self.warmup_steps == 0 || !(self.lr_scale > 0.0) {
            return bad("warmup steps and learning-rate scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.hc_teacher_forcing) {
            return bad("hc_teacher_forcing must lie in [0, 1]");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.lambda >= 0.0 && self.eps_log > 0.0) {
            return bad("loss weights must be non-negative and eps_log positive");
        }
        Ok(())
    }
}
