//! Stage-wise training loop: batch sampling, losses, clipping, Adam and checkpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::specs_to_tensor;
use crate::nn::optim::{clip_global_norm, Adam, AdamConfig};
use crate::nn::{ParamId, Session, Tensor, Var};
use crate::pitch::{apply_pitch_filter, decode_bins, decode_pitch, CombFilterSpec, PitchPosterior};
use crate::synth::labels::argmax_rows;
use crate::system::Enhancer;
use crate::train::checkpoint::Checkpoint;
use crate::train::data::{sample_batch, Batch, TrainSet};
use crate::train::schedule::LrSchedule;
use crate::train::stage::{trainable_mask, Stage, StageConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub crop_samples: usize,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub grad_clip: f64,
    pub loss: LossWeights,
    pub steps_per_epoch: u64,
    /// Fraction of harmonic-compensation steps that filter with the label pitch before
    /// switching to the estimator's decoded pitch.
    pub hc_teacher_forcing: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            crop_samples: 8 * 16_000,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            grad_clip: 5.0,
            loss: LossWeights::default(),
            steps_per_epoch: 1250,
            hc_teacher_forcing: 0.8,
            seed: 0,
        }
    }
}

/// Position within the staged schedule; everything needed to resume besides weights and moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub stage: Option<StageConfig>,
    /// Optimizer steps taken in the current stage.
    pub step: u64,
    pub epoch: u64,
    pub seed: u64,
    pub completed: BTreeSet<Stage>,
}

impl TrainState {
    pub fn fresh(seed: u64) -> Self {
        Self {
            stage: None,
            step: 0,
            epoch: 0,
            seed,
            completed: BTreeSet::new(),
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: Stage,
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub components: BTreeMap<String, f64>,
}

pub struct Trainer {
    pub model: Enhancer,
    pub cfg: TrainConfig,
    pub stage: StageConfig,
    pub state: TrainState,
    pub adam: Adam,
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl Trainer {
    /// Starts `stage` from scratch; prerequisite stages must be recorded in `completed`.
    pub fn new(
        model: Enhancer,
        cfg: TrainConfig,
        stage: Stage,
        epochs: u64,
        completed: BTreeSet<Stage>,
    ) -> Result<Self> {
        if let Some(missing) = stage
            .prerequisites()
            .iter()
            .find(|p| !completed.contains(p))
        {
            return Err(Error::MissingPrerequisite(format!(
                "stage {stage} needs a checkpoint that completed stage {missing}"
            )));
        }
        let stage_cfg = StageConfig::new(stage, &model, epochs, cfg.steps_per_epoch)?;
        trainable_mask(&stage_cfg, &model.groups())?;
        let state = TrainState {
            stage: Some(stage_cfg.clone()),
            step: 0,
            epoch: 0,
            seed: cfg.seed,
            completed,
        };
        Ok(Self {
            adam: Adam::new(cfg.adam),
            model,
            cfg,
            stage: stage_cfg,
            state,
        })
    }

    /// Continues from a checkpoint. A checkpoint taken mid-stage resumes that stage; a finished
    /// one starts `stage` fresh on its weights.
    pub fn from_checkpoint(
        ckpt: Checkpoint,
        cfg: TrainConfig,
        stage: Stage,
        epochs: u64,
    ) -> Result<Self> {
        let Checkpoint { model, state, adam } = ckpt;
        match (&state.stage, adam) {
            (Some(sc), Some(adam)) if sc.stage == stage && !state.completed.contains(&stage) => {
                let stage_cfg = StageConfig {
                    epochs,
                    ..sc.clone()
                };
                let state = TrainState {
                    stage: Some(stage_cfg.clone()),
                    ..state
                };
                Ok(Self {
                    model,
                    cfg,
                    stage: stage_cfg,
                    state,
                    adam,
                })
            }
            _ => Self::new(model, cfg, stage, epochs, state.completed),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            state: self.state.clone(),
            adam: Some(self.adam.clone()),
        }
    }

    pub fn learnable(&self) -> &BTreeSet<String> {
        &self.stage.learnable_groups
    }

    pub fn is_finished(&self) -> bool {
        self.state.step >= self.stage.total_steps()
    }

    /// Batch for the current step, drawn from a stream keyed by (seed, stage, step).
    pub fn next_batch(&self, set: &TrainSet) -> Result<Batch> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.state.seed);
        rng.set_stream((self.stage.stage.index() << 48) | self.state.step);
        sample_batch(
            set,
            self.cfg.batch_size,
            self.cfg.crop_samples,
            &self.model.stft,
            self.model.cfg.gamma,
            &mut rng,
        )
    }

    pub fn step(&mut self, set: &TrainSet) -> Result<StepRecord> {
        let batch = self.next_batch(set)?;
        self.step_on(&batch)
    }

    /// One optimizer step on a given batch.
    pub fn step_on(&mut self, batch: &Batch) -> Result<StepRecord> {
        let lr = self.cfg.schedule.at(self.state.step + 1)?;
        let (loss, components, mut grads, buffers) = {
            let mut s = Session::new(&self.model.store, self.stage.learnable_groups.clone(), true);
            let mut components = BTreeMap::new();
            let loss = match self.stage.stage {
                Stage::Pl => self.pl_loss(&mut s, batch, &mut components)?,
                Stage::Pitch => self.pitch_loss(&mut s, batch, &mut components)?,
                Stage::Hc => self.hc_loss(&mut s, batch, &mut components)?,
            };
            let value = check_finite(s.graph.value(loss).item() as f64, "loss")?;
            let g = s.graph.backward(loss);
            let grads: Vec<(ParamId, Tensor)> = g.params().map(|(id, t)| (id, t.clone())).collect();
            (value, components, grads, s.take_buffer_updates())
        };
        let grad_norm = check_finite(clip_global_norm(&mut grads, self.cfg.grad_clip), "gradient")?;
        self.adam.step(&mut self.model.store, &grads, lr);
        for (id, v) in buffers {
            self.model.store.get_mut(id).value = v;
        }
        self.state.step += 1;
        self.state.epoch = self.state.step / self.stage.steps_per_epoch.max(1);
        Ok(StepRecord {
            stage: self.stage.stage,
            step: self.state.step,
            lr,
            loss,
            grad_norm,
            components,
        })
    }

    fn pl_loss(
        &self,
        s: &mut Session,
        batch: &Batch,
        comps: &mut BTreeMap<String, f64>,
    ) -> Result<Var> {
        let (raw, comp) = batch.inputs(self.model.cfg.gamma)?;
        let outs = self.model.forward_batch(s, raw, comp);
        let mut total: Option<Var> = None;
        for (k, o) in outs.iter().enumerate() {
            let Some(v) = o else { continue };
            let (l, parts) =
                s.graph
                    .ovrl_loss(*v, &batch.targets[k], &self.cfg.loss, &self.model.stft)?;
            let n = parts.len() as f64;
            comps.insert(format!("ovrl_{}", k + 1), s.graph.value(l).item() as f64);
            comps.insert(
                format!("freq_{}", k + 1),
                parts.iter().map(|p| p.freq).sum::<f64>() / n,
            );
            comps.insert(
                format!("temp_{}", k + 1),
                parts.iter().map(|p| p.temp).sum::<f64>() / n,
            );
            total = Some(match total {
                Some(t) => s.graph.add(t, l),
                None => l,
            });
        }
        Ok(total.expect("the final decoder always exists"))
    }

    fn pitch_loss(
        &self,
        s: &mut Session,
        batch: &Batch,
        comps: &mut BTreeMap<String, f64>,
    ) -> Result<Var> {
        let (raw, comp) = batch.inputs(self.model.cfg.gamma)?;
        let feat = match self.model.pitch_source() {
            Some(src) => {
                let outs = self.model.forward_until(s, raw, comp, src);
                s.graph
                    .value(outs[src].expect("pitch source output"))
                    .clone()
            }
            None => comp,
        };
        let p = self.model.posterior_batch(s, &feat)?;
        let loss = s.graph.bce_loss(p, &batch.flat_labels())?;
        comps.insert("bce".into(), s.graph.value(loss).item() as f64);
        Ok(loss)
    }

    /// Label pitch during teacher forcing, decoded estimator pitch afterwards.
    fn hc_pitch(
        &self,
        s: &mut Session,
        batch: &Batch,
        source: Var,
    ) -> Result<Vec<Vec<CombFilterSpec>>> {
        let forced = (self.state.step as f64)
            < self.cfg.hc_teacher_forcing * self.stage.total_steps() as f64;
        let m = &self.model;
        if forced {
            return Ok(batch
                .labels
                .iter()
                .map(|l| decode_bins(&argmax_rows(l), &m.bins, &m.stft))
                .collect());
        }
        let feat = s.graph.value(source).clone();
        let p = m.posterior_batch(s, &feat)?;
        let t = s.graph.value(p);
        let (frames, n) = (t.dim(1), t.dim(2));
        Ok(t.data()
            .chunks_exact(frames * n)
            .map(|c| {
                let post = PitchPosterior {
                    data: ndarray::Array2::from_shape_vec((frames, n), c.to_vec())
                        .expect("posterior shape"),
                };
                decode_pitch(&post, &m.bins, &m.stft)
            })
            .collect())
    }

    fn hc_loss(
        &self,
        s: &mut Session,
        batch: &Batch,
        comps: &mut BTreeMap<String, f64>,
    ) -> Result<Var> {
        let m = &self.model;
        let (raw, comp) = batch.inputs(m.cfg.gamma)?;
        let noisy = comp.clone();
        let outs = m.forward_batch(s, raw, comp);
        let coarse = outs[m.cfg.k].expect("final output");
        let source = match m.pitch_source() {
            Some(i) => outs[i].expect("pitch source output"),
            None => s.graph.constant(noisy),
        };
        let pitch = self.hc_pitch(s, batch, source)?;
        let filtered = batch
            .mixtures
            .iter()
            .zip(&pitch)
            .map(|(x, p)| apply_pitch_filter(x, p, &m.stft))
            .collect::<Result<Vec<_>>>()?;
        let f = s
            .graph
            .constant(specs_to_tensor(&filtered.iter().collect::<Vec<_>>(), None)?);
        let mask = m
            .mask
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("harmonic compensation disabled".into()))?;
        let (_, out) = mask.forward(s, coarse, f);
        let (l, parts) =
            s.graph
                .ovrl_loss(out, &batch.targets[m.cfg.k], &self.cfg.loss, &m.stft)?;
        let n = parts.len() as f64;
        comps.insert("hc".into(), s.graph.value(l).item() as f64);
        comps.insert("freq".into(), parts.iter().map(|p| p.freq).sum::<f64>() / n);
        comps.insert("temp".into(), parts.iter().map(|p| p.temp).sum::<f64>() / n);
        Ok(l)
    }

    /// Runs the remaining steps of the stage, logging each step as one JSON line and writing a
    /// checkpoint at every epoch boundary (`<stage>-epochNNNN.ckpt` plus `<stage>.ckpt`).
    pub fn run(
        &mut self,
        set: &TrainSet,
        ckpt_dir: Option<&Path>,
        mut log: Option<&mut dyn Write>,
    ) -> Result<Vec<StepRecord>> {
        let mut records = Vec::new();
        while !self.is_finished() {
            let rec = self.step(set)?;
            if let Some(w) = log.as_deref_mut() {
                writeln!(w, "{}", serde_json::to_string(&rec)?)?;
            }
            records.push(rec);
            if self.is_finished() {
                self.state.completed.insert(self.stage.stage);
            }
            let boundary = self
                .state
                .step
                .is_multiple_of(self.stage.steps_per_epoch.max(1));
            if let (Some(dir), true) = (ckpt_dir, boundary || self.is_finished()) {
                let ckpt = self.checkpoint();
                let name = self.stage.stage.name();
                ckpt.save(dir.join(format!("{name}-epoch{:04}.ckpt", self.state.epoch)))?;
                ckpt.save(dir.join(format!("{name}.ckpt")))?;
            }
        }
        self.state.completed.insert(self.stage.stage);
        Ok(records)
    }
}
