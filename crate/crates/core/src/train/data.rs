//! Training items, random crops and batch assembly.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::LossTarget;
use crate::model::specs_to_tensor;
use crate::nn::Tensor;
use crate::signal::{stft, ComplexSpectrogram, StftConfig, Waveform};
use crate::synth::dataset::{
    read_index, synthesize_item, target_dir, Split, SynthesisConfig, SynthesizedItem,
};
use crate::synth::labels::read_labels;
use crate::synth::toy::{noise, vowel_utterance, NoiseKind, VowelConfig};
use crate::synth::PitchBins;
use crate::wav::read_wav;

/// One mixture with its ladder targets `s_1..s_{K+1}` and pitch labels.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub id: String,
    pub snr_db: f64,
    pub mixture: Waveform,
    pub targets: Vec<Waveform>,
    pub labels: Array2<f32>,
}

impl TrainItem {
    pub fn from_synthesized(id: impl Into<String>, item: &SynthesizedItem) -> Self {
        Self {
            id: id.into(),
            snr_db: item.snr_db,
            mixture: item.mixture.clone(),
            targets: item
                .targets
                .targets
                .iter()
                .map(|t| t.waveform.clone())
                .collect(),
            labels: item.labels.data.clone(),
        }
    }

    pub fn clean(&self) -> &Waveform {
        self.targets.last().expect("clean target")
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainSet {
    pub items: Vec<TrainItem>,
}

impl TrainSet {
    /// Loads every item of `split` from a synthesized dataset directory.
    pub fn load(dir: &Path, split: Split, k: usize, bins: &PitchBins) -> Result<Self> {
        let mut items = Vec::new();
        for e in read_index(dir)?.into_iter().filter(|e| e.split == split) {
            let name = format!("{}.wav", e.id);
            let mut targets = (1..=k)
                .map(|j| read_wav(target_dir(dir, j).join(&name)))
                .collect::<Result<Vec<_>>>()?;
            targets.push(read_wav(dir.join("clean").join(&name))?);
            let labels =
                read_labels(dir.join("pitch").join(format!("{}.labels", e.id)), bins)?.data;
            items.push(TrainItem {
                id: e.id,
                snr_db: e.snr_db,
                mixture: read_wav(dir.join("mix").join(&name))?,
                targets,
                labels,
            });
        }
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// A prepared batch of equal-length crops.
#[derive(Debug, Clone)]
pub struct Batch {
    pub mixtures: Vec<Waveform>,
    pub spectra: Vec<ComplexSpectrogram>,
    /// Targets per progressive output: `targets[k][b]`.
    pub targets: Vec<Vec<LossTarget>>,
    pub labels: Vec<Array2<f32>>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.mixtures.len()
    }

    pub fn frames(&self) -> usize {
        self.spectra[0].frames()
    }

    /// Raw and compressed RI inputs `[B, T, F, 2]`.
    pub fn inputs(&self, gamma: f64) -> Result<(Tensor, Tensor)> {
        let refs: Vec<&ComplexSpectrogram> = self.spectra.iter().collect();
        Ok((
            specs_to_tensor(&refs, None)?,
            specs_to_tensor(&refs, Some(gamma))?,
        ))
    }

    /// Labels flattened in `[B, T, N+1]` order.
    pub fn flat_labels(&self) -> Vec<f32> {
        self.labels.iter().flat_map(|l| l.iter().copied()).collect()
    }
}

fn crop(w: &Waveform, offset: usize, len: usize) -> Waveform {
    Waveform {
        samples: w.samples[offset..offset + len].to_vec(),
        sample_rate_hz: w.sample_rate_hz,
    }
}

/// Label rows for a crop starting at a hop-aligned `offset`; missing rows are unvoiced.
fn crop_labels(labels: &Array2<f32>, first: usize, frames: usize) -> Array2<f32> {
    let n = labels.ncols();
    let mut out = Array2::zeros((frames, n));
    for t in 0..frames {
        if first + t < labels.nrows() {
            out.row_mut(t).assign(&labels.row(first + t));
        } else {
            out[[t, n - 1]] = 1.0;
        }
    }
    out
}

/// Builds a batch from `(item index, sample offset)` pairs cropped to `len` samples.
pub fn make_batch(
    set: &TrainSet,
    picks: &[(usize, usize)],
    len: usize,
    cfg: &StftConfig,
    gamma: f64,
) -> Result<Batch> {
    let k1 = set
        .items
        .first()
        .map(|i| i.targets.len())
        .ok_or_else(|| Error::InvalidConfig("empty training set".into()))?;
    let mut b = Batch {
        mixtures: Vec::new(),
        spectra: Vec::new(),
        targets: vec![Vec::new(); k1],
        labels: Vec::new(),
    };
    for &(i, off) in picks {
        let item = &set.items[i];
        if off + len > item.mixture.len() {
            return Err(Error::LengthMismatch(off + len, item.mixture.len()));
        }
        let mix = crop(&item.mixture, off, len);
        let spec = stft(&mix, cfg)?;
        for (k, t) in item.targets.iter().enumerate() {
            let w = crop(t, off, len);
            b.targets[k].push(LossTarget::new(&stft(&w, cfg)?, &w, gamma));
        }
        b.labels.push(crop_labels(
            &item.labels,
            off / cfg.hop_samples,
            spec.frames(),
        ));
        b.spectra.push(spec);
        b.mixtures.push(mix);
    }
    Ok(b)
}

/// Draws `batch_size` items with replacement and hop-aligned crops of at most `crop_samples`.
pub fn sample_batch(
    set: &TrainSet,
    batch_size: usize,
    crop_samples: usize,
    cfg: &StftConfig,
    gamma: f64,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if set.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    let idx: Vec<usize> = (0..batch_size)
        .map(|_| rng.random_range(0..set.len()))
        .collect();
    let shortest = idx
        .iter()
        .map(|&i| set.items[i].mixture.len())
        .min()
        .unwrap_or(0);
    let len = crop_samples.min(shortest);
    if len < cfg.win_len_samples {
        return Err(Error::TooShort {
            len,
            win: cfg.win_len_samples,
        });
    }
    let hop = cfg.hop_samples;
    let picks: Vec<(usize, usize)> = idx
        .iter()
        .map(|&i| {
            let slack = (set.items[i].mixture.len() - len) / hop;
            (i, rng.random_range(0..=slack) * hop)
        })
        .collect();
    make_batch(set, &picks, len, cfg, gamma)
}

/// In-memory corpus of vowel utterances in alternating white and pink noise, with input SNRs
/// drawn uniformly from `snr_db`.
pub fn toy_set(
    n: usize,
    duration_s: f64,
    snr_db: (f64, f64),
    seed: u64,
    cfg: &SynthesisConfig,
) -> Result<TrainSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vowel = VowelConfig {
        duration_s,
        ..VowelConfig::default()
    };
    let noise_len = ((duration_s + 1.0) * cfg.stft.sample_rate_hz as f64) as usize;
    let items = (0..n)
        .map(|i| {
            let utt = vowel_utterance(&vowel, seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
            let kind = if i % 2 == 0 {
                NoiseKind::White
            } else {
                NoiseKind::Pink
            };
            let nz = noise(
                kind,
                noise_len,
                seed.wrapping_mul(7919).wrapping_add(i as u64),
            )
            .scaled(0.25);
            let snr = rng.random_range(snr_db.0..=snr_db.1);
            let item = synthesize_item(&utt.wave, &nz, None, snr, rng.random(), cfg)?;
            Ok(TrainItem::from_synthesized(format!("toy{i:05}"), &item))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainSet { items })
}

/// Labels of a whole item fitted to `frames` rows.
pub fn item_labels(item: &TrainItem, frames: usize) -> Array2<f32> {
    crop_labels(&item.labels, 0, frames)
}
