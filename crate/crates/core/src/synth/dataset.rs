//! Manifest-driven synthesis of noisy/clean pairs with SNR ladders and pitch labels.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{StftConfig, Waveform};
use crate::synth::f0::extract_f0;
use crate::synth::labels::{f0_to_label_matrix, write_labels, PitchBins, PitchLabelMatrix};
use crate::synth::ladder::{make_progressive_targets, ProgressiveTargetSet};
use crate::synth::mixing::{crop_noise, mix_with_crop};
use crate::synth::rir::{early_reflection_target, RoomImpulseResponse};
use crate::synth::toy::{noise, vowel_utterance, NoiseKind, VowelConfig};
use crate::wav::{read_wav, write_wav};

pub const TRAIN_SNR_RANGE: (f64, f64) = (-15.0, 0.0);
pub const TEST_SNR_RANGE: (f64, f64) = (-15.0, 15.0);
const PEAK_LIMIT: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn snr_range(&self) -> (f64, f64) {
        match self {
            Split::Train => TRAIN_SNR_RANGE,
            Split::Test => TEST_SNR_RANGE,
        }
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub clean_path: String,
    pub noise_path: String,
    /// A WAV file, or `synthetic:<t60 seconds>` for the generated decay model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rir_path: Option<String>,
    pub snr_db: f64,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub clean_id: String,
    pub noise_id: String,
    pub rir_id: Option<String>,
    pub snr_db_target: f64,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn validate(&self, split: Split) -> Result<()> {
        let (lo, hi) = split.snr_range();
        if !(lo..=hi).contains(&self.snr_db_target) {
            return Err(Error::InvalidConfig(format!(
                "{:?} SNR {} dB outside [{lo}, {hi}]",
                split, self.snr_db_target
            )));
        }
        Ok(())
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format("manifest", format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct SynthesisConfig {
    pub stft: StftConfig,
    pub k: usize,
    pub delta_snr_db: f64,
    pub bins: PitchBins,
}

/// Everything derived from one mixture, jointly scaled below the clipping limit.
#[derive(Debug, Clone)]
pub struct SynthesizedItem {
    pub mixture: Waveform,
    pub targets: ProgressiveTargetSet,
    pub labels: PitchLabelMatrix,
    pub snr_db: f64,
}

pub fn synthesize_item(
    dry: &Waveform,
    noise_src: &Waveform,
    rir: Option<&RoomImpulseResponse>,
    snr_db: f64,
    seed: u64,
    cfg: &SynthesisConfig,
) -> Result<SynthesizedItem> {
    let (reverberant, target) = match rir {
        Some(h) => early_reflection_target(dry, h),
        None => (dry.clone(), dry.clone()),
    };
    let crop = crop_noise(noise_src, dry.len(), seed)?;
    let (mixture, _) = mix_with_crop(&reverberant, &crop.noise, snr_db)?;
    let ladder = make_progressive_targets(
        &target,
        noise_src,
        snr_db,
        cfg.k,
        cfg.delta_snr_db,
        seed,
        &cfg.stft,
    )?;
    let peak = ladder
        .targets
        .iter()
        .map(|t| t.waveform.peak())
        .fold(mixture.peak(), f64::max);
    let gain = if peak > PEAK_LIMIT {
        PEAK_LIMIT / peak
    } else {
        1.0
    };
    let (mixture, targets) = if gain < 1.0 {
        let mut scaled = ladder.clone();
        for t in scaled.targets.iter_mut() {
            t.waveform = t.waveform.scaled(gain);
            t.spectrogram.data.mapv_inplace(|c| c * gain);
        }
        scaled.noise_gains.iter_mut().for_each(|g| *g *= gain);
        (mixture.scaled(gain), scaled)
    } else {
        (mixture, ladder)
    };
    let labels = f0_to_label_matrix(&extract_f0(dry, &cfg.stft), &cfg.bins);
    Ok(SynthesizedItem {
        mixture,
        targets,
        labels,
        snr_db,
    })
}

/// One line of `index.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub split: Split,
    pub snr_db: f64,
    pub seed: u64,
    pub samples: usize,
    pub frames: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemError {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SynthReport {
    pub written: Vec<IndexEntry>,
    pub errors: Vec<ItemError>,
}

pub fn target_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("target_{k}"))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn load_rir(base: &Path, spec: &str, seed: u64) -> Result<RoomImpulseResponse> {
    if let Some(t60) = spec.strip_prefix("synthetic:") {
        let t60: f64 = t60
            .trim()
            .parse()
            .map_err(|_| Error::format("rir_path", spec.to_string()))?;
        return RoomImpulseResponse::synthetic(t60, 0.5, seed ^ 0x5151);
    }
    RoomImpulseResponse::new(read_wav(resolve(base, spec))?.samples)
}

/// Synthesizes every manifest record into `out`. Failed items are listed, the rest proceed.
///
/// Layout: `mix/`, `target_1..K/`, `clean/` (WAV) and `pitch/` (label matrices), plus
/// `index.jsonl` and `errors.jsonl`. Paths in the manifest are relative to `manifest_dir`.
pub fn write_dataset(
    records: &[ManifestRecord],
    manifest_dir: &Path,
    out: &Path,
    cfg: &SynthesisConfig,
) -> Result<SynthReport> {
    fs::create_dir_all(out)?;
    // Decode every distinct source once; failures are re-read per item to report the real error.
    let mut paths: Vec<PathBuf> = records
        .iter()
        .flat_map(|r| {
            [
                resolve(manifest_dir, &r.clean_path),
                resolve(manifest_dir, &r.noise_path),
            ]
        })
        .collect();
    paths.sort();
    paths.dedup();
    let cache: HashMap<PathBuf, Waveform> = paths
        .into_par_iter()
        .filter_map(|p| read_wav(&p).ok().map(|w| (p, w)))
        .collect();
    let load = |p: PathBuf| -> Result<Waveform> {
        match cache.get(&p) {
            Some(w) => Ok(w.clone()),
            None => read_wav(&p),
        }
    };
    let results: Vec<(String, Result<IndexEntry>)> = records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let id = rec.id.clone().unwrap_or_else(|| format!("{i:06}"));
            let result = (|| -> Result<IndexEntry> {
                let spec = MixtureSpec {
                    clean_id: rec.clean_path.clone(),
                    noise_id: rec.noise_path.clone(),
                    rir_id: rec.rir_path.clone(),
                    snr_db_target: rec.snr_db,
                    seed: rec.seed,
                };
                spec.validate(rec.split)?;
                let dry = load(resolve(manifest_dir, &rec.clean_path))?;
                let noise_src = load(resolve(manifest_dir, &rec.noise_path))?;
                let rir = rec
                    .rir_path
                    .as_deref()
                    .map(|r| load_rir(manifest_dir, r, rec.seed))
                    .transpose()?;
                let item =
                    synthesize_item(&dry, &noise_src, rir.as_ref(), rec.snr_db, rec.seed, cfg)?;
                write_wav(out.join("mix").join(format!("{id}.wav")), &item.mixture)?;
                for (k, t) in item.targets.targets[..cfg.k].iter().enumerate() {
                    write_wav(
                        target_dir(out, k + 1).join(format!("{id}.wav")),
                        &t.waveform,
                    )?;
                }
                write_wav(
                    out.join("clean").join(format!("{id}.wav")),
                    &item.targets.clean().waveform,
                )?;
                write_labels(out.join("pitch").join(format!("{id}.labels")), &item.labels)?;
                Ok(IndexEntry {
                    id: id.clone(),
                    split: rec.split,
                    snr_db: rec.snr_db,
                    seed: rec.seed,
                    samples: item.mixture.len(),
                    frames: item.labels.frames(),
                })
            })();
            (id, result)
        })
        .collect();
    let mut report = SynthReport::default();
    for (id, result) in results {
        match result {
            Ok(entry) => report.written.push(entry),
            Err(e) => report.errors.push(ItemError {
                id,
                error: e.to_string(),
            }),
        }
    }
    let mut index = fs::File::create(out.join("index.jsonl"))?;
    for e in &report.written {
        writeln!(index, "{}", serde_json::to_string(e)?)?;
    }
    let mut errors = fs::File::create(out.join("errors.jsonl"))?;
    for e in &report.errors {
        writeln!(errors, "{}", serde_json::to_string(e)?)?;
    }
    Ok(report)
}

pub fn read_index(dir: &Path) -> Result<Vec<IndexEntry>> {
    let path = dir.join("index.jsonl");
    let file = fs::File::open(&path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct ToyCorpusConfig {
    pub utterances: usize,
    pub duration_s: f64,
    pub train_fraction: f64,
    pub train_snr_db: (f64, f64),
    pub test_snr_db: (f64, f64),
    pub seed: u64,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        Self {
            utterances: 10,
            duration_s: 1.0,
            train_fraction: 0.8,
            train_snr_db: TRAIN_SNR_RANGE,
            test_snr_db: TEST_SNR_RANGE,
            seed: 0,
        }
    }
}

/// Writes vowel sources and noise files under `dir/sources` and returns a manifest for them.
pub fn write_toy_sources(dir: &Path, cfg: &ToyCorpusConfig) -> Result<Vec<ManifestRecord>> {
    use rand::{Rng, SeedableRng};
    let src = dir.join("sources");
    fs::create_dir_all(&src)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let vowel = VowelConfig {
        duration_s: cfg.duration_s,
        ..VowelConfig::default()
    };
    let n_train = (cfg.utterances as f64 * cfg.train_fraction).round() as usize;
    let noise_len = ((cfg.duration_s + 1.0) * 16000.0) as usize;
    let mut records = Vec::with_capacity(cfg.utterances);
    for i in 0..cfg.utterances {
        let utt = vowel_utterance(
            &vowel,
            cfg.seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
        );
        let kind = if i % 2 == 0 {
            NoiseKind::White
        } else {
            NoiseKind::Pink
        };
        let n = noise(
            kind,
            noise_len,
            cfg.seed.wrapping_mul(7919).wrapping_add(i as u64),
        )
        .scaled(0.25);
        let clean_name = format!("sources/clean_{i:05}.wav");
        let noise_name = format!("sources/noise_{i:05}.wav");
        write_wav(dir.join(&clean_name), &utt.wave)?;
        write_wav(dir.join(&noise_name), &n)?;
        let split = if i < n_train {
            Split::Train
        } else {
            Split::Test
        };
        let (lo, hi) = match split {
            Split::Train => cfg.train_snr_db,
            Split::Test => cfg.test_snr_db,
        };
        records.push(ManifestRecord {
            id: Some(format!("utt{i:05}")),
            clean_path: clean_name,
            noise_path: noise_name,
            rir_path: None,
            snr_db: (rng.random_range(lo..=hi) * 100.0).round() / 100.0,
            seed: rng.random(),
            split,
        });
    }
    Ok(records)
}
