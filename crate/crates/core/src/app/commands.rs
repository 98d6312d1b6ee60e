//! Command implementations shared by the binary and the tests.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::app::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    accuracy_from_bins, format_report, render_spectrogram, sdr, stoi, MetricPlugin, MetricReport,
    UtteranceMetrics,
};
use crate::pitch::comb::f0_rows;
use crate::pitch::CombFilterSpec;
use crate::signal::stft;
use crate::synth::dataset::{
    read_index, read_manifest, write_dataset, write_manifest, write_toy_sources, Split,
    SynthReport, ToyCorpusConfig,
};
use crate::synth::labels::read_labels;
use crate::synth::PitchBins;
use crate::system::Enhancer;
use crate::train::{Checkpoint, Stage, TrainSet, Trainer};
use crate::wav::{read_wav, write_wav};

/// Synthesizes a dataset from a manifest; paths inside it are relative to its directory.
pub fn synth(manifest: &Path, out: &Path, cfg: &RunConfig) -> Result<SynthReport> {
    let records = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    write_dataset(&records, base, out, &cfg.synthesis()?)
}

/// Writes `n` vowel sources with noise under `out/sources`, their manifest, and the dataset.
pub fn synth_toy(n: usize, out: &Path, cfg: &RunConfig) -> Result<SynthReport> {
    let toy = ToyCorpusConfig {
        utterances: n,
        seed: cfg.seed,
        ..ToyCorpusConfig::default()
    };
    let records = write_toy_sources(out, &toy)?;
    let manifest = out.join("manifest.jsonl");
    write_manifest(&manifest, &records)?;
    synth(&manifest, out, cfg)
}

/// Runs one training stage on the train split of `data` and returns the final checkpoint path.
///
/// PL starts from fresh weights unless `from` is given; later stages need a checkpoint that
/// completed their prerequisites. A checkpoint stopped inside the same stage resumes there.
pub fn train(
    data: &Path,
    stage: Stage,
    from: Option<&Path>,
    out_dir: &Path,
    cfg: &RunConfig,
    log_to_stderr: bool,
) -> Result<PathBuf> {
    let bins = cfg.bins()?;
    let tc = cfg.train();
    let epochs = cfg.epochs(stage);
    let mut trainer = match from {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.model.cfg != cfg.model() {
                return Err(Error::ConfigMismatch(format!(
                    "checkpoint {} was built with a different model configuration",
                    p.display()
                )));
            }
            Trainer::from_checkpoint(ck, tc, stage, epochs)?
        }
        None => Trainer::new(
            Enhancer::new(&cfg.model(), &cfg.stft(), &bins, cfg.seed)?,
            tc,
            stage,
            epochs,
            BTreeSet::new(),
        )?,
    };
    let set = TrainSet::load(data, Split::Train, cfg.k, &bins)?;
    fs::create_dir_all(out_dir)?;
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_dir.join(format!("{stage}.log.jsonl")))?;
    let records = trainer.run(&set, Some(out_dir), Some(&mut log))?;
    if log_to_stderr {
        if let (Some(first), Some(last)) = (records.first(), records.last()) {
            eprintln!(
                "{stage}: {} steps, loss {:.4} -> {:.4}",
                records.len(),
                first.loss,
                last.loss
            );
        }
    }
    Ok(out_dir.join(format!("{stage}.ckpt")))
}

/// Loads a checkpoint that is ready for inference: harmonic compensation trained, or PL done
/// for a model built without it.
pub fn load_for_inference(ckpt: &Path) -> Result<Enhancer> {
    let ck = Checkpoint::load(ckpt)?;
    let needed = if ck.model.cfg.no_hc {
        Stage::Pl
    } else {
        Stage::Hc
    };
    if !ck.state.completed.contains(&needed) {
        return Err(Error::ConfigMismatch(format!(
            "{} has not completed stage {needed}",
            ckpt.display()
        )));
    }
    Ok(ck.model)
}

fn write_f0(path: &Path, specs: &[CombFilterSpec], sample_rate_hz: u32, hop: usize) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "frame,time_s,f0_hz,voiced")?;
    for (t, hz, voiced) in f0_rows(specs, sample_rate_hz) {
        writeln!(
            f,
            "{t},{:.4},{hz:.3},{}",
            (t * hop) as f64 / sample_rate_hz as f64,
            voiced as u8
        )?;
    }
    Ok(())
}

/// Reads a dump written by [`write_f0`] back into per-frame f0 values (0 when unvoiced).
pub fn read_f0(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            let bad = || Error::format("f0 dump", format!("{}: `{l}`", path.display()));
            let hz: f64 = cols.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let voiced = *cols.get(3).ok_or_else(bad)? == "1";
            Ok(if voiced { hz } else { 0.0 })
        })
        .collect()
}

fn enhance_file(model: &Enhancer, input: &Path, output: &Path, dump: bool) -> Result<Vec<PathBuf>> {
    let x = read_wav(input)?;
    let e = model.enhance(&x)?;
    if !e.wave.is_finite() {
        return Err(Error::NonFinite(format!(
            "enhanced output for {}",
            input.display()
        )));
    }
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_wav(output, &e.wave)?;
    let mut written = vec![output.to_path_buf()];
    if dump {
        let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        let dir = output.parent().unwrap_or(Path::new("."));
        for (k, w) in e.intermediates.iter().enumerate() {
            if let Some(w) = w {
                let p = dir.join(format!("{stem}.s{}.wav", k + 1));
                write_wav(&p, w)?;
                written.push(p);
            }
        }
        if !e.pitch.is_empty() {
            let p = dir.join(format!("{stem}.f0.csv"));
            write_f0(
                &p,
                &e.pitch,
                model.stft.sample_rate_hz,
                model.stft.hop_samples,
            )?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Enhances one file, or every WAV file of a directory into an output directory.
pub fn enhance(input: &Path, ckpt: &Path, output: &Path, dump: bool) -> Result<Vec<PathBuf>> {
    let model = load_for_inference(ckpt)?;
    if !input.is_dir() {
        return enhance_file(&model, input, output, dump);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "wav"))
        .collect();
    files.sort();
    let mut written = Vec::new();
    for f in files {
        written.extend(enhance_file(
            &model,
            &f,
            &output.join(f.file_name().expect("file name")),
            dump,
        )?);
    }
    Ok(written)
}

/// Result of an evaluation run.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: MetricReport,
    /// Ids or files that could not be paired or scored, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn f0_bins(f0: &[f64], bins: &PitchBins) -> Vec<usize> {
    f0.iter()
        .map(|&hz| {
            if hz > 0.0 {
                bins.bin(hz)
            } else {
                bins.unvoiced()
            }
        })
        .collect()
}

fn score(
    dataset: &Path,
    enhanced: &Path,
    id: &str,
    snr: f64,
    bins: &PitchBins,
    plugins: &[MetricPlugin],
) -> Result<UtteranceMetrics> {
    let reference_path = dataset.join("clean").join(format!("{id}.wav"));
    let estimate_path = enhanced.join(format!("{id}.wav"));
    let reference = read_wav(&reference_path)?;
    let estimate = read_wav(&estimate_path)?;
    let pitch_path = enhanced.join(format!("{id}.f0.csv"));
    let labels_path = dataset.join("pitch").join(format!("{id}.labels"));
    let pitch_acc = if pitch_path.exists() && labels_path.exists() {
        let truth = read_labels(&labels_path, bins)?.argmax_rows();
        let mut est = f0_bins(&read_f0(&pitch_path)?, bins);
        est.resize(truth.len(), bins.unvoiced());
        Some(accuracy_from_bins(&est, &truth, bins.unvoiced()))
    } else {
        None
    };
    let mut extra = std::collections::BTreeMap::new();
    for p in plugins {
        extra.insert(p.name.clone(), p.run(&reference_path, &estimate_path)?);
    }
    Ok(UtteranceMetrics {
        id: id.to_string(),
        snr_in_db: snr,
        sdr_db: sdr(&estimate, &reference)?,
        stoi: stoi(&estimate, &reference)?,
        pitch_acc,
        extra,
    })
}

/// Scores `enhanced/{id}.wav` against `dataset/clean/{id}.wav` for every index entry of
/// `split` (all entries when `None`), writes the text report and returns it.
pub fn eval(
    enhanced: &Path,
    dataset: &Path,
    split: Option<Split>,
    out: &Path,
    system: &str,
    cfg: &RunConfig,
) -> Result<EvalOutcome> {
    let bins = cfg.bins()?;
    let plugins = cfg.plugins()?;
    let index = read_index(dataset)?;
    let known: BTreeSet<String> = index.iter().map(|e| e.id.clone()).collect();
    let entries: Vec<_> = index
        .into_iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .collect();
    let run = || -> Vec<(String, Result<UtteranceMetrics>)> {
        entries
            .par_iter()
            .map(|e| {
                (
                    e.id.clone(),
                    score(dataset, enhanced, &e.id, e.snr_db, &bins, &plugins),
                )
            })
            .collect()
    };
    let results = if cfg.deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(run)
    } else {
        run()
    };
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results {
        match r {
            Ok(m) => rows.push(m),
            Err(e) => skipped.push((id, e.to_string())),
        }
    }
    if enhanced.is_dir() {
        let mut extra: Vec<String> = fs::read_dir(enhanced)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .filter_map(|n| n.strip_suffix(".wav").map(str::to_string))
            .filter(|stem| !stem.contains('.') && !known.contains(stem))
            .collect();
        extra.sort();
        skipped.extend(
            extra
                .into_iter()
                .map(|id| (id, "no reference in the dataset index".to_string())),
        );
    }
    let outcome = EvalOutcome {
        report: MetricReport::new(system, rows),
        skipped,
    };
    write_report(out, std::slice::from_ref(&outcome))?;
    Ok(outcome)
}

fn write_report(out: &Path, outcomes: &[EvalOutcome]) -> Result<()> {
    let reports: Vec<MetricReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let mut text = format_report(&reports);
    let skipped: Vec<_> = outcomes
        .iter()
        .flat_map(|o| o.skipped.iter().map(move |s| (&o.report.system, s)))
        .collect();
    if !skipped.is_empty() {
        text.push_str("\nskipped\n");
        for (system, (id, why)) in skipped {
            text.push_str(&format!("{system}\t{id}\t{why}\n"));
        }
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, text)?;
    Ok(())
}

/// Ablation variants: the full system and one with each component removed.
pub const ABLATIONS: [&str; 4] = ["full", "-PE", "-HC", "-PL"];

fn ablation_config(cfg: &RunConfig, variant: &str) -> RunConfig {
    let mut c = cfg.clone();
    c.no_pe = variant == "-PE";
    c.no_hc = variant == "-HC";
    c.no_pl = variant == "-PL";
    c
}

/// Trains every variant of [`ABLATIONS`] on `data`, enhances the test split with each and
/// writes one combined report to `out/report.tsv`.
pub fn ablate(
    data: &Path,
    out: &Path,
    cfg: &RunConfig,
    log_to_stderr: bool,
) -> Result<Vec<EvalOutcome>> {
    let mixes = data.join("mix");
    let test: Vec<String> = read_index(data)?
        .into_iter()
        .filter(|e| e.split == Split::Test)
        .map(|e| e.id)
        .collect();
    let mut outcomes = Vec::new();
    for variant in ABLATIONS {
        let c = ablation_config(cfg, variant);
        let dir = out.join(variant.trim_start_matches('-'));
        let stages: &[Stage] = if c.no_hc { &[Stage::Pl] } else { &Stage::ALL };
        let mut ckpt: Option<PathBuf> = None;
        for &stage in stages {
            ckpt = Some(train(
                data,
                stage,
                ckpt.as_deref(),
                &dir.join("ckpt"),
                &c,
                log_to_stderr,
            )?);
        }
        let model = load_for_inference(&ckpt.expect("at least one stage"))?;
        let enhanced = dir.join("enhanced");
        for id in &test {
            let name = format!("{id}.wav");
            enhance_file(&model, &mixes.join(&name), &enhanced.join(&name), !c.no_hc)?;
        }
        outcomes.push(eval(
            &enhanced,
            data,
            Some(Split::Test),
            &dir.join("report.tsv"),
            variant,
            &c,
        )?);
    }
    write_report(&out.join("report.tsv"), &outcomes)?;
    Ok(outcomes)
}

/// Renders the spectrogram of a WAV file.
pub fn plot(input: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    render_spectrogram(&stft(&read_wav(input)?, &cfg.stft())?, out)
}

/// Process exit code for an error: 3 numeric failure, 1 usage or configuration, 2 data.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) => 3,
        Error::InvalidConfig(_) | Error::UnknownGroup(_) => 1,
        _ => 2,
    }
}
