//! End-to-end runs of the `spse` binary.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use spse::app::RunConfig;
use spse::eval::{sdr, SnrBucket};
use spse::signal::{stft, StftConfig};
use spse::synth::dataset::read_index;
use spse::synth::PitchBins;
use spse::system::Enhancer;
use spse::train::{Checkpoint, Stage, TrainState};
use spse::wav::read_wav;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn spse(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_spse"))
        .args(args)
        .output()
        .expect("spawn spse");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(args: &[&str]) -> Run {
    let r = spse(args);
    assert_eq!(r.code, 0, "spse {args:?} failed: {}", r.stderr);
    r
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Toy preset with two steps per stage.
fn tiny_config(dir: &Path) -> PathBuf {
    let cfg = RunConfig {
        steps_per_epoch: 2,
        epochs_pl: 1,
        epochs_pitch: 1,
        epochs_hc: 1,
        ..RunConfig::toy()
    };
    let path = dir.join("tiny.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    v.sort();
    v
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(spse(&["bogus"]).code, 1);
    assert_eq!(
        spse(&["train", "--stage", "nope", "--data", "x", "--out", "y"]).code,
        1
    );
    assert_eq!(spse(&["--help"]).code, 0);
    assert_eq!(spse(&["--version"]).code, 0);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(spse(&["--config", p(&bad), "config"]).code, 1);
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let r = spse(&[
        "plot",
        "--input",
        p(&dir.path().join("none.wav")),
        "--out",
        p(&dir.path().join("a.png")),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("error"));
}

#[test]
fn config_round_trips_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("full.toml");
    fs::write(&path, ok(&["--seed", "9", "config"]).stdout).unwrap();
    let back = RunConfig::load(&path).unwrap();
    assert_eq!(
        back,
        RunConfig {
            seed: 9,
            ..RunConfig::default()
        }
    );
}

#[test]
fn empty_manifest_gives_empty_index() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.jsonl");
    fs::write(&manifest, "").unwrap();
    let out = dir.path().join("data");
    ok(&["synth", "--manifest", p(&manifest), "--out", p(&out)]);
    assert!(read_index(&out).unwrap().is_empty());
}

#[test]
fn toy_synthesis_writes_ladder_and_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["synth", "--toy", "10", "--out", p(&a)]);
    ok(&["synth", "--toy", "10", "--out", p(&b)]);
    let index = read_index(&a).unwrap();
    assert_eq!(index.len(), 10);
    // Full-scale defaults: K = 4 intermediate targets plus the clean target.
    for e in &index {
        let name = format!("{}.wav", e.id);
        let targets = (1..=4)
            .map(|k| a.join(format!("target_{k}")).join(&name))
            .chain([a.join("clean").join(&name)]);
        assert_eq!(targets.filter(|t| t.exists()).count(), 5);
        assert!(a.join("mix").join(&name).exists());
    }
    assert!(!a.join("target_5").exists());
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
}

#[test]
fn missing_source_is_listed_and_others_proceed() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--toy", "3", "--out", p(&data)]);
    let manifest = fs::read_to_string(data.join("manifest.jsonl")).unwrap();
    let mut lines: Vec<String> = manifest.lines().map(str::to_string).collect();
    lines[1] = lines[1].replace("sources/", "sources/missing_");
    let broken = data.join("broken.jsonl");
    fs::write(&broken, lines.join("\n")).unwrap();
    let out = dir.path().join("out");
    let r = ok(&["synth", "--manifest", p(&broken), "--out", p(&out)]);
    assert!(r.stderr.contains("wrote 2 items, 1 failed"), "{}", r.stderr);
    assert_eq!(
        fs::read_to_string(out.join("errors.jsonl"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}

#[test]
fn eval_of_references_and_mixtures() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = tiny_config(dir.path());
    ok(&["synth", "--toy", "8", "--out", p(&data)]);

    let report = dir.path().join("self.tsv");
    let r = ok(&[
        "--config",
        p(&cfg),
        "eval",
        "--enhanced",
        p(&data.join("clean")),
        "--dataset",
        p(&data),
        "--split",
        "all",
        "--out",
        p(&report),
    ]);
    let rows: Vec<&str> = r
        .stdout
        .lines()
        .skip_while(|l| !l.starts_with("system\tid"))
        .skip(1)
        .take_while(|l| !l.is_empty())
        .collect();
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let cols: Vec<&str> = row.split('\t').collect();
        assert_eq!(cols[3], "inf");
        assert!(
            (cols[4].parse::<f64>().unwrap() - 1.0).abs() < 1e-9,
            "{row}"
        );
    }

    let report = dir.path().join("mix.tsv");
    ok(&[
        "--config",
        p(&cfg),
        "eval",
        "--enhanced",
        p(&data.join("mix")),
        "--dataset",
        p(&data),
        "--split",
        "all",
        "--out",
        p(&report),
    ]);
    let text = fs::read_to_string(&report).unwrap();
    let mut by_bucket: Vec<(SnrBucket, f64)> = Vec::new();
    for row in text
        .lines()
        .skip_while(|l| !l.starts_with("system\tid"))
        .skip(1)
        .take_while(|l| !l.is_empty())
    {
        let cols: Vec<&str> = row.split('\t').collect();
        let (snr, got): (f64, f64) = (cols[2].parse().unwrap(), cols[3].parse().unwrap());
        // Independent route: SDR of the stored files computed in-process.
        let id = cols[1];
        let want = sdr(
            &read_wav(data.join("mix").join(format!("{id}.wav"))).unwrap(),
            &read_wav(data.join("clean").join(format!("{id}.wav"))).unwrap(),
        )
        .unwrap();
        assert!((got - want).abs() < 1e-3, "{id}: {got} vs {want}");
        assert!(
            (got - snr).abs() < 0.05,
            "{id}: SDR {got} vs mixing SNR {snr}"
        );
        by_bucket.push((SnrBucket::of(snr).unwrap(), got));
    }
    // Bucket means in the summary equal the means of the per-utterance rows.
    let header: Vec<&str> = text.lines().next().unwrap().split('\t').collect();
    let summary: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    for b in [SnrBucket::Low, SnrBucket::Mid, SnrBucket::High] {
        let vals: Vec<f64> = by_bucket
            .iter()
            .filter(|(k, _)| *k == b)
            .map(|(_, v)| *v)
            .collect();
        let col = header
            .iter()
            .position(|h| *h == format!("SDR[{}]", b.label()))
            .unwrap();
        if vals.is_empty() {
            assert_eq!(summary[col], "-");
        } else {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((summary[col].parse::<f64>().unwrap() - mean).abs() < 1e-3);
        }
    }
}

#[test]
fn eval_lists_unmatched_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--toy", "5", "--out", p(&data)]);
    let enhanced = dir.path().join("enh");
    fs::create_dir_all(&enhanced).unwrap();
    let ids: Vec<String> = read_index(&data)
        .unwrap()
        .into_iter()
        .map(|e| e.id)
        .collect();
    fs::copy(
        data.join("clean").join(format!("{}.wav", ids[0])),
        enhanced.join(format!("{}.wav", ids[0])),
    )
    .unwrap();
    fs::copy(
        data.join("clean").join(format!("{}.wav", ids[0])),
        enhanced.join("stranger.wav"),
    )
    .unwrap();
    let r = ok(&[
        "eval",
        "--enhanced",
        p(&enhanced),
        "--dataset",
        p(&data),
        "--split",
        "all",
        "--out",
        p(&dir.path().join("r.tsv")),
    ]);
    assert!(r.stderr.contains("skipped stranger"));
    for id in &ids[1..] {
        assert!(r.stderr.contains(&format!("skipped {id}")), "{id}");
    }
    assert!(r.stdout.contains(&format!("spse\t{}\t", ids[0])));
}

#[test]
fn enhance_rejects_unfinished_checkpoint_and_dumps_intermediates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ck = dir.path().join("ck");
    let cfg = tiny_config(dir.path());
    ok(&[
        "--config",
        p(&cfg),
        "synth",
        "--toy",
        "3",
        "--out",
        p(&data),
    ]);
    ok(&[
        "--config",
        p(&cfg),
        "train",
        "--data",
        p(&data),
        "--stage",
        "pl",
        "--out",
        p(&ck),
    ]);
    let mix = data.join("mix").join("utt00000.wav");
    let r = spse(&[
        "enhance",
        "--input",
        p(&mix),
        "--checkpoint",
        p(&ck.join("pl.ckpt")),
        "--output",
        p(&dir.path().join("o.wav")),
    ]);
    assert_eq!(r.code, 2);
    assert!(
        r.stderr.contains("has not completed stage hc"),
        "{}",
        r.stderr
    );
    assert_eq!(
        spse(&[
            "--config",
            p(&cfg),
            "train",
            "--data",
            p(&data),
            "--stage",
            "hc",
            "--from",
            p(&ck.join("pl.ckpt")),
            "--out",
            p(&ck)
        ])
        .code,
        2
    );

    ok(&[
        "--config",
        p(&cfg),
        "train",
        "--data",
        p(&data),
        "--stage",
        "pitch",
        "--from",
        p(&ck.join("pl.ckpt")),
        "--out",
        p(&ck),
    ]);
    ok(&[
        "--config",
        p(&cfg),
        "train",
        "--data",
        p(&data),
        "--stage",
        "hc",
        "--from",
        p(&ck.join("pitch.ckpt")),
        "--out",
        p(&ck),
    ]);
    let out = dir.path().join("enh");
    ok(&[
        "enhance",
        "--input",
        p(&mix),
        "--checkpoint",
        p(&ck.join("hc.ckpt")),
        "--output",
        p(&out.join("utt00000.wav")),
        "--dump-intermediates",
    ]);
    // Toy preset: K = 2, so three progressive outputs.
    assert_eq!(
        files(&out),
        [
            "utt00000.f0.csv",
            "utt00000.s1.wav",
            "utt00000.s2.wav",
            "utt00000.s3.wav",
            "utt00000.wav"
        ]
    );
    let x = read_wav(&mix).unwrap();
    let y = read_wav(out.join("utt00000.wav")).unwrap();
    assert!(y.len().abs_diff(x.len()) <= StftConfig::default().hop_samples);
    assert!(y.is_finite());
    let f0 = fs::read_to_string(out.join("utt00000.f0.csv")).unwrap();
    assert_eq!(f0.lines().next().unwrap(), "frame,time_s,f0_hz,voiced");
    assert_eq!(
        f0.lines().count() - 1,
        stft(&x, &StftConfig::default()).unwrap().frames()
    );
}

#[test]
fn non_finite_output_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::toy();
    let mut model = Enhancer::new(&cfg.model(), &cfg.stft(), &PitchBins::default(), 1).unwrap();
    let names: Vec<String> = model.store.iter().map(|(_, q)| q.name.clone()).collect();
    for n in names {
        let id = model.store.id(&n).unwrap();
        model.store.get_mut(id).value.data_mut().fill(f32::NAN);
    }
    let state = TrainState {
        completed: BTreeSet::from(Stage::ALL),
        ..TrainState::fresh(0)
    };
    let ckpt = dir.path().join("nan.ckpt");
    Checkpoint {
        model,
        state,
        adam: None,
    }
    .save(&ckpt)
    .unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--toy", "1", "--out", p(&data)]);
    let mix = data.join("mix").join("utt00000.wav");
    let r = spse(&[
        "enhance",
        "--input",
        p(&mix),
        "--checkpoint",
        p(&ckpt),
        "--output",
        p(&dir.path().join("o.wav")),
    ]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn pipeline_is_deterministic_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = |tag: &str| -> String {
        let root = dir.path().join(tag);
        let (data, ck, enh) = (root.join("data"), root.join("ck"), root.join("enh"));
        let c = p(&cfg);
        ok(&[
            "--config",
            c,
            "--deterministic",
            "--seed",
            "3",
            "synth",
            "--toy",
            "5",
            "--out",
            p(&data),
        ]);
        ok(&[
            "--config",
            c,
            "--deterministic",
            "--seed",
            "3",
            "train",
            "--data",
            p(&data),
            "--stage",
            "pl",
            "--out",
            p(&ck),
        ]);
        ok(&[
            "--config",
            c,
            "--deterministic",
            "--seed",
            "3",
            "train",
            "--data",
            p(&data),
            "--stage",
            "pitch",
            "--from",
            p(&ck.join("pl.ckpt")),
            "--out",
            p(&ck),
        ]);
        ok(&[
            "--config",
            c,
            "--deterministic",
            "--seed",
            "3",
            "train",
            "--data",
            p(&data),
            "--stage",
            "hc",
            "--from",
            p(&ck.join("pitch.ckpt")),
            "--out",
            p(&ck),
        ]);
        ok(&[
            "--deterministic",
            "enhance",
            "--input",
            p(&data.join("mix")),
            "--checkpoint",
            p(&ck.join("hc.ckpt")),
            "--output",
            p(&enh),
            "--dump-intermediates",
        ]);
        ok(&[
            "--config",
            c,
            "--deterministic",
            "eval",
            "--enhanced",
            p(&enh),
            "--dataset",
            p(&data),
            "--split",
            "all",
            "--out",
            p(&root.join("r.tsv")),
        ]);
        fs::read_to_string(root.join("r.tsv")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    assert_eq!(
        a.lines()
            .skip_while(|l| !l.starts_with("system\tid"))
            .skip(1)
            .take_while(|l| !l.is_empty())
            .count(),
        5
    );
    assert_eq!(
        fs::read(dir.path().join("a/ck/hc.ckpt")).unwrap(),
        fs::read(dir.path().join("b/ck/hc.ckpt")).unwrap()
    );
}
