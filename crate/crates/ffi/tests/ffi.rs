//! Calls through the C interface, compared against the library called directly.

use std::collections::BTreeSet;
use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use spse::app::RunConfig;
use spse::signal::Waveform;
use spse::synth::PitchBins;
use spse::system::Enhancer;
use spse::train::{Checkpoint, Stage, TrainState};
use spse_ffi::*;

fn model(seed: u64) -> Enhancer {
    let cfg = RunConfig::toy();
    Enhancer::new(&cfg.model(), &cfg.stft(), &PitchBins::default(), seed).unwrap()
}

fn save(dir: &Path, name: &str, model: Enhancer, completed: &[Stage]) -> CString {
    let path = dir.join(name);
    let state = TrainState {
        completed: completed.iter().copied().collect::<BTreeSet<_>>(),
        ..TrainState::fresh(0)
    };
    Checkpoint {
        model,
        state,
        adam: None,
    }
    .save(&path)
    .unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn open(path: &CStr) -> (SpseStatus, *mut SpseEnhancer) {
    let mut h = ptr::null_mut();
    let s = unsafe { spse_enhancer_open(path.as_ptr(), &mut h) };
    (s, h)
}

fn last_error() -> Option<String> {
    let p = spse_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn signal(len: usize) -> Vec<f32> {
    (0..len)
        .map(|i| (0.3 * (i as f64 * 0.05).sin() + 0.05 * (i as f64 * 1.7).cos()) as f32)
        .collect()
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(spse_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn enhancement_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = save(dir.path(), "hc.ckpt", model(4), &Stage::ALL);
    let (s, h) = open(&path);
    assert_eq!(s, SpseStatus::Ok);
    assert_eq!(unsafe { spse_enhancer_sample_rate(h) }, 16000);
    let x = signal(6000);
    let mut y = vec![0.0f32; x.len()];
    assert_eq!(
        unsafe { spse_enhance(h, x.as_ptr(), y.as_mut_ptr(), x.len()) },
        SpseStatus::Ok
    );
    assert_eq!(last_error(), None);
    let want = model(4)
        .enhance(&Waveform::new(x.iter().map(|&v| v as f64).collect()))
        .unwrap();
    let want: Vec<f32> = want.wave.samples.iter().map(|&v| v as f32).collect();
    assert_eq!(y, want);
    unsafe { spse_enhancer_free(h) };
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { spse_enhancer_open(ptr::null(), &mut h) },
        SpseStatus::NullArgument
    );
    assert!(last_error().unwrap().contains("NULL"));
    let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(open(&missing).0, SpseStatus::Io);
    std::fs::write(dir.path().join("junk.ckpt"), "junk\n").unwrap();
    let junk = CString::new(dir.path().join("junk.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(open(&junk).0, SpseStatus::BadCheckpoint);
    let pl_only = save(dir.path(), "pl.ckpt", model(1), &[Stage::Pl]);
    let (s, h) = open(&pl_only);
    assert_eq!(s, SpseStatus::ConfigMismatch);
    assert!(h.is_null());
    assert!(last_error().unwrap().contains("stage hc"));

    let (s, h) = open(&save(dir.path(), "hc.ckpt", model(1), &Stage::ALL));
    assert_eq!(s, SpseStatus::Ok);
    let short = signal(100);
    let mut y = vec![0.0f32; short.len()];
    assert_eq!(
        unsafe { spse_enhance(h, short.as_ptr(), y.as_mut_ptr(), short.len()) },
        SpseStatus::TooShort
    );
    let mut bad = signal(4000);
    bad[7] = f32::NAN;
    let mut y = vec![0.0f32; bad.len()];
    assert_eq!(
        unsafe { spse_enhance(h, bad.as_ptr(), y.as_mut_ptr(), bad.len()) },
        SpseStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { spse_enhance(h, ptr::null(), y.as_mut_ptr(), 4) },
        SpseStatus::NullArgument
    );
    assert_eq!(unsafe { spse_enhancer_sample_rate(ptr::null()) }, 0);
    unsafe {
        spse_enhancer_free(h);
        spse_enhancer_free(ptr::null_mut());
    }
}

#[test]
fn non_finite_weights_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = model(2);
    let names: Vec<String> = m.store.iter().map(|(_, p)| p.name.clone()).collect();
    for n in names {
        let id = m.store.id(&n).unwrap();
        m.store.get_mut(id).value.data_mut().fill(f32::NAN);
    }
    let (s, h) = open(&save(dir.path(), "nan.ckpt", m, &Stage::ALL));
    assert_eq!(s, SpseStatus::Ok);
    let x = signal(4000);
    let mut y = vec![0.0f32; x.len()];
    assert_eq!(
        unsafe { spse_enhance(h, x.as_ptr(), y.as_mut_ptr(), x.len()) },
        SpseStatus::NonFinite
    );
    unsafe { spse_enhancer_free(h) };
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"spse.h\"\nint main(void) {\n  SpseEnhancer *h = 0;\n  SpseStatus s = spse_enhancer_open(\"x\", &h);\n  spse_enhancer_free(h);\n  return s == SPSE_STATUS_OK ? 0 : (int)s;\n}\n",
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = match Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(header())
            .arg(&src)
            .output()
        {
            Ok(o) => o,
            Err(_) => {
                eprintln!("{compiler} not found; skipping");
                continue;
            }
        };
        assert!(
            out.status.success(),
            "{compiler}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    // Test binaries live in target/<profile>/deps; the library artifacts one level up.
    let exe = std::env::current_exe().unwrap();
    let lib = exe
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join("libspse_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("static library or cc unavailable; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        "#include \"spse.h\"\n#include <stdio.h>\nint main(void) {\n  SpseEnhancer *h = 0;\n  SpseStatus s = spse_enhancer_open(\"/nonexistent.ckpt\", &h);\n  printf(\"%s %d %d\\n\", spse_version(), (int)s, spse_last_error() != 0);\n  return 0;\n}\n",
    )
    .unwrap();
    let bin = dir.path().join("main");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header())
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert_eq!(
        String::from_utf8_lossy(&run.stdout),
        format!(
            "{} {} 1\n",
            env!("CARGO_PKG_VERSION"),
            SpseStatus::Io as i32
        )
    );
}
