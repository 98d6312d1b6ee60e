//! Pitch target matrices: N log-spaced f0 bins plus one unvoiced column.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::synth::f0::{PitchTrack, F0_MAX_HZ, F0_MIN_HZ};

pub const DEFAULT_PITCH_BINS: usize = 225;
pub const LABEL_SIGMA_BINS: f64 = 1.0;
pub const LABEL_SPAN_BINS: i64 = 3;

/// Log-frequency bin grid over `[f_min, f_max]` with `n` centers (first and last on the edges).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PitchBins {
    pub n: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for PitchBins {
    fn default() -> Self {
        Self {
            n: DEFAULT_PITCH_BINS,
            f_min: F0_MIN_HZ,
            f_max: F0_MAX_HZ,
        }
    }
}

impl PitchBins {
    pub fn new(n: usize, f_min: f64, f_max: f64) -> Result<Self> {
        if n < 2 || !(f_min > 0.0) || !(f_max > f_min) {
            return Err(Error::InvalidConfig(format!(
                "bad pitch grid n={n} [{f_min}, {f_max}]"
            )));
        }
        Ok(Self { n, f_min, f_max })
    }

    /// Unvoiced column index.
    pub fn unvoiced(&self) -> usize {
        self.n
    }

    /// Nearest bin for `f0`, clamped to the grid.
    pub fn bin(&self, f0: f64) -> usize {
        let pos = (self.n - 1) as f64 * (f0 / self.f_min).log2() / (self.f_max / self.f_min).log2();
        pos.round().clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub fn center_hz(&self, bin: usize) -> f64 {
        self.f_min * (self.f_max / self.f_min).powf(bin as f64 / (self.n - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchLabelMatrix {
    /// T×(N+1), entries in [0, 1].
    pub data: Array2<f32>,
    pub bins: PitchBins,
}

impl PitchLabelMatrix {
    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    /// Per-row argmax; ties resolve to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        argmax_rows(&self.data)
    }
}

pub(crate) fn argmax_rows(m: &Array2<f32>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Gaussian-smoothed pitch targets (σ = 1 bin, ±3 bins, peak 1); unvoiced rows are one-hot at N.
pub fn f0_to_label_matrix(track: &PitchTrack, bins: &PitchBins) -> PitchLabelMatrix {
    let mut data = Array2::zeros((track.frames(), bins.n + 1));
    for (t, (&f0, &voiced)) in track.f0_hz.iter().zip(&track.voicing).enumerate() {
        if !voiced || f0 <= 0.0 {
            data[[t, bins.n]] = 1.0;
            continue;
        }
        let center = bins.bin(f0) as i64;
        for off in -LABEL_SPAN_BINS..=LABEL_SPAN_BINS {
            let j = center + off;
            if j < 0 || j >= bins.n as i64 {
                continue;
            }
            let d = off as f64 / LABEL_SIGMA_BINS;
            data[[t, j as usize]] = (-0.5 * d * d).exp() as f32;
        }
    }
    PitchLabelMatrix { data, bins: *bins }
}

const LABEL_MAGIC: [u8; 4] = *b"PLBL";
const LABEL_VERSION: u32 = 1;

/// Header: `T`, `N+1`, magic `PLBL`, version (all 4-byte little-endian), then row-major f32.
pub fn write_labels(path: impl AsRef<Path>, m: &PitchLabelMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + m.data.len() * 4);
    buf.extend_from_slice(&(m.frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.data.ncols() as u32).to_le_bytes());
    buf.extend_from_slice(&LABEL_MAGIC);
    buf.extend_from_slice(&LABEL_VERSION.to_le_bytes());
    for v in m.data.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_labels(path: impl AsRef<Path>, bins: &PitchBins) -> Result<PitchLabelMatrix> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 16 {
        return Err(Error::format("label file", "truncated header"));
    }
    let word = |i: usize| u32::from_le_bytes(buf[i * 4..i * 4 + 4].try_into().unwrap());
    let (frames, cols) = (word(0) as usize, word(1) as usize);
    if buf[8..12] != LABEL_MAGIC || word(3) != LABEL_VERSION {
        return Err(Error::format("label file", "bad magic or version"));
    }
    if cols != bins.n + 1 {
        return Err(Error::format(
            "label file",
            format!("{cols} columns, expected {}", bins.n + 1),
        ));
    }
    if buf.len() != 16 + frames * cols * 4 {
        return Err(Error::format(
            "label file",
            "payload size does not match header",
        ));
    }
    let values = buf[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = Array2::from_shape_vec((frames, cols), values)
        .map_err(|e| Error::format("label file", e.to_string()))?;
    Ok(PitchLabelMatrix { data, bins: *bins })
}
