//! Checkpoint files: a magic line, one JSON header line, then raw little-endian f32 data.
//!
//! Data order: every parameter in header order, then for each optimizer entry its first and
//! second moments. Writes go to a temporary file that is renamed into place.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::{ParamKind, Tensor};
use crate::signal::StftConfig;
use crate::synth::PitchBins;
use crate::system::Enhancer;
use crate::train::trainer::TrainState;

const MAGIC: &str = "SPSE-CHECKPOINT 1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Enhancer,
    pub state: TrainState,
    pub adam: Option<Adam>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    group: String,
    kind: ParamKind,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    cfg: AdamConfig,
    t: u64,
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    stft: StftConfig,
    bins: PitchBins,
    state: TrainState,
    params: Vec<TensorEntry>,
    adam: Option<AdamHeader>,
}

fn push_f32(out: &mut Vec<u8>, vals: &[f32]) {
    out.extend(vals.iter().flat_map(|v| v.to_le_bytes()));
}

fn take_f32(data: &[u8], pos: &mut usize, n: usize) -> Result<Vec<f32>> {
    let end = *pos + 4 * n;
    let bytes = data
        .get(*pos..end)
        .ok_or_else(|| Error::format("checkpoint", "truncated data section"))?;
    *pos = end;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let m = &self.model;
        let params: Vec<TensorEntry> = m
            .store
            .iter()
            .map(|(_, p)| TensorEntry {
                name: p.name.clone(),
                group: p.group.clone(),
                kind: p.kind,
                shape: p.value.shape().to_vec(),
            })
            .collect();
        let adam = self.adam.as_ref().map(|a| AdamHeader {
            cfg: a.cfg,
            t: a.t,
            names: a.moments.keys().cloned().collect(),
        });
        let header = Header {
            model: m.cfg.clone(),
            stft: m.stft,
            bins: m.bins,
            state: self.state.clone(),
            params,
            adam,
        };
        let mut buf = Vec::new();
        writeln!(buf, "{MAGIC}")?;
        writeln!(buf, "{}", serde_json::to_string(&header)?)?;
        for (_, p) in m.store.iter() {
            push_f32(&mut buf, p.value.data());
        }
        if let Some(a) = &self.adam {
            for (mm, vv) in a.moments.values() {
                push_f32(&mut buf, mm);
                push_f32(&mut buf, vv);
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&buf)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(fs::File::open(path.as_ref())?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(Error::format(
                "checkpoint",
                format!("bad magic line in {}", path.as_ref().display()),
            ));
        }
        line.clear();
        r.read_line(&mut line)?;
        let header: Header = serde_json::from_str(&line)?;
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let bins = PitchBins::new(header.bins.n, header.bins.f_min, header.bins.f_max)?;
        let mut model = Enhancer::new(&header.model, &header.stft, &bins, 0)?;
        if model.store.len() != header.params.len() {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "{} tensors stored, model has {}",
                    header.params.len(),
                    model.store.len()
                ),
            ));
        }
        let mut pos = 0;
        for e in &header.params {
            let id = model
                .store
                .id(&e.name)
                .ok_or_else(|| Error::format("checkpoint", format!("unknown tensor {}", e.name)))?;
            let p = model.store.get_mut(id);
            if p.value.shape() != e.shape.as_slice() || p.kind != e.kind || p.group != e.group {
                return Err(Error::format(
                    "checkpoint",
                    format!("tensor {} does not match the model", e.name),
                ));
            }
            p.value = Tensor::from_vec(&e.shape, take_f32(&data, &mut pos, p.value.len())?);
        }
        let adam = match header.adam {
            Some(h) => {
                let mut a = Adam::new(h.cfg);
                a.t = h.t;
                for name in h.names {
                    let id = model.store.id(&name).ok_or_else(|| {
                        Error::format("checkpoint", format!("moments for unknown tensor {name}"))
                    })?;
                    let n = model.store.get(id).value.len();
                    let mm = take_f32(&data, &mut pos, n)?;
                    let vv = take_f32(&data, &mut pos, n)?;
                    a.moments.insert(name, (mm, vv));
                }
                Some(a)
            }
            None => None,
        };
        if pos != data.len() {
            return Err(Error::format(
                "checkpoint",
                format!("{} trailing bytes", data.len() - pos),
            ));
        }
        Ok(Self {
            model,
            state: header.state,
            adam,
        })
    }
}
