//! Harmonic compensation: magnitude addition of the coarse estimate and the comb-filtered
//! input, a sigmoid magnitude mask, and reassembly with the coarse phase.

use ndarray::Array2;
use rand::Rng;
use realfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::blocks::SeBlock;
use crate::model::config::ModelConfig;
use crate::nn::conv::Conv2dSpec;
use crate::nn::graph::{Backward, BackwardCtx};
use crate::nn::layers::{Conv2d, Norm};
use crate::nn::{Graph, ParamStore, Session, Tensor, Var};
use crate::signal::ComplexSpectrogram;

pub const MASK_GROUP: &str = "mask_module";
const MAG_EPS: f64 = 1e-12;

/// `M (|coarse| + |filtered|)` with the phase of `coarse`; a zero coarse bin stays zero.
pub fn combine_bin(coarse: Complex64, filtered: Complex64, mask: f64) -> Complex64 {
    let r = coarse.norm();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    coarse * (mask * (r + filtered.norm()) / r)
}

/// Applies [`combine_bin`] over whole spectrograms.
pub fn compensate_spectra(
    coarse: &ComplexSpectrogram,
    filtered: &ComplexSpectrogram,
    mask: &Array2<f64>,
) -> Result<ComplexSpectrogram> {
    let shape = [coarse.frames(), coarse.freqs()];
    for got in [
        [filtered.frames(), filtered.freqs()],
        [mask.nrows(), mask.ncols()],
    ] {
        if got != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                got: got.to_vec(),
            });
        }
    }
    let mut out = coarse.clone();
    for ((o, f), m) in out
        .data
        .iter_mut()
        .zip(filtered.data.iter())
        .zip(mask.iter())
    {
        *o = combine_bin(*o, *f, *m);
    }
    Ok(out)
}

struct Log1pMag {
    power: f64,
}

impl Backward for Log1pMag {
    fn backward(&self, c: &BackwardCtx) -> Vec<Option<Tensor>> {
        let (z, g) = (c.inputs[0].data(), c.grad.data());
        let p = self.power;
        let mut dz = vec![0.0f32; z.len()];
        for (i, gv) in g.iter().enumerate() {
            let (re, im) = (z[2 * i] as f64, z[2 * i + 1] as f64);
            let r2 = re * re + im * im + MAG_EPS;
            let m = r2.powf(0.5 * p);
            let k = *gv as f64 * p * r2.powf(0.5 * p - 1.0) / (1.0 + m);
            dz[2 * i] = (k * re) as f32;
            dz[2 * i + 1] = (k * im) as f32;
        }
        vec![Some(Tensor::from_vec(c.inputs[0].shape(), dz))]
    }
}

struct CompensateOp {
    gamma: f64,
}

impl Backward for CompensateOp {
    fn backward(&self, c: &BackwardCtx) -> Vec<Option<Tensor>> {
        let (cc, ff, mm, g) = (
            c.inputs[0].data(),
            c.inputs[1].data(),
            c.inputs[2].data(),
            c.grad.data(),
        );
        let gm = self.gamma;
        let mut dc = vec![0.0f32; cc.len()];
        let mut df = vec![0.0f32; ff.len()];
        let mut dm = vec![0.0f32; mm.len()];
        for i in 0..mm.len() {
            let (cr, ci) = (cc[2 * i] as f64, cc[2 * i + 1] as f64);
            let (fr, fi) = (ff[2 * i] as f64, ff[2 * i + 1] as f64);
            let (gr, gi) = (g[2 * i] as f64, g[2 * i + 1] as f64);
            let m = mm[i] as f64;
            let r = (cr * cr + ci * ci + MAG_EPS).sqrt();
            let u = r.powf(1.0 / gm);
            let af = (fr * fr + fi * fi + MAG_EPS).sqrt();
            let a = u + af;
            let mg = m * a + MAG_EPS;
            let q = mg.powf(gm);
            let (dr, di) = (cr / r, ci / r);
            let dq = gr * dr + gi * di;
            let dmg = dq * gm * q / mg;
            let radial = dmg * m * u / (gm * r);
            let tangential = q / r;
            dc[2 * i] = (tangential * (gr - dq * dr) + radial * dr) as f32;
            dc[2 * i + 1] = (tangential * (gi - dq * di) + radial * di) as f32;
            dm[i] = (dmg * a) as f32;
            df[2 * i] = (dmg * m * fr / af) as f32;
            df[2 * i + 1] = (dmg * m * fi / af) as f32;
        }
        vec![
            c.needs(0)
                .then(|| Tensor::from_vec(c.inputs[0].shape(), dc)),
            c.needs(1)
                .then(|| Tensor::from_vec(c.inputs[1].shape(), df)),
            c.needs(2)
                .then(|| Tensor::from_vec(c.inputs[2].shape(), dm)),
        ]
    }
}

impl Graph {
    /// `ln(1 + |z|^power)` per complex pair of `[..., 2]`, giving `[..., 1]`.
    pub fn log1p_magnitude(&mut self, z: Var, power: f64) -> Var {
        let zs = self.shape(z).to_vec();
        assert_eq!(zs[zs.len() - 1], 2, "log1p_magnitude expects RI pairs");
        let vals = self
            .value(z)
            .data()
            .chunks_exact(2)
            .map(|p| {
                let r2 = (p[0] as f64).powi(2) + (p[1] as f64).powi(2) + MAG_EPS;
                r2.powf(0.5 * power).ln_1p() as f32
            })
            .collect();
        let mut shape = zs;
        *shape.last_mut().unwrap() = 1;
        self.push(Tensor::from_vec(&shape, vals), &[z], Log1pMag { power })
    }

    /// Compensated estimate in the compressed domain. `coarse_c` is compressed RI, `filtered`
    /// raw RI (both `[B, T, F, 2]`), `mask` is `[B, T, F, 1]`.
    pub fn compensate(&mut self, coarse_c: Var, filtered: Var, mask: Var, gamma: f64) -> Var {
        let cs = self.shape(coarse_c).to_vec();
        assert_eq!(
            cs,
            self.shape(filtered),
            "compensate: coarse/filtered shapes"
        );
        assert_eq!(
            self.value(mask).len() * 2,
            self.value(coarse_c).len(),
            "compensate: mask shape"
        );
        let (cc, ff, mm) = (
            self.value(coarse_c).data(),
            self.value(filtered).data(),
            self.value(mask).data(),
        );
        let mut out = vec![0.0f32; cc.len()];
        for i in 0..mm.len() {
            let (cr, ci) = (cc[2 * i] as f64, cc[2 * i + 1] as f64);
            let (fr, fi) = (ff[2 * i] as f64, ff[2 * i + 1] as f64);
            let r = (cr * cr + ci * ci + MAG_EPS).sqrt();
            let u = r.powf(1.0 / gamma);
            let af = (fr * fr + fi * fi + MAG_EPS).sqrt();
            let q = (mm[i] as f64 * (u + af) + MAG_EPS).powf(gamma);
            out[2 * i] = (q * cr / r) as f32;
            out[2 * i + 1] = (q * ci / r) as f32;
        }
        self.push(
            Tensor::from_vec(&cs, out),
            &[coarse_c, filtered, mask],
            CompensateOp { gamma },
        )
    }
}

/// Encoder conv, global norm, one SE block and a sigmoid conv head producing `M`.
#[derive(Debug, Clone)]
pub struct MaskModule {
    enc: Conv2d,
    norm: Norm,
    block: SeBlock,
    head: Conv2d,
    gamma: f64,
}

impl MaskModule {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, cfg: &ModelConfig) -> Self {
        let d = cfg.embed_dim;
        Self {
            enc: Conv2d::new(store, rng, MASK_GROUP, "enc", 2, d, Conv2dSpec::same(3, 3)),
            norm: Norm::new(store, MASK_GROUP, "gln", d),
            block: SeBlock::new(store, rng, MASK_GROUP, cfg),
            head: Conv2d::new(store, rng, MASK_GROUP, "head", d, 1, Conv2dSpec::same(3, 3)),
            gamma: cfg.gamma,
        }
    }

    /// Returns `(mask [B, T, F, 1], compensated compressed RI [B, T, F, 2])`.
    pub fn forward(&self, s: &mut Session, coarse_c: Var, filtered: Var) -> (Var, Var) {
        let fc = s.graph.log1p_magnitude(coarse_c, 1.0 / self.gamma);
        let ff = s.graph.log1p_magnitude(filtered, 1.0);
        let x = s.graph.concat_last(&[fc, ff]);
        let x = self.enc.forward(s, x);
        let sh = s.graph.shape(x).to_vec();
        let x = self.norm.forward(s, x, sh[1] * sh[2] * sh[3]);
        let x = self.block.forward(s, x);
        let x = self.head.forward(s, x);
        let mask = s.graph.sigmoid(x);
        let out = s.graph.compensate(coarse_c, filtered, mask, self.gamma);
        (mask, out)
    }
}
