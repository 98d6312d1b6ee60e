//! The complete enhancer: progressive SE model, pitch estimator and harmonic compensation.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compensation::MaskModule;
use crate::error::{Error, Result};
use crate::model::{
    log_magnitude_feature, specs_to_tensor, tensor_to_specs, ModelConfig, PitchInput, SeModel,
    SeOutputs,
};
use crate::nn::{ParamStore, Session, Tensor, Var};
use crate::pitch::estimator::LOG_FEATURE_EPS;
use crate::pitch::{
    apply_pitch_filter, decode_pitch, CombFilterSpec, PitchEstimator, PitchPosterior,
};
use crate::signal::{istft, stft, ComplexSpectrogram, StftConfig, Waveform};
use crate::synth::PitchBins;

/// Parameters and modules of the whole system. Pitch estimator and mask module are absent
/// when harmonic compensation is disabled.
#[derive(Debug, Clone)]
pub struct Enhancer {
    pub cfg: ModelConfig,
    pub stft: StftConfig,
    pub bins: PitchBins,
    pub store: ParamStore,
    pub se: SeModel,
    pub pitch: Option<PitchEstimator>,
    pub mask: Option<MaskModule>,
}

/// Everything produced by [`Enhancer::enhance`].
#[derive(Debug, Clone)]
pub struct Enhanced {
    pub wave: Waveform,
    pub spectrogram: ComplexSpectrogram,
    /// Progressive outputs `s̃_1..s̃_{K+1}`; intermediate ones are `None` without progressive learning.
    pub intermediates: Vec<Option<Waveform>>,
    /// Decoded per-frame comb filters; empty without harmonic compensation.
    pub pitch: Vec<CombFilterSpec>,
}

impl Enhancer {
    pub fn new(
        cfg: &ModelConfig,
        stft_cfg: &StftConfig,
        bins: &PitchBins,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        stft_cfg.validate()?;
        if stft_cfg.n_freqs() != cfg.n_freqs {
            return Err(Error::ConfigMismatch(format!(
                "model expects {} bins, STFT gives {}",
                cfg.n_freqs,
                stft_cfg.n_freqs()
            )));
        }
        if cfg.pitch.out_dim != bins.n + 1 {
            return Err(Error::ConfigMismatch(format!(
                "pitch head has {} outputs for {} bins",
                cfg.pitch.out_dim, bins.n
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let se = SeModel::new(&mut store, &mut rng, cfg);
        let (pitch, mask) = if cfg.no_hc {
            (None, None)
        } else {
            (
                Some(PitchEstimator::new(
                    &mut store,
                    &mut rng,
                    &cfg.pitch,
                    cfg.n_freqs,
                )),
                Some(MaskModule::new(&mut store, &mut rng, cfg)),
            )
        };
        Ok(Self {
            cfg: cfg.clone(),
            stft: *stft_cfg,
            bins: *bins,
            store,
            se,
            pitch,
            mask,
        })
    }

    /// Index into the progressive outputs that feeds the pitch estimator: `S̃_K`, or the final
    /// output when intermediate decoders are absent. `None` when it reads the noisy input.
    pub fn pitch_source(&self) -> Option<usize> {
        match self.cfg.pitch_input {
            PitchInput::Noisy => None,
            PitchInput::Coarse => Some(self.cfg.k),
            PitchInput::Intermediate => Some(if self.cfg.no_pl {
                self.cfg.k
            } else {
                self.cfg.k - 1
            }),
        }
    }

    /// Groups of the progressive SE model.
    pub fn se_groups(&self) -> BTreeSet<String> {
        self.se.groups().into_iter().collect()
    }

    pub fn groups(&self) -> BTreeSet<String> {
        self.store.groups()
    }

    fn check_frames(&self, frames: usize) -> Result<()> {
        if frames < self.cfg.unfold_kernel {
            return Err(Error::TooShort {
                len: frames,
                win: self.cfg.unfold_kernel,
            });
        }
        Ok(())
    }

    /// Phase encoder output `[T, F, C]` for one spectrogram.
    pub fn phase_encode(&self, x: &ComplexSpectrogram) -> Result<Tensor> {
        let pe = self
            .se
            .phase_encoder()
            .ok_or_else(|| Error::InvalidConfig("phase encoder disabled".into()))?;
        let raw = specs_to_tensor(&[x], None)?;
        let mut s = Session::inference(&self.store);
        let xv = s.graph.constant(raw);
        let out = pe.forward(&mut s, xv);
        let t = s.graph.value(out).clone();
        let sh = t.shape()[1..].to_vec();
        Ok(t.reshaped(&sh))
    }

    /// Runs the progressive model on a batch; returns compressed-RI outputs `[B, T, F, 2]`.
    pub(crate) fn forward_batch(
        &self,
        s: &mut Session,
        raw: Tensor,
        comp: Tensor,
    ) -> Vec<Option<Var>> {
        self.forward_until(s, raw, comp, self.cfg.k)
    }

    /// Like [`Self::forward_batch`] but stops after the block producing output index `last`.
    pub(crate) fn forward_until(
        &self,
        s: &mut Session,
        raw: Tensor,
        comp: Tensor,
        last: usize,
    ) -> Vec<Option<Var>> {
        let xr = s.graph.constant(raw);
        let xc = s.graph.constant(comp);
        let mut out = SeOutputs {
            outputs: vec![None; self.cfg.k + 1],
        };
        let stream = self.se.encode(s, xr, xc);
        self.se.run_blocks(s, stream, 0, last, &mut out);
        out.outputs
    }

    /// Progressive outputs `S̃_1..S̃_{K+1}` for one spectrogram, uncompressed.
    pub fn progressive_forward(
        &self,
        x: &ComplexSpectrogram,
    ) -> Result<Vec<Option<ComplexSpectrogram>>> {
        if x.freqs() != self.cfg.n_freqs {
            return Err(Error::ShapeMismatch {
                expected: vec![x.frames(), self.cfg.n_freqs],
                got: vec![x.frames(), x.freqs()],
            });
        }
        self.check_frames(x.frames())?;
        let mut s = Session::inference(&self.store);
        let outs = self.forward_batch(
            &mut s,
            specs_to_tensor(&[x], None)?,
            specs_to_tensor(&[x], Some(self.cfg.gamma))?,
        );
        outs.iter()
            .map(|o| {
                o.map(|v| {
                    tensor_to_specs(s.graph.value(v), &self.stft, Some(self.cfg.gamma))
                        .map(|mut v| v.remove(0))
                })
                .transpose()
            })
            .collect()
    }

    pub(crate) fn pitch_feature(&self, compressed: &Tensor) -> Tensor {
        log_magnitude_feature(compressed, self.cfg.gamma, LOG_FEATURE_EPS)
    }

    /// Posterior from an intermediate estimate given in compressed RI `[B, T, F, 2]`.
    pub(crate) fn posterior_batch(&self, s: &mut Session, compressed: &Tensor) -> Result<Var> {
        let est = self
            .pitch
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("pitch estimator disabled".into()))?;
        let f = s.graph.constant(self.pitch_feature(compressed));
        Ok(est.forward(s, f))
    }

    /// Pitch posterior `T x (N+1)` from an (uncompressed) intermediate estimate.
    pub fn estimate_pitch(&self, s_k: &ComplexSpectrogram) -> Result<PitchPosterior> {
        let comp = specs_to_tensor(&[s_k], Some(self.cfg.gamma))?;
        let mut s = Session::inference(&self.store);
        let p = self.posterior_batch(&mut s, &comp)?;
        let t = s.graph.value(p);
        let (frames, n) = (t.dim(1), t.dim(2));
        Ok(PitchPosterior {
            data: Array2::from_shape_vec((frames, n), t.data().to_vec()).expect("posterior shape"),
        })
    }

    /// Mask and compensated spectrogram from the coarse estimate and the filtered input.
    pub fn compensate(
        &self,
        coarse: &ComplexSpectrogram,
        filtered: &ComplexSpectrogram,
    ) -> Result<(Array2<f64>, ComplexSpectrogram)> {
        let mm = self
            .mask
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("harmonic compensation disabled".into()))?;
        if (coarse.frames(), coarse.freqs()) != (filtered.frames(), filtered.freqs()) {
            return Err(Error::ShapeMismatch {
                expected: vec![coarse.frames(), coarse.freqs()],
                got: vec![filtered.frames(), filtered.freqs()],
            });
        }
        self.check_frames(coarse.frames())?;
        let mut s = Session::inference(&self.store);
        let c = s
            .graph
            .constant(specs_to_tensor(&[coarse], Some(self.cfg.gamma))?);
        let f = s.graph.constant(specs_to_tensor(&[filtered], None)?);
        let (m, out) = mm.forward(&mut s, c, f);
        let mask = Array2::from_shape_vec(
            (coarse.frames(), coarse.freqs()),
            s.graph.value(m).data().iter().map(|v| *v as f64).collect(),
        )
        .expect("mask shape");
        let spec = tensor_to_specs(s.graph.value(out), &self.stft, Some(self.cfg.gamma))?.remove(0);
        Ok((mask, spec))
    }

    /// Full inference on one waveform.
    pub fn enhance(&self, x: &Waveform) -> Result<Enhanced> {
        let spec = stft(x, &self.stft)?;
        let outs = self.progressive_forward(&spec)?;
        let len = Some(x.len());
        let intermediates = outs
            .iter()
            .map(|o| o.as_ref().map(|s| istft(s, &self.stft, len)).transpose())
            .collect::<Result<Vec<_>>>()?;
        let coarse = outs.last().cloned().flatten().expect("final output exists");
        if self.cfg.no_hc {
            let wave = intermediates
                .last()
                .cloned()
                .flatten()
                .expect("final output exists");
            return Ok(Enhanced {
                wave,
                spectrogram: coarse,
                intermediates,
                pitch: Vec::new(),
            });
        }
        let source = match self.pitch_source() {
            Some(i) => outs[i].as_ref().expect("pitch source output exists"),
            None => &spec,
        };
        let post = self.estimate_pitch(source)?;
        let pitch = decode_pitch(&post, &self.bins, &self.stft);
        let filtered = apply_pitch_filter(x, &pitch, &self.stft)?;
        let (_, spectrogram) = self.compensate(&coarse, &filtered)?;
        let wave = istft(&spectrogram, &self.stft, len)?;
        Ok(Enhanced {
            wave,
            spectrogram,
            intermediates,
            pitch,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensation::MASK_GROUP;
    use crate::nn::ParamKind;
    use crate::pitch::PITCH_GROUP;

    fn toy() -> (ModelConfig, StftConfig, PitchBins) {
        (
            ModelConfig::toy(),
            StftConfig::default(),
            PitchBins::default(),
        )
    }

    fn input(len: usize, seed: u64) -> Waveform {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new(
            (0..len)
                .map(|i| 0.3 * (i as f64 * 0.07).sin() + rng.random_range(-0.05..0.05))
                .collect(),
        )
    }

    #[test]
    fn outputs_have_input_shape_and_count() {
        let (cfg, st, bins) = toy();
        let e = Enhancer::new(&cfg, &st, &bins, 1).unwrap();
        let x = stft(&input(4000, 2), &st).unwrap();
        let outs = e.progressive_forward(&x).unwrap();
        assert_eq!(outs.len(), cfg.k + 1);
        for o in outs {
            let o = o.unwrap();
            assert_eq!((o.frames(), o.freqs()), (x.frames(), x.freqs()));
            assert!(o.is_finite());
        }
    }

    #[test]
    fn inference_is_bitwise_deterministic() {
        let (cfg, st, bins) = toy();
        let e = Enhancer::new(&cfg, &st, &bins, 3).unwrap();
        let x = input(3000, 4);
        let a = e.enhance(&x).unwrap();
        let b = Enhancer::new(&cfg, &st, &bins, 3)
            .unwrap()
            .enhance(&x)
            .unwrap();
        assert_eq!(a.wave.samples, b.wave.samples);
        assert_eq!(a.wave.len(), x.len());
        assert!(a.wave.is_finite());
        assert_eq!(a.intermediates.len(), cfg.k + 1);
    }

    #[test]
    fn perturbing_one_decoder_changes_only_its_output() {
        let (cfg, st, bins) = toy();
        let mut e = Enhancer::new(&cfg, &st, &bins, 5).unwrap();
        let x = stft(&input(3000, 6), &st).unwrap();
        let before = e.progressive_forward(&x).unwrap();
        let id = e.store.id("decoder[1].deconv.w").unwrap();
        e.store.get_mut(id).value.data_mut()[0] += 0.5;
        let after = e.progressive_forward(&x).unwrap();
        assert_ne!(
            before[0].as_ref().unwrap().data,
            after[0].as_ref().unwrap().data
        );
        for k in 1..before.len() {
            assert_eq!(
                before[k].as_ref().unwrap().data,
                after[k].as_ref().unwrap().data
            );
        }
    }

    #[test]
    fn phase_encoder_shape_and_no_scale_invariance() {
        let (cfg, st, bins) = toy();
        let e = Enhancer::new(&cfg, &st, &bins, 7).unwrap();
        let x = stft(&input(3000, 8), &st).unwrap();
        let y = e.phase_encode(&x).unwrap();
        assert_eq!(y.shape(), &[x.frames(), 257, cfg.pe_channels]);
        let mut x2 = x.clone();
        x2.data.mapv_inplace(|c| c * 2.0);
        assert!(y.max_abs_diff(&e.phase_encode(&x2).unwrap()) > 1e-4);
        let zero = ComplexSpectrogram::zeros(x.frames(), st);
        let z = e.phase_encode(&zero).unwrap();
        assert!(z.is_finite());
        assert_eq!(z, e.phase_encode(&zero).unwrap());
    }

    #[test]
    fn ablations_change_the_parameter_groups() {
        let (cfg, st, bins) = toy();
        let full = Enhancer::new(&cfg, &st, &bins, 0).unwrap().groups();
        assert!(
            full.contains(PITCH_GROUP)
                && full.contains(MASK_GROUP)
                && full.contains("phase_encoder")
        );
        let no_pe = Enhancer::new(
            &ModelConfig {
                no_pe: true,
                ..cfg.clone()
            },
            &st,
            &bins,
            0,
        )
        .unwrap();
        assert!(!no_pe.groups().contains("phase_encoder"));
        let no_pl = Enhancer::new(
            &ModelConfig {
                no_pl: true,
                ..cfg.clone()
            },
            &st,
            &bins,
            0,
        )
        .unwrap();
        assert!(!no_pl.groups().contains("decoder[1]") && no_pl.groups().contains("decoder[3]"));
        let no_hc = Enhancer::new(
            &ModelConfig {
                no_hc: true,
                ..cfg.clone()
            },
            &st,
            &bins,
            0,
        )
        .unwrap();
        assert!(!no_hc.groups().contains(MASK_GROUP) && !no_hc.groups().contains(PITCH_GROUP));
        for e in [no_pe, no_pl, no_hc] {
            let w = e.enhance(&input(3000, 1)).unwrap();
            assert!(w.wave.is_finite());
        }
        assert!(Enhancer::new(&cfg, &st, &bins, 0)
            .unwrap()
            .store
            .iter()
            .any(|(_, p)| p.kind == ParamKind::Buffer));
    }

    #[test]
    fn pitch_input_selects_the_estimator_source() {
        let (cfg, st, bins) = toy();
        let pick = |input| {
            Enhancer::new(
                &ModelConfig {
                    pitch_input: input,
                    ..cfg.clone()
                },
                &st,
                &bins,
                4,
            )
            .unwrap()
        };
        assert_eq!(
            pick(PitchInput::Intermediate).pitch_source(),
            Some(cfg.k - 1)
        );
        assert_eq!(pick(PitchInput::Coarse).pitch_source(), Some(cfg.k));
        let e = pick(PitchInput::Noisy);
        assert_eq!(e.pitch_source(), None);
        let x = input(3000, 3);
        let want = decode_pitch(
            &e.estimate_pitch(&stft(&x, &st).unwrap()).unwrap(),
            &bins,
            &st,
        );
        assert_eq!(e.enhance(&x).unwrap().pitch, want);
    }

    #[test]
    fn posterior_is_inside_unit_interval() {
        let (cfg, st, bins) = toy();
        let e = Enhancer::new(&cfg, &st, &bins, 9).unwrap();
        let x = stft(&input(3000, 10), &st).unwrap();
        let p = e.estimate_pitch(&x).unwrap();
        assert_eq!(p.data.ncols(), 226);
        assert!(p.data.iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn too_few_frames_is_an_error() {
        let (cfg, st, bins) = toy();
        let e = Enhancer::new(&cfg, &st, &bins, 0).unwrap();
        let x = ComplexSpectrogram::zeros(cfg.unfold_kernel - 1, st);
        assert!(matches!(
            e.progressive_forward(&x),
            Err(Error::TooShort { .. })
        ));
    }
}
