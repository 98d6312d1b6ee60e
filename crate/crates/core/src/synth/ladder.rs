use crate::error::Result;
use crate::signal::{stft, ComplexSpectrogram, StftConfig, Waveform};
use crate::synth::mixing::{crop_noise, mix_with_crop};

#[derive(Debug, Clone)]
pub struct ProgressiveTarget {
    pub waveform: Waveform,
    pub spectrogram: ComplexSpectrogram,
    /// Nominal SNR against the clean target; `None` for the clean target itself.
    pub nominal_snr_db: Option<f64>,
}

/// Targets S_1..S_{K+1}; the first K share one noise crop at rising SNR, the last is clean.
#[derive(Debug, Clone)]
pub struct ProgressiveTargetSet {
    pub targets: Vec<ProgressiveTarget>,
    pub k: usize,
    pub delta_snr_db: f64,
    pub noise_gains: Vec<f64>,
}

impl ProgressiveTargetSet {
    pub fn clean(&self) -> &ProgressiveTarget {
        self.targets
            .last()
            .expect("a target set always holds the clean target")
    }
}

/// Builds the SNR ladder from the same noise crop (same `seed`) as the input mixture.
pub fn make_progressive_targets(
    s_target: &Waveform,
    n: &Waveform,
    input_snr_db: f64,
    k: usize,
    delta_db: f64,
    seed: u64,
    cfg: &StftConfig,
) -> Result<ProgressiveTargetSet> {
    let crop = crop_noise(n, s_target.len(), seed)?;
    let mut targets = Vec::with_capacity(k + 1);
    let mut noise_gains = Vec::with_capacity(k);
    for step in 1..=k {
        let snr = input_snr_db + step as f64 * delta_db;
        let (wave, gain) = mix_with_crop(s_target, &crop.noise, snr)?;
        noise_gains.push(gain);
        targets.push(ProgressiveTarget {
            spectrogram: stft(&wave, cfg)?,
            waveform: wave,
            nominal_snr_db: Some(snr),
        });
    }
    targets.push(ProgressiveTarget {
        waveform: s_target.clone(),
        spectrogram: stft(s_target, cfg)?,
        nominal_snr_db: None,
    });
    Ok(ProgressiveTargetSet {
        targets,
        k,
        delta_snr_db: delta_db,
        noise_gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::snr_db;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(len: usize, seed: u64, scale: f64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new(
            (0..len)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    scale * g
                })
                .collect::<Vec<f64>>(),
        )
    }

    #[test]
    fn ladder_minus_ten_by_five() {
        let cfg = StftConfig::default();
        let s = gauss(8000, 1, 0.1);
        let n = gauss(12000, 2, 0.3);
        let set = make_progressive_targets(&s, &n, -10.0, 4, 5.0, 77, &cfg).unwrap();
        assert_eq!(set.targets.len(), 5);
        let nominal: Vec<f64> = set.targets[..4]
            .iter()
            .map(|t| t.nominal_snr_db.unwrap())
            .collect();
        assert_eq!(nominal, vec![-5.0, 0.0, 5.0, 10.0]);
        for t in &set.targets[..4] {
            let measured = snr_db(&t.waveform, &s).unwrap();
            assert!((measured - t.nominal_snr_db.unwrap()).abs() < 0.05);
        }
        assert_eq!(set.clean().waveform, s);
    }

    #[test]
    fn k_zero_is_clean_only() {
        let cfg = StftConfig::default();
        let s = gauss(4000, 3, 0.1);
        let set =
            make_progressive_targets(&s, &gauss(4000, 4, 0.1), -3.0, 0, 5.0, 1, &cfg).unwrap();
        assert_eq!(set.targets.len(), 1);
        assert_eq!(set.clean().waveform, s);
    }

    #[test]
    fn ladder_reuses_one_noise_crop() {
        let cfg = StftConfig::default();
        let s = gauss(4000, 5, 0.1);
        let n = gauss(9000, 6, 0.2);
        let set = make_progressive_targets(&s, &n, -12.0, 3, 5.0, 9, &cfg).unwrap();
        let crop = crop_noise(&n, s.len(), 9).unwrap();
        for (t, g) in set.targets.iter().zip(&set.noise_gains) {
            let resid = t
                .waveform
                .samples
                .iter()
                .zip(&s.samples)
                .zip(&crop.noise.samples)
                .map(|((x, c), nn)| (x - c - g * nn).abs())
                .fold(0.0, f64::max);
            assert!(resid < 1e-12);
        }
    }
}
