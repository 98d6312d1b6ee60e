//! Desk-scale synthetic material: vowel-like harmonic utterances and stationary noises.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::signal::{StftConfig, Waveform, SAMPLE_RATE_HZ};
use crate::synth::f0::PitchTrack;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VowelConfig {
    pub duration_s: f64,
    pub f0_low_hz: f64,
    pub f0_high_hz: f64,
    pub peak: f64,
    /// RMS of a white recording floor relative to `peak`, in dB; `None` leaves exact silence.
    pub floor_db: Option<f64>,
}

impl Default for VowelConfig {
    fn default() -> Self {
        Self {
            duration_s: 1.0,
            f0_low_hz: 80.0,
            f0_high_hz: 300.0,
            peak: 0.5,
            floor_db: Some(-50.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VowelUtterance {
    pub wave: Waveform,
    /// Generator f0 per sample, 0 in the gaps between voiced segments.
    pub f0_per_sample: Vec<f64>,
}

impl VowelUtterance {
    /// Ground-truth f0 at each STFT frame center; frames at low envelope count as unvoiced.
    pub fn frame_track(&self, cfg: &StftConfig) -> PitchTrack {
        let frames = cfg.frame_count(self.wave.len());
        let mut track = PitchTrack::unvoiced(frames, cfg.hop_samples);
        for t in 0..frames {
            let c = (t * cfg.hop_samples).min(self.wave.len() - 1);
            let f = self.f0_per_sample[c];
            if f > 0.0 {
                track.f0_hz[t] = f;
                track.voicing[t] = true;
            }
        }
        track
    }
}

fn formant_gain(f: f64, formants: &[(f64, f64, f64)]) -> f64 {
    let tilt = 1.0 / (1.0 + f / 400.0);
    let peaks: f64 = formants
        .iter()
        .map(|(fc, bw, g)| g * (-(f - fc).powi(2) / (2.0 * bw * bw)).exp())
        .sum();
    tilt * (0.15 + peaks)
}

/// Voiced segments with gliding f0 and random formants, separated by short pauses that hold
/// only the recording floor.
pub fn vowel_utterance(cfg: &VowelConfig, seed: u64) -> VowelUtterance {
    let fs = SAMPLE_RATE_HZ as f64;
    let len = (cfg.duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![0.0; len];
    let mut f0_track = vec![0.0; len];
    let mut pos = (rng.random_range(0.03..0.1) * fs) as usize;
    while pos < len {
        let seg_len = ((rng.random_range(0.25..0.6) * fs) as usize).min(len - pos);
        let base = rng.random_range(cfg.f0_low_hz..cfg.f0_high_hz);
        let glide = rng.random_range(-0.15..0.15);
        let vib_rate = rng.random_range(3.0..6.0);
        let vib_depth = rng.random_range(0.0..0.03);
        let vib_phase = rng.random_range(0.0..2.0 * PI);
        let formants = [
            (
                rng.random_range(300.0..850.0),
                rng.random_range(60.0..120.0),
                1.0,
            ),
            (
                rng.random_range(850.0..2300.0),
                rng.random_range(80.0..150.0),
                0.6,
            ),
            (
                rng.random_range(2300.0..3200.0),
                rng.random_range(100.0..200.0),
                0.3,
            ),
        ];
        let fade = (0.03 * fs) as usize;
        let mut phases = vec![0.0f64; 64];
        for n in 0..seg_len {
            let u = n as f64 / seg_len.max(1) as f64;
            let tsec = n as f64 / fs;
            let f0 = base
                * (1.0 + glide * u)
                * (1.0 + vib_depth * (2.0 * PI * vib_rate * tsec + vib_phase).sin());
            let env = if n < fade {
                0.5 - 0.5 * (PI * n as f64 / fade as f64).cos()
            } else if seg_len - n <= fade {
                0.5 - 0.5 * (PI * (seg_len - n) as f64 / fade as f64).cos()
            } else {
                1.0
            };
            let mut acc = 0.0;
            for (h, phase) in phases.iter_mut().enumerate() {
                let fh = (h + 1) as f64 * f0;
                if fh >= 7000.0 {
                    break;
                }
                *phase += 2.0 * PI * fh / fs;
                acc += formant_gain(fh, &formants) * phase.sin();
            }
            samples[pos + n] = env * acc;
            if env > 0.5 {
                f0_track[pos + n] = f0;
            }
        }
        pos += seg_len + (rng.random_range(0.05..0.15) * fs) as usize;
    }
    let voiced_peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(db) = cfg.floor_db {
        let rms = voiced_peak.max(1e-3) * 10f64.powf(db / 20.0);
        let mut floor_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF100_F100);
        for v in samples.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut floor_rng);
            *v += rms * z;
        }
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|v| *v *= cfg.peak / peak);
    }
    VowelUtterance {
        wave: Waveform::new(samples),
        f0_per_sample: f0_track,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    Pink,
}

/// Unit-RMS stationary noise.
pub fn noise(kind: NoiseKind, len: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let samples = match kind {
        NoiseKind::White => white,
        NoiseKind::Pink => {
            // Paul Kellet's refined pink filter
            let mut b = [0.0f64; 7];
            white
                .iter()
                .map(|&w| {
                    b[0] = 0.99886 * b[0] + w * 0.0555179;
                    b[1] = 0.99332 * b[1] + w * 0.0750759;
                    b[2] = 0.96900 * b[2] + w * 0.1538520;
                    b[3] = 0.86650 * b[3] + w * 0.3104856;
                    b[4] = 0.55000 * b[4] + w * 0.5329522;
                    b[5] = -0.7616 * b[5] - w * 0.0168980;
                    let out = b.iter().sum::<f64>() + w * 0.5362;
                    b[6] = w * 0.115926;
                    out
                })
                .collect()
        }
    };
    let w = Waveform::new(samples);
    let rms = w.rms();
    if rms > 0.0 {
        w.scaled(1.0 / rms)
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::f0::extract_f0;
    use crate::synth::labels::PitchBins;

    #[test]
    fn vowel_is_deterministic_and_bounded() {
        let a = vowel_utterance(&VowelConfig::default(), 5);
        let b = vowel_utterance(&VowelConfig::default(), 5);
        assert_eq!(a.wave, b.wave);
        assert!((a.wave.peak() - 0.5).abs() < 1e-12);
        assert!(a.f0_per_sample.contains(&0.0));
        assert!(a.f0_per_sample.iter().any(|f| *f > 0.0));
        // Pauses carry the floor, about 50 dB under the peak, never exact silence.
        let gap: Vec<f64> = a.wave.samples[..400].to_vec();
        let rms = (gap.iter().map(|v| v * v).sum::<f64>() / gap.len() as f64).sqrt();
        assert!(
            rms > 0.5 * 10f64.powf(-55.0 / 20.0) && rms < 0.5 * 10f64.powf(-45.0 / 20.0),
            "{rms}"
        );
        let silent = vowel_utterance(
            &VowelConfig {
                floor_db: None,
                ..VowelConfig::default()
            },
            5,
        );
        assert!(silent.wave.samples[..400].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn yin_tracks_vowels() {
        let cfg = StftConfig::default();
        let bins = PitchBins::default();
        let (mut ok, mut total) = (0, 0);
        for seed in 0..5 {
            let utt = vowel_utterance(&VowelConfig::default(), seed);
            let truth = utt.frame_track(&cfg);
            let est = extract_f0(&utt.wave, &cfg);
            for t in 0..truth.frames() {
                if truth.voicing[t] {
                    total += 1;
                    if est.voicing[t]
                        && bins.bin(est.f0_hz[t]).abs_diff(bins.bin(truth.f0_hz[t])) <= 1
                    {
                        ok += 1;
                    }
                }
            }
        }
        assert!(ok as f64 > 0.85 * total as f64, "{ok}/{total}");
    }

    #[test]
    fn noises_have_unit_rms() {
        for kind in [NoiseKind::White, NoiseKind::Pink] {
            let n = noise(kind, 8000, 1);
            assert!((n.rms() - 1.0).abs() < 1e-12);
        }
    }
}
