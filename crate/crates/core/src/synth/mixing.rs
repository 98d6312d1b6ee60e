use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Noise excerpt chosen for one mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCrop {
    pub offset: usize,
    pub noise: Waveform,
}

/// Crops `len` samples of `noise` at an offset drawn from `seed`.
pub fn crop_noise(noise: &Waveform, len: usize, seed: u64) -> Result<NoiseCrop> {
    if noise.len() < len {
        return Err(Error::LengthMismatch(noise.len(), len));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.random_range(0..=noise.len() - len);
    Ok(NoiseCrop {
        offset,
        noise: Waveform {
            samples: noise.samples[offset..offset + len].to_vec(),
            sample_rate_hz: noise.sample_rate_hz,
        },
    })
}

/// Gain that puts `noise` at `target_db` below `speech` (full-utterance RMS).
pub fn snr_gain(speech: &Waveform, noise: &Waveform, target_db: f64) -> Result<f64> {
    let (rs, rn) = (speech.rms(), noise.rms());
    if rs == 0.0 {
        return Err(Error::Silent("clean"));
    }
    if rn == 0.0 {
        return Err(Error::Silent("noise"));
    }
    Ok(rs / rn * 10f64.powf(-target_db / 20.0))
}

/// `speech + g * noise` where both have the same length; returns the mixture and `g`.
pub fn mix_with_crop(
    speech: &Waveform,
    noise: &Waveform,
    target_db: f64,
) -> Result<(Waveform, f64)> {
    if speech.len() != noise.len() {
        return Err(Error::LengthMismatch(speech.len(), noise.len()));
    }
    let g = snr_gain(speech, noise, target_db)?;
    let samples = speech
        .samples
        .iter()
        .zip(&noise.samples)
        .map(|(s, n)| s + g * n)
        .collect();
    Ok((
        Waveform {
            samples,
            sample_rate_hz: speech.sample_rate_hz,
        },
        g,
    ))
}

/// Mixes `s` with a seeded crop of `n` at `target_db`.
pub fn mix_at_snr(s: &Waveform, n: &Waveform, target_db: f64, seed: u64) -> Result<Waveform> {
    if s.rms() == 0.0 {
        return Err(Error::Silent("clean"));
    }
    let crop = crop_noise(n, s.len(), seed)?;
    Ok(mix_with_crop(s, &crop.noise, target_db)?.0)
}
