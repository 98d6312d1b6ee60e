//! 16-bit PCM mono 16 kHz WAV reading and writing.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{Waveform, SAMPLE_RATE_HZ};

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let unsupported = |reason: String| Error::UnsupportedWav {
        path: path.to_path_buf(),
        reason,
    };
    if spec.channels != 1 {
        return Err(unsupported(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE_HZ {
        return Err(unsupported(format!(
            "{} Hz, expected {SAMPLE_RATE_HZ} Hz",
            spec.sample_rate
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(unsupported(format!(
            "{:?} {}-bit, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Waveform::new(samples))
}

/// Writes 16-bit PCM; samples are clipped to [-1, 1).
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    if wave.sample_rate_hz != SAMPLE_RATE_HZ {
        return Err(Error::ConfigMismatch(format!(
            "cannot write {} Hz audio",
            wave.sample_rate_hz
        )));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = hound::WavWriter::create(path, spec)?;
    for v in &wave.samples {
        let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let w = Waveform::new(vec![0.0, 0.5, -0.5, 0.999, -1.0]);
        write_wav(&path, &w).unwrap();
        let r = read_wav(&path).unwrap();
        for (a, b) in w.samples.iter().zip(&r.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn refuses_stereo_and_other_rates() {
        let dir = tempfile::tempdir().unwrap();
        for (ch, rate) in [(2u16, 16000u32), (1, 8000)] {
            let path = dir.path().join(format!("{ch}_{rate}.wav"));
            let spec = hound::WavSpec {
                channels: ch,
                sample_rate: rate,
                bits_per_sample: 16,
                sample_format: hound::SampleFormat::Int,
            };
            let mut w = hound::WavWriter::create(&path, spec).unwrap();
            for _ in 0..8 {
                w.write_sample(0i16).unwrap();
            }
            w.finalize().unwrap();
            assert!(matches!(read_wav(&path), Err(Error::UnsupportedWav { .. })));
        }
    }
}
