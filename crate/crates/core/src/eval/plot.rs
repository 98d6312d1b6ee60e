//! Log-magnitude spectrogram images.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;
use crate::signal::ComplexSpectrogram;

pub const FLOOR_DB: f64 = -80.0;

/// Dark-to-bright palette stops, sampled linearly.
const PALETTE: [[u8; 3]; 5] = [
    [0, 0, 4],
    [81, 18, 124],
    [183, 55, 121],
    [252, 137, 97],
    [252, 253, 191],
];

pub fn palette(v: f64) -> Rgb<u8> {
    let x = v.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let i = (x.floor() as usize).min(PALETTE.len() - 2);
    let f = x - i as f64;
    let (a, b) = (PALETTE[i], PALETTE[i + 1]);
    Rgb(std::array::from_fn(|c| {
        (a[c] as f64 + f * (b[c] as f64 - a[c] as f64)).round() as u8
    }))
}

/// Levels in dB relative to the loudest bin, clipped to `[FLOOR_DB, 0]`; all floor when silent.
pub fn db_levels(s: &ComplexSpectrogram) -> ndarray::Array2<f64> {
    let mag = s.magnitude();
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    mag.mapv(|m| {
        if peak > 0.0 && m > 0.0 {
            (20.0 * (m / peak).log10()).max(FLOOR_DB)
        } else {
            FLOOR_DB
        }
    })
}

/// One pixel per bin: time on x, frequency on y with low frequencies at the bottom.
pub fn spectrogram_image(s: &ComplexSpectrogram) -> RgbImage {
    let db = db_levels(s);
    let (t, f) = db.dim();
    RgbImage::from_fn(t as u32, f as u32, |x, y| {
        palette((db[[x as usize, f - 1 - y as usize]] - FLOOR_DB) / -FLOOR_DB)
    })
}

pub fn render_spectrogram(s: &ComplexSpectrogram, path: impl AsRef<Path>) -> Result<()> {
    spectrogram_image(s).save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, StftConfig, Waveform};

    #[test]
    fn silence_is_uniform_floor() {
        let s = ComplexSpectrogram::zeros(10, StftConfig::default());
        let img = spectrogram_image(&s);
        assert_eq!(img.dimensions(), (10, 257));
        assert!(img.pixels().all(|p| *p == palette(0.0)));
    }

    #[test]
    fn tone_draws_a_ridge_at_its_bin() {
        let x = Waveform::new(
            (0..8000)
                .map(|n| (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / 16000.0).sin())
                .collect(),
        );
        let img = spectrogram_image(&stft(&x, &StftConfig::default()).unwrap());
        let brightness = |p: &Rgb<u8>| p.0.iter().map(|&c| c as u32).sum::<u32>();
        for xcol in 2..img.width() - 2 {
            let brightest = (0..img.height())
                .max_by_key(|&y| brightness(img.get_pixel(xcol, y)))
                .unwrap();
            assert_eq!(256 - brightest, 32);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let x = Waveform::new((0..6000).map(|n| ((n * n) as f64 * 1e-5).sin()).collect());
        let s = stft(&x, &StftConfig::default()).unwrap();
        render_spectrogram(&s, dir.path().join("a.png")).unwrap();
        render_spectrogram(&s, dir.path().join("b.png")).unwrap();
        assert_eq!(
            std::fs::read(dir.path().join("a.png")).unwrap(),
            std::fs::read(dir.path().join("b.png")).unwrap()
        );
        assert!(render_spectrogram(&s, dir.path().join("missing").join("c.png")).is_err());
    }
}
