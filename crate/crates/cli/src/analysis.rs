//! Objective measures on a fixed all-LONG MDCT grid.

use std::io::Write;

use anyhow::{bail, Result};
use mdcn::audio::AudioBuffer;
use mdcn::transform::{mdct_analyze, pad_to_hop, slots_for_len, WindowSequence, HOP, LONG_LINES};

pub const FLOOR_DB: f64 = -100.0;
/// Lines shown in a spectrogram: 0 to 18 kHz at 31.25 Hz per line.
pub const SPECTROGRAM_LINES: usize = 576;

/// Peak line magnitude of a full-scale sinusoid centred on a line
/// (half the sum of the sine window).
fn full_scale() -> f64 {
    2.0 * LONG_LINES as f64 / std::f64::consts::PI
}

/// Line magnitudes in dBFS, floored, one row of 768 per frame.
pub fn spectrum_db(audio: &AudioBuffer) -> Result<Vec<Vec<f64>>> {
    if audio.is_empty() {
        return Ok(Vec::new());
    }
    let padded = pad_to_hop(audio);
    let seq = WindowSequence::all_long(slots_for_len(audio.len()));
    let frames = mdct_analyze(&padded, &seq)?;
    let fs = full_scale();
    Ok(frames
        .into_iter()
        .map(|f| {
            f.lines
                .iter()
                .map(|v| (20.0 * (v.abs() / fs).log10()).max(FLOOR_DB))
                .collect()
        })
        .collect())
}

/// Log-spectral distance in dB. Lengths may differ by at most one hop;
/// the longer signal is trimmed.
pub fn log_spectral_distance(reference: &AudioBuffer, test: &AudioBuffer) -> Result<f64> {
    let (a, b) = (reference.len(), test.len());
    if a.abs_diff(b) > HOP {
        bail!("lengths differ by {} samples (more than one frame): {a} vs {b}", a.abs_diff(b));
    }
    let n = a.min(b);
    if n == 0 {
        return Ok(0.0);
    }
    let trim = |x: &AudioBuffer| AudioBuffer::new(x.samples()[..n].to_vec());
    let (r, t) = (spectrum_db(&trim(reference)?)?, spectrum_db(&trim(test)?)?);
    let total: f64 = r
        .iter()
        .zip(&t)
        .map(|(fr, ft)| {
            let ms = fr.iter().zip(ft).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / LONG_LINES as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / r.len() as f64)
}

/// Spectrogram clipped to [-100, 0] dBFS, lines 0..576 per frame.
pub fn spectrogram(audio: &AudioBuffer) -> Result<Vec<Vec<f64>>> {
    Ok(spectrum_db(audio)?
        .into_iter()
        .map(|row| row[..SPECTROGRAM_LINES].iter().map(|v| v.min(0.0)).collect())
        .collect())
}

/// Binary 8-bit PGM: one column per frame, highest frequency on top.
pub fn write_pgm<W: Write>(mut w: W, spec: &[Vec<f64>]) -> Result<()> {
    let width = spec.len().max(1);
    write!(w, "P5\n{width} {SPECTROGRAM_LINES}\n255\n")?;
    let mut pixels = vec![0u8; width * SPECTROGRAM_LINES];
    for (x, col) in spec.iter().enumerate() {
        for (line, db) in col.iter().enumerate() {
            let row = SPECTROGRAM_LINES - 1 - line;
            pixels[row * width + x] = ((db - FLOOR_DB) / -FLOOR_DB * 255.0).round() as u8;
        }
    }
    w.write_all(&pixels)?;
    Ok(())
}

/// One row per frame: frame index then the line levels in dB.
pub fn write_csv<W: Write>(mut w: W, spec: &[Vec<f64>]) -> Result<()> {
    write!(w, "frame")?;
    for line in 0..SPECTROGRAM_LINES {
        write!(w, ",line{line}")?;
    }
    writeln!(w)?;
    for (i, col) in spec.iter().enumerate() {
        write!(w, "{i}")?;
        for v in col {
            write!(w, ",{v:.2}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
