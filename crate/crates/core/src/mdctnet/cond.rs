use crate::coding::{dequantize_frame, QuantizedFrame};
use crate::error::{Error, Result};
use crate::perceptual::{envelope_to_line_gains, BandGrid, PerceptualEnvelope};
use crate::transform::{WindowSequence, WindowType, LONG_LINES, SHORT_LINES};

pub const ONE_HOT_CHANNELS: usize = 4;

/// Per-frame network inputs derived from a decoded stream, all on the
/// 768-line grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningContext {
    pub windows: Vec<WindowType>,
    /// Dequantized perceptual coefficients, `frames × 768`.
    pub coefficients: Vec<f64>,
    /// Natural log of the envelope line gains, `frames × 768`.
    pub log_gains: Vec<f64>,
    /// Window type one-hot in [LONG, START, SHORT, STOP] order, `frames × 4`.
    pub one_hot: Vec<f64>,
}

impl ConditioningContext {
    pub fn frames(&self) -> usize {
        self.windows.len()
    }

    /// Frames `[start, start + len)`.
    pub fn crop(&self, start: usize, len: usize) -> Self {
        let r = start..start + len;
        Self {
            windows: self.windows[r.clone()].to_vec(),
            coefficients: self.coefficients[start * LONG_LINES..(start + len) * LONG_LINES].to_vec(),
            log_gains: self.log_gains[start * LONG_LINES..(start + len) * LONG_LINES].to_vec(),
            one_hot: self.one_hot[start * ONE_HOT_CHANNELS..(start + len) * ONE_HOT_CHANNELS].to_vec(),
        }
    }
}

/// Maps a frame onto the 768-line grid: short frames repeat every line four
/// times, long frames pass through.
pub fn expand_frame(lines: &[f64]) -> Vec<f64> {
    if lines.len() == LONG_LINES {
        return lines.to_vec();
    }
    let rep = LONG_LINES / lines.len();
    lines.iter().flat_map(|&v| std::iter::repeat_n(v, rep)).collect()
}

/// Inverse of [`expand_frame`] for a short frame: averages each group of
/// four replicas.
pub fn collapse_frame(lines: &[f64], window: WindowType) -> Vec<f64> {
    if !window.is_short() {
        return lines.to_vec();
    }
    let rep = LONG_LINES / SHORT_LINES;
    lines.chunks(rep).map(|c| c.iter().sum::<f64>() / rep as f64).collect()
}

pub fn prepare_conditioning(
    quantized: &[QuantizedFrame],
    envelopes: &[PerceptualEnvelope],
    seq: &WindowSequence,
) -> Result<ConditioningContext> {
    for (what, n) in [("quantized frames", quantized.len()), ("envelopes", envelopes.len())] {
        if n != seq.len() {
            return Err(Error::Shape(format!("{n} {what} for a sequence of {}", seq.len())));
        }
    }
    let t = seq.len();
    let mut ctx = ConditioningContext {
        windows: seq.frames().to_vec(),
        coefficients: Vec::with_capacity(t * LONG_LINES),
        log_gains: Vec::with_capacity(t * LONG_LINES),
        one_hot: vec![0.0; t * ONE_HOT_CHANNELS],
    };
    for (i, ((q, e), &w)) in quantized.iter().zip(envelopes).zip(seq.frames()).enumerate() {
        if q.window_type != w || e.grid != BandGrid::for_window(w) {
            return Err(Error::FrameMismatch {
                index: i,
                reason: "conditioning does not match the window sequence".into(),
            });
        }
        ctx.coefficients.extend(expand_frame(&dequantize_frame(q).lines));
        let gains: Vec<f64> = envelope_to_line_gains(e).iter().map(|g| g.ln()).collect();
        ctx.log_gains.extend(expand_frame(&gains));
        ctx.one_hot[i * ONE_HOT_CHANNELS + w.index()] = 1.0;
    }
    Ok(ctx)
}
