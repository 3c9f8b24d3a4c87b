//! Quantization, entropy coding, envelope sharing, and file-level VBR.

use rayon::prelude::*;

use crate::bitio::{BitReader, BitWriter};
use crate::error::{Error, Result};
use crate::perceptual::{BandGrid, PerceptualEnvelope, MAX_GAIN_STEP, MIN_GAIN_STEP};
use crate::transform::{MdctFrame, WindowType};

/// Largest representable quantization index magnitude.
pub const MAX_INDEX: u32 = (1 << 20) - 1;
/// Unary prefix length that signals a raw escape value.
pub const RICE_ESCAPE_PREFIX: u32 = 24;
pub const RICE_ESCAPE_BITS: u32 = 20;
pub const MAX_RICE_K: u32 = 20;
/// Per-band and per-envelope Rice parameters are sent in 4 bits.
pub const K_FIELD_BITS: u32 = 4;
const MAX_SIGNALLED_K: u32 = (1 << K_FIELD_BITS) - 1;
const FIRST_GAIN_BITS: u32 = 8;

pub const VBR_MIN_OFFSET_DB: f64 = -60.0;
pub const VBR_MAX_OFFSET_DB: f64 = 60.0;
pub const VBR_MAX_ITERATIONS: usize = 30;
pub const VBR_TOLERANCE: f64 = 0.05;
/// Offsets are stored in quarter-dB units.
pub const OFFSET_UNITS_PER_DB: f64 = 4.0;

/// Quantizer step for a given global offset.
pub fn step_size(step_db_offset: f64) -> f64 {
    10f64.powf(step_db_offset / 20.0)
}

/// Rounds an offset to the quarter-dB grid the header can carry.
pub fn snap_offset_db(db: f64) -> f64 {
    (db * OFFSET_UNITS_PER_DB).round() / OFFSET_UNITS_PER_DB
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFrame {
    pub window_type: WindowType,
    pub indices: Vec<i32>,
    pub step_db_offset: f64,
}

pub fn quantize_frame(perceptual: &MdctFrame, step_db_offset: f64) -> Result<QuantizedFrame> {
    let delta = step_size(step_db_offset);
    let limit = MAX_INDEX as f64;
    let indices = perceptual
        .lines
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if !x.is_finite() {
                return Err(Error::NonFinite(i));
            }
            Ok((x / delta).round().clamp(-limit, limit) as i32)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedFrame {
        window_type: perceptual.window_type,
        indices,
        step_db_offset,
    })
}

pub fn dequantize_frame(q: &QuantizedFrame) -> MdctFrame {
    let delta = step_size(q.step_db_offset);
    MdctFrame {
        window_type: q.window_type,
        lines: q.indices.iter().map(|&i| i as f64 * delta).collect(),
    }
}

/// Length in bits of the Rice code for `value` with parameter `k`.
pub fn rice_len(value: u32, k: u32) -> u64 {
    let q = value >> k;
    if q >= RICE_ESCAPE_PREFIX {
        (RICE_ESCAPE_PREFIX + RICE_ESCAPE_BITS) as u64
    } else {
        (q + 1 + k) as u64
    }
}

/// `q = value >> k` as `q` ones and a terminating zero, then the `k` low
/// bits. Quotients of 24 or more are sent as 24 ones followed by the value
/// in 20 raw bits.
pub fn rice_encode(w: &mut BitWriter, value: u32, k: u32) {
    debug_assert!(k <= MAX_RICE_K);
    debug_assert!(value <= MAX_INDEX);
    let q = value >> k;
    if q >= RICE_ESCAPE_PREFIX {
        w.write_bits((1 << RICE_ESCAPE_PREFIX) - 1, RICE_ESCAPE_PREFIX);
        w.write_bits(value as u64, RICE_ESCAPE_BITS);
    } else {
        for _ in 0..q {
            w.write_bit(true);
        }
        w.write_bit(false);
        w.write_bits((value & ((1 << k) - 1)) as u64, k);
    }
}

pub fn rice_decode(r: &mut BitReader<'_>, k: u32) -> Result<u32> {
    let mut q = 0;
    while q < RICE_ESCAPE_PREFIX {
        if !r.read_bit()? {
            let low = r.read_bits(k)? as u32;
            return Ok((q << k) | low);
        }
        q += 1;
    }
    Ok(r.read_bits(RICE_ESCAPE_BITS)? as u32)
}

pub fn zigzag(d: i32) -> u32 {
    if d >= 0 {
        (d as u32) << 1
    } else {
        ((-(d as i64)) as u32) * 2 - 1
    }
}

pub fn unzigzag(z: u32) -> i32 {
    if z & 1 == 0 {
        (z >> 1) as i32
    } else {
        -(((z >> 1) + 1) as i32)
    }
}

/// Smallest Rice parameter in `0..=15` minimizing the total length of `values`.
fn best_k(values: impl Iterator<Item = u32> + Clone) -> (u32, u64) {
    (0..=MAX_SIGNALLED_K)
        .map(|k| (k, values.clone().map(|v| rice_len(v, k)).sum::<u64>()))
        .min_by_key(|&(k, bits)| (bits, k))
        .unwrap()
}

fn clamp_steps(steps: &[i32]) -> Vec<i32> {
    steps.iter().map(|s| (*s).clamp(MIN_GAIN_STEP, MAX_GAIN_STEP)).collect()
}

/// Writes an envelope: one sharing bit, then (unless shared) the first
/// band's step as an 8-bit offset index, a 4-bit Rice parameter, and the
/// zig-zag mapped band-to-band step deltas.
///
/// An envelope is shared exactly when it equals `prev` on the same grid.
pub fn encode_envelope(w: &mut BitWriter, env: &PerceptualEnvelope, prev: Option<&PerceptualEnvelope>) {
    let steps = clamp_steps(&env.steps);
    let shared = prev.is_some_and(|p| p.grid == env.grid && p.steps == steps);
    w.write_bit(shared);
    if shared {
        return;
    }
    w.write_bits((steps[0] - MIN_GAIN_STEP) as u64, FIRST_GAIN_BITS);
    let deltas: Vec<u32> = steps.windows(2).map(|p| zigzag(p[1] - p[0])).collect();
    let (k, _) = best_k(deltas.iter().copied());
    w.write_bits(k as u64, K_FIELD_BITS);
    for d in deltas {
        rice_encode(w, d, k);
    }
}

pub fn envelope_bits(env: &PerceptualEnvelope, prev: Option<&PerceptualEnvelope>) -> u64 {
    let mut w = BitWriter::new();
    encode_envelope(&mut w, env, prev);
    w.bit_len()
}

pub fn decode_envelope(
    r: &mut BitReader<'_>,
    grid: BandGrid,
    prev: Option<&PerceptualEnvelope>,
) -> Result<PerceptualEnvelope> {
    if r.read_bit()? {
        return match prev {
            Some(p) if p.grid == grid => Ok(PerceptualEnvelope {
                grid,
                steps: p.steps.clone(),
                shared_with_previous: true,
            }),
            _ => Err(Error::Shape("shared envelope without a matching predecessor".into())),
        };
    }
    let bands = grid.layout().band_count();
    let mut steps = Vec::with_capacity(bands);
    steps.push(r.read_bits(FIRST_GAIN_BITS)? as i32 + MIN_GAIN_STEP);
    let k = r.read_bits(K_FIELD_BITS)? as u32;
    for _ in 1..bands {
        let d = unzigzag(rice_decode(r, k)?);
        steps.push(steps.last().unwrap() + d);
    }
    if steps.iter().any(|s| !(MIN_GAIN_STEP..=MAX_GAIN_STEP).contains(s)) {
        return Err(Error::Shape("envelope gain out of range".into()));
    }
    Ok(PerceptualEnvelope {
        grid,
        steps,
        shared_with_previous: false,
    })
}

/// True when `env` may be replaced by `prev`: same grid, the previous frame
/// was not SHORT, and no band differs by more than one 1.5 dB step.
pub fn decide_envelope_sharing(env: &PerceptualEnvelope, prev: &PerceptualEnvelope, prev_window: WindowType) -> bool {
    env.grid == prev.grid
        && !prev_window.is_short()
        && env.steps.len() == prev.steps.len()
        && env.steps.iter().zip(&prev.steps).all(|(a, b)| (a - b).abs() <= 1)
}

fn band_plan(indices: &[i32], grid: BandGrid) -> Vec<Option<(u32, u64)>> {
    let layout = grid.layout();
    (0..layout.band_count())
        .map(|b| {
            let band = &indices[layout.band(b)];
            if band.iter().all(|&i| i == 0) {
                None
            } else {
                let nonzero = band.iter().filter(|&&i| i != 0).count() as u64;
                let (k, bits) = best_k(band.iter().map(|i| i.unsigned_abs()));
                Some((k, bits + nonzero))
            }
        })
        .collect()
}

fn check_indices(q: &QuantizedFrame) -> Result<BandGrid> {
    let grid = BandGrid::for_window(q.window_type);
    if q.indices.len() != grid.lines() {
        return Err(Error::Shape(format!(
            "{} indices for a {} frame",
            q.indices.len(),
            q.window_type
        )));
    }
    if q.indices.iter().any(|i| i.unsigned_abs() > MAX_INDEX) {
        return Err(Error::Shape("quantization index exceeds 2^20 - 1".into()));
    }
    Ok(grid)
}

/// Per envelope band: a flag bit (0 = every index zero); for coded bands a
/// 4-bit Rice parameter, then each magnitude followed by a sign bit when
/// non-zero.
pub fn encode_coefficients(w: &mut BitWriter, q: &QuantizedFrame) -> Result<()> {
    let grid = check_indices(q)?;
    let layout = grid.layout();
    for (b, plan) in band_plan(&q.indices, grid).into_iter().enumerate() {
        let Some((k, _)) = plan else {
            w.write_bit(false);
            continue;
        };
        w.write_bit(true);
        w.write_bits(k as u64, K_FIELD_BITS);
        for &i in &q.indices[layout.band(b)] {
            rice_encode(w, i.unsigned_abs(), k);
            if i != 0 {
                w.write_bit(i < 0);
            }
        }
    }
    Ok(())
}

/// Exact size of [`encode_coefficients`]'s output without writing it.
pub fn coefficient_bits(q: &QuantizedFrame) -> u64 {
    let grid = BandGrid::for_window(q.window_type);
    band_plan(&q.indices, grid)
        .into_iter()
        .map(|p| 1 + p.map_or(0, |(_, bits)| K_FIELD_BITS as u64 + bits))
        .sum()
}

pub fn decode_coefficients(r: &mut BitReader<'_>, window_type: WindowType, step_db_offset: f64) -> Result<QuantizedFrame> {
    let grid = BandGrid::for_window(window_type);
    let layout = grid.layout();
    let mut indices = vec![0i32; grid.lines()];
    for b in 0..layout.band_count() {
        if !r.read_bit()? {
            continue;
        }
        let k = r.read_bits(K_FIELD_BITS)? as u32;
        for slot in &mut indices[layout.band(b)] {
            let m = rice_decode(r, k)?;
            if m > MAX_INDEX {
                return Err(Error::Shape("quantization index exceeds 2^20 - 1".into()));
            }
            *slot = if m != 0 && r.read_bit()? { -(m as i32) } else { m as i32 };
        }
    }
    Ok(QuantizedFrame {
        window_type,
        indices,
        step_db_offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateStatus {
    /// Landed within the tolerance window.
    Success,
    /// Even the finest step stays below the window.
    Floor,
    /// Even the coarsest step stays above the window.
    Ceiling,
    /// The bit count jumps across the window between adjacent offsets.
    Missed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateControlResult {
    pub status: RateStatus,
    pub step_db_offset: f64,
    /// Payload bits: side information plus coefficients, header excluded.
    pub total_bits: u64,
    pub achieved_kbps: f64,
}

/// Total coefficient bits for every frame at one offset.
pub fn coefficient_bits_at(perceptual: &[MdctFrame], step_db_offset: f64) -> Result<u64> {
    perceptual
        .par_iter()
        .map(|f| quantize_frame(f, step_db_offset).map(|q| coefficient_bits(&q)))
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Bisects the global step offset on the quarter-dB grid over
/// [-60, +60] dB until the file-average rate is within 5% of the target.
///
/// `side_bits` is everything in the payload that does not depend on the
/// offset (window types, envelopes, framing fields).
pub fn vbr_search(
    perceptual: &[MdctFrame],
    side_bits: u64,
    duration_secs: f64,
    target_kbps: f64,
) -> Result<RateControlResult> {
    if duration_secs <= 0.0 {
        return Err(Error::EmptySignal);
    }
    let eval = |units: i32| -> Result<RateControlResult> {
        let offset = units as f64 / OFFSET_UNITS_PER_DB;
        let total_bits = side_bits + coefficient_bits_at(perceptual, offset)?;
        Ok(RateControlResult {
            status: RateStatus::Success,
            step_db_offset: offset,
            total_bits,
            achieved_kbps: total_bits as f64 / duration_secs / 1000.0,
        })
    };
    let low_target = (1.0 - VBR_TOLERANCE) * target_kbps;
    let high_target = (1.0 + VBR_TOLERANCE) * target_kbps;
    let within = |r: &RateControlResult| r.achieved_kbps >= low_target && r.achieved_kbps <= high_target;

    let mut lo = (VBR_MIN_OFFSET_DB * OFFSET_UNITS_PER_DB) as i32;
    let mut hi = (VBR_MAX_OFFSET_DB * OFFSET_UNITS_PER_DB) as i32;
    let finest = eval(lo)?;
    if finest.achieved_kbps < low_target {
        return Ok(RateControlResult {
            status: RateStatus::Floor,
            ..finest
        });
    }
    let coarsest = eval(hi)?;
    if coarsest.achieved_kbps > high_target {
        return Ok(RateControlResult {
            status: RateStatus::Ceiling,
            ..coarsest
        });
    }
    for r in [&finest, &coarsest] {
        if within(r) {
            return Ok(*r);
        }
    }
    // invariant: rate(lo) above the window, rate(hi) below it
    let (mut above, mut below) = (finest, coarsest);
    for _ in 0..VBR_MAX_ITERATIONS {
        if hi - lo <= 1 {
            break;
        }
        let mid = lo + (hi - lo) / 2;
        let r = eval(mid)?;
        if within(&r) {
            return Ok(r);
        }
        if r.achieved_kbps > target_kbps {
            lo = mid;
            above = r;
        } else {
            hi = mid;
            below = r;
        }
    }
    let best = if (above.achieved_kbps - target_kbps).abs() <= (below.achieved_kbps - target_kbps).abs() {
        above
    } else {
        below
    };
    Ok(RateControlResult {
        status: RateStatus::Missed,
        ..best
    })
}
