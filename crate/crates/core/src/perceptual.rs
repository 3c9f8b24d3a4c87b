//! Masking model, perceptual envelopes, and perceptual-domain weighting.
//!
//! The masking model is a simplified gammatone analysis: every band has a
//! fourth-order gammatone magnitude response centred on the band, the
//! weighted line powers are spread across bands with fixed slopes, lowered
//! by a masker offset, and floored at the absolute threshold of hearing.
//! Thresholds are expressed as per-line MDCT power in dB so that dividing a
//! frame by the envelope puts the threshold at unit level.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::transform::{MdctFrame, WindowType, LONG_LINES, SHORT_LINES};

pub const LONG_BANDS: usize = 44;
pub const SHORT_BANDS: usize = 19;
/// Envelope quantization step in dB.
pub const GAIN_STEP_DB: f64 = 1.5;
pub const MIN_GAIN_STEP: i32 = -80; // -120 dB
pub const MAX_GAIN_STEP: i32 = 40; // +60 dB

/// Masking spread toward lower bands, dB per band.
pub const SPREAD_DOWN_DB: f64 = 25.0;
/// Masking spread toward higher bands, dB per band.
pub const SPREAD_UP_DB: f64 = 10.0;
pub const MASKER_OFFSET_DB: f64 = -15.0;
/// Hearing-threshold values are capped here so the floor never acts as a
/// bandwidth limit on its own.
pub const ATH_CAP_DB_SPL: f64 = 70.0;
/// Level assigned to a full-scale sine.
pub const FULL_SCALE_DB_SPL: f64 = 96.0;

const NYQUIST: f64 = 24_000.0;
const MIN_FIRST_BAND: usize = 4;

/// Line grid a frame lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandGrid {
    Long,
    Short,
}

impl BandGrid {
    pub fn for_window(w: WindowType) -> Self {
        if w.is_short() {
            BandGrid::Short
        } else {
            BandGrid::Long
        }
    }

    pub fn lines(self) -> usize {
        match self {
            BandGrid::Long => LONG_LINES,
            BandGrid::Short => SHORT_LINES,
        }
    }

    pub fn layout(self) -> &'static BandLayout {
        static LONG: OnceLock<BandLayout> = OnceLock::new();
        static SHORT: OnceLock<BandLayout> = OnceLock::new();
        match self {
            BandGrid::Long => LONG.get_or_init(|| BandLayout::erb_spaced(LONG_LINES, LONG_BANDS)),
            BandGrid::Short => SHORT.get_or_init(|| BandLayout::erb_spaced(SHORT_LINES, SHORT_BANDS)),
        }
    }
}

pub fn erb_hz(f: f64) -> f64 {
    24.7 * (1.0 + 0.00437 * f)
}

/// Terhardt's threshold in quiet, dB SPL, `f` in Hz.
pub fn threshold_in_quiet_db_spl(f: f64) -> f64 {
    let k = (f / 1000.0).max(0.02);
    3.64 * k.powf(-0.8) - 6.5 * (-0.6 * (k - 3.3).powi(2)).exp() + 1e-3 * k.powi(4)
}

/// Partition of a frame's lines into contiguous bands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandLayout {
    edges: Vec<usize>,
}

impl BandLayout {
    pub fn from_edges(edges: Vec<usize>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("invalid band edges {edges:?}")));
        }
        Ok(Self { edges })
    }

    /// Band widths proportional to the ERB at each band's lower edge, with
    /// the first band at least four lines and widths non-decreasing. The
    /// proportionality factor is the largest one that still leaves the top
    /// band at least as wide as its neighbour.
    fn erb_spaced(lines: usize, bands: usize) -> Self {
        let df = NYQUIST / lines as f64;
        let build = |c: f64| -> (Vec<usize>, usize, usize) {
            let mut edges = vec![0];
            let mut prev = MIN_FIRST_BAND;
            for _ in 0..bands - 1 {
                let lo = *edges.last().unwrap();
                let w = prev.max((c * erb_hz(lo as f64 * df) / df).round() as usize).min(lines);
                edges.push(lo + w);
                prev = w;
            }
            let last = lines.saturating_sub(*edges.last().unwrap());
            (edges, last, prev)
        };
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let (_, last, prev) = build(mid);
            if last >= prev {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (mut edges, _, _) = build(lo);
        edges.push(lines);
        Self::from_edges(edges).expect("fitted layout is a partition")
    }

    pub fn band_count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn line_count(&self) -> usize {
        *self.edges.last().unwrap()
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn band(&self, b: usize) -> std::ops::Range<usize> {
        self.edges[b]..self.edges[b + 1]
    }

    pub fn width(&self, b: usize) -> usize {
        self.edges[b + 1] - self.edges[b]
    }

    pub fn band_of_line(&self, line: usize) -> usize {
        self.edges.partition_point(|&e| e <= line) - 1
    }

    /// Expands per-band dB gains (in 1.5 dB steps) into linear per-line gains.
    pub fn line_gains(&self, steps: &[i32]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.line_count());
        for (b, &s) in steps.iter().enumerate().take(self.band_count()) {
            out.extend(std::iter::repeat_n(step_to_linear(s), self.width(b)));
        }
        out
    }

    /// Whitespace-separated `band start end` rows, end exclusive.
    pub fn to_table(&self) -> String {
        let mut s = String::from("# band start_line end_line_exclusive\n");
        for b in 0..self.band_count() {
            s.push_str(&format!("{b} {} {}\n", self.edges[b], self.edges[b + 1]));
        }
        s
    }
}

/// Both standard layouts as one text document.
pub fn band_tables_text() -> String {
    format!(
        "## LONG grid: {} bands over {} lines (31.25 Hz per line)\n{}## SHORT grid: {} bands over {} lines (125 Hz per line)\n{}",
        LONG_BANDS,
        LONG_LINES,
        BandGrid::Long.layout().to_table(),
        SHORT_BANDS,
        SHORT_LINES,
        BandGrid::Short.layout().to_table()
    )
}

fn step_to_linear(step: i32) -> f64 {
    10f64.powf(step as f64 * GAIN_STEP_DB / 20.0)
}

/// Per-band gammatone weights and constants for one grid.
struct MaskingTables {
    /// `weights[b][k]`: gammatone magnitude of band b at line k.
    weights: Vec<Vec<f64>>,
    norms: Vec<f64>,
    floor_db: Vec<f64>,
}

fn masking_tables(grid: BandGrid) -> &'static MaskingTables {
    static LONG: OnceLock<MaskingTables> = OnceLock::new();
    static SHORT: OnceLock<MaskingTables> = OnceLock::new();
    let build = || {
        let layout = grid.layout();
        let lines = layout.line_count();
        let df = NYQUIST / lines as f64;
        let mut weights = Vec::with_capacity(layout.band_count());
        let mut norms = Vec::with_capacity(layout.band_count());
        let mut floor_db = Vec::with_capacity(layout.band_count());
        for b in 0..layout.band_count() {
            let r = layout.band(b);
            let fc = 0.5 * (r.start + r.end) as f64 * df;
            let bw = 1.019 * erb_hz(fc);
            let w: Vec<f64> = (0..lines)
                .map(|k| {
                    let x = ((k as f64 + 0.5) * df - fc) / bw;
                    (1.0 + x * x).powi(-2)
                })
                .collect();
            norms.push(w.iter().sum());
            weights.push(w);
            // per-line power of white noise sitting at the hearing threshold
            let ath = threshold_in_quiet_db_spl(fc).min(ATH_CAP_DB_SPL);
            floor_db.push(ath - FULL_SCALE_DB_SPL + 10.0 * (lines as f64 / 4.0).log10());
        }
        MaskingTables {
            weights,
            norms,
            floor_db,
        }
    };
    match grid {
        BandGrid::Long => LONG.get_or_init(build),
        BandGrid::Short => SHORT.get_or_init(build),
    }
}

/// Absolute floor per band, dB of per-line MDCT power.
pub fn hearing_floor_db(grid: BandGrid) -> &'static [f64] {
    &masking_tables(grid).floor_db
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskingThreshold {
    pub grid: BandGrid,
    /// Per-band threshold, dB of per-line MDCT power.
    pub db: Vec<f64>,
}

pub fn compute_masking_threshold(frame: &MdctFrame) -> MaskingThreshold {
    let grid = BandGrid::for_window(frame.window_type);
    let tables = masking_tables(grid);
    let bands = tables.weights.len();
    let power: Vec<f64> = frame.lines.iter().map(|x| x * x).collect();
    let density: Vec<f64> = tables
        .weights
        .iter()
        .zip(&tables.norms)
        .map(|(w, norm)| w.iter().zip(&power).map(|(a, p)| a * p).sum::<f64>() / norm)
        .collect();
    let offset = 10f64.powf(MASKER_OFFSET_DB / 10.0);
    let db = (0..bands)
        .map(|b| {
            let spread: f64 = density
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let atten = if b < j {
                        SPREAD_DOWN_DB * (j - b) as f64
                    } else {
                        SPREAD_UP_DB * (b - j) as f64
                    };
                    p * 10f64.powf(-atten / 10.0)
                })
                .sum();
            let masked = spread * offset;
            let floor = tables.floor_db[b];
            if masked > 0.0 {
                (10.0 * masked.log10()).max(floor)
            } else {
                floor
            }
        })
        .collect();
    MaskingThreshold { grid, db }
}

/// Per-band gains on the 1.5 dB grid. Gains are stored as integer step
/// counts so equality and sharing are exact.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PerceptualEnvelope {
    pub grid: BandGrid,
    pub steps: Vec<i32>,
    pub shared_with_previous: bool,
}

impl PerceptualEnvelope {
    pub fn flat(grid: BandGrid, step: i32) -> Self {
        Self {
            grid,
            steps: vec![step.clamp(MIN_GAIN_STEP, MAX_GAIN_STEP); grid.layout().band_count()],
            shared_with_previous: false,
        }
    }

    pub fn gains_db(&self) -> Vec<f64> {
        self.steps.iter().map(|&s| s as f64 * GAIN_STEP_DB).collect()
    }

    pub fn layout(&self) -> &'static BandLayout {
        self.grid.layout()
    }
}

/// Rounds to the nearest 1.5 dB step within [-120, +60] dB.
pub fn quantize_gain_db(db: f64) -> i32 {
    ((db / GAIN_STEP_DB).round() as i64).clamp(MIN_GAIN_STEP as i64, MAX_GAIN_STEP as i64) as i32
}

pub fn envelope_from_threshold(thr: &MaskingThreshold) -> PerceptualEnvelope {
    PerceptualEnvelope {
        grid: thr.grid,
        steps: thr.db.iter().map(|&d| quantize_gain_db(d)).collect(),
        shared_with_previous: false,
    }
}

pub fn envelope_to_line_gains(env: &PerceptualEnvelope) -> Vec<f64> {
    env.layout().line_gains(&env.steps)
}

fn check_grid(frame: &MdctFrame, env: &PerceptualEnvelope) -> Result<()> {
    if BandGrid::for_window(frame.window_type) != env.grid || frame.lines.len() != env.grid.lines() {
        return Err(Error::Shape(format!(
            "{} frame with {} lines cannot use a {:?}-grid envelope",
            frame.window_type,
            frame.lines.len(),
            env.grid
        )));
    }
    Ok(())
}

/// Divides each line by its band gain, moving the frame into the perceptual domain.
pub fn apply_weighting(frame: &MdctFrame, env: &PerceptualEnvelope) -> Result<MdctFrame> {
    check_grid(frame, env)?;
    let gains = envelope_to_line_gains(env);
    Ok(MdctFrame {
        window_type: frame.window_type,
        lines: frame.lines.iter().zip(&gains).map(|(x, g)| x / g).collect(),
    })
}

pub fn remove_weighting(frame: &MdctFrame, env: &PerceptualEnvelope) -> Result<MdctFrame> {
    check_grid(frame, env)?;
    let gains = envelope_to_line_gains(env);
    Ok(MdctFrame {
        window_type: frame.window_type,
        lines: frame.lines.iter().zip(&gains).map(|(x, g)| x * g).collect(),
    })
}
