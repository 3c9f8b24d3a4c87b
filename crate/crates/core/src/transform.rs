//! Block-switched MDCT analysis and synthesis.
//!
//! Long frames carry 768 lines from a 1536-sample window at a hop of 768
//! samples. A transient slot is covered by four short frames of 192 lines
//! (384-sample windows, hop 192) centred inside the slot, with START and STOP
//! bridge windows on either side.
//!
//! Frame slot `s` owns the long window spanning signal samples
//! `[768 * (s - 1), 768 * (s + 1))`; samples outside the signal are zero.
//! A signal of `768 * K` samples therefore needs `K + 1` slots, and the
//! reconstruction discards the outer half of the first and last windows.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const LONG_LINES: usize = 768;
pub const SHORT_LINES: usize = 192;
/// Long-frame hop; also the duration of one frame slot.
pub const HOP: usize = LONG_LINES;
pub const SHORTS_PER_SLOT: usize = LONG_LINES / SHORT_LINES;

/// Attack threshold for the energy-ratio transient detector.
pub const ATTACK_THRESHOLD: f64 = 10.0;
const SUB_BLOCKS: usize = 8;
const SUB_BLOCK_LEN: usize = HOP / SUB_BLOCKS;
const ENERGY_FLOOR: f64 = 1e-12;

/// Offset from the slot's long-window start to the first short window.
const SHORT_OFFSET: usize = (LONG_LINES - SHORT_LINES) / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowType {
    Long,
    Start,
    Short,
    Stop,
}

impl WindowType {
    pub const ALL: [WindowType; 4] = [
        WindowType::Long,
        WindowType::Start,
        WindowType::Short,
        WindowType::Stop,
    ];

    /// Channel index in `[LONG, START, SHORT, STOP]` order; also the 2-bit
    /// code written to the bitstream.
    pub fn index(self) -> usize {
        match self {
            WindowType::Long => 0,
            WindowType::Start => 1,
            WindowType::Short => 2,
            WindowType::Stop => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_short(self) -> bool {
        self == WindowType::Short
    }

    pub fn lines(self) -> usize {
        if self.is_short() {
            SHORT_LINES
        } else {
            LONG_LINES
        }
    }

    /// Whether `next` may follow `self`.
    pub fn may_precede(self, next: WindowType) -> bool {
        use WindowType::*;
        matches!(
            (self, next),
            (Long, Long) | (Long, Start) | (Start, Short) | (Short, Short) | (Short, Stop) | (Stop, Long) | (Stop, Start)
        )
    }
}

impl fmt::Display for WindowType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WindowType::Long => "LONG",
            WindowType::Start => "START",
            WindowType::Short => "SHORT",
            WindowType::Stop => "STOP",
        };
        f.write_str(s)
    }
}

/// Ordered per-frame window types. Short frames appear individually, so a
/// transient slot contributes four consecutive `Short` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSequence {
    frames: Vec<WindowType>,
}

impl WindowSequence {
    pub fn new(frames: Vec<WindowType>) -> Result<Self> {
        validate_sequence(&frames)?;
        Ok(Self { frames })
    }

    pub fn all_long(slots: usize) -> Self {
        Self {
            frames: vec![WindowType::Long; slots.max(1)],
        }
    }

    pub fn frames(&self) -> &[WindowType] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn slot_count(&self) -> usize {
        let shorts = self.frames.iter().filter(|w| w.is_short()).count();
        self.frames.len() - shorts + shorts / SHORTS_PER_SLOT
    }

    /// Signal length in samples that this sequence covers exactly.
    pub fn covered_len(&self) -> usize {
        (self.slot_count() - 1) * HOP
    }

    /// Position of every frame: window type, slot index, and the first
    /// signal sample under its window (may be negative).
    pub fn layout(&self) -> Vec<FramePosition> {
        let mut out = Vec::with_capacity(self.frames.len());
        let mut slot = 0usize;
        let mut short_in_slot = 0usize;
        for &window in &self.frames {
            let slot_start = slot as i64 * HOP as i64 - HOP as i64;
            if window.is_short() {
                let start = slot_start + (SHORT_OFFSET + short_in_slot * SHORT_LINES) as i64;
                out.push(FramePosition { window, slot, start });
                short_in_slot += 1;
                if short_in_slot == SHORTS_PER_SLOT {
                    short_in_slot = 0;
                    slot += 1;
                }
            } else {
                out.push(FramePosition {
                    window,
                    slot,
                    start: slot_start,
                });
                slot += 1;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramePosition {
    pub window: WindowType,
    pub slot: usize,
    pub start: i64,
}

fn validate_sequence(frames: &[WindowType]) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidSequence(m));
    if frames.is_empty() {
        return bad("empty".into());
    }
    if frames[0] != WindowType::Long {
        return bad("first frame must be LONG".into());
    }
    if *frames.last().unwrap() != WindowType::Long {
        return bad("last frame must be LONG".into());
    }
    for (i, pair) in frames.windows(2).enumerate() {
        if !pair[0].may_precede(pair[1]) {
            return bad(format!("illegal transition {} -> {} at frame {}", pair[0], pair[1], i + 1));
        }
    }
    let mut run = 0usize;
    for (i, w) in frames.iter().enumerate() {
        if w.is_short() {
            run += 1;
        } else if run > 0 {
            if run % SHORTS_PER_SLOT != 0 {
                return bad(format!("short run of {run} frames ending at frame {i}"));
            }
            run = 0;
        }
    }
    Ok(())
}

/// One frame of spectral lines.
#[derive(Debug, Clone, PartialEq)]
pub struct MdctFrame {
    pub window_type: WindowType,
    pub lines: Vec<f64>,
}

impl MdctFrame {
    pub fn new(window_type: WindowType, lines: Vec<f64>) -> Result<Self> {
        if lines.len() != window_type.lines() {
            return Err(Error::Shape(format!(
                "{} frame needs {} lines, got {}",
                window_type,
                window_type.lines(),
                lines.len()
            )));
        }
        if let Some(i) = lines.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { window_type, lines })
    }

    pub fn zeros(window_type: WindowType) -> Self {
        Self {
            window_type,
            lines: vec![0.0; window_type.lines()],
        }
    }
}

/// Zero-pads to a whole, non-zero number of hops.
pub fn pad_to_hop(audio: &AudioBuffer) -> AudioBuffer {
    let slots = audio.len().div_ceil(HOP).max(1);
    let mut s = audio.samples().to_vec();
    s.resize(slots * HOP, 0.0);
    AudioBuffer::new(s).expect("padding keeps samples finite")
}

/// Number of frame slots needed for a signal of `len` samples.
pub fn slots_for_len(len: usize) -> usize {
    len.div_ceil(HOP).max(1) + 1
}

/// Flags each frame slot whose high-passed sub-block energy peaks above
/// `ATTACK_THRESHOLD` times the mean energy of the surrounding 16 sub-blocks
/// (the previous slot's eight plus the current eight).
///
/// Slot `s` is examined over samples `[768 s - 384, 768 s + 384)`, the span
/// its four short windows would reconstruct.
pub fn detect_transients(audio: &AudioBuffer) -> Result<Vec<bool>> {
    if audio.is_empty() {
        return Err(Error::EmptySignal);
    }
    let x = audio.samples();
    let at = |i: i64| -> f64 {
        if i < 0 || i as usize >= x.len() {
            0.0
        } else {
            x[i as usize]
        }
    };
    let slots = slots_for_len(x.len());
    let sub_energy = |block: i64| -> f64 {
        // block index on a grid starting at sample -384 - 768
        let start = block * SUB_BLOCK_LEN as i64 - (HOP / 2) as i64 - HOP as i64;
        (start..start + SUB_BLOCK_LEN as i64)
            .map(|n| {
                let d = at(n) - at(n - 1);
                d * d
            })
            .sum()
    };
    let mut prev: Vec<f64> = (0..SUB_BLOCKS as i64).map(sub_energy).collect();
    let mut flags = Vec::with_capacity(slots);
    for s in 0..slots {
        let base = ((s + 1) * SUB_BLOCKS) as i64;
        let cur: Vec<f64> = (base..base + SUB_BLOCKS as i64).map(sub_energy).collect();
        let mean = (prev.iter().sum::<f64>() + cur.iter().sum::<f64>()) / (2 * SUB_BLOCKS) as f64;
        let peak = cur.iter().copied().fold(0.0, f64::max);
        flags.push(peak > ENERGY_FLOOR && peak > ATTACK_THRESHOLD * mean);
        prev = cur;
    }
    Ok(flags)
}

/// Expands per-slot transient flags into a window sequence.
///
/// The two slots at each end are forced stationary so the sequence can
/// begin and end with LONG frames, and runs separated by a single stationary
/// slot are merged because that slot would need to be both STOP and START.
pub fn plan_window_sequence(flags: &[bool]) -> WindowSequence {
    let n = flags.len().max(1);
    let mut transient: Vec<bool> = (0..n)
        .map(|s| flags.get(s).copied().unwrap_or(false) && s >= 2 && s + 2 < n)
        .collect();
    for s in 1..n.saturating_sub(1) {
        if !transient[s] && transient[s - 1] && transient[s + 1] {
            transient[s] = true;
        }
    }
    let mut frames = Vec::with_capacity(n + 3 * transient.iter().filter(|&&t| t).count());
    for s in 0..n {
        if transient[s] {
            frames.extend([WindowType::Short; SHORTS_PER_SLOT]);
        } else if s + 1 < n && transient[s + 1] {
            frames.push(WindowType::Start);
        } else if s > 0 && transient[s - 1] {
            frames.push(WindowType::Stop);
        } else {
            frames.push(WindowType::Long);
        }
    }
    WindowSequence::new(frames).expect("planner emits valid sequences")
}

fn sine(len: usize, n: usize) -> f64 {
    (PI * (n as f64 + 0.5) / len as f64).sin()
}

/// Analysis/synthesis window for a frame of the given type. Long-grid
/// windows have 1536 samples, SHORT windows 384.
pub fn build_window(window_type: WindowType) -> Vec<f64> {
    let long = 2 * LONG_LINES;
    let short = 2 * SHORT_LINES;
    let flat = (LONG_LINES - SHORT_LINES) / 2;
    match window_type {
        WindowType::Long => (0..long).map(|n| sine(long, n)).collect(),
        WindowType::Short => (0..short).map(|n| sine(short, n)).collect(),
        WindowType::Start => {
            let mut w = Vec::with_capacity(long);
            w.extend((0..LONG_LINES).map(|n| sine(long, n)));
            w.extend(std::iter::repeat_n(1.0, flat));
            w.extend((SHORT_LINES..short).map(|n| sine(short, n)));
            w.extend(std::iter::repeat_n(0.0, flat));
            w
        }
        WindowType::Stop => {
            let mut w = build_window(WindowType::Start);
            w.reverse();
            w
        }
    }
}

fn cached_window(window_type: WindowType) -> &'static [f64] {
    static WINDOWS: OnceLock<[Vec<f64>; 4]> = OnceLock::new();
    &WINDOWS.get_or_init(|| WindowType::ALL.map(build_window))[window_type.index()]
}

/// MDCT of `M` lines computed through an `M/2`-point complex FFT.
pub struct Mdct {
    lines: usize,
    fft: Arc<dyn Fft<f64>>,
    twiddle: Vec<Complex64>,
}

impl fmt::Debug for Mdct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mdct").field("lines", &self.lines).finish()
    }
}

impl Mdct {
    pub fn new(lines: usize) -> Self {
        assert!(lines % 4 == 0 && lines > 0, "line count must be a positive multiple of 4");
        let fft = FftPlanner::new().plan_fft_forward(lines / 2);
        let twiddle = (0..lines / 2)
            .map(|n| Complex64::from_polar(1.0, -PI * (8 * n + 1) as f64 / (8 * lines) as f64))
            .collect();
        Self { lines, fft, twiddle }
    }

    pub fn for_window(window_type: WindowType) -> &'static Mdct {
        static LONG: OnceLock<Mdct> = OnceLock::new();
        static SHORT: OnceLock<Mdct> = OnceLock::new();
        if window_type.is_short() {
            SHORT.get_or_init(|| Mdct::new(SHORT_LINES))
        } else {
            LONG.get_or_init(|| Mdct::new(LONG_LINES))
        }
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    /// In-place DCT-IV: `X[k] = sum_n u[n] cos(pi/M (n + 1/2)(k + 1/2))`.
    fn dct4(&self, data: &mut [f64]) {
        let m = self.lines;
        let half = m / 2;
        let mut buf: Vec<Complex64> = (0..half)
            .map(|n| Complex64::new(data[2 * n], data[m - 1 - 2 * n]) * self.twiddle[n])
            .collect();
        self.fft.process(&mut buf);
        for (p, v) in buf.iter().enumerate() {
            let y = v * self.twiddle[p];
            data[2 * p] = y.re;
            data[m - 1 - 2 * p] = -y.im;
        }
    }

    /// `X[k] = sum_n z[n] cos(pi/M (n + 1/2 + M/2)(k + 1/2))` over the `2M`
    /// already-windowed samples `z`.
    pub fn forward(&self, windowed: &[f64], out: &mut [f64]) {
        let m = self.lines;
        let h = m / 2;
        assert_eq!(windowed.len(), 2 * m);
        assert_eq!(out.len(), m);
        let (a, rest) = windowed.split_at(h);
        let (b, rest) = rest.split_at(h);
        let (c, d) = rest.split_at(h);
        for n in 0..h {
            out[n] = -c[h - 1 - n] - d[n];
            out[h + n] = a[n] - b[h - 1 - n];
        }
        self.dct4(out);
    }

    /// Time-aliased inverse: `2M` samples that, once windowed and
    /// overlap-added with neighbours, cancel aliasing.
    pub fn inverse(&self, lines: &[f64], out: &mut [f64]) {
        let m = self.lines;
        let h = m / 2;
        assert_eq!(lines.len(), m);
        assert_eq!(out.len(), 2 * m);
        let mut u = lines.to_vec();
        self.dct4(&mut u);
        let scale = 2.0 / m as f64;
        for n in 0..h {
            let u1 = u[n] * scale;
            let u2 = u[h + n] * scale;
            out[n] = u2;
            out[m - 1 - n] = -u2;
            out[m + h - 1 - n] = -u1;
            out[m + h + n] = -u1;
        }
    }
}

/// Forward block-switched MDCT. `audio` must be exactly the length covered
/// by `seq` (see [`WindowSequence::covered_len`]).
pub fn mdct_analyze(audio: &AudioBuffer, seq: &WindowSequence) -> Result<Vec<MdctFrame>> {
    let expected = seq.covered_len();
    if audio.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: audio.len(),
        });
    }
    let x = audio.samples();
    let mut frames = Vec::with_capacity(seq.len());
    let mut seg = Vec::with_capacity(2 * LONG_LINES);
    for pos in seq.layout() {
        let window = cached_window(pos.window);
        let mdct = Mdct::for_window(pos.window);
        seg.clear();
        seg.extend(window.iter().enumerate().map(|(n, w)| {
            let i = pos.start + n as i64;
            if i < 0 || i as usize >= x.len() {
                0.0
            } else {
                w * x[i as usize]
            }
        }));
        let mut lines = vec![0.0; mdct.lines()];
        mdct.forward(&seg, &mut lines);
        frames.push(MdctFrame {
            window_type: pos.window,
            lines,
        });
    }
    Ok(frames)
}

/// Inverse block-switched MDCT with windowed overlap-add.
pub fn mdct_synthesize(frames: &[MdctFrame], seq: &WindowSequence) -> Result<AudioBuffer> {
    if frames.len() != seq.len() {
        return Err(Error::Shape(format!(
            "{} frames for a sequence of {}",
            frames.len(),
            seq.len()
        )));
    }
    let len = seq.covered_len();
    let mut out = vec![0.0; len];
    let mut buf = vec![0.0; 2 * LONG_LINES];
    for (index, (frame, pos)) in frames.iter().zip(seq.layout()).enumerate() {
        if frame.window_type != pos.window {
            return Err(Error::FrameMismatch {
                index,
                reason: format!("window type {} but sequence says {}", frame.window_type, pos.window),
            });
        }
        if frame.lines.len() != pos.window.lines() {
            return Err(Error::FrameMismatch {
                index,
                reason: format!("{} lines for a {} window", frame.lines.len(), pos.window),
            });
        }
        let mdct = Mdct::for_window(pos.window);
        let window = cached_window(pos.window);
        let y = &mut buf[..window.len()];
        mdct.inverse(&frame.lines, y);
        for (n, (v, w)) in y.iter().zip(window).enumerate() {
            let i = pos.start + n as i64;
            if i >= 0 && (i as usize) < len {
                out[i as usize] += v * w;
            }
        }
    }
    AudioBuffer::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct-summation MDCT, kept independent of the fast path.
    fn direct_mdct(z: &[f64]) -> Vec<f64> {
        let m = z.len() / 2;
        (0..m)
            .map(|k| {
                z.iter()
                    .enumerate()
                    .map(|(n, v)| {
                        v * (PI / m as f64 * (n as f64 + 0.5 + m as f64 / 2.0) * (k as f64 + 0.5)).cos()
                    })
                    .sum()
            })
            .collect()
    }

    fn rms(v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn fast_mdct_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in [SHORT_LINES, LONG_LINES] {
            let z: Vec<f64> = (0..2 * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut fast = vec![0.0; m];
            Mdct::new(m).forward(&z, &mut fast);
            let slow = direct_mdct(&z);
            let err: Vec<f64> = fast.iter().zip(&slow).map(|(a, b)| a - b).collect();
            assert!(rms(&err) <= 1e-10, "m={m} rms={}", rms(&err));
        }
    }

    #[test]
    fn long_window_is_power_complementary() {
        let w = build_window(WindowType::Long);
        for n in 0..LONG_LINES {
            assert!((w[n] * w[n] + w[n + LONG_LINES] * w[n + LONG_LINES] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn start_window_shape() {
        let w = build_window(WindowType::Start);
        assert_eq!(w.len(), 1536);
        assert!(w[768..1056].iter().all(|&v| v == 1.0));
        assert!(w[1248..].iter().all(|&v| v == 0.0));
        let stop = build_window(WindowType::Stop);
        assert_eq!(stop[0..288], w[1248..]);
        assert_eq!(build_window(WindowType::Short).len(), 384);
    }

    #[test]
    fn silence_has_no_transients() {
        let flags = detect_transients(&AudioBuffer::zeros(48_000)).unwrap();
        assert!(flags.iter().all(|f| !f));
    }

    #[test]
    fn steady_sine_has_no_transients() {
        let x: Vec<f64> = (0..48_000)
            .map(|n| 0.5 * (2.0 * PI * 1000.0 * n as f64 / 48_000.0).sin())
            .collect();
        let flags = detect_transients(&AudioBuffer::new(x).unwrap()).unwrap();
        assert!(flags.iter().all(|f| !f), "{flags:?}");
    }

    #[test]
    fn impulse_flags_its_slot_only() {
        let mut x = vec![0.0; 48_000];
        x[24_000] = 1.0;
        let flags = detect_transients(&AudioBuffer::new(x).unwrap()).unwrap();
        assert_eq!(flags.len(), slots_for_len(48_000));
        let hits: Vec<usize> = flags.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect();
        // slot s spans [768 s - 384, 768 s + 384)
        assert_eq!(hits, vec![31]);
    }

    #[test]
    fn empty_signal_is_rejected() {
        assert!(matches!(
            detect_transients(&AudioBuffer::zeros(0)),
            Err(Error::EmptySignal)
        ));
    }

    #[test]
    fn planning_rules() {
        use WindowType::*;
        assert!(plan_window_sequence(&[false; 8]).frames().iter().all(|w| *w == Long));

        let mut flags = vec![false; 10];
        flags[4] = true;
        let seq = plan_window_sequence(&flags);
        assert_eq!(
            seq.frames(),
            &[Long, Long, Long, Start, Short, Short, Short, Short, Stop, Long, Long, Long, Long]
        );
        assert_eq!(seq.slot_count(), 10);

        flags[5] = true;
        let seq = plan_window_sequence(&flags);
        let shorts = seq.frames().iter().filter(|w| w.is_short()).count();
        assert_eq!(shorts, 8);
        assert_eq!(seq.frames()[3], Start);
        assert_eq!(seq.frames()[12], Stop);
    }

    #[test]
    fn one_slot_gap_merges_runs() {
        let mut flags = vec![false; 12];
        flags[3] = true;
        flags[5] = true;
        let seq = plan_window_sequence(&flags);
        assert_eq!(seq.frames().iter().filter(|w| w.is_short()).count(), 12);
        assert_eq!(seq.slot_count(), 12);
    }

    #[test]
    fn boundary_flags_are_ignored() {
        let seq = plan_window_sequence(&[true, true, false, false, true, true]);
        assert!(seq.frames().iter().all(|w| *w == WindowType::Long));
    }

    #[test]
    fn sequence_validation() {
        use WindowType::*;
        assert!(WindowSequence::new(vec![Long, Start, Short, Short, Stop, Long]).is_err());
        assert!(WindowSequence::new(vec![Long, Short, Short, Short, Short, Stop, Long]).is_err());
        assert!(WindowSequence::new(vec![Start, Short, Short, Short, Short, Stop, Long]).is_err());
        assert!(WindowSequence::new(vec![Long, Start, Short, Short, Short, Short, Stop, Long]).is_ok());
        assert!(WindowSequence::new(vec![Long, Long, Stop]).is_err());
    }

    #[test]
    fn ten_seconds_all_long() {
        let audio = AudioBuffer::zeros(480_000);
        let seq = WindowSequence::all_long(slots_for_len(audio.len()));
        let frames = mdct_analyze(&audio, &seq).unwrap();
        // 625 hops of 768 samples, closed by one extra overlapping frame
        assert_eq!(frames.len(), 626);
        assert!(frames.iter().all(|f| f.lines.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let seq = WindowSequence::all_long(4);
        assert!(matches!(
            mdct_analyze(&AudioBuffer::zeros(100), &seq),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn synthesis_rejects_wrong_window_type() {
        let seq = WindowSequence::all_long(3);
        let mut frames = vec![MdctFrame::zeros(WindowType::Long); 3];
        frames[1].window_type = WindowType::Stop;
        assert!(matches!(
            mdct_synthesize(&frames, &seq),
            Err(Error::FrameMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn impulse_roundtrips_in_place() {
        let mut flags = vec![false; 8];
        flags[3] = true;
        let seq = plan_window_sequence(&flags);
        for at in [100, 2 * HOP + 400, 5 * HOP - 1] {
            let mut x = vec![0.0; seq.covered_len()];
            x[at] = 1.0;
            let y = mdct_synthesize(&mdct_analyze(&AudioBuffer::new(x.clone()).unwrap(), &seq).unwrap(), &seq)
                .unwrap();
            let (peak, _) = y
                .samples()
                .iter()
                .enumerate()
                .fold((0, 0.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
            assert_eq!(peak, at);
            assert!((y.samples()[at] - 1.0).abs() < 1e-12);
        }
    }
}
