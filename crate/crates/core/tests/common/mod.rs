//! Signals and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use mdcn::audio::{AudioBuffer, SAMPLE_RATE};
use mdcn::bitstream::{FrameRecord, StreamHeader};
use mdcn::coding::QuantizedFrame;
use mdcn::mdctnet::{ConditioningContext, ModelConfig, ONE_HOT_CHANNELS};
use mdcn::perceptual::{BandGrid, PerceptualEnvelope, MAX_GAIN_STEP, MIN_GAIN_STEP};
use mdcn::training::TrainingItem;
use mdcn::transform::{plan_window_sequence, WindowSequence, WindowType, LONG_LINES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SR: f64 = SAMPLE_RATE as f64;

fn samples(secs: f64) -> usize {
    (secs * SR) as usize
}

fn normalize(mut x: Vec<f64>, rms: f64) -> AudioBuffer {
    let cur = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    for v in &mut x {
        *v *= rms / cur;
    }
    AudioBuffer::new(x).unwrap()
}

/// Pink noise from a bank of first-order filters (Kellet).
pub fn pink_noise(secs: f64, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = [0.0f64; 7];
    let x = (0..samples(secs))
        .map(|_| {
            let w: f64 = rng.gen_range(-1.0..1.0);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let y = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
            y
        })
        .collect();
    normalize(x, 0.1)
}

fn one_pole(cutoff: f64) -> f64 {
    (-2.0 * PI * cutoff / SR).exp()
}

/// Noise with a long-term speech-like spectrum and syllabic modulation.
pub fn speech_shaped_noise(secs: f64, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hp, lp) = (one_pole(100.0), one_pole(800.0));
    let (mut hp_state, mut prev, mut l1, mut l2) = (0.0, 0.0, 0.0, 0.0);
    let x = (0..samples(secs))
        .map(|n| {
            let w: f64 = rng.gen_range(-1.0..1.0);
            hp_state = hp * (hp_state + w - prev);
            prev = w;
            l1 = (1.0 - lp) * hp_state + lp * l1;
            l2 = (1.0 - lp) * l1 + lp * l2;
            let t = n as f64 / SR;
            let env = 0.55 + 0.45 * (2.0 * PI * 4.0 * t).sin() * (2.0 * PI * 0.7 * t).cos();
            (l2 + 0.15 * l1) * env
        })
        .collect();
    normalize(x, 0.08)
}

/// Plucked harmonic chords on a pentatonic scale with a little noise.
pub fn multitone(secs: f64, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = [0, 2, 4, 7, 9];
    let n = samples(secs);
    let mut x = vec![0.0; n];
    let mut start = 0usize;
    while start < n {
        let dur = samples(rng.gen_range(0.2..0.6));
        for _ in 0..3 {
            let semis = scale[rng.gen_range(0..scale.len())] + 12 * rng.gen_range(0..3);
            let f0 = 130.81 * 2f64.powf(semis as f64 / 12.0);
            let amp = rng.gen_range(0.05..0.15);
            let decay = rng.gen_range(2.0..6.0);
            for i in 0..(dur * 2).min(n - start) {
                let t = i as f64 / SR;
                let env = amp * (-decay * t).exp() * (1.0 - (-t * 400.0).exp());
                let mut v = 0.0;
                for k in 1..10 {
                    let f = f0 * k as f64;
                    if f < 16_000.0 {
                        v += (2.0 * PI * f * t).sin() / k as f64;
                    }
                }
                x[start + i] += env * v;
            }
        }
        start += dur;
    }
    for v in &mut x {
        *v += 0.002 * rng.gen_range(-1.0..1.0);
    }
    normalize(x, 0.1)
}

/// Four sustained harmonic notes, the overfitting excerpt.
pub fn melody(secs: f64, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let notes = [220.0, 277.18, 329.63, 440.0];
    let n = samples(secs);
    let mut phase = [0.0f64; 12];
    let x = (0..n)
        .map(|i| {
            let f0 = notes[(i * notes.len() / n).min(notes.len() - 1)];
            let mut v = 0.0;
            for (k, p) in phase.iter_mut().enumerate().skip(1) {
                *p += 2.0 * PI * f0 * k as f64 / SR;
                v += 0.3 / k as f64 * p.sin();
            }
            v + 0.001 * rng.gen_range(-1.0..1.0)
        })
        .collect();
    AudioBuffer::new(x).unwrap()
}

pub fn white_noise(secs: f64, amp: f64, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioBuffer::new((0..samples(secs)).map(|_| rng.gen_range(-amp..amp)).collect()).unwrap()
}

pub fn sine(secs: f64, freq: f64, amp: f64) -> AudioBuffer {
    AudioBuffer::new((0..samples(secs)).map(|n| amp * (2.0 * PI * freq * n as f64 / SR).sin()).collect()).unwrap()
}

pub fn rel_rms_error(a: &[f64], b: &[f64]) -> f64 {
    let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let sig: f64 = a.iter().map(|x| x * x).sum();
    (err / sig).sqrt()
}

/// A valid window sequence over `slots` slots with random transients.
pub fn random_sequence(slots: usize, rng: &mut ChaCha8Rng) -> WindowSequence {
    let flags: Vec<bool> = (0..slots).map(|_| rng.gen_bool(0.2)).collect();
    plan_window_sequence(&flags)
}

fn random_envelope(grid: BandGrid, rng: &mut ChaCha8Rng) -> PerceptualEnvelope {
    let mut steps = Vec::with_capacity(grid.layout().band_count());
    let mut s = rng.gen_range(-40..20);
    for _ in 0..grid.layout().band_count() {
        s = (s + rng.gen_range(-6..=6)).clamp(MIN_GAIN_STEP, MAX_GAIN_STEP);
        steps.push(s);
    }
    PerceptualEnvelope {
        grid,
        steps,
        shared_with_previous: false,
    }
}

fn random_coefficients(w: WindowType, offset: f64, rng: &mut ChaCha8Rng) -> QuantizedFrame {
    let density = rng.gen_range(0.0..0.5);
    let indices = (0..w.lines())
        .map(|_| {
            if rng.gen_bool(density) {
                let mag = (rng.gen_range(0.0f64..12.0)).exp2() as i32;
                if rng.gen_bool(0.5) {
                    -mag
                } else {
                    mag
                }
            } else {
                0
            }
        })
        .collect();
    QuantizedFrame {
        window_type: w,
        indices,
        step_db_offset: offset,
    }
}

/// A random, valid stream with at least `min_frames` frames. Roughly one
/// envelope in five repeats its predecessor exactly and is sent shared.
pub fn random_stream(min_frames: usize, seed: u64) -> (StreamHeader, Vec<FrameRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.gen_range(-80i32..80) as f64 / 4.0;
    let mut slots = min_frames;
    let seq = loop {
        let s = random_sequence(slots, &mut rng);
        if s.len() >= min_frames {
            break s;
        }
        slots += 1;
    };
    let mut records: Vec<FrameRecord> = Vec::with_capacity(seq.len());
    for &w in seq.frames() {
        let grid = BandGrid::for_window(w);
        let envelope = match records.last() {
            Some(prev) if prev.envelope.grid == grid && rng.gen_bool(0.2) => PerceptualEnvelope {
                shared_with_previous: true,
                ..prev.envelope.clone()
            },
            _ => random_envelope(grid, &mut rng),
        };
        records.push(FrameRecord {
            window_type: w,
            envelope,
            coefficients: random_coefficients(w, offset, &mut rng),
        });
    }
    let header = StreamHeader {
        sample_rate: SAMPLE_RATE,
        target_kbps: 24,
        frame_count: records.len() as u32,
        step_db_offset: offset,
        tail_padding: rng.gen_range(0..768),
    };
    (header, records)
}

/// Under 10^5 parameters; small enough for exhaustive finite differences.
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig {
        num_bands: 32,
        lines_per_band: 24,
        latent_dim: 4,
        gru_hidden: 4,
        mlp_hidden: 6,
        lookahead: 1,
        cross_band_halfwidth: 1,
        ..ModelConfig::toy()
    }
}

pub fn random_item(frames: usize, rng: &mut ChaCha8Rng) -> TrainingItem {
    let mut one_hot = vec![0.0; frames * ONE_HOT_CHANNELS];
    for t in 0..frames {
        one_hot[t * ONE_HOT_CHANNELS + rng.gen_range(0..ONE_HOT_CHANNELS)] = 1.0;
    }
    TrainingItem {
        targets: (0..frames * LONG_LINES).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        cond: ConditioningContext {
            windows: vec![WindowType::Long; frames],
            coefficients: (0..frames * LONG_LINES).map(|_| rng.gen_range(-3i32..=3) as f64).collect(),
            log_gains: (0..frames * LONG_LINES).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            one_hot,
        },
    }
}
