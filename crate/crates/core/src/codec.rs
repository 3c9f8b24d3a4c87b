//! Encoder and core decoder: the full analysis chain from PCM to `.mdcn`
//! bytes and back.

use crate::audio::{AudioBuffer, SAMPLE_RATE};
use crate::bitstream::{read_stream, write_stream, FrameRecord, StreamHeader, TAIL_PADDING_BITS};
use crate::coding::{
    decide_envelope_sharing, dequantize_frame, envelope_bits, quantize_frame, snap_offset_db, vbr_search,
    QuantizedFrame, RateControlResult, RateStatus,
};
use crate::error::{Error, Result};
use crate::perceptual::{apply_weighting, compute_masking_threshold, envelope_from_threshold, remove_weighting, PerceptualEnvelope};
use crate::transform::{
    detect_transients, mdct_analyze, mdct_synthesize, pad_to_hop, plan_window_sequence, MdctFrame, WindowSequence,
};
use crate::mdctnet::{collapse_frame, generate, prepare_conditioning, ModelParams};
use crate::transform::LONG_LINES;
use rayon::prelude::*;

pub const MIN_TARGET_KBPS: f64 = 20.0;
pub const MAX_TARGET_KBPS: f64 = 32.0;
const WINDOW_FIELD_BITS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeOptions {
    pub target_kbps: f64,
    /// Bypasses rate control with a fixed global offset in dB.
    pub step_override_db: Option<f64>,
}

impl EncodeOptions {
    pub fn at_kbps(target_kbps: f64) -> Self {
        Self {
            target_kbps,
            step_override_db: None,
        }
    }
}

/// Everything the encoder computed, including the pre-quantization
/// perceptual spectrum used as the training target.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub header: StreamHeader,
    pub sequence: WindowSequence,
    pub records: Vec<FrameRecord>,
    pub perceptual: Vec<MdctFrame>,
    pub rate: RateControlResult,
    pub source_len: usize,
}

impl Encoded {
    /// Bitrate of the whole file including the header.
    pub fn file_kbps(&self) -> f64 {
        self.bytes.len() as f64 * 8.0 / (self.source_len as f64 / SAMPLE_RATE as f64) / 1000.0
    }
}

/// Perceptual analysis shared by the encoder and dataset preparation.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub sequence: WindowSequence,
    pub envelopes: Vec<PerceptualEnvelope>,
    pub perceptual: Vec<MdctFrame>,
    pub tail_padding: usize,
}

pub fn analyze(audio: &AudioBuffer) -> Result<Analysis> {
    if audio.is_empty() {
        return Err(Error::EmptySignal);
    }
    let padded = pad_to_hop(audio);
    let flags = detect_transients(audio)?;
    let sequence = plan_window_sequence(&flags);
    let tail_padding = padded.len() - audio.len();
    let frames = mdct_analyze(&padded, &sequence)?;

    let raw: Vec<PerceptualEnvelope> = frames
        .par_iter()
        .map(|f| envelope_from_threshold(&compute_masking_threshold(f)))
        .collect();
    let mut envelopes: Vec<PerceptualEnvelope> = Vec::with_capacity(raw.len());
    for (i, env) in raw.into_iter().enumerate() {
        let shared = match envelopes.last() {
            Some(prev) if decide_envelope_sharing(&env, prev, frames[i - 1].window_type) => {
                let mut e = prev.clone();
                e.shared_with_previous = true;
                e
            }
            _ => env,
        };
        envelopes.push(shared);
    }
    let perceptual = frames
        .par_iter()
        .zip(envelopes.par_iter())
        .map(|(f, e)| apply_weighting(f, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(Analysis {
        sequence,
        envelopes,
        perceptual,
        tail_padding,
    })
}

/// Payload bits that do not depend on the quantizer offset.
pub fn side_bits(envelopes: &[PerceptualEnvelope]) -> u64 {
    if envelopes.is_empty() {
        return 0;
    }
    let mut bits = TAIL_PADDING_BITS as u64;
    for (i, e) in envelopes.iter().enumerate() {
        let prev = if i > 0 { Some(&envelopes[i - 1]) } else { None };
        bits += WINDOW_FIELD_BITS + envelope_bits(e, prev);
    }
    bits
}

pub fn encode_audio(audio: &AudioBuffer, options: &EncodeOptions) -> Result<Encoded> {
    if options.step_override_db.is_none()
        && !(MIN_TARGET_KBPS..=MAX_TARGET_KBPS).contains(&options.target_kbps)
    {
        return Err(Error::Config(format!(
            "target bitrate {} kb/s outside [{MIN_TARGET_KBPS}, {MAX_TARGET_KBPS}]",
            options.target_kbps
        )));
    }
    let analysis = analyze(audio)?;
    let side = side_bits(&analysis.envelopes);
    let duration = audio.duration_secs();
    let rate = match options.step_override_db {
        None => vbr_search(&analysis.perceptual, side, duration, options.target_kbps)?,
        Some(db) => {
            let offset = snap_offset_db(db);
            let bits = side + crate::coding::coefficient_bits_at(&analysis.perceptual, offset)?;
            RateControlResult {
                status: RateStatus::Success,
                step_db_offset: offset,
                total_bits: bits,
                achieved_kbps: bits as f64 / duration / 1000.0,
            }
        }
    };
    let quantized = analysis
        .perceptual
        .par_iter()
        .map(|f| quantize_frame(f, rate.step_db_offset))
        .collect::<Result<Vec<QuantizedFrame>>>()?;
    let records: Vec<FrameRecord> = quantized
        .into_iter()
        .zip(&analysis.envelopes)
        .map(|(q, e)| FrameRecord {
            window_type: q.window_type,
            envelope: e.clone(),
            coefficients: q,
        })
        .collect();
    let header = StreamHeader {
        sample_rate: SAMPLE_RATE,
        target_kbps: options.target_kbps.round() as u16,
        frame_count: records.len() as u32,
        step_db_offset: rate.step_db_offset,
        tail_padding: analysis.tail_padding as u16,
    };
    let bytes = write_stream(&header, &records)?;
    Ok(Encoded {
        bytes,
        header,
        sequence: analysis.sequence,
        records,
        perceptual: analysis.perceptual,
        rate,
        source_len: audio.len(),
    })
}

/// A parsed stream ready for either decoder path.
#[derive(Debug, Clone)]
pub struct DecodedStream {
    pub header: StreamHeader,
    pub sequence: WindowSequence,
    pub records: Vec<FrameRecord>,
}

impl DecodedStream {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let (header, records) = read_stream(bytes)?;
        let sequence = WindowSequence::new(records.iter().map(|r| r.window_type).collect())?;
        Ok(Self {
            header,
            sequence,
            records,
        })
    }

    pub fn envelopes(&self) -> Vec<PerceptualEnvelope> {
        self.records.iter().map(|r| r.envelope.clone()).collect()
    }

    pub fn quantized(&self) -> Vec<QuantizedFrame> {
        self.records.iter().map(|r| r.coefficients.clone()).collect()
    }

    /// Dequantized perceptual-domain frames on their native grids.
    pub fn dequantized(&self) -> Vec<MdctFrame> {
        self.records.iter().map(|r| dequantize_frame(&r.coefficients)).collect()
    }

    /// Removes the envelope from perceptual frames, runs the inverse
    /// transform and trims the encoder padding.
    pub fn synthesize(&self, perceptual: &[MdctFrame]) -> Result<AudioBuffer> {
        if perceptual.len() != self.records.len() {
            return Err(Error::LengthMismatch {
                expected: self.records.len(),
                got: perceptual.len(),
            });
        }
        if self.records.is_empty() {
            return Ok(AudioBuffer::zeros(0));
        }
        let spectral = perceptual
            .par_iter()
            .zip(self.records.par_iter())
            .map(|(f, r)| remove_weighting(f, &r.envelope))
            .collect::<Result<Vec<_>>>()?;
        let audio = mdct_synthesize(&spectral, &self.sequence)?;
        let mut samples = audio.into_samples();
        let keep = samples.len().saturating_sub(self.header.tail_padding as usize);
        samples.truncate(keep);
        AudioBuffer::new(samples)
    }
}

pub fn decode_core(bytes: &[u8]) -> Result<AudioBuffer> {
    let stream = DecodedStream::parse(bytes)?;
    let frames = stream.dequantized();
    stream.synthesize(&frames)
}

/// Decodes by sampling perceptual frames from the model conditioned on the
/// stream. Short frames average their four replicated lines.
pub fn decode_neural(bytes: &[u8], params: &ModelParams, seed: u64) -> Result<AudioBuffer> {
    let stream = DecodedStream::parse(bytes)?;
    if stream.records.is_empty() {
        return Ok(AudioBuffer::zeros(0));
    }
    let cond = prepare_conditioning(&stream.quantized(), &stream.envelopes(), &stream.sequence)?;
    let generated = generate(params, &cond, seed)?;
    let frames = generated
        .frames
        .chunks(LONG_LINES)
        .zip(stream.sequence.frames())
        .map(|(lines, &w)| MdctFrame::new(w, collapse_frame(lines, w)))
        .collect::<Result<Vec<_>>>()?;
    stream.synthesize(&frames)
}
