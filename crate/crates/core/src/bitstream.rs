//! The `.mdcn` container.
//!
//! ```text
//! offset size  field
//! 0      4     magic "MDCN"
//! 4      1     version (1)
//! 5      4     sample rate, big-endian (48000)
//! 9      2     target bitrate in kb/s, big-endian
//! 11     4     frame count, big-endian
//! 15     2     global step offset, signed big-endian, quarter-dB units
//! 17     ...   bit-packed payload, MSB first, zero-padded to a byte at the end
//! ```
//!
//! When the frame count is non-zero the payload begins with a 10-bit count
//! of padding samples to drop from the end of the decoded signal, followed
//! by one record per frame: a 2-bit window type, the envelope, and the
//! coefficients. Records are not byte-aligned.

use crate::audio::SAMPLE_RATE;
use crate::bitio::{BitReader, BitWriter};
use crate::coding::{decode_coefficients, decode_envelope, encode_coefficients, encode_envelope, QuantizedFrame, OFFSET_UNITS_PER_DB};
use crate::error::{Error, Result};
use crate::perceptual::{BandGrid, PerceptualEnvelope};
use crate::transform::{WindowType, HOP, SHORTS_PER_SLOT};

pub const MAGIC: [u8; 4] = *b"MDCN";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 17;
pub const HEADER_BITS: u64 = HEADER_BYTES as u64 * 8;
pub const TAIL_PADDING_BITS: u32 = 10;
const WINDOW_BITS: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub sample_rate: u32,
    pub target_kbps: u16,
    pub frame_count: u32,
    /// Global quantizer offset in dB; a multiple of 0.25.
    pub step_db_offset: f64,
    /// Samples of zero padding after the source signal (< 768).
    pub tail_padding: u16,
}

impl StreamHeader {
    fn offset_units(&self) -> i16 {
        (self.step_db_offset * OFFSET_UNITS_PER_DB)
            .round()
            .clamp(i16::MIN as f64, i16::MAX as f64) as i16
    }

    fn to_bytes(&self) -> [u8; HEADER_BYTES] {
        let mut b = [0u8; HEADER_BYTES];
        b[0..4].copy_from_slice(&MAGIC);
        b[4] = VERSION;
        b[5..9].copy_from_slice(&self.sample_rate.to_be_bytes());
        b[9..11].copy_from_slice(&self.target_kbps.to_be_bytes());
        b[11..15].copy_from_slice(&self.frame_count.to_be_bytes());
        b[15..17].copy_from_slice(&self.offset_units().to_be_bytes());
        b
    }

    fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 4 || b[0..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if b.len() < HEADER_BYTES {
            return Err(Error::TruncatedHeader);
        }
        if b[4] != VERSION {
            return Err(Error::BadVersion(b[4]));
        }
        let sample_rate = u32::from_be_bytes(b[5..9].try_into().unwrap());
        if sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate(sample_rate));
        }
        Ok(Self {
            sample_rate,
            target_kbps: u16::from_be_bytes(b[9..11].try_into().unwrap()),
            frame_count: u32::from_be_bytes(b[11..15].try_into().unwrap()),
            step_db_offset: i16::from_be_bytes(b[15..17].try_into().unwrap()) as f64 / OFFSET_UNITS_PER_DB,
            tail_padding: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub window_type: WindowType,
    pub envelope: PerceptualEnvelope,
    pub coefficients: QuantizedFrame,
}

fn write_payload(w: &mut BitWriter, header: &StreamHeader, frames: &[FrameRecord]) -> Result<()> {
    if frames.is_empty() {
        return Ok(());
    }
    if header.tail_padding as usize >= HOP {
        return Err(Error::Config(format!("tail padding {} exceeds one hop", header.tail_padding)));
    }
    w.write_bits(header.tail_padding as u64, TAIL_PADDING_BITS);
    let mut prev: Option<&PerceptualEnvelope> = None;
    for (index, f) in frames.iter().enumerate() {
        let grid = BandGrid::for_window(f.window_type);
        if f.envelope.grid != grid || f.coefficients.window_type != f.window_type {
            return Err(Error::FrameMismatch {
                index,
                reason: "envelope or coefficients do not match the window type".into(),
            });
        }
        w.write_bits(f.window_type.index() as u64, WINDOW_BITS);
        encode_envelope(w, &f.envelope, prev);
        encode_coefficients(w, &f.coefficients)?;
        prev = Some(&f.envelope);
    }
    Ok(())
}

/// Payload size in bits (everything after the header, before end padding).
pub fn payload_bits(header: &StreamHeader, frames: &[FrameRecord]) -> Result<u64> {
    let mut w = BitWriter::new();
    write_payload(&mut w, header, frames)?;
    Ok(w.bit_len())
}

pub fn write_stream(header: &StreamHeader, frames: &[FrameRecord]) -> Result<Vec<u8>> {
    if header.frame_count as usize != frames.len() {
        return Err(Error::Shape(format!(
            "header announces {} frames, {} given",
            header.frame_count,
            frames.len()
        )));
    }
    let mut w = BitWriter::new();
    w.write_bytes(&header.to_bytes());
    write_payload(&mut w, header, frames)?;
    Ok(w.finish())
}

pub fn read_stream(bytes: &[u8]) -> Result<(StreamHeader, Vec<FrameRecord>)> {
    let mut header = StreamHeader::from_bytes(bytes)?;
    let mut r = BitReader::new(&bytes[HEADER_BYTES..]);
    let count = header.frame_count as usize;
    let mut frames: Vec<FrameRecord> = Vec::with_capacity(count.min(1 << 20));
    if count > 0 {
        header.tail_padding = r
            .read_bits(TAIL_PADDING_BITS)
            .map_err(|_| Error::TruncatedStream(0))? as u16;
        if header.tail_padding as usize >= HOP {
            return Err(Error::Shape(format!("tail padding {} exceeds one hop", header.tail_padding)));
        }
    }
    let mut short_run = 0usize;
    for index in 0..count {
        let truncated = |e: Error| match e {
            Error::TruncatedCode => Error::TruncatedStream(index),
            other => other,
        };
        let code = r.read_bits(WINDOW_BITS).map_err(truncated)? as usize;
        let window_type = WindowType::from_index(code).expect("2-bit code");
        let legal = match frames.last() {
            None => window_type == WindowType::Long,
            Some(p) => p.window_type.may_precede(window_type),
        };
        if window_type.is_short() {
            short_run += 1;
        } else {
            if short_run % SHORTS_PER_SLOT != 0 {
                return Err(Error::CorruptWindowSequence(index));
            }
            short_run = 0;
        }
        if !legal {
            return Err(Error::CorruptWindowSequence(index));
        }
        let grid = BandGrid::for_window(window_type);
        let envelope = decode_envelope(&mut r, grid, frames.last().map(|f| &f.envelope)).map_err(truncated)?;
        let coefficients = decode_coefficients(&mut r, window_type, header.step_db_offset).map_err(truncated)?;
        frames.push(FrameRecord {
            window_type,
            envelope,
            coefficients,
        });
    }
    if let Some(last) = frames.last() {
        if last.window_type != WindowType::Long {
            return Err(Error::CorruptWindowSequence(frames.len() - 1));
        }
    }
    let rest = r.remaining();
    if rest >= 8 || (rest > 0 && r.read_bits(rest as u32)? != 0) {
        return Err(Error::Shape("trailing data after the last frame".into()));
    }
    Ok((header, frames))
}
