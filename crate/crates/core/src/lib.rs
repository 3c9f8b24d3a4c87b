//! Monophonic 48 kHz perceptual audio codec with an autoregressive
//! recurrent decoder model operating on perceptually weighted MDCT lines.

pub mod audio;
pub mod bitio;
pub mod bitstream;
pub mod codec;
pub mod coding;
pub mod error;
pub mod kv;
pub mod mdctnet;
pub mod perceptual;
pub mod training;
pub mod transform;

pub use error::{Error, Result};
