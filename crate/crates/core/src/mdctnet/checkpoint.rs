//! Binary checkpoint: `"MDNW"`, a little-endian u32 version, the config
//! block, a u64 parameter count, then every tensor in [`Tensor::ALL`] order
//! as little-endian f32.
//!
//! ```text
//! offset size  field
//! 0      4     magic "MDNW"
//! 4      4     version (1)
//! 8      32    num_bands, lines_per_band, latent_dim, gru_hidden,
//!              gru_layers, lookahead, cross_band_halfwidth, mlp_hidden (u32 each)
//! 40     8     scale_floor (f64)
//! 48     8     parameter count (u64)
//! 56     4·P   weights
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{param_count, ModelConfig, ModelParams, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MDNW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, p: &ModelParams) -> Result<()> {
    let c = &p.config;
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for v in [
        c.num_bands,
        c.lines_per_band,
        c.latent_dim,
        c.gru_hidden,
        c.gru_layers,
        c.lookahead,
        c.cross_band_halfwidth,
        c.mlp_hidden,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&c.scale_floor.to_le_bytes())?;
    w.write_all(&(p.param_count() as u64).to_le_bytes())?;
    for t in Tensor::ALL {
        for &v in p.get(t) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(b)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelParams> {
    if read_array::<_, 4>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not an MDNW checkpoint".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let mut f = [0usize; 8];
    for v in f.iter_mut() {
        *v = u32::from_le_bytes(read_array(&mut r)?) as usize;
    }
    let config = ModelConfig {
        num_bands: f[0],
        lines_per_band: f[1],
        latent_dim: f[2],
        gru_hidden: f[3],
        gru_layers: f[4],
        lookahead: f[5],
        cross_band_halfwidth: f[6],
        mlp_hidden: f[7],
        scale_floor: f64::from_le_bytes(read_array(&mut r)?),
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid config: {e}")))?;
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    if count != param_count(&config) {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {count} parameters, config needs {}",
            param_count(&config)
        )));
    }
    let mut p = ModelParams::zeros(config)?;
    for t in Tensor::ALL {
        for v in p.get_mut(t) {
            *v = f32::from_le_bytes(read_array(&mut r)?) as f64;
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after weights".into()));
    }
    p.check_finite()
        .map_err(|_| Error::Checkpoint("non-finite weight".into()))?;
    Ok(p)
}

pub fn save_checkpoint(path: impl AsRef<Path>, p: &ModelParams) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), p)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
