//! Flat `key = value` configuration text. Blank lines and `#` comments are
//! ignored; unknown keys are errors.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mdctnet::ModelConfig;
use crate::training::TrainingConfig;

pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value {v:?} for {key}")))
}

impl ModelConfig {
    /// Starts from [`ModelConfig::toy`] and applies overrides.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut c = Self::toy();
        for (line, k, v) in parse_key_values(text)? {
            match k.as_str() {
                "num_bands" => c.num_bands = value(line, &k, &v)?,
                "lines_per_band" => c.lines_per_band = value(line, &k, &v)?,
                "latent_dim" => c.latent_dim = value(line, &k, &v)?,
                "gru_hidden" => c.gru_hidden = value(line, &k, &v)?,
                "gru_layers" => c.gru_layers = value(line, &k, &v)?,
                "lookahead" => c.lookahead = value(line, &k, &v)?,
                "cross_band_halfwidth" => c.cross_band_halfwidth = value(line, &k, &v)?,
                "mlp_hidden" => c.mlp_hidden = value(line, &k, &v)?,
                "scale_floor" => c.scale_floor = value(line, &k, &v)?,
                _ => return Err(Error::Config(format!("line {line}: unknown model key {k:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl TrainingConfig {
    /// Starts from the defaults and applies overrides.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (line, k, v) in parse_key_values(text)? {
            match k.as_str() {
                "batch_size" => c.batch_size = value(line, &k, &v)?,
                "crop_seconds" => c.crop_seconds = value(line, &k, &v)?,
                "lr" => c.lr = value(line, &k, &v)?,
                "beta1" => c.beta1 = value(line, &k, &v)?,
                "beta2" => c.beta2 = value(line, &k, &v)?,
                "epsilon" => c.epsilon = value(line, &k, &v)?,
                "plateau_epochs" => c.plateau_epochs = value(line, &k, &v)?,
                "lr_factor" => c.lr_factor = value(line, &k, &v)?,
                "max_epochs" => c.max_epochs = value(line, &k, &v)?,
                "steps_per_epoch" => c.steps_per_epoch = value(line, &k, &v)?,
                "max_steps" => c.max_steps = value(line, &k, &v)?,
                "seed" => c.seed = value(line, &k, &v)?,
                _ => return Err(Error::Config(format!("line {line}: unknown training key {k:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}
