//! MDCTNet: an autoregressive model over perceptual-domain MDCT frames.
//!
//! Each frame of 768 lines is split into `B` bands of `L` lines. A time
//! GRU runs along frames for every band, a frequency GRU runs across the
//! bands of one frame, and an MLP head emits a Laplacian location and scale
//! per line. The conditioning path sees quantized coefficients, envelope
//! log-gains and the window type, with a lookahead of `n` frames.

mod checkpoint;
mod cond;
mod generate;
mod linalg;
mod net;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use cond::{collapse_frame, expand_frame, prepare_conditioning, ConditioningContext, ONE_HOT_CHANNELS};
pub use generate::{generate, generate_with, sample_laplacian, GenerateOutput};
pub use linalg::{sigmoid, softplus};
pub use net::{backward, forward_with_cache, teacher_forced_forward, Forward, LaplacianParams};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::transform::LONG_LINES;

pub const GRU_LAYERS: usize = 2;
pub const DEFAULT_SCALE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub num_bands: usize,
    pub lines_per_band: usize,
    pub latent_dim: usize,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub lookahead: usize,
    pub cross_band_halfwidth: usize,
    pub mlp_hidden: usize,
    pub scale_floor: f64,
}

impl ModelConfig {
    /// Desk-scale configuration used for training tests.
    pub fn toy() -> Self {
        Self {
            num_bands: 16,
            lines_per_band: 48,
            latent_dim: 64,
            gru_hidden: 64,
            gru_layers: GRU_LAYERS,
            lookahead: 6,
            cross_band_halfwidth: 1,
            mlp_hidden: 128,
            scale_floor: DEFAULT_SCALE_FLOOR,
        }
    }

    pub fn full_scale() -> Self {
        Self {
            latent_dim: 1024,
            gru_hidden: 1024,
            mlp_hidden: 1024,
            ..Self::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_bands == 0 || self.num_bands * self.lines_per_band != LONG_LINES {
            return bad(format!(
                "{} bands of {} lines do not cover {LONG_LINES} lines",
                self.num_bands, self.lines_per_band
            ));
        }
        if self.gru_layers != GRU_LAYERS {
            return bad(format!("gru_layers must be {GRU_LAYERS}, got {}", self.gru_layers));
        }
        if self.latent_dim == 0 || self.gru_hidden == 0 || self.mlp_hidden == 0 {
            return bad("layer widths must be positive".into());
        }
        if !(self.scale_floor > 0.0 && self.scale_floor.is_finite()) {
            return bad(format!("scale_floor must be positive, got {}", self.scale_floor));
        }
        Ok(())
    }

    /// Input width of the conditioning convolution.
    pub(crate) fn cond_width(&self) -> usize {
        (2 * self.lookahead + 1) * 2 * self.lines_per_band
    }

    /// Input width of the cross-band convolution.
    pub(crate) fn band_conv_width(&self) -> usize {
        (2 * self.cross_band_halfwidth + 1) * (self.gru_hidden + self.latent_dim)
    }
}

/// Tensor identifiers, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Tensor {
    AW,
    AB,
    BW,
    BB,
    CW,
    CB,
    T1Wih,
    T1Whh,
    T1Bih,
    T1Bhh,
    T2Wih,
    T2Whh,
    T2Bih,
    T2Bhh,
    TInit1,
    TInit2,
    DW,
    DB,
    EW,
    EB,
    EStart,
    F1Wih,
    F1Whh,
    F1Bih,
    F1Bhh,
    F2Wih,
    F2Whh,
    F2Bih,
    F2Bhh,
    FInit1,
    FInit2,
    M1W,
    M1B,
    M2W,
    M2B,
}

pub const TENSOR_COUNT: usize = 35;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    /// Uniform in ±sqrt(1/fan_in) with fan_in = rows.
    Uniform,
    /// Orthogonal `hidden × hidden` block per gate.
    Orthogonal,
    Zero,
}

impl Tensor {
    pub const ALL: [Tensor; TENSOR_COUNT] = {
        use Tensor::*;
        [
            AW, AB, BW, BB, CW, CB, T1Wih, T1Whh, T1Bih, T1Bhh, T2Wih, T2Whh, T2Bih, T2Bhh, TInit1, TInit2, DW, DB,
            EW, EB, EStart, F1Wih, F1Whh, F1Bih, F1Bhh, F2Wih, F2Whh, F2Bih, F2Bhh, FInit1, FInit2, M1W, M1B, M2W,
            M2B,
        ]
    };

    pub fn name(self) -> &'static str {
        use Tensor::*;
        match self {
            AW => "a.weight",
            AB => "a.bias",
            BW => "b.weight",
            BB => "b.bias",
            CW => "c.weight",
            CB => "c.bias",
            T1Wih => "time_gru.0.w_ih",
            T1Whh => "time_gru.0.w_hh",
            T1Bih => "time_gru.0.b_ih",
            T1Bhh => "time_gru.0.b_hh",
            T2Wih => "time_gru.1.w_ih",
            T2Whh => "time_gru.1.w_hh",
            T2Bih => "time_gru.1.b_ih",
            T2Bhh => "time_gru.1.b_hh",
            TInit1 => "time_gru.0.h0",
            TInit2 => "time_gru.1.h0",
            DW => "d.weight",
            DB => "d.bias",
            EW => "e.weight",
            EB => "e.bias",
            EStart => "e.start",
            F1Wih => "freq_gru.0.w_ih",
            F1Whh => "freq_gru.0.w_hh",
            F1Bih => "freq_gru.0.b_ih",
            F1Bhh => "freq_gru.0.b_hh",
            F2Wih => "freq_gru.1.w_ih",
            F2Whh => "freq_gru.1.w_hh",
            F2Bih => "freq_gru.1.b_ih",
            F2Bhh => "freq_gru.1.b_hh",
            FInit1 => "freq_gru.0.h0",
            FInit2 => "freq_gru.1.h0",
            M1W => "mlp.0.weight",
            M1B => "mlp.0.bias",
            M2W => "mlp.1.weight",
            M2B => "mlp.1.bias",
        }
    }

    /// (rows, cols) of the tensor; weights are stored input-major so that
    /// `y = b + x · W`.
    pub fn shape(self, c: &ModelConfig) -> (usize, usize) {
        use Tensor::*;
        let (l, d, h, hm, b) = (c.lines_per_band, c.latent_dim, c.gru_hidden, c.mlp_hidden, c.num_bands);
        match self {
            AW | EW => (l, d),
            AB | EB | DB => (1, d),
            BW => (c.cond_width(), 2 * d),
            BB | CB => (1, 2 * d),
            CW => (ONE_HOT_CHANNELS, 2 * d),
            T1Wih | F1Wih => (d, 3 * h),
            T2Wih | F2Wih | T1Whh | T2Whh | F1Whh | F2Whh => (h, 3 * h),
            T1Bih | T1Bhh | T2Bih | T2Bhh | F1Bih | F1Bhh | F2Bih | F2Bhh => (1, 3 * h),
            TInit1 | TInit2 => (b, h),
            FInit1 | FInit2 => (1, h),
            DW => (c.band_conv_width(), d),
            EStart => (1, l),
            M1W => (h, hm),
            M1B => (1, hm),
            M2W => (hm, 2 * l),
            M2B => (1, 2 * l),
        }
    }

    pub fn len(self, c: &ModelConfig) -> usize {
        let (r, k) = self.shape(c);
        r * k
    }

    fn init(self) -> Init {
        use Tensor::*;
        match self {
            AW | BW | CW | DW | EW | M1W | M2W | T1Wih | T2Wih | F1Wih | F2Wih => Init::Uniform,
            T1Whh | T2Whh | F1Whh | F2Whh => Init::Orthogonal,
            _ => Init::Zero,
        }
    }
}

/// All model weights, one flat row-major buffer per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Vec<Vec<f64>>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tensors: Tensor::ALL.iter().map(|t| vec![0.0; t.len(&config)]).collect(),
        })
    }

    pub fn get(&self, t: Tensor) -> &[f64] {
        &self.tensors[t as usize]
    }

    pub fn get_mut(&mut self, t: Tensor) -> &mut [f64] {
        &mut self.tensors[t as usize]
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.tensors.iter().flatten()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.tensors.iter_mut().flatten()
    }

    /// Rounds every weight to the nearest f32, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for v in self.iter_mut() {
            *v = *v as f32 as f64;
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for t in Tensor::ALL {
            if self.get(t).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("parameter {}", t.name())));
            }
        }
        Ok(())
    }
}

pub fn param_count(config: &ModelConfig) -> usize {
    Tensor::ALL.iter().map(|t| t.len(config)).sum()
}

/// Seeded initialization. Weights are rounded to f32 so that a checkpoint
/// round trip is lossless.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(*config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config.gru_hidden;
    for t in Tensor::ALL {
        let (rows, cols) = t.shape(config);
        let data = params.get_mut(t);
        match t.init() {
            Init::Zero => {}
            Init::Uniform => {
                let bound = (1.0 / rows as f64).sqrt();
                for v in data.iter_mut() {
                    *v = rng.gen_range(-bound..=bound);
                }
            }
            Init::Orthogonal => {
                debug_assert_eq!((rows, cols), (h, 3 * h));
                for gate in 0..3 {
                    let q = random_orthogonal(h, &mut rng);
                    for r in 0..h {
                        data[r * cols + gate * h..r * cols + (gate + 1) * h].copy_from_slice(&q[r * h..(r + 1) * h]);
                    }
                }
            }
        }
    }
    params.round_to_f32();
    Ok(params)
}

/// Orthogonal `n × n` matrix from Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut m: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        let mut ok = true;
        for i in 0..n {
            for _ in 0..2 {
                for j in 0..i {
                    let dot: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                    for k in 0..n {
                        m[i * n + k] -= dot * m[j * n + k];
                    }
                }
            }
            let norm = (0..n).map(|k| m[i * n + k].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for k in 0..n {
                m[i * n + k] /= norm;
            }
        }
        if ok {
            return m;
        }
    }
}
