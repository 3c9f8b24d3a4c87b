use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cond::{ConditioningContext, ONE_HOT_CHANNELS};
use super::linalg::{gru_step, linear_new};
use super::net::{band_im2col, cond_im2col, cond_sum, gru, head, time_input, LaplacianParams, FREQ1, FREQ2, TIME1, TIME2};
use super::{ModelParams, Tensor};
use crate::error::{Error, Result};
use crate::transform::LONG_LINES;

/// Inverse-CDF draw from a Laplacian with location `mu` and scale `s`.
/// `u` is clamped into the open interval (0, 1).
pub fn sample_laplacian(mu: f64, s: f64, u: f64) -> f64 {
    let u = u.clamp(f64::from_bits(1), 1.0 - f64::EPSILON / 2.0);
    let d = u - 0.5;
    // 1 - 2|u - 0.5| evaluated without cancellation near the tails
    let tail = if d < 0.0 { 2.0 * u } else { 2.0 * (1.0 - u) };
    let sign = if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    };
    mu - s * sign * tail.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOutput {
    /// Generated perceptual frames on the 768-line grid.
    pub frames: Vec<f64>,
    /// The distribution each band was drawn from.
    pub params: LaplacianParams,
}

/// Self-generation with seeded Laplacian sampling.
pub fn generate(p: &ModelParams, cond: &ConditioningContext, seed: u64) -> Result<GenerateOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_with(p, cond, |_, _, mu, s, out| {
        for ((o, &m), &sc) in out.iter_mut().zip(mu).zip(s) {
            *o = sample_laplacian(m, sc, rng.gen::<f64>());
        }
    })
}

/// Sequential generation where `pick(t, b, mu, s, band)` fills each band
/// from its predicted distribution. The filled band is fed back as the
/// autoregressive input.
pub fn generate_with<F>(p: &ModelParams, cond: &ConditioningContext, mut pick: F) -> Result<GenerateOutput>
where
    F: FnMut(usize, usize, &[f64], &[f64], &mut [f64]),
{
    let c = &p.config;
    c.validate()?;
    let frames = cond.frames();
    if cond.coefficients.len() != frames * LONG_LINES
        || cond.log_gains.len() != frames * LONG_LINES
        || cond.one_hot.len() != frames * ONE_HOT_CHANNELS
    {
        return Err(Error::Shape("inconsistent conditioning context".into()));
    }
    let (nb, l, d, h) = (c.num_bands, c.lines_per_band, c.latent_dim, c.gru_hidden);
    let (g1, g2) = (gru(p, TIME1, d), gru(p, TIME2, h));
    let (f1, f2) = (gru(p, FREQ1, d), gru(p, FREQ2, h));
    let mut h1 = p.get(Tensor::TInit1).to_vec();
    let mut h2 = p.get(Tensor::TInit2).to_vec();
    let mut buffer = vec![0.0; LONG_LINES];
    let mut out = Vec::with_capacity(frames * LONG_LINES);
    let mut mu_all = Vec::with_capacity(frames * LONG_LINES);
    let mut scale_all = Vec::with_capacity(frames * LONG_LINES);

    for t in 0..frames {
        let bin = cond_im2col(c, cond, t, t + 1);
        let s = cond_sum(p, &bin, &cond.one_hot[t * ONE_HOT_CHANNELS..(t + 1) * ONE_HOT_CHANNELS]);
        let u = time_input(p, &buffer, &s);
        let (n1, _) = gru_step(g1, u, &h1, false);
        let (n2, _) = gru_step(g2, n1.clone(), &h2, false);
        h1 = n1;
        h2 = n2;
        let din = band_im2col(c, &h2, &s, 1);
        let ctx = linear_new(&din, c.band_conv_width(), p.get(Tensor::DW), p.get(Tensor::DB));

        let mut frame = vec![0.0; LONG_LINES];
        let mut q1 = p.get(Tensor::FInit1).to_vec();
        let mut q2 = p.get(Tensor::FInit2).to_vec();
        for b in 0..nb {
            let ein = if b == 0 {
                p.get(Tensor::EStart).to_vec()
            } else {
                frame[(b - 1) * l..b * l].to_vec()
            };
            let mut v = linear_new(&ein, l, p.get(Tensor::EW), p.get(Tensor::EB));
            for (a, x) in v.iter_mut().zip(&ctx[b * d..(b + 1) * d]) {
                *a += x;
            }
            let (n1, _) = gru_step(f1, v, &q1, false);
            let (n2, _) = gru_step(f2, n1.clone(), &q2, false);
            q1 = n1;
            q2 = n2;
            let (mu, scale, _, _) = head(p, &q2);
            pick(t, b, &mu, &scale, &mut frame[b * l..(b + 1) * l]);
            mu_all.extend_from_slice(&mu);
            scale_all.extend_from_slice(&scale);
        }
        out.extend_from_slice(&frame);
        buffer = frame;
    }
    Ok(GenerateOutput {
        frames: out,
        params: LaplacianParams {
            mu: mu_all,
            scale: scale_all,
        },
    })
}
