//! Teacher-forced forward pass and its exact reverse-mode gradient.
//!
//! Row layout for per-(frame, band) activations is `t * B + b`.

use super::cond::{ConditioningContext, ONE_HOT_CHANNELS};
use super::linalg::{gru_step, gru_step_backward, linear_backward, linear_new, sigmoid, softplus, GruCache, GruGrads, GruWeights};
use super::{ModelConfig, ModelParams, Tensor};
use crate::error::{Error, Result};
use crate::transform::LONG_LINES;

/// Per-line Laplacian parameters, `frames × 768` each.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianParams {
    pub mu: Vec<f64>,
    pub scale: Vec<f64>,
}

impl LaplacianParams {
    pub fn frames(&self) -> usize {
        self.mu.len() / LONG_LINES
    }
}

#[derive(Debug)]
struct Cache {
    frames: usize,
    ain: Vec<f64>,
    bin: Vec<f64>,
    one_hot: Vec<f64>,
    time: Vec<[GruCache; 2]>,
    din: Vec<f64>,
    ein: Vec<f64>,
    freq: Vec<[GruCache; 2]>,
    z0: Vec<f64>,
    m1: Vec<f64>,
    raw_scale: Vec<f64>,
}

/// Forward output together with the activations needed by [`backward`].
#[derive(Debug)]
pub struct Forward {
    pub output: LaplacianParams,
    cache: Cache,
}

impl Forward {
    /// Which ReLU inputs are positive. Parameter points with the same
    /// pattern lie on one smooth piece of the network.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.cache.z0.iter().chain(&self.cache.m1).map(|v| *v > 0.0).collect()
    }
}

pub(crate) const TIME1: [Tensor; 4] = [Tensor::T1Wih, Tensor::T1Whh, Tensor::T1Bih, Tensor::T1Bhh];
pub(crate) const TIME2: [Tensor; 4] = [Tensor::T2Wih, Tensor::T2Whh, Tensor::T2Bih, Tensor::T2Bhh];
pub(crate) const FREQ1: [Tensor; 4] = [Tensor::F1Wih, Tensor::F1Whh, Tensor::F1Bih, Tensor::F1Bhh];
pub(crate) const FREQ2: [Tensor; 4] = [Tensor::F2Wih, Tensor::F2Whh, Tensor::F2Bih, Tensor::F2Bhh];

pub(crate) fn gru<'a>(p: &'a ModelParams, t: [Tensor; 4], in_dim: usize) -> GruWeights<'a> {
    GruWeights {
        w_ih: p.get(t[0]),
        w_hh: p.get(t[1]),
        b_ih: p.get(t[2]),
        b_hh: p.get(t[3]),
        in_dim,
        hidden: p.config.gru_hidden,
    }
}

fn gru_grads(g: &mut ModelParams, t: [Tensor; 4]) -> GruGrads<'_> {
    let [w_ih, w_hh, b_ih, b_hh] = g.tensors.get_disjoint_mut(t.map(|x| x as usize)).expect("distinct tensors");
    GruGrads { w_ih, w_hh, b_ih, b_hh }
}

fn pair(g: &mut ModelParams, w: Tensor, b: Tensor) -> (&mut [f64], &mut [f64]) {
    let [w, b] = g.tensors.get_disjoint_mut([w as usize, b as usize]).expect("distinct tensors");
    (w, b)
}

/// Conditioning convolution inputs for frames `[t0, t1)`: per band, the
/// (coefficient, log-gain) slices of frames t-n ..= t+n, zero outside the
/// context.
pub(crate) fn cond_im2col(c: &ModelConfig, cond: &ConditioningContext, t0: usize, t1: usize) -> Vec<f64> {
    let (nb, l, n) = (c.num_bands, c.lines_per_band, c.lookahead as i64);
    let width = c.cond_width();
    let total = cond.frames() as i64;
    let mut out = vec![0.0; (t1 - t0) * nb * width];
    for t in t0..t1 {
        for b in 0..nb {
            let row = &mut out[((t - t0) * nb + b) * width..((t - t0) * nb + b + 1) * width];
            for (tap, tt) in (t as i64 - n..=t as i64 + n).enumerate() {
                if tt < 0 || tt >= total {
                    continue;
                }
                let src = tt as usize * LONG_LINES + b * l;
                let dst = tap * 2 * l;
                row[dst..dst + l].copy_from_slice(&cond.coefficients[src..src + l]);
                row[dst + l..dst + 2 * l].copy_from_slice(&cond.log_gains[src..src + l]);
            }
        }
    }
    out
}

/// Layer B plus the broadcast layer C term: `frames × B` rows of 2D.
pub(crate) fn cond_sum(p: &ModelParams, bin: &[f64], one_hot: &[f64]) -> Vec<f64> {
    let c = &p.config;
    let (nb, d2) = (c.num_bands, 2 * c.latent_dim);
    let mut s = linear_new(bin, c.cond_width(), p.get(Tensor::BW), p.get(Tensor::BB));
    let w = linear_new(one_hot, ONE_HOT_CHANNELS, p.get(Tensor::CW), p.get(Tensor::CB));
    for (r, row) in s.chunks_mut(d2).enumerate() {
        let wt = &w[(r / nb) * d2..(r / nb + 1) * d2];
        for (a, b) in row.iter_mut().zip(wt) {
            *a += b;
        }
    }
    s
}

/// Time GRU input `A(X_{t-1}) + H1`.
pub(crate) fn time_input(p: &ModelParams, ain: &[f64], s: &[f64]) -> Vec<f64> {
    let c = &p.config;
    let d = c.latent_dim;
    let mut u = linear_new(ain, c.lines_per_band, p.get(Tensor::AW), p.get(Tensor::AB));
    for (row, srow) in u.chunks_mut(d).zip(s.chunks(2 * d)) {
        for (a, b) in row.iter_mut().zip(&srow[..d]) {
            *a += b;
        }
    }
    u
}

/// Cross-band convolution inputs: per band, concat(h2, H2) of bands
/// b-N ..= b+N, zero beyond the edges.
pub(crate) fn band_im2col(c: &ModelConfig, h2: &[f64], s: &[f64], frames: usize) -> Vec<f64> {
    let (nb, h, d, n) = (c.num_bands, c.gru_hidden, c.latent_dim, c.cross_band_halfwidth as i64);
    let width = c.band_conv_width();
    let mut out = vec![0.0; frames * nb * width];
    for t in 0..frames {
        for b in 0..nb {
            let row = &mut out[(t * nb + b) * width..(t * nb + b + 1) * width];
            for (tap, bb) in (b as i64 - n..=b as i64 + n).enumerate() {
                if bb < 0 || bb >= nb as i64 {
                    continue;
                }
                let r = t * nb + bb as usize;
                let dst = tap * (h + d);
                row[dst..dst + h].copy_from_slice(&h2[r * h..(r + 1) * h]);
                row[dst + h..dst + h + d].copy_from_slice(&s[r * 2 * d + d..(r + 1) * 2 * d]);
            }
        }
    }
    out
}

/// MLP head on freq GRU outputs. Returns (mu, scale, m1, raw scale).
pub(crate) fn head(p: &ModelParams, z0: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = &p.config;
    let (h, hm, l) = (c.gru_hidden, c.mlp_hidden, c.lines_per_band);
    let r1: Vec<f64> = z0.iter().map(|v| v.max(0.0)).collect();
    let m1 = linear_new(&r1, h, p.get(Tensor::M1W), p.get(Tensor::M1B));
    let r2: Vec<f64> = m1.iter().map(|v| v.max(0.0)).collect();
    let out = linear_new(&r2, hm, p.get(Tensor::M2W), p.get(Tensor::M2B));
    let rows = z0.len() / h;
    let mut mu = Vec::with_capacity(rows * l);
    let mut raw = Vec::with_capacity(rows * l);
    for row in out.chunks(2 * l) {
        mu.extend_from_slice(&row[..l]);
        raw.extend_from_slice(&row[l..]);
    }
    let scale = raw.iter().map(|&r| c.scale_floor + softplus(r)).collect();
    (mu, scale, m1, raw)
}

fn check_inputs(c: &ModelConfig, x: &[f64], cond: &ConditioningContext) -> Result<usize> {
    let t = cond.frames();
    if t == 0 {
        return Err(Error::Shape("no frames".into()));
    }
    let want = t * LONG_LINES;
    for (what, n) in [
        ("targets", x.len()),
        ("coefficients", cond.coefficients.len()),
        ("log gains", cond.log_gains.len()),
    ] {
        if n != want {
            return Err(Error::Shape(format!("{what}: {n} values for {t} frames of {LONG_LINES}")));
        }
    }
    if cond.one_hot.len() != t * ONE_HOT_CHANNELS {
        return Err(Error::Shape(format!("one-hot: {} values for {t} frames", cond.one_hot.len())));
    }
    c.validate()?;
    Ok(t)
}

fn gather_band(v: &[f64], frames: usize, nb: usize, b: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(frames * width);
    for t in 0..frames {
        let r = t * nb + b;
        out.extend_from_slice(&v[r * width..(r + 1) * width]);
    }
    out
}

fn scatter_band(dst: &mut [f64], src: &[f64], nb: usize, b: usize, width: usize) {
    for (t, row) in src.chunks(width).enumerate() {
        let r = t * nb + b;
        dst[r * width..(r + 1) * width].copy_from_slice(row);
    }
}

/// Runs the network with ground truth `x` (`frames × 768`, short frames
/// expanded) as the autoregressive input.
pub fn forward_with_cache(p: &ModelParams, x: &[f64], cond: &ConditioningContext) -> Result<Forward> {
    let c = &p.config;
    let frames = check_inputs(c, x, cond)?;
    let (nb, l, d, h) = (c.num_bands, c.lines_per_band, c.latent_dim, c.gru_hidden);

    let mut ain = vec![0.0; frames * LONG_LINES];
    ain[LONG_LINES..].copy_from_slice(&x[..(frames - 1) * LONG_LINES]);
    let bin = cond_im2col(c, cond, 0, frames);
    let s = cond_sum(p, &bin, &cond.one_hot);
    let u = time_input(p, &ain, &s);

    let (g1, g2) = (gru(p, TIME1, d), gru(p, TIME2, h));
    let mut h1 = p.get(Tensor::TInit1).to_vec();
    let mut h2 = p.get(Tensor::TInit2).to_vec();
    let mut h2_all = Vec::with_capacity(frames * nb * h);
    let mut time = Vec::with_capacity(frames);
    for t in 0..frames {
        let (n1, c1) = gru_step(g1, u[t * nb * d..(t + 1) * nb * d].to_vec(), &h1, true);
        let (n2, c2) = gru_step(g2, n1.clone(), &h2, true);
        h1 = n1;
        h2 = n2;
        h2_all.extend_from_slice(&h2);
        time.push([c1.unwrap(), c2.unwrap()]);
    }

    let din = band_im2col(c, &h2_all, &s, frames);
    let ctx = linear_new(&din, c.band_conv_width(), p.get(Tensor::DW), p.get(Tensor::DB));

    let mut ein = vec![0.0; frames * nb * l];
    for t in 0..frames {
        for b in 0..nb {
            let row = &mut ein[(t * nb + b) * l..(t * nb + b + 1) * l];
            if b == 0 {
                row.copy_from_slice(p.get(Tensor::EStart));
            } else {
                row.copy_from_slice(&x[t * LONG_LINES + (b - 1) * l..t * LONG_LINES + b * l]);
            }
        }
    }
    let mut v = linear_new(&ein, l, p.get(Tensor::EW), p.get(Tensor::EB));
    for (a, b) in v.iter_mut().zip(&ctx) {
        *a += b;
    }

    let (f1, f2) = (gru(p, FREQ1, d), gru(p, FREQ2, h));
    let mut q1: Vec<f64> = p.get(Tensor::FInit1).repeat(frames);
    let mut q2: Vec<f64> = p.get(Tensor::FInit2).repeat(frames);
    let mut z0 = vec![0.0; frames * nb * h];
    let mut freq = Vec::with_capacity(nb);
    for b in 0..nb {
        let vb = gather_band(&v, frames, nb, b, d);
        let (n1, c1) = gru_step(f1, vb, &q1, true);
        let (n2, c2) = gru_step(f2, n1.clone(), &q2, true);
        scatter_band(&mut z0, &n2, nb, b, h);
        q1 = n1;
        q2 = n2;
        freq.push([c1.unwrap(), c2.unwrap()]);
    }

    let (mu, scale, m1, raw_scale) = head(p, &z0);
    Ok(Forward {
        output: LaplacianParams { mu, scale },
        cache: Cache {
            frames,
            ain,
            bin,
            one_hot: cond.one_hot.clone(),
            time,
            din,
            ein,
            freq,
            z0,
            m1,
            raw_scale,
        },
    })
}

pub fn teacher_forced_forward(p: &ModelParams, x: &[f64], cond: &ConditioningContext) -> Result<LaplacianParams> {
    forward_with_cache(p, x, cond).map(|f| f.output)
}

/// Gradients of `Σ dmu·mu + Σ dscale·scale` with respect to every
/// parameter, given upstream derivatives for each output.
pub fn backward(p: &ModelParams, fwd: &Forward, dmu: &[f64], dscale: &[f64]) -> Result<ModelParams> {
    let c = &p.config;
    let k = &fwd.cache;
    let frames = k.frames;
    let (nb, l, d, h, hm) = (c.num_bands, c.lines_per_band, c.latent_dim, c.gru_hidden, c.mlp_hidden);
    let rows = frames * nb;
    if dmu.len() != rows * l || dscale.len() != rows * l {
        return Err(Error::Shape("upstream gradient does not match the forward output".into()));
    }
    let mut g = ModelParams::zeros(*c)?;

    let mut dout = vec![0.0; rows * 2 * l];
    for r in 0..rows {
        for i in 0..l {
            dout[r * 2 * l + i] = dmu[r * l + i];
            dout[r * 2 * l + l + i] = dscale[r * l + i] * sigmoid(k.raw_scale[r * l + i]);
        }
    }
    let r2: Vec<f64> = k.m1.iter().map(|v| v.max(0.0)).collect();
    let mut dm1 = vec![0.0; rows * hm];
    {
        let (w, b) = pair(&mut g, Tensor::M2W, Tensor::M2B);
        linear_backward(&r2, hm, p.get(Tensor::M2W), &dout, w, b, Some(&mut dm1));
    }
    for (dv, m) in dm1.iter_mut().zip(&k.m1) {
        if *m <= 0.0 {
            *dv = 0.0;
        }
    }
    let r1: Vec<f64> = k.z0.iter().map(|v| v.max(0.0)).collect();
    let mut dz0 = vec![0.0; rows * h];
    {
        let (w, b) = pair(&mut g, Tensor::M1W, Tensor::M1B);
        linear_backward(&r1, h, p.get(Tensor::M1W), &dm1, w, b, Some(&mut dz0));
    }
    for (dv, z) in dz0.iter_mut().zip(&k.z0) {
        if *z <= 0.0 {
            *dv = 0.0;
        }
    }

    let (f1, f2) = (gru(p, FREQ1, d), gru(p, FREQ2, h));
    let mut carry1 = vec![0.0; frames * h];
    let mut carry2 = vec![0.0; frames * h];
    let mut dv = vec![0.0; rows * d];
    for b in (0..nb).rev() {
        let mut dh2 = gather_band(&dz0, frames, nb, b, h);
        for (a, c2) in dh2.iter_mut().zip(&carry2) {
            *a += c2;
        }
        let (mut dh1, prev2) = gru_step_backward(f2, &k.freq[b][1], &dh2, gru_grads(&mut g, FREQ2));
        for (a, c1) in dh1.iter_mut().zip(&carry1) {
            *a += c1;
        }
        let (dx, prev1) = gru_step_backward(f1, &k.freq[b][0], &dh1, gru_grads(&mut g, FREQ1));
        scatter_band(&mut dv, &dx, nb, b, d);
        carry1 = prev1;
        carry2 = prev2;
    }
    for (init, carry) in [(Tensor::FInit1, &carry1), (Tensor::FInit2, &carry2)] {
        let gi = g.get_mut(init);
        for row in carry.chunks(h) {
            for (a, b) in gi.iter_mut().zip(row) {
                *a += b;
            }
        }
    }

    let mut dein = vec![0.0; rows * l];
    {
        let (w, b) = pair(&mut g, Tensor::EW, Tensor::EB);
        linear_backward(&k.ein, l, p.get(Tensor::EW), &dv, w, b, Some(&mut dein));
    }
    {
        let start = g.get_mut(Tensor::EStart);
        for t in 0..frames {
            for (a, b) in start.iter_mut().zip(&dein[t * nb * l..(t * nb + 1) * l]) {
                *a += b;
            }
        }
    }

    let width = c.band_conv_width();
    let mut ddin = vec![0.0; rows * width];
    {
        let (w, b) = pair(&mut g, Tensor::DW, Tensor::DB);
        linear_backward(&k.din, width, p.get(Tensor::DW), &dv, w, b, Some(&mut ddin));
    }
    let mut dh2_all = vec![0.0; rows * h];
    let mut ds = vec![0.0; rows * 2 * d];
    let n = c.cross_band_halfwidth as i64;
    for t in 0..frames {
        for b in 0..nb {
            let row = &ddin[(t * nb + b) * width..(t * nb + b + 1) * width];
            for (tap, bb) in (b as i64 - n..=b as i64 + n).enumerate() {
                if bb < 0 || bb >= nb as i64 {
                    continue;
                }
                let r = t * nb + bb as usize;
                let src = tap * (h + d);
                for (a, v) in dh2_all[r * h..(r + 1) * h].iter_mut().zip(&row[src..src + h]) {
                    *a += v;
                }
                for (a, v) in ds[r * 2 * d + d..(r + 1) * 2 * d].iter_mut().zip(&row[src + h..src + h + d]) {
                    *a += v;
                }
            }
        }
    }

    let (g1, g2) = (gru(p, TIME1, d), gru(p, TIME2, h));
    let mut carry1 = vec![0.0; nb * h];
    let mut carry2 = vec![0.0; nb * h];
    let mut du = vec![0.0; rows * d];
    for t in (0..frames).rev() {
        let mut dh2 = dh2_all[t * nb * h..(t + 1) * nb * h].to_vec();
        for (a, c2) in dh2.iter_mut().zip(&carry2) {
            *a += c2;
        }
        let (mut dh1, prev2) = gru_step_backward(g2, &k.time[t][1], &dh2, gru_grads(&mut g, TIME2));
        for (a, c1) in dh1.iter_mut().zip(&carry1) {
            *a += c1;
        }
        let (dx, prev1) = gru_step_backward(g1, &k.time[t][0], &dh1, gru_grads(&mut g, TIME1));
        du[t * nb * d..(t + 1) * nb * d].copy_from_slice(&dx);
        carry1 = prev1;
        carry2 = prev2;
    }
    for (a, b) in g.get_mut(Tensor::TInit1).iter_mut().zip(&carry1) {
        *a += b;
    }
    for (a, b) in g.get_mut(Tensor::TInit2).iter_mut().zip(&carry2) {
        *a += b;
    }
    for (row, drow) in ds.chunks_mut(2 * d).zip(du.chunks(d)) {
        row[..d].copy_from_slice(drow);
    }

    {
        let (w, b) = pair(&mut g, Tensor::AW, Tensor::AB);
        linear_backward(&k.ain, l, p.get(Tensor::AW), &du, w, b, None);
    }
    {
        let (w, b) = pair(&mut g, Tensor::BW, Tensor::BB);
        linear_backward(&k.bin, c.cond_width(), p.get(Tensor::BW), &ds, w, b, None);
    }
    let mut dc = vec![0.0; frames * 2 * d];
    for (r, row) in ds.chunks(2 * d).enumerate() {
        let t = r / nb;
        for (a, v) in dc[t * 2 * d..(t + 1) * 2 * d].iter_mut().zip(row) {
            *a += v;
        }
    }
    {
        let (w, b) = pair(&mut g, Tensor::CW, Tensor::CB);
        linear_backward(&k.one_hot, ONE_HOT_CHANNELS, p.get(Tensor::CW), &dc, w, b, None);
    }

    for t in Tensor::ALL {
        if g.get(t).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(t.name().into()));
        }
    }
    Ok(g)
}
