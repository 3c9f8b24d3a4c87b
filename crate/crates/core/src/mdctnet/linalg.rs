//! Row-wise dense kernels. Every output element is accumulated in the same
//! order no matter how many rows are processed together, so a single-row
//! call reproduces the corresponding row of a batched call bit for bit.

use rayon::prelude::*;

const PAR_ROWS: usize = 32;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn linear_row(x: &[f64], w: &[f64], bias: &[f64], out: &mut [f64]) {
    let n = bias.len();
    out.copy_from_slice(bias);
    for (k, &xk) in x.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        let wr = &w[k * n..(k + 1) * n];
        for (o, wv) in out.iter_mut().zip(wr) {
            *o += xk * wv;
        }
    }
}

/// `out[r] = bias + input[r] · w` for every row `r`.
pub fn linear(input: &[f64], in_dim: usize, w: &[f64], bias: &[f64], out: &mut [f64]) {
    let n = bias.len();
    debug_assert_eq!(w.len(), in_dim * n);
    debug_assert_eq!(input.len() / in_dim, out.len() / n);
    let rows = input.len() / in_dim;
    if rows >= PAR_ROWS {
        out.par_chunks_mut(n)
            .zip(input.par_chunks(in_dim))
            .for_each(|(o, x)| linear_row(x, w, bias, o));
    } else {
        for (o, x) in out.chunks_mut(n).zip(input.chunks(in_dim)) {
            linear_row(x, w, bias, o);
        }
    }
}

pub fn linear_new(input: &[f64], in_dim: usize, w: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; input.len() / in_dim * bias.len()];
    linear(input, in_dim, w, bias, &mut out);
    out
}

/// Accumulates `dw += inputᵀ · dout` and `db += Σ_r dout[r]`, and when
/// requested overwrites `din = dout · wᵀ`.
pub fn linear_backward(
    input: &[f64],
    in_dim: usize,
    w: &[f64],
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    din: Option<&mut [f64]>,
) {
    let n = db.len();
    let rows = dout.len() / n;
    debug_assert_eq!(input.len(), rows * in_dim);
    dw.par_chunks_mut(n).enumerate().for_each(|(k, dwk)| {
        for r in 0..rows {
            let x = input[r * in_dim + k];
            if x == 0.0 {
                continue;
            }
            for (g, d) in dwk.iter_mut().zip(&dout[r * n..(r + 1) * n]) {
                *g += x * d;
            }
        }
    });
    for r in 0..rows {
        for (g, d) in db.iter_mut().zip(&dout[r * n..(r + 1) * n]) {
            *g += d;
        }
    }
    if let Some(din) = din {
        din.par_chunks_mut(in_dim).enumerate().for_each(|(r, dx)| {
            let d = &dout[r * n..(r + 1) * n];
            for (k, v) in dx.iter_mut().enumerate() {
                *v = w[k * n..(k + 1) * n].iter().zip(d).map(|(a, b)| a * b).sum();
            }
        });
    }
}

/// Borrowed weights of one GRU layer with gate order [reset, update, new].
#[derive(Clone, Copy)]
pub struct GruWeights<'a> {
    pub w_ih: &'a [f64],
    pub w_hh: &'a [f64],
    pub b_ih: &'a [f64],
    pub b_hh: &'a [f64],
    pub in_dim: usize,
    pub hidden: usize,
}

/// Activations of one GRU step over a batch of rows.
#[derive(Debug, Clone, Default)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    pub ghn: Vec<f64>,
}

/// One GRU step: returns the new hidden rows and, if `keep`, the cache.
pub fn gru_step(g: GruWeights<'_>, x: Vec<f64>, h: &[f64], keep: bool) -> (Vec<f64>, Option<GruCache>) {
    let hd = g.hidden;
    let rows = h.len() / hd;
    let gi = linear_new(&x, g.in_dim, g.w_ih, g.b_ih);
    let gh = linear_new(h, hd, g.w_hh, g.b_hh);
    let mut out = vec![0.0; rows * hd];
    let mut r = vec![0.0; rows * hd];
    let mut z = vec![0.0; rows * hd];
    let mut nn = vec![0.0; rows * hd];
    let mut ghn = vec![0.0; rows * hd];
    for row in 0..rows {
        let gi = &gi[row * 3 * hd..(row + 1) * 3 * hd];
        let gh = &gh[row * 3 * hd..(row + 1) * 3 * hd];
        for j in 0..hd {
            let i = row * hd + j;
            let rj = sigmoid(gi[j] + gh[j]);
            let zj = sigmoid(gi[hd + j] + gh[hd + j]);
            let nj = (gi[2 * hd + j] + rj * gh[2 * hd + j]).tanh();
            out[i] = (1.0 - zj) * nj + zj * h[i];
            r[i] = rj;
            z[i] = zj;
            nn[i] = nj;
            ghn[i] = gh[2 * hd + j];
        }
    }
    let cache = keep.then(|| GruCache {
        x,
        h: h.to_vec(),
        r,
        z,
        n: nn,
        ghn,
    });
    (out, cache)
}

/// Mutable gradient buffers of one GRU layer.
pub struct GruGrads<'a> {
    pub w_ih: &'a mut [f64],
    pub w_hh: &'a mut [f64],
    pub b_ih: &'a mut [f64],
    pub b_hh: &'a mut [f64],
}

/// Backpropagates `dh_new` through one step. Returns (dx, dh_prev).
pub fn gru_step_backward(g: GruWeights<'_>, c: &GruCache, dh_new: &[f64], grads: GruGrads<'_>) -> (Vec<f64>, Vec<f64>) {
    let hd = g.hidden;
    let rows = dh_new.len() / hd;
    let mut dgi = vec![0.0; rows * 3 * hd];
    let mut dgh = vec![0.0; rows * 3 * hd];
    let mut dh_prev = vec![0.0; rows * hd];
    for row in 0..rows {
        for j in 0..hd {
            let i = row * hd + j;
            let (r, z, n) = (c.r[i], c.z[i], c.n[i]);
            let d = dh_new[i];
            let dn = d * (1.0 - z);
            let dz = d * (c.h[i] - n);
            dh_prev[i] = d * z;
            let dn_pre = dn * (1.0 - n * n);
            let dr = dn_pre * c.ghn[i];
            let dr_pre = dr * r * (1.0 - r);
            let dz_pre = dz * z * (1.0 - z);
            let o = row * 3 * hd;
            dgi[o + j] = dr_pre;
            dgi[o + hd + j] = dz_pre;
            dgi[o + 2 * hd + j] = dn_pre;
            dgh[o + j] = dr_pre;
            dgh[o + hd + j] = dz_pre;
            dgh[o + 2 * hd + j] = dn_pre * r;
        }
    }
    let mut dx = vec![0.0; rows * g.in_dim];
    linear_backward(&c.x, g.in_dim, g.w_ih, &dgi, grads.w_ih, grads.b_ih, Some(&mut dx));
    let mut dh_rec = vec![0.0; rows * hd];
    linear_backward(&c.h, hd, g.w_hh, &dgh, grads.w_hh, grads.b_hh, Some(&mut dh_rec));
    for (a, b) in dh_prev.iter_mut().zip(&dh_rec) {
        *a += b;
    }
    (dx, dh_prev)
}
