//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stpf_core::layers::{ConvLstmCell, StLstmCell};
use stpf_core::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Direct nested-loop "same" convolution, zero padded, any rank.
/// `x` is `[B, C, d...]`, `k` is `[O, C, k...]`.
pub fn conv_same_ref(x: &Tensor<f64>, k: &Tensor<f64>, bias: Option<&[f64]>) -> Tensor<f64> {
    let xs = x.shape();
    let ks = k.shape();
    let (b, c, o) = (xs[0], xs[1], ks[0]);
    let dims = &xs[2..];
    let kern = &ks[2..];
    let spatial: usize = dims.iter().product();
    let taps: usize = kern.iter().product();
    let unravel = |mut i: usize, ext: &[usize]| -> Vec<usize> {
        let mut idx = vec![0; ext.len()];
        for a in (0..ext.len()).rev() {
            idx[a] = i % ext[a];
            i /= ext[a];
        }
        idx
    };
    let mut out = vec![0.0; b * o * spatial];
    for bi in 0..b {
        for oi in 0..o {
            for p in 0..spatial {
                let pos = unravel(p, dims);
                let mut acc = bias.map_or(0.0, |bv| bv[oi]);
                for ci in 0..c {
                    for t in 0..taps {
                        let off = unravel(t, kern);
                        let mut src = 0usize;
                        let mut inside = true;
                        for a in 0..dims.len() {
                            let q = pos[a] as isize + off[a] as isize - (kern[a] / 2) as isize;
                            if q < 0 || q >= dims[a] as isize {
                                inside = false;
                                break;
                            }
                            src = src * dims[a] + q as usize;
                        }
                        if inside {
                            let xv = x.data()[(bi * c + ci) * spatial + src];
                            let kv = k.data()[(oi * c + ci) * taps + t];
                            acc += xv * kv;
                        }
                    }
                }
                out[(bi * o + oi) * spatial + p] = acc;
            }
        }
    }
    let mut shape = vec![b, o];
    shape.extend_from_slice(dims);
    Tensor::new(shape, out).unwrap()
}

/// Centre tap of a 2-D kernel, the only one that touches a 1x1 grid.
fn tap(w: &Tensor<f64>, o: usize, c: usize) -> f64 {
    let s = w.shape();
    w.data()[((o * s[1] + c) * s[2] + s[2] / 2) * s[3] + s[3] / 2]
}

/// `out[r] = sum_c W[row0 + r, c] * x[c]` for `rows` rows.
fn mv(w: &Tensor<f64>, row0: usize, rows: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| x.iter().enumerate().map(|(c, &v)| tap(w, row0 + r, c) * v).sum())
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Scalar convLSTM step on a 1x1 grid, gates stored (i, f, g, o).
pub fn convlstm_ref(cell: &ConvLstmCell<f64>, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let f = cell.filters;
    let b = cell.bias.data();
    let gate = |k: usize| -> Vec<f64> {
        let z = add(&mv(&cell.w_x, k * f, f, x), &mv(&cell.w_h, k * f, f, h));
        z.iter().enumerate().map(|(j, v)| v + b[k * f + j]).collect()
    };
    let (zi, zf, zg, zo) = (gate(0), gate(1), gate(2), gate(3));
    let mut c2 = vec![0.0; f];
    let mut h2 = vec![0.0; f];
    for j in 0..f {
        c2[j] = sigmoid(zf[j]) * c[j] + sigmoid(zi[j]) * zg[j].tanh();
        h2[j] = sigmoid(zo[j]) * c2[j].tanh();
    }
    (h2, c2)
}

/// Scalar ST-LSTM step on a 1x1 grid, written out gate by gate.
/// Returns `(H, C, M)`.
pub fn stlstm_ref(
    cell: &StLstmCell<f64>,
    x: &[f64],
    h: &[f64],
    c: &[f64],
    m_in: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let f = cell.filters;
    let m_below: Vec<f64> = match &cell.w_mproj {
        Some(p) => mv(p, 0, f, m_in),
        None => m_in.to_vec(),
    };
    let bt = cell.b_t.data();
    let bs = cell.b_s.data();
    let bo = cell.b_o.data();
    let pre_t = |k: usize, j: usize| {
        mv(&cell.w_xt, k * f, f, x)[j] + mv(&cell.w_ht, k * f, f, h)[j] + bt[k * f + j]
    };
    let pre_s = |k: usize, j: usize| {
        mv(&cell.w_xs, k * f, f, x)[j] + mv(&cell.w_ms, k * f, f, &m_below)[j] + bs[k * f + j]
    };
    let mut c_new = vec![0.0; f];
    let mut m_new = vec![0.0; f];
    for j in 0..f {
        let g = pre_t(2, j).tanh();
        let i = sigmoid(pre_t(0, j));
        let fg = sigmoid(pre_t(1, j));
        c_new[j] = fg * c[j] + i * g;
        let g2 = pre_s(2, j).tanh();
        let i2 = sigmoid(pre_s(0, j));
        let f2 = sigmoid(pre_s(1, j));
        m_new[j] = f2 * m_below[j] + i2 * g2;
    }
    let zo = add(
        &add(&mv(&cell.w_xo, 0, f, x), &mv(&cell.w_ho, 0, f, h)),
        &add(&mv(&cell.w_co, 0, f, &c_new), &mv(&cell.w_mo, 0, f, &m_new)),
    );
    let mut cm = c_new.clone();
    cm.extend_from_slice(&m_new);
    let fused = mv(&cell.w_fuse, 0, f, &cm);
    let h_new = (0..f)
        .map(|j| sigmoid(zo[j] + bo[j]) * fused[j].tanh())
        .collect();
    (h_new, c_new, m_new)
}

/// Fills every parameter tensor with uniform values in `[-1, 1)`.
pub fn randomize(params: Vec<&mut Tensor<f64>>, rng: &mut ChaCha8Rng) {
    for p in params {
        for v in p.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
}

/// SSIM straight from the textbook formulas, with explicit standard
/// deviations.
pub fn ssim_ref(x: &[f32], y: &[f32], mask: &[bool], c1: f64, c2: f64) -> f64 {
    let xs: Vec<f64> = x.iter().zip(mask).filter(|p| *p.1).map(|p| *p.0 as f64).collect();
    let ys: Vec<f64> = y.iter().zip(mask).filter(|p| *p.1).map(|p| *p.0 as f64).collect();
    let n = xs.len() as f64;
    let mu_x = xs.iter().sum::<f64>() / n;
    let mu_y = ys.iter().sum::<f64>() / n;
    let sigma_x = (xs.iter().map(|v| (v - mu_x).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sigma_y = (ys.iter().map(|v| (v - mu_y).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sigma_xy = xs
        .iter()
        .zip(&ys)
        .map(|(a, b)| (a - mu_x) * (b - mu_y))
        .sum::<f64>()
        / (n - 1.0);
    ((2.0 * mu_x * mu_y + c1) * (2.0 * sigma_xy + c2))
        / ((mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x * sigma_x + sigma_y * sigma_y + c2))
}

/// Scalar Nadam; returns theta after every step.
pub fn nadam_ref(theta0: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    let mut out = Vec::with_capacity(grads.len());
    for (k, &g) in grads.iter().enumerate() {
        let t = (k + 1) as f64;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powf(t + 1.0));
        let v_hat = v / (1.0 - b2.powf(t));
        let g_hat = g / (1.0 - b1.powf(t));
        theta -= lr * (b1 * m_hat + (1.0 - b1) * g_hat) / (v_hat.sqrt() + eps);
        out.push(theta);
    }
    out
}

/// Counts input/output window pairs by trying every start position.
pub fn count_windows(frames: usize, window: usize, nonoverlapping: bool) -> usize {
    let shift = if nonoverlapping { window } else { 1 };
    (0..frames)
        .filter(|&s| s + shift + window <= frames && s + window <= frames)
        .count()
}
