//! Dense kernels shared by the forward and backward passes.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Mat {
        assert_eq!(data.len(), rows * cols, "shape does not match data length");
        Mat { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Columns `[c0, c0 + w)` as a new matrix.
    pub fn cols_slice(&self, c0: usize, w: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, w);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[c0..c0 + w]);
        }
        out
    }

    /// Writes `src` into columns starting at `c0`.
    pub fn set_cols(&mut self, c0: usize, src: &Mat) {
        for r in 0..self.rows {
            let w = src.cols;
            self.row_mut(r)[c0..c0 + w].copy_from_slice(src.row(r));
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` with `op(a)` m×k and `op(b)` k×n.
/// `ta`/`tb` mean the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays within
    // the slices, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `x W + b` for `x` of shape T×in and `W` stored in×out.
pub(crate) fn linear(x: &Mat, w: &[f64], b: Option<&[f64]>, out: usize) -> Mat {
    let mut y = Mat::zeros(x.rows, out);
    if let Some(b) = b {
        for r in 0..x.rows {
            y.row_mut(r).copy_from_slice(b);
        }
    }
    let beta = if b.is_some() { 1.0 } else { 0.0 };
    gemm(x.rows, x.cols, out, 1.0, &x.data, false, w, false, beta, &mut y.data);
    y
}

/// Accumulates weight and bias gradients and adds `dy Wᵀ` into `dx`.
pub(crate) fn linear_backward(
    x: &Mat,
    w: &[f64],
    dy: &Mat,
    gw: &mut [f64],
    gb: Option<&mut [f64]>,
    dx: Option<&mut Mat>,
) {
    gemm(x.cols, x.rows, dy.cols, 1.0, &x.data, true, &dy.data, false, 1.0, gw);
    if let Some(gb) = gb {
        for r in 0..dy.rows {
            for (g, d) in gb.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
    }
    if let Some(dx) = dx {
        gemm(dy.rows, dy.cols, x.cols, 1.0, &dy.data, false, w, true, 1.0, &mut dx.data);
    }
}

pub const NORM_EPS: f64 = 1e-5;

/// Normalized activations (before gain and bias) and per-row reciprocal scale.
#[derive(Debug, Clone)]
pub(crate) struct NormCache {
    pub xhat: Mat,
    pub rstd: Vec<f64>,
}

/// LayerNorm when `center` is true, RMSNorm otherwise.
pub(crate) fn norm(x: &Mat, gain: &[f64], bias: Option<&[f64]>, center: bool) -> (Mat, NormCache) {
    let d = x.cols;
    let mut xhat = Mat::zeros(x.rows, d);
    let mut y = Mat::zeros(x.rows, d);
    let mut rstd = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mu = if center { row.iter().sum::<f64>() / d as f64 } else { 0.0 };
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + NORM_EPS).sqrt();
        rstd.push(s);
        let xr = xhat.row_mut(r);
        for j in 0..d {
            xr[j] = (row[j] - mu) * s;
        }
        let yr = y.row_mut(r);
        for j in 0..d {
            yr[j] = xr[j] * gain[j] + bias.map_or(0.0, |b| b[j]);
        }
    }
    (y, NormCache { xhat, rstd })
}

/// Backward through [`norm`] for the listed rows only (other rows of `dy`
/// are taken as zero). Adds into `dx`.
pub(crate) fn norm_backward(
    c: &NormCache,
    gain: &[f64],
    dy: &Mat,
    rows: &[usize],
    center: bool,
    gg: &mut [f64],
    gb: Option<&mut [f64]>,
    dx: &mut Mat,
) {
    let d = dy.cols;
    let mut gb = gb;
    let mut dxn = vec![0.0; d];
    for &r in rows {
        let dyr = dy.row(r);
        let xh = c.xhat.row(r);
        for j in 0..d {
            gg[j] += dyr[j] * xh[j];
            dxn[j] = dyr[j] * gain[j];
        }
        if let Some(gb) = gb.as_deref_mut() {
            for j in 0..d {
                gb[j] += dyr[j];
            }
        }
        let mean = if center { dxn.iter().sum::<f64>() / d as f64 } else { 0.0 };
        let proj = dxn.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let s = c.rstd[r];
        let dxr = dx.row_mut(r);
        for j in 0..d {
            dxr[j] += s * (dxn[j] - mean - xh[j] * proj);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

pub fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Rotates consecutive pairs `(2i, 2i+1)` of each row by `pos * θ_i` with
/// `θ_i = 10000^(-2i/d)`, `d = x.cols`. `inverse` applies the transpose.
pub fn rope(x: &mut Mat, inverse: bool) {
    let d = x.cols;
    assert!(d % 2 == 0, "rotary dimension must be even");
    let sign = if inverse { -1.0 } else { 1.0 };
    for p in 0..x.rows {
        let row = x.row_mut(p);
        for i in 0..d / 2 {
            let theta = 10000f64.powf(-2.0 * i as f64 / d as f64);
            let (sin, cos) = (p as f64 * theta).sin_cos();
            let sin = sign * sin;
            let (a, b) = (row[2 * i], row[2 * i + 1]);
            row[2 * i] = a * cos - b * sin;
            row[2 * i + 1] = a * sin + b * cos;
        }
    }
}

/// Scaled dot-product attention for one head.
///
/// Key `j` is visible to query `i` when `key_mask[j] != 0` and, if `causal`,
/// `j <= i`. Returns the output `P V` and the weight matrix `P`.
///
/// ```
/// use gaptext::model::{attention, Mat};
/// let q = Mat::from_vec(1, 2, vec![1.0, 0.0]);
/// let k = Mat::from_vec(2, 2, vec![0.5, 0.5, 0.5, 0.5]);
/// let v = Mat::from_vec(2, 1, vec![2.0, 4.0]);
/// let (out, w) = attention(&q, &k, &v, &[1, 1], false).unwrap();
/// assert_eq!(w.data, vec![0.5, 0.5]);
/// assert!((out.data[0] - 3.0).abs() < 1e-12);
/// ```
pub fn attention(q: &Mat, k: &Mat, v: &Mat, key_mask: &[u8], causal: bool) -> Result<(Mat, Mat)> {
    if q.cols != k.cols || k.rows != v.rows || key_mask.len() != k.rows {
        return Err(Error::input("attention operands have incompatible shapes"));
    }
    let (tq, tk) = (q.rows, k.rows);
    let mut p = Mat::zeros(tq, tk);
    gemm(tq, q.cols, tk, 1.0 / (q.cols as f64).sqrt(), &q.data, false, &k.data, true, 0.0, &mut p.data);
    let all_visible = key_mask.iter().all(|&m| m != 0);
    for i in 0..tq {
        let row = p.row_mut(i);
        let n_vis = if causal { (i + 1).min(tk) } else { tk };
        let (vis, hidden) = row.split_at_mut(n_vis);
        hidden.fill(0.0);
        let mut max = f64::NEG_INFINITY;
        if all_visible {
            for &s in vis.iter() {
                max = max.max(s);
            }
        } else {
            for (s, &m) in vis.iter_mut().zip(key_mask) {
                if m == 0 {
                    *s = f64::NEG_INFINITY;
                } else {
                    max = max.max(*s);
                }
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::input(format!("attention row {i} has no visible keys")));
        }
        let mut sum = 0.0;
        for s in vis.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        let inv = 1.0 / sum;
        for s in vis.iter_mut() {
            *s *= inv;
        }
    }
    let mut out = Mat::zeros(tq, v.cols);
    gemm(tq, tk, v.cols, 1.0, &p.data, false, &v.data, false, 0.0, &mut out.data);
    Ok((out, p))
}

/// Gradients of [`attention`] with respect to `q`, `k` and `v`.
pub(crate) fn attention_backward(q: &Mat, k: &Mat, v: &Mat, p: &Mat, dout: &Mat) -> (Mat, Mat, Mat) {
    let (tq, tk, dk) = (q.rows, k.rows, q.cols);
    let mut dp = Mat::zeros(tq, tk);
    gemm(tq, v.cols, tk, 1.0, &dout.data, false, &v.data, true, 0.0, &mut dp.data);
    let mut dv = Mat::zeros(tk, v.cols);
    gemm(tk, tq, v.cols, 1.0, &p.data, true, &dout.data, false, 0.0, &mut dv.data);
    // softmax backward, in place on dp
    for i in 0..tq {
        let pr = p.row(i);
        let dr = dp.row_mut(i);
        let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
        for j in 0..tk {
            dr[j] = pr[j] * (dr[j] - dot);
        }
    }
    let scale = 1.0 / (dk as f64).sqrt();
    let mut dq = Mat::zeros(tq, dk);
    gemm(tq, tk, dk, scale, &dp.data, false, &k.data, false, 0.0, &mut dq.data);
    let mut dkm = Mat::zeros(tk, dk);
    gemm(tk, tq, dk, scale, &dp.data, true, &q.data, false, 0.0, &mut dkm.data);
    (dq, dkm, dv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, 1.0, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, 1.0, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, 1.0, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &u in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((fd - gelu_grad(u)).abs() < 1e-8);
            let fd = (silu(u + h) - silu(u - h)) / (2.0 * h);
            assert!((fd - silu_grad(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn rope_inverse_round_trips() {
        let mut x = Mat::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.3 - 1.0).collect());
        let orig = x.clone();
        rope(&mut x, false);
        rope(&mut x, true);
        for (a, b) in x.data.iter().zip(&orig.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn all_masked_row_is_an_error() {
        let q = Mat::zeros(1, 2);
        assert!(attention(&q, &q, &q, &[0], false).is_err());
    }
}
