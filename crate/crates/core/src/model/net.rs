use super::ops::{
    attention, attention_backward, gelu, gelu_grad, linear, linear_backward, norm, norm_backward,
    rope, silu, silu_grad, Mat, NormCache,
};
use super::{AttentionTensor, Flavor, LayerParams, RegressorModel};
use crate::error::Result;
use crate::tokenizer::TokenSeq;

/// Activations of one block kept for the backward pass.
pub(crate) struct LayerTrace {
    pub x_in: Mat,
    n1: NormCache,
    h1: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    probs: Vec<Mat>,
    ctx: Mat,
    n2: NormCache,
    h2: Mat,
    u: Mat,
    up: Option<Mat>,
    act: Mat,
}

/// Forward activations of one sequence from block `start + 1` onwards.
pub(crate) struct Trace {
    pub start: usize,
    pub ids: Vec<u32>,
    pub layers: Vec<LayerTrace>,
    nf: NormCache,
    pub hf: Mat,
    pub pos: usize,
    z: Vec<f64>,
    /// Raw head output before target scaling.
    pub out: f64,
}

impl Trace {
    pub fn attention_tensor(&self, n_heads: usize) -> AttentionTensor {
        let len = self.ids.len();
        let mut weights = Vec::with_capacity(self.layers.len() * n_heads * len * len);
        for l in &self.layers {
            for p in &l.probs {
                weights.extend_from_slice(&p.data);
            }
        }
        AttentionTensor {
            n_layers: self.layers.len(),
            n_heads,
            len,
            weights,
        }
    }
}

fn opt_slice(p: &[f64], off: Option<usize>, len: usize) -> Option<&[f64]> {
    off.map(|o| &p[o..o + len])
}

/// Disjoint mutable views of a weight gradient and its (later) bias gradient.
fn pair(g: &mut [f64], w: usize, wlen: usize, b: Option<usize>, blen: usize) -> (&mut [f64], Option<&mut [f64]>) {
    match b {
        Some(b) => {
            assert!(b >= w + wlen);
            let (lo, hi) = g.split_at_mut(b);
            (&mut lo[w..w + wlen], Some(&mut hi[..blen]))
        }
        None => (&mut g[w..w + wlen], None),
    }
}

impl RegressorModel {
    fn enc(&self) -> bool {
        self.config.flavor == Flavor::Encoder
    }

    /// Token (plus learned position) embeddings.
    pub(crate) fn embed(&self, ids: &[u32]) -> Mat {
        let d = self.config.d_model;
        let o = &self.offsets;
        let mut x = Mat::zeros(ids.len(), d);
        for (t, &id) in ids.iter().enumerate() {
            let row = x.row_mut(t);
            let e = o.tok + id as usize * d;
            row.copy_from_slice(&self.params[e..e + d]);
            if let Some(p) = o.pos {
                let pe = p + t * d;
                for (r, v) in row.iter_mut().zip(&self.params[pe..pe + d]) {
                    *r += v;
                }
            }
        }
        x
    }

    pub(crate) fn final_norm(&self, x: &Mat) -> (Mat, NormCache) {
        let d = self.config.d_model;
        let o = &self.offsets;
        norm(
            x,
            &self.params[o.final_g..o.final_g + d],
            opt_slice(&self.params, o.final_b, d),
            self.enc(),
        )
    }

    fn heads_apply(&self, m: &mut Mat, inverse: bool) {
        let dh = self.config.d_head();
        for h in 0..self.config.n_heads {
            let mut s = m.cols_slice(h * dh, dh);
            rope(&mut s, inverse);
            m.set_cols(h * dh, &s);
        }
    }

    pub(crate) fn layer_forward(&self, l: &LayerParams, x: Mat, mask: &[u8]) -> Result<(Mat, LayerTrace)> {
        let p = &self.params;
        let (d, f, dh) = (self.config.d_model, self.config.d_ff, self.config.d_head());
        let enc = self.enc();
        let (h1, n1) = norm(&x, &p[l.norm1_g..l.norm1_g + d], opt_slice(p, l.norm1_b, d), enc);
        let mut q = linear(&h1, &p[l.wq..l.wq + d * d], opt_slice(p, l.bq, d), d);
        let mut k = linear(&h1, &p[l.wk..l.wk + d * d], opt_slice(p, l.bk, d), d);
        let v = linear(&h1, &p[l.wv..l.wv + d * d], opt_slice(p, l.bv, d), d);
        if !enc {
            self.heads_apply(&mut q, false);
            self.heads_apply(&mut k, false);
        }
        let mut ctx = Mat::zeros(x.rows, d);
        let mut probs = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let c = h * dh;
            let (o, pm) = attention(&q.cols_slice(c, dh), &k.cols_slice(c, dh), &v.cols_slice(c, dh), mask, !enc)?;
            ctx.set_cols(c, &o);
            probs.push(pm);
        }
        let mut x2 = linear(&ctx, &p[l.wo..l.wo + d * d], opt_slice(p, l.bo, d), d);
        x2.add_assign(&x);
        let (h2, n2) = norm(&x2, &p[l.norm2_g..l.norm2_g + d], opt_slice(p, l.norm2_b, d), enc);
        let u = linear(&h2, &p[l.w1..l.w1 + d * f], opt_slice(p, l.b1, f), f);
        let (up, act) = match l.w3 {
            None => {
                let mut a = u.clone();
                a.data.iter_mut().for_each(|v| *v = gelu(*v));
                (None, a)
            }
            Some(w3) => {
                let up = linear(&h2, &p[w3..w3 + d * f], None, f);
                let mut a = u.clone();
                for (a, b) in a.data.iter_mut().zip(&up.data) {
                    *a = silu(*a) * b;
                }
                (Some(up), a)
            }
        };
        let mut x3 = linear(&act, &p[l.w2..l.w2 + f * d], opt_slice(p, l.b2, d), d);
        x3.add_assign(&x2);
        let tr = LayerTrace {
            x_in: x,
            n1,
            h1,
            q,
            k,
            v,
            probs,
            ctx,
            n2,
            h2,
            u,
            up,
            act,
        };
        Ok((x3, tr))
    }

    /// Runs the sequence through the whole network, starting from the
    /// embeddings when `start == 0`.
    pub(crate) fn trace(&self, ts: &TokenSeq, start: usize) -> Result<Trace> {
        let x = self.embed(&ts.ids);
        let x = if start == 0 { x } else { self.hidden_after(x, start, &ts.mask)? };
        self.trace_from(x, start, ts)
    }

    /// Hidden states after block `layer` given the embedding output.
    pub(crate) fn hidden_after(&self, mut x: Mat, layer: usize, mask: &[u8]) -> Result<Mat> {
        for lp in &self.offsets.layers[..layer] {
            x = self.layer_forward(lp, x, mask)?.0;
        }
        Ok(x)
    }

    /// Continues the forward pass from the hidden states after block `start`.
    pub(crate) fn trace_from(&self, mut x: Mat, start: usize, ts: &TokenSeq) -> Result<Trace> {
        let mut layers = Vec::with_capacity(self.config.n_layers - start);
        for lp in &self.offsets.layers[start..] {
            let (x3, lt) = self.layer_forward(lp, x, &ts.mask)?;
            layers.push(lt);
            x = x3;
        }
        let (hf, nf) = self.final_norm(&x);
        let pos = self.pooling_position(ts, self.config.pooling);
        let d = self.config.d_model;
        let o = &self.offsets;
        let pooled = hf.row(pos);
        let mut z = self.params[o.head_b1..o.head_b1 + d].to_vec();
        super::ops::gemm(1, d, d, 1.0, pooled, false, &self.params[o.head_w1..o.head_w1 + d * d], false, 1.0, &mut z);
        z.iter_mut().for_each(|v| *v = v.tanh());
        let w2 = &self.params[o.head_w2..o.head_w2 + d];
        let out = z.iter().zip(w2).map(|(a, b)| a * b).sum::<f64>() + self.params[o.head_b2];
        Ok(Trace {
            start,
            ids: ts.ids.clone(),
            layers,
            nf,
            hf,
            pos,
            z,
            out,
        })
    }

    /// Accumulates `dout * ∂out/∂θ` into `grad` for every parameter after the
    /// trace's starting block (and the embeddings when it starts at zero).
    pub(crate) fn backward(&self, tr: &Trace, dout: f64, grad: &mut [f64]) {
        let p = &self.params;
        let d = self.config.d_model;
        let o = &self.offsets;
        let enc = self.enc();
        let t_len = tr.ids.len();

        // head
        let pooled = tr.hf.row(tr.pos);
        let w2 = &p[o.head_w2..o.head_w2 + d];
        grad[o.head_b2] += dout;
        let mut du = vec![0.0; d];
        for j in 0..d {
            grad[o.head_w2 + j] += dout * tr.z[j];
            du[j] = dout * w2[j] * (1.0 - tr.z[j] * tr.z[j]);
            grad[o.head_b1 + j] += du[j];
        }
        for i in 0..d {
            let gi = o.head_w1 + i * d;
            for j in 0..d {
                grad[gi + j] += pooled[i] * du[j];
            }
        }
        let w1 = &p[o.head_w1..o.head_w1 + d * d];
        let mut dhf = Mat::zeros(t_len, d);
        {
            let row = dhf.row_mut(tr.pos);
            for i in 0..d {
                row[i] = (0..d).map(|j| w1[i * d + j] * du[j]).sum();
            }
        }

        // final norm, only the pooled row carries gradient
        let mut dx = Mat::zeros(t_len, d);
        let (gg, gb) = pair(grad, o.final_g, d, o.final_b, d);
        norm_backward(&tr.nf, &p[o.final_g..o.final_g + d], &dhf, &[tr.pos], enc, gg, gb, &mut dx);

        for (lp, lt) in o.layers[tr.start..].iter().zip(&tr.layers).rev() {
            dx = self.layer_backward(lp, lt, dx, grad);
        }

        if tr.start == 0 {
            for (t, &id) in tr.ids.iter().enumerate() {
                let row = dx.row(t);
                let e = o.tok + id as usize * d;
                for j in 0..d {
                    grad[e + j] += row[j];
                }
                if let Some(pp) = o.pos {
                    let pe = pp + t * d;
                    for j in 0..d {
                        grad[pe + j] += row[j];
                    }
                }
            }
        }
    }

    fn layer_backward(&self, l: &LayerParams, lt: &LayerTrace, dx3: Mat, grad: &mut [f64]) -> Mat {
        let p = &self.params;
        let (d, f, dh) = (self.config.d_model, self.config.d_ff, self.config.d_head());
        let enc = self.enc();
        let rows: Vec<usize> = (0..dx3.rows).collect();

        // feed-forward
        let mut dact = Mat::zeros(dx3.rows, f);
        let (gw, gb) = pair(grad, l.w2, f * d, l.b2, d);
        linear_backward(&lt.act, &p[l.w2..l.w2 + f * d], &dx3, gw, gb, Some(&mut dact));
        let mut du = dact.clone();
        let mut dh2 = Mat::zeros(dx3.rows, d);
        match (&lt.up, l.w3) {
            (Some(up), Some(w3)) => {
                let mut dup = dact.clone();
                for i in 0..du.data.len() {
                    let u = lt.u.data[i];
                    du.data[i] = dact.data[i] * up.data[i] * silu_grad(u);
                    dup.data[i] = dact.data[i] * silu(u);
                }
                linear_backward(&lt.h2, &p[w3..w3 + d * f], &dup, &mut grad[w3..w3 + d * f], None, Some(&mut dh2));
            }
            _ => {
                for (g, &u) in du.data.iter_mut().zip(&lt.u.data) {
                    *g *= gelu_grad(u);
                }
            }
        }
        let (gw, gb) = pair(grad, l.w1, d * f, l.b1, f);
        linear_backward(&lt.h2, &p[l.w1..l.w1 + d * f], &du, gw, gb, Some(&mut dh2));
        let mut dx2 = dx3;
        let (gg, gb) = pair(grad, l.norm2_g, d, l.norm2_b, d);
        norm_backward(&lt.n2, &p[l.norm2_g..l.norm2_g + d], &dh2, &rows, enc, gg, gb, &mut dx2);

        // attention
        let mut dctx = Mat::zeros(dx2.rows, d);
        let (gw, gb) = pair(grad, l.wo, d * d, l.bo, d);
        linear_backward(&lt.ctx, &p[l.wo..l.wo + d * d], &dx2, gw, gb, Some(&mut dctx));
        let mut dq = Mat::zeros(dx2.rows, d);
        let mut dk = Mat::zeros(dx2.rows, d);
        let mut dv = Mat::zeros(dx2.rows, d);
        for h in 0..self.config.n_heads {
            let c = h * dh;
            let (a, b, v) = attention_backward(
                &lt.q.cols_slice(c, dh),
                &lt.k.cols_slice(c, dh),
                &lt.v.cols_slice(c, dh),
                &lt.probs[h],
                &dctx.cols_slice(c, dh),
            );
            dq.set_cols(c, &a);
            dk.set_cols(c, &b);
            dv.set_cols(c, &v);
        }
        if !enc {
            self.heads_apply(&mut dq, true);
            self.heads_apply(&mut dk, true);
        }
        let mut dh1 = Mat::zeros(dx2.rows, d);
        for (w, b, dm) in [(l.wq, l.bq, &dq), (l.wk, l.bk, &dk), (l.wv, l.bv, &dv)] {
            let (gw, gb) = pair(grad, w, d * d, b, d);
            linear_backward(&lt.h1, &p[w..w + d * d], dm, gw, gb, Some(&mut dh1));
        }
        let mut dx = dx2;
        let (gg, gb) = pair(grad, l.norm1_g, d, l.norm1_b, d);
        norm_backward(&lt.n1, &p[l.norm1_g..l.norm1_g + d], &dh1, &rows, enc, gg, gb, &mut dx);
        dx
    }
}
