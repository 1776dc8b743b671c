//! Post-norm transformer layer over the `K+1` domain tokens.
//!
//! Per layer: multi-head self-attention → dropout → residual → layer norm,
//! then a GELU feed-forward block with the same dropout/residual/norm pattern.
//! No positional information enters anywhere, so the stack is equivariant
//! to permutations of the token rows.

use rand::Rng;

use crate::numerics::linalg::{gemm_nt, gemm_tn, Matrix};
use crate::numerics::ops::{
    dropout_mask, gelu, gelu_grad, layer_norm_backward, layer_norm_cached, softmax_in_place,
    LayerNormCache,
};
use crate::numerics::{Grads, ParamId, Values};

#[derive(Debug, Clone)]
pub struct LayerIds {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub output: ParamId,
    pub attn_gamma: ParamId,
    pub attn_beta: ParamId,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    pub ffn_gamma: ParamId,
    pub ffn_beta: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerShape {
    pub width: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
}

impl LayerShape {
    fn head_dim(&self) -> usize {
        self.width / self.heads
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Row-stochastic attention matrices, `heads × T × T`.
    pub attention: Vec<Matrix>,
    concat: Matrix,
    attn_drop: Option<Vec<f64>>,
    attn_norm: Vec<LayerNormCache>,
    mid: Matrix,
    pre_act: Matrix,
    act: Matrix,
    ffn_drop: Option<Vec<f64>>,
    ffn_norm: Vec<LayerNormCache>,
}

fn rows_layer_norm(x: &Matrix, gamma: &[f64], beta: &[f64]) -> (Matrix, Vec<LayerNormCache>) {
    let mut out = Matrix::zeros(x.rows, x.cols);
    let mut caches = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let (y, c) = layer_norm_cached(x.row(r), gamma, beta);
        out.row_mut(r).copy_from_slice(&y);
        caches.push(c);
    }
    (out, caches)
}

fn rows_layer_norm_backward(
    dy: &Matrix,
    gamma: &[f64],
    caches: &[LayerNormCache],
    dgamma_beta: (&mut [f64], &mut [f64]),
) -> Matrix {
    let (dgamma, dbeta) = dgamma_beta;
    let mut dx = Matrix::zeros(dy.rows, dy.cols);
    for r in 0..dy.rows {
        let d = layer_norm_backward(dy.row(r), gamma, &caches[r], dgamma, dbeta);
        dx.row_mut(r).copy_from_slice(&d);
    }
    dx
}

fn apply_mask(x: &mut Matrix, mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (a, b) in x.data.iter_mut().zip(m) {
            *a *= b;
        }
    }
}

/// One layer forward. `rng` enables dropout.
pub fn layer_forward<R: Rng + ?Sized>(
    vals: Values<'_>,
    ids: &LayerIds,
    shape: LayerShape,
    x: &Matrix,
    rng: Option<&mut R>,
) -> (Matrix, LayerCache) {
    let t = x.rows;
    let m = shape.width;
    let dh = shape.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let q = x.matmul(vals.get(ids.query), m);
    let k = x.matmul(vals.get(ids.key), m);
    let v = x.matmul(vals.get(ids.value), m);

    let mut concat = Matrix::zeros(t, m);
    let mut attention = Vec::with_capacity(shape.heads);
    for h in 0..shape.heads {
        let off = h * dh;
        let mut a = Matrix::zeros(t, t);
        for i in 0..t {
            let qi = &q.row(i)[off..off + dh];
            let row = a.row_mut(i);
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &k.row(j)[off..off + dh];
                *s = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
            }
            softmax_in_place(row);
        }
        for i in 0..t {
            for j in 0..t {
                let w = a.get(i, j);
                let vj = &v.row(j)[off..off + dh];
                let oi = &mut concat.row_mut(i)[off..off + dh];
                for (o, vv) in oi.iter_mut().zip(vj) {
                    *o += w * vv;
                }
            }
        }
        attention.push(a);
    }

    let mut attn_out = concat.matmul(vals.get(ids.output), m);
    let mut rng = rng;
    let attn_drop = match rng.as_deref_mut() {
        Some(r) if shape.dropout > 0.0 => Some(dropout_mask(t * m, shape.dropout, r)),
        _ => None,
    };
    apply_mask(&mut attn_out, &attn_drop);
    attn_out.add_assign(x);
    let (mid, attn_norm) =
        rows_layer_norm(&attn_out, vals.get(ids.attn_gamma), vals.get(ids.attn_beta));

    let mut pre_act = mid.matmul(vals.get(ids.ffn_w1), shape.ffn_dim);
    pre_act.add_row_vector(vals.get(ids.ffn_b1));
    let act = Matrix::from_vec(t, shape.ffn_dim, pre_act.data.iter().map(|&p| gelu(p)).collect());
    let mut ffn_out = act.matmul(vals.get(ids.ffn_w2), m);
    ffn_out.add_row_vector(vals.get(ids.ffn_b2));
    let ffn_drop = match rng.as_deref_mut() {
        Some(r) if shape.dropout > 0.0 => Some(dropout_mask(t * m, shape.dropout, r)),
        _ => None,
    };
    apply_mask(&mut ffn_out, &ffn_drop);
    ffn_out.add_assign(&mid);
    let (out, ffn_norm) =
        rows_layer_norm(&ffn_out, vals.get(ids.ffn_gamma), vals.get(ids.ffn_beta));

    let cache = LayerCache {
        input: x.clone(),
        q,
        k,
        v,
        attention,
        concat,
        attn_drop,
        attn_norm,
        mid,
        pre_act,
        act,
        ffn_drop,
        ffn_norm,
    };
    (out, cache)
}

/// Backward of [`layer_forward`]: accumulates parameter gradients, returns `dL/dx`.
pub fn layer_backward(
    vals: Values<'_>,
    grads: &mut Grads<'_>,
    ids: &LayerIds,
    shape: LayerShape,
    cache: &LayerCache,
    dy: &Matrix,
) -> Matrix {
    let t = dy.rows;
    let m = shape.width;
    let f = shape.ffn_dim;
    let dh = shape.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    // feed-forward block
    let d_res2 = rows_layer_norm_backward(
        dy,
        vals.get(ids.ffn_gamma),
        &cache.ffn_norm,
        grads.pair_mut(ids.ffn_gamma, ids.ffn_beta),
    );
    let mut d_ffn = d_res2.clone();
    apply_mask(&mut d_ffn, &cache.ffn_drop);
    gemm_tn(&cache.act.data, &d_ffn.data, t, f, m, grads.get_mut(ids.ffn_w2));
    col_sum_into(&d_ffn, grads.get_mut(ids.ffn_b2));
    let mut d_pre = Matrix::zeros(t, f);
    gemm_nt(&d_ffn.data, vals.get(ids.ffn_w2), t, m, f, &mut d_pre.data);
    for (d, &p) in d_pre.data.iter_mut().zip(&cache.pre_act.data) {
        *d *= gelu_grad(p);
    }
    gemm_tn(&cache.mid.data, &d_pre.data, t, m, f, grads.get_mut(ids.ffn_w1));
    col_sum_into(&d_pre, grads.get_mut(ids.ffn_b1));
    let mut d_mid = d_res2;
    gemm_nt(&d_pre.data, vals.get(ids.ffn_w1), t, f, m, &mut d_mid.data);

    // attention block
    let d_res1 = rows_layer_norm_backward(
        &d_mid,
        vals.get(ids.attn_gamma),
        &cache.attn_norm,
        grads.pair_mut(ids.attn_gamma, ids.attn_beta),
    );
    let mut d_attn = d_res1.clone();
    apply_mask(&mut d_attn, &cache.attn_drop);
    gemm_tn(&cache.concat.data, &d_attn.data, t, m, m, grads.get_mut(ids.output));
    let mut d_concat = Matrix::zeros(t, m);
    gemm_nt(&d_attn.data, vals.get(ids.output), t, m, m, &mut d_concat.data);

    let mut dq = Matrix::zeros(t, m);
    let mut dk = Matrix::zeros(t, m);
    let mut dv = Matrix::zeros(t, m);
    for (h, a) in cache.attention.iter().enumerate() {
        let off = h * dh;
        // dA[i][j] = <dO_i, v_j>
        let mut ds = Matrix::zeros(t, t);
        for i in 0..t {
            let doi = &d_concat.row(i)[off..off + dh];
            for j in 0..t {
                let vj = &cache.v.row(j)[off..off + dh];
                ds.row_mut(i)[j] = doi.iter().zip(vj).map(|(x, y)| x * y).sum();
            }
            let ai = a.row(i);
            let inner: f64 = ds.row(i).iter().zip(ai).map(|(x, y)| x * y).sum();
            for (d, &p) in ds.row_mut(i).iter_mut().zip(ai) {
                *d = p * (*d - inner);
            }
        }
        for i in 0..t {
            for j in 0..t {
                let w = a.get(i, j);
                let s = ds.get(i, j) * scale;
                for c in off..off + dh {
                    dv.data[j * m + c] += w * d_concat.data[i * m + c];
                    dq.data[i * m + c] += s * cache.k.data[j * m + c];
                    dk.data[j * m + c] += s * cache.q.data[i * m + c];
                }
            }
        }
    }
    let x = &cache.input;
    gemm_tn(&x.data, &dq.data, t, m, m, grads.get_mut(ids.query));
    gemm_tn(&x.data, &dk.data, t, m, m, grads.get_mut(ids.key));
    gemm_tn(&x.data, &dv.data, t, m, m, grads.get_mut(ids.value));
    let mut dx = d_res1;
    gemm_nt(&dq.data, vals.get(ids.query), t, m, m, &mut dx.data);
    gemm_nt(&dk.data, vals.get(ids.key), t, m, m, &mut dx.data);
    gemm_nt(&dv.data, vals.get(ids.value), t, m, m, &mut dx.data);
    dx
}

fn col_sum_into(x: &Matrix, out: &mut [f64]) {
    for r in 0..x.rows {
        for (o, v) in out.iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
}
