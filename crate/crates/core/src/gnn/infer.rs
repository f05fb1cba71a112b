//! Inference-only forward pass on flat buffers.
//!
//! Computes the same function as [`forward`](super::net::forward) in eval mode,
//! with batch norm folded into a per-channel affine map and no activation
//! caching.

use ndarray::Array2;

use super::net::{check_shapes, sigmoid, GraphIndex, BN_EPS, DENOM_FLOOR};
use super::params::{BatchNorm, Linear, ModelParams};
use super::GnnError;

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

/// `(scale, shift)` with `bn(z) = z * scale + shift` under running statistics.
fn fold(bn: &BatchNorm) -> (Vec<f64>, Vec<f64>) {
    let scale: Vec<f64> = bn
        .gamma
        .iter()
        .zip(bn.running_var.iter())
        .map(|(g, v)| g / (v + BN_EPS).sqrt())
        .collect();
    let shift = bn
        .beta
        .iter()
        .zip(bn.running_mean.iter())
        .zip(&scale)
        .map(|((b, m), s)| b - m * s)
        .collect();
    (scale, shift)
}

/// `out[r] = bias + in[r] * w` for every row `r` of a row-major `rows x d` input.
fn matmul(input: &[f64], d: usize, w: &[f64], bias: Option<&[f64]>, h: usize) -> Vec<f64> {
    let rows = input.len().checked_div(d).unwrap_or(0);
    let mut out = vec![0.0; rows * h];
    for (x, o) in input.chunks_exact(d.max(1)).zip(out.chunks_exact_mut(h.max(1))) {
        if let Some(b) = bias {
            o.copy_from_slice(b);
        }
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                let wk = &w[k * h..(k + 1) * h];
                for (oj, &wj) in o.iter_mut().zip(wk) {
                    *oj += xk * wj;
                }
            }
        }
    }
    out
}

fn linear(input: &[f64], d: usize, lin: &Linear) -> Vec<f64> {
    let h = lin.w.ncols();
    matmul(input, d, &flat(&lin.w), Some(&flat(&lin.b)), h)
}

fn affine(z: &mut [f64], scale: &[f64], shift: &[f64]) {
    for row in z.chunks_exact_mut(scale.len().max(1)) {
        for ((v, s), t) in row.iter_mut().zip(scale).zip(shift) {
            *v = *v * s + t;
        }
    }
}

/// Logit per scored edge, in `index.scored` order.
pub fn infer_logits(
    params: &ModelParams,
    x_in: &Array2<f64>,
    e_in: &Array2<f64>,
    index: &GraphIndex,
) -> Result<Vec<f64>, GnnError> {
    check_shapes(params, x_in, e_in, index)?;
    let hy = params.hyper;
    let h = hy.h_conv;
    let n = index.num_nodes;
    let m = index.num_edges();

    let mut x = linear(&flat(x_in), hy.node_dim, &params.node_in);
    let (s, t) = fold(&params.bn_node_in);
    affine(&mut x, &s, &t);
    let mut e = linear(&flat(e_in), hy.edge_dim, &params.edge_in);
    let (s, t) = fold(&params.bn_edge_in);
    affine(&mut e, &s, &t);

    let mut pooled: Vec<f64> = index.scored.iter().flat_map(|&k| e[k * h..(k + 1) * h].to_vec()).collect();
    let mut num = vec![0.0; n * h];
    let mut den = vec![0.0; n * h];
    let mut gate = vec![0.0; h];
    for layer in &params.layers {
        let xa = matmul(&x, h, &flat(&layer.a), None, h);
        let xb = matmul(&x, h, &flat(&layer.b), None, h);
        let xu = matmul(&x, h, &flat(&layer.u), None, h);
        let xv = matmul(&x, h, &flat(&layer.v), None, h);
        let mut ehat = matmul(&e, h, &flat(&layer.c), None, h);
        num.fill(0.0);
        den.fill(0.0);
        for k in 0..m {
            let (ta, hd) = (index.tail[k], index.head[k]);
            let row = &mut ehat[k * h..(k + 1) * h];
            for j in 0..h {
                row[j] += xa[ta * h + j] + xb[hd * h + j];
                gate[j] = sigmoid(row[j]);
            }
            for (node, other) in [(ta, hd), (hd, ta)] {
                for j in 0..h {
                    num[node * h + j] += gate[j] * xv[other * h + j];
                    den[node * h + j] += gate[j];
                }
            }
        }
        let mut xhat = xu;
        for ((o, nm), dn) in xhat.iter_mut().zip(&num).zip(&den) {
            *o += nm / dn.max(DENOM_FLOOR);
        }
        let (s, t) = fold(&layer.bn_edge);
        affine(&mut ehat, &s, &t);
        let (s, t) = fold(&layer.bn_node);
        affine(&mut xhat, &s, &t);
        for (v, z) in e.iter_mut().zip(&ehat) {
            *v += z.max(0.0);
        }
        for (v, z) in x.iter_mut().zip(&xhat) {
            *v += z.max(0.0);
        }
        for (p, &k) in pooled.chunks_exact_mut(h.max(1)).zip(&index.scored) {
            for (pj, &c) in p.iter_mut().zip(&e[k * h..(k + 1) * h]) {
                if c > *pj {
                    *pj = c;
                }
            }
        }
    }

    let mut hidden = pooled;
    let mut width = h;
    for (t, lin) in params.mlp.iter().enumerate() {
        let mut z = linear(&hidden, width, lin);
        width = lin.w.ncols();
        if t + 1 < params.mlp.len() {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        hidden = z;
    }
    if hidden.iter().any(|v| !v.is_finite()) {
        return Err(GnnError::NonFiniteActivation);
    }
    Ok(hidden)
}
