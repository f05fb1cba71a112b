//! Forward and backward passes of the gated graph convolution edge classifier.
//!
//! Every layer computes edge pre-activations from the tail node (`A`), head
//! node (`B`) and edge (`C`) embeddings, gates them with a sigmoid and
//! normalizes the gates over all edges incident to a node (both directions)
//! to aggregate neighbour messages `V x_j`. Node and edge embeddings are then
//! updated residually through batch norm and ReLU. The edge embeddings of all
//! layers are max-pooled per coordinate and the pooled embeddings of the
//! scored edges go through an MLP with a sigmoid output.

use ndarray::{Array2, Axis, Zip};

use super::params::{BatchNorm, ModelParams};
use super::GnnError;
use crate::graph::{EdgeKind, TimeSpaceGraph};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
/// Floor on the gate normalizer of a node.
pub const DENOM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; caches activations for backward.
    Train,
    /// Running statistics in batch norm.
    Eval,
}

/// Edge endpoints and the subset of edges that are scored.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphIndex {
    pub num_nodes: usize,
    pub tail: Vec<usize>,
    pub head: Vec<usize>,
    pub scored: Vec<usize>,
}

impl GraphIndex {
    /// Scores the Connection edges of `g`.
    pub fn from_graph(g: &TimeSpaceGraph) -> Self {
        GraphIndex {
            num_nodes: g.nodes().len(),
            tail: g.edges().iter().map(|e| e.tail).collect(),
            head: g.edges().iter().map(|e| e.head).collect(),
            scored: g
                .edges()
                .iter()
                .filter(|e| e.kind == EdgeKind::Connection)
                .map(|e| e.id)
                .collect(),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.tail.len()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array2<f64>,
    mean: Array2<f64>,
    var: Array2<f64>,
    rows: usize,
}

fn bn_forward(bn: &BatchNorm, z: &Array2<f64>, mode: Mode) -> (Array2<f64>, Option<BnCache>) {
    let rows = z.nrows();
    let (mean, var) = match mode {
        Mode::Train if rows > 0 => {
            let mean = z.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
            let centered = z - &mean;
            let var = (&centered * &centered).mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
            (mean, var)
        }
        Mode::Train => (Array2::zeros(bn.gamma.raw_dim()), Array2::zeros(bn.gamma.raw_dim())),
        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let xhat = (z - &mean) * &inv_std;
    let y = &xhat * &bn.gamma + &bn.beta;
    let cache = (mode == Mode::Train).then_some(BnCache {
        xhat,
        inv_std,
        mean,
        var,
        rows,
    });
    (y, cache)
}

/// Returns `(dz, dgamma, dbeta)`.
fn bn_backward(bn: &BatchNorm, c: &BnCache, dy: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let dgamma = (dy * &c.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    if c.rows == 0 {
        return (dy.clone(), dgamma, dbeta);
    }
    let n = c.rows as f64;
    let dxhat = dy * &bn.gamma;
    let sum_dxhat = dxhat.sum_axis(Axis(0)).insert_axis(Axis(0));
    let sum_dxhat_xhat = (&dxhat * &c.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    let dz = (&dxhat * n - &sum_dxhat - &c.xhat * &sum_dxhat_xhat) * &c.inv_std / n;
    (dz, dgamma, dbeta)
}

fn update_running(bn: &mut BatchNorm, c: &BnCache) {
    if c.rows == 0 {
        return;
    }
    let unbias = if c.rows > 1 {
        c.rows as f64 / (c.rows - 1) as f64
    } else {
        1.0
    };
    bn.running_mean.zip_mut_with(&c.mean, |r, &m| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m);
    bn.running_var
        .zip_mut_with(&c.var, |r, &v| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v * unbias);
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

#[derive(Debug, Clone)]
struct LayerCache {
    x: Array2<f64>,
    e: Array2<f64>,
    gate: Array2<f64>,
    xv: Array2<f64>,
    num: Array2<f64>,
    den: Array2<f64>,
    bn_edge_out: Array2<f64>,
    bn_node_out: Array2<f64>,
    bn_edge: Option<BnCache>,
    bn_node: Option<BnCache>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    x_in: Array2<f64>,
    e_in: Array2<f64>,
    bn_node_in: Option<BnCache>,
    bn_edge_in: Option<BnCache>,
    layers: Vec<LayerCache>,
    argmax: Array2<u8>,
    mlp_inputs: Vec<Array2<f64>>,
    mlp_pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    /// Per layer and node, the sum of normalized gates over incident edges.
    /// Nodes without incident edges report 0.
    pub fn attention_sums(&self, index: &GraphIndex) -> Vec<Array2<f64>> {
        self.layers
            .iter()
            .map(|l| {
                let mut sums = Array2::zeros(l.den.raw_dim());
                for k in 0..index.num_edges() {
                    for node in [index.tail[k], index.head[k]] {
                        let mut row = sums.row_mut(node);
                        let den = l.den.row(node);
                        Zip::from(&mut row)
                            .and(&l.gate.row(k))
                            .and(&den)
                            .for_each(|s, &g, &d| *s += g / d.max(DENOM_FLOOR));
                    }
                }
                sums
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// Logit per scored edge, in `index.scored` order.
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub cache: ForwardCache,
}

pub fn check_shapes(params: &ModelParams, x_in: &Array2<f64>, e_in: &Array2<f64>, index: &GraphIndex) -> Result<(), GnnError> {
    let h = &params.hyper;
    if x_in.ncols() != h.node_dim || e_in.ncols() != h.edge_dim {
        return Err(GnnError::ShapeMismatch(format!(
            "features ({}, {}) vs model ({}, {})",
            x_in.ncols(),
            e_in.ncols(),
            h.node_dim,
            h.edge_dim
        )));
    }
    if x_in.nrows() != index.num_nodes || e_in.nrows() != index.num_edges() {
        return Err(GnnError::ShapeMismatch(format!(
            "feature rows ({}, {}) vs graph ({}, {})",
            x_in.nrows(),
            e_in.nrows(),
            index.num_nodes,
            index.num_edges()
        )));
    }
    Ok(())
}

/// Runs the network on normalized features.
pub fn forward(
    params: &ModelParams,
    x_in: &Array2<f64>,
    e_in: &Array2<f64>,
    index: &GraphIndex,
    mode: Mode,
) -> Result<Forward, GnnError> {
    check_shapes(params, x_in, e_in, index)?;
    let (x0, bn_node_in) = bn_forward(&params.bn_node_in, &params.node_in.apply(x_in), mode);
    let (e0, bn_edge_in) = bn_forward(&params.bn_edge_in, &params.edge_in.apply(e_in), mode);

    let n = index.num_nodes;
    let h = params.hyper.h_conv;
    let mut x = x0;
    let mut e = e0;
    let scored_rows = |e: &Array2<f64>| e.select(Axis(0), &index.scored);
    let mut pooled = scored_rows(&e);
    let mut argmax = Array2::<u8>::zeros(pooled.raw_dim());
    let mut layers = Vec::with_capacity(params.layers.len());

    for (l, layer) in params.layers.iter().enumerate() {
        let xa = x.dot(&layer.a);
        let xb = x.dot(&layer.b);
        let xu = x.dot(&layer.u);
        let xv = x.dot(&layer.v);
        let mut ehat = e.dot(&layer.c);
        for (k, mut row) in ehat.rows_mut().into_iter().enumerate() {
            row += &xa.row(index.tail[k]);
            row += &xb.row(index.head[k]);
        }
        let gate = ehat.mapv(sigmoid);
        let mut num = Array2::<f64>::zeros((n, h));
        let mut den = Array2::<f64>::zeros((n, h));
        for k in 0..index.num_edges() {
            let (t, hd) = (index.tail[k], index.head[k]);
            let g = gate.row(k);
            for (node, other) in [(t, hd), (hd, t)] {
                Zip::from(num.row_mut(node))
                    .and(den.row_mut(node))
                    .and(&g)
                    .and(&xv.row(other))
                    .for_each(|nm, dn, &gv, &v| {
                        *nm += gv * v;
                        *dn += gv;
                    });
            }
        }
        let mut xhat = xu;
        Zip::from(&mut xhat)
            .and(&num)
            .and(&den)
            .for_each(|o, &nm, &dn| *o += nm / dn.max(DENOM_FLOOR));

        let (bn_edge_out, bn_edge) = bn_forward(&layer.bn_edge, &ehat, mode);
        let (bn_node_out, bn_node) = bn_forward(&layer.bn_node, &xhat, mode);
        let e_next = &e + &relu(&bn_edge_out);
        let x_next = &x + &relu(&bn_node_out);

        let candidate = scored_rows(&e_next);
        Zip::from(&mut pooled)
            .and(&mut argmax)
            .and(&candidate)
            .for_each(|p, a, &c| {
                if c > *p {
                    *p = c;
                    *a = (l + 1) as u8;
                }
            });

        layers.push(LayerCache {
            x,
            e,
            gate,
            xv,
            num,
            den,
            bn_edge_out,
            bn_node_out,
            bn_edge,
            bn_node,
        });
        x = x_next;
        e = e_next;
    }

    let mut hidden = pooled;
    let mut mlp_inputs = Vec::with_capacity(params.mlp.len());
    let mut mlp_pre = Vec::with_capacity(params.mlp.len());
    for (t, lin) in params.mlp.iter().enumerate() {
        let z = lin.apply(&hidden);
        mlp_inputs.push(hidden);
        if t + 1 == params.mlp.len() {
            hidden = z;
        } else {
            hidden = relu(&z);
            mlp_pre.push(z);
        }
    }
    let logits: Vec<f64> = hidden.column(0).to_vec();
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(GnnError::NonFiniteActivation);
    }
    let probs = logits.iter().map(|&z| sigmoid(z)).collect();
    Ok(Forward {
        logits,
        probs,
        cache: ForwardCache {
            mode,
            x_in: x_in.clone(),
            e_in: e_in.clone(),
            bn_node_in,
            bn_edge_in,
            layers,
            argmax,
            mlp_inputs,
            mlp_pre,
        },
    })
}

/// Folds the batch statistics of a training forward pass into the running
/// statistics.
pub fn update_running_stats(params: &mut ModelParams, cache: &ForwardCache) {
    if let Some(c) = &cache.bn_node_in {
        update_running(&mut params.bn_node_in, c);
    }
    if let Some(c) = &cache.bn_edge_in {
        update_running(&mut params.bn_edge_in, c);
    }
    for (layer, lc) in params.layers.iter_mut().zip(&cache.layers) {
        if let Some(c) = &lc.bn_node {
            update_running(&mut layer.bn_node, c);
        }
        if let Some(c) = &lc.bn_edge {
            update_running(&mut layer.bn_edge, c);
        }
    }
}

/// Gradients of every learnable tensor given the loss gradient with respect
/// to each logit. Requires a [`Mode::Train`] cache.
pub fn backward(params: &ModelParams, cache: &ForwardCache, index: &GraphIndex, dlogits: &[f64]) -> ModelParams {
    assert_eq!(cache.mode, Mode::Train, "backward needs a training-mode forward pass");
    let mut grads = params.zeros_like();
    let n_layers = params.layers.len();
    let n = index.num_nodes;
    let h = params.hyper.h_conv;

    let mut g = Array2::from_shape_vec((dlogits.len(), 1), dlogits.to_vec()).unwrap();
    for t in (0..params.mlp.len()).rev() {
        if t + 1 < params.mlp.len() {
            Zip::from(&mut g).and(&cache.mlp_pre[t]).for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0
                }
            });
        }
        let input = &cache.mlp_inputs[t];
        grads.mlp[t].w = input.t().dot(&g);
        grads.mlp[t].b = g.sum_axis(Axis(0)).insert_axis(Axis(0));
        g = g.dot(&params.mlp[t].w.t());
    }

    // route pooled gradients to the layer that won the max
    let mut de: Vec<Array2<f64>> = (0..=n_layers).map(|_| Array2::zeros((index.num_edges(), h))).collect();
    for (r, &k) in index.scored.iter().enumerate() {
        for c in 0..h {
            let l = cache.argmax[[r, c]] as usize;
            de[l][[k, c]] += g[[r, c]];
        }
    }

    let mut dx_next = Array2::<f64>::zeros((n, h));
    for l in (0..n_layers).rev() {
        let lc = &cache.layers[l];
        let lp = &params.layers[l];
        let de_next = std::mem::replace(&mut de[l + 1], Array2::zeros((0, 0)));
        let mut dx = dx_next.clone();
        let mut de_cur = de_next.clone();

        let mut d_bne = de_next;
        Zip::from(&mut d_bne).and(&lc.bn_edge_out).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        let (mut dehat, dg, db) = bn_backward(&lp.bn_edge, lc.bn_edge.as_ref().unwrap(), &d_bne);
        grads.layers[l].bn_edge.gamma = dg;
        grads.layers[l].bn_edge.beta = db;

        let mut d_bnn = dx_next;
        Zip::from(&mut d_bnn).and(&lc.bn_node_out).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        let (dxhat, dg, db) = bn_backward(&lp.bn_node, lc.bn_node.as_ref().unwrap(), &d_bnn);
        grads.layers[l].bn_node.gamma = dg;
        grads.layers[l].bn_node.beta = db;

        // self term
        grads.layers[l].u = lc.x.t().dot(&dxhat);
        dx += &dxhat.dot(&lp.u.t());

        // normalized aggregation: agg = num / max(den, floor)
        let mut dnum = Array2::<f64>::zeros((n, h));
        let mut dden = Array2::<f64>::zeros((n, h));
        Zip::from(&mut dnum)
            .and(&mut dden)
            .and(&dxhat)
            .and(&lc.num)
            .and(&lc.den)
            .for_each(|dn, dd, &dy, &nm, &den| {
                let d = den.max(DENOM_FLOOR);
                *dn = dy / d;
                *dd = if den > DENOM_FLOOR { -dy * nm / (d * d) } else { 0.0 };
            });
        let mut dgate = Array2::<f64>::zeros((index.num_edges(), h));
        let mut dxv = Array2::<f64>::zeros((n, h));
        for k in 0..index.num_edges() {
            let (t, hd) = (index.tail[k], index.head[k]);
            for (node, other) in [(t, hd), (hd, t)] {
                Zip::from(dgate.row_mut(k))
                    .and(&lc.gate.row(k))
                    .and(&lc.xv.row(other))
                    .and(&dnum.row(node))
                    .and(&dden.row(node))
                    .for_each(|dg, &_gv, &v, &dn, &dd| *dg += dn * v + dd);
                Zip::from(dxv.row_mut(other))
                    .and(&lc.gate.row(k))
                    .and(&dnum.row(node))
                    .for_each(|dv, &gv, &dn| *dv += dn * gv);
            }
        }
        grads.layers[l].v = lc.x.t().dot(&dxv);
        dx += &dxv.dot(&lp.v.t());

        Zip::from(&mut dehat)
            .and(&dgate)
            .and(&lc.gate)
            .for_each(|d, &dg, &s| *d += dg * s * (1.0 - s));

        let mut dxa = Array2::<f64>::zeros((n, h));
        let mut dxb = Array2::<f64>::zeros((n, h));
        for (k, row) in dehat.rows().into_iter().enumerate() {
            let mut a = dxa.row_mut(index.tail[k]);
            a += &row;
            let mut b = dxb.row_mut(index.head[k]);
            b += &row;
        }
        grads.layers[l].a = lc.x.t().dot(&dxa);
        grads.layers[l].b = lc.x.t().dot(&dxb);
        grads.layers[l].c = lc.e.t().dot(&dehat);
        dx += &dxa.dot(&lp.a.t());
        dx += &dxb.dot(&lp.b.t());
        de_cur += &dehat.dot(&lp.c.t());

        de[l] += &de_cur;
        dx_next = dx;
    }

    let (dz, dg, db) = bn_backward(&params.bn_node_in, cache.bn_node_in.as_ref().unwrap(), &dx_next);
    grads.bn_node_in.gamma = dg;
    grads.bn_node_in.beta = db;
    grads.node_in.w = cache.x_in.t().dot(&dz);
    grads.node_in.b = dz.sum_axis(Axis(0)).insert_axis(Axis(0));

    let (dz, dg, db) = bn_backward(&params.bn_edge_in, cache.bn_edge_in.as_ref().unwrap(), &de[0]);
    grads.bn_edge_in.gamma = dg;
    grads.bn_edge_in.beta = db;
    grads.edge_in.w = cache.e_in.t().dot(&dz);
    grads.edge_in.b = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
    grads
}
