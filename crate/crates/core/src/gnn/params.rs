use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Shape hyperparameters of the edge classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyper {
    pub node_dim: usize,
    pub edge_dim: usize,
    pub h_conv: usize,
    pub h_mlp: usize,
    pub l_conv: usize,
    pub l_mlp: usize,
}

impl Hyper {
    /// Desk-scale defaults for the given raw feature widths.
    pub fn desk(node_dim: usize, edge_dim: usize) -> Self {
        Hyper {
            node_dim,
            edge_dim,
            h_conv: 64,
            h_mlp: 64,
            l_conv: 4,
            l_mlp: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

impl Linear {
    fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: glorot(input, output, rng),
            b: Array2::zeros((1, output)),
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
    pub running_mean: Array2<f64>,
    pub running_var: Array2<f64>,
}

impl BatchNorm {
    fn new(h: usize) -> Self {
        BatchNorm {
            gamma: Array2::ones((1, h)),
            beta: Array2::zeros((1, h)),
            running_mean: Array2::zeros((1, h)),
            running_var: Array2::ones((1, h)),
        }
    }
}

/// Weights of one gated graph convolution layer.
///
/// `a` acts on the tail node of an edge, `b` on the head, `c` on the edge
/// itself; `u` is the self term and `v` the gated neighbour message.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub c: Array2<f64>,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub bn_node: BatchNorm,
    pub bn_edge: BatchNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hyper: Hyper,
    pub node_in: Linear,
    pub bn_node_in: BatchNorm,
    pub edge_in: Linear,
    pub bn_edge_in: BatchNorm,
    pub layers: Vec<ConvLayer>,
    pub mlp: Vec<Linear>,
}

fn glorot(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (input + output) as f64).sqrt();
    Array2::from_shape_fn((input, output), |_| rng.gen_range(-limit..limit))
}

impl ModelParams {
    pub fn init(hyper: Hyper, rng: &mut ChaCha8Rng) -> Self {
        let h = hyper.h_conv;
        let node_in = Linear::new(hyper.node_dim, h, rng);
        let edge_in = Linear::new(hyper.edge_dim, h, rng);
        let layers = (0..hyper.l_conv)
            .map(|_| ConvLayer {
                a: glorot(h, h, rng),
                b: glorot(h, h, rng),
                c: glorot(h, h, rng),
                u: glorot(h, h, rng),
                v: glorot(h, h, rng),
                bn_node: BatchNorm::new(h),
                bn_edge: BatchNorm::new(h),
            })
            .collect();
        let mut mlp = Vec::with_capacity(hyper.l_mlp);
        for k in 0..hyper.l_mlp {
            let input = if k == 0 { h } else { hyper.h_mlp };
            let output = if k + 1 == hyper.l_mlp { 1 } else { hyper.h_mlp };
            mlp.push(Linear::new(input, output, rng));
        }
        ModelParams {
            hyper,
            node_in,
            bn_node_in: BatchNorm::new(h),
            edge_in,
            bn_edge_in: BatchNorm::new(h),
            layers,
            mlp,
        }
    }

    /// Same shapes with every tensor, including running statistics, zeroed.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.learnable_mut() {
            t.fill(0.0);
        }
        for t in z.buffers_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Learnable tensors in declaration order.
    pub fn learnable(&self) -> Vec<&Array2<f64>> {
        let mut out = vec![
            &self.node_in.w,
            &self.node_in.b,
            &self.bn_node_in.gamma,
            &self.bn_node_in.beta,
            &self.edge_in.w,
            &self.edge_in.b,
            &self.bn_edge_in.gamma,
            &self.bn_edge_in.beta,
        ];
        for l in &self.layers {
            out.extend([
                &l.a,
                &l.b,
                &l.c,
                &l.u,
                &l.v,
                &l.bn_node.gamma,
                &l.bn_node.beta,
                &l.bn_edge.gamma,
                &l.bn_edge.beta,
            ]);
        }
        for m in &self.mlp {
            out.extend([&m.w, &m.b]);
        }
        out
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let ModelParams {
            node_in,
            bn_node_in,
            edge_in,
            bn_edge_in,
            layers,
            mlp,
            ..
        } = self;
        let mut out = vec![
            &mut node_in.w,
            &mut node_in.b,
            &mut bn_node_in.gamma,
            &mut bn_node_in.beta,
            &mut edge_in.w,
            &mut edge_in.b,
            &mut bn_edge_in.gamma,
            &mut bn_edge_in.beta,
        ];
        for l in layers {
            out.extend([
                &mut l.a,
                &mut l.b,
                &mut l.c,
                &mut l.u,
                &mut l.v,
                &mut l.bn_node.gamma,
                &mut l.bn_node.beta,
                &mut l.bn_edge.gamma,
                &mut l.bn_edge.beta,
            ]);
        }
        for m in mlp {
            out.extend([&mut m.w, &mut m.b]);
        }
        out
    }

    /// Names matching [`ModelParams::learnable`].
    pub fn learnable_names(&self) -> Vec<String> {
        let mut out: Vec<String> = [
            "node_in.w",
            "node_in.b",
            "bn_node_in.gamma",
            "bn_node_in.beta",
            "edge_in.w",
            "edge_in.b",
            "bn_edge_in.gamma",
            "bn_edge_in.beta",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for k in 0..self.layers.len() {
            for t in ["a", "b", "c", "u", "v", "bn_node.gamma", "bn_node.beta", "bn_edge.gamma", "bn_edge.beta"] {
                out.push(format!("layer{k}.{t}"));
            }
        }
        for k in 0..self.mlp.len() {
            out.push(format!("mlp{k}.w"));
            out.push(format!("mlp{k}.b"));
        }
        out
    }

    fn batch_norms(&self) -> Vec<&BatchNorm> {
        let mut out = vec![&self.bn_node_in, &self.bn_edge_in];
        for l in &self.layers {
            out.push(&l.bn_node);
            out.push(&l.bn_edge);
        }
        out
    }

    /// Running statistics (mean, then variance) of every batch norm.
    pub fn buffers(&self) -> Vec<&Array2<f64>> {
        self.batch_norms()
            .into_iter()
            .flat_map(|bn| [&bn.running_mean, &bn.running_var])
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![
            &mut self.bn_node_in.running_mean,
            &mut self.bn_node_in.running_var,
            &mut self.bn_edge_in.running_mean,
            &mut self.bn_edge_in.running_var,
        ];
        for l in &mut self.layers {
            out.push(&mut l.bn_node.running_mean);
            out.push(&mut l.bn_node.running_var);
            out.push(&mut l.bn_edge.running_mean);
            out.push(&mut l.bn_edge.running_var);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.learnable().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.learnable()
            .into_iter()
            .chain(self.buffers())
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Copy with every value rounded through 32-bit storage.
    pub fn rounded_f32(&self) -> Self {
        let mut p = self.clone();
        for t in p.learnable_mut() {
            t.mapv_inplace(|v| v as f32 as f64);
        }
        for t in p.buffers_mut() {
            t.mapv_inplace(|v| v as f32 as f64);
        }
        p
    }

    /// `self += scale * other` over learnable tensors.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (a, b) in self.learnable_mut().into_iter().zip(other.learnable()) {
            a.scaled_add(scale, b);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.learnable().iter().map(|t| t.iter().map(|v| v * v).sum::<f64>()).sum()
    }
}
