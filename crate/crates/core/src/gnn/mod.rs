//! GCN encoder, self-attentive read-out and MLP heads.

mod params;

pub use params::{load_checkpoint, save_checkpoint, ParamSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GibError, Result};
use crate::graph_io::Graph;
use crate::tensor::{Tape, Tensor, Var};

/// Symmetric GCN propagation matrix `D̂^{-1/2} (A + I) D̂^{-1/2}`.
pub fn normalized_adjacency(adjacency: &Tensor) -> Tensor {
    let n = adjacency.rows();
    let mut a_hat = adjacency.clone();
    for i in 0..n {
        a_hat.set(i, i, a_hat.get(i, i) + 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / a_hat.row(i).iter().sum::<f64>().sqrt())
        .collect();
    for i in 0..n {
        for j in 0..n {
            let v = a_hat.get(i, j);
            if v != 0.0 {
                a_hat.set(i, j, v * inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    a_hat
}

/// One GCN layer on the tape: `ReLU(Â · X · W)` with `Â` already normalised.
pub fn gcn_forward<'t>(norm_adj: Var<'t>, features: Var<'t>, weight: Var<'t>) -> Result<Var<'t>> {
    let [n, m] = norm_adj.shape();
    let [rows, _] = features.shape();
    if n != m || rows != n {
        return Err(GibError::Dimension {
            op: "gcn_forward",
            lhs: norm_adj.shape(),
            rhs: features.shape(),
        });
    }
    Ok(norm_adj.matmul(features.matmul(weight)?)?.relu())
}

/// Stack of GCN layers without bias.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnEncoder {
    dims: Vec<usize>,
    pub params: ParamSet,
}

impl GcnEncoder {
    /// `widths` are the output widths of the successive layers.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, widths: &[usize], rng: &mut R) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(widths);
        let mut params = ParamSet::new();
        for (l, w) in dims.windows(2).enumerate() {
            params.push(format!("w{l}"), Tensor::glorot_uniform(w[0], w[1], rng));
        }
        GcnEncoder { dims, params }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn forward<'t>(
        &self,
        params: &[Var<'t>],
        norm_adj: Var<'t>,
        features: Var<'t>,
    ) -> Result<Var<'t>> {
        if features.shape()[1] != self.input_dim() {
            return Err(GibError::Dimension {
                op: "gcn encoder input",
                lhs: [features.shape()[0], self.input_dim()],
                rhs: features.shape(),
            });
        }
        let mut h = features;
        for &w in params {
            h = gcn_forward(norm_adj, h, w)?;
        }
        Ok(h)
    }

    /// Node embeddings of `graph` with the current weights.
    pub fn embed(&self, graph: &Graph) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        let a = tape.constant(normalized_adjacency(graph.adjacency()));
        let x = tape.constant(graph.features().clone());
        Ok(self.forward(&p, a, x)?.value())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply<'t>(self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Fully connected stack; layer `l` owns parameters `w{l}` and `b{l}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    activations: Vec<Activation>,
    pub params: ParamSet,
}

impl Mlp {
    /// Glorot weights and zero biases; `hidden` after every layer but the
    /// last, which is linear.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], hidden: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let mut params = ParamSet::new();
        let layers = dims.len() - 1;
        for l in 0..layers {
            params.push(format!("w{l}"), Tensor::glorot_uniform(dims[l], dims[l + 1], rng));
            params.push(format!("b{l}"), Tensor::zeros(1, dims[l + 1]));
        }
        let mut activations = vec![hidden; layers];
        activations[layers - 1] = Activation::Identity;
        Mlp {
            dims: dims.to_vec(),
            activations,
            params,
        }
    }

    /// Builds an MLP from explicit `(weight, bias)` pairs.
    pub fn from_layers(layers: Vec<(Tensor, Tensor)>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() || layers.len() != activations.len() {
            return Err(GibError::contract("one activation per layer is required"));
        }
        let mut dims = vec![layers[0].0.rows()];
        let mut params = ParamSet::new();
        for (l, (w, b)) in layers.into_iter().enumerate() {
            if w.rows() != *dims.last().unwrap() || b.shape() != [1, w.cols()] {
                return Err(GibError::Dimension {
                    op: "mlp layer",
                    lhs: w.shape(),
                    rhs: b.shape(),
                });
            }
            dims.push(w.cols());
            params.push(format!("w{l}"), w);
            params.push(format!("b{l}"), b);
        }
        Ok(Mlp {
            dims,
            activations,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn forward<'t>(&self, params: &[Var<'t>], input: Var<'t>) -> Result<Var<'t>> {
        if input.shape()[1] != self.input_dim() {
            return Err(GibError::Dimension {
                op: "mlp input",
                lhs: [input.shape()[0], self.input_dim()],
                rhs: input.shape(),
            });
        }
        let mut h = input;
        for (l, act) in self.activations.iter().enumerate() {
            h = act.apply(h.matmul(params[2 * l])?.add(params[2 * l + 1])?);
        }
        Ok(h)
    }

    /// Forward pass outside any training tape.
    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        Ok(self.forward(&p, tape.constant(input.clone()))?.value())
    }
}

/// Self-attentive read-out: scores `softmax(tanh(X·Φ₁)·Φ₂)` over nodes and
/// graph embedding `scoresᵀ·X`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionHead {
    pub params: ParamSet,
}

impl AttentionHead {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        params.push("proj", Tensor::glorot_uniform(dim, hidden, rng));
        params.push("score", Tensor::glorot_uniform(hidden, 1, rng));
        AttentionHead { params }
    }

    /// Returns `(graph embedding 1×d, scores 1×n)`.
    pub fn forward<'t>(&self, params: &[Var<'t>], nodes: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        if nodes.shape()[0] == 0 {
            return Err(GibError::contract("attention over an empty node set"));
        }
        let logits = nodes.matmul(params[0])?.tanh().matmul(params[1])?;
        let scores = logits.transpose().row_softmax();
        Ok((scores.matmul(nodes)?, scores))
    }

    pub fn aggregate(&self, nodes: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        let (e, s) = self.forward(&p, tape.constant(nodes.clone()))?;
        Ok((e.value(), s.value().into_data()))
    }
}

/// Keeps the `⌈keep·n⌉` highest-scoring nodes; ties go to the lower index.
pub fn topk_subgraph_from_scores(scores: &[f64], keep: f64) -> Result<Vec<bool>> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(GibError::contract(format!("keep fraction {keep} outside (0, 1]")));
    }
    let n = scores.len();
    let k = ((keep * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut mask = vec![false; n];
    for &i in order.iter().take(k.min(n)) {
        mask[i] = true;
    }
    Ok(mask)
}
