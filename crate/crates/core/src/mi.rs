//! Donsker–Varadhan mutual-information estimation between graphs and their
//! subgraphs.
//!
//! The statistics network scores a pair `(u, v)` as `head([u ‖ v])`. For
//! graph data `u` is the mean node embedding of the whole graph under the
//! shared encoder and `v` the soft subgraph embedding. The estimate on a
//! batch of `N` pairs is
//!
//! ```text
//! mean_i f(u_i, v_i) − log mean_{(i,j) ∈ M} exp f(u_i, v_j)
//! ```
//!
//! where `M` is either the cyclic shift `j = (i+1) mod N` or every `j ≠ i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GibError, Result};
use crate::gnn::{Activation, Mlp};
use crate::optim::{Optimizer, OptimizerKind};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalPairing {
    /// Pair `i` with `(i+1) mod N`.
    #[default]
    Shift,
    /// Pair `i` with every `j ≠ i`.
    AllPairs,
}

impl MarginalPairing {
    fn pairs(self, n: usize) -> (Vec<usize>, Vec<usize>) {
        match self {
            MarginalPairing::Shift => ((0..n).collect(), (0..n).map(|i| (i + 1) % n).collect()),
            MarginalPairing::AllPairs => (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .unzip(),
        }
    }
}

/// The trainable head `f_φ₂`; the graph-side encoder is shared with the
/// subgraph generator and is passed in as embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct StatisticsNetwork {
    pub head: Mlp,
}

impl StatisticsNetwork {
    /// Head `[2·dim → hidden → 1]` with a tanh hidden layer.
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        StatisticsNetwork {
            head: Mlp::new(&[2 * dim, hidden, 1], Activation::Tanh, rng),
        }
    }

    /// Width of each side of the pair.
    pub fn side_dim(&self) -> usize {
        self.head.input_dim() / 2
    }

    /// Row-wise statistic of stacked pairs (`N×d` each) as an `N×1` column.
    pub fn statistic<'t>(&self, params: &[Var<'t>], graph: Var<'t>, sub: Var<'t>) -> Result<Var<'t>> {
        let d = self.side_dim();
        if graph.shape()[1] != d || sub.shape()[1] != d || graph.shape()[0] != sub.shape()[0] {
            return Err(GibError::Dimension {
                op: "statistic",
                lhs: graph.shape(),
                rhs: sub.shape(),
            });
        }
        self.head.forward(params, graph.concat_cols(sub)?)
    }

    /// Statistic of a single pair outside any training tape.
    pub fn score(&self, graph: &Tensor, sub: &Tensor) -> Result<f64> {
        let tape = Tape::new();
        let p = self.head.params.bind_frozen(&tape);
        Ok(self
            .statistic(&p, tape.constant(graph.clone()), tape.constant(sub.clone()))?
            .item())
    }
}

/// Graph-side embedding: mean of node embeddings.
pub fn graph_embedding<'t>(nodes: Var<'t>) -> Result<Var<'t>> {
    nodes.mean_rows()
}

/// DV terms on the tape; `value = joint − marginal`.
#[derive(Clone, Copy, Debug)]
pub struct MiBatchTerms<'t> {
    pub joint: Var<'t>,
    pub marginal: Var<'t>,
    pub value: Var<'t>,
}

impl MiBatchTerms<'_> {
    pub fn estimate(&self) -> MiBatchEstimate {
        let joint = self.joint.item();
        let marginal = self.marginal.item();
        MiBatchEstimate {
            joint,
            marginal,
            value: joint - marginal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiBatchEstimate {
    pub joint: f64,
    pub marginal: f64,
    pub value: f64,
}

/// DV estimate for `N ≥ 2` matched rows of `graphs` and `subs`.
pub fn mi_batch_loss<'t>(
    f: &StatisticsNetwork,
    params: &[Var<'t>],
    graphs: Var<'t>,
    subs: Var<'t>,
    pairing: MarginalPairing,
) -> Result<MiBatchTerms<'t>> {
    let n = graphs.shape()[0];
    if n < 2 {
        return Err(GibError::contract(format!("MI batch of {n} pairs has no marginal pairs")));
    }
    let joint = f.statistic(params, graphs, subs)?.mean()?;
    let (gi, sj) = pairing.pairs(n);
    let marginal = f
        .statistic(params, graphs.select_rows(&gi)?, subs.select_rows(&sj)?)?
        .log_mean_exp()?;
    Ok(MiBatchTerms {
        joint,
        marginal,
        value: joint.sub(marginal)?,
    })
}

/// Plain-value estimate with the current head.
pub fn mi_estimate(
    f: &StatisticsNetwork,
    graphs: &Tensor,
    subs: &Tensor,
    pairing: MarginalPairing,
) -> Result<MiBatchEstimate> {
    let tape = Tape::new();
    let p = f.head.params.bind_frozen(&tape);
    let terms = mi_batch_loss(f, &p, tape.constant(graphs.clone()), tape.constant(subs.clone()), pairing)?;
    Ok(terms.estimate())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerConfig {
    pub steps: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub pairing: MarginalPairing,
}

/// Gradient ascent on the DV estimate over the head alone.
///
/// Step `t` uses `batches[t % len]`; each batch is `(graph embeddings, sub
/// embeddings)` with the generator frozen. Returns the estimate before each
/// step.
pub fn inner_maximize(
    f: &mut StatisticsNetwork,
    batches: &[(Tensor, Tensor)],
    config: &InnerConfig,
) -> Result<Vec<f64>> {
    if config.steps == 0 {
        return Err(GibError::contract("inner loop needs at least one step"));
    }
    if batches.is_empty() {
        return Err(GibError::contract("inner loop needs at least one batch"));
    }
    let mut opt = Optimizer::new(config.optimizer, config.lr, &f.head.params);
    let mut trace = Vec::with_capacity(config.steps);
    for t in 0..config.steps {
        let (g, s) = &batches[t % batches.len()];
        let tape = Tape::new();
        let p = f.head.params.bind(&tape);
        let terms = mi_batch_loss(f, &p, tape.constant(g.clone()), tape.constant(s.clone()), config.pairing)?;
        let value = terms.value.item();
        trace.push(value);
        if !value.is_finite() {
            return Err(non_finite(t, &trace));
        }
        let grads = tape.backward(terms.value.neg())?;
        let grads = f.head.params.gradients(&p, &grads);
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(non_finite(t, &trace));
        }
        opt.step(&mut f.head.params, &grads)?;
    }
    Ok(trace)
}

fn non_finite(step: usize, trace: &[f64]) -> GibError {
    GibError::NonFinite {
        what: "MI estimate",
        phase: "inner maximisation",
        step,
        trace: trace[trace.len().saturating_sub(10)..].to_vec(),
    }
}
