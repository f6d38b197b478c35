//! Soft node assignment, subgraph embedding, connectivity penalty and hard
//! subgraph extraction.

use serde::{Deserialize, Serialize};

use crate::error::{GibError, Result};
use crate::gnn::{GcnEncoder, Mlp};
use crate::graph_io::Graph;
use crate::tensor::{Tape, Tensor, Var};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Row-stochastic `n×2` matrix; column 0 is the probability of membership in
/// the subgraph, column 1 in its complement.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeAssignment {
    s: Tensor,
}

impl NodeAssignment {
    pub fn new(s: Tensor) -> Result<Self> {
        if s.cols() != 2 {
            return Err(GibError::Dimension {
                op: "node assignment",
                lhs: s.shape(),
                rhs: [s.rows(), 2],
            });
        }
        for r in 0..s.rows() {
            let row = s.row(r);
            let ok = row.iter().all(|v| (0.0..=1.0).contains(v)) && (row[0] + row[1] - 1.0).abs() <= 1e-9;
            if !ok {
                return Err(GibError::contract(format!("assignment row {r} = {row:?} is not a distribution")));
            }
        }
        Ok(NodeAssignment { s })
    }

    /// Builds hard 0/1 assignments from a selection mask.
    pub fn from_mask(mask: &[bool]) -> Self {
        let rows: Vec<[f64; 2]> = mask
            .iter()
            .map(|&m| if m { [1.0, 0.0] } else { [0.0, 1.0] })
            .collect();
        NodeAssignment {
            s: Tensor::from_rows(&rows),
        }
    }

    pub fn matrix(&self) -> &Tensor {
        &self.s
    }

    pub fn num_nodes(&self) -> usize {
        self.s.rows()
    }

    /// Subgraph-membership probability per node.
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.s.rows()).map(|i| self.s.get(i, 0)).collect()
    }
}

/// Node embeddings and `S = row_softmax(MLP(GNN(A, X)))` on the tape.
/// Returns `(Xˡ, S)`.
pub fn assignment_forward<'t>(
    encoder: &GcnEncoder,
    encoder_params: &[Var<'t>],
    assigner: &Mlp,
    assigner_params: &[Var<'t>],
    norm_adj: Var<'t>,
    features: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let h = encoder.forward(encoder_params, norm_adj, features)?;
    let s = assigner.forward(assigner_params, h)?.row_softmax();
    Ok((h, s))
}

/// Evaluates the generator on one graph with frozen parameters.
pub fn generate_assignment(encoder: &GcnEncoder, assigner: &Mlp, g: &Graph) -> Result<NodeAssignment> {
    if g.num_nodes() == 0 {
        return Err(GibError::contract("assignment of an empty graph"));
    }
    if assigner.output_dim() != 2 {
        return Err(GibError::contract("assignment MLP must have two outputs"));
    }
    let tape = Tape::new();
    let ep = encoder.params.bind_frozen(&tape);
    let ap = assigner.params.bind_frozen(&tape);
    let a = tape.constant(crate::gnn::normalized_adjacency(g.adjacency()));
    let x = tape.constant(g.features().clone());
    let (_, s) = assignment_forward(encoder, &ep, assigner, &ap, a, x)?;
    Ok(NodeAssignment { s: s.value() })
}

/// Row 0 of `SᵀXˡ`: the membership-weighted sum of node embeddings.
pub fn subgraph_embedding<'t>(s: Var<'t>, nodes: Var<'t>) -> Result<Var<'t>> {
    s.col(0)?.transpose().matmul(nodes)
}

/// `‖Norm(SᵀAS) − I₂‖_F` with row-wise L1 normalisation.
pub fn connectivity_loss<'t>(s: Var<'t>, adjacency: Var<'t>) -> Result<Var<'t>> {
    let [n, m] = adjacency.shape();
    if n != m || s.shape() != [n, 2] {
        return Err(GibError::Dimension {
            op: "connectivity_loss",
            lhs: s.shape(),
            rhs: adjacency.shape(),
        });
    }
    let tape = s.tape();
    let gram = s.transpose().matmul(adjacency.matmul(s)?)?;
    gram.row_l1_normalize()
        .sub(tape.constant(Tensor::identity(2)))?
        .frobenius_norm()
}

/// Connectivity loss evaluated outside any training tape.
pub fn connectivity_loss_value(s: &NodeAssignment, adjacency: &Tensor) -> Result<f64> {
    let tape = Tape::new();
    let v = connectivity_loss(tape.constant(s.s.clone()), tape.constant(adjacency.clone()))?;
    Ok(v.item())
}

/// A hard node selection with its induced adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphSelection {
    pub mask: Vec<bool>,
    /// `adjacency` restricted to selected rows and columns, in node order.
    pub induced_adjacency: Tensor,
    pub threshold: f64,
    /// Set when no node is selected.
    pub empty: bool,
}

impl SubgraphSelection {
    pub fn from_mask(mask: Vec<bool>, adjacency: &Tensor, threshold: f64) -> Self {
        let kept: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let mut induced = Tensor::zeros(kept.len(), kept.len());
        for (a, &i) in kept.iter().enumerate() {
            for (b, &j) in kept.iter().enumerate() {
                induced.set(a, b, adjacency.get(i, j));
            }
        }
        SubgraphSelection {
            empty: kept.is_empty(),
            mask,
            induced_adjacency: induced,
            threshold,
        }
    }

    pub fn selected(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    /// Connected components of the induced subgraph as original node ids,
    /// each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let kept = self.selected();
        let k = kept.len();
        let mut seen = vec![false; k];
        let mut out = Vec::new();
        for start in 0..k {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(a) = stack.pop() {
                comp.push(kept[a]);
                for b in 0..k {
                    if !seen[b] && self.induced_adjacency.get(a, b) != 0.0 {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Node `i` is selected iff `S[i,0] ≥ threshold`.
pub fn discretize(s: &NodeAssignment, adjacency: &Tensor, threshold: f64) -> Result<SubgraphSelection> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(GibError::contract(format!("threshold {threshold} outside (0, 1)")));
    }
    if adjacency.shape() != [s.num_nodes(), s.num_nodes()] {
        return Err(GibError::Dimension {
            op: "discretize",
            lhs: s.s.shape(),
            rhs: adjacency.shape(),
        });
    }
    let mask = (0..s.num_nodes()).map(|i| s.s.get(i, 0) >= threshold).collect();
    Ok(SubgraphSelection::from_mask(mask, adjacency, threshold))
}

/// Restricts a selection to its largest connected component; ties go to the
/// component containing the smallest node index.
pub fn largest_connected_part(sel: &SubgraphSelection, adjacency: &Tensor) -> Result<SubgraphSelection> {
    if sel.empty {
        return Err(GibError::contract("largest connected part of an empty selection"));
    }
    let comps = sel.components();
    // `components` is ordered by smallest member, so the first maximum wins.
    let best = comps
        .iter()
        .fold(&comps[0], |best, c| if c.len() > best.len() { c } else { best });
    let mut mask = vec![false; sel.mask.len()];
    for &v in best {
        mask[v] = true;
    }
    Ok(SubgraphSelection::from_mask(mask, adjacency, sel.threshold))
}

/// One line of a subgraph dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgraphRecord {
    pub graph_id: usize,
    pub node_mask: Vec<bool>,
    pub kept_edges: Vec<(usize, usize)>,
    pub probabilities: Vec<f64>,
}

impl SubgraphRecord {
    pub fn new(graph_id: usize, g: &Graph, sel: &SubgraphSelection, s: &NodeAssignment) -> Self {
        let kept_edges = g
            .edges()
            .iter()
            .copied()
            .filter(|&(i, j)| sel.mask[i] && sel.mask[j])
            .collect();
        SubgraphRecord {
            graph_id,
            node_mask: sel.mask.clone(),
            kept_edges,
            probabilities: s.probabilities(),
        }
    }
}
