//! Graphs, datasets and everything that produces them: the TU benchmark
//! text format, noisy-edge corruption, line-graph transforms and the
//! planted-motif generator.

mod line_graph;
mod motif;
mod noise;
mod split;
mod tu;

pub use line_graph::{to_line_graph, LineGraphPair};
pub use motif::{gen_planted_motif_dataset, motif_property, MotifConfig, MotifFeatures, MotifKind, MotifLabeling};
pub use noise::{add_noise_edges, noisy_dataset};
pub use split::Split;
pub use tu::{
    load_tu_dataset, load_tu_dataset_with, mask_sidecar_path, read_mask_sidecar, read_subgraph_dump,
    write_mask_sidecar, write_subgraph_dump, write_tu_dataset, FeatureMode, LoadOptions, Target,
};

use crate::error::{GibError, Result};
use crate::tensor::Tensor;

/// Graph-level target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Label {
    Class(usize),
    Value(f64),
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Class(c) => c as f64,
            Label::Value(v) => v,
        }
    }
}

/// Undirected simple graph with node features and a graph label.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: Tensor,
    features: Tensor,
    edges: Vec<(usize, usize)>,
    pub label: Label,
}

impl Graph {
    /// Builds a graph from an undirected edge list.
    ///
    /// Duplicate and reversed pairs collapse to one edge; self-loops and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        features: Tensor,
        label: Label,
    ) -> Result<Self> {
        if features.rows() != n {
            return Err(GibError::Dimension {
                op: "graph features",
                lhs: [n, features.cols()],
                rhs: features.shape(),
            });
        }
        let mut adjacency = Tensor::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GibError::contract(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(GibError::contract(format!("self-loop on node {i}")));
            }
            adjacency.set(i, j, 1.0);
            adjacency.set(j, i, 1.0);
        }
        Ok(Self::from_adjacency_unchecked(adjacency, features, label))
    }

    fn from_adjacency_unchecked(adjacency: Tensor, features: Tensor, label: Label) -> Self {
        let n = adjacency.rows();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if adjacency.get(i, j) != 0.0 {
                    edges.push((i, j));
                }
            }
        }
        Graph {
            adjacency,
            features,
            edges,
            label,
        }
    }

    /// Constant single-feature nodes.
    pub fn with_unit_features(n: usize, edges: &[(usize, usize)], label: Label) -> Result<Self> {
        Self::from_edges(n, edges, Tensor::ones(n, 1), label)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    /// Undirected edges `(i, j)` with `i < j`, in lexicographic order.
    ///
    /// Edge indices used by masks and line graphs refer to this order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency.get(i, j) != 0.0
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row(i).iter().filter(|&&v| v != 0.0).count()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, _)| j)
    }

    /// Subgraph induced by the nodes flagged in `mask`, relabelled in index order.
    pub fn induced(&self, mask: &[bool]) -> Result<Graph> {
        if mask.len() != self.num_nodes() {
            return Err(GibError::contract(format!(
                "mask of length {} for a graph with {} nodes",
                mask.len(),
                self.num_nodes()
            )));
        }
        let keep: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let mut position = vec![usize::MAX; mask.len()];
        for (p, &i) in keep.iter().enumerate() {
            position[i] = p;
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|(i, j)| mask[*i] && mask[*j])
            .map(|&(i, j)| (position[i], position[j]))
            .collect();
        Graph::from_edges(
            keep.len(),
            &edges,
            self.features.select_rows(&keep),
            self.label,
        )
    }

    /// Applies the node relabelling `perm` (old index `i` becomes `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes();
        let mut inverse = vec![0; n];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        let edges: Vec<(usize, usize)> =
            self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        Graph::from_edges(n, &edges, self.features.select_rows(&inverse), self.label)
    }
}

/// What a dataset's labels mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Task {
    Classification { num_classes: usize },
    Regression,
}

/// A labelled collection of graphs with a train/validation/test split.
///
/// `ground_truth`, when present, holds one index list per graph: motif node
/// indices for planted-motif data or real-edge indices (into
/// [`Graph::edges`]) for noisy-edge data.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub task: Task,
    pub split: Split,
    pub ground_truth: Option<Vec<Vec<usize>>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, task: Task) -> Result<Self> {
        if let Task::Classification { num_classes } = task {
            for (g, graph) in graphs.iter().enumerate() {
                match graph.label {
                    Label::Class(c) if c < num_classes => {}
                    other => {
                        return Err(GibError::contract(format!(
                            "graph {g} has label {other:?} outside {num_classes} classes"
                        )))
                    }
                }
            }
        }
        let split = Split::all_train(graphs.len());
        Ok(Dataset {
            name: name.into(),
            graphs,
            task,
            split,
            ground_truth: None,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map(|g| g.feature_dim()).unwrap_or(0)
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        split.validate(self.graphs.len())?;
        self.split = split;
        Ok(self)
    }

    /// Width of the model output: class count, or 1 for regression.
    pub fn output_dim(&self) -> usize {
        match self.task {
            Task::Classification { num_classes } => num_classes,
            Task::Regression => 1,
        }
    }
}
