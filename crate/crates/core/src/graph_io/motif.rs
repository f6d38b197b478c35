//! Synthetic graphs with a planted motif that alone determines the label.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Graph, Label, Task};
use crate::error::{GibError, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotifKind {
    Clique,
    Cycle,
}

impl MotifKind {
    fn edges(self, nodes: &[usize]) -> Vec<(usize, usize)> {
        let k = nodes.len();
        match self {
            MotifKind::Clique => (0..k)
                .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
                .map(|(a, b)| (nodes[a], nodes[b]))
                .collect(),
            MotifKind::Cycle => (0..k).map(|a| (nodes[a], nodes[(a + 1) % k])).collect(),
        }
    }

    fn min_size(self) -> usize {
        match self {
            MotifKind::Clique => 2,
            MotifKind::Cycle => 3,
        }
    }
}

/// How the target is derived from the planted motif.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MotifLabeling {
    /// Class `c` plants `kinds[c]` with `size` nodes; classes are balanced.
    ByKind { kinds: Vec<MotifKind>, size: usize },
    /// Continuous target equal to the motif size plus `U(-noise, noise)`.
    BySize {
        kind: MotifKind,
        min_size: usize,
        max_size: usize,
        noise: f64,
    },
}

/// Node features of generated graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotifFeatures {
    /// A single constant 1; the encoder then only sees degree through the
    /// normalised adjacency and node embeddings stay rank one.
    Constant,
    /// One-hot of `min(degree, max_degree)`.
    DegreeOneHot { max_degree: usize },
}

impl Default for MotifFeatures {
    fn default() -> Self {
        MotifFeatures::DegreeOneHot { max_degree: 6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotifConfig {
    pub num_graphs: usize,
    pub labeling: MotifLabeling,
    /// Inclusive range of background node counts.
    pub background_min: usize,
    pub background_max: usize,
    /// Probability of each extra background edge on top of a random spanning tree.
    pub edge_prob: f64,
    /// Edges joining the motif to the background.
    pub attach_edges: usize,
    pub features: MotifFeatures,
    pub seed: u64,
}

impl Default for MotifConfig {
    fn default() -> Self {
        MotifConfig {
            num_graphs: 200,
            labeling: MotifLabeling::ByKind {
                kinds: vec![MotifKind::Clique, MotifKind::Cycle],
                size: 5,
            },
            background_min: 15,
            background_max: 25,
            edge_prob: 0.05,
            attach_edges: 2,
            features: MotifFeatures::default(),
            seed: 0,
        }
    }
}

impl MotifConfig {
    /// Continuous target: a `kind` motif of 3 to 8 nodes, target = size ± 0.25.
    pub fn continuous(kind: MotifKind, seed: u64) -> Self {
        MotifConfig {
            labeling: MotifLabeling::BySize {
                kind,
                min_size: kind.min_size().max(3),
                max_size: 8,
                noise: 0.25,
            },
            seed,
            ..MotifConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let err = |m: String| Err(GibError::Config(m));
        if self.num_graphs == 0 {
            return err("num_graphs must be positive".into());
        }
        if self.background_min == 0 || self.background_min > self.background_max {
            return err(format!(
                "background range [{}, {}] is empty",
                self.background_min, self.background_max
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return err(format!("edge_prob {} outside [0, 1]", self.edge_prob));
        }
        let (kinds, max_size): (Vec<MotifKind>, usize) = match &self.labeling {
            MotifLabeling::ByKind { kinds, size } => {
                if kinds.len() < 2 {
                    return err("classification needs at least two motif kinds".into());
                }
                (kinds.clone(), *size)
            }
            MotifLabeling::BySize {
                kind,
                min_size,
                max_size,
                noise,
            } => {
                if min_size > max_size || !(*noise >= 0.0) {
                    return err(format!(
                        "bad size range [{min_size}, {max_size}] or noise {noise}"
                    ));
                }
                for s in *min_size..=*max_size {
                    if s < kind.min_size() {
                        return err(format!("{kind:?} motif of size {s} is degenerate"));
                    }
                }
                (vec![*kind], *max_size)
            }
        };
        if let MotifLabeling::ByKind { size, .. } = &self.labeling {
            if kinds.iter().any(|k| *size < k.min_size()) {
                return err(format!("motif size {size} too small for {kinds:?}"));
            }
        }
        if max_size > self.background_min {
            return err(format!(
                "motif of {max_size} nodes is larger than the smallest background ({})",
                self.background_min
            ));
        }
        if self.attach_edges == 0 {
            return err("attach_edges must be at least 1".into());
        }
        Ok(())
    }
}

/// Generates a planted-motif dataset; `ground_truth` holds the motif node
/// indices of every graph. Labels are classes for [`MotifLabeling::ByKind`]
/// and continuous for [`MotifLabeling::BySize`].
pub fn gen_planted_motif_dataset(config: &MotifConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, "planted-motif");
    let mut graphs = Vec::with_capacity(config.num_graphs);
    let mut masks = Vec::with_capacity(config.num_graphs);

    for g in 0..config.num_graphs {
        let (kind, size, label) = match &config.labeling {
            MotifLabeling::ByKind { kinds, size } => {
                let c = g % kinds.len();
                (kinds[c], *size, Label::Class(c))
            }
            MotifLabeling::BySize {
                kind,
                min_size,
                max_size,
                noise,
            } => {
                let s = rng.random_range(*min_size..=*max_size);
                let jitter = if *noise > 0.0 {
                    rng.random_range(-*noise..=*noise)
                } else {
                    0.0
                };
                (*kind, s, Label::Value(s as f64 + jitter))
            }
        };
        let background = rng.random_range(config.background_min..=config.background_max);
        let n = background + size;

        // Background occupies slots 0..background, the motif the rest; a
        // random relabelling scatters them afterwards.
        let mut edges = Vec::new();
        for v in 1..background {
            edges.push((rng.random_range(0..v), v));
        }
        for i in 0..background {
            for j in i + 1..background {
                if rng.random_bool(config.edge_prob) {
                    edges.push((i, j));
                }
            }
        }
        let motif_slots: Vec<usize> = (background..n).collect();
        edges.extend(kind.edges(&motif_slots));
        for _ in 0..config.attach_edges {
            let m = motif_slots[rng.random_range(0..size)];
            let b = rng.random_range(0..background);
            edges.push((m, b));
        }

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let edges: Vec<(usize, usize)> = edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        let mut motif: Vec<usize> = motif_slots.iter().map(|&s| perm[s]).collect();
        motif.sort_unstable();

        let plain = Graph::from_edges(n, &edges, Tensor::ones(n, 1), label)?;
        graphs.push(match config.features {
            MotifFeatures::Constant => plain,
            MotifFeatures::DegreeOneHot { max_degree } => {
                let mut x = Tensor::zeros(n, max_degree + 1);
                for v in 0..n {
                    x.set(v, plain.degree(v).min(max_degree), 1.0);
                }
                Graph::from_edges(n, plain.edges(), x, label)?
            }
        });
        masks.push(motif);
    }

    let task = match &config.labeling {
        MotifLabeling::ByKind { kinds, .. } => Task::Classification {
            num_classes: kinds.len(),
        },
        MotifLabeling::BySize { .. } => Task::Regression,
    };
    let mut ds = Dataset::new("planted-motif", graphs, task)?;
    ds.ground_truth = Some(masks);
    Ok(ds)
}

/// Size of the largest planted-motif structure inside a node selection,
/// read off the construction mask: any subset of a clique is a clique, while
/// a cycle only counts when every one of its nodes is kept.
pub fn motif_property(kind: MotifKind, motif_nodes: &[usize], selected: &[bool]) -> f64 {
    let kept = motif_nodes.iter().filter(|&&v| selected[v]).count();
    match kind {
        MotifKind::Clique => kept as f64,
        MotifKind::Cycle if kept == motif_nodes.len() => kept as f64,
        MotifKind::Cycle => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> MotifConfig {
        MotifConfig {
            num_graphs: 100,
            ..MotifConfig::default()
        }
    }

    #[test]
    fn binary_dataset_with_five_node_masks() {
        let ds = gen_planted_motif_dataset(&config()).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.task, Task::Classification { num_classes: 2 });
        let masks = ds.ground_truth.as_ref().unwrap();
        for (g, m) in ds.graphs.iter().zip(masks) {
            assert_eq!(m.len(), 5);
            let bg = g.num_nodes() - 5;
            assert!((15..=25).contains(&bg));
            let internal = m
                .iter()
                .flat_map(|&a| m.iter().map(move |&b| (a, b)))
                .filter(|&(a, b)| a < b && g.has_edge(a, b))
                .count();
            match g.label {
                Label::Class(0) => assert_eq!(internal, 10),
                Label::Class(1) => assert_eq!(internal, 5),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn degree_features_match_adjacency() {
        let ds = gen_planted_motif_dataset(&config()).unwrap();
        for g in &ds.graphs {
            assert_eq!(g.feature_dim(), 7);
            for v in 0..g.num_nodes() {
                assert_eq!(g.features().get(v, g.degree(v).min(6)), 1.0);
                assert_eq!((0..7).map(|c| g.features().get(v, c)).sum::<f64>(), 1.0);
            }
        }
        let flat = gen_planted_motif_dataset(&MotifConfig {
            features: MotifFeatures::Constant,
            ..config()
        })
        .unwrap();
        assert_eq!(flat.feature_dim(), 1);
        assert_eq!(flat.graphs[0].edges(), ds.graphs[0].edges());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = gen_planted_motif_dataset(&config()).unwrap();
        let b = gen_planted_motif_dataset(&config()).unwrap();
        assert_eq!(a.graphs, b.graphs);
        assert_eq!(a.ground_truth, b.ground_truth);
    }

    #[test]
    fn continuous_property_matches_mask_size() {
        let cfg = MotifConfig {
            num_graphs: 30,
            labeling: MotifLabeling::BySize {
                kind: MotifKind::Clique,
                min_size: 3,
                max_size: 7,
                noise: 0.0,
            },
            ..MotifConfig::default()
        };
        let ds = gen_planted_motif_dataset(&cfg).unwrap();
        for (g, m) in ds.graphs.iter().zip(ds.ground_truth.as_ref().unwrap()) {
            assert_eq!(g.label, Label::Value(m.len() as f64));
        }
    }

    #[test]
    fn oversized_motif_is_rejected() {
        let cfg = MotifConfig {
            labeling: MotifLabeling::ByKind {
                kinds: vec![MotifKind::Clique, MotifKind::Cycle],
                size: 30,
            },
            ..MotifConfig::default()
        };
        assert!(matches!(
            gen_planted_motif_dataset(&cfg),
            Err(GibError::Config(_))
        ));
    }

    #[test]
    fn property_counts_clique_nodes() {
        let motif = [1, 2, 3, 4, 5];
        let mut sel = vec![false; 8];
        for &v in &motif[..4] {
            sel[v] = true;
        }
        assert_eq!(motif_property(MotifKind::Clique, &motif, &sel), 4.0);
        assert_eq!(motif_property(MotifKind::Cycle, &motif, &sel), 0.0);
    }
}
