use rand::seq::index::sample;

use super::{Dataset, Graph};
use crate::error::{GibError, Result};
use crate::rng;

/// Adds `⌈fraction·|E|⌉` edges sampled uniformly from the absent node pairs.
///
/// Returns the noisy graph and a mask over its [`Graph::edges`] that is
/// `true` for edges of the original graph.
pub fn add_noise_edges(g: &Graph, fraction: f64, seed: u64) -> Result<(Graph, Vec<bool>)> {
    if !(fraction >= 0.0) || !fraction.is_finite() {
        return Err(GibError::Config(format!("noise fraction {fraction} must be >= 0")));
    }
    // Guard against representation error such as 0.3 * 10 = 3.0000000000000004.
    let wanted = (fraction * g.num_edges() as f64 - 1e-9).ceil().max(0.0) as usize;
    let n = g.num_nodes();
    let absent: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !g.has_edge(i, j))
        .collect();
    if wanted > absent.len() {
        return Err(GibError::Generation(format!(
            "cannot add {wanted} edges: only {} node pairs are free",
            absent.len()
        )));
    }
    let mut rng = rng::stream(seed, "noise-edges");
    let mut chosen: Vec<usize> = sample(&mut rng, absent.len(), wanted).into_vec();
    chosen.sort_unstable();

    let mut edges: Vec<(usize, usize)> = g.edges().to_vec();
    edges.extend(chosen.iter().map(|&k| absent[k]));
    let noisy = Graph::from_edges(n, &edges, g.features().clone(), g.label)?;
    let real = noisy
        .edges()
        .iter()
        .map(|&(i, j)| g.has_edge(i, j))
        .collect();
    Ok((noisy, real))
}

/// Noisy copy of every graph in `dataset` (same split and labels) plus, per
/// graph, the indices into its edge list of the genuine edges.
pub fn noisy_dataset(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Vec<Vec<usize>>)> {
    let mut graphs = Vec::with_capacity(dataset.len());
    let mut real = Vec::with_capacity(dataset.len());
    for (i, g) in dataset.graphs.iter().enumerate() {
        let (noisy, mask) = add_noise_edges(g, fraction, rng::derive_seed(seed, &format!("graph-{i}")))?;
        real.push(mask.iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| k).collect());
        graphs.push(noisy);
    }
    let noisy = Dataset::new(format!("{}-noisy", dataset.name), graphs, dataset.task)?.with_split(dataset.split.clone())?;
    Ok((noisy, real))
}
