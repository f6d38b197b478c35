use super::Graph;
use crate::error::{GibError, Result};
use crate::tensor::Tensor;

/// A graph together with its line graph.
#[derive(Clone, Debug)]
pub struct LineGraphPair {
    pub original: Graph,
    pub line: Graph,
    /// `edge_map[k]` is the original edge represented by line node `k`.
    pub edge_map: Vec<(usize, usize)>,
}

/// Builds the line graph: one node per original edge, adjacent when the two
/// edges share an endpoint. Line-node features are the sum of the endpoint
/// features; the label is carried over.
pub fn to_line_graph(g: &Graph) -> Result<LineGraphPair> {
    if g.num_edges() == 0 {
        return Err(GibError::contract("line graph of an edgeless graph"));
    }
    let edge_map = g.edges().to_vec();
    let m = edge_map.len();

    // Edges incident to each node, then connect every pair of them.
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); g.num_nodes()];
    for (k, &(i, j)) in edge_map.iter().enumerate() {
        incident[i].push(k);
        incident[j].push(k);
    }
    let mut line_edges = Vec::new();
    for inc in &incident {
        for (p, &a) in inc.iter().enumerate() {
            for &b in &inc[p + 1..] {
                line_edges.push((a, b));
            }
        }
    }

    let d = g.feature_dim();
    let x = g.features();
    let mut features = Tensor::zeros(m, d);
    for (k, &(i, j)) in edge_map.iter().enumerate() {
        for c in 0..d {
            features.set(k, c, x.get(i, c) + x.get(j, c));
        }
    }
    let line = Graph::from_edges(m, &line_edges, features, g.label)?;
    Ok(LineGraphPair {
        original: g.clone(),
        line,
        edge_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_io::Label;

    fn unit(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::with_unit_features(n, edges, Label::Class(0)).unwrap()
    }

    #[test]
    fn triangle_is_self_line_graph() {
        let lg = to_line_graph(&unit(3, &[(0, 1), (1, 2), (0, 2)])).unwrap();
        assert_eq!(lg.line.num_nodes(), 3);
        assert_eq!(lg.line.num_edges(), 3);
    }

    #[test]
    fn path_of_three_gives_single_edge() {
        let lg = to_line_graph(&unit(3, &[(0, 1), (1, 2)])).unwrap();
        assert_eq!(lg.line.num_nodes(), 2);
        assert_eq!(lg.line.edges(), &[(0, 1)]);
    }

    #[test]
    fn star_gives_k4() {
        let lg = to_line_graph(&unit(5, &[(0, 1), (0, 2), (0, 3), (0, 4)])).unwrap();
        assert_eq!(lg.line.num_nodes(), 4);
        assert_eq!(lg.line.num_edges(), 6);
    }

    #[test]
    fn features_sum_endpoints() {
        let g = Graph::from_edges(
            2,
            &[(0, 1)],
            Tensor::from_rows(&[[1.0, 0.0], [0.0, 2.0]]),
            Label::Class(1),
        )
        .unwrap();
        let lg = to_line_graph(&g).unwrap();
        assert_eq!(lg.line.features().row(0), &[1.0, 2.0]);
        assert_eq!(lg.line.label, Label::Class(1));
    }

    #[test]
    fn edgeless_is_rejected() {
        assert!(to_line_graph(&unit(3, &[])).is_err());
    }
}
