//! Metrics: accuracy, edge recall/precision for denoising, property bias and
//! component counts for interpretation, plus result tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{GibError, Result};
use crate::subgraph::{largest_connected_part, SubgraphSelection};
use crate::tensor::Tensor;

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(GibError::contract("accuracy of an empty prediction set"));
    }
    if predictions.len() != labels.len() {
        return Err(GibError::contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Edge recovery of one denoised graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoisingScore {
    /// Real edges kept over real edges.
    pub recall: f64,
    /// Real edges kept over kept edges; 0 when nothing is kept.
    pub precision: f64,
    pub kept: usize,
    pub real: usize,
    pub real_kept: usize,
    /// Set when no edge was kept.
    pub empty: bool,
}

/// Scores a line-graph node selection against the real-edge mask of the
/// noisy graph. Line node `k` stands for `edge_map[k]`, whose ground truth is
/// `real[k]`.
pub fn edge_scores(line_mask: &[bool], edge_map: &[(usize, usize)], real: &[bool]) -> Result<DenoisingScore> {
    if line_mask.len() != edge_map.len() || real.len() != edge_map.len() {
        return Err(GibError::contract(format!(
            "mask of {} line nodes, {} mapped edges, {} truth flags",
            line_mask.len(),
            edge_map.len(),
            real.len()
        )));
    }
    let kept = line_mask.iter().filter(|&&m| m).count();
    let real_n = real.iter().filter(|&&r| r).count();
    let real_kept = line_mask.iter().zip(real).filter(|&(&m, &r)| m && r).count();
    Ok(DenoisingScore {
        recall: if real_n == 0 { 1.0 } else { real_kept as f64 / real_n as f64 },
        precision: if kept == 0 { 0.0 } else { real_kept as f64 / kept as f64 },
        kept,
        real: real_n,
        real_kept,
        empty: kept == 0,
    })
}

/// `|property(G) − property(largest connected part of G_sub)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyBias {
    pub bias: f64,
    /// Set when the selection was empty and the worst case `property(G)` was used.
    pub empty: bool,
}

/// `property` maps a node mask over the whole graph to a real value.
pub fn property_bias(
    property: impl Fn(&[bool]) -> f64,
    selection: &SubgraphSelection,
    adjacency: &Tensor,
) -> Result<PropertyBias> {
    let n = selection.mask.len();
    if adjacency.shape() != [n, n] {
        return Err(GibError::Dimension {
            op: "property_bias",
            lhs: [n, n],
            rhs: adjacency.shape(),
        });
    }
    let whole = property(&vec![true; n]);
    if selection.is_empty() {
        return Ok(PropertyBias {
            bias: whole.abs(),
            empty: true,
        });
    }
    let part = largest_connected_part(selection, adjacency)?;
    Ok(PropertyBias {
        bias: (whole - property(&part.mask)).abs(),
        empty: false,
    })
}

pub fn count_components(sel: &SubgraphSelection) -> Result<usize> {
    if sel.is_empty() {
        return Err(GibError::contract("components of an empty selection"));
    }
    Ok(sel.components().len())
}

/// Aggregate interpretation quality over a set of graphs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpretationScore {
    pub bias_mean: f64,
    pub bias_var: f64,
    /// Mean component count over non-empty selections.
    pub components_per_graph: f64,
    /// Graphs whose selection was empty or contained every node.
    pub degenerate_rate: f64,
    pub empty_count: usize,
}

impl InterpretationScore {
    /// `components` holds `None` for empty selections.
    pub fn from_parts(biases: &[PropertyBias], components: &[Option<usize>], degenerate: usize) -> Result<Self> {
        if biases.is_empty() || biases.len() != components.len() {
            return Err(GibError::contract("interpretation score needs one entry per graph"));
        }
        let b: Vec<f64> = biases.iter().map(|p| p.bias).collect();
        let (m, _) = mean_std(&b);
        let var = b.iter().map(|x| (x - m).powi(2)).sum::<f64>() / b.len() as f64;
        let comps: Vec<f64> = components.iter().flatten().map(|&c| c as f64).collect();
        Ok(InterpretationScore {
            bias_mean: m,
            bias_var: var,
            components_per_graph: if comps.is_empty() { 0.0 } else { mean_std(&comps).0 },
            degenerate_rate: degenerate as f64 / biases.len() as f64,
            empty_count: biases.iter().filter(|p| p.empty).count(),
        })
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Median; the mean of the two central values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ranks starting at 1; tied values share their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(GibError::contract("correlation needs two equal series of length >= 2"));
    }
    let (ma, mb) = (mean_std(a).0, mean_std(b).0);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson(&ranks(a), &ranks(b))
}

/// A small results table rendered as CSV or aligned text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultsTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultsTable {
    pub fn new(headers: &[&str]) -> Self {
        ResultsTable {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.headers.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain([self.headers[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |cells: &[String], out: &mut String| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(&self.headers, &mut out);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        line(&rule, &mut out);
        for r in &self.rows {
            line(r, &mut out);
        }
        out
    }
}

/// `mean ± std` with three decimals, or `-` for no values.
pub fn fmt_mean_std(values: &[f64]) -> String {
    if values.is_empty() {
        return "-".into();
    }
    let (m, s) = mean_std(values);
    format!("{m:.3} ± {s:.3}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_io::{Graph, Label};

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 0], &[1, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1], &[0, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 1], &[0, 1, 1, 0]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn edge_score_cases() {
        let map: Vec<(usize, usize)> = (0..13).map(|i| (i, i + 1)).collect();
        let real: Vec<bool> = (0..13).map(|i| i < 10).collect();
        let all = edge_scores(&[true; 13], &map, &real).unwrap();
        assert_eq!((all.recall, all.precision), (1.0, 10.0 / 13.0));
        let exact = edge_scores(&real, &map, &real).unwrap();
        assert_eq!((exact.recall, exact.precision), (1.0, 1.0));
        let none = edge_scores(&[false; 13], &map, &real).unwrap();
        assert_eq!((none.recall, none.precision, none.empty), (0.0, 0.0, true));
        assert!(edge_scores(&[true; 3], &map, &real).is_err());
    }

    fn path(n: usize) -> Graph {
        let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::with_unit_features(n, &e, Label::Class(0)).unwrap()
    }

    #[test]
    fn bias_and_components() {
        let g = path(6);
        let motif = [0usize, 1, 2, 3, 4];
        let prop = |m: &[bool]| motif.iter().filter(|&&v| m[v]).count() as f64;
        let whole = SubgraphSelection::from_mask(vec![true; 6], g.adjacency(), 0.5);
        assert_eq!(property_bias(prop, &whole, g.adjacency()).unwrap().bias, 0.0);
        let four = SubgraphSelection::from_mask(vec![true, true, true, true, false, false], g.adjacency(), 0.5);
        assert_eq!(property_bias(prop, &four, g.adjacency()).unwrap().bias, 1.0);
        let empty = SubgraphSelection::from_mask(vec![false; 6], g.adjacency(), 0.5);
        let pb = property_bias(prop, &empty, g.adjacency()).unwrap();
        assert_eq!((pb.bias, pb.empty), (5.0, true));

        assert_eq!(count_components(&four).unwrap(), 1);
        let two_edges = SubgraphSelection::from_mask(vec![true, true, false, true, true, false], g.adjacency(), 0.5);
        assert_eq!(count_components(&two_edges).unwrap(), 2);
        let isolated = SubgraphSelection::from_mask(vec![true, false, true, false, true, false], g.adjacency(), 0.5);
        assert_eq!(count_components(&isolated).unwrap(), 3);
        assert!(count_components(&empty).is_err());
    }

    #[test]
    fn spearman_handles_ties_and_monotone_maps() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&a, &[10.0, 20.0, 25.0, 100.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn table_renders() {
        let mut t = ResultsTable::new(&["method", "recall"]);
        t.push(vec!["GIB".into(), "0.5".into()]);
        assert_eq!(t.to_csv(), "method,recall\nGIB,0.5\n");
        assert!(t.to_text().starts_with("method  recall\n------  ------\nGIB     0.5"));
    }
}
