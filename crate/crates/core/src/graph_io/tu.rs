//! TU Dortmund benchmark text format.
//!
//! `<name>_A.txt` holds one `row, col` pair per line (1-based global node
//! ids), `<name>_graph_indicator.txt` maps each node to its 1-based graph,
//! `<name>_graph_labels.txt` has one class per graph. Node labels, node
//! attributes and graph attributes (continuous targets) are optional.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Graph, Label, Task};
use crate::error::{GibError, Result};
use crate::subgraph::SubgraphRecord;
use crate::tensor::Tensor;

/// How node features are built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeatureMode {
    /// One-hot node labels if the file exists, else node attributes, else a
    /// constant 1.
    #[default]
    Auto,
    /// A single constant feature.
    Constant,
    /// One-hot of `min(degree, max_degree)`.
    DegreeOneHot { max_degree: usize },
}

/// Which file supplies the graph target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Target {
    /// `<name>_graph_labels.txt`, remapped to contiguous class ids.
    #[default]
    Categorical,
    /// First column of `<name>_graph_attributes.txt`.
    Continuous,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub features: FeatureMode,
    pub target: Target,
}

fn file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| GibError::io(path, e))?;
    Ok(text.lines().map(|l| l.trim().to_string()).collect())
}

fn read_optional(path: &Path) -> Result<Option<Vec<String>>> {
    if path.exists() {
        read_lines(path).map(Some)
    } else {
        Ok(None)
    }
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| GibError::Parse {
        path: path.to_path_buf(),
        line,
        detail: format!("cannot parse {s:?}"),
    })
}

/// Non-empty lines with their 1-based line numbers.
fn numbered(lines: &[String]) -> impl Iterator<Item = (usize, &str)> {
    lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 1, l.as_str()))
}

pub fn load_tu_dataset(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    load_tu_dataset_with(dir, name, LoadOptions::default())
}

pub fn load_tu_dataset_with(
    dir: impl AsRef<Path>,
    name: &str,
    options: LoadOptions,
) -> Result<Dataset> {
    let dir = dir.as_ref();
    let ind_path = file(dir, name, "graph_indicator");
    let a_path = file(dir, name, "A");

    let indicator_lines = read_lines(&ind_path)?;
    let mut node_graph = Vec::new();
    for (line, text) in numbered(&indicator_lines) {
        let g: usize = parse_num(&ind_path, line, text)?;
        if g == 0 {
            return Err(GibError::Parse {
                path: ind_path.clone(),
                line,
                detail: "graph ids are 1-based".into(),
            });
        }
        node_graph.push(g - 1);
    }
    let num_graphs = node_graph.iter().max().map(|m| m + 1).unwrap_or(0);

    // Position of each global node inside its graph.
    let mut sizes = vec![0usize; num_graphs];
    let mut local = Vec::with_capacity(node_graph.len());
    for &g in &node_graph {
        local.push(sizes[g]);
        sizes[g] += 1;
    }

    let mut edges: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); num_graphs];
    for (line, text) in numbered(&read_lines(&a_path)?) {
        let mut parts = text.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(GibError::Parse {
                path: a_path.clone(),
                line,
                detail: format!("expected `row, col`, got {text:?}"),
            });
        };
        let a: usize = parse_num(&a_path, line, a)?;
        let b: usize = parse_num(&a_path, line, b)?;
        let out_of_range = |v: usize| v == 0 || v > node_graph.len();
        if out_of_range(a) || out_of_range(b) {
            return Err(GibError::Parse {
                path: a_path.clone(),
                line,
                detail: format!(
                    "node index out of range in edge {a},{b} ({} nodes)",
                    node_graph.len()
                ),
            });
        }
        let (a, b) = (a - 1, b - 1);
        if node_graph[a] != node_graph[b] {
            return Err(GibError::Parse {
                path: a_path.clone(),
                line,
                detail: format!("edge {},{} joins two different graphs", a + 1, b + 1),
            });
        }
        if a != b {
            let (i, j) = (local[a].min(local[b]), local[a].max(local[b]));
            edges[node_graph[a]].insert((i, j));
        }
    }

    let labels = match options.target {
        Target::Categorical => {
            let path = file(dir, name, "graph_labels");
            let mut raw = Vec::new();
            for (line, text) in numbered(&read_lines(&path)?) {
                raw.push(parse_num::<i64>(&path, line, text)?);
            }
            check_count(&path, raw.len(), num_graphs)?;
            let distinct: BTreeMap<i64, usize> = raw
                .iter()
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(k, v)| (v, k))
                .collect();
            raw.iter().map(|v| Label::Class(distinct[v])).collect::<Vec<_>>()
        }
        Target::Continuous => {
            let path = file(dir, name, "graph_attributes");
            let mut values = Vec::new();
            for (line, text) in numbered(&read_lines(&path)?) {
                let first = text.split(',').next().unwrap_or("");
                values.push(Label::Value(parse_num(&path, line, first)?));
            }
            check_count(&path, values.len(), num_graphs)?;
            values
        }
    };
    let task = match options.target {
        Target::Categorical => Task::Classification {
            num_classes: labels
                .iter()
                .map(|l| match l {
                    Label::Class(c) => c + 1,
                    Label::Value(_) => 0,
                })
                .max()
                .unwrap_or(0),
        },
        Target::Continuous => Task::Regression,
    };

    let features = node_features(dir, name, options.features, &node_graph, &edges, &local)?;

    let mut graphs = Vec::with_capacity(num_graphs);
    let mut start = 0;
    for g in 0..num_graphs {
        let n = sizes[g];
        // Nodes of one graph are contiguous in the TU format.
        let rows: Vec<usize> = (start..start + n).collect();
        if rows.iter().any(|&r| node_graph[r] != g) {
            return Err(GibError::Parse {
                path: ind_path.clone(),
                line: start + 1,
                detail: format!("nodes of graph {} are not contiguous", g + 1),
            });
        }
        start += n;
        let edge_list: Vec<(usize, usize)> = edges[g].iter().copied().collect();
        graphs.push(Graph::from_edges(
            n,
            &edge_list,
            features.select_rows(&rows),
            labels[g],
        )?);
    }
    Dataset::new(name, graphs, task)
}

fn check_count(path: &Path, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(GibError::Parse {
            path: path.to_path_buf(),
            line: got.min(want) + 1,
            detail: format!("expected {want} graph entries, found {got}"),
        });
    }
    Ok(())
}

fn node_features(
    dir: &Path,
    name: &str,
    mode: FeatureMode,
    node_graph: &[usize],
    edges: &[BTreeSet<(usize, usize)>],
    local: &[usize],
) -> Result<Tensor> {
    let n = node_graph.len();
    match mode {
        FeatureMode::Constant => Ok(Tensor::ones(n, 1)),
        FeatureMode::DegreeOneHot { max_degree } => {
            let mut degree: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for (g, es) in edges.iter().enumerate() {
                for &(i, j) in es {
                    *degree.entry((g, i)).or_default() += 1;
                    *degree.entry((g, j)).or_default() += 1;
                }
            }
            let mut t = Tensor::zeros(n, max_degree + 1);
            for v in 0..n {
                let d = degree.get(&(node_graph[v], local[v])).copied().unwrap_or(0);
                t.set(v, d.min(max_degree), 1.0);
            }
            Ok(t)
        }
        FeatureMode::Auto => {
            let labels_path = file(dir, name, "node_labels");
            if let Some(lines) = read_optional(&labels_path)? {
                let mut raw = Vec::with_capacity(n);
                for (line, text) in numbered(&lines) {
                    let first = text.split(',').next().unwrap_or("");
                    raw.push(parse_num::<i64>(&labels_path, line, first)?);
                }
                if raw.len() != n {
                    return Err(GibError::Parse {
                        path: labels_path,
                        line: raw.len().min(n) + 1,
                        detail: format!("expected {n} node labels, found {}", raw.len()),
                    });
                }
                let vocab: BTreeMap<i64, usize> = raw
                    .iter()
                    .copied()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .enumerate()
                    .map(|(k, v)| (v, k))
                    .collect();
                let mut t = Tensor::zeros(n, vocab.len());
                for (v, l) in raw.iter().enumerate() {
                    t.set(v, vocab[l], 1.0);
                }
                return Ok(t);
            }
            let attr_path = file(dir, name, "node_attributes");
            if let Some(lines) = read_optional(&attr_path)? {
                let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
                for (line, text) in numbered(&lines) {
                    let row = text
                        .split(',')
                        .map(|s| parse_num(&attr_path, line, s))
                        .collect::<Result<Vec<f64>>>()?;
                    if rows.first().is_some_and(|r| r.len() != row.len()) {
                        return Err(GibError::Parse {
                            path: attr_path,
                            line,
                            detail: "ragged node attributes".into(),
                        });
                    }
                    rows.push(row);
                }
                if rows.len() != n {
                    return Err(GibError::Parse {
                        path: attr_path,
                        line: rows.len().min(n) + 1,
                        detail: format!("expected {n} attribute rows, found {}", rows.len()),
                    });
                }
                return Ok(Tensor::from_rows(&rows));
            }
            Ok(Tensor::ones(n, 1))
        }
    }
}

fn write_file(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| GibError::io(path, e))
}

/// Writes `dataset` in TU format.
///
/// One-hot features become `node_labels`, a constant single feature is
/// omitted, anything else goes to `node_attributes`. Regression targets are
/// written to `graph_attributes` (with all-zero `graph_labels` beside them).
pub fn write_tu_dataset(dir: impl AsRef<Path>, name: &str, dataset: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| GibError::io(dir, e))?;
    let mut a = String::new();
    let mut indicator = String::new();
    let mut labels = String::new();
    let mut attributes = String::new();
    let mut node_labels = String::new();
    let mut node_attrs = String::new();

    let one_hot = dataset.graphs.iter().all(|g| {
        (0..g.num_nodes()).all(|i| {
            let row = g.features().row(i);
            row.iter().filter(|&&v| v == 1.0).count() == 1
                && row.iter().all(|&v| v == 0.0 || v == 1.0)
        })
    });
    let constant = dataset.feature_dim() == 1
        && dataset
            .graphs
            .iter()
            .all(|g| g.features().data().iter().all(|&v| v == 1.0));

    let mut offset = 0;
    for (gi, g) in dataset.graphs.iter().enumerate() {
        for &(i, j) in g.edges() {
            let _ = writeln!(a, "{}, {}", offset + i + 1, offset + j + 1);
            let _ = writeln!(a, "{}, {}", offset + j + 1, offset + i + 1);
        }
        for v in 0..g.num_nodes() {
            let _ = writeln!(indicator, "{}", gi + 1);
            let row = g.features().row(v);
            if one_hot && !constant {
                let k = row.iter().position(|&x| x == 1.0).unwrap_or(0);
                let _ = writeln!(node_labels, "{k}");
            } else if !constant {
                let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(node_attrs, "{}", cells.join(", "));
            }
        }
        match g.label {
            Label::Class(c) => {
                let _ = writeln!(labels, "{c}");
            }
            Label::Value(v) => {
                let _ = writeln!(labels, "0");
                let _ = writeln!(attributes, "{v}");
            }
        }
        offset += g.num_nodes();
    }

    write_file(file(dir, name, "A"), &a)?;
    write_file(file(dir, name, "graph_indicator"), &indicator)?;
    write_file(file(dir, name, "graph_labels"), &labels)?;
    if !attributes.is_empty() {
        write_file(file(dir, name, "graph_attributes"), &attributes)?;
    }
    if !node_labels.is_empty() {
        write_file(file(dir, name, "node_labels"), &node_labels)?;
    }
    if !node_attrs.is_empty() {
        write_file(file(dir, name, "node_attributes"), &node_attrs)?;
    }
    Ok(())
}

/// Path of the ground-truth sidecar written next to a TU dataset.
pub fn mask_sidecar_path(dir: &Path, name: &str) -> PathBuf {
    file(dir, name, "ground_truth")
}

/// One line per graph: comma-separated ground-truth indices (possibly empty).
pub fn write_mask_sidecar(dir: impl AsRef<Path>, name: &str, masks: &[Vec<usize>]) -> Result<()> {
    let mut text = String::new();
    for m in masks {
        let cells: Vec<String> = m.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(text, "{}", cells.join(","));
    }
    write_file(mask_sidecar_path(dir.as_ref(), name), &text)
}

pub fn read_mask_sidecar(dir: impl AsRef<Path>, name: &str) -> Result<Vec<Vec<usize>>> {
    let path = mask_sidecar_path(dir.as_ref(), name);
    let text = fs::read_to_string(&path).map_err(|e| GibError::io(&path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_num(&path, i + 1, s))
                .collect()
        })
        .collect()
}

/// Writes one JSON object per line.
pub fn write_subgraph_dump(path: impl AsRef<Path>, records: &[SubgraphRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| GibError::contract(e.to_string()))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| GibError::io(path, e))
}

/// Parses a JSON-lines subgraph dump.
pub fn read_subgraph_dump(path: impl AsRef<Path>) -> Result<Vec<SubgraphRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| GibError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| GibError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, suffix: &str, text: &str) {
        fs::write(file(dir, name, suffix), text).unwrap();
    }

    #[test]
    fn out_of_range_edge_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "graph_indicator", "1\n1\n1\n1\n");
        write(dir.path(), "T", "graph_labels", "1\n");
        write(dir.path(), "T", "A", "1, 2\n2, 1\n5, 1\n");
        let err = load_tu_dataset(dir.path(), "T").unwrap_err();
        match err {
            GibError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "graph_indicator", "1\n");
        let err = load_tu_dataset(dir.path(), "T").unwrap_err().to_string();
        assert!(err.contains("T_A.txt"), "{err}");
    }

    #[test]
    fn labels_remapped_and_features_one_hot() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "graph_indicator", "1\n1\n2\n2\n2\n");
        write(dir.path(), "T", "graph_labels", "-1\n1\n");
        write(dir.path(), "T", "node_labels", "3\n7\n3\n3\n7\n");
        write(dir.path(), "T", "A", "1, 2\n2, 1\n3, 4\n4, 5\n");
        let ds = load_tu_dataset(dir.path(), "T").unwrap();
        assert_eq!(ds.task, Task::Classification { num_classes: 2 });
        assert_eq!(ds.graphs[0].label, Label::Class(0));
        assert_eq!(ds.graphs[1].label, Label::Class(1));
        assert_eq!(ds.graphs[1].edges(), &[(0, 1), (1, 2)]);
        assert_eq!(ds.graphs[1].features().row(2), &[0.0, 1.0]);
    }

    #[test]
    fn degree_features() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "graph_indicator", "1\n1\n1\n");
        write(dir.path(), "T", "graph_labels", "0\n");
        write(dir.path(), "T", "A", "1, 2\n1, 3\n");
        let opts = LoadOptions {
            features: FeatureMode::DegreeOneHot { max_degree: 1 },
            ..Default::default()
        };
        let ds = load_tu_dataset_with(dir.path(), "T", opts).unwrap();
        assert_eq!(ds.graphs[0].features().row(0), &[0.0, 1.0]);
        assert_eq!(ds.graphs[0].features().row(1), &[0.0, 1.0]);
    }
}
