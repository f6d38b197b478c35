//! End-to-end experiment drivers shared by the command line and the
//! acceptance suite: motif recovery, edge denoising and interpretation with
//! ablations.

use serde::{Deserialize, Serialize};

use crate::error::{GibError, Result};
use crate::eval::{self, fmt_mean_std, DenoisingScore, InterpretationScore, ResultsTable};
use crate::gnn::topk_subgraph_from_scores;
use crate::graph_io::{motif_property, to_line_graph, Dataset, Label, MotifKind, Split, Task};
use crate::subgraph::{discretize, NodeAssignment, SubgraphRecord, SubgraphSelection};
use crate::trainer::{
    self, default_metric, prepare, train, train_pooling, train_with, GibModel, PoolingModel, PreparedGraph,
    TrainConfig,
};

/// Fraction of motif nodes inside the selection.
pub fn motif_recall(mask: &[bool], motif: &[usize]) -> f64 {
    if motif.is_empty() {
        return 1.0;
    }
    motif.iter().filter(|&&v| mask[v]).count() as f64 / motif.len() as f64
}

/// Discretised subgraph of every graph in `idx`.
pub fn gib_selections(
    model: &GibModel,
    graphs: &[PreparedGraph],
    idx: &[usize],
    threshold: f64,
) -> Result<Vec<(NodeAssignment, SubgraphSelection)>> {
    idx.iter()
        .map(|&i| {
            let s = model.assignment(&graphs[i])?;
            let sel = discretize(&s, &graphs[i].adjacency, threshold)?;
            Ok((s, sel))
        })
        .collect()
}

/// Top-`keep` attention selection of every graph in `idx`.
pub fn attention_selections(
    model: &PoolingModel,
    graphs: &[PreparedGraph],
    idx: &[usize],
    keep: f64,
) -> Result<Vec<Vec<bool>>> {
    idx.iter()
        .map(|&i| {
            let scores = model
                .attention_scores(&graphs[i])?
                .ok_or_else(|| GibError::contract("attention selection needs an attention model"))?;
            topk_subgraph_from_scores(&scores, keep)
        })
        .collect()
}

fn labels_of(graphs: &[PreparedGraph], idx: &[usize]) -> Vec<Label> {
    idx.iter().map(|&i| graphs[i].label).collect()
}

fn is_degenerate(sel: &SubgraphSelection) -> bool {
    sel.is_empty() || sel.mask.iter().all(|&m| m)
}

/// Outcome of one motif-recovery run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotifRecoveryReport {
    pub gib_accuracy: f64,
    pub gib_recall: f64,
    pub gib_degenerate_rate: f64,
    pub att05_accuracy: f64,
    pub att05_recall: f64,
}

/// Trains GIB and the attention baseline on a classification dataset with
/// motif ground truth and scores both on the test split.
pub fn motif_recovery(dataset: &Dataset, config: &TrainConfig) -> Result<MotifRecoveryReport> {
    let truth = dataset
        .ground_truth
        .as_ref()
        .ok_or_else(|| GibError::contract("motif recovery needs ground-truth motifs"))?;
    let graphs = prepare(dataset);
    let test = &dataset.split.test;
    if test.is_empty() {
        return Err(GibError::contract("motif recovery needs a test split"));
    }
    let labels = labels_of(&graphs, test);

    let gib = train(dataset, config)?.model;
    let outputs = test.iter().map(|&i| gib.predict(&graphs[i])).collect::<Result<Vec<_>>>()?;
    let sels = gib_selections(&gib, &graphs, test, config.threshold)?;
    let gib_recall = mean(test.iter().zip(&sels).map(|(&i, (_, s))| motif_recall(&s.mask, &truth[i])));
    let degenerate = sels.iter().filter(|(_, s)| is_degenerate(s)).count();

    let att = train_pooling(dataset, config, true)?.model;
    let att_out = test.iter().map(|&i| att.predict(&graphs[i])).collect::<Result<Vec<_>>>()?;
    let att_sel = attention_selections(&att, &graphs, test, 0.5)?;
    let att05_recall = mean(test.iter().zip(&att_sel).map(|(&i, m)| motif_recall(m, &truth[i])));

    Ok(MotifRecoveryReport {
        gib_accuracy: default_metric(dataset.task, &outputs, &labels)?,
        gib_recall,
        gib_degenerate_rate: degenerate as f64 / test.len() as f64,
        att05_accuracy: default_metric(dataset.task, &att_out, &labels)?,
        att05_recall,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Line-graph view of a noisy dataset: line node `k` of graph `g` is edge
/// `k` of the noisy graph and `real[g][k]` says whether it is genuine.
#[derive(Clone, Debug)]
pub struct DenoiseSetup {
    pub noisy: Dataset,
    pub lines: Dataset,
    pub edge_maps: Vec<Vec<(usize, usize)>>,
    pub real: Vec<Vec<bool>>,
}

/// `real_edges[g]` lists indices into `noisy.graphs[g].edges()` of genuine edges.
pub fn prepare_denoise(noisy: &Dataset, real_edges: &[Vec<usize>]) -> Result<DenoiseSetup> {
    if real_edges.len() != noisy.len() {
        return Err(GibError::contract(format!(
            "{} real-edge lists for {} graphs",
            real_edges.len(),
            noisy.len()
        )));
    }
    let mut lines = Vec::with_capacity(noisy.len());
    let mut edge_maps = Vec::with_capacity(noisy.len());
    let mut real = Vec::with_capacity(noisy.len());
    for (g, idx) in noisy.graphs.iter().zip(real_edges) {
        let lg = to_line_graph(g)?;
        let mut mask = vec![false; g.num_edges()];
        for &k in idx {
            *mask
                .get_mut(k)
                .ok_or_else(|| GibError::contract(format!("real edge index {k} out of range")))? = true;
        }
        lines.push(lg.line);
        edge_maps.push(lg.edge_map);
        real.push(mask);
    }
    let lines = Dataset::new(format!("{}-line", noisy.name), lines, noisy.task)?.with_split(noisy.split.clone())?;
    Ok(DenoiseSetup {
        noisy: noisy.clone(),
        lines,
        edge_maps,
        real,
    })
}

/// One method's denoising result on the test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiseRow {
    pub method: String,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    /// Test graphs whose selection kept no edge.
    pub empty: usize,
}

fn structure_row(method: &str, scores: &[DenoisingScore], accuracy: Option<f64>) -> DenoiseRow {
    DenoiseRow {
        method: method.into(),
        recall: Some(mean(scores.iter().map(|s| s.recall))),
        precision: Some(mean(scores.iter().map(|s| s.precision))),
        accuracy,
        empty: scores.iter().filter(|s| s.empty).count(),
    }
}

/// GCN, keep-all, Att05, Att07 and GIB rows for one seed.
pub fn run_denoise(setup: &DenoiseSetup, config: &TrainConfig) -> Result<Vec<DenoiseRow>> {
    let test = &setup.lines.split.test;
    if test.is_empty() {
        return Err(GibError::contract("denoising needs a test split"));
    }
    let lines = prepare(&setup.lines);
    let labels = labels_of(&lines, test);
    let score = |masks: &[Vec<bool>]| -> Result<Vec<DenoisingScore>> {
        test.iter()
            .zip(masks)
            .map(|(&i, m)| eval::edge_scores(m, &setup.edge_maps[i], &setup.real[i]))
            .collect()
    };
    let mut rows = Vec::new();

    let noisy = prepare(&setup.noisy);
    let gcn = train_pooling(&setup.noisy, config, false)?.model;
    let gcn_out = test.iter().map(|&i| gcn.predict(&noisy[i])).collect::<Result<Vec<_>>>()?;
    rows.push(DenoiseRow {
        method: "GCN".into(),
        recall: None,
        precision: None,
        accuracy: Some(default_metric(setup.noisy.task, &gcn_out, &labels)?),
        empty: 0,
    });

    let keep_all: Vec<Vec<bool>> = test.iter().map(|&i| vec![true; setup.edge_maps[i].len()]).collect();
    rows.push(structure_row("Keep-all", &score(&keep_all)?, None));

    let att = train_pooling(&setup.lines, config, true)?.model;
    for (name, keep) in [("GCN+Att05", 0.5), ("GCN+Att07", 0.7)] {
        let masks = attention_selections(&att, &lines, test, keep)?;
        let out = test
            .iter()
            .zip(&masks)
            .map(|(&i, m)| att.predict_on_selection(&lines[i], m))
            .collect::<Result<Vec<_>>>()?;
        let acc = default_metric(setup.lines.task, &out, &labels)?;
        rows.push(structure_row(name, &score(&masks)?, Some(acc)));
    }

    let gib = train(&setup.lines, config)?.model;
    let sels = gib_selections(&gib, &lines, test, config.threshold)?;
    let masks: Vec<Vec<bool>> = sels.into_iter().map(|(_, s)| s.mask).collect();
    let out = test.iter().map(|&i| gib.predict(&lines[i])).collect::<Result<Vec<_>>>()?;
    let acc = default_metric(setup.lines.task, &out, &labels)?;
    rows.push(structure_row("GCN+GIB", &score(&masks)?, Some(acc)));
    Ok(rows)
}

/// Aggregates per-seed rows into `mean ± std` columns.
pub fn denoise_table(per_seed: &[Vec<DenoiseRow>]) -> ResultsTable {
    let mut t = ResultsTable::new(&["method", "recall", "precision", "acc", "empty"]);
    let Some(first) = per_seed.first() else { return t };
    for (r, row) in first.iter().enumerate() {
        let col = |f: &dyn Fn(&DenoiseRow) -> Option<f64>| -> Vec<f64> {
            per_seed.iter().filter_map(|rows| f(&rows[r])).collect()
        };
        let empty: usize = per_seed.iter().map(|rows| rows[r].empty).sum();
        t.push(vec![
            row.method.clone(),
            fmt_mean_std(&col(&|x| x.recall)),
            fmt_mean_std(&col(&|x| x.precision)),
            fmt_mean_std(&col(&|x| x.accuracy)),
            empty.to_string(),
        ]);
    }
    t
}

/// Which objective terms an interpretation run keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub con: bool,
    pub mi: bool,
}

impl Variant {
    pub const FULL: Variant = Variant { con: true, mi: true };

    pub fn name(self) -> &'static str {
        match (self.con, self.mi) {
            (true, true) => "GCN+GIB",
            (false, true) => "GCN+GIB w/o L_con",
            (true, false) => "GCN+GIB w/o L_MI",
            (false, false) => "GCN+GIB w/o L_con, L_MI",
        }
    }

    pub fn apply(self, config: &TrainConfig) -> TrainConfig {
        TrainConfig {
            con_weight: if self.con { config.con_weight } else { 0.0 },
            use_mi: self.mi && config.use_mi,
            ..config.clone()
        }
    }
}

/// One method's interpretation result on the test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpretRow {
    pub method: String,
    pub score: InterpretationScore,
}

fn interpretation_score(
    kind: MotifKind,
    truth: &[Vec<usize>],
    graphs: &[PreparedGraph],
    idx: &[usize],
    masks: &[Vec<bool>],
    threshold: f64,
) -> Result<InterpretationScore> {
    let mut biases = Vec::with_capacity(idx.len());
    let mut comps = Vec::with_capacity(idx.len());
    let mut degenerate = 0;
    for (&i, m) in idx.iter().zip(masks) {
        let sel = SubgraphSelection::from_mask(m.clone(), &graphs[i].adjacency, threshold);
        let motif = &truth[i];
        biases.push(eval::property_bias(|mask| motif_property(kind, motif, mask), &sel, &graphs[i].adjacency)?);
        comps.push(if sel.is_empty() { None } else { Some(eval::count_components(&sel)?) });
        degenerate += usize::from(is_degenerate(&sel));
    }
    InterpretationScore::from_parts(&biases, &comps, degenerate)
}

/// Mean property bias over `idx`, negated so that higher is better.
fn bias_selector(kind: MotifKind, truth: &[Vec<usize>], threshold: f64) -> impl Fn(&GibModel, &[PreparedGraph], &[usize]) -> Result<f64> + '_ {
    move |model, graphs, idx| {
        let sels = gib_selections(model, graphs, idx, threshold)?;
        let masks: Vec<Vec<bool>> = sels.into_iter().map(|(_, s)| s.mask).collect();
        let score = interpretation_score(kind, truth, graphs, idx, &masks, threshold)?;
        Ok(-score.bias_mean)
    }
}

/// Output of [`run_interpret`] for one seed.
#[derive(Clone, Debug)]
pub struct InterpretOutcome {
    pub rows: Vec<InterpretRow>,
    /// Test-split subgraphs of the first variant.
    pub records: Vec<SubgraphRecord>,
}

/// Trains every variant on a continuous planted-motif dataset and scores the
/// test split; attention rows use top-50% and top-70% node selections.
pub fn run_interpret(
    dataset: &Dataset,
    kind: MotifKind,
    config: &TrainConfig,
    variants: &[Variant],
    attention_rows: bool,
) -> Result<InterpretOutcome> {
    if dataset.task != Task::Regression {
        return Err(GibError::Config(format!(
            "interpretation needs a continuous target, {} is categorical",
            dataset.name
        )));
    }
    let truth = dataset
        .ground_truth
        .as_ref()
        .ok_or_else(|| GibError::contract("interpretation needs ground-truth motifs"))?;
    let graphs = prepare(dataset);
    let test = &dataset.split.test;
    if test.is_empty() {
        return Err(GibError::contract("interpretation needs a test split"));
    }
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (v, variant) in variants.iter().enumerate() {
        let cfg = variant.apply(config);
        let select = bias_selector(kind, truth, cfg.threshold);
        let model = train_with(dataset, &cfg, &select)?.model;
        let sels = gib_selections(&model, &graphs, test, cfg.threshold)?;
        if v == 0 {
            for (&i, (s, sel)) in test.iter().zip(&sels) {
                records.push(SubgraphRecord::new(i, &dataset.graphs[i], sel, s));
            }
        }
        let masks: Vec<Vec<bool>> = sels.into_iter().map(|(_, s)| s.mask).collect();
        rows.push(InterpretRow {
            method: variant.name().into(),
            score: interpretation_score(kind, truth, &graphs, test, &masks, cfg.threshold)?,
        });
    }
    if attention_rows {
        let att = train_pooling(dataset, config, true)?.model;
        for (name, keep) in [("GCN+Att05", 0.5), ("GCN+Att07", 0.7)] {
            let masks = attention_selections(&att, &graphs, test, keep)?;
            rows.push(InterpretRow {
                method: name.into(),
                score: interpretation_score(kind, truth, &graphs, test, &masks, config.threshold)?,
            });
        }
    }
    Ok(InterpretOutcome { rows, records })
}

/// Aggregates per-seed rows into the property-bias and component columns.
pub fn interpret_table(per_seed: &[Vec<InterpretRow>]) -> ResultsTable {
    let mut t = ResultsTable::new(&["method", "property_bias", "components_per_graph", "degenerate_rate", "empty"]);
    let Some(first) = per_seed.first() else { return t };
    for (r, row) in first.iter().enumerate() {
        let col = |f: &dyn Fn(&InterpretationScore) -> f64| -> Vec<f64> {
            per_seed.iter().map(|rows| f(&rows[r].score)).collect()
        };
        let empty: usize = per_seed.iter().map(|rows| rows[r].score.empty_count).sum();
        t.push(vec![
            row.method.clone(),
            fmt_mean_std(&col(&|s| s.bias_mean)),
            fmt_mean_std(&col(&|s| s.components_per_graph)),
            fmt_mean_std(&col(&|s| s.degenerate_rate)),
            empty.to_string(),
        ]);
    }
    t
}

/// Per-fold test accuracy of GIB under k-fold cross-validation.
pub fn cross_validate(dataset: &Dataset, config: &TrainConfig, folds: usize) -> Result<Vec<f64>> {
    (0..folds)
        .map(|f| {
            let split = Split::kfold(dataset.len(), folds, f, config.seed)?;
            let ds = dataset.clone().with_split(split)?;
            let model = train(&ds, config)?.model;
            let graphs = prepare(&ds);
            trainer::validation_metric(&model, &graphs, &ds.split.test)
        })
        .collect()
}
