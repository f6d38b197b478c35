//! Bi-level training of the subgraph generator, classifier and statistics
//! network, plus the pooling baselines it is compared against.

mod baseline;
mod config;

pub use baseline::{train_pooling, Pooling, PoolingModel, PoolingOutcome};
pub use config::{Granularity, TrainConfig};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{GibError, Result};
use crate::gnn::{self, load_checkpoint, save_checkpoint, Activation, GcnEncoder, Mlp};
use crate::graph_io::{Dataset, Label, Task};
use crate::mi::{self, InnerConfig, StatisticsNetwork};
use crate::optim::Optimizer;
use crate::rng;
use crate::subgraph::{self, NodeAssignment};
use crate::tensor::{Tape, Tensor, Var};

/// Per-graph tensors computed once before training.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub norm_adj: Tensor,
    pub adjacency: Tensor,
    pub features: Tensor,
    pub label: Label,
}

pub fn prepare(dataset: &Dataset) -> Vec<PreparedGraph> {
    dataset
        .graphs
        .iter()
        .map(|g| PreparedGraph {
            norm_adj: gnn::normalized_adjacency(g.adjacency()),
            adjacency: g.adjacency().clone(),
            features: g.features().clone(),
            label: g.label,
        })
        .collect()
}

/// Cross-entropy of softmax logits for classes, squared error for values.
pub fn classification_loss<'t>(output: Var<'t>, label: Label) -> Result<Var<'t>> {
    match label {
        Label::Class(c) => {
            let [_, k] = output.shape();
            if c >= k {
                return Err(GibError::contract(format!("label {c} outside {k} classes")));
            }
            output.logsumexp()?.sub(output.pick(0, c)?)
        }
        Label::Value(y) => {
            if output.shape() != [1, 1] {
                return Err(GibError::contract("regression output must be 1×1"));
            }
            let diff = output.add_scalar(-y);
            diff.mul(diff)
        }
    }
}

/// Loss terms of one outer update; `total = cls + beta·mi + con_weight·con`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub cls: f64,
    pub mi: f64,
    pub con: f64,
    pub beta: f64,
    pub con_weight: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_parts(cls: f64, mi: f64, con: f64, beta: f64, con_weight: f64) -> Self {
        LossBreakdown {
            cls,
            mi,
            con,
            beta,
            con_weight,
            total: cls + beta * mi + con_weight * con,
        }
    }

    pub fn recomputed_total(&self) -> f64 {
        self.cls + self.beta * self.mi + self.con_weight * self.con
    }
}

/// Generator (`encoder`, `assigner`), subgraph classifier and statistics head.
#[derive(Clone, Debug, PartialEq)]
pub struct GibModel {
    pub encoder: GcnEncoder,
    pub assigner: Mlp,
    pub classifier: Mlp,
    pub critic: StatisticsNetwork,
    pub task: Task,
}

/// Tape leaves of the three outer-loop parameter groups.
pub struct BoundGib<'t> {
    pub encoder: Vec<Var<'t>>,
    pub assigner: Vec<Var<'t>>,
    pub classifier: Vec<Var<'t>>,
}

/// Everything one graph contributes to the outer objective.
pub struct GraphPass<'t> {
    pub nodes: Var<'t>,
    pub assignment: Var<'t>,
    pub sub: Var<'t>,
    pub graph: Var<'t>,
    pub output: Var<'t>,
}

fn output_dim(task: Task) -> usize {
    match task {
        Task::Classification { num_classes } => num_classes,
        Task::Regression => 1,
    }
}

impl GibModel {
    pub fn new(config: &TrainConfig, input_dim: usize, task: Task) -> Self {
        let mut r = rng::stream(config.seed, "gib-init");
        let h = config.hidden_dim;
        let encoder = GcnEncoder::new(input_dim, &vec![h; config.gcn_layers], &mut r);
        let assigner = Mlp::new(&[h, config.mlp_hidden, 2], Activation::Relu, &mut r);
        let classifier = Mlp::new(&[h, config.mlp_hidden, output_dim(task)], Activation::Relu, &mut r);
        let critic = StatisticsNetwork::new(h, config.mlp_hidden, &mut r);
        GibModel {
            encoder,
            assigner,
            classifier,
            critic,
            task,
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundGib<'t> {
        BoundGib {
            encoder: self.encoder.params.bind(tape),
            assigner: self.assigner.params.bind(tape),
            classifier: self.classifier.params.bind(tape),
        }
    }

    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> BoundGib<'t> {
        BoundGib {
            encoder: self.encoder.params.bind_frozen(tape),
            assigner: self.assigner.params.bind_frozen(tape),
            classifier: self.classifier.params.bind_frozen(tape),
        }
    }

    pub fn forward<'t>(&self, p: &BoundGib<'t>, tape: &'t Tape, g: &PreparedGraph) -> Result<GraphPass<'t>> {
        let a = tape.constant(g.norm_adj.clone());
        let x = tape.constant(g.features.clone());
        let (nodes, s) = subgraph::assignment_forward(&self.encoder, &p.encoder, &self.assigner, &p.assigner, a, x)?;
        let sub = subgraph::subgraph_embedding(s, nodes)?;
        let graph = mi::graph_embedding(nodes)?;
        let output = self.classifier.forward(&p.classifier, sub)?;
        Ok(GraphPass {
            nodes,
            assignment: s,
            sub,
            graph,
            output,
        })
    }

    pub fn assignment(&self, g: &PreparedGraph) -> Result<NodeAssignment> {
        let tape = Tape::new();
        let p = self.bind_frozen(&tape);
        NodeAssignment::new(self.forward(&p, &tape, g)?.assignment.value())
    }

    /// Classifier output on the soft subgraph embedding.
    pub fn predict(&self, g: &PreparedGraph) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.bind_frozen(&tape);
        Ok(self.forward(&p, &tape, g)?.output.value())
    }

    /// Stacked `(graph embeddings, subgraph embeddings)` for the statistics network.
    pub fn mi_inputs(&self, graphs: &[PreparedGraph], batch: &[usize]) -> Result<(Tensor, Tensor)> {
        let tape = Tape::new();
        let p = self.bind_frozen(&tape);
        let mut gs = Vec::with_capacity(batch.len());
        let mut ss = Vec::with_capacity(batch.len());
        for &i in batch {
            let pass = self.forward(&p, &tape, &graphs[i])?;
            gs.push(pass.graph);
            ss.push(pass.sub);
        }
        Ok((Var::concat_rows(&gs)?.value(), Var::concat_rows(&ss)?.value()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(
            path,
            &[
                ("encoder", &self.encoder.params),
                ("assigner", &self.assigner.params),
                ("classifier", &self.classifier.params),
                ("critic", &self.critic.head.params),
            ],
        )
    }

    /// Rebuilds the architecture from `config` and loads weights from `path`.
    pub fn load(path: impl AsRef<Path>, config: &TrainConfig, input_dim: usize, task: Task) -> Result<Self> {
        let named = load_checkpoint(path)?;
        let mut m = GibModel::new(config, input_dim, task);
        m.encoder.params.assign("encoder", &named)?;
        m.assigner.params.assign("assigner", &named)?;
        m.classifier.params.assign("classifier", &named)?;
        m.critic.head.params.assign("critic", &named)?;
        Ok(m)
    }
}

/// Adam/SGD state for the outer-loop groups.
pub struct OuterOptimizers {
    encoder: Optimizer,
    assigner: Optimizer,
    classifier: Optimizer,
}

impl OuterOptimizers {
    pub fn new(model: &GibModel, config: &TrainConfig) -> Self {
        let o = |p| Optimizer::new(config.optimizer, config.outer_lr, p);
        OuterOptimizers {
            encoder: o(&model.encoder.params),
            assigner: o(&model.assigner.params),
            classifier: o(&model.classifier.params),
        }
    }
}

/// Outer-objective terms of one batch, recorded on the caller's tape.
pub struct OuterTerms<'t> {
    pub cls: Var<'t>,
    pub mi: Var<'t>,
    pub con: Var<'t>,
    pub total: Var<'t>,
}

impl OuterTerms<'_> {
    pub fn breakdown(&self, config: &TrainConfig) -> LossBreakdown {
        LossBreakdown {
            cls: self.cls.item(),
            mi: self.mi.item(),
            con: self.con.item(),
            beta: config.effective_beta(),
            con_weight: config.con_weight,
            total: self.total.item(),
        }
    }
}

/// `mean L_cls + β·L_MI + w·mean L_con` over `batch`, with the statistics
/// head bound as constants.
pub fn outer_objective<'t>(
    model: &GibModel,
    p: &BoundGib<'t>,
    tape: &'t Tape,
    graphs: &[PreparedGraph],
    batch: &[usize],
    config: &TrainConfig,
) -> Result<OuterTerms<'t>> {
    if batch.is_empty() {
        return Err(GibError::contract("empty batch"));
    }
    let critic_p = model.critic.head.params.bind_frozen(tape);
    let mut cls = Vec::with_capacity(batch.len());
    let mut con = Vec::with_capacity(batch.len());
    let mut gs = Vec::with_capacity(batch.len());
    let mut ss = Vec::with_capacity(batch.len());
    for &i in batch {
        let g = &graphs[i];
        let pass = model.forward(p, tape, g)?;
        cls.push(classification_loss(pass.output, g.label)?);
        con.push(subgraph::connectivity_loss(pass.assignment, tape.constant(g.adjacency.clone()))?);
        gs.push(pass.graph);
        ss.push(pass.sub);
    }
    let cls = Var::concat_rows(&cls)?.mean()?;
    let con = Var::concat_rows(&con)?.mean()?;
    let mi = if config.use_mi {
        let g = Var::concat_rows(&gs)?;
        let s = Var::concat_rows(&ss)?;
        mi::mi_batch_loss(&model.critic, &critic_p, g, s, config.marginal)?.value
    } else {
        tape.constant(Tensor::scalar(0.0))
    };
    let total = cls
        .add(mi.scale(config.effective_beta()))?
        .add(con.scale(config.con_weight))?;
    Ok(OuterTerms { cls, mi, con, total })
}

/// One descent step of the outer objective on `batch`; the statistics head
/// is read but never written.
pub fn outer_step(
    model: &mut GibModel,
    opt: &mut OuterOptimizers,
    graphs: &[PreparedGraph],
    batch: &[usize],
    config: &TrainConfig,
    step: usize,
) -> Result<LossBreakdown> {
    #[cfg(debug_assertions)]
    let critic_before = model.critic.clone();

    let tape = Tape::new();
    let p = model.bind(&tape);
    let terms = outer_objective(model, &p, &tape, graphs, batch, config)?;
    let breakdown = terms.breakdown(config);
    let abort = |what| GibError::NonFinite {
        what,
        phase: "outer step",
        step,
        trace: vec![breakdown.cls, breakdown.mi, breakdown.con, breakdown.total],
    };
    if !breakdown.total.is_finite() {
        return Err(abort("total loss"));
    }
    let grads = tape.backward(terms.total)?;
    let ge = model.encoder.params.gradients(&p.encoder, &grads);
    let ga = model.assigner.params.gradients(&p.assigner, &grads);
    let gc = model.classifier.params.gradients(&p.classifier, &grads);
    if ge.iter().chain(&ga).chain(&gc).any(|g| !g.is_finite()) {
        return Err(abort("gradient"));
    }
    opt.encoder.step(&mut model.encoder.params, &ge)?;
    opt.assigner.step(&mut model.assigner.params, &ga)?;
    opt.classifier.step(&mut model.classifier.params, &gc)?;

    #[cfg(debug_assertions)]
    debug_assert!(model.critic == critic_before, "outer step touched the statistics head");
    Ok(breakdown)
}

/// Shuffles `indices` and chunks them; a trailing batch of one joins the
/// previous batch so every batch has marginal pairs.
pub fn make_batches<R: rand::Rng + ?Sized>(indices: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

/// Accuracy for classification, negated mean squared error for regression.
/// Higher is better in both cases.
pub fn default_metric(task: Task, outputs: &[Tensor], labels: &[Label]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(GibError::contract("metric over no graphs"));
    }
    match task {
        Task::Classification { .. } => {
            let preds: Vec<usize> = outputs.iter().map(argmax).collect();
            let truth: Vec<usize> = labels
                .iter()
                .map(|l| match l {
                    Label::Class(c) => *c,
                    Label::Value(_) => usize::MAX,
                })
                .collect();
            crate::eval::accuracy(&preds, &truth)
        }
        Task::Regression => {
            let se: f64 = outputs
                .iter()
                .zip(labels)
                .map(|(o, l)| (o.item() - l.as_f64()).powi(2))
                .sum();
            Ok(-se / outputs.len() as f64)
        }
    }
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(t: &Tensor) -> usize {
    let d = t.data();
    (0..d.len()).fold(0, |best, i| if d[i] > d[best] { i } else { best })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    /// Model-selection metric on the validation split (higher is better).
    pub val_metric: f64,
}

/// Result of [`train`]: the best-validation model and the full history.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: GibModel,
    pub best_epoch: usize,
    pub best_val: f64,
    pub history: Vec<EpochRecord>,
    /// `(epoch, loss)` of every outer update in order.
    pub steps: Vec<(usize, LossBreakdown)>,
    /// `(outer update index, final inner DV estimate)` per inner loop.
    pub mi_trace: Vec<(usize, f64)>,
}

impl TrainOutcome {
    /// One row per outer update; `val_metric` is filled on the last update
    /// of each epoch.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,outer_step,l_cls,l_mi,l_con,total,val_metric\n");
        for (k, (epoch, l)) in self.steps.iter().enumerate() {
            let epoch_end = self.steps.get(k + 1).is_none_or(|(next, _)| next != epoch);
            let val = match self.history.get(*epoch) {
                Some(r) if epoch_end => r.val_metric.to_string(),
                _ => String::new(),
            };
            let _ = writeln!(out, "{epoch},{k},{},{},{},{},{val}", l.cls, l.mi, l.con, l.total);
        }
        out
    }

    pub fn mi_trace_csv(&self) -> String {
        let mut out = String::from("step,l_mi\n");
        for (s, v) in &self.mi_trace {
            let _ = writeln!(out, "{s},{v}");
        }
        out
    }

    /// Writes `checkpoint.txt`, `metrics.csv` and `mi_trace.csv` into `dir`.
    pub fn write_artifacts(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| GibError::io(dir, e))?;
        self.model.save(dir.join("checkpoint.txt"))?;
        for (name, body) in [("metrics.csv", self.metrics_csv()), ("mi_trace.csv", self.mi_trace_csv())] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| GibError::io(&p, e))?;
        }
        Ok(())
    }
}

/// Model-selection score of a candidate on the validation indices; higher is
/// better.
pub type Selector<'a> = dyn Fn(&GibModel, &[PreparedGraph], &[usize]) -> Result<f64> + 'a;

pub fn validation_metric(model: &GibModel, graphs: &[PreparedGraph], idx: &[usize]) -> Result<f64> {
    let outputs = idx.iter().map(|&i| model.predict(&graphs[i])).collect::<Result<Vec<_>>>()?;
    let labels: Vec<Label> = idx.iter().map(|&i| graphs[i].label).collect();
    default_metric(model.task, &outputs, &labels)
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, config, &validation_metric)
}

/// Alternates inner maximisation of the DV estimate over a freshly drawn
/// statistics head with outer descent on the generator and classifier, and
/// keeps the parameters with the best `select` score.
pub fn train_with(dataset: &Dataset, config: &TrainConfig, select: &Selector<'_>) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.split.train.is_empty() {
        return Err(GibError::contract("training split is empty"));
    }
    let graphs = prepare(dataset);
    let val_idx: &[usize] = if dataset.split.val.is_empty() {
        &dataset.split.train
    } else {
        &dataset.split.val
    };
    let mut model = GibModel::new(config, dataset.feature_dim(), dataset.task);
    let mut opt = OuterOptimizers::new(&model, config);
    let mut shuffle_rng = rng::stream(config.seed, "batches");
    let mut critic_rng = rng::stream(config.seed, "critic-reinit");
    let inner = InnerConfig {
        steps: config.inner_steps,
        lr: config.inner_lr,
        optimizer: config.optimizer,
        pairing: config.marginal,
    };
    let (h, mh) = (config.hidden_dim, config.mlp_hidden);

    let mut history = Vec::new();
    let mut steps = Vec::new();
    let mut mi_trace = Vec::new();
    let mut best = (model.clone(), 0usize, f64::NEG_INFINITY);
    let mut stale = 0usize;
    let mut update = 0usize;

    for epoch in 0..config.epochs {
        let batches = make_batches(&dataset.split.train, config.batch_size, &mut shuffle_rng);
        if config.use_mi && config.granularity == Granularity::Epoch {
            model.critic = StatisticsNetwork::new(h, mh, &mut critic_rng);
            let inputs = batches
                .iter()
                .map(|b| model.mi_inputs(&graphs, b))
                .collect::<Result<Vec<_>>>()?;
            let trace = mi::inner_maximize(&mut model.critic, &inputs, &inner)?;
            mi_trace.push((update, *trace.last().unwrap()));
        }
        let mut sums = [0.0; 3];
        for b in &batches {
            if config.use_mi && config.granularity == Granularity::Batch {
                model.critic = StatisticsNetwork::new(h, mh, &mut critic_rng);
                let inputs = [model.mi_inputs(&graphs, b)?];
                let trace = mi::inner_maximize(&mut model.critic, &inputs, &inner)?;
                mi_trace.push((update, *trace.last().unwrap()));
            }
            let l = outer_step(&mut model, &mut opt, &graphs, b, config, update)?;
            sums[0] += l.cls;
            sums[1] += l.mi;
            sums[2] += l.con;
            steps.push((epoch, l));
            update += 1;
        }
        let k = batches.len() as f64;
        let loss = LossBreakdown::from_parts(
            sums[0] / k,
            sums[1] / k,
            sums[2] / k,
            config.effective_beta(),
            config.con_weight,
        );
        let val_metric = select(&model, &graphs, val_idx)?;
        history.push(EpochRecord {
            epoch,
            loss,
            val_metric,
        });
        // Ties move the checkpoint to the later epoch; only strict gains reset patience.
        if val_metric > best.2 {
            stale = 0;
        } else {
            stale += 1;
        }
        if val_metric >= best.2 {
            best = (model.clone(), epoch, val_metric);
        }
        if config.patience > 0 && stale >= config.patience {
            break;
        }
    }
    let (model, best_epoch, best_val) = best;
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_val,
        history,
        steps,
        mi_trace,
    })
}
