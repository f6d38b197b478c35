//! GCN baselines with mean or self-attentive pooling.

use super::{classification_loss, default_metric, make_batches, prepare, PreparedGraph, TrainConfig};
use crate::error::{GibError, Result};
use crate::gnn::{Activation, AttentionHead, GcnEncoder, Mlp, ParamSet};
use crate::graph_io::{Dataset, Label, Task};
use crate::optim::Optimizer;
use crate::rng;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub enum Pooling {
    Mean,
    Attention(AttentionHead),
}

/// Encoder, graph-level pooling and classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolingModel {
    pub encoder: GcnEncoder,
    pub pooling: Pooling,
    pub classifier: Mlp,
    pub task: Task,
}

impl PoolingModel {
    pub fn new(config: &TrainConfig, input_dim: usize, task: Task, attention: bool) -> Self {
        let label = if attention { "attention-init" } else { "mean-pool-init" };
        let mut r = rng::stream(config.seed, label);
        let h = config.hidden_dim;
        let encoder = GcnEncoder::new(input_dim, &vec![h; config.gcn_layers], &mut r);
        let pooling = if attention {
            Pooling::Attention(AttentionHead::new(h, config.mlp_hidden, &mut r))
        } else {
            Pooling::Mean
        };
        let out = match task {
            Task::Classification { num_classes } => num_classes,
            Task::Regression => 1,
        };
        let classifier = Mlp::new(&[h, config.mlp_hidden, out], Activation::Relu, &mut r);
        PoolingModel {
            encoder,
            pooling,
            classifier,
            task,
        }
    }

    fn groups_mut(&mut self) -> Vec<&mut ParamSet> {
        let mut g = vec![&mut self.encoder.params, &mut self.classifier.params];
        if let Pooling::Attention(a) = &mut self.pooling {
            g.push(&mut a.params);
        }
        g
    }

    fn groups(&self) -> Vec<&ParamSet> {
        let mut g = vec![&self.encoder.params, &self.classifier.params];
        if let Pooling::Attention(a) = &self.pooling {
            g.push(&a.params);
        }
        g
    }

    /// Output and attention scores (attention pooling only). With `mask`,
    /// pooling reads only the selected nodes of the full-graph embeddings.
    fn forward<'t>(
        &self,
        params: &[Vec<Var<'t>>],
        tape: &'t Tape,
        g: &PreparedGraph,
        mask: Option<&[bool]>,
    ) -> Result<(Var<'t>, Option<Var<'t>>)> {
        let a = tape.constant(g.norm_adj.clone());
        let x = tape.constant(g.features.clone());
        let mut nodes = self.encoder.forward(&params[0], a, x)?;
        if let Some(mask) = mask {
            let keep: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            if keep.is_empty() {
                return Err(GibError::contract("pooling over an empty selection"));
            }
            nodes = nodes.select_rows(&keep)?;
        }
        let (pooled, scores) = match &self.pooling {
            Pooling::Mean => (nodes.mean_rows()?, None),
            Pooling::Attention(head) => {
                let (e, s) = head.forward(&params[2], nodes)?;
                (e, Some(s))
            }
        };
        Ok((self.classifier.forward(&params[1], pooled)?, scores))
    }

    fn bind_frozen<'t>(&self, tape: &'t Tape) -> Vec<Vec<Var<'t>>> {
        self.groups().iter().map(|p| p.bind_frozen(tape)).collect()
    }

    pub fn predict(&self, g: &PreparedGraph) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.bind_frozen(&tape);
        Ok(self.forward(&p, &tape, g, None)?.0.value())
    }

    /// Output when pooling reads only the nodes in `mask`.
    pub fn predict_on_selection(&self, g: &PreparedGraph, mask: &[bool]) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.bind_frozen(&tape);
        Ok(self.forward(&p, &tape, g, Some(mask))?.0.value())
    }

    /// Per-node attention scores; `None` for mean pooling.
    pub fn attention_scores(&self, g: &PreparedGraph) -> Result<Option<Vec<f64>>> {
        let tape = Tape::new();
        let p = self.bind_frozen(&tape);
        Ok(self.forward(&p, &tape, g, None)?.1.map(|s| s.value().into_data()))
    }
}

#[derive(Clone, Debug)]
pub struct PoolingOutcome {
    pub model: PoolingModel,
    pub best_epoch: usize,
    pub best_val: f64,
    /// `(epoch, mean training loss, validation metric)`.
    pub history: Vec<(usize, f64, f64)>,
}

/// Trains a pooling baseline on the classification loss alone, with the
/// batching, optimiser and early-stopping settings of `config`.
pub fn train_pooling(dataset: &Dataset, config: &TrainConfig, attention: bool) -> Result<PoolingOutcome> {
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
    let mut model = PoolingModel::new(config, dataset.feature_dim(), dataset.task, attention);
    let mut opts: Vec<Optimizer> = model
        .groups()
        .iter()
        .map(|p| Optimizer::new(config.optimizer, config.outer_lr, p))
        .collect();
    let mut shuffle_rng = rng::stream(config.seed, "baseline-batches");
    let mut history = Vec::new();
    let mut best = (model.clone(), 0usize, f64::NEG_INFINITY);
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        let batches = make_batches(&dataset.split.train, config.batch_size, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (step, b) in batches.iter().enumerate() {
            let tape = Tape::new();
            let params: Vec<Vec<Var>> = model.groups().iter().map(|p| p.bind(&tape)).collect();
            let mut losses = Vec::with_capacity(b.len());
            for &i in b {
                let (out, _) = model.forward(&params, &tape, &graphs[i], None)?;
                losses.push(classification_loss(out, graphs[i].label)?);
            }
            let loss = Var::concat_rows(&losses)?.mean()?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(GibError::NonFinite {
                    what: "classification loss",
                    phase: "baseline training",
                    step,
                    trace: vec![value],
                });
            }
            loss_sum += value;
            let grads = tape.backward(loss)?;
            let per_group: Vec<Vec<Tensor>> = model
                .groups()
                .iter()
                .zip(&params)
                .map(|(g, p)| g.gradients(p, &grads))
                .collect();
            for ((group, opt), g) in model.groups_mut().into_iter().zip(&mut opts).zip(&per_group) {
                opt.step(group, g)?;
            }
        }
        let outputs = val_idx
            .iter()
            .map(|&i| model.predict(&graphs[i]))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<Label> = val_idx.iter().map(|&i| graphs[i].label).collect();
        let val = default_metric(model.task, &outputs, &labels)?;
        history.push((epoch, loss_sum / batches.len() as f64, val));
        if val > best.2 {
            stale = 0;
        } else {
            stale += 1;
        }
        if val >= best.2 {
            best = (model.clone(), epoch, val);
        }
        if config.patience > 0 && stale >= config.patience {
            break;
        }
    }
    Ok(PoolingOutcome {
        model: best.0,
        best_epoch: best.1,
        best_val: best.2,
        history,
    })
}
