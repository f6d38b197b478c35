//! Central finite-difference gradient checks shared by the gradient suite
//! and the acceptance target.

#![allow(dead_code)]

use gib_core::gnn::{gcn_forward, normalized_adjacency, Activation, AttentionHead, Mlp};
use gib_core::graph_io::{Dataset, Graph, Label, Task};
use gib_core::mi::{mi_batch_loss, MarginalPairing, StatisticsNetwork};
use gib_core::subgraph::{connectivity_loss, subgraph_embedding};
use gib_core::trainer::{classification_loss, outer_objective, prepare, BoundGib, GibModel, TrainConfig};
use gib_core::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const INSTANCES: usize = 100;

/// Builds a scalar loss from leaves bound to the check inputs.
pub type LossFn = Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>>;

/// One random instance: the inputs to differentiate and the loss over them.
pub struct Instance {
    pub inputs: Vec<Tensor>,
    pub loss: LossFn,
}

/// Norm-wise relative error `‖g_tape − g_fd‖ / max(‖g_tape‖, ‖g_fd‖, 1e-6)`
/// over every scalar of every input. The floor keeps an exactly-zero gradient
/// from being compared against finite-difference round-off.
pub fn relative_error(inst: &Instance) -> f64 {
    let tape = Tape::new();
    let vars: Vec<Var> = inst.inputs.iter().map(|t| tape.var(t.clone())).collect();
    let loss = (inst.loss)(&tape, &vars);
    assert_eq!(loss.shape(), [1, 1], "loss must be scalar");
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<f64> = vars.iter().flat_map(|&v| grads.wrt(v).into_data()).collect();

    let eval = |inputs: &[Tensor]| {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        (inst.loss)(&tape, &vars).item()
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = inst.inputs.clone();
    for i in 0..probe.len() {
        for k in 0..probe[i].len() {
            let orig = probe[i].data()[k];
            probe[i].data_mut()[k] = orig + STEP;
            let up = eval(&probe);
            probe[i].data_mut()[k] = orig - STEP;
            let down = eval(&probe);
            probe[i].data_mut()[k] = orig;
            numeric.push((up - down) / (2.0 * STEP));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    if std::env::var_os("GRADCHECK_DEBUG").is_some() {
        for (a, n) in analytic.iter().zip(&numeric) {
            eprintln!("{a:+.6e} {n:+.6e}");
        }
    }
    norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-6)
}

/// Worst relative error over `INSTANCES` draws of `make`.
pub fn worst_error(name: &str, make: &dyn Fn(&mut ChaCha8Rng) -> Instance) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(name.bytes().fold(17u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64)));
    (0..INSTANCES)
        .map(|_| relative_error(&make(&mut rng)))
        .fold(0.0, f64::max)
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..=4), rng.random_range(1..=4))
}

pub fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::new(r, c, (0..r * c).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Entries with `|x| ∈ [0.1, 2)` and random sign, clear of kinks at zero.
fn away_from_zero(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    let mut t = uniform(rng, r, c, 0.1, 2.0);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// Contracts a non-scalar output with fixed random weights.
fn weighted_sum<'t>(out: Var<'t>, weights: &Tensor) -> Var<'t> {
    out.mul(out.tape().constant(weights.clone())).unwrap().sum().unwrap()
}

fn unary(
    rng: &mut ChaCha8Rng,
    input: impl Fn(&mut ChaCha8Rng, usize, usize) -> Tensor,
    op: impl Fn(Var<'_>) -> Var<'_> + 'static,
) -> Instance {
    let (r, c) = dims(rng);
    let x = input(rng, r, c);
    let probe = Tape::new();
    let [or, oc] = op(probe.constant(x.clone())).shape();
    let w = uniform(rng, or, oc, -1.0, 1.0);
    Instance {
        inputs: vec![x],
        loss: Box::new(move |_, v| weighted_sum(op(v[0]), &w)),
    }
}

/// Binary elementwise op with `b` shaped as the full shape, a row or a scalar.
fn binary(rng: &mut ChaCha8Rng, positive_b: bool, op: for<'t> fn(Var<'t>, Var<'t>) -> Var<'t>) -> Instance {
    let (r, c) = dims(rng);
    let a = uniform(rng, r, c, -2.0, 2.0);
    let (br, bc) = match rng.random_range(0..3) {
        0 => (r, c),
        1 => (1, c),
        _ => (1, 1),
    };
    let b = if positive_b {
        away_from_zero(rng, br, bc)
    } else {
        uniform(rng, br, bc, -2.0, 2.0)
    };
    let w = uniform(rng, r, c, -1.0, 1.0);
    Instance {
        inputs: vec![a, b],
        loss: Box::new(move |_, v| weighted_sum(op(v[0], v[1]), &w)),
    }
}

/// Every differentiable tape operation, each as an instance generator.
pub fn op_cases() -> Vec<(&'static str, Box<dyn Fn(&mut ChaCha8Rng) -> Instance>)> {
    let any = |rng: &mut ChaCha8Rng, r, c| uniform(rng, r, c, -2.0, 2.0);
    let positive = |rng: &mut ChaCha8Rng, r, c| uniform(rng, r, c, 0.2, 2.0);
    vec![
        ("matmul", Box::new(|rng: &mut ChaCha8Rng| {
            let (r, k) = dims(rng);
            let c = rng.random_range(1..=4);
            let a = uniform(rng, r, k, -2.0, 2.0);
            let b = uniform(rng, k, c, -2.0, 2.0);
            let w = uniform(rng, r, c, -1.0, 1.0);
            Instance {
                inputs: vec![a, b],
                loss: Box::new(move |_, v| weighted_sum(v[0].matmul(v[1]).unwrap(), &w)),
            }
        })),
        ("add", Box::new(|rng: &mut ChaCha8Rng| binary(rng, false, |a, b| a.add(b).unwrap()))),
        ("sub", Box::new(|rng: &mut ChaCha8Rng| binary(rng, false, |a, b| a.sub(b).unwrap()))),
        ("mul", Box::new(|rng: &mut ChaCha8Rng| binary(rng, false, |a, b| a.mul(b).unwrap()))),
        ("div", Box::new(|rng: &mut ChaCha8Rng| binary(rng, true, |a, b| a.div(b).unwrap()))),
        ("transpose", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.transpose()))),
        ("scale", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.scale(-1.7)))),
        ("neg", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.neg()))),
        ("add_scalar", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.add_scalar(0.3)))),
        ("relu", Box::new(|rng: &mut ChaCha8Rng| unary(rng, away_from_zero, |x| x.relu()))),
        ("tanh", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.tanh()))),
        ("exp", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.exp()))),
        ("log", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, positive, |x| x.log().unwrap()))),
        ("row_softmax", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.row_softmax()))),
        ("sum", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.sum().unwrap()))),
        ("mean", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.mean().unwrap()))),
        ("frobenius_norm", Box::new(|rng: &mut ChaCha8Rng| unary(rng, away_from_zero, |x| x.frobenius_norm().unwrap()))),
        ("logsumexp", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.logsumexp().unwrap()))),
        ("log_mean_exp", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.log_mean_exp().unwrap()))),
        ("sum_rows", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.sum_rows()))),
        ("mean_rows", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.mean_rows().unwrap()))),
        ("sum_cols", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| x.sum_cols()))),
        ("row_l1_normalize", Box::new(|rng: &mut ChaCha8Rng| unary(rng, away_from_zero, |x| x.row_l1_normalize()))),
        ("row", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| {
            let r = x.shape()[0] - 1;
            x.row(r).unwrap()
        }))),
        ("col", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| {
            let c = x.shape()[1] - 1;
            x.col(c).unwrap()
        }))),
        ("pick", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| {
            let [r, c] = x.shape();
            x.pick(r / 2, c - 1).unwrap()
        }))),
        ("select_rows", Box::new(move |rng: &mut ChaCha8Rng| unary(rng, any, |x| {
            let r = x.shape()[0];
            x.select_rows(&[r - 1, 0, r - 1]).unwrap()
        }))),
        ("concat_cols", Box::new(|rng: &mut ChaCha8Rng| {
            let (r, c) = dims(rng);
            let d = rng.random_range(1..=3);
            let a = uniform(rng, r, c, -2.0, 2.0);
            let b = uniform(rng, r, d, -2.0, 2.0);
            let w = uniform(rng, r, c + d, -1.0, 1.0);
            Instance {
                inputs: vec![a, b],
                loss: Box::new(move |_, v| weighted_sum(v[0].concat_cols(v[1]).unwrap(), &w)),
            }
        })),
        ("concat_rows", Box::new(|rng: &mut ChaCha8Rng| {
            let (r, c) = dims(rng);
            let d = rng.random_range(1..=3);
            let a = uniform(rng, r, c, -2.0, 2.0);
            let b = uniform(rng, d, c, -2.0, 2.0);
            let w = uniform(rng, r + d, c, -1.0, 1.0);
            Instance {
                inputs: vec![a, b],
                loss: Box::new(move |_, v| weighted_sum(Var::concat_rows(&[v[0], v[1]]).unwrap(), &w)),
            }
        })),
    ]
}

/// Random undirected graph on `n` nodes with at least one edge.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, feature_dim: usize, label: Label) -> Graph {
    let mut edges = vec![(0, 1)];
    for i in 0..n {
        for j in i + 1..n {
            if (i, j) != (0, 1) && rng.random_bool(0.4) {
                edges.push((i, j));
            }
        }
    }
    let x = uniform(rng, n, feature_dim, 0.0, 1.0);
    Graph::from_edges(n, &edges, x, label).unwrap()
}

fn small_config(rng: &mut ChaCha8Rng) -> TrainConfig {
    TrainConfig {
        hidden_dim: 4,
        mlp_hidden: 5,
        gcn_layers: 2,
        beta: rng.random_range(0.05..1.0),
        con_weight: rng.random_range(0.5..2.0),
        seed: rng.random(),
        ..TrainConfig::default()
    }
}

fn gib_batch(rng: &mut ChaCha8Rng, task: Task) -> (GibModel, Vec<gib_core::trainer::PreparedGraph>, TrainConfig) {
    let config = small_config(rng);
    let graphs: Vec<Graph> = (0..3)
        .map(|_| {
            let label = match task {
                Task::Classification { num_classes } => Label::Class(rng.random_range(0..num_classes)),
                Task::Regression => Label::Value(rng.random_range(-2.0..2.0)),
            };
            let n = rng.random_range(3..=6);
            random_graph(rng, n, 3, label)
        })
        .collect();
    let ds = Dataset::new("gradcheck", graphs, task).unwrap();
    (GibModel::new(&config, 3, task), prepare(&ds), config)
}

/// Model parameters as check inputs. Biases are redrawn from zero so that
/// dead encoder outputs do not park hidden units exactly on the ReLU kink.
fn model_inputs(rng: &mut ChaCha8Rng, model: &GibModel) -> (Vec<Tensor>, [usize; 2]) {
    let e = model.encoder.params.values().to_vec();
    let mut redraw = |p: &gib_core::gnn::ParamSet| -> Vec<Tensor> {
        p.names()
            .iter()
            .zip(p.values())
            .map(|(name, t)| {
                if name.starts_with('b') {
                    away_from_zero(rng, t.rows(), t.cols()).map(|v| v / 4.0)
                } else {
                    t.clone()
                }
            })
            .collect()
    };
    let a = redraw(&model.assigner.params);
    let c = redraw(&model.classifier.params);
    let cut = [e.len(), e.len() + a.len()];
    (e.into_iter().chain(a).chain(c).collect(), cut)
}

fn bound<'t>(v: &[Var<'t>], cut: [usize; 2]) -> BoundGib<'t> {
    BoundGib {
        encoder: v[..cut[0]].to_vec(),
        assigner: v[cut[0]..cut[1]].to_vec(),
        classifier: v[cut[1]..].to_vec(),
    }
}

/// Model building blocks and the composite losses of the objective.
pub fn composite_cases() -> Vec<(&'static str, Box<dyn Fn(&mut ChaCha8Rng) -> Instance>)> {
    vec![
        ("gcn_layer", Box::new(|rng: &mut ChaCha8Rng| {
            let n = rng.random_range(2..=6);
            let g = random_graph(rng, n, 3, Label::Class(0));
            let a = normalized_adjacency(g.adjacency());
            let x = uniform(rng, n, 3, -1.0, 1.0);
            let w = uniform(rng, 3, 4, -1.0, 1.0);
            let out = uniform(rng, n, 4, -1.0, 1.0);
            Instance {
                inputs: vec![x, w],
                loss: Box::new(move |t, v| weighted_sum(gcn_forward(t.constant(a.clone()), v[0], v[1]).unwrap(), &out)),
            }
        })),
        ("mlp", Box::new(|rng: &mut ChaCha8Rng| {
            let mlp = Mlp::new(&[3, 5, 2], Activation::Tanh, rng);
            let x = uniform(rng, 4, 3, -1.0, 1.0);
            let out = uniform(rng, 4, 2, -1.0, 1.0);
            let mut inputs = vec![x];
            inputs.extend(mlp.params.values().iter().cloned());
            Instance {
                inputs,
                loss: Box::new(move |_, v| weighted_sum(mlp.forward(&v[1..], v[0]).unwrap(), &out)),
            }
        })),
        ("attention_readout", Box::new(|rng: &mut ChaCha8Rng| {
            let head = AttentionHead::new(3, 4, rng);
            let n = rng.random_range(1..=5);
            let x = uniform(rng, n, 3, -1.0, 1.0);
            let out = uniform(rng, 1, 3, -1.0, 1.0);
            let mut inputs = vec![x];
            inputs.extend(head.params.values().iter().cloned());
            Instance {
                inputs,
                loss: Box::new(move |_, v| weighted_sum(head.forward(&v[1..], v[0]).unwrap().0, &out)),
            }
        })),
        ("subgraph_embedding", Box::new(|rng: &mut ChaCha8Rng| {
            let n = rng.random_range(1..=5);
            let s = uniform(rng, n, 2, 0.0, 1.0);
            let x = uniform(rng, n, 3, -1.0, 1.0);
            let out = uniform(rng, 1, 3, -1.0, 1.0);
            Instance {
                inputs: vec![s, x],
                loss: Box::new(move |_, v| weighted_sum(subgraph_embedding(v[0], v[1]).unwrap(), &out)),
            }
        })),
        ("l_cls_classification", Box::new(|rng: &mut ChaCha8Rng| cls_instance(rng, Task::Classification { num_classes: 3 }))),
        ("l_cls_regression", Box::new(|rng: &mut ChaCha8Rng| cls_instance(rng, Task::Regression))),
        ("l_mi_shift", Box::new(|rng: &mut ChaCha8Rng| mi_instance(rng, MarginalPairing::Shift))),
        ("l_mi_all_pairs", Box::new(|rng: &mut ChaCha8Rng| mi_instance(rng, MarginalPairing::AllPairs))),
        ("l_con", Box::new(|rng: &mut ChaCha8Rng| {
            let n = rng.random_range(2..=7);
            let adjacency = random_graph(rng, n, 1, Label::Class(0)).adjacency().clone();
            let logits = uniform(rng, n, 2, -2.0, 2.0);
            Instance {
                inputs: vec![logits],
                loss: Box::new(move |t, v| connectivity_loss(v[0].row_softmax(), t.constant(adjacency.clone())).unwrap()),
            }
        })),
        ("total", Box::new(|rng: &mut ChaCha8Rng| {
            let (model, graphs, config) = gib_batch(rng, Task::Classification { num_classes: 2 });
            let (inputs, cut) = model_inputs(rng, &model);
            Instance {
                inputs,
                loss: Box::new(move |t, v| {
                    outer_objective(&model, &bound(v, cut), t, &graphs, &[0, 1, 2], &config)
                        .unwrap()
                        .total
                }),
            }
        })),
    ]
}

fn cls_instance(rng: &mut ChaCha8Rng, task: Task) -> Instance {
    let (model, graphs, _) = gib_batch(rng, task);
    let (inputs, cut) = model_inputs(rng, &model);
    Instance {
        inputs,
        loss: Box::new(move |t, v| {
            let p = bound(v, cut);
            let g = &graphs[0];
            classification_loss(model.forward(&p, t, g).unwrap().output, g.label).unwrap()
        }),
    }
}

fn mi_instance(rng: &mut ChaCha8Rng, pairing: MarginalPairing) -> Instance {
    let dim = rng.random_range(1..=3);
    let n = rng.random_range(2..=5);
    let critic = StatisticsNetwork::new(dim, 4, rng);
    let mut inputs = vec![uniform(rng, n, dim, -1.0, 1.0), uniform(rng, n, dim, -1.0, 1.0)];
    inputs.extend(critic.head.params.values().iter().cloned());
    Instance {
        inputs,
        loss: Box::new(move |_, v| mi_batch_loss(&critic, &v[2..], v[0], v[1], pairing).unwrap().value),
    }
}
