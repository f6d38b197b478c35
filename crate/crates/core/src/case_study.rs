//! Toy channel `x = sign(z)`, `y = x + σ·ε` with `z, ε ~ N(0, 1)`: bi-level
//! minimisation of the DV estimate of `I(X; Y)` over `σ²`, checked against a
//! closed-form Monte-Carlo oracle.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GibError, Result};
use crate::mi::{self, InnerConfig, MarginalPairing, StatisticsNetwork};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng;
use crate::tensor::{logsumexp, Tape, Tensor};

/// Channel noise parameterised as `σ² = exp(ρ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyPairSampler {
    pub rho: f64,
}

impl ToyPairSampler {
    pub fn with_sigma2(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(GibError::contract(format!("sigma2 = {sigma2} must be positive")));
        }
        Ok(ToyPairSampler { rho: sigma2.ln() })
    }

    pub fn sigma2(&self) -> f64 {
        self.rho.exp()
    }
}

/// `n` draws: `x ∈ {−1, +1}`, standard normal `eps`, and `y = x + σ·eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyPairs {
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn sample_pairs(sampler: &ToyPairSampler, n: usize, seed: u64) -> Result<ToyPairs> {
    if n == 0 {
        return Err(GibError::contract("cannot sample zero pairs"));
    }
    let mut r = rng::stream(seed, "toy-pairs");
    let sigma = sampler.sigma2().sqrt();
    let mut x = Vec::with_capacity(n);
    let mut eps = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = r.sample(StandardNormal);
        x.push(if z >= 0.0 { 1.0 } else { -1.0 });
        eps.push(r.sample(StandardNormal));
    }
    let y = x.iter().zip(&eps).map(|(xi, e)| xi + sigma * e).collect();
    Ok(ToyPairs { x, eps, y })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiOracleEstimate {
    /// Nats.
    pub value: f64,
    pub samples: usize,
    pub std_error: f64,
}

/// Monte-Carlo mean of `log p(y|x) − log p(y)` with the exact Gaussian
/// densities and `p(y) = ½N(y; 1, σ²) + ½N(y; −1, σ²)`.
pub fn mi_oracle(sampler: &ToyPairSampler, n: usize, seed: u64) -> Result<MiOracleEstimate> {
    if n < 1000 {
        return Err(GibError::contract(format!("oracle needs at least 1000 samples, got {n}")));
    }
    Ok(oracle_on(&sample_pairs(sampler, n, seed)?, sampler.sigma2()))
}

/// Oracle on an existing sample; normalising constants cancel.
pub fn oracle_on(pairs: &ToyPairs, sigma2: f64) -> MiOracleEstimate {
    let quad = |y: f64, mu: f64| -(y - mu).powi(2) / (2.0 * sigma2);
    let terms: Vec<f64> = pairs
        .x
        .iter()
        .zip(&pairs.y)
        .map(|(&x, &y)| {
            let log_marginal = logsumexp(&[quad(y, 1.0), quad(y, -1.0)]) - std::f64::consts::LN_2;
            quad(y, x) - log_marginal
        })
        .collect();
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    MiOracleEstimate {
        value: mean,
        samples: terms.len(),
        std_error: (var / n).sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseStudyConfig {
    pub epochs: usize,
    pub inner_steps: usize,
    pub samples: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub critic_hidden: usize,
    pub initial_sigma2: f64,
    /// Holds `σ²` fixed and skips the outer update.
    pub fixed_sigma2: Option<f64>,
    /// Keeps the statistics head across epochs instead of redrawing it.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        CaseStudyConfig {
            epochs: 30,
            inner_steps: 150,
            samples: 20000,
            inner_lr: 1e-2,
            outer_lr: 0.1,
            critic_hidden: 64,
            initial_sigma2: 0.25,
            fixed_sigma2: None,
            warm_start: false,
            seed: 0,
        }
    }
}

impl CaseStudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GibError::Config(m.into()));
        if self.epochs == 0 || self.inner_steps == 0 {
            return bad("epochs and inner_steps must be >= 1");
        }
        if self.samples < 2 {
            return bad("samples must be >= 2");
        }
        if !(self.inner_lr > 0.0 && self.outer_lr > 0.0) {
            return bad("learning rates must be > 0");
        }
        let s2 = self.fixed_sigma2.unwrap_or(self.initial_sigma2);
        if !(s2 > 0.0) || !s2.is_finite() {
            return bad("sigma2 must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyRecord {
    pub epoch: usize,
    /// DV estimate after the inner loop, at this epoch's `σ²`.
    pub l_mi: f64,
    pub oracle_mi: f64,
    pub oracle_std_error: f64,
    pub sigma2: f64,
}

pub fn trace_csv(trace: &[CaseStudyRecord]) -> String {
    let mut out = String::from("epoch,l_mi,oracle_mi,sigma2\n");
    for r in trace {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.l_mi, r.oracle_mi, r.sigma2);
    }
    out
}

/// Each epoch draws fresh pairs, trains the statistics head for
/// `inner_steps` ascent steps, then takes one descent step on `ρ = ln σ²`
/// through the reparameterised `y`.
pub fn run_case_study(config: &CaseStudyConfig) -> Result<Vec<CaseStudyRecord>> {
    config.validate()?;
    let mut sampler = ToyPairSampler::with_sigma2(config.fixed_sigma2.unwrap_or(config.initial_sigma2))?;
    let mut critic_rng = rng::stream(config.seed, "toy-critic");
    let mut critic = StatisticsNetwork::new(1, config.critic_hidden, &mut critic_rng);
    let mut rho = crate::gnn::ParamSet::new();
    rho.push("rho", Tensor::scalar(sampler.rho));
    let mut outer = Optimizer::new(OptimizerKind::Adam, config.outer_lr, &rho);
    let inner = InnerConfig {
        steps: config.inner_steps,
        lr: config.inner_lr,
        optimizer: OptimizerKind::Adam,
        pairing: MarginalPairing::Shift,
    };
    let n = config.samples;
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if epoch > 0 && !config.warm_start {
            critic = StatisticsNetwork::new(1, config.critic_hidden, &mut critic_rng);
        }
        let pairs = sample_pairs(&sampler, n, rng::derive_seed(config.seed, &format!("epoch-{epoch}")))?;
        let xs = Tensor::new(n, 1, pairs.x.clone())?;
        let ys = Tensor::new(n, 1, pairs.y.clone())?;
        mi::inner_maximize(&mut critic, &[(xs.clone(), ys)], &inner)?;

        let tape = Tape::new();
        let rho_var = tape.var(rho.get(0).clone());
        let head = critic.head.params.bind_frozen(&tape);
        let sigma = rho_var.scale(0.5).exp();
        let eps = tape.constant(Tensor::new(n, 1, pairs.eps.clone())?);
        let x = tape.constant(xs);
        let y = eps.mul(sigma)?.add(x)?;
        let dv = mi::mi_batch_loss(&critic, &head, x, y, MarginalPairing::Shift)?.value;
        let l_mi = dv.item();
        let oracle = oracle_on(&pairs, sampler.sigma2());
        trace.push(CaseStudyRecord {
            epoch,
            l_mi,
            oracle_mi: oracle.value,
            oracle_std_error: oracle.std_error,
            sigma2: sampler.sigma2(),
        });
        if !l_mi.is_finite() {
            return Err(GibError::NonFinite {
                what: "MI estimate",
                phase: "case study",
                step: epoch,
                trace: trace.iter().map(|r| r.l_mi).collect(),
            });
        }
        if config.fixed_sigma2.is_none() {
            let grads = tape.backward(dv)?;
            outer.step(&mut rho, &[grads.wrt(rho_var)])?;
            sampler.rho = rho.get(0).item();
        }
    }
    Ok(trace)
}
