//! Full-batch gradient training of dense networks and of raw genomes.
//!
//! Each iteration evaluates every grid pixel, accumulates exact reverse-mode
//! gradients pixel by pixel in grid order, and takes one optimizer step.
//! Accumulation order is fixed, so equal seeds give bit-identical traces.

mod dense;
mod loss;
mod raw;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use dense::{loss_and_grad, Gradient};
pub use loss::{circular_hue_diff, pixel_loss, LossSpace, TargetError, TargetSpec};
pub use raw::{raw_loss_and_grad, train_on_raw_genome};

use crate::activation::ActivationKind;
use crate::grid::input_grid;
use crate::mlp::LayerizedMlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// `w <- w - lr * grad`.
    #[default]
    PlainGd,
    /// Adam with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    Adam,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::PlainGd => "plain_gd",
            Optimizer::Adam => "adam",
        })
    }
}

impl FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "plain_gd" | "gd" | "sgd" => Ok(Optimizer::PlainGd),
            "adam" => Ok(Optimizer::Adam),
            _ => Err(format!("unknown optimizer `{s}`")),
        }
    }
}

/// Starting point of the trainable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Weights drawn from `Normal(0, 1/fan_in)`, biases zero.
    #[default]
    LecunNormal,
    /// Start from the weights already in the model.
    Keep,
}

impl FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "lecun_normal" | "lecun" => Ok(Init::LecunNormal),
            "keep" => Ok(Init::Keep),
            _ => Err(format!("unknown init `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub resolution: usize,
    pub loss_space: LossSpace,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub init: Init,
    /// Loss is recorded every `trace_stride` iterations, plus the final value.
    pub trace_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 100_000,
            learning_rate: 3e-3,
            resolution: 256,
            loss_space: LossSpace::HsvPost,
            optimizer: Optimizer::PlainGd,
            seed: 0,
            init: Init::LecunNormal,
            trace_stride: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.resolution < 2 {
            return bad("resolution must be at least 2");
        }
        if self.trace_stride == 0 {
            return bad("trace_stride must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub mse: f64,
}

/// Recorded loss curve. `mse` at iteration `k` is the loss of the parameters
/// after `k` updates, so the first point is the initial loss.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub points: Vec<TracePoint>,
    /// Content id of the final model.
    pub final_id: String,
}

impl TrainTrace {
    pub fn initial(&self) -> Option<f64> {
        self.points.first().map(|p| p.mse)
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.mse)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,mse\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.iteration, p.mse));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error("loss became non-finite at iteration {iteration}")]
    Diverged { iteration: usize, trace: TrainTrace },
    #[error(transparent)]
    Genome(#[from] crate::genome::GenomeError),
}

/// Fresh weights `Normal(0, 1/fan_in)` and zero biases on the same shapes and
/// activations. Provenance is cleared since neurons no longer mirror nodes.
pub fn init_lecun<R: rand::Rng + ?Sized>(architecture: &LayerizedMlp, rng: &mut R) -> LayerizedMlp {
    let mut m = architecture.clone();
    m.clear_provenance();
    for layer in m.layers_mut() {
        let normal = Normal::new(0.0, 1.0 / (layer.fan_in() as f64).sqrt()).expect("positive std");
        layer.weights_mut().iter_mut().for_each(|w| *w = normal.sample(rng));
        layer.bias_mut().iter_mut().for_each(|b| *b = 0.0);
    }
    m
}

/// The same shapes with every hidden neuron ReLU and identity outputs.
pub fn relu_architecture(mlp: &LayerizedMlp) -> LayerizedMlp {
    let mut m = mlp.clone();
    m.clear_provenance();
    let depth = m.depth();
    for (l, layer) in m.layers_mut().iter_mut().enumerate() {
        let kind = if l + 1 == depth { ActivationKind::Identity } else { ActivationKind::Relu };
        layer.activations_mut().iter_mut().for_each(|a| *a = kind);
    }
    m
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Shared optimisation loop over a flat parameter vector. `eval` returns the
/// loss of `params` and writes its gradient; `on_point` sees every recorded
/// trace point as it is produced.
pub(crate) fn optimise<F>(
    mut params: Vec<f64>,
    cfg: &TrainConfig,
    mut eval: F,
    id: impl Fn(&[f64]) -> String,
    on_point: &mut dyn FnMut(TracePoint),
) -> Result<(Vec<f64>, TrainTrace), TrainError>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    cfg.validate()?;
    let mut grad = vec![0.0; params.len()];
    let mut adam = (cfg.optimizer == Optimizer::Adam).then(|| Adam::new(params.len()));
    let mut trace = TrainTrace::default();
    for it in 0..=cfg.iterations {
        let mse = eval(&params, &mut grad);
        if !mse.is_finite() {
            return Err(TrainError::Diverged { iteration: it, trace });
        }
        if it % cfg.trace_stride == 0 || it == cfg.iterations {
            trace.points.push(TracePoint { iteration: it, mse });
            on_point(TracePoint { iteration: it, mse });
        }
        if it == cfg.iterations {
            break;
        }
        match adam.as_mut() {
            Some(adam) => adam.step(&mut params, &grad, cfg.learning_rate),
            None => {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= cfg.learning_rate * g;
                }
            }
        }
    }
    trace.final_id = id(&params);
    Ok((params, trace))
}

/// Trains a dense network of the given architecture on `target`.
pub fn train(architecture: &LayerizedMlp, target: &TargetSpec, cfg: &TrainConfig) -> Result<(LayerizedMlp, TrainTrace), TrainError> {
    train_with_progress(architecture, target, cfg, |_| {})
}

/// [`train`] reporting each trace point as soon as it is recorded.
pub fn train_with_progress(
    architecture: &LayerizedMlp,
    target: &TargetSpec,
    cfg: &TrainConfig,
    mut on_point: impl FnMut(TracePoint),
) -> Result<(LayerizedMlp, TrainTrace), TrainError> {
    cfg.validate()?;
    if target.resolution() != cfg.resolution {
        return Err(TargetError::ResolutionMismatch { target: target.resolution(), config: cfg.resolution }.into());
    }
    let targets = target.in_space(cfg.loss_space)?;
    let points = input_grid(cfg.resolution).expect("validated resolution");
    let start = match cfg.init {
        Init::LecunNormal => init_lecun(architecture, &mut ChaCha8Rng::seed_from_u64(cfg.seed)),
        Init::Keep => architecture.clone(),
    };
    let shape = dense::Shape::of(&start);
    let (params, trace) = optimise(
        shape.flatten(&start),
        cfg,
        |p, g| shape.loss_and_grad(p, &points, &targets, cfg.loss_space, g),
        |p| shape.unflatten(&start, p).content_id(),
        &mut on_point,
    )?;
    Ok((shape.unflatten(&start, &params), trace))
}
