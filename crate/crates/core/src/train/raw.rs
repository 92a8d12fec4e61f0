use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::loss::{pixel_loss, LossSpace, TargetError, TargetSpec};
use super::{optimise, Init, TrainConfig, TrainError, TrainTrace};
use crate::eval::CompiledGenome;
use crate::genome::Genome;
use crate::grid::{input_grid, InputPoint};

fn loss_and_grad_compiled(
    net: &CompiledGenome,
    weights: &[f64],
    points: &[InputPoint],
    targets: &[[f64; 3]],
    space: LossSpace,
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = net.len();
    let mut values = vec![0.0; n];
    let mut derivs = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let inputs = net.input_slots();
    let outputs = net.output_slots();
    let mut total = 0.0;
    for (p, target) in points.iter().zip(targets) {
        for (slot, v) in inputs.iter().zip(p.as_array()) {
            values[*slot] = v;
        }
        for slot in 0..n {
            if net.is_input(slot) {
                continue;
            }
            let mut pre = 0.0;
            for &(src, ci) in net.incoming(slot) {
                pre += weights[ci] * values[src];
            }
            let (v, d) = net.activations()[slot].apply_with_derivative(pre);
            values[slot] = v;
            derivs[slot] = d;
        }
        let (sq, g) = pixel_loss(outputs.map(|s| values[s]), *target, space);
        total += sq;
        delta.iter_mut().for_each(|d| *d = 0.0);
        for (k, &slot) in outputs.iter().enumerate() {
            delta[slot] += g[k];
        }
        for slot in (0..n).rev() {
            if net.is_input(slot) || delta[slot] == 0.0 {
                continue;
            }
            let d = delta[slot] * derivs[slot];
            for &(src, ci) in net.incoming(slot) {
                grad[ci] += d * values[src];
                delta[src] += d * weights[ci];
            }
        }
    }
    let scale = 1.0 / (3 * points.len()) as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    total * scale
}

/// Mean squared error of a genome and its gradient per connection, indexed
/// like [`Genome::connections`]. Disabled connections get zero.
pub fn raw_loss_and_grad(
    genome: &Genome,
    batch: &[InputPoint],
    target: &TargetSpec,
    space: LossSpace,
) -> Result<(f64, Vec<f64>), TrainError> {
    let targets = target.in_space(space)?;
    if targets.len() != batch.len() || batch.is_empty() {
        return Err(TargetError::BatchMismatch { target: targets.len(), batch: batch.len() }.into());
    }
    let net = CompiledGenome::new(genome)?;
    let mut grad = vec![0.0; net.weights().len()];
    let mse = loss_and_grad_compiled(&net, net.weights(), batch, &targets, space, &mut grad);
    Ok((mse, grad))
}

/// LeCun-normal weights for a sparse graph: each enabled connection draws
/// from `Normal(0, 1/k)` where `k` counts the enabled inputs of its target.
fn init_raw(genome: &Genome, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fan_in = |to| genome.connections().iter().filter(|c| c.enabled && c.to == to).count();
    genome
        .connections()
        .iter()
        .map(|c| {
            if c.enabled {
                Normal::new(0.0, 1.0 / (fan_in(c.to) as f64).sqrt()).expect("positive std").sample(&mut rng)
            } else {
                c.weight
            }
        })
        .collect()
}

/// Trains the connection weights of `genome` with topology and activations
/// frozen, using the same loop as dense training.
pub fn train_on_raw_genome(genome: &Genome, target: &TargetSpec, cfg: &TrainConfig) -> Result<(Genome, TrainTrace), TrainError> {
    cfg.validate()?;
    if target.resolution() != cfg.resolution {
        return Err(TargetError::ResolutionMismatch { target: target.resolution(), config: cfg.resolution }.into());
    }
    let targets = target.in_space(cfg.loss_space)?;
    let points = input_grid(cfg.resolution).expect("validated resolution");
    let net = CompiledGenome::new(genome)?;
    let start = match cfg.init {
        Init::LecunNormal => init_raw(genome, cfg.seed),
        Init::Keep => net.weights().to_vec(),
    };
    let with_weights = |w: &[f64]| {
        let mut g = genome.clone();
        for (c, &v) in g.connections_mut().iter_mut().zip(w) {
            c.weight = v;
        }
        g
    };
    let (weights, trace) = optimise(
        start,
        cfg,
        |w, grad| loss_and_grad_compiled(&net, w, &points, &targets, cfg.loss_space, grad),
        |w| with_weights(w).content_id(),
        &mut |_| {},
    )?;
    Ok((with_weights(&weights), trace))
}
