//! Conversion of DAG genomes into computation-identical dense MLPs.
//!
//! 1. Every node gets the earliest layer it can be computed in: inputs sit
//!    at layer 0 and any other node one layer after its deepest source.
//! 2. Liveness: a node's value must be present from its own layer up to
//!    one layer before its last consumer. Outputs stay live to the final
//!    layer, which holds exactly `h, s, v`.
//! 3. Layer `l` contains every node live at `l`. A node present at a layer
//!    after the one computing it is realized by an identity carrier: an
//!    identity neuron with a single unit weight from the previous copy.
//! 4. Each enabled genome weight lands in exactly one matrix entry. Weights
//!    from the constant input `b` land in the bias vector unless the
//!    constant is carried as an input channel.
//!
//! Disabled connections are dropped.

use std::collections::HashMap;

use crate::activation::ActivationKind;
use crate::analysis::{feature_maps_mlp, novelty_flags, NoveltyError, DEFAULT_TAU};
use crate::eval::CompiledGenome;
use crate::genome::{Genome, GenomeError, NodeId, NodeRole};
use crate::grid::{input_grid, InvalidResolution};
use crate::mlp::{InputChannel, Layer, LayerizedMlp, MlpError, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerizeOptions {
    /// Keep `b` as a fourth input channel (with carriers) instead of
    /// folding its weights into biases.
    pub carry_bias_input: bool,
}

/// Layer assignment and liveness of every node, as computed by [`layerize`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    /// Layer that computes each node (inputs: 0).
    pub depth: HashMap<NodeId, usize>,
    /// Last layer in which each node's value must be present.
    pub live_until: HashMap<NodeId, usize>,
    /// Node ids present at each layer, in neuron order. Entry 0 is the input vector.
    pub members: Vec<Vec<NodeId>>,
}

impl LayerPlan {
    pub fn output_layer(&self) -> usize {
        self.members.len() - 1
    }
}

/// Computes layers and liveness without building matrices.
pub fn plan_layers(genome: &Genome, options: LayerizeOptions) -> Result<LayerPlan, GenomeError> {
    genome.validate()?;
    let order = genome.topological_order()?;
    let position: HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let [x, y, d, b] = genome.input_ids();
    let outputs = genome.output_ids();
    let folded = |n: NodeId| !options.carry_bias_input && n == b;

    let enabled: Vec<_> = genome.connections().iter().filter(|c| c.enabled).collect();
    let mut sources: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    for c in &enabled {
        if !folded(c.from) {
            sources.entry(c.to).or_default().push(c.from);
        }
    }

    let mut depth: HashMap<NodeId, usize> = HashMap::new();
    for &n in &order {
        let role = genome.node(n).expect("ordered node exists").role;
        let dep = if role == NodeRole::Input {
            0
        } else {
            1 + sources
                .get(&n)
                .map(|s| s.iter().map(|src| depth[src]).max().unwrap_or(0))
                .unwrap_or(0)
        };
        depth.insert(n, dep);
    }

    let hidden_max = genome
        .nodes()
        .iter()
        .filter(|n| n.role == NodeRole::Hidden)
        .map(|n| depth[&n.id])
        .max();
    let out_max = outputs.iter().map(|o| depth[o]).max().expect("three outputs");
    let last = out_max.max(hidden_max.map_or(0, |h| h + 1)).max(1);

    let mut live_until: HashMap<NodeId, usize> = depth.clone();
    for c in &enabled {
        if folded(c.from) {
            continue;
        }
        let need = depth[&c.to] - 1;
        let entry = live_until.get_mut(&c.from).expect("source has a depth");
        *entry = (*entry).max(need);
    }
    for o in outputs {
        live_until.insert(o, last);
    }

    let mut inputs = vec![x, y, d];
    if options.carry_bias_input {
        inputs.push(b);
    } else {
        live_until.remove(&b);
        depth.remove(&b);
    }
    let mut members = vec![inputs];
    for layer in 1..=last {
        let here: Vec<NodeId> = if layer == last {
            outputs.to_vec()
        } else {
            let mut v: Vec<NodeId> = live_until
                .iter()
                .filter(|(n, &until)| depth[n] <= layer && layer <= until)
                .map(|(&n, _)| n)
                .collect();
            v.sort_by_key(|n| position[n]);
            v
        };
        members.push(here);
    }
    Ok(LayerPlan { depth, live_until, members })
}

pub fn layerize(genome: &Genome) -> Result<LayerizedMlp, GenomeError> {
    layerize_with(genome, LayerizeOptions::default())
}

pub fn layerize_with(genome: &Genome, options: LayerizeOptions) -> Result<LayerizedMlp, GenomeError> {
    let plan = plan_layers(genome, options)?;
    let b = genome.input_ids()[3];
    let folded = |n: NodeId| !options.carry_bias_input && n == b;

    let mut incoming: HashMap<NodeId, Vec<(NodeId, f64)>> = HashMap::new();
    for c in genome.connections().iter().filter(|c| c.enabled) {
        incoming.entry(c.to).or_default().push((c.from, c.weight));
    }

    let mut layers = Vec::with_capacity(plan.members.len() - 1);
    for l in 1..plan.members.len() {
        let prev = &plan.members[l - 1];
        let col: HashMap<NodeId, usize> = prev.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let here = &plan.members[l];
        let fan_in = prev.len();
        let mut weights = vec![0.0; here.len() * fan_in];
        let mut bias = vec![0.0; here.len()];
        let mut acts = Vec::with_capacity(here.len());
        let mut prov = Vec::with_capacity(here.len());
        for (r, &n) in here.iter().enumerate() {
            if plan.depth[&n] == l {
                acts.push(genome.node(n).expect("member exists").activation);
                prov.push(Provenance::Node(n));
                for &(src, w) in incoming.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
                    if folded(src) {
                        bias[r] += w;
                    } else {
                        weights[r * fan_in + col[&src]] += w;
                    }
                }
            } else {
                acts.push(ActivationKind::Identity);
                prov.push(Provenance::Carrier(n));
                weights[r * fan_in + col[&n]] = 1.0;
            }
        }
        layers.push(Layer::new(fan_in, weights, bias, acts, prov).expect("shapes built consistently"));
    }

    let mut channels = vec![InputChannel::X, InputChannel::Y, InputChannel::D];
    if options.carry_bias_input {
        channels.push(InputChannel::B);
    }
    let input_prov = plan.members[0].iter().map(|&n| Provenance::Node(n)).collect();
    Ok(LayerizedMlp::new(channels, input_prov, layers).expect("layerized network is well formed"))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("network is not comparable to a genome: {0}")]
    Structure(String),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Resolution(#[from] InvalidResolution),
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EquivalenceReport {
    pub resolution: usize,
    pub points_checked: usize,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares raw `(h, s, v)` of a genome and a network over the input grid.
pub fn verify_equivalence(
    genome: &Genome,
    mlp: &LayerizedMlp,
    resolution: usize,
    tolerance: f64,
) -> Result<EquivalenceReport, VerifyError> {
    let widths = mlp.widths();
    if !(widths[0] == 3 || widths[0] == 4) || *widths.last().expect("nonempty") != 3 {
        return Err(VerifyError::Structure(format!("widths {widths:?}")));
    }
    let compiled = CompiledGenome::new(genome)?;
    let grid = input_grid(resolution)?;
    let expected = compiled.eval_grid(&grid);
    let got = mlp.forward(&grid)?.outputs();
    let mut max_abs_diff: f64 = 0.0;
    for (e, g) in expected.iter().zip(&got) {
        for c in 0..3 {
            let diff = (e[c] - g[c]).abs();
            max_abs_diff = if diff.is_nan() { f64::INFINITY } else { max_abs_diff.max(diff) };
        }
    }
    Ok(EquivalenceReport {
        resolution,
        points_checked: grid.len(),
        max_abs_diff,
        tolerance,
        pass: max_abs_diff <= tolerance,
    })
}

/// Resolution used when counting novel feature maps.
pub const NOVELTY_RESOLUTION: usize = 128;

/// Number of neurons (inputs included) whose feature map is novel at the
/// default threshold. Carriers never count.
pub fn novel_map_count(mlp: &LayerizedMlp) -> Result<usize, NoveltyError> {
    let maps = feature_maps_mlp(mlp, NOVELTY_RESOLUTION).expect("fixed resolution is valid");
    let flags = novelty_flags(&maps, DEFAULT_TAU)?;
    Ok(maps
        .iter()
        .zip(flags)
        .filter(|(m, novel)| *novel && !m.provenance.is_carrier())
        .count())
}
