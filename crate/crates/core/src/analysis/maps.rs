use serde::Serialize;

use crate::activation::ActivationKind;
use crate::eval::CompiledGenome;
use crate::genome::{Genome, GenomeError};
use crate::grid::{input_grid, InvalidResolution};
use crate::layerize::{plan_layers, LayerizeOptions};
use crate::mlp::{LayerizedMlp, Provenance};

/// Default absolute-correlation threshold above which two maps count as the same.
pub const DEFAULT_TAU: f64 = 0.999;

/// Below this max deviation from its mean a map is treated as constant.
const FLAT_EPS: f64 = 1e-12;
/// Mean-removed maps closer than this (max abs) are duplicates.
const FLAT_MATCH: f64 = 1e-6;

/// One neuron's post-activation over the whole `resolution x resolution` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldMap {
    /// Layer index; 0 holds the inputs.
    pub layer: usize,
    /// Neuron index within the layer.
    pub index: usize,
    pub provenance: Provenance,
    pub activation: Option<ActivationKind>,
    pub resolution: usize,
    /// Row-major values, `y` slowest.
    pub values: Vec<f64>,
}

impl FieldMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.resolution + x]
    }
}

/// Feature maps of every input and neuron of a dense network, layer by layer.
pub fn feature_maps_mlp(mlp: &LayerizedMlp, resolution: usize) -> Result<Vec<FieldMap>, InvalidResolution> {
    let grid = input_grid(resolution)?;
    let cache = mlp.forward(&grid).expect("grid is nonempty");
    let mut maps = Vec::new();
    for (i, &p) in mlp.input_provenance().iter().enumerate() {
        maps.push(FieldMap {
            layer: 0,
            index: i,
            provenance: p,
            activation: None,
            resolution,
            values: cache.neuron(0, i),
        });
    }
    for (l, layer) in mlp.layers().iter().enumerate() {
        for i in 0..layer.width() {
            maps.push(FieldMap {
                layer: l + 1,
                index: i,
                provenance: layer.provenance()[i],
                activation: Some(layer.activations()[i]),
                resolution,
                values: cache.neuron(l + 1, i),
            });
        }
    }
    Ok(maps)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Resolution(#[from] InvalidResolution),
}

/// Feature maps of every genome node, including the constant input `b`.
/// A node's layer is the earliest layer it can be computed in.
pub fn feature_maps_genome(genome: &Genome, resolution: usize) -> Result<Vec<FieldMap>, MapError> {
    let grid = input_grid(resolution)?;
    let compiled = CompiledGenome::new(genome)?;
    let plan = plan_layers(genome, LayerizeOptions { carry_bias_input: true })?;
    let mut columns = vec![Vec::with_capacity(grid.len()); compiled.len()];
    let mut values = Vec::new();
    for p in &grid {
        compiled.eval_nodes(p, &mut values);
        for (col, v) in columns.iter_mut().zip(&values) {
            col.push(*v);
        }
    }
    let mut slots: Vec<usize> = (0..compiled.len()).collect();
    slots.sort_by_key(|&s| (plan.depth[&compiled.node_ids()[s]], s));
    let mut per_layer = std::collections::HashMap::new();
    let mut maps = Vec::with_capacity(slots.len());
    for s in slots {
        let id = compiled.node_ids()[s];
        let layer = plan.depth[&id];
        let index = per_layer.entry(layer).or_insert(0usize);
        maps.push(FieldMap {
            layer,
            index: *index,
            provenance: Provenance::Node(id),
            activation: (layer > 0).then(|| compiled.activations()[s]),
            resolution,
            values: std::mem::take(&mut columns[s]),
        });
        *index += 1;
    }
    Ok(maps)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoveltyError {
    #[error("map {index} has resolution {got}, expected {expected}")]
    Resolution { index: usize, got: usize, expected: usize },
}

struct Centered {
    values: Vec<f64>,
    norm: f64,
    flat: bool,
}

fn center(values: &[f64]) -> Centered {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let values: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let flat = values.iter().all(|v| v.abs() < FLAT_EPS);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    Centered { values, norm, flat }
}

fn duplicates(a: &Centered, b: &Centered, tau: f64) -> bool {
    if a.flat || b.flat {
        return a.values.iter().zip(&b.values).all(|(x, y)| (x - y).abs() < FLAT_MATCH);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    (dot / (a.norm * b.norm)).abs() >= tau
}

/// Marks each map novel iff no map in a strictly earlier layer matches it:
/// absolute Pearson correlation at or above `tau`, or for constant maps a
/// mean-removed max difference below `1e-6`. Sign flips count as matches.
pub fn novelty_flags(maps: &[FieldMap], tau: f64) -> Result<Vec<bool>, NoveltyError> {
    let Some(first) = maps.first() else {
        return Ok(Vec::new());
    };
    for (index, m) in maps.iter().enumerate() {
        if m.resolution != first.resolution || m.values.len() != first.values.len() {
            return Err(NoveltyError::Resolution { index, got: m.resolution, expected: first.resolution });
        }
    }
    let centered: Vec<Centered> = maps.iter().map(|m| center(&m.values)).collect();
    Ok((0..maps.len())
        .map(|i| {
            (0..maps.len())
                .filter(|&j| maps[j].layer < maps[i].layer)
                .all(|j| !duplicates(&centered[i], &centered[j], tau))
        })
        .collect())
}

pub fn novel_count(maps: &[FieldMap], tau: f64) -> Result<usize, NoveltyError> {
    Ok(novelty_flags(maps, tau)?.into_iter().filter(|&n| n).count())
}
