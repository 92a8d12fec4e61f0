//! Evaluating and rendering genomes.

use std::collections::HashMap;

use crate::activation::ActivationKind;
use crate::color::postprocess_hsv;
use crate::genome::{Genome, GenomeError, NodeId};
use crate::grid::{input_grid, InputPoint, InvalidResolution};
use crate::image::ImageRgb;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("invalid genome: {0}")]
    InvalidGenome(#[from] GenomeError),
    #[error(transparent)]
    Resolution(#[from] InvalidResolution),
}

/// A genome flattened into topological order for repeated evaluation.
///
/// Node slots are numbered by topological position. Each non-input node sums
/// its enabled incoming connections in ascending innovation order.
#[derive(Debug, Clone)]
pub struct CompiledGenome {
    ids: Vec<NodeId>,
    activations: Vec<ActivationKind>,
    /// Per slot, `(source slot, connection index)` sorted by innovation.
    incoming: Vec<Vec<(usize, usize)>>,
    /// Indexed by position in `Genome::connections`.
    weights: Vec<f64>,
    inputs: [usize; 4],
    outputs: [usize; 3],
}

impl CompiledGenome {
    pub fn new(genome: &Genome) -> Result<Self, GenomeError> {
        genome.validate()?;
        let ids = genome.topological_order()?;
        let slot: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let activations = ids
            .iter()
            .map(|&id| genome.node(id).expect("ordered node exists").activation)
            .collect();
        let mut incoming = vec![Vec::new(); ids.len()];
        // connections are sorted by innovation, so each list is too
        for (ci, c) in genome.connections().iter().enumerate() {
            if c.enabled {
                incoming[slot[&c.to]].push((slot[&c.from], ci));
            }
        }
        Ok(CompiledGenome {
            activations,
            incoming,
            weights: genome.connections().iter().map(|c| c.weight).collect(),
            inputs: genome.input_ids().map(|id| slot[&id]),
            outputs: genome.output_ids().map(|id| slot[&id]),
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Node id at each slot (topological order).
    pub fn node_ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn activations(&self) -> &[ActivationKind] {
        &self.activations
    }

    pub fn incoming(&self, slot: usize) -> &[(usize, usize)] {
        &self.incoming[slot]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn input_slots(&self) -> [usize; 4] {
        self.inputs
    }

    pub fn output_slots(&self) -> [usize; 3] {
        self.outputs
    }

    pub fn is_input(&self, slot: usize) -> bool {
        self.inputs.contains(&slot)
    }

    /// Evaluates every node; `values` is resized to one entry per slot.
    pub fn eval_nodes(&self, point: &InputPoint, values: &mut Vec<f64>) {
        values.clear();
        values.resize(self.ids.len(), 0.0);
        for (slot, v) in self.inputs.iter().zip(point.as_array()) {
            values[*slot] = v;
        }
        for slot in 0..self.ids.len() {
            if self.is_input(slot) {
                continue;
            }
            let mut pre = 0.0;
            for &(src, ci) in &self.incoming[slot] {
                pre += self.weights[ci] * values[src];
            }
            values[slot] = self.activations[slot].apply(pre);
        }
    }

    /// Raw `(h, s, v)` at one point.
    pub fn eval(&self, point: &InputPoint) -> [f64; 3] {
        let mut values = Vec::with_capacity(self.ids.len());
        self.eval_nodes(point, &mut values);
        self.outputs.map(|slot| values[slot])
    }

    pub fn eval_grid(&self, points: &[InputPoint]) -> Vec<[f64; 3]> {
        let mut values = Vec::with_capacity(self.ids.len());
        points
            .iter()
            .map(|p| {
                self.eval_nodes(p, &mut values);
                self.outputs.map(|slot| values[slot])
            })
            .collect()
    }

    pub fn render(&self, resolution: usize) -> Result<ImageRgb, InvalidResolution> {
        let grid = input_grid(resolution)?;
        let pixels = self
            .eval_grid(&grid)
            .into_iter()
            .map(|[h, s, v]| postprocess_hsv(h, s, v))
            .collect();
        Ok(ImageRgb::new(resolution, resolution, pixels).expect("grid has R*R points"))
    }
}

/// Raw `(h, s, v)` of a genome at one input point.
pub fn eval_genome(genome: &Genome, point: &InputPoint) -> Result<[f64; 3], GenomeError> {
    Ok(CompiledGenome::new(genome)?.eval(point))
}

/// Renders a genome over the `resolution x resolution` input grid.
pub fn render(genome: &Genome, resolution: usize) -> Result<ImageRgb, EvalError> {
    Ok(CompiledGenome::new(genome)?.render(resolution)?)
}
