use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grid::InvalidResolution;
use crate::image::ImageRgb;
use crate::mlp::LayerizedMlp;

/// Tolerance on the Euclidean norm of a column direction.
pub const UNIT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_STEPS: usize = 9;

/// What a sweep moves. Layers are numbered from 1 (the first weight matrix);
/// `row` indexes the receiving neuron and `col` the sending one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SweepTarget {
    Weight { layer: usize, row: usize, col: usize },
    Column { layer: usize, col: usize, direction: Vec<f64> },
}

/// A sweep adds each offset `t` to the current value: a single weight becomes
/// `center + t`, a column becomes `center + t * direction`. Offsets are
/// `steps` evenly spaced values from `range.0` to `range.1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub target: SweepTarget,
    pub range: (f64, f64),
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("layer {layer} out of range 1..={depth}")]
    Layer { layer: usize, depth: usize },
    #[error("coordinate ({row}, {col}) outside {rows}x{cols} weight matrix")]
    Coordinate { row: usize, col: usize, rows: usize, cols: usize },
    #[error("direction has {got} entries, layer has {expected} rows")]
    DirectionLength { got: usize, expected: usize },
    #[error("direction norm {0} is not 1")]
    DirectionNorm(f64),
    #[error("sweep range must satisfy lo < hi, got [{0}, {1}]")]
    Range(f64, f64),
    #[error("sweep needs at least 2 steps, got {0}")]
    Steps(usize),
    #[error(transparent)]
    Resolution(#[from] InvalidResolution),
}

impl SweepTarget {
    fn layer(&self) -> usize {
        match self {
            SweepTarget::Weight { layer, .. } | SweepTarget::Column { layer, .. } => *layer,
        }
    }

    fn check(&self, mlp: &LayerizedMlp) -> Result<(), SweepError> {
        let depth = mlp.depth();
        let layer = self.layer();
        if layer == 0 || layer > depth {
            return Err(SweepError::Layer { layer, depth });
        }
        let l = &mlp.layers()[layer - 1];
        let (rows, cols) = (l.width(), l.fan_in());
        match self {
            SweepTarget::Weight { row, col, .. } => {
                if *row >= rows || *col >= cols {
                    return Err(SweepError::Coordinate { row: *row, col: *col, rows, cols });
                }
            }
            SweepTarget::Column { col, direction, .. } => {
                if *col >= cols {
                    return Err(SweepError::Coordinate { row: 0, col: *col, rows, cols });
                }
                if direction.len() != rows {
                    return Err(SweepError::DirectionLength { got: direction.len(), expected: rows });
                }
                let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
                // Written so that a NaN norm is rejected too.
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
                    return Err(SweepError::DirectionNorm(norm));
                }
            }
        }
        Ok(())
    }

    /// Current value(s) at the target: one weight, or the whole column.
    pub fn center(&self, mlp: &LayerizedMlp) -> Result<Vec<f64>, SweepError> {
        self.check(mlp)?;
        let l = &mlp.layers()[self.layer() - 1];
        Ok(match self {
            SweepTarget::Weight { row, col, .. } => vec![l.weight(*row, *col)],
            SweepTarget::Column { col, .. } => (0..l.width()).map(|r| l.weight(r, *col)).collect(),
        })
    }

    fn apply(&self, mlp: &mut LayerizedMlp, center: &[f64], t: f64) {
        let l = &mut mlp.layers_mut()[self.layer() - 1];
        match self {
            SweepTarget::Weight { row, col, .. } => l.set_weight(*row, *col, center[0] + t),
            SweepTarget::Column { col, direction, .. } => {
                for (r, (c, d)) in center.iter().zip(direction).enumerate() {
                    l.set_weight(r, *col, c + t * d);
                }
            }
        }
    }
}

impl SweepSpec {
    /// Symmetric default: half-width `max(3 |center|, 1)` over 9 steps, where
    /// `|center|` is the column norm in column mode.
    pub fn default_for(mlp: &LayerizedMlp, target: SweepTarget) -> Result<Self, SweepError> {
        let center = target.center(mlp)?;
        let magnitude = center.iter().map(|c| c * c).sum::<f64>().sqrt();
        let half = (3.0 * magnitude).max(1.0);
        Ok(SweepSpec { target, range: (-half, half), steps: DEFAULT_STEPS })
    }

    pub fn offsets(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                let f = k as f64 / last;
                lo * (1.0 - f) + hi * f
            })
            .collect()
    }

    fn check(&self, mlp: &LayerizedMlp) -> Result<(), SweepError> {
        let (lo, hi) = self.range;
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(lo < hi) {
            return Err(SweepError::Range(lo, hi));
        }
        if self.steps < 2 {
            return Err(SweepError::Steps(self.steps));
        }
        self.target.check(mlp)
    }
}

/// Renders the output image for every offset of the sweep. `mlp` is untouched.
pub fn weight_sweep(mlp: &LayerizedMlp, spec: &SweepSpec, resolution: usize) -> Result<Vec<ImageRgb>, SweepError> {
    spec.check(mlp)?;
    let center = spec.target.center(mlp)?;
    let mut work = mlp.clone();
    spec.offsets()
        .into_iter()
        .map(|t| {
            spec.target.apply(&mut work, &center, t);
            Ok(work.render(resolution)?)
        })
        .collect()
}

/// Output image with the target moved by a single offset `t`.
pub fn sweep_frame(mlp: &LayerizedMlp, target: &SweepTarget, t: f64, resolution: usize) -> Result<ImageRgb, SweepError> {
    let center = target.center(mlp)?;
    let mut work = mlp.clone();
    target.apply(&mut work, &center, t);
    Ok(work.render(resolution)?)
}

/// Uniformly distributed direction on the unit sphere in `n` dimensions.
pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    assert!(n > 0, "direction needs at least one dimension");
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            let mut u: Vec<f64> = v.iter().map(|x| x / norm).collect();
            let renorm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            u.iter_mut().for_each(|x| *x /= renorm);
            return u;
        }
    }
}
