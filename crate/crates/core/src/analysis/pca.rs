use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::maps::FieldMap;
use crate::grid::{input_grid, InvalidResolution};
use crate::mlp::{LayerizedMlp, Provenance};

/// Principal components of one layer's neurons, treating every grid pixel as
/// a sample and every neuron as a feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaResult {
    pub layer: usize,
    pub resolution: usize,
    /// Per-feature means removed before the decomposition.
    pub mean: Vec<f64>,
    /// Unit directions in feature space, largest variance first. The largest
    /// magnitude coordinate of each is positive.
    pub directions: Vec<Vec<f64>>,
    /// Sample variances (`1/(N-1)`) along each direction, non-increasing.
    pub variances: Vec<f64>,
    /// Centered data projected on each direction, one map per component.
    pub projections: Vec<FieldMap>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PcaError {
    #[error("layer {layer} out of range 0..={depth}")]
    Layer { layer: usize, depth: usize },
    #[error("layer {0} has no neurons")]
    EmptyLayer(usize),
    #[error("need at least two samples")]
    TooFewSamples,
    #[error(transparent)]
    Resolution(#[from] InvalidResolution),
}

impl PcaResult {
    pub fn total_variance(&self) -> f64 {
        self.variances.iter().sum()
    }

    /// Centered feature matrix rebuilt from the retained components, pixel-major.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let n = self.projections.first().map_or(0, |p| p.values.len());
        (0..n)
            .map(|s| {
                let mut row = vec![0.0; self.mean.len()];
                for (proj, dir) in self.projections.iter().zip(&self.directions) {
                    for (r, d) in row.iter_mut().zip(dir) {
                        *r += proj.values[s] * d;
                    }
                }
                row
            })
            .collect()
    }

    /// `component,variance` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,variance\n");
        for (k, v) in self.variances.iter().enumerate() {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }
}

/// `(mean, directions, variances)` of a decomposition.
pub type Decomposition = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

/// PCA of an arbitrary `samples x features` matrix given row by row.
pub fn pca_matrix(rows: &[Vec<f64>]) -> Result<Decomposition, PcaError> {
    let n = rows.len();
    if n < 2 {
        return Err(PcaError::TooFewSamples);
    }
    let w = rows[0].len();
    let mut mean = vec![0.0; w];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(w, w);
    let mut centered = vec![0.0; w];
    for row in rows {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        for i in 0..w {
            for j in i..w {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..w {
        for j in i..w {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..w).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));
    let mut directions = Vec::with_capacity(w);
    let mut variances = Vec::with_capacity(w);
    for k in order {
        let mut dir: Vec<f64> = eigen.eigenvectors.column(k).iter().copied().collect();
        let pivot = dir
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i);
        if dir[pivot] < 0.0 {
            dir.iter_mut().for_each(|d| *d = -*d);
        }
        directions.push(dir);
        variances.push(eigen.eigenvalues[k].max(0.0));
    }
    Ok((mean, directions, variances))
}

/// PCA over layer `layer` (0 = inputs) of `mlp` sampled on the `resolution` grid.
pub fn pca_features(mlp: &LayerizedMlp, resolution: usize, layer: usize) -> Result<PcaResult, PcaError> {
    if layer > mlp.depth() {
        return Err(PcaError::Layer { layer, depth: mlp.depth() });
    }
    let grid = input_grid(resolution)?;
    let cache = mlp.forward(&grid).expect("grid is nonempty");
    let w = cache.width(layer);
    if w == 0 {
        return Err(PcaError::EmptyLayer(layer));
    }
    let rows: Vec<Vec<f64>> = cache.values(layer).chunks(w).map(<[f64]>::to_vec).collect();
    let (mean, directions, variances) = pca_matrix(&rows)?;
    let projections = directions
        .iter()
        .enumerate()
        .map(|(k, dir)| FieldMap {
            layer,
            index: k,
            provenance: Provenance::None,
            activation: None,
            resolution,
            values: rows
                .iter()
                .map(|row| row.iter().zip(&mean).zip(dir).map(|((v, m), d)| (v - m) * d).sum())
                .collect(),
        })
        .collect();
    Ok(PcaResult { layer, resolution, mean, directions, variances, projections })
}
