use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::color::{canonical_hsv, canonical_hsv_derivative, hsv2rgb_with_jacobian, postprocess_hsv, wrap_unit};
use crate::eval::CompiledGenome;
use crate::genome::{Genome, GenomeError};
use crate::grid::{input_grid, InvalidResolution};
use crate::image::ImageRgb;
use crate::mlp::LayerizedMlp;

/// Space in which predictions and targets are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpace {
    /// Canonical `(h mod 1, clip s, clip |v|)` with a circular hue difference.
    #[default]
    HsvPost,
    /// Displayed RGB after conversion.
    Rgb,
}

impl fmt::Display for LossSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossSpace::HsvPost => "hsv_post",
            LossSpace::Rgb => "rgb",
        })
    }
}

impl FromStr for LossSpace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "hsv_post" | "hsv" => Ok(LossSpace::HsvPost),
            "rgb" => Ok(LossSpace::Rgb),
            _ => Err(format!("unknown loss space `{s}`")),
        }
    }
}

/// Regression target on the `resolution` grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    /// Raw `(h, s, v)` labels from a teacher network.
    Hsv { resolution: usize, values: Vec<[f64; 3]> },
    /// Displayed colors only.
    Rgb { resolution: usize, values: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TargetError {
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Resolution(#[from] InvalidResolution),
    #[error("target image is {0}x{1}; targets must be square")]
    NotSquare(usize, usize),
    #[error("target has resolution {target}, training uses {config}")]
    ResolutionMismatch { target: usize, config: usize },
    #[error("target has {target} pixels, batch has {batch} points")]
    BatchMismatch { target: usize, batch: usize },
    #[error("an rgb-only target cannot be compared in hsv_post space")]
    SpaceUnavailable,
}

impl TargetSpec {
    pub fn from_genome(genome: &Genome, resolution: usize) -> Result<Self, TargetError> {
        let grid = input_grid(resolution)?;
        let values = CompiledGenome::new(genome)?.eval_grid(&grid);
        Ok(TargetSpec::Hsv { resolution, values })
    }

    pub fn from_mlp(mlp: &LayerizedMlp, resolution: usize) -> Result<Self, TargetError> {
        let grid = input_grid(resolution)?;
        let values = mlp.forward(&grid).expect("grid is nonempty").outputs();
        Ok(TargetSpec::Hsv { resolution, values })
    }

    pub fn from_image(image: &ImageRgb) -> Result<Self, TargetError> {
        if image.width() != image.height() {
            return Err(TargetError::NotSquare(image.width(), image.height()));
        }
        Ok(TargetSpec::Rgb { resolution: image.width(), values: image.pixels().to_vec() })
    }

    pub fn resolution(&self) -> usize {
        match self {
            TargetSpec::Hsv { resolution, .. } | TargetSpec::Rgb { resolution, .. } => *resolution,
        }
    }

    /// Per-pixel targets expressed in `space`.
    pub fn in_space(&self, space: LossSpace) -> Result<Vec<[f64; 3]>, TargetError> {
        match (self, space) {
            (TargetSpec::Hsv { values, .. }, LossSpace::HsvPost) => {
                Ok(values.iter().map(|&[h, s, v]| canonical_hsv(h, s, v)).collect())
            }
            (TargetSpec::Hsv { values, .. }, LossSpace::Rgb) => {
                Ok(values.iter().map(|&[h, s, v]| postprocess_hsv(h, s, v)).collect())
            }
            (TargetSpec::Rgb { values, .. }, LossSpace::Rgb) => Ok(values.clone()),
            (TargetSpec::Rgb { .. }, LossSpace::HsvPost) => Err(TargetError::SpaceUnavailable),
        }
    }
}

/// Shortest distance between two hues on the unit circle, with its
/// derivative in the first argument. At exactly half a turn the derivative
/// follows the direct difference.
#[inline]
pub fn circular_hue_diff(a: f64, b: f64) -> (f64, f64) {
    let d = a - b;
    let m = d.abs();
    let sign = if d >= 0.0 { 1.0 } else { -1.0 };
    if m <= 0.5 {
        (m, sign)
    } else {
        (1.0 - m, -sign)
    }
}

/// Squared error of one pixel summed over channels, and its gradient with
/// respect to the raw `(h, s, v)` prediction. `target` is already in `space`.
#[inline]
pub fn pixel_loss(raw: [f64; 3], target: [f64; 3], space: LossSpace) -> (f64, [f64; 3]) {
    let [h, s, v] = raw;
    let [ch, cs, cv] = canonical_hsv(h, s, v);
    let dcanon = canonical_hsv_derivative(h, s, v);
    match space {
        LossSpace::HsvPost => {
            let (eh, deh) = circular_hue_diff(wrap_unit(h), target[0]);
            let es = cs - target[1];
            let ev = cv - target[2];
            (
                eh * eh + es * es + ev * ev,
                [2.0 * eh * deh * dcanon[0], 2.0 * es * dcanon[1], 2.0 * ev * dcanon[2]],
            )
        }
        LossSpace::Rgb => {
            let (rgb, jac) = hsv2rgb_with_jacobian(ch, cs, cv);
            let mut sq = 0.0;
            let mut g = [0.0; 3];
            for c in 0..3 {
                let e = rgb[c] - target[c];
                sq += e * e;
                for k in 0..3 {
                    g[k] += 2.0 * e * jac[c][k];
                }
            }
            (sq, [g[0] * dcanon[0], g[1] * dcanon[1], g[2] * dcanon[2]])
        }
    }
}
