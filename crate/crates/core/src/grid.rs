//! The 2-D input grid every CPPN is evaluated over.

use serde::{Deserialize, Serialize};

/// Scale applied to the radial input.
pub const RADIUS_SCALE: f64 = 1.4;

/// Default render and training resolution.
pub const DEFAULT_RESOLUTION: usize = 256;

/// One CPPN input vector `(x, y, d, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputPoint {
    pub x: f64,
    pub y: f64,
    pub d: f64,
    pub b: f64,
}

impl InputPoint {
    pub fn new(x: f64, y: f64) -> Self {
        InputPoint {
            x,
            y,
            d: RADIUS_SCALE * (x * x + y * y).sqrt(),
            b: 1.0,
        }
    }

    /// Inputs in node order x, y, d, b.
    #[inline]
    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.d, self.b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("invalid resolution {0}: at least 2 samples per axis are required")]
pub struct InvalidResolution(pub usize);

pub fn check_resolution(resolution: usize) -> Result<(), InvalidResolution> {
    if resolution < 2 {
        Err(InvalidResolution(resolution))
    } else {
        Ok(())
    }
}

/// Evenly spaced coordinates from -1 to 1 inclusive, `-1 + 2i/(R-1)`.
///
/// Computed as `(2i - (R-1)) / (R-1)` so that mirrored samples are exact
/// negations of each other.
pub fn axis(resolution: usize) -> Result<Vec<f64>, InvalidResolution> {
    check_resolution(resolution)?;
    let last = (resolution - 1) as f64;
    Ok((0..resolution)
        .map(|i| (2.0 * i as f64 - last) / last)
        .collect())
}

/// All `resolution²` grid points in row-major order (y varies slowest).
///
/// Endpoints are sampled, so the grid is exactly symmetric under `x -> -x`.
pub fn input_grid(resolution: usize) -> Result<Vec<InputPoint>, InvalidResolution> {
    let coords = axis(resolution)?;
    let mut points = Vec::with_capacity(resolution * resolution);
    for &y in &coords {
        for &x in &coords {
            points.push(InputPoint::new(x, y));
        }
    }
    Ok(points)
}
