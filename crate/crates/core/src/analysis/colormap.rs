use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::maps::FieldMap;
use crate::image::ImageRgb;

const RED: [f64; 3] = [1.0, 0.0, 0.0];
const WHITE: [f64; 3] = [1.0, 1.0, 1.0];
const BLUE: [f64; 3] = [0.0, 0.0, 1.0];
const BLACK: [f64; 3] = [0.0, 0.0, 0.0];

/// Three-stop palettes: colors at the low end, the midpoint and the high end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    /// Dense-network panels.
    RedWhiteBlue,
    /// Genome-graph panels.
    RedBlackWhite,
}

impl Palette {
    fn stops(self) -> [[f64; 3]; 3] {
        match self {
            Palette::RedWhiteBlue => [RED, WHITE, BLUE],
            Palette::RedBlackWhite => [RED, BLACK, WHITE],
        }
    }

    /// Color of `value` after saturating to `[lo, hi]`; NaN maps to the midpoint.
    pub fn color(self, value: f64, (lo, hi): (f64, f64)) -> [f64; 3] {
        let [a, m, b] = self.stops();
        let u = if value.is_nan() { 0.5 } else { ((value - lo) / (hi - lo)).clamp(0.0, 1.0) };
        let (from, to, f) = if u <= 0.5 { (a, m, u * 2.0) } else { (m, b, u * 2.0 - 1.0) };
        std::array::from_fn(|c| from[c] + (to[c] - from[c]) * f)
    }
}

impl fmt::Display for Palette {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Palette::RedWhiteBlue => "red-white-blue",
            Palette::RedBlackWhite => "red-black-white",
        })
    }
}

impl FromStr for Palette {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "red-white-blue" | "rwb" => Ok(Palette::RedWhiteBlue),
            "red-black-white" | "rbw" => Ok(Palette::RedBlackWhite),
            _ => Err(format!("unknown palette `{s}`")),
        }
    }
}

pub const DEFAULT_CLIP: (f64, f64) = (-1.0, 1.0);

pub fn colormap_render(map: &FieldMap, palette: Palette, clip: (f64, f64)) -> ImageRgb {
    let pixels = map.values.iter().map(|&v| palette.color(v, clip)).collect();
    ImageRgb::new(map.resolution, map.resolution, pixels).expect("map is square")
}
