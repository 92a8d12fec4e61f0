use serde::{Deserialize, Serialize};

use super::colormap::{colormap_render, Palette, DEFAULT_CLIP};
use super::maps::FieldMap;
use crate::image::ImageRgb;

pub const SEPARATOR: [f64; 3] = [1.0, 1.0, 1.0];
pub const NOVEL_BORDER: [f64; 3] = [0.0, 0.8, 0.0];
pub const PLAIN_BORDER: [f64; 3] = [0.6, 0.6, 0.6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    Horizontal,
    Grid { columns: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MontageError {
    #[error("no images to assemble")]
    Empty,
    #[error("image {index} is {got:?}, expected {expected:?}")]
    Dimensions { index: usize, got: (usize, usize), expected: (usize, usize) },
    #[error("grid needs at least one column")]
    Columns,
}

/// Tiles equal-size images with 1-pixel separators between neighbours and no
/// outer border, so `n` images in a row span `n * w + n - 1` pixels.
pub fn sweep_strip(images: &[ImageRgb], layout: Layout) -> Result<ImageRgb, MontageError> {
    let first = images.first().ok_or(MontageError::Empty)?;
    let (w, h) = (first.width(), first.height());
    for (index, img) in images.iter().enumerate() {
        if (img.width(), img.height()) != (w, h) {
            return Err(MontageError::Dimensions { index, got: (img.width(), img.height()), expected: (w, h) });
        }
    }
    let columns = match layout {
        Layout::Horizontal => images.len(),
        Layout::Grid { columns: 0 } => return Err(MontageError::Columns),
        Layout::Grid { columns } => columns.min(images.len()),
    };
    let rows = images.len().div_ceil(columns);
    let mut out = ImageRgb::filled(columns * (w + 1) - 1, rows * (h + 1) - 1, SEPARATOR);
    for (k, img) in images.iter().enumerate() {
        out.blit(img, (k % columns) * (w + 1), (k / columns) * (h + 1));
    }
    Ok(out)
}

fn framed(img: &ImageRgb, border: [f64; 3]) -> ImageRgb {
    let mut out = ImageRgb::filled(img.width() + 2, img.height() + 2, border);
    out.blit(img, 1, 1);
    out
}

/// One row per layer of colormapped maps, each framed green when novel.
/// Short rows are padded with separator-colored cells.
pub fn feature_panel(maps: &[FieldMap], novel: &[bool], palette: Palette) -> Result<ImageRgb, MontageError> {
    let first = maps.first().ok_or(MontageError::Empty)?;
    let cell = first.resolution + 2;
    let layers = maps.iter().map(|m| m.layer).max().unwrap_or(0) + 1;
    let mut rows: Vec<Vec<ImageRgb>> = vec![Vec::new(); layers];
    for (index, (m, &n)) in maps.iter().zip(novel).enumerate() {
        if m.resolution != first.resolution {
            return Err(MontageError::Dimensions {
                index,
                got: (m.resolution, m.resolution),
                expected: (first.resolution, first.resolution),
            });
        }
        let border = if n { NOVEL_BORDER } else { PLAIN_BORDER };
        rows[m.layer].push(framed(&colormap_render(m, palette, DEFAULT_CLIP), border));
    }
    let columns = rows.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let blank = ImageRgb::filled(cell, cell, SEPARATOR);
    let cells: Vec<ImageRgb> = rows
        .into_iter()
        .flat_map(|mut r| {
            r.resize(columns, blank.clone());
            r
        })
        .collect();
    sweep_strip(&cells, Layout::Grid { columns })
}
