//! Representation diagnostics: per-neuron feature maps, novelty marking,
//! colormapped panels, weight sweeps and per-layer PCA.

pub mod colormap;
pub mod maps;
pub mod montage;
pub mod pca;
pub mod sweep;

pub use colormap::{colormap_render, Palette, DEFAULT_CLIP};
pub use maps::{
    feature_maps_genome, feature_maps_mlp, novel_count, novelty_flags, FieldMap, MapError, NoveltyError, DEFAULT_TAU,
};
pub use montage::{feature_panel, sweep_strip, Layout, MontageError};
pub use pca::{pca_features, pca_matrix, PcaError, PcaResult};
pub use sweep::{random_unit_vector, sweep_frame, weight_sweep, SweepError, SweepSpec, SweepTarget};
