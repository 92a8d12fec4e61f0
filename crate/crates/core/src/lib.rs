//! Compositional pattern producing networks (CPPNs): NEAT-style genomes bred
//! interactively, converted losslessly into dense MLPs, retrained from
//! scratch with full-batch gradient descent, and inspected neuron by neuron.

pub mod activation;
pub mod analysis;
pub mod color;
pub mod eval;
pub mod genome;
pub mod grid;
pub mod evolve;
pub mod image;
pub mod layerize;
pub mod mlp;
pub mod train;

pub use activation::ActivationKind;
pub use eval::{eval_genome, render, CompiledGenome};
pub use genome::{ConnectionGene, Genome, GenomeError, Innovation, NodeGene, NodeId, NodeRole};
pub use grid::{input_grid, InputPoint};
pub use image::ImageRgb;
pub use layerize::{layerize, layerize_with, verify_equivalence, EquivalenceReport, LayerizeOptions};
pub use mlp::{InputChannel, Layer, LayerizedMlp, MlpError, Provenance};
pub use train::{train, train_on_raw_genome, train_with_progress, LossSpace, Optimizer, TargetSpec, TrainConfig, TrainError, TrainTrace};
