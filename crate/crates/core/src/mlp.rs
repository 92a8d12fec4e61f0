//! Dense sequential networks with per-neuron activations.
//!
//! Layer `l` computes `a_l = act_l(W_l a_{l-1} + bias_l)` componentwise. The
//! input vector is `(x, y, d)`, or `(x, y, d, b)` when the constant input is
//! carried as a channel instead of being folded into the biases. The output
//! layer always has three neurons: raw `h, s, v`.
//!
//! File format (JSON):
//!
//! ```json
//! {
//!   "inputs": ["x", "y", "d"],
//!   "input_provenance": [{"kind": "node", "node": 0}, ...],
//!   "layers": [{
//!     "weights": [[w00, w01, w02], ...],
//!     "bias": [b0, ...],
//!     "activations": ["sine", ...],
//!     "provenance": [{"kind": "node", "node": 12}, {"kind": "carrier", "node": 0}, ...]
//!   }]
//! }
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activation::ActivationKind;
use crate::color::postprocess_hsv;
use crate::genome::NodeId;
use crate::grid::{input_grid, InputPoint, InvalidResolution};
use crate::image::ImageRgb;

/// Which genome node an MLP neuron realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "node", rename_all = "snake_case")]
pub enum Provenance {
    /// Computes the node's value.
    Node(NodeId),
    /// Identity neuron transporting the node's value one layer further.
    Carrier(NodeId),
    /// No genome origin (freshly initialized or hand-built networks).
    None,
}

impl Provenance {
    pub fn node(&self) -> Option<NodeId> {
        match *self {
            Provenance::Node(n) | Provenance::Carrier(n) => Some(n),
            Provenance::None => None,
        }
    }

    pub fn is_carrier(&self) -> bool {
        matches!(self, Provenance::Carrier(_))
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Node(n) => write!(f, "node {n}"),
            Provenance::Carrier(n) => write!(f, "carrier of {n}"),
            Provenance::None => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputChannel {
    X,
    Y,
    D,
    B,
}

impl InputChannel {
    #[inline]
    pub fn read(self, p: &InputPoint) -> f64 {
        match self {
            InputChannel::X => p.x,
            InputChannel::Y => p.y,
            InputChannel::D => p.d,
            InputChannel::B => p.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MlpError {
    #[error("layer {layer}: {what}")]
    Shape { layer: usize, what: String },
    #[error("input channels must be [x, y, d] or [x, y, d, b], got {0:?}")]
    Inputs(Vec<InputChannel>),
    #[error("output layer has width {0}, expected 3")]
    OutputWidth(usize),
    #[error("network has no layers")]
    Empty,
    #[error("malformed network text: {0}")]
    Malformed(String),
    #[error("batch is empty")]
    EmptyBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Row-major, `width x fan_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    activations: Vec<ActivationKind>,
    provenance: Vec<Provenance>,
    fan_in: usize,
}

#[derive(Serialize, Deserialize)]
struct LayerText {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activations: Vec<ActivationKind>,
    provenance: Vec<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct MlpText {
    inputs: Vec<InputChannel>,
    input_provenance: Vec<Provenance>,
    layers: Vec<LayerText>,
}

impl Layer {
    pub fn new(
        fan_in: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activations: Vec<ActivationKind>,
        provenance: Vec<Provenance>,
    ) -> Result<Self, MlpError> {
        let width = bias.len();
        let shape = |what: String| MlpError::Shape { layer: 0, what };
        if weights.len() != width * fan_in {
            return Err(shape(format!(
                "{} weights for a {width}x{fan_in} matrix",
                weights.len()
            )));
        }
        if activations.len() != width || provenance.len() != width {
            return Err(shape(format!(
                "{} activations and {} provenance entries for width {width}",
                activations.len(),
                provenance.len()
            )));
        }
        Ok(Layer { weights, bias, activations, provenance, fan_in })
    }

    pub fn width(&self) -> usize {
        self.bias.len()
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.fan_in + col]
    }

    pub fn set_weight(&mut self, row: usize, col: usize, value: f64) {
        self.weights[row * self.fan_in + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.weights[row * self.fan_in..(row + 1) * self.fan_in]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn activations(&self) -> &[ActivationKind] {
        &self.activations
    }

    pub fn activations_mut(&mut self) -> &mut [ActivationKind] {
        &mut self.activations
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Number of neurons that are identity carriers.
    pub fn carrier_count(&self) -> usize {
        self.provenance.iter().filter(|p| p.is_carrier()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerizedMlp {
    inputs: Vec<InputChannel>,
    input_provenance: Vec<Provenance>,
    layers: Vec<Layer>,
}

/// Per-layer activations of a batch. Entry `0` holds the inputs; entry
/// `l` holds layer `l`. Each buffer is pixel-major (`point * width + neuron`).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    widths: Vec<usize>,
    values: Vec<Vec<f64>>,
    points: usize,
}

impl ForwardCache {
    pub fn points(&self) -> usize {
        self.points
    }

    /// Number of computed layers (inputs excluded).
    pub fn layer_count(&self) -> usize {
        self.values.len() - 1
    }

    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    /// Values of layer `layer` (0 = inputs), pixel-major.
    pub fn values(&self, layer: usize) -> &[f64] {
        &self.values[layer]
    }

    /// One neuron's value at every point.
    pub fn neuron(&self, layer: usize, neuron: usize) -> Vec<f64> {
        let w = self.widths[layer];
        self.values[layer].iter().skip(neuron).step_by(w).copied().collect()
    }

    /// Raw `(h, s, v)` per point.
    pub fn outputs(&self) -> Vec<[f64; 3]> {
        self.values
            .last()
            .expect("at least the input layer")
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect()
    }
}

impl LayerizedMlp {
    pub fn new(
        inputs: Vec<InputChannel>,
        input_provenance: Vec<Provenance>,
        mut layers: Vec<Layer>,
    ) -> Result<Self, MlpError> {
        use InputChannel::*;
        if inputs != [X, Y, D] && inputs != [X, Y, D, B] {
            return Err(MlpError::Inputs(inputs));
        }
        if input_provenance.len() != inputs.len() {
            return Err(MlpError::Shape {
                layer: 0,
                what: format!("{} input provenance entries", input_provenance.len()),
            });
        }
        let Some(last) = layers.last() else {
            return Err(MlpError::Empty);
        };
        if last.width() != 3 {
            return Err(MlpError::OutputWidth(last.width()));
        }
        let mut prev = inputs.len();
        for (i, layer) in layers.iter_mut().enumerate() {
            if layer.fan_in != prev {
                return Err(MlpError::Shape {
                    layer: i + 1,
                    what: format!("fan-in {} but previous width {prev}", layer.fan_in),
                });
            }
            prev = layer.width();
        }
        Ok(LayerizedMlp { inputs, input_provenance, layers })
    }

    pub fn inputs(&self) -> &[InputChannel] {
        &self.inputs
    }

    pub fn input_provenance(&self) -> &[Provenance] {
        &self.input_provenance
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Widths from the input vector to the output layer.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.inputs.len()).chain(self.layers.iter().map(Layer::width)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn carrier_count(&self) -> usize {
        self.layers.iter().map(Layer::carrier_count).sum()
    }

    /// Provenance of every neuron, inputs first.
    pub fn provenance(&self) -> impl Iterator<Item = (usize, usize, Provenance)> + '_ {
        let inputs = self.input_provenance.iter().enumerate().map(|(i, &p)| (0, i, p));
        let rest = self.layers.iter().enumerate().flat_map(|(l, layer)| {
            layer.provenance.iter().enumerate().map(move |(i, &p)| (l + 1, i, p))
        });
        inputs.chain(rest)
    }

    pub fn clear_provenance(&mut self) {
        self.input_provenance.iter_mut().for_each(|p| *p = Provenance::None);
        for layer in &mut self.layers {
            layer.provenance.iter_mut().for_each(|p| *p = Provenance::None);
        }
    }

    /// Raw `(h, s, v)` at one point.
    pub fn eval(&self, point: &InputPoint) -> [f64; 3] {
        let mut a: Vec<f64> = self.inputs.iter().map(|c| c.read(point)).collect();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.clear();
            for r in 0..layer.width() {
                let mut pre = 0.0;
                for (w, x) in layer.row(r).iter().zip(&a) {
                    pre += w * x;
                }
                next.push(layer.activations[r].apply(pre + layer.bias[r]));
            }
            std::mem::swap(&mut a, &mut next);
        }
        [a[0], a[1], a[2]]
    }

    /// Runs a batch and keeps every layer's activations.
    pub fn forward(&self, points: &[InputPoint]) -> Result<ForwardCache, MlpError> {
        if points.is_empty() {
            return Err(MlpError::EmptyBatch);
        }
        let n = points.len();
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(
            points
                .iter()
                .flat_map(|p| self.inputs.iter().map(move |c| c.read(p)))
                .collect::<Vec<f64>>(),
        );
        for layer in &self.layers {
            let prev: &Vec<f64> = values.last().expect("inputs pushed");
            let (w, k) = (layer.width(), layer.fan_in);
            let mut out = vec![0.0; n * w];
            for p in 0..n {
                let a = &prev[p * k..(p + 1) * k];
                for r in 0..w {
                    let row = &layer.weights[r * k..(r + 1) * k];
                    let mut pre = 0.0;
                    for (wt, x) in row.iter().zip(a) {
                        pre += wt * x;
                    }
                    pre += layer.bias[r];
                    out[p * w + r] = layer.activations[r].apply(pre);
                }
            }
            values.push(out);
        }
        Ok(ForwardCache {
            widths: self.widths(),
            values,
            points: n,
        })
    }

    pub fn render(&self, resolution: usize) -> Result<ImageRgb, InvalidResolution> {
        let grid = input_grid(resolution)?;
        let cache = self.forward(&grid).expect("grid is nonempty");
        let pixels = cache.outputs().into_iter().map(|[h, s, v]| postprocess_hsv(h, s, v)).collect();
        Ok(ImageRgb::new(resolution, resolution, pixels).expect("grid has R*R points"))
    }

    pub fn to_text(&self) -> String {
        let text = MlpText {
            inputs: self.inputs.clone(),
            input_provenance: self.input_provenance.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerText {
                    weights: l.weights.chunks(l.fan_in.max(1)).map(<[f64]>::to_vec).collect(),
                    bias: l.bias.clone(),
                    activations: l.activations.clone(),
                    provenance: l.provenance.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&text).expect("network serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, MlpError> {
        let raw: MlpText = serde_json::from_str(text).map_err(|e| MlpError::Malformed(e.to_string()))?;
        let mut fan_in = raw.inputs.len();
        let mut layers = Vec::with_capacity(raw.layers.len());
        for (i, l) in raw.layers.into_iter().enumerate() {
            if l.weights.len() != l.bias.len() || l.weights.iter().any(|r| r.len() != fan_in) {
                return Err(MlpError::Shape {
                    layer: i + 1,
                    what: format!("weight rows do not form a {}x{fan_in} matrix", l.bias.len()),
                });
            }
            let width = l.bias.len();
            let layer = Layer::new(fan_in, l.weights.concat(), l.bias, l.activations, l.provenance)
                .map_err(|e| match e {
                    MlpError::Shape { what, .. } => MlpError::Shape { layer: i + 1, what },
                    other => other,
                })?;
            layers.push(layer);
            fan_in = width;
        }
        LayerizedMlp::new(raw.inputs, raw.input_provenance, layers)
    }

    /// Stable content hash of the text encoding.
    pub fn content_id(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
