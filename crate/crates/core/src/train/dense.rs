use super::loss::{pixel_loss, LossSpace, TargetError, TargetSpec};
use super::TrainError;
use crate::activation::ActivationKind;
use crate::grid::InputPoint;
use crate::mlp::LayerizedMlp;

/// Gradient of the mean squared error, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// Per layer, row-major like [`crate::mlp::Layer::weights`].
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn max_abs(&self) -> f64 {
        self.weights.iter().chain(&self.bias).flatten().fold(0.0, |m, g| m.max(g.abs()))
    }
}

struct LayerShape {
    fan_in: usize,
    width: usize,
    activations: Vec<ActivationKind>,
    /// Offset of the weights in the flat vector; biases follow them.
    offset: usize,
}

/// Flat parameter layout: per layer, row-major weights then biases.
pub(crate) struct Shape {
    inputs: Vec<crate::mlp::InputChannel>,
    layers: Vec<LayerShape>,
    len: usize,
    max_width: usize,
}

impl Shape {
    pub(crate) fn of(m: &LayerizedMlp) -> Self {
        let mut offset = 0;
        let layers: Vec<LayerShape> = m
            .layers()
            .iter()
            .map(|l| {
                let s = LayerShape {
                    fan_in: l.fan_in(),
                    width: l.width(),
                    activations: l.activations().to_vec(),
                    offset,
                };
                offset += l.weights().len() + l.width();
                s
            })
            .collect();
        let max_width = m.widths().into_iter().max().unwrap_or(0);
        Shape { inputs: m.inputs().to_vec(), layers, len: offset, max_width }
    }

    pub(crate) fn flatten(&self, m: &LayerizedMlp) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len);
        for l in m.layers() {
            out.extend_from_slice(l.weights());
            out.extend_from_slice(l.bias());
        }
        out
    }

    pub(crate) fn unflatten(&self, template: &LayerizedMlp, params: &[f64]) -> LayerizedMlp {
        let mut m = template.clone();
        for (l, s) in m.layers_mut().iter_mut().zip(&self.layers) {
            let n = s.width * s.fan_in;
            l.weights_mut().copy_from_slice(&params[s.offset..s.offset + n]);
            l.bias_mut().copy_from_slice(&params[s.offset + n..s.offset + n + s.width]);
        }
        m
    }

    fn gradient(&self, flat: &[f64]) -> Gradient {
        let mut g = Gradient { weights: Vec::new(), bias: Vec::new() };
        for s in &self.layers {
            let n = s.width * s.fan_in;
            g.weights.push(flat[s.offset..s.offset + n].to_vec());
            g.bias.push(flat[s.offset + n..s.offset + n + s.width].to_vec());
        }
        g
    }

    /// Mean squared error over points and channels; writes its gradient.
    pub(crate) fn loss_and_grad(
        &self,
        params: &[f64],
        points: &[InputPoint],
        targets: &[[f64; 3]],
        space: LossSpace,
        grad: &mut [f64],
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let depth = self.layers.len();
        // acts[0] = inputs, acts[l] = layer l; derivs aligned with acts
        let mut acts = vec![vec![0.0; self.max_width]; depth + 1];
        let mut derivs = vec![vec![0.0; self.max_width]; depth + 1];
        let mut delta = vec![0.0; self.max_width];
        let mut back = vec![0.0; self.max_width];
        let mut total = 0.0;
        for (p, target) in points.iter().zip(targets) {
            for (a, c) in acts[0].iter_mut().zip(&self.inputs) {
                *a = c.read(p);
            }
            for (l, s) in self.layers.iter().enumerate() {
                let (prev, rest) = acts.split_at_mut(l + 1);
                let (input, out) = (&prev[l][..s.fan_in], &mut rest[0]);
                let w = &params[s.offset..s.offset + s.width * s.fan_in];
                let b = &params[s.offset + s.width * s.fan_in..];
                for r in 0..s.width {
                    let row = &w[r * s.fan_in..(r + 1) * s.fan_in];
                    let mut pre = 0.0;
                    for (wt, x) in row.iter().zip(input) {
                        pre += wt * x;
                    }
                    let (v, d) = s.activations[r].apply_with_derivative(pre + b[r]);
                    out[r] = v;
                    derivs[l + 1][r] = d;
                }
            }
            let out = &acts[depth];
            let (sq, g) = pixel_loss([out[0], out[1], out[2]], *target, space);
            total += sq;
            for r in 0..3 {
                delta[r] = g[r] * derivs[depth][r];
            }
            for l in (0..depth).rev() {
                let s = &self.layers[l];
                let n = s.width * s.fan_in;
                let input = &acts[l][..s.fan_in];
                let (gw, gb) = grad[s.offset..s.offset + n + s.width].split_at_mut(n);
                for r in 0..s.width {
                    let dr = delta[r];
                    if dr == 0.0 {
                        continue;
                    }
                    gb[r] += dr;
                    for (gwi, x) in gw[r * s.fan_in..(r + 1) * s.fan_in].iter_mut().zip(input) {
                        *gwi += dr * x;
                    }
                }
                if l == 0 {
                    break;
                }
                let w = &params[s.offset..s.offset + n];
                back[..s.fan_in].iter_mut().for_each(|b| *b = 0.0);
                for r in 0..s.width {
                    let dr = delta[r];
                    if dr == 0.0 {
                        continue;
                    }
                    for (bc, wt) in back[..s.fan_in].iter_mut().zip(&w[r * s.fan_in..(r + 1) * s.fan_in]) {
                        *bc += dr * wt;
                    }
                }
                for c in 0..s.fan_in {
                    delta[c] = back[c] * derivs[l][c];
                }
            }
        }
        let scale = 1.0 / (3 * points.len()) as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        total * scale
    }
}

/// Mean squared error of `m` on `batch` against `target` compared in
/// `space`, with the exact gradient of every weight and bias.
pub fn loss_and_grad(
    m: &LayerizedMlp,
    batch: &[InputPoint],
    target: &TargetSpec,
    space: LossSpace,
) -> Result<(f64, Gradient), TrainError> {
    let targets = target.in_space(space)?;
    if targets.len() != batch.len() || batch.is_empty() {
        return Err(TargetError::BatchMismatch { target: targets.len(), batch: batch.len() }.into());
    }
    let shape = Shape::of(m);
    let mut flat = vec![0.0; shape.len];
    let mse = shape.loss_and_grad(&shape.flatten(m), batch, &targets, space, &mut flat);
    Ok((mse, shape.gradient(&flat)))
}
