//! Independent reference for the training loss: a naive scalar forward pass
//! and a colour conversion written without the library's helpers. Gradients
//! are checked against central differences of this loss.

#![allow(dead_code)]

use cppnlab::mlp::{InputChannel, Layer, Provenance};
use cppnlab::{ActivationKind, InputPoint, LayerizedMlp, LossSpace};
use rand::Rng;

pub fn activate(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Identity => x,
        ActivationKind::Sine => x.sin(),
        ActivationKind::Cosine => x.cos(),
        ActivationKind::Tanh => (x.exp() - (-x).exp()) / (x.exp() + (-x).exp()),
        ActivationKind::Sigmoid => 2.0 / (1.0 + (-x).exp()) - 1.0,
        ActivationKind::Gaussian => 2.0 * (-x * x).exp() - 1.0,
        ActivationKind::Relu => x.max(0.0),
    }
}

/// HSV to RGB via the per-channel `k = (n + 6h) mod 6` form.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let channel = |n: f64| {
        let k = (n + 6.0 * h) % 6.0;
        v - v * s * k.min(4.0 - k).clamp(0.0, 1.0)
    };
    [channel(5.0), channel(3.0), channel(1.0)]
}

fn canonical(raw: [f64; 3]) -> [f64; 3] {
    let h = raw[0] - raw[0].floor();
    [h, raw[1].clamp(0.0, 1.0), raw[2].abs().clamp(0.0, 1.0)]
}

/// Outputs and all pre-activations of a network at one point.
pub fn forward(m: &LayerizedMlp, p: &InputPoint) -> ([f64; 3], Vec<f64>) {
    let mut a: Vec<f64> = m
        .inputs()
        .iter()
        .map(|c| match c {
            InputChannel::X => p.x,
            InputChannel::Y => p.y,
            InputChannel::D => p.d,
            InputChannel::B => p.b,
        })
        .collect();
    let mut pres = Vec::new();
    for layer in m.layers() {
        let mut next = Vec::new();
        for r in 0..layer.width() {
            let mut pre = layer.bias()[r];
            for c in 0..layer.fan_in() {
                pre += layer.weight(r, c) * a[c];
            }
            pres.push(pre);
            next.push(activate(layer.activations()[r], pre));
        }
        a = next;
    }
    ([a[0], a[1], a[2]], pres)
}

/// Mean squared error over points and channels.
pub fn loss(m: &LayerizedMlp, points: &[InputPoint], targets: &[[f64; 3]], space: LossSpace) -> f64 {
    let mut total = 0.0;
    for (p, raw_target) in points.iter().zip(targets) {
        let (out, _) = forward(m, p);
        let pred = canonical(out);
        let want = canonical(*raw_target);
        match space {
            LossSpace::HsvPost => {
                let dh = (pred[0] - want[0]).abs();
                let dh = dh.min(1.0 - dh);
                total += dh * dh + (pred[1] - want[1]).powi(2) + (pred[2] - want[2]).powi(2);
            }
            LossSpace::Rgb => {
                let a = hsv_to_rgb(pred[0], pred[1], pred[2]);
                let b = hsv_to_rgb(want[0], want[1], want[2]);
                total += (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>();
            }
        }
    }
    total / (3 * points.len()) as f64
}

/// Random network over `x, y, d`; hidden widths 3..=12, every activation kind.
pub fn random_architecture(rng: &mut impl Rng, layers: usize) -> LayerizedMlp {
    let mut fan_in = 3;
    let mut out = Vec::new();
    for l in 0..layers {
        let width = if l + 1 == layers { 3 } else { rng.random_range(3..=12) };
        let kinds: Vec<ActivationKind> = (0..width)
            .map(|i| ActivationKind::ALL[(i + l) % ActivationKind::ALL.len()])
            .collect();
        let scale = 1.0 / (fan_in as f64).sqrt();
        out.push(
            Layer::new(
                fan_in,
                (0..width * fan_in).map(|_| rng.random_range(-2.0..2.0) * scale).collect(),
                (0..width).map(|_| rng.random_range(-0.5..0.5)).collect(),
                kinds,
                vec![Provenance::None; width],
            )
            .unwrap(),
        );
        fan_in = width;
    }
    LayerizedMlp::new(vec![InputChannel::X, InputChannel::Y, InputChannel::D], vec![Provenance::None; 3], out).unwrap()
}

/// Smallest distance of any pre-activation or post-processing branch point
/// from its kink over `points`.
pub fn kink_margin(m: &LayerizedMlp, points: &[InputPoint], targets: &[[f64; 3]]) -> f64 {
    let mut margin = f64::INFINITY;
    for (p, t) in points.iter().zip(targets) {
        let (out, pres) = forward(m, p);
        margin = margin.min(pres.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min));
        let h = out[0] - out[0].floor();
        let sector = 6.0 * h;
        margin = margin.min((sector - sector.round()).abs() / 6.0);
        margin = margin.min(h.min(1.0 - h));
        margin = margin.min(out[1].abs()).min((out[1] - 1.0).abs());
        margin = margin.min(out[2].abs()).min((out[2].abs() - 1.0).abs());
        let th = t[0] - t[0].floor();
        let dh = (h - th).abs();
        margin = margin.min((dh - 0.5).abs());
    }
    margin
}

/// Worst relative error between `analytic` and central differences of
/// [`loss`] over coordinates with `|analytic| > 1e-6`, plus how many were checked.
pub fn worst_relative_error(
    m: &LayerizedMlp,
    points: &[InputPoint],
    targets: &[[f64; 3]],
    space: LossSpace,
    analytic_weights: &[Vec<f64>],
    analytic_bias: &[Vec<f64>],
    eps: f64,
) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for l in 0..m.depth() {
        let n = m.layers()[l].weights().len();
        for i in 0..n + m.layers()[l].width() {
            let analytic = if i < n { analytic_weights[l][i] } else { analytic_bias[l][i - n] };
            if analytic.abs() <= 1e-6 {
                continue;
            }
            let shifted = |delta: f64| {
                let mut m2 = m.clone();
                let layer = &mut m2.layers_mut()[l];
                if i < n {
                    layer.weights_mut()[i] += delta;
                } else {
                    layer.bias_mut()[i - n] += delta;
                }
                loss(&m2, points, targets, space)
            };
            let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            worst = worst.max((fd - analytic).abs() / analytic.abs());
            checked += 1;
        }
    }
    (worst, checked)
}
