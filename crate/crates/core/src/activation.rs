//! Activation functions used by CPPN nodes and layerized MLP neurons.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Per-neuron activation kind.
///
/// The sigmoid and gaussian variants are rescaled to the range `[-1, 1]`,
/// which is the convention of Picbreeder-era CPPNs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Identity,
    Sine,
    Cosine,
    Tanh,
    Sigmoid,
    Gaussian,
    Relu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 7] = [
        ActivationKind::Identity,
        ActivationKind::Sine,
        ActivationKind::Cosine,
        ActivationKind::Tanh,
        ActivationKind::Sigmoid,
        ActivationKind::Gaussian,
        ActivationKind::Relu,
    ];

    /// The set evolution draws from when creating nodes. ReLU is reserved
    /// for the conventional-MLP variant and never appears in evolved genomes.
    pub const CPPN: [ActivationKind; 6] = [
        ActivationKind::Identity,
        ActivationKind::Sine,
        ActivationKind::Cosine,
        ActivationKind::Tanh,
        ActivationKind::Sigmoid,
        ActivationKind::Gaussian,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Identity => x,
            ActivationKind::Sine => x.sin(),
            ActivationKind::Cosine => x.cos(),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => 2.0 / (1.0 + (-x).exp()) - 1.0,
            ActivationKind::Gaussian => 2.0 * (-x * x).exp() - 1.0,
            ActivationKind::Relu => x.max(0.0),
        }
    }

    /// Value and derivative at `x` in one call.
    ///
    /// ReLU uses derivative 0 at exactly 0.
    #[inline]
    pub fn apply_with_derivative(self, x: f64) -> (f64, f64) {
        match self {
            ActivationKind::Identity => (x, 1.0),
            ActivationKind::Sine => {
                let (s, c) = x.sin_cos();
                (s, c)
            }
            ActivationKind::Cosine => {
                let (s, c) = x.sin_cos();
                (c, -s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
            ActivationKind::Sigmoid => {
                let sig = 1.0 / (1.0 + (-x).exp());
                (2.0 * sig - 1.0, 2.0 * sig * (1.0 - sig))
            }
            ActivationKind::Gaussian => {
                let e = (-x * x).exp();
                (2.0 * e - 1.0, -4.0 * x * e)
            }
            ActivationKind::Relu => {
                if x > 0.0 {
                    (x, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Sine => "sine",
            ActivationKind::Cosine => "cosine",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Gaussian => "gaussian",
            ActivationKind::Relu => "relu",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown activation tag `{0}`")]
pub struct UnknownActivation(pub String);

impl FromStr for ActivationKind {
    type Err = UnknownActivation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownActivation(s.to_string()))
    }
}
