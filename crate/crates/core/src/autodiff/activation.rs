use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Pointwise nonlinearities with analytic first and second derivatives.
///
/// ReLU uses the almost-everywhere convention: σ'(0) = 0 and σ'' ≡ 0.
/// GELU is the exact Gaussian-CDF form `x·Φ(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Linear,
    #[serde(rename = "relu")]
    ReLU,
    #[serde(rename = "gelu")]
    GELU,
    Swish,
    Tanh,
    Softplus,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 6] = [
        ActivationKind::Linear,
        ActivationKind::ReLU,
        ActivationKind::GELU,
        ActivationKind::Swish,
        ActivationKind::Tanh,
        ActivationKind::Softplus,
    ];

    pub fn is_smooth(self) -> bool {
        !matches!(self, ActivationKind::ReLU)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Linear => "linear",
            ActivationKind::ReLU => "relu",
            ActivationKind::GELU => "gelu",
            ActivationKind::Swish => "swish",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Softplus => "softplus",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            ActivationKind::Linear => x,
            ActivationKind::ReLU => x.max(0.0),
            ActivationKind::GELU => x * gauss_cdf(x),
            ActivationKind::Swish => x * sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    pub fn first(self, x: f64) -> f64 {
        match self {
            ActivationKind::Linear => 1.0,
            ActivationKind::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::GELU => gauss_cdf(x) + x * gauss_pdf(x),
            ActivationKind::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Softplus => sigmoid(x),
        }
    }

    pub fn second(self, x: f64) -> f64 {
        match self {
            ActivationKind::Linear | ActivationKind::ReLU => 0.0,
            ActivationKind::GELU => gauss_pdf(x) * (2.0 - x * x),
            ActivationKind::Swish => {
                let s = sigmoid(x);
                s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s))
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            ActivationKind::Softplus => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    /// σ, σ′ or σ″ depending on `order`.
    pub fn derivative(self, x: f64, order: u8) -> Result<f64> {
        match order {
            0 => Ok(self.eval(x)),
            1 => Ok(self.first(x)),
            2 => Ok(self.second(x)),
            _ => Err(Error::ThirdOrder),
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown activation '{s}'")))
    }
}

/// Total function over `order ∈ {0, 1, 2}`.
pub fn activation_eval(kind: ActivationKind, x: f64, order: u8) -> Result<f64> {
    kind.derivative(x, order)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gauss_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * INV_SQRT_2)
}

fn gauss_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}
