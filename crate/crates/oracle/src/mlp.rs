//! Scalar-loop forward evaluation of fully connected networks.

use statrs::function::erf::erf;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Act {
    Identity,
    Relu,
    Swish,
    Gelu,
    Tanh,
    Softplus,
}

impl Act {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Act::Identity => x,
            Act::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Act::Swish => x / (1.0 + (-x).exp()),
            Act::Gelu => 0.5 * x * (1.0 + erf(x / 2f64.sqrt())),
            Act::Tanh => x.tanh(),
            Act::Softplus => (1.0 + x.exp()).ln(),
        }
    }
}

/// One dense layer: `weight[o][i]`, `bias[o]`.
#[derive(Clone, Debug)]
pub struct Layer {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Hidden layers use `act`; the last layer is affine. Optionally
/// ℓ2-normalizes the output.
pub fn mlp_forward(layers: &[Layer], act: Act, x: &[f64], normalize: bool) -> Vec<f64> {
    let mut h = x.to_vec();
    for (li, layer) in layers.iter().enumerate() {
        let mut out = Vec::with_capacity(layer.bias.len());
        for (o, row) in layer.weight.iter().enumerate() {
            let mut s = layer.bias[o];
            for (i, w) in row.iter().enumerate() {
                s += w * h[i];
            }
            out.push(if li + 1 < layers.len() { act.apply(s) } else { s });
        }
        h = out;
    }
    if normalize {
        let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        h.iter_mut().for_each(|v| *v /= n);
    }
    h
}
