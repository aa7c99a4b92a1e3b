//! Fully connected backbones, projection heads and predictors.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ActivationKind, DiffMap, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{matmul_tn, Tensor};

/// Batch-norm variance floor.
pub const BATCH_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitKind {
    GlorotUniform,
    HeUniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitScheme {
    pub kind: InitKind,
    pub seed: u64,
}

impl InitScheme {
    pub fn glorot(seed: u64) -> Self {
        InitScheme {
            kind: InitKind::GlorotUniform,
            seed,
        }
    }

    pub fn he(seed: u64) -> Self {
        InitScheme {
            kind: InitKind::HeUniform,
            seed,
        }
    }
}

/// Layer widths include the input width: `[in, hidden.., out]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_widths: Vec<usize>,
    /// One per hidden layer (`layer_widths.len() - 2` entries).
    pub activations: Vec<ActivationKind>,
    pub use_batch_norm: bool,
    pub output_normalize: bool,
}

impl NetworkSpec {
    /// Same activation on every hidden layer, no BN, raw output.
    pub fn mlp(layer_widths: Vec<usize>, activation: ActivationKind) -> Self {
        let hidden = layer_widths.len().saturating_sub(2);
        NetworkSpec {
            layer_widths,
            activations: vec![activation; hidden],
            use_batch_norm: false,
            output_normalize: false,
        }
    }

    pub fn with_batch_norm(mut self, on: bool) -> Self {
        self.use_batch_norm = on;
        self
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.output_normalize = on;
        self
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len().saturating_sub(1)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        if let Some(i) = self.layer_widths.iter().position(|&w| w == 0) {
            return Err(Error::invalid(format!("layer width {i} is zero")));
        }
        if self.activations.len() != self.layer_widths.len() - 2 {
            return Err(Error::invalid(format!(
                "{} hidden layers but {} activations",
                self.layer_widths.len() - 2,
                self.activations.len()
            )));
        }
        Ok(())
    }
}

/// A validated architecture. Parameters live in a separate [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitRecord {
    pub scheme: InitKind,
    pub seed: u64,
}

/// Ordered named tensors: per layer `weight` (out×in), `bias` (1×out) and,
/// for hidden layers with BN, `bn_scale` and `bn_shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    init: InitRecord,
}

const CHECKPOINT_FORMAT: &str = "headlab-params/v1";

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    init: InitRecord,
    order: Vec<String>,
    tensors: serde_json::Map<String, serde_json::Value>,
}

impl ParamStore {
    pub fn init_record(&self) -> InitRecord {
        self.init
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::invalid(format!("no parameter named {name}")))?;
        if slot.1.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set parameter",
                left: slot.1.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("parameter {name}")));
        }
        slot.1 = value;
        Ok(())
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.tensors().flat_map(|t| t.data()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Overwrites all entries from a flat vector in storage order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "assign_flat",
                left: vec![self.numel()],
                right: vec![flat.len()],
            });
        }
        let mut off = 0;
        for (_, t) in &mut self.entries {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Order-sensitive FNV-1a digest of every bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, t) in &self.entries {
            for b in name.bytes().chain(t.data().iter().flat_map(|x| x.to_bits().to_le_bytes())) {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// Every `*.weight` tensor of this store multiplied by `alpha`.
    pub fn scaled_weights(&self, alpha: f64) -> ParamStore {
        let mut out = self.clone();
        for (name, t) in &mut out.entries {
            if name.ends_with(".weight") {
                *t = t.scale(alpha);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut tensors = serde_json::Map::new();
        for (name, t) in &self.entries {
            let entry = CheckpointEntry {
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            };
            let v = serde_json::to_value(entry).map_err(|e| Error::Serialization(e.to_string()))?;
            tensors.insert(name.clone(), v);
        }
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            init: self.init,
            order: self.entries.iter().map(|(n, _)| n.clone()).collect(),
            tensors,
        };
        serde_json::to_string(&ck).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<ParamStore> {
        let ser = |e: serde_json::Error| Error::Serialization(e.to_string());
        let mut ck: Checkpoint = serde_json::from_str(s).map_err(ser)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Serialization(format!("unknown checkpoint format {:?}", ck.format)));
        }
        let mut entries = Vec::with_capacity(ck.order.len());
        for name in ck.order {
            let v = ck
                .tensors
                .remove(&name)
                .ok_or_else(|| Error::Serialization(format!("missing tensor {name}")))?;
            let e: CheckpointEntry = serde_json::from_value(v).map_err(ser)?;
            entries.push((name, Tensor::new(e.shape, e.data)?));
        }
        if !ck.tensors.is_empty() {
            return Err(Error::Serialization("tensors not listed in order".into()));
        }
        Ok(ParamStore {
            entries,
            init: ck.init,
        })
    }
}

impl fmt::Display for ParamStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, t) in &self.entries {
            writeln!(f, "{n}: {:?}", t.shape())?;
        }
        Ok(())
    }
}

fn has_bn(spec: &NetworkSpec, layer: usize) -> bool {
    spec.use_batch_norm && layer + 1 < spec.num_layers()
}

pub fn build_network(spec: NetworkSpec, init: InitScheme) -> Result<(Network, ParamStore)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
    let mut entries = Vec::new();
    for l in 0..spec.num_layers() {
        let (fan_in, fan_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
        let limit = match init.kind {
            InitKind::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            InitKind::HeUniform => (6.0 / fan_in as f64).sqrt(),
        };
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
        let bl = 1.0 / (fan_in as f64).sqrt();
        let b: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-bl..bl)).collect();
        entries.push((format!("layer{l}.weight"), Tensor::matrix(fan_out, fan_in, w)));
        entries.push((format!("layer{l}.bias"), Tensor::matrix(1, fan_out, b)));
        if has_bn(&spec, l) {
            entries.push((format!("layer{l}.bn_scale"), Tensor::full(&[1, fan_out], 1.0)));
            entries.push((format!("layer{l}.bn_shift"), Tensor::zeros(&[1, fan_out])));
        }
    }
    let params = ParamStore {
        entries,
        init: InitRecord {
            scheme: init.kind,
            seed: init.seed,
        },
    };
    Ok((Network { spec }, params))
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn supports_second_order(&self) -> bool {
        !self.spec.use_batch_norm
    }

    fn check_params(&self, params: &ParamStore) -> Result<()> {
        let expected: usize = (0..self.spec.num_layers())
            .map(|l| if has_bn(&self.spec, l) { 4 } else { 2 })
            .sum();
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "parameter store has {} tensors, network needs {expected}",
                params.len()
            )));
        }
        Ok(())
    }

    /// Records the forward pass; `params` are tape handles in store order.
    pub fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "network input",
                left: vec![self.input_dim()],
                right: tape.value(x).shape().to_vec(),
            });
        }
        let layers = self.spec.num_layers();
        let mut h = x;
        let mut p = params.iter().copied();
        let mut next = || p.next().ok_or_else(|| Error::invalid("too few parameter handles"));
        for l in 0..layers {
            let (w, b) = (next()?, next()?);
            let lin = tape.matmul_nt(h, w)?;
            h = tape.add_row(lin, b)?;
            if l + 1 < layers {
                if has_bn(&self.spec, l) {
                    let (scale, shift) = (next()?, next()?);
                    let n = tape.batch_norm(h, BATCH_NORM_EPS)?;
                    let r = tape.value(n).rows();
                    let sb = tape.broadcast_rows(scale, r)?;
                    let scaled = tape.mul(n, sb)?;
                    h = tape.add_row(scaled, shift)?;
                }
                h = tape.activation(h, self.spec.activations[l]);
            }
        }
        if self.spec.output_normalize {
            h = tape.normalize_rows(h)?;
        }
        Ok(h)
    }

    /// Records parameters as constants and runs the forward pass.
    pub fn record_frozen(&self, tape: &mut Tape, params: &ParamStore, x: Var) -> Result<Var> {
        self.check_params(params)?;
        let handles: Vec<Var> = params.tensors().map(|t| tape.constant(t.clone())).collect();
        self.record(tape, &handles, x)
    }

    /// Pre-activation values of every hidden layer (after BN if present).
    pub fn hidden_pre_activations(&self, params: &ParamStore, batch: &Tensor) -> Result<Vec<Tensor>> {
        self.check_params(params)?;
        let mut tape = Tape::new();
        let x = tape.leaf(batch.as_matrix());
        let mut out = Vec::new();
        let layers = self.spec.num_layers();
        let handles: Vec<Var> = params.tensors().map(|t| tape.constant(t.clone())).collect();
        let mut idx = 0;
        let mut h = x;
        for l in 0..layers {
            let lin = tape.matmul_nt(h, handles[idx])?;
            h = tape.add_row(lin, handles[idx + 1])?;
            idx += 2;
            if l + 1 < layers {
                if has_bn(&self.spec, l) {
                    let n = tape.batch_norm(h, BATCH_NORM_EPS)?;
                    let r = tape.value(n).rows();
                    let sb = tape.broadcast_rows(handles[idx], r)?;
                    let scaled = tape.mul(n, sb)?;
                    h = tape.add_row(scaled, handles[idx + 1])?;
                    idx += 2;
                }
                out.push(tape.value(h).clone());
                h = tape.activation(h, self.spec.activations[l]);
            }
        }
        Ok(out)
    }
}

/// Evaluates the network on a batch (rows are samples). A single vector is
/// treated as a batch of one.
pub fn forward(net: &Network, params: &ParamStore, batch: &Tensor) -> Result<Tensor> {
    if !batch.is_finite() {
        return Err(Error::NonFinite("network input".into()));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(batch.as_matrix());
    let y = net.record_frozen(&mut tape, params, x)?;
    Ok(tape.value(y).clone())
}

/// Scales every head weight matrix by `alpha`; biases and BN parameters stay.
pub fn pseudo_collapse_init(params: &ParamStore, alpha: f64) -> Result<ParamStore> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("pseudo-collapse factor must lie in (0, 1], got {alpha}")));
    }
    Ok(params.scaled_weights(alpha))
}

/// WᵀW for a k×d linear head.
pub fn linear_head_gram(w: &Tensor) -> Tensor {
    let (k, d) = w.dims2();
    Tensor::matrix(d, d, matmul_tn(w.data(), w.data(), d, k, d))
}

/// A network together with its parameters, usable as a [`DiffMap`] of its input.
#[derive(Clone, Debug)]
pub struct Block {
    pub net: Network,
    pub params: ParamStore,
}

impl Block {
    pub fn new(spec: NetworkSpec, init: InitScheme) -> Result<Block> {
        let (net, params) = build_network(spec, init)?;
        Ok(Block { net, params })
    }

    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        forward(&self.net, &self.params, batch)
    }
}

impl DiffMap for Block {
    fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.net.record_frozen(tape, &self.params, x)
    }

    fn supports_second_order(&self) -> bool {
        self.net.supports_second_order()
    }
}

/// Backbone, projection head and optional predictor on the online branch.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub backbone: Block,
    pub head: Block,
    pub predictor: Option<Block>,
}

impl Pipeline {
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        [Some(&self.backbone), Some(&self.head), self.predictor.as_ref()]
            .into_iter()
            .flatten()
    }

    pub fn supports_second_order(&self) -> bool {
        self.blocks().all(|b| b.net.supports_second_order())
    }

    /// Backbone then head.
    pub fn embed(&self, batch: &Tensor) -> Result<Tensor> {
        self.head.forward(&self.backbone.forward(batch)?)
    }
}

/// One-hidden-layer predictor k→k→k with the head's activation.
pub fn default_predictor_spec(head: &NetworkSpec) -> NetworkSpec {
    let k = head.output_dim();
    let act = head.activations.first().copied().unwrap_or(ActivationKind::Linear);
    NetworkSpec::mlp(vec![k, k, k], act)
}
