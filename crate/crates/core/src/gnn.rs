//! Three-layer edge-conditioned graph convolution network with a pairwise
//! absolute-difference readout.
//!
//! Every node starts with the scalar feature `1`. Layer `l` maps node states
//! `n_r × d_{l−1}` to `n_r × d_l`:
//!
//! ```text
//! v_i' = Θ v_i + (1/(n_r − 1)) Σ_{j ≠ i} F(e_ij) v_j + b
//! ```
//!
//! where `e_ij` is the cross-view edge vector and `F` is a two-stage affine map
//! with a ReLU in between whose output is reshaped to a `d_l × d_{l−1}` filter.
//! ReLU separates consecutive layers; the last layer is linear. The template is
//! `T_ij = (1/d_3) Σ_d |v_i^d − v_j^d|` (or the plain sum, see [`Readout`]).

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Graph, Var};
use crate::netdata::{upper_edges, MultiViewSample};
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum GnnError {
    #[error("sample has {found} views but the model expects {expected}")]
    ViewMismatch { expected: usize, found: usize },
    #[error("graph must have at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("edge vector has length {found}, expected {expected}")]
    EdgeLength { expected: usize, found: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("template violates invariants: {0}")]
    InvalidTemplate(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// How the `d_3` per-dimension absolute differences become one edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    #[default]
    Mean,
    Sum,
}

fn default_hidden() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dims: [usize; 3],
    pub n_v: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub seed: u64,
    #[serde(default)]
    pub readout: Readout,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        if self.dims.contains(&0) || self.n_v == 0 || self.hidden == 0 {
            return Err(GnnError::InvalidConfig(format!(
                "dims {:?}, n_v {} and hidden {} must all be ≥ 1",
                self.dims, self.n_v, self.hidden
            )));
        }
        Ok(())
    }

    /// `(d_{l−1}, d_l)` for each layer, with `d_0 = 1`.
    pub fn layer_dims(&self) -> [(usize, usize); 3] {
        [(1, self.dims[0]), (self.dims[0], self.dims[1]), (self.dims[1], self.dims[2])]
    }

    /// Runs the network on a recorded graph. `params` holds [`PARAMS_PER_LAYER`]
    /// variables per layer in [`ModelParams::tensors`] order.
    pub fn forward_graph(&self, g: &mut Graph, params: &[Var], input: &SampleInput) -> Result<ForwardVars, GnnError> {
        if input.n_v != self.n_v {
            return Err(GnnError::ViewMismatch { expected: self.n_v, found: input.n_v });
        }
        assert_eq!(params.len(), 3 * PARAMS_PER_LAYER, "parameter count");
        let features = g.constant(input.features.clone());
        let mut x = g.constant(Tensor::filled(input.n_r, 1, 1.0));
        for (l, &(d_in, d_out)) in self.layer_dims().iter().enumerate() {
            let vars = &params[l * PARAMS_PER_LAYER..(l + 1) * PARAMS_PER_LAYER];
            x = conv_graph(g, vars, features, x, input, d_in, d_out)?;
            if l < 2 {
                x = g.relu(x);
            }
        }
        let divisor = match self.readout {
            Readout::Mean => self.dims[2] as f64,
            Readout::Sum => 1.0,
        };
        let template = g.pairwise_abs_diff(x, divisor);
        Ok(ForwardVars { embeddings: x, template })
    }
}

pub const PARAMS_PER_LAYER: usize = 6;

/// Learnable weights of one edge-conditioned layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub d_in: usize,
    pub d_out: usize,
    /// `n_v × hidden`
    pub filter_w1: Tensor,
    /// `1 × hidden`
    pub filter_b1: Tensor,
    /// `hidden × (d_out · d_in)`
    pub filter_w2: Tensor,
    /// `1 × (d_out · d_in)`
    pub filter_b2: Tensor,
    /// Self-connection `d_out × d_in`.
    pub theta: Tensor,
    /// `1 × d_out`
    pub bias: Tensor,
}

impl LayerParams {
    fn tensors(&self) -> [&Tensor; PARAMS_PER_LAYER] {
        [&self.filter_w1, &self.filter_b1, &self.filter_w2, &self.filter_b2, &self.theta, &self.bias]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; PARAMS_PER_LAYER] {
        [&mut self.filter_w1, &mut self.filter_b1, &mut self.filter_w2, &mut self.filter_b2, &mut self.theta, &mut self.bias]
    }

    fn zeros(n_v: usize, hidden: usize, d_in: usize, d_out: usize) -> Self {
        Self {
            d_in,
            d_out,
            filter_w1: Tensor::zeros(n_v, hidden),
            filter_b1: Tensor::zeros(1, hidden),
            filter_w2: Tensor::zeros(hidden, d_out * d_in),
            filter_b2: Tensor::zeros(1, d_out * d_in),
            theta: Tensor::zeros(d_out, d_in),
            bias: Tensor::zeros(1, d_out),
        }
    }

    /// Output size of the filter-generating network.
    pub fn filter_output_size(&self) -> usize {
        self.filter_w2.cols()
    }
}

const PARAM_SUFFIXES: [&str; PARAMS_PER_LAYER] = ["filter.w1", "filter.b1", "filter.w2", "filter.b2", "theta", "bias"];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layers: Vec<LayerParams>,
}

/// Weights `U(−1/√fan_in, 1/√fan_in)`, biases zero; draws in a fixed order from
/// a ChaCha8 stream seeded with `config.seed`.
pub fn init_model(config: &ModelConfig) -> Result<ModelParams, GnnError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
    };
    let layers = config
        .layer_dims()
        .iter()
        .map(|&(d_in, d_out)| {
            let mut layer = LayerParams::zeros(config.n_v, config.hidden, d_in, d_out);
            layer.filter_w1 = uniform(config.n_v, config.hidden, config.n_v);
            layer.filter_w2 = uniform(config.hidden, d_out * d_in, config.hidden);
            layer.theta = uniform(d_out, d_in, d_in);
            layer
        })
        .collect();
    Ok(ModelParams { config: config.clone(), layers })
}

impl ModelParams {
    /// All-zero parameters for `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let layers = config.layer_dims().iter().map(|&(i, o)| LayerParams::zeros(config.n_v, config.hidden, i, o)).collect();
        Self { config: config.clone(), layers }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.layers.len()).flat_map(|l| PARAM_SUFFIXES.iter().map(move |s| format!("layer{}.{s}", l + 1))).collect()
    }

    pub fn to_vec(&self) -> Vec<Tensor> {
        self.tensors().into_iter().cloned().collect()
    }

    /// Replaces every tensor; shapes must match.
    pub fn assign(&mut self, values: &[Tensor]) {
        let slots = self.tensors_mut();
        assert_eq!(slots.len(), values.len());
        for (slot, v) in slots.into_iter().zip(values) {
            assert_eq!(slot.shape(), v.shape());
            *slot = v.clone();
        }
    }

    /// Registers every tensor as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors().into_iter().map(|t| g.param(t.clone())).collect()
    }

    /// Node embeddings `n_r × d_3` and the subject template.
    pub fn forward(&self, sample: &MultiViewSample) -> Result<(Tensor, Template), GnnError> {
        let input = SampleInput::new(sample)?;
        self.forward_input(&input)
    }

    pub fn forward_input(&self, input: &SampleInput) -> Result<(Tensor, Template), GnnError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| g.constant(t.clone())).collect();
        let out = self.config.forward_graph(&mut g, &vars, input)?;
        Ok((g.value(out.embeddings).clone(), Template::from_trusted(g.value(out.template).clone())))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let params = self
            .names()
            .into_iter()
            .zip(self.tensors())
            .map(|(name, t)| NamedTensor { name, shape: [t.rows(), t.cols()], data: t.data().to_vec() })
            .collect();
        Checkpoint { config: self.config.clone(), params }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, GnnError> {
        ckpt.config.validate()?;
        let mut model = Self::zeros(&ckpt.config);
        let names = model.names();
        if ckpt.params.len() != names.len() {
            return Err(GnnError::Checkpoint(format!("expected {} tensors, found {}", names.len(), ckpt.params.len())));
        }
        for ((slot, name), entry) in model.tensors_mut().into_iter().zip(&names).zip(&ckpt.params) {
            if &entry.name != name {
                return Err(GnnError::Checkpoint(format!("expected tensor {name}, found {}", entry.name)));
            }
            if [slot.rows(), slot.cols()] != entry.shape {
                return Err(GnnError::Checkpoint(format!("tensor {name} has shape {:?}, expected {:?}", entry.shape, slot.shape())));
            }
            *slot = Tensor::from_vec(entry.shape[0], entry.shape[1], entry.data.clone())
                .map_err(|e| GnnError::Checkpoint(format!("tensor {name}: {e}")))?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), GnnError> {
        let json = serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes");
        std::fs::write(path, json + "\n").map_err(|source| GnnError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, GnnError> {
        let text = std::fs::read_to_string(path).map_err(|source| GnnError::Io { path: path.to_path_buf(), source })?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&ckpt)
    }
}

/// Serialized model: config echo plus named tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Per-sample constants: the undirected edge list and its cross-view features.
#[derive(Debug, Clone)]
pub struct SampleInput {
    pub n_r: usize,
    pub n_v: usize,
    pub edges: Arc<[(usize, usize)]>,
    /// `edges.len() × n_v`
    pub features: Tensor,
}

impl SampleInput {
    pub fn new(sample: &MultiViewSample) -> Result<Self, GnnError> {
        let n_r = sample.n_r();
        if n_r < 2 {
            return Err(GnnError::TooFewNodes(n_r));
        }
        let edges: Arc<[(usize, usize)]> = upper_edges(n_r).into();
        let features = sample.edge_feature_matrix(&edges);
        Ok(Self { n_r, n_v: sample.n_v(), edges, features })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub embeddings: Var,
    pub template: Var,
}

fn filter_graph(g: &mut Graph, vars: &[Var], features: Var) -> Result<Var, AutodiffError> {
    let rows = g.shape(features).0;
    let h = g.matmul(features, vars[0])?;
    let b1 = g.broadcast(vars[1], rows, g.shape(vars[1]).1)?;
    let h = g.add(h, b1)?;
    let h = g.relu(h);
    let out = g.matmul(h, vars[2])?;
    let b2 = g.broadcast(vars[3], rows, g.shape(vars[3]).1)?;
    g.add(out, b2)
}

fn conv_graph(
    g: &mut Graph,
    vars: &[Var],
    features: Var,
    x: Var,
    input: &SampleInput,
    d_in: usize,
    d_out: usize,
) -> Result<Var, AutodiffError> {
    let theta_edges = filter_graph(g, vars, features)?;
    let agg = g.edge_aggregate(theta_edges, x, &input.edges, d_out, d_in)?;
    let agg = g.scale(agg, 1.0 / (input.n_r - 1) as f64);
    let theta_t = g.transpose(vars[4]);
    let self_term = g.matmul(x, theta_t)?;
    let bias = g.broadcast(vars[5], input.n_r, d_out)?;
    let out = g.add(self_term, agg)?;
    g.add(out, bias)
}

/// `Θ_ij = F(e_ij)` reshaped to `d_out × d_in`.
pub fn filter_forward(layer: &LayerParams, edge: &[f64]) -> Result<Tensor, GnnError> {
    let n_v = layer.filter_w1.rows();
    if edge.len() != n_v {
        return Err(GnnError::EdgeLength { expected: n_v, found: edge.len() });
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = layer.tensors().into_iter().map(|t| g.constant(t.clone())).collect();
    let e = g.constant(Tensor::row(edge.to_vec()));
    let out = filter_graph(&mut g, &vars, e)?;
    Ok(g.value(out).clone().reshaped(layer.d_out, layer.d_in).expect("filter output size"))
}

/// One convolution (no activation) applied to explicit node states `n_r × d_in`.
pub fn conv_layer(layer: &LayerParams, embeddings: &Tensor, sample: &MultiViewSample) -> Result<Tensor, GnnError> {
    let input = SampleInput::new(sample)?;
    if input.n_v != layer.filter_w1.rows() {
        return Err(GnnError::ViewMismatch { expected: layer.filter_w1.rows(), found: input.n_v });
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = layer.tensors().into_iter().map(|t| g.constant(t.clone())).collect();
    let features = g.constant(input.features.clone());
    let x = g.constant(embeddings.clone());
    let out = conv_graph(&mut g, &vars, features, x, &input, layer.d_in, layer.d_out)?;
    Ok(g.value(out).clone())
}

/// Symmetric, non-negative, zero-diagonal, finite `n_r × n_r` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Template(Tensor);

impl Template {
    pub fn new(matrix: Tensor) -> Result<Self, GnnError> {
        let bad = |m: String| Err(GnnError::InvalidTemplate(m));
        if matrix.rows() != matrix.cols() {
            return bad(format!("not square: {:?}", matrix.shape()));
        }
        let n = matrix.rows();
        for i in 0..n {
            if matrix.get(i, i) != 0.0 {
                return bad(format!("diagonal ({i},{i}) = {}", matrix.get(i, i)));
            }
            for j in 0..n {
                let x = matrix.get(i, j);
                if !x.is_finite() || x < 0.0 {
                    return bad(format!("entry ({i},{j}) = {x}"));
                }
                if x != matrix.get(j, i) {
                    return bad(format!("asymmetric at ({i},{j})"));
                }
            }
        }
        Ok(Self(matrix))
    }

    pub(crate) fn from_trusted(matrix: Tensor) -> Self {
        debug_assert!(Self::new(matrix.clone()).is_ok());
        Self(matrix)
    }

    pub fn matrix(&self) -> &Tensor {
        &self.0
    }

    pub fn into_matrix(self) -> Tensor {
        self.0
    }

    pub fn n_r(&self) -> usize {
        self.0.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dims: [usize; 3], n_v: usize) -> ModelConfig {
        ModelConfig { dims, n_v, hidden: 8, seed: 5, readout: Readout::Mean }
    }

    fn sample(n: usize, n_v: usize, seed: u64) -> MultiViewSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let views = (0..n_v)
            .map(|_| {
                let mut m = Tensor::zeros(n, n);
                for i in 0..n {
                    for j in (i + 1)..n {
                        let x = rng.random_range(0.05..1.0);
                        m.set(i, j, x);
                        m.set(j, i, x);
                    }
                }
                m
            })
            .collect();
        MultiViewSample::new(format!("s{seed}"), "x", views).unwrap()
    }

    #[test]
    fn filter_output_sizes_follow_dims() {
        let ad = init_model(&ModelConfig { hidden: 32, ..config([36, 24, 5], 4) }).unwrap();
        let sizes: Vec<usize> = ad.layers.iter().map(LayerParams::filter_output_size).collect();
        assert_eq!(sizes, vec![36, 864, 120]);
        let asd = init_model(&config([36, 24, 8], 6)).unwrap();
        assert_eq!(asd.layers[2].filter_output_size(), 192);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let c = config([4, 3, 2], 2);
        let a = init_model(&c).unwrap();
        assert_eq!(a, init_model(&c).unwrap());
        assert_ne!(a, init_model(&ModelConfig { seed: 6, ..c.clone() }).unwrap());
        for l in &a.layers {
            let bound = 1.0 / (c.hidden as f64).sqrt();
            assert!(l.filter_w2.data().iter().all(|x| x.abs() <= bound));
            assert!(l.filter_b1.data().iter().chain(l.filter_b2.data()).chain(l.bias.data()).all(|&x| x == 0.0));
        }
        assert!(init_model(&config([4, 0, 2], 2)).is_err());
    }

    #[test]
    fn zero_filter_gives_zero_theta() {
        let layer = LayerParams::zeros(3, 4, 2, 5);
        assert_eq!(filter_forward(&layer, &[0.3, 0.1, 0.9]).unwrap(), Tensor::zeros(5, 2));
        assert!(filter_forward(&layer, &[0.3]).is_err());
    }

    #[test]
    fn hand_set_scalar_filter() {
        let mut layer = LayerParams::zeros(1, 1, 1, 1);
        layer.filter_w1 = Tensor::scalar(2.0);
        layer.filter_w2 = Tensor::scalar(3.0);
        assert_eq!(filter_forward(&layer, &[1.0]).unwrap().item(), 6.0);
    }

    #[test]
    fn bias_only_flow() {
        let mut layer = LayerParams::zeros(2, 4, 3, 3);
        layer.bias = Tensor::row(vec![1.0, 1.0, 1.0]);
        let s = sample(5, 2, 1);
        let out = conv_layer(&layer, &Tensor::filled(5, 3, 0.7), &s).unwrap();
        assert_eq!(out, Tensor::filled(5, 3, 1.0));
    }

    #[test]
    fn identity_filter_averages_incident_weights() {
        // relu(e·1)·1 = e for non-negative e, so Θ_ij = e_ij.
        let mut layer = LayerParams::zeros(1, 1, 1, 1);
        layer.filter_w1 = Tensor::scalar(1.0);
        layer.filter_w2 = Tensor::scalar(1.0);
        let m = Tensor::from_rows(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 4.0], vec![2.0, 4.0, 0.0]]);
        let s = MultiViewSample::new("tri", "x", vec![m]).unwrap();
        let out = conv_layer(&layer, &Tensor::filled(3, 1, 1.0), &s).unwrap();
        assert_eq!(out.data(), &[1.5, 2.5, 3.0]);
    }

    #[test]
    fn zero_params_give_zero_template() {
        let model = ModelParams::zeros(&config([3, 3, 2], 2));
        let (_, t) = model.forward(&sample(6, 2, 2)).unwrap();
        assert_eq!(t.matrix(), &Tensor::zeros(6, 6));
    }

    #[test]
    fn identical_embeddings_give_zero_template() {
        // Filters and self-terms zero: every node ends at the same bias vector.
        let mut model = ModelParams::zeros(&config([3, 3, 2], 2));
        for l in &mut model.layers {
            l.bias = Tensor::filled(1, l.d_out, 0.4);
        }
        let (emb, t) = model.forward(&sample(5, 2, 3)).unwrap();
        assert!(emb.data().iter().all(|&x| x == emb.data()[0]));
        assert_eq!(t.matrix(), &Tensor::zeros(5, 5));
    }

    #[test]
    fn view_mismatch_rejected() {
        let model = init_model(&config([3, 3, 2], 3)).unwrap();
        assert!(matches!(model.forward(&sample(4, 2, 0)), Err(GnnError::ViewMismatch { expected: 3, found: 2 })));
    }

    #[test]
    fn sum_readout_is_d3_times_mean() {
        let c = config([3, 4, 3], 2);
        let mean_model = init_model(&c).unwrap();
        let mut sum_model = mean_model.clone();
        sum_model.config.readout = Readout::Sum;
        let s = sample(5, 2, 4);
        let (_, tm) = mean_model.forward(&s).unwrap();
        let (_, ts) = sum_model.forward(&s).unwrap();
        for (a, b) in tm.matrix().data().iter().zip(ts.matrix().data()) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_readout_matches_composed_primitives() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_fn(4, 3, |i, j| ((i * 5 + j * 3) % 7) as f64 * 0.3 - 0.8));
        let fused = g.pairwise_abs_diff(x, 3.0);
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for i in 0..4 {
            for j in 0..4 {
                left.push(i);
                right.push(j);
            }
        }
        let xi = g.index_select(x, &left).unwrap();
        let xj = g.index_select(x, &right).unwrap();
        let d = g.sub(xi, xj).unwrap();
        let a = g.abs(d);
        let s = g.sum_rows(a);
        let s = g.scale(s, 1.0 / 3.0);
        let composed = g.reshape(s, 4, 4).unwrap();
        for (p, q) in g.value(fused).data().iter().zip(g.value(composed).data()) {
            assert!((p - q).abs() < 1e-15);
        }
        let w = g.constant(Tensor::from_fn(4, 4, |i, j| (i * 4 + j) as f64 * 0.1 + 0.05));
        let lf = g.mul(fused, w).unwrap();
        let lf = g.sum(lf);
        let lc = g.mul(composed, w).unwrap();
        let lc = g.sum(lc);
        let gf = g.backward(lf).unwrap().wrt(x);
        let gc = g.backward(lc).unwrap().wrt(x);
        for (p, q) in gf.data().iter().zip(gc.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_aggregation_matches_per_edge_matmuls() {
        let s = sample(5, 2, 9);
        let input = SampleInput::new(&s).unwrap();
        let (d_in, d_out) = (3, 2);
        let mut g = Graph::new();
        let theta = g.param(Tensor::from_fn(input.edges.len(), d_out * d_in, |e, k| ((e * 3 + k) % 5) as f64 * 0.2 - 0.4));
        let x = g.param(Tensor::from_fn(5, d_in, |i, k| (i + k) as f64 * 0.3 - 0.5));
        let fused = g.edge_aggregate(theta, x, &input.edges, d_out, d_in).unwrap();

        let mut rows = Vec::new();
        for node in 0..5 {
            let mut acc: Option<Var> = None;
            for (e, &(a, b)) in input.edges.iter().enumerate() {
                let other = if a == node {
                    b
                } else if b == node {
                    a
                } else {
                    continue;
                };
                let th = g.index_select(theta, &[e]).unwrap();
                let th = g.reshape(th, d_out, d_in).unwrap();
                let xo = g.index_select(x, &[other]).unwrap();
                let xo = g.transpose(xo);
                let msg = g.matmul(th, xo).unwrap();
                acc = Some(match acc {
                    None => msg,
                    Some(prev) => g.add(prev, msg).unwrap(),
                });
            }
            let row = g.transpose(acc.unwrap());
            rows.push(row);
        }
        let composed = g.concat(&rows, crate::autodiff::Axis::Rows).unwrap();
        for (p, q) in g.value(fused).data().iter().zip(g.value(composed).data()) {
            assert!((p - q).abs() < 1e-14);
        }
        let w = g.constant(Tensor::from_fn(5, d_out, |i, k| 1.0 + i as f64 - 0.5 * k as f64));
        let lf = g.mul(fused, w).unwrap();
        let lf = g.sum(lf);
        let lc = g.mul(composed, w).unwrap();
        let lc = g.sum(lc);
        let (gf, gc) = (g.backward(lf).unwrap(), g.backward(lc).unwrap());
        for v in [theta, x] {
            for (p, q) in gf.wrt(v).data().iter().zip(gc.wrt(v).data()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = init_model(&config([3, 2, 2], 2)).unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        assert_eq!(ModelParams::load(&path).unwrap(), model);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.find("layer1.filter.w1").unwrap() < text.find("layer3.bias").unwrap());
    }
}
