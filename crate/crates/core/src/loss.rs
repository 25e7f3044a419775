//! Topology-constrained normalization loss.
//!
//! For a template `T` and a subset `S` of training subjects:
//!
//! ```text
//! L = Σ_v [ λ_v Σ_{i∈S} ‖T − X_i^v‖_F  +  β · (KL(t‖x^v_S) + KL(x^v_S‖t)) ]
//! ```
//!
//! `t` is the normalized node-strength distribution of `T`, `x^v_S` the mean
//! distribution of view `v` over `S`, and `λ_v` rescales views with different
//! weight ranges. Logarithms are base 2. Distributions are smoothed with
//! [`SMOOTHING_EPS`] so both KL directions stay finite.

use rand::seq::index::sample;
use rand::Rng;

use crate::autodiff::{AutodiffError, Graph, Var};
use crate::netdata::MultiViewSample;
use crate::tensor::Tensor;

pub const SMOOTHING_EPS: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("need at least one sample")]
    Empty,
    #[error("subset size {size} exceeds the {available} available samples")]
    SubsetTooLarge { size: usize, available: usize },
    #[error("view {view} has zero mean weight")]
    ZeroMeanView { view: usize },
    #[error("degenerate graph: total node strength is zero")]
    DegenerateGraph,
    #[error("negative total strength {0}")]
    NegativeStrength(f64),
    #[error("{0} is not finite")]
    NonFinite(&'static str),
    #[error("expected {expected} views, found {found}")]
    ViewCount { expected: usize, found: usize },
    #[error("beta must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// `λ_v = (1/μ_v) / max_j (1/μ_j)`; the view with the smallest mean gets 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewNormWeights {
    means: Vec<f64>,
    lambda: Vec<f64>,
}

impl ViewNormWeights {
    pub fn from_means(means: Vec<f64>) -> Result<Self, LossError> {
        if means.is_empty() {
            return Err(LossError::Empty);
        }
        if let Some(view) = means.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(LossError::ZeroMeanView { view });
        }
        let max_inv = means.iter().map(|m| 1.0 / m).fold(f64::MIN, f64::max);
        let lambda = means.iter().map(|m| (1.0 / m) / max_inv).collect();
        Ok(Self { means, lambda })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn n_v(&self) -> usize {
        self.lambda.len()
    }
}

/// Off-diagonal mean of view `v` over all samples.
pub fn view_mean(samples: &[&MultiViewSample], v: usize) -> f64 {
    let n = samples[0].n_r();
    let total: f64 = samples.iter().map(|s| s.view(v).sum()).sum();
    total / (samples.len() * n * (n - 1)) as f64
}

pub fn view_norm_weights(samples: &[&MultiViewSample]) -> Result<ViewNormWeights, LossError> {
    let first = samples.first().ok_or(LossError::Empty)?;
    ViewNormWeights::from_means((0..first.n_v()).map(|v| view_mean(samples, v)).collect())
}

/// Uniform draw of `size` distinct entries of `train`, in draw order.
pub fn sample_subset<R: Rng + ?Sized>(train: &[usize], size: usize, rng: &mut R) -> Result<Vec<usize>, LossError> {
    if size > train.len() {
        return Err(LossError::SubsetTooLarge { size, available: train.len() });
    }
    Ok(sample(rng, train.len(), size).into_iter().map(|k| train[k]).collect())
}

/// Smoothed normalized node strengths; entries sum to 1 and are all positive.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthDistribution(Vec<f64>);

impl StrengthDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Wraps an already-normalized vector after smoothing it.
    pub fn from_probabilities(p: &[f64]) -> Self {
        Self(smooth(p))
    }
}

pub(crate) fn smooth(p: &[f64]) -> Vec<f64> {
    let denom = 1.0 + p.len() as f64 * SMOOTHING_EPS;
    p.iter().map(|x| (x + SMOOTHING_EPS) / denom).collect()
}

pub fn strength_distribution(m: &Tensor) -> Result<StrengthDistribution, LossError> {
    let k: Vec<f64> = (0..m.rows()).map(|r| m.row_slice(r).iter().sum()).collect();
    let total: f64 = k.iter().sum();
    if total == 0.0 {
        return Err(LossError::DegenerateGraph);
    }
    if !total.is_finite() {
        return Err(LossError::NonFinite("node strength"));
    }
    let p: Vec<f64> = k.iter().map(|x| x / total).collect();
    Ok(StrengthDistribution(smooth(&p)))
}

/// Mean of per-sample distributions, renormalized.
pub fn mean_distribution<'a>(members: impl IntoIterator<Item = &'a StrengthDistribution>) -> Result<StrengthDistribution, LossError> {
    let mut acc: Vec<f64> = Vec::new();
    for d in members {
        if acc.is_empty() {
            acc = vec![0.0; d.len()];
        }
        for (a, p) in acc.iter_mut().zip(d.probabilities()) {
            *a += p;
        }
    }
    if acc.is_empty() {
        return Err(LossError::Empty);
    }
    let total: f64 = acc.iter().sum();
    Ok(StrengthDistribution(acc.into_iter().map(|a| a / total).collect()))
}

pub fn ground_truth_distribution(subset: &[&MultiViewSample], v: usize) -> Result<StrengthDistribution, LossError> {
    let dists = subset.iter().map(|s| strength_distribution(s.view(v))).collect::<Result<Vec<_>, _>>()?;
    mean_distribution(&dists)
}

/// `Σ t log2(t/x) + Σ x log2(x/t)`.
pub fn symmetric_kl(t: &StrengthDistribution, x: &StrengthDistribution) -> Result<f64, LossError> {
    let value: f64 = t.0.iter().zip(&x.0).map(|(&a, &b)| a * (a / b).log2() + b * (b / a).log2()).sum();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LossError::NonFinite("symmetric KL"))
    }
}

pub fn centeredness_loss(template: &Tensor, subset: &[&MultiViewSample], v: usize, lambda_v: f64) -> f64 {
    subset.iter().map(|s| template.distance(s.view(v))).sum::<f64>() * lambda_v
}

/// Per-sample, per-view strength distributions computed once and averaged on demand.
#[derive(Debug, Clone)]
pub struct StrengthCache {
    per_sample: Vec<Vec<StrengthDistribution>>,
}

impl StrengthCache {
    pub fn new(samples: &[&MultiViewSample]) -> Result<Self, LossError> {
        let per_sample = samples
            .iter()
            .map(|s| s.views().iter().map(strength_distribution).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { per_sample })
    }

    /// `x^v_S` for every view, where `subset` indexes the samples given to [`new`](Self::new).
    pub fn ground_truth(&self, subset: &[usize]) -> Result<Vec<StrengthDistribution>, LossError> {
        let n_v = self.per_sample.first().map_or(0, Vec::len);
        (0..n_v).map(|v| mean_distribution(subset.iter().map(|&i| &self.per_sample[i][v]))).collect()
    }
}

/// Loss value and its two parts; `kl` already includes the factor β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcnlValue {
    pub total: f64,
    pub centeredness: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TcnlVars {
    pub total: Var,
    pub centeredness: Var,
    pub kl: Var,
}

impl TcnlVars {
    pub fn values(&self, g: &Graph) -> TcnlValue {
        TcnlValue { total: g.value(self.total).item(), centeredness: g.value(self.centeredness).item(), kl: g.value(self.kl).item() }
    }
}

/// Smoothed strength distribution of a recorded `n × n` matrix, as an `n × 1` variable.
pub fn strength_distribution_graph(g: &mut Graph, template: Var) -> Result<Var, LossError> {
    let n = g.shape(template).0;
    let k = g.sum_rows(template);
    let total = g.sum(k);
    let tv = g.value(total).item();
    if tv == 0.0 {
        return Err(LossError::DegenerateGraph);
    }
    if tv < 0.0 {
        return Err(LossError::NegativeStrength(tv));
    }
    let total = g.broadcast(total, n, 1)?;
    let p = g.div(k, total)?;
    let p = g.offset(p, SMOOTHING_EPS);
    Ok(g.scale(p, 1.0 / (1.0 + n as f64 * SMOOTHING_EPS)))
}

/// β · Σ_v [KL(t‖x_v) + KL(x_v‖t)], using KL(t‖x) + KL(x‖t) = Σ (t − x)(log2 t − log2 x).
fn strength_kl(g: &mut Graph, template: Var, truths: &[StrengthDistribution], beta: f64) -> Result<Var, LossError> {
    let t = strength_distribution_graph(g, template)?;
    let log_t = g.log2(t);
    let mut kls = Vec::with_capacity(truths.len());
    for truth in truths {
        let p = truth.probabilities();
        let x = g.constant(Tensor::column(p.to_vec()));
        let log_x = g.constant(Tensor::column(p.iter().map(|q| q.log2()).collect()));
        let diff = g.sub(t, x)?;
        let log_ratio = g.sub(log_t, log_x)?;
        let prod = g.mul(diff, log_ratio)?;
        kls.push(g.sum(prod));
    }
    let stacked = g.concat(&kls, crate::autodiff::Axis::Rows)?;
    let kl_sum = g.sum(stacked);
    Ok(g.scale(kl_sum, beta))
}

/// Records the loss for `template` against `subset` whose per-view ground-truth
/// distributions are `truths`.
pub fn tcnl_graph(
    g: &mut Graph,
    template: Var,
    subset: &[&MultiViewSample],
    truths: &[StrengthDistribution],
    weights: &ViewNormWeights,
    beta: f64,
) -> Result<TcnlVars, LossError> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(LossError::InvalidBeta(beta));
    }
    if subset.is_empty() {
        return Err(LossError::Empty);
    }
    let n_v = weights.n_v();
    for s in subset {
        if s.n_v() != n_v {
            return Err(LossError::ViewCount { expected: n_v, found: s.n_v() });
        }
    }
    if truths.len() != n_v {
        return Err(LossError::ViewCount { expected: n_v, found: truths.len() });
    }

    let mut distances = Vec::with_capacity(n_v);
    for (v, &lambda) in weights.lambda().iter().enumerate() {
        let mut norms = Vec::with_capacity(subset.len());
        for s in subset {
            let x = g.constant(s.view(v).clone());
            let d = g.sub(template, x)?;
            norms.push(g.frobenius(d));
        }
        let stacked = g.concat(&norms, crate::autodiff::Axis::Rows)?;
        let summed = g.sum(stacked);
        distances.push(g.scale(summed, lambda));
    }
    let stacked = g.concat(&distances, crate::autodiff::Axis::Rows)?;
    let centeredness = g.sum(stacked);

    // With β = 0 the strength term is dropped, so a template with no edge weight
    // is still a valid (if poor) point for the centeredness-only objective.
    let kl = if beta == 0.0 { g.constant(Tensor::scalar(0.0)) } else { strength_kl(g, template, truths, beta)? };
    let total = g.add(centeredness, kl)?;
    if !g.value(total).item().is_finite() {
        return Err(LossError::NonFinite("loss"));
    }
    Ok(TcnlVars { total, centeredness, kl })
}

/// Evaluates the loss on a fixed template; ground truths are computed from `subset`.
pub fn tcnl(template: &Tensor, subset: &[&MultiViewSample], weights: &ViewNormWeights, beta: f64) -> Result<TcnlValue, LossError> {
    let truths = (0..weights.n_v()).map(|v| ground_truth_distribution(subset, v)).collect::<Result<Vec<_>, _>>()?;
    let mut g = Graph::new();
    let t = g.constant(template.clone());
    Ok(tcnl_graph(&mut g, t, subset, &truths, weights, beta)?.values(&g))
}
