//! Binary soft-margin classifier used to score selected edge features.
//!
//! Features are standardized with statistics from the training rows. The linear
//! kernel is fit by Pegasos-style stochastic subgradient descent on the
//! regularized hinge loss, with a constant feature standing in for the bias.
//! The RBF kernel is fit by coordinate ascent on the box-constrained dual; the
//! kernel is augmented with `+1` so no separate bias term is needed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::netdata::stratified_assignment;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("labels must be 0 or 1, found {0}")]
    NotBinary(usize),
    #[error("need at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("features contain non-finite values")]
    NonFinite,
    #[error("{rows} feature rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("model expects {expected} features, got {found}")]
    FeatureCount { expected: usize, found: usize },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hyper {
    pub c: f64,
    #[serde(flatten)]
    pub kernel: Kernel,
}

/// `C ∈ {0.1, 1, 10}` × {linear, rbf with `γ ∈ {0.01, 0.1, 1}`}.
pub fn default_grid() -> Vec<Hyper> {
    let mut grid = Vec::with_capacity(12);
    for c in [0.1, 1.0, 10.0] {
        grid.push(Hyper { c, kernel: Kernel::Linear });
        for gamma in [0.01, 0.1, 1.0] {
            grid.push(Hyper { c, kernel: Kernel::Rbf { gamma } });
        }
    }
    grid
}

const LINEAR_EPOCHS: usize = 200;
const DUAL_MAX_SWEEPS: usize = 2000;
const DUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Tensor) -> Self {
        let (n, d) = x.shape();
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row_slice(r)) {
                *m += v / n as f64;
            }
        }
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row_slice(r)).zip(&mean) {
                *s += (v - m).powi(2) / n as f64;
            }
        }
        let scale = var.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Fitted {
    /// Last entry is the bias weight.
    Linear { w: Vec<f64> },
    Rbf { gamma: f64, support: Vec<Vec<f64>>, coef: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub hyper: Hyper,
    pub n_features: usize,
    scaler: Standardizer,
    fitted: Fitted,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-gamma * d2).exp()
}

fn check_inputs(x: &Tensor, labels: &[usize]) -> Result<(), ClassifierError> {
    if x.rows() != labels.len() {
        return Err(ClassifierError::LabelCount { rows: x.rows(), labels: labels.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(ClassifierError::NotBinary(bad));
    }
    if labels.len() < 4 {
        return Err(ClassifierError::TooFewSamples(labels.len()));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(ClassifierError::SingleClass);
    }
    if !x.all_finite() {
        return Err(ClassifierError::NonFinite);
    }
    Ok(())
}

impl ClassifierModel {
    /// Fits one hyperparameter setting. `labels` are 0/1.
    pub fn fit(x: &Tensor, labels: &[usize], hyper: Hyper, seed: u64) -> Result<Self, ClassifierError> {
        check_inputs(x, labels)?;
        let scaler = Standardizer::fit(x);
        let rows: Vec<Vec<f64>> = (0..x.rows()).map(|r| scaler.apply(x.row_slice(r))).collect();
        let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fitted = match hyper.kernel {
            Kernel::Linear => fit_linear(&rows, &y, hyper.c, &mut rng),
            Kernel::Rbf { gamma } => fit_rbf(rows, &y, hyper.c, gamma, &mut rng),
        };
        Ok(Self { hyper, n_features: x.cols(), scaler, fitted })
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        let z = self.scaler.apply(row);
        match &self.fitted {
            Fitted::Linear { w } => dot(&w[..z.len()], &z) + w[z.len()],
            Fitted::Rbf { gamma, support, coef } => support.iter().zip(coef).map(|(s, c)| c * (rbf(s, &z, *gamma) + 1.0)).sum(),
        }
    }

    /// Class 1 where the decision value is positive, else class 0.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>, ClassifierError> {
        if x.cols() != self.n_features {
            return Err(ClassifierError::FeatureCount { expected: self.n_features, found: x.cols() });
        }
        Ok((0..x.rows()).map(|r| usize::from(self.decision(x.row_slice(r)) > 0.0)).collect())
    }

    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64, ClassifierError> {
        let pred = self.predict(x)?;
        Ok(accuracy(&pred, labels))
    }
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Minimizes `(λ/2)‖w‖² + mean hinge` with `λ = 1/(C n)` and step `1/(λ t)`.
fn fit_linear(rows: &[Vec<f64>], y: &[f64], c: f64, rng: &mut ChaCha8Rng) -> Fitted {
    let n = rows.len();
    let d = rows[0].len();
    let lambda = 1.0 / (c * n as f64);
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for _ in 0..LINEAR_EPOCHS {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = y[i] * (dot(&w[..d], &rows[i]) + w[d]);
            let shrink = 1.0 - eta * lambda;
            for wk in w.iter_mut() {
                *wk *= shrink;
            }
            if margin < 1.0 {
                for (wk, xk) in w.iter_mut().zip(&rows[i]) {
                    *wk += eta * y[i] * xk;
                }
                w[d] += eta * y[i];
            }
        }
    }
    Fitted::Linear { w }
}

/// Coordinate ascent on `max Σα − ½ αᵀQα`, `0 ≤ α ≤ C`, `Q_ij = y_i y_j (K_ij + 1)`.
fn fit_rbf(rows: Vec<Vec<f64>>, y: &[f64], c: f64, gamma: f64, rng: &mut ChaCha8Rng) -> Fitted {
    let n = rows.len();
    let k = Tensor::from_fn(n, n, |i, j| rbf(&rows[i], &rows[j], gamma) + 1.0);
    let mut alpha = vec![0.0; n];
    // f_i = Σ_j α_j y_j K_ij
    let mut f = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..DUAL_MAX_SWEEPS {
        order.shuffle(rng);
        let mut max_change: f64 = 0.0;
        for &i in &order {
            let grad = y[i] * f[i] - 1.0;
            let new = (alpha[i] - grad / k.get(i, i)).clamp(0.0, c);
            let delta = new - alpha[i];
            if delta != 0.0 {
                alpha[i] = new;
                for (j, fj) in f.iter_mut().enumerate() {
                    *fj += delta * y[i] * k.get(i, j);
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < DUAL_TOL {
            break;
        }
    }
    let (support, coef) = rows.into_iter().zip(alpha.iter().zip(y)).filter(|(_, (a, _))| **a > 0.0).map(|(r, (a, yi))| (r, a * yi)).unzip();
    Fitted::Rbf { gamma, support, coef }
}

/// Outcome of [`train_classifier`].
#[derive(Debug, Clone)]
pub struct GridSearch {
    pub model: ClassifierModel,
    /// Inner cross-validation accuracy of the chosen setting.
    pub cv_accuracy: f64,
    pub scores: Vec<(Hyper, f64)>,
}

/// Picks the grid point with the best stratified `inner_folds`-fold accuracy
/// (earliest wins ties) and refits it on all rows.
pub fn train_classifier(x: &Tensor, labels: &[usize], grid: &[Hyper], inner_folds: usize, seed: u64) -> Result<GridSearch, ClassifierError> {
    check_inputs(x, labels)?;
    if grid.is_empty() {
        return Err(ClassifierError::EmptyGrid);
    }
    let k = inner_folds.clamp(2, labels.len());
    let assignment = stratified_assignment(labels, k, seed);
    let mut scores = Vec::with_capacity(grid.len());
    for &hyper in grid {
        let mut hits = 0usize;
        for fold in 0..k {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != fold).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == fold).collect();
            let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let train_x = select_rows(x, &train);
            let pred = match ClassifierModel::fit(&train_x, &train_labels, hyper, seed) {
                Ok(model) => model.predict(&select_rows(x, &test))?,
                // an inner split left one class only: predict it everywhere
                Err(ClassifierError::SingleClass | ClassifierError::TooFewSamples(_)) => vec![majority(&train_labels); test.len()],
                Err(e) => return Err(e),
            };
            hits += test.iter().zip(&pred).filter(|(&i, &p)| labels[i] == p).count();
        }
        scores.push((hyper, hits as f64 / labels.len() as f64));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.1 > scores[best].1 {
            best = i;
        }
    }
    let model = ClassifierModel::fit(x, labels, scores[best].0, seed)?;
    Ok(GridSearch { model, cv_accuracy: scores[best].1, scores })
}

fn majority(labels: &[usize]) -> usize {
    let ones = labels.iter().filter(|&&l| l == 1).count();
    usize::from(2 * ones > labels.len())
}

pub(crate) fn select_rows(x: &Tensor, rows: &[usize]) -> Tensor {
    Tensor::from_fn(rows.len(), x.cols(), |r, c| x.get(rows[r], c))
}
