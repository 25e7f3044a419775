//! Template evaluation: centeredness, baseline integrators, discriminative edge
//! scoring and the two-population classification protocol.

mod classifier;

pub use classifier::{accuracy, default_grid, train_classifier, ClassifierError, ClassifierModel, GridSearch, Hyper, Kernel};

use serde::{Deserialize, Serialize};

use crate::gnn::{GnnError, ModelParams, Template};
use crate::netdata::{split_folds, upper_edges, DataError, MultiViewSample, Population};
use crate::tensor::Tensor;
use crate::topology::TopologyError;
use crate::trainer::{median_matrix, train_fold, TrainConfig, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need at least one {0}")]
    Empty(&'static str),
    #[error("template has {template} nodes but samples have {samples}")]
    NodeMismatch { template: usize, samples: usize },
    #[error("populations disagree: {0}")]
    PopulationMismatch(String),
    #[error("both templates are identically zero")]
    ZeroTemplates,
    #[error("k = {k} exceeds the {max} available edges")]
    KTooLarge { k: usize, max: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Train(Box<TrainError>),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

impl From<TrainError> for EvalError {
    fn from(e: TrainError) -> Self {
        EvalError::Train(Box::new(e))
    }
}

/// Mean Frobenius distance of a template to every (sample, view) matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenterednessScore {
    pub mean: f64,
    pub per_view: Vec<f64>,
}

pub fn centeredness_score(template: &Tensor, samples: &[&MultiViewSample]) -> Result<CenterednessScore, EvalError> {
    let first = samples.first().ok_or(EvalError::Empty("test sample"))?;
    if first.n_r() != template.rows() {
        return Err(EvalError::NodeMismatch { template: template.rows(), samples: first.n_r() });
    }
    let n_v = first.n_v();
    let mut per_view = vec![0.0; n_v];
    for s in samples {
        for (acc, view) in per_view.iter_mut().zip(s.views()) {
            *acc += template.distance(view);
        }
    }
    let n = samples.len() as f64;
    let mean = per_view.iter().sum::<f64>() / (n * n_v as f64);
    Ok(CenterednessScore { mean, per_view: per_view.into_iter().map(|d| d / n).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Mean,
    Median,
}

/// Entry-wise mean or median over every (subject, view) matrix.
pub fn baseline_template(samples: &[&MultiViewSample], method: BaselineMethod) -> Result<Template, EvalError> {
    let matrices: Vec<Tensor> = samples.iter().flat_map(|s| s.views().iter().cloned()).collect();
    let first = matrices.first().ok_or(EvalError::Empty("sample"))?;
    let m = match method {
        BaselineMethod::Mean => {
            let mut acc = Tensor::zeros(first.rows(), first.cols());
            for m in &matrices {
                acc.add_scaled(m, 1.0);
            }
            acc.map(|x| x / matrices.len() as f64)
        }
        BaselineMethod::Median => median_matrix(&matrices),
    };
    Ok(Template::new(m)?)
}

/// How the residual part of the edge score is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// `|T_A_ij − T_B_ij|` per edge.
    #[default]
    Entrywise,
    /// `‖T_A − T_B‖_F` added to every edge.
    Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminativenessMatrix {
    pub scores: Tensor,
    pub alpha: f64,
}

fn off_diagonal_mean(t: &Tensor) -> f64 {
    let n = t.rows();
    t.sum() / (n * (n - 1)) as f64
}

/// `max(a/b, b/a) + α·|a − b|` per edge with `α = 2/(μ_A + μ_B)`; the ratio is
/// zero when either entry is zero.
pub fn discriminativeness(a: &Tensor, b: &Tensor) -> Result<DiscriminativenessMatrix, EvalError> {
    discriminativeness_with(a, b, ResidualMode::Entrywise)
}

pub fn discriminativeness_with(a: &Tensor, b: &Tensor, mode: ResidualMode) -> Result<DiscriminativenessMatrix, EvalError> {
    if a.shape() != b.shape() {
        return Err(EvalError::NodeMismatch { template: a.rows(), samples: b.rows() });
    }
    let denom = off_diagonal_mean(a) + off_diagonal_mean(b);
    if denom == 0.0 {
        return Err(EvalError::ZeroTemplates);
    }
    let alpha = 2.0 / denom;
    let global = a.distance(b);
    let scores = Tensor::from_fn(a.rows(), a.cols(), |i, j| {
        if i == j {
            return 0.0;
        }
        let (x, y) = (a.get(i, j), b.get(i, j));
        let ratio = if x == 0.0 || y == 0.0 { 0.0 } else { (x / y).max(y / x) };
        let residual = match mode {
            ResidualMode::Entrywise => (x - y).abs(),
            ResidualMode::Matrix => global,
        };
        ratio + alpha * residual
    });
    Ok(DiscriminativenessMatrix { scores, alpha })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredEdge {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

/// Highest-scoring undirected edges, best first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeSelection {
    pub edges: Vec<ScoredEdge>,
}

impl EdgeSelection {
    pub fn k(&self) -> usize {
        self.edges.len()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }

    /// The first `k` edges.
    pub fn truncated(&self, k: usize) -> Self {
        Self { edges: self.edges[..k.min(self.edges.len())].to_vec() }
    }
}

/// Ties go to the lexicographically smaller `(i, j)`.
pub fn top_k(scores: &DiscriminativenessMatrix, k: usize) -> Result<EdgeSelection, EvalError> {
    let n = scores.scores.rows();
    let mut edges: Vec<ScoredEdge> = upper_edges(n).into_iter().map(|(i, j)| ScoredEdge { i, j, score: scores.scores.get(i, j) }).collect();
    if k > edges.len() {
        return Err(EvalError::KTooLarge { k, max: edges.len() });
    }
    edges.sort_by(|x, y| y.score.total_cmp(&x.score).then((x.i, x.j).cmp(&(y.i, y.j))));
    edges.truncate(k);
    Ok(EdgeSelection { edges })
}

/// One row per sample: the cross-view vectors of the selected edges, edge-major
/// and view-minor (`column = edge_rank · n_v + view`).
pub fn extract_features(samples: &[&MultiViewSample], selection: &EdgeSelection) -> Result<Tensor, EvalError> {
    let first = samples.first().ok_or(EvalError::Empty("sample"))?;
    let n_v = first.n_v();
    let mut x = Tensor::zeros(samples.len(), selection.k() * n_v);
    for (r, s) in samples.iter().enumerate() {
        for (e, edge) in selection.edges.iter().enumerate() {
            for (v, value) in s.cross_view_features(edge.i, edge.j)?.into_iter().enumerate() {
                x.set(r, e * n_v + v, value);
            }
        }
    }
    Ok(x)
}

/// Centeredness of every subject-biased template and of their median, all
/// measured against `reference`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectBiasedScores {
    pub subject_ids: Vec<String>,
    pub per_subject: Vec<f64>,
    pub refined: f64,
}

impl SubjectBiasedScores {
    pub fn mean_subject(&self) -> f64 {
        self.per_subject.iter().sum::<f64>() / self.per_subject.len() as f64
    }

    pub fn std_subject(&self) -> f64 {
        std_dev(&self.per_subject)
    }
}

pub fn subject_biased_centeredness(
    model: &ModelParams,
    subjects: &[&MultiViewSample],
    reference: &[&MultiViewSample],
) -> Result<SubjectBiasedScores, EvalError> {
    if subjects.is_empty() {
        return Err(EvalError::Empty("subject"));
    }
    let mut templates = Vec::with_capacity(subjects.len());
    let mut per_subject = Vec::with_capacity(subjects.len());
    for s in subjects {
        let t = model.forward(s)?.1.into_matrix();
        per_subject.push(centeredness_score(&t, reference)?.mean);
        templates.push(t);
    }
    let refined = centeredness_score(&median_matrix(&templates), reference)?.mean;
    Ok(SubjectBiasedScores { subject_ids: subjects.iter().map(|s| s.subject_id().to_string()).collect(), per_subject, refined })
}

pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Turns a set of training subjects into one template.
#[derive(Debug, Clone, PartialEq)]
pub enum Integrator {
    Mean,
    Median,
    /// Trains a network on the training subjects (early-stopping on the held-out
    /// ones) and returns its refined template.
    Mgn(TrainConfig),
}

impl Integrator {
    pub fn name(&self) -> &'static str {
        match self {
            Integrator::Mean => "mean",
            Integrator::Median => "median",
            Integrator::Mgn(_) => "mgn",
        }
    }

    /// `fold` offsets the training seed so folds stay decorrelated.
    pub fn integrate(&self, train: &[&MultiViewSample], held_out: &[&MultiViewSample], fold: usize) -> Result<Template, EvalError> {
        match self {
            Integrator::Mean => baseline_template(train, BaselineMethod::Mean),
            Integrator::Median => baseline_template(train, BaselineMethod::Median),
            Integrator::Mgn(cfg) => {
                let cfg = TrainConfig { seed: cfg.seed.wrapping_add(fold as u64), ..cfg.clone() };
                Ok(train_fold(train, held_out, &cfg)?.refined_template)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationRow {
    pub fold: usize,
    pub k: usize,
    pub accuracy: f64,
    pub cv_accuracy: f64,
    pub hyper: Hyper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSelection {
    pub fold: usize,
    pub alpha: f64,
    /// Top `max(k_values)` edges.
    pub edges: Vec<ScoredEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub method: String,
    pub rows: Vec<ClassificationRow>,
    pub selections: Vec<FoldSelection>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSettings {
    pub k_values: Vec<usize>,
    pub folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub residual: ResidualMode,
    pub grid: Vec<Hyper>,
}

impl Default for ClassificationSettings {
    fn default() -> Self {
        Self { k_values: vec![5, 10, 15, 20, 25], folds: 5, inner_folds: 3, seed: 0, residual: ResidualMode::Entrywise, grid: default_grid() }
    }
}

/// Per fold: integrate each population's training subjects, score edges, and for
/// every `k` train a classifier on the top-`k` cross-view features of the
/// training subjects and test it on the held-out ones. Population A is class 0.
pub fn classification_protocol(
    pop_a: &Population,
    pop_b: &Population,
    integrator: &Integrator,
    settings: &ClassificationSettings,
) -> Result<ClassificationReport, EvalError> {
    if pop_a.n_r() != pop_b.n_r() || pop_a.n_v() != pop_b.n_v() {
        return Err(EvalError::PopulationMismatch(format!(
            "A has {} nodes and {} views, B has {} nodes and {} views",
            pop_a.n_r(),
            pop_a.n_v(),
            pop_b.n_r(),
            pop_b.n_v()
        )));
    }
    let max_k = settings.k_values.iter().copied().max().ok_or(EvalError::Empty("k value"))?;
    let folds_a = split_folds(pop_a, settings.folds, settings.seed)?;
    let folds_b = split_folds(pop_b, settings.folds, settings.seed)?;
    let mut rows = Vec::new();
    let mut selections = Vec::new();
    for fold in 0..settings.folds {
        let (a_train, a_test) = (pop_a.select(&folds_a.train_indices(fold)), pop_a.select(&folds_a.test_indices(fold)));
        let (b_train, b_test) = (pop_b.select(&folds_b.train_indices(fold)), pop_b.select(&folds_b.test_indices(fold)));
        let t_a = integrator.integrate(&a_train, &a_test, fold)?;
        let t_b = integrator.integrate(&b_train, &b_test, fold)?;
        let scores = discriminativeness_with(t_a.matrix(), t_b.matrix(), settings.residual)?;
        let selection = top_k(&scores, max_k)?;

        let train: Vec<&MultiViewSample> = a_train.iter().chain(&b_train).copied().collect();
        let test: Vec<&MultiViewSample> = a_test.iter().chain(&b_test).copied().collect();
        let train_y: Vec<usize> = std::iter::repeat_n(0, a_train.len()).chain(std::iter::repeat_n(1, b_train.len())).collect();
        let test_y: Vec<usize> = std::iter::repeat_n(0, a_test.len()).chain(std::iter::repeat_n(1, b_test.len())).collect();
        for &k in &settings.k_values {
            let chosen = selection.truncated(k);
            let train_x = extract_features(&train, &chosen)?;
            let test_x = extract_features(&test, &chosen)?;
            let seed = settings.seed.wrapping_add(fold as u64);
            let search = train_classifier(&train_x, &train_y, &settings.grid, settings.inner_folds, seed)?;
            let acc = search.model.accuracy(&test_x, &test_y)?;
            rows.push(ClassificationRow { fold, k, accuracy: acc, cv_accuracy: search.cv_accuracy, hyper: search.model.hyper });
        }
        selections.push(FoldSelection { fold, alpha: scores.alpha, edges: selection.edges });
    }
    let accs: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let mean_accuracy = accs.iter().sum::<f64>() / accs.len() as f64;
    Ok(ClassificationReport { method: integrator.name().to_string(), std_accuracy: std_dev(&accs), mean_accuracy, rows, selections })
}
