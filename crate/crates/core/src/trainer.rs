//! Full-batch Adam training with early stopping, median refinement and k-fold
//! cross-validation.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Graph, Var};
use crate::evaluation::{centeredness_score, CenterednessScore, EvalError};
use crate::gnn::{init_model, GnnError, ModelConfig, ModelParams, Readout, SampleInput, Template};
use crate::loss::{sample_subset, tcnl_graph, view_norm_weights, LossError, StrengthCache, StrengthDistribution, TcnlValue, ViewNormWeights};
use crate::netdata::{split_folds, DataError, FoldAssignment, MultiViewSample, Population};
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("subset size {size} exceeds the {available} training samples")]
    SubsetTooLarge { size: usize, available: usize },
    #[error("non-finite gradient in parameter {name}")]
    NonFiniteGradient { name: String },
    #[error("non-finite {what} at epoch {epoch}")]
    NonFiniteLoss { what: &'static str, epoch: usize },
    #[error("template collapsed to zero (all node embeddings identical), so the strength term is undefined; try another seed or wider layers")]
    CollapsedTemplate,
    #[error("gradient shapes do not match parameters")]
    GradientShape,
    #[error("need at least one {0} sample")]
    NoSamples(&'static str),
    #[error("could not start worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Eval(Box<EvalError>),
}

impl From<EvalError> for TrainError {
    fn from(e: EvalError) -> Self {
        TrainError::Eval(Box::new(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub subset_size: usize,
    pub beta: f64,
    pub dims: [usize; 3],
    pub hidden: usize,
    pub seed: u64,
    pub readout: Readout,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.0006,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_eps: 1e-8,
            max_epochs: 1200,
            patience: 50,
            subset_size: 10,
            beta: 25.0,
            dims: [36, 24, 5],
            hidden: 32,
            seed: 0,
            readout: Readout::Mean,
        }
    }
}

impl TrainConfig {
    /// Defaults for a given view count: β = 10 and `d_3 = 8` for six views.
    pub fn for_views(n_v: usize) -> Self {
        if n_v == 6 {
            Self { beta: 10.0, dims: [36, 24, 8], ..Self::default() }
        } else {
            Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a non-negative number, got {}", self.lr));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.subset_size == 0 {
            return bad("max_epochs, patience and subset_size must be ≥ 1".into());
        }
        if self.patience >= self.max_epochs {
            return bad(format!("patience ({}) must be below max_epochs ({})", self.patience, self.max_epochs));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        self.model_config(1).validate()?;
        Ok(())
    }

    pub fn model_config(&self, n_v: usize) -> ModelConfig {
        ModelConfig { dims: self.dims, n_v, hidden: self.hidden, seed: self.seed, readout: self.readout }
    }
}

/// First and second moment estimates per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One bias-corrected Adam update. `names` label the parameters in diagnostics.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    names: &[String],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::GradientShape);
    }
    for ((p, g), name) in params.iter().zip(grads).zip(names) {
        if p.shape() != g.shape() {
            return Err(TrainError::GradientShape);
        }
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient { name: name.clone() });
        }
    }
    state.t += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (i, x) in p.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *x -= config.lr * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
    Ok(())
}

/// Keeps subset draws independent of the weight-initialization stream.
const SUBSET_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_centeredness: f64,
    pub train_kl: f64,
    pub test_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameters with the lowest test loss.
    pub model: ModelParams,
    pub history: Vec<EpochRecord>,
    /// Number of epochs actually run.
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub refined_template: Template,
    pub weights: ViewNormWeights,
    /// Wall-clock milliseconds per epoch; kept apart from `history` so logs stay reproducible.
    pub elapsed_ms: Vec<u128>,
}

impl TrainResult {
    pub fn best_test_loss(&self) -> f64 {
        self.history.iter().map(|r| r.test_loss).fold(f64::INFINITY, f64::min)
    }
}

struct FoldContext<'a> {
    train: Vec<&'a MultiViewSample>,
    train_inputs: Vec<SampleInput>,
    test_inputs: Vec<SampleInput>,
    cache: StrengthCache,
    full_truths: Vec<StrengthDistribution>,
    weights: ViewNormWeights,
    model_config: ModelConfig,
    beta: f64,
}

impl FoldContext<'_> {
    /// Loss of one subject's template against `subset`, optionally with gradients.
    fn subject_loss(
        &self,
        params: &ModelParams,
        input: &SampleInput,
        subset: &[&MultiViewSample],
        truths: &[StrengthDistribution],
        grad: bool,
    ) -> Result<(TcnlValue, Option<Vec<Tensor>>), TrainError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = if grad {
            params.bind(&mut g)
        } else {
            params.tensors().into_iter().map(|t| g.constant(t.clone())).collect()
        };
        let out = self.model_config.forward_graph(&mut g, &vars, input)?;
        let loss = tcnl_graph(&mut g, out.template, subset, truths, &self.weights, self.beta).map_err(|e| match e {
            LossError::DegenerateGraph => TrainError::CollapsedTemplate,
            e => e.into(),
        })?;
        let value = loss.values(&g);
        if !grad {
            return Ok((value, None));
        }
        let mut grads = g.backward(loss.total)?;
        Ok((value, Some(vars.iter().map(|&v| grads.take(v)).collect())))
    }

    fn test_loss(&self, params: &ModelParams) -> Result<f64, TrainError> {
        let mut total = 0.0;
        for input in &self.test_inputs {
            total += self.subject_loss(params, input, &self.train, &self.full_truths, false)?.0.total;
        }
        Ok(total / self.test_inputs.len() as f64)
    }
}

/// Trains one model on `train`, early-stopping on the mean loss over `test`.
pub fn train_fold(train: &[&MultiViewSample], test: &[&MultiViewSample], config: &TrainConfig) -> Result<TrainResult, TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::NoSamples("training"));
    }
    if test.is_empty() {
        return Err(TrainError::NoSamples("test"));
    }
    if config.subset_size > train.len() {
        return Err(TrainError::SubsetTooLarge { size: config.subset_size, available: train.len() });
    }
    let n_v = train[0].n_v();
    let model_config = config.model_config(n_v);
    let cache = StrengthCache::new(train)?;
    let full_truths = cache.ground_truth(&(0..train.len()).collect::<Vec<_>>())?;
    let ctx = FoldContext {
        train: train.to_vec(),
        train_inputs: train.iter().map(|s| SampleInput::new(s)).collect::<Result<_, _>>()?,
        test_inputs: test.iter().map(|s| SampleInput::new(s)).collect::<Result<_, _>>()?,
        cache,
        full_truths,
        weights: view_norm_weights(train)?,
        model_config: model_config.clone(),
        beta: config.beta,
    };

    let mut model = init_model(&model_config)?;
    let names = model.names();
    let mut adam = AdamState::new(&model.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SUBSET_STREAM);
    let all: Vec<usize> = (0..train.len()).collect();
    let n = train.len() as f64;

    let mut history = Vec::new();
    let mut elapsed_ms = Vec::new();
    let mut best = (f64::INFINITY, 0, model.clone());
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut grads: Vec<Tensor> = model.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        let mut sums = (0.0, 0.0, 0.0);
        for input in &ctx.train_inputs {
            let subset_idx = sample_subset(&all, config.subset_size, &mut rng)?;
            let truths = ctx.cache.ground_truth(&subset_idx)?;
            let subset: Vec<&MultiViewSample> = subset_idx.iter().map(|&i| train[i]).collect();
            let (value, g) = ctx.subject_loss(&model, input, &subset, &truths, true)?;
            for (acc, gi) in grads.iter_mut().zip(g.expect("gradients requested")) {
                acc.add_scaled(&gi, 1.0 / n);
            }
            sums.0 += value.total;
            sums.1 += value.centeredness;
            sums.2 += value.kl;
        }
        let train_loss = sums.0 / n;
        if !train_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { what: "training loss", epoch });
        }
        adam_step(&mut model.tensors_mut(), &grads, &names, &mut adam, config)?;
        let test_loss = ctx.test_loss(&model)?;
        if !test_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { what: "test loss", epoch });
        }
        history.push(EpochRecord { epoch, train_loss, train_centeredness: sums.1 / n, train_kl: sums.2 / n, test_loss });
        elapsed_ms.push(started.elapsed().as_millis());
        if test_loss < best.0 {
            best = (test_loss, epoch, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (_, best_epoch, model) = best;
    let refined_template = refine_inputs(&model, &ctx.train_inputs)?;
    Ok(TrainResult { model, stopped_epoch: history.len(), history, best_epoch, refined_template, weights: ctx.weights, elapsed_ms })
}

/// Entry-wise median of the subject-biased templates of `train`.
pub fn refine(model: &ModelParams, train: &[&MultiViewSample]) -> Result<Template, TrainError> {
    let inputs = train.iter().map(|s| SampleInput::new(s)).collect::<Result<Vec<_>, _>>()?;
    refine_inputs(model, &inputs)
}

fn refine_inputs(model: &ModelParams, inputs: &[SampleInput]) -> Result<Template, TrainError> {
    if inputs.is_empty() {
        return Err(TrainError::NoSamples("training"));
    }
    let templates = inputs.iter().map(|i| model.forward_input(i).map(|(_, t)| t.into_matrix())).collect::<Result<Vec<_>, _>>()?;
    Ok(Template::new(median_matrix(&templates))?)
}

/// Entry-wise median; even counts take the midpoint of the two central values.
pub fn median_matrix(matrices: &[Tensor]) -> Tensor {
    let (rows, cols) = matrices[0].shape();
    let mut column = vec![0.0; matrices.len()];
    Tensor::from_fn(rows, cols, |i, j| {
        for (slot, m) in column.iter_mut().zip(matrices) {
            *slot = m.get(i, j);
        }
        median(&mut column)
    })
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub folds: FoldAssignment,
    pub results: Vec<TrainResult>,
    /// Refined template of each fold against that fold's held-out subjects.
    pub centeredness: Vec<CenterednessScore>,
}

impl CvResult {
    pub fn mean_centeredness(&self) -> f64 {
        self.centeredness.iter().map(|c| c.mean).sum::<f64>() / self.centeredness.len() as f64
    }
}

/// Trains one model per fold with seed `config.seed + fold`. `jobs` bounds the
/// number of folds trained concurrently; results do not depend on it.
pub fn run_cv(population: &Population, k: usize, config: &TrainConfig, jobs: usize) -> Result<CvResult, TrainError> {
    config.validate()?;
    let folds = split_folds(population, k, config.seed)?;
    run_cv_with_folds(population, &folds, config, jobs)
}

pub fn run_cv_with_folds(population: &Population, folds: &FoldAssignment, config: &TrainConfig, jobs: usize) -> Result<CvResult, TrainError> {
    let train_one = |fold: usize| -> Result<(TrainResult, CenterednessScore), TrainError> {
        let train = population.select(&folds.train_indices(fold));
        let test = population.select(&folds.test_indices(fold));
        let cfg = TrainConfig { seed: config.seed.wrapping_add(fold as u64), ..config.clone() };
        let result = train_fold(&train, &test, &cfg)?;
        let score = centeredness_score(result.refined_template.matrix(), &test)?;
        Ok((result, score))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| TrainError::ThreadPool(e.to_string()))?;
    let outcomes: Vec<_> = pool.install(|| (0..folds.k).into_par_iter().map(train_one).collect());
    let mut results = Vec::with_capacity(folds.k);
    let mut centeredness = Vec::with_capacity(folds.k);
    for outcome in outcomes {
        let (r, c) = outcome?;
        results.push(r);
        centeredness.push(c);
    }
    Ok(CvResult { folds: folds.clone(), results, centeredness })
}
