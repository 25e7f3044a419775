//! Multi-view graph populations: data model, validation, dataset I/O, fold
//! splitting and synthetic generation.
//!
//! Every view is a dense `n_r × n_r` weighted adjacency matrix. Graphs are fully
//! connected: each off-diagonal pair is an edge even when its weight is zero.

mod folds;
mod io;
mod synthetic;

pub use folds::{split_folds, stratified_assignment, FoldAssignment};
pub use io::{format_float, load_dataset, read_matrix_csv, save_dataset, write_matrix_csv, Manifest, ManifestSubject};
pub use synthetic::{simulate_planted_pair, simulate_population, PlantSpec, SyntheticSpec};

use std::collections::HashSet;
use std::path::PathBuf;

use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("parse error in {path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("dimension mismatch for subject {subject} view {view}: expected {expected}x{expected}, found {rows}x{cols}")]
    DimensionMismatch { subject: String, view: usize, expected: usize, rows: usize, cols: usize },
    #[error("subject {subject} has {found} views, expected {expected}")]
    ViewCount { subject: String, expected: usize, found: usize },
    #[error("asymmetric view {view} of subject {subject}: worst entry ({i},{j}) differs from ({j},{i}) by {diff}")]
    Asymmetric { subject: String, view: usize, i: usize, j: usize, diff: f64 },
    #[error("negative entry {value} in view {view} of subject {subject} at ({i},{j})")]
    Negative { subject: String, view: usize, i: usize, j: usize, value: f64 },
    #[error("non-finite entry {value} in view {view} of subject {subject} at ({i},{j})")]
    NonFinite { subject: String, view: usize, i: usize, j: usize, value: f64 },
    #[error("non-zero diagonal entry {value} in view {view} of subject {subject} at node {i}")]
    NonZeroDiagonal { subject: String, view: usize, i: usize, value: f64 },
    #[error("duplicate subject id {0}")]
    DuplicateSubject(String),
    #[error("population must contain ≥ 1 sample")]
    EmptyPopulation,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("cannot split {n} subjects into {k} folds")]
    InvalidFolds { k: usize, n: usize },
    #[error("node pair ({i},{j}) is not a connection")]
    NotAnEdge { i: usize, j: usize },
    #[error("node index {index} out of range for {n_r} nodes")]
    NodeOutOfRange { index: usize, n_r: usize },
}

/// One subject: `n_v` symmetric, non-negative, zero-diagonal views over the same nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewSample {
    subject_id: String,
    label: String,
    views: Vec<Tensor>,
}

impl MultiViewSample {
    pub fn new(subject_id: impl Into<String>, label: impl Into<String>, views: Vec<Tensor>) -> Result<Self, DataError> {
        let sample = Self { subject_id: subject_id.into(), label: label.into(), views };
        sample.validate()?;
        Ok(sample)
    }

    fn validate(&self) -> Result<(), DataError> {
        let subject = &self.subject_id;
        let n = self.views.first().map_or(0, Tensor::rows);
        for (v, m) in self.views.iter().enumerate() {
            if m.rows() != n || m.cols() != n {
                return Err(DataError::DimensionMismatch { subject: subject.clone(), view: v, expected: n, rows: m.rows(), cols: m.cols() });
            }
            validate_view(subject, v, m)?;
        }
        Ok(())
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn views(&self) -> &[Tensor] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &Tensor {
        &self.views[v]
    }

    pub fn n_r(&self) -> usize {
        self.views.first().map_or(0, Tensor::rows)
    }

    pub fn n_v(&self) -> usize {
        self.views.len()
    }

    /// `[views[0][i][j], …, views[n_v−1][i][j]]`.
    pub fn cross_view_features(&self, i: usize, j: usize) -> Result<Vec<f64>, DataError> {
        let n_r = self.n_r();
        for index in [i, j] {
            if index >= n_r {
                return Err(DataError::NodeOutOfRange { index, n_r });
            }
        }
        if i == j {
            return Err(DataError::NotAnEdge { i, j });
        }
        Ok(self.views.iter().map(|m| m.get(i, j)).collect())
    }

    /// Cross-view features stacked row-wise for the given edge list, `edges.len() × n_v`.
    pub fn edge_feature_matrix(&self, edges: &[(usize, usize)]) -> Tensor {
        let n_v = self.n_v();
        Tensor::from_fn(edges.len(), n_v, |e, v| {
            let (i, j) = edges[e];
            self.views[v].get(i, j)
        })
    }

    /// Applies the node permutation `perm` (new node `k` is old node `perm[k]`) to every view.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let views = self.views.iter().map(|m| Tensor::from_fn(m.rows(), m.cols(), |i, j| m.get(perm[i], perm[j]))).collect();
        Self { subject_id: self.subject_id.clone(), label: self.label.clone(), views }
    }
}

pub(crate) fn validate_view(subject: &str, view: usize, m: &Tensor) -> Result<(), DataError> {
    let n = m.rows();
    let mut worst: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in 0..n {
            let x = m.get(i, j);
            if !x.is_finite() {
                return Err(DataError::NonFinite { subject: subject.into(), view, i, j, value: x });
            }
            if x < 0.0 {
                return Err(DataError::Negative { subject: subject.into(), view, i, j, value: x });
            }
            if i == j && x != 0.0 {
                return Err(DataError::NonZeroDiagonal { subject: subject.into(), view, i, value: x });
            }
            if j > i {
                let diff = (x - m.get(j, i)).abs();
                if diff > 0.0 && worst.is_none_or(|(_, _, w)| diff > w) {
                    worst = Some((i, j, diff));
                }
            }
        }
    }
    if let Some((i, j, diff)) = worst {
        return Err(DataError::Asymmetric { subject: subject.into(), view, i, j, diff });
    }
    Ok(())
}

/// An ordered collection of subjects sharing `n_r` and `n_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    samples: Vec<MultiViewSample>,
    n_r: usize,
    n_v: usize,
    view_names: Vec<String>,
}

impl Population {
    pub fn new(view_names: Vec<String>, samples: Vec<MultiViewSample>) -> Result<Self, DataError> {
        let first = samples.first().ok_or(DataError::EmptyPopulation)?;
        let (n_r, n_v) = (first.n_r(), first.n_v());
        if view_names.len() != n_v {
            return Err(DataError::ViewCount { subject: "<view_names>".into(), expected: n_v, found: view_names.len() });
        }
        let mut seen = HashSet::new();
        for s in &samples {
            if s.n_v() != n_v {
                return Err(DataError::ViewCount { subject: s.subject_id.clone(), expected: n_v, found: s.n_v() });
            }
            if s.n_r() != n_r {
                return Err(DataError::DimensionMismatch { subject: s.subject_id.clone(), view: 0, expected: n_r, rows: s.n_r(), cols: s.n_r() });
            }
            if !seen.insert(s.subject_id.as_str()) {
                return Err(DataError::DuplicateSubject(s.subject_id.clone()));
            }
        }
        Ok(Self { samples, n_r, n_v, view_names })
    }

    pub fn samples(&self) -> &[MultiViewSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn view_names(&self) -> &[String] {
        &self.view_names
    }

    pub fn class_labels(&self) -> Vec<&str> {
        self.samples.iter().map(MultiViewSample::label).collect()
    }

    /// Borrowed samples at the given positions.
    pub fn select(&self, indices: &[usize]) -> Vec<&MultiViewSample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }
}

/// Undirected edges `(i, j)`, `i < j`, in lexicographic order.
pub fn upper_edges(n_r: usize) -> Vec<(usize, usize)> {
    (0..n_r).flat_map(|i| ((i + 1)..n_r).map(move |j| (i, j))).collect()
}
