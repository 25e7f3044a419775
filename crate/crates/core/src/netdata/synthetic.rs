//! Synthetic multi-view dissimilarity-network populations.
//!
//! Each view has a population prototype built like a morphological dissimilarity
//! network: a nodal measurement `m_i ~ U(0, 1)` per node, edge weight `|m_i − m_j|`,
//! rescaled so the off-diagonal mean equals `view_means[v]`. A subject's view is the
//! prototype plus i.i.d. Gaussian edge noise with standard deviation
//! `noise_scale · view_means[v]`, clipped to `[0, view_max[v]]` and mirrored from the
//! upper triangle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, MultiViewSample, Population};
use crate::tensor::Tensor;

fn default_label() -> String {
    "synthetic".into()
}

/// Additive offset on selected edges, in units of each view's mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub edges: Vec<(usize, usize)>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub n_r: usize,
    pub n_v: usize,
    pub view_means: Vec<f64>,
    pub view_max: Vec<f64>,
    pub noise_scale: f64,
    pub seed: u64,
    /// Seed for the shared prototype; defaults to `seed`. Two populations with
    /// the same prototype seed but different `seed`s share their population center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototype_seed: Option<u64>,
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantSpec>,
}

impl SyntheticSpec {
    /// Four views with the paper-scale means used throughout the tests.
    pub fn four_view(n_subjects: usize, n_r: usize, seed: u64) -> Self {
        Self {
            n_subjects,
            n_r,
            n_v: 4,
            view_means: vec![0.084, 0.723, 0.3, 0.15],
            view_max: vec![0.586, 3.740, 1.5, 0.8],
            noise_scale: 0.3,
            seed,
            prototype_seed: None,
            label: default_label(),
            plant: None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.n_subjects < 2 {
            return bad(format!("n_subjects must be ≥ 2, got {}", self.n_subjects));
        }
        if self.n_r < 2 {
            return bad(format!("n_r must be ≥ 2, got {}", self.n_r));
        }
        if self.n_v == 0 {
            return bad("n_v must be ≥ 1".into());
        }
        if self.view_means.len() != self.n_v || self.view_max.len() != self.n_v {
            return bad(format!(
                "view_means ({}) and view_max ({}) must both have n_v = {} entries",
                self.view_means.len(),
                self.view_max.len(),
                self.n_v
            ));
        }
        for (v, (&mean, &max)) in self.view_means.iter().zip(&self.view_max).enumerate() {
            if !(mean > 0.0 && mean.is_finite()) {
                return bad(format!("view_means[{v}] = {mean} must be positive"));
            }
            if !(mean < max && max.is_finite()) {
                return bad(format!("view_means[{v}] = {mean} must be below view_max[{v}] = {max}"));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale must be non-negative, got {}", self.noise_scale));
        }
        if let Some(plant) = &self.plant {
            if !plant.offset.is_finite() {
                return bad("plant offset must be finite".into());
            }
            for &(i, j) in &plant.edges {
                if i == j || i >= self.n_r || j >= self.n_r {
                    return bad(format!("planted edge ({i},{j}) invalid for {} nodes", self.n_r));
                }
            }
        }
        Ok(())
    }
}

fn prototypes(spec: &SyntheticSpec) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.prototype_seed.unwrap_or(spec.seed));
    let n = spec.n_r;
    (0..spec.n_v)
        .map(|v| {
            let nodal: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let raw = Tensor::from_fn(n, n, |i, j| (nodal[i] - nodal[j]).abs());
            let mean = raw.sum() / (n * (n - 1)) as f64;
            let scale = if mean > 0.0 { spec.view_means[v] / mean } else { 0.0 };
            raw.map(|x| (x * scale).min(spec.view_max[v]))
        })
        .collect()
}

fn draw_subject(spec: &SyntheticSpec, protos: &[Tensor], rng: &mut ChaCha8Rng, id: String) -> Result<MultiViewSample, DataError> {
    let n = spec.n_r;
    let mut views = Vec::with_capacity(spec.n_v);
    for (v, proto) in protos.iter().enumerate() {
        let sd = spec.noise_scale * spec.view_means[v];
        let noise = Normal::new(0.0, sd.max(f64::MIN_POSITIVE)).expect("finite sd");
        let mut m = Tensor::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let eps = if sd > 0.0 { noise.sample(rng) } else { 0.0 };
                let x = (proto.get(i, j) + eps).clamp(0.0, spec.view_max[v]);
                m.set(i, j, x);
                m.set(j, i, x);
            }
        }
        if let Some(plant) = &spec.plant {
            for &(i, j) in &plant.edges {
                let x = (m.get(i, j) + plant.offset * spec.view_means[v]).clamp(0.0, spec.view_max[v]);
                m.set(i, j, x);
                m.set(j, i, x);
            }
        }
        views.push(m);
    }
    MultiViewSample::new(id, spec.label.clone(), views)
}

fn view_names(n_v: usize) -> Vec<String> {
    (0..n_v).map(|v| format!("view{v}")).collect()
}

/// Deterministic synthetic population for `spec.seed`.
pub fn simulate_population(spec: &SyntheticSpec) -> Result<Population, DataError> {
    spec.validate()?;
    let protos = prototypes(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x5EED_0F_5AB1EC7));
    let samples = (0..spec.n_subjects)
        .map(|s| draw_subject(spec, &protos, &mut rng, format!("{}_{s:03}", spec.label)))
        .collect::<Result<Vec<_>, _>>()?;
    Population::new(view_names(spec.n_v), samples)
}

/// Two populations around one shared prototype: group `A` unchanged, group `B`
/// with `offset · view_means[v]` added to each planted edge in every view.
pub fn simulate_planted_pair(spec: &SyntheticSpec, planted: &[(usize, usize)], offset: f64) -> Result<(Population, Population), DataError> {
    let proto_seed = spec.prototype_seed.unwrap_or(spec.seed);
    let a = SyntheticSpec { prototype_seed: Some(proto_seed), label: "A".into(), plant: None, ..spec.clone() };
    let b = SyntheticSpec {
        prototype_seed: Some(proto_seed),
        seed: spec.seed.wrapping_add(1),
        label: "B".into(),
        plant: Some(PlantSpec { edges: planted.to_vec(), offset }),
        ..spec.clone()
    };
    Ok((simulate_population(&a)?, simulate_population(&b)?))
}
