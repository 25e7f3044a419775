//! Run configuration file and seed resolution.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use graphnorm::evaluation::ResidualMode;
use graphnorm::netdata::SyntheticSpec;
use graphnorm::topology::Measure;
use graphnorm::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "GRAPHNORM_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    Mgn,
    Mean,
    Median,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub measures: Vec<Measure>,
    /// Also score every subject-biased template when a checkpoint is present.
    pub subject_biased: bool,
    pub residual: ResidualMode,
    pub integrator: IntegratorKind,
    pub inner_folds: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { measures: Measure::ALL.to_vec(), subject_biased: true, residual: ResidualMode::Entrywise, integrator: IntegratorKind::Mgn, inner_folds: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Training section; when absent, defaults follow the dataset's view count.
    pub train: Option<TrainConfig>,
    pub synthetic: Option<SyntheticSpec>,
    pub paths: Paths,
    pub evaluation: EvaluationConfig,
    pub k_values: Vec<usize>,
    pub folds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { train: None, synthetic: None, paths: Paths::default(), evaluation: EvaluationConfig::default(), k_values: vec![5, 10, 15, 20, 25], folds: 5 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.folds < 2 {
            bail!("folds must be ≥ 2, got {}", self.folds);
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            bail!("k_values must be a non-empty list of positive integers");
        }
        if self.evaluation.inner_folds < 2 {
            bail!("evaluation.inner_folds must be ≥ 2");
        }
        if let Some(train) = &self.train {
            train.validate()?;
        }
        if let Some(spec) = &self.synthetic {
            spec.validate()?;
        }
        Ok(())
    }

    /// Training settings for a dataset with `n_v` views.
    pub fn train_config(&self, n_v: usize) -> TrainConfig {
        self.train.clone().unwrap_or_else(|| TrainConfig::for_views(n_v))
    }

    fn file_seed(&self) -> Option<u64> {
        self.train.as_ref().map(|t| t.seed).or(self.synthetic.as_ref().map(|s| s.seed))
    }
}

/// Flag, then config file, then `GRAPHNORM_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: &RunConfig, file_has_seed: bool) -> anyhow::Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if file_has_seed {
        if let Some(s) = config.file_seed() {
            return Ok(s);
        }
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV} must be a non-negative integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}

/// Whether the config file spells out a seed (as opposed to inheriting the default).
pub fn file_has_seed(path: Option<&Path>) -> bool {
    let Some(path) = path else { return false };
    let Ok(text) = std::fs::read_to_string(path) else { return false };
    let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) else { return false };
    ["train", "synthetic"].iter().any(|s| value.get(s).and_then(|v| v.get("seed")).is_some())
}

pub fn parse_measures(list: &str) -> anyhow::Result<Vec<Measure>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Measure = name.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        bail!("no measures given");
    }
    Ok(out)
}

pub fn parse_k_values(list: &str) -> anyhow::Result<Vec<usize>> {
    let ks = list
        .split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("invalid k value {s:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if ks.is_empty() || ks.contains(&0) {
        bail!("k values must be positive integers");
    }
    Ok(ks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = serde_json::from_str::<RunConfig>(r#"{"train": {"lr": 0.1, "learning_rate": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        let err = serde_json::from_str::<RunConfig>(r#"{"fold": 3}"#).unwrap_err();
        assert!(err.to_string().contains("fold"), "{err}");
    }

    #[test]
    fn partial_sections_take_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"train": {"beta": 0}, "k_values": [5]}"#).unwrap();
        let t = cfg.train_config(4);
        assert_eq!(t.beta, 0.0);
        assert_eq!(t.lr, 0.0006);
        assert_eq!(cfg.folds, 5);
        assert_eq!(RunConfig::default().train_config(6).dims, [36, 24, 8]);
    }

    #[test]
    fn measure_and_k_parsing() {
        assert_eq!(parse_measures("pagerank, strength,pagerank").unwrap(), vec![Measure::Pagerank, Measure::Strength]);
        let err = parse_measures("strength,betweenness").unwrap_err().to_string();
        for m in Measure::ALL {
            assert!(err.contains(m.name()), "{err}");
        }
        assert_eq!(parse_k_values("5,10").unwrap(), vec![5, 10]);
        assert!(parse_k_values("5,x").is_err());
        assert!(parse_k_values("0").is_err());
    }

    #[test]
    fn flag_beats_file() {
        let cfg: RunConfig = serde_json::from_str(r#"{"train": {"seed": 4}}"#).unwrap();
        assert_eq!(resolve_seed(Some(9), &cfg, true).unwrap(), 9);
        assert_eq!(resolve_seed(None, &cfg, true).unwrap(), 4);
    }
}
