//! Node-level measures on weighted undirected graphs and the divergence of a
//! template's measure profile from a population's.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::loss::smooth;
use crate::netdata::MultiViewSample;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("node {node} has no outgoing weight")]
    ZeroRow { node: usize },
    #[error("node {node} has no positive edge")]
    IsolatedNode { node: usize },
    #[error("graph has no positive edge")]
    NoEdges,
    #[error("{measure} values sum to zero")]
    ZeroSum { measure: Measure },
    #[error("need at least one sample")]
    Empty,
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("unknown measure {0:?}; expected strength, pagerank, effective_size or clustering")]
    UnknownMeasure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Strength,
    Pagerank,
    EffectiveSize,
    Clustering,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::Strength, Measure::Pagerank, Measure::EffectiveSize, Measure::Clustering];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Strength => "strength",
            Measure::Pagerank => "pagerank",
            Measure::EffectiveSize => "effective_size",
            Measure::Clustering => "clustering",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Measure::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| TopologyError::UnknownMeasure(s.to_string()))
    }
}

fn check_square(a: &Tensor) -> Result<usize, TopologyError> {
    if a.rows() != a.cols() {
        return Err(TopologyError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    Ok(a.rows())
}

pub fn node_strength(a: &Tensor) -> Vec<f64> {
    (0..a.rows()).map(|i| a.row_slice(i).iter().sum()).collect()
}

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const PAGERANK_MAX_ITER: usize = 100;
pub const PAGERANK_TOL: f64 = 1e-10;

/// Power iteration `x ← d·xP + (1 − d)/n` with `P` the row-normalized weights,
/// starting from the uniform vector. Stops once the L1 change drops below `tol`.
pub fn pagerank(a: &Tensor, damping: f64, max_iter: usize, tol: f64) -> Result<Vec<f64>, TopologyError> {
    let n = check_square(a)?;
    let strength = node_strength(a);
    if let Some(node) = strength.iter().position(|&s| s <= 0.0) {
        return Err(TopologyError::ZeroRow { node });
    }
    let teleport = (1.0 - damping) / n as f64;
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        next.fill(teleport);
        for i in 0..n {
            let share = damping * x[i] / strength[i];
            for (nj, &w) in next.iter_mut().zip(a.row_slice(i)) {
                *nj += share * w;
            }
        }
        let change: f64 = x.iter().zip(&next).map(|(p, q)| (p - q).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if change < tol {
            break;
        }
    }
    let total: f64 = x.iter().sum();
    Ok(x.into_iter().map(|v| v / total).collect())
}

/// Burt's effective size with weight-proportional redundancy: for each
/// neighbor `j` of `i`, subtract `Σ_k p_ik m_jk` where `p_ik = A_ik / Σ_u A_iu`
/// and `m_jk = A_jk / max_u A_ju`.
pub fn effective_size(a: &Tensor) -> Result<Vec<f64>, TopologyError> {
    let n = check_square(a)?;
    let strength = node_strength(a);
    let max_w: Vec<f64> = (0..n).map(|i| a.row_slice(i).iter().cloned().fold(0.0, f64::max)).collect();
    if let Some(node) = max_w.iter().position(|&m| m <= 0.0) {
        return Err(TopologyError::IsolatedNode { node });
    }
    Ok((0..n)
        .map(|i| {
            let row_i = a.row_slice(i);
            (0..n)
                .filter(|&j| j != i && row_i[j] > 0.0)
                .map(|j| {
                    let row_j = a.row_slice(j);
                    let redundancy: f64 = (0..n)
                        .filter(|&k| k != i && k != j && row_i[k] > 0.0 && row_j[k] > 0.0)
                        .map(|k| (row_i[k] / strength[i]) * (row_j[k] / max_w[j]))
                        .sum();
                    1.0 - redundancy
                })
                .sum()
        })
        .collect())
}

/// Geometric-mean weighted clustering on weights scaled by the global maximum.
/// Each triangle is counted once per ordered neighbor pair, so an equal-weight
/// triangle scores 1.
pub fn clustering_coefficient(a: &Tensor) -> Result<Vec<f64>, TopologyError> {
    let n = check_square(a)?;
    let max = a.data().iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(TopologyError::NoEdges);
    }
    let w = a.map(|x| x / max);
    Ok((0..n)
        .map(|i| {
            let nbrs: Vec<usize> = (0..n).filter(|&j| j != i && w.get(i, j) > 0.0).collect();
            let deg = nbrs.len();
            if deg < 2 {
                return 0.0;
            }
            let mut total = 0.0;
            for &j in &nbrs {
                for &k in &nbrs {
                    if j != k && w.get(j, k) > 0.0 {
                        total += (w.get(i, j) * w.get(i, k) * w.get(j, k)).cbrt();
                    }
                }
            }
            total / (deg * (deg - 1)) as f64
        })
        .collect())
}

pub fn measure(a: &Tensor, m: Measure) -> Result<Vec<f64>, TopologyError> {
    match m {
        Measure::Strength => {
            check_square(a)?;
            Ok(node_strength(a))
        }
        Measure::Pagerank => pagerank(a, PAGERANK_DAMPING, PAGERANK_MAX_ITER, PAGERANK_TOL),
        Measure::EffectiveSize => effective_size(a),
        Measure::Clustering => clustering_coefficient(a),
    }
}

/// Per-node measure normalized to sum 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyProfile {
    pub measure: Measure,
    pub p: Vec<f64>,
}

fn normalized(raw: Vec<f64>, m: Measure) -> Result<Vec<f64>, TopologyError> {
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(TopologyError::ZeroSum { measure: m });
    }
    Ok(raw.into_iter().map(|x| x / total).collect())
}

pub fn profile(a: &Tensor, m: Measure) -> Result<TopologyProfile, TopologyError> {
    Ok(TopologyProfile { measure: m, p: normalized(measure(a, m)?, m)? })
}

/// Mean profile over every (sample, view) pair, renormalized.
pub fn ground_truth_profile(samples: &[&MultiViewSample], m: Measure) -> Result<TopologyProfile, TopologyError> {
    let first = samples.first().ok_or(TopologyError::Empty)?;
    let mut acc = vec![0.0; first.n_r()];
    for s in samples {
        for view in s.views() {
            for (a, p) in acc.iter_mut().zip(profile(view, m)?.p) {
                *a += p;
            }
        }
    }
    Ok(TopologyProfile { measure: m, p: normalized(acc, m)? })
}

/// `D_KL(g‖t)` in bits after smoothing both distributions.
pub fn kl_divergence(g: &[f64], t: &[f64]) -> f64 {
    let (g, t) = (smooth(g), smooth(t));
    g.iter().zip(&t).map(|(p, q)| p * (p / q).log2()).sum()
}

/// Divergence of the template's profile from the test population's mean profile.
pub fn topology_divergence(template: &Tensor, test: &[&MultiViewSample], m: Measure) -> Result<f64, TopologyError> {
    let g = ground_truth_profile(test, m)?;
    let t = profile(template, m)?;
    Ok(kl_divergence(&g.p, &t.p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> Tensor {
        let mut a = Tensor::zeros(n, n);
        for &(i, j, w) in edges {
            a.set(i, j, w);
            a.set(j, i, w);
        }
        a
    }

    fn complete(n: usize, w: f64) -> Tensor {
        Tensor::from_fn(n, n, |i, j| if i == j { 0.0 } else { w })
    }

    fn assert_all_close(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn pagerank_symmetric_cases() {
        assert_all_close(&pagerank(&complete(3, 0.4), 0.85, 100, 1e-10).unwrap(), &[1.0 / 3.0; 3], 1e-12);
        assert_all_close(&pagerank(&graph(2, &[(0, 1, 2.5)]), 0.85, 100, 1e-10).unwrap(), &[0.5, 0.5], 1e-12);
        assert!(matches!(pagerank(&graph(3, &[(0, 1, 1.0)]), 0.85, 100, 1e-10), Err(TopologyError::ZeroRow { node: 2 })));
    }

    #[test]
    fn pagerank_weighted_path_matches_dense_iteration() {
        let a = graph(3, &[(0, 1, 1.0), (1, 2, 2.0)]);
        // Dense oracle: explicit Google matrix, 100 plain iterations.
        let mut google = [[0.0; 3]; 3];
        for i in 0..3 {
            let s: f64 = a.row_slice(i).iter().sum();
            for j in 0..3 {
                google[i][j] = 0.85 * a.get(i, j) / s + 0.15 / 3.0;
            }
        }
        let mut x = [1.0 / 3.0; 3];
        for _ in 0..100 {
            let mut y = [0.0; 3];
            for i in 0..3 {
                for j in 0..3 {
                    y[j] += x[i] * google[i][j];
                }
            }
            x = y;
        }
        assert_all_close(&pagerank(&a, 0.85, 100, 1e-10).unwrap(), &x, 1e-10);
    }

    #[test]
    fn effective_size_hand_values() {
        let star = graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]);
        assert_all_close(&effective_size(&star).unwrap(), &[3.0, 1.0, 1.0, 1.0], 1e-15);
        assert_all_close(&effective_size(&complete(3, 0.7)).unwrap(), &[1.0; 3], 1e-15);
        assert!(matches!(effective_size(&graph(3, &[(0, 1, 1.0)])), Err(TopologyError::IsolatedNode { node: 2 })));
    }

    #[test]
    fn clustering_hand_values() {
        assert_all_close(&clustering_coefficient(&complete(3, 0.3)).unwrap(), &[1.0; 3], 1e-15);
        assert_all_close(&clustering_coefficient(&complete(4, 2.0)).unwrap(), &[1.0; 4], 1e-15);
        let path = graph(4, &[(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0)]);
        assert_eq!(clustering_coefficient(&path).unwrap(), vec![0.0; 4]);
        assert!(matches!(clustering_coefficient(&Tensor::zeros(3, 3)), Err(TopologyError::NoEdges)));
    }

    #[test]
    fn profiles() {
        let p = profile(&complete(5, 0.9), Measure::Strength).unwrap();
        assert_all_close(&p.p, &[0.2; 5], 1e-15);
        let a = graph(4, &[(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (0, 3, 0.1)]);
        let pr = profile(&a, Measure::Pagerank).unwrap();
        assert_all_close(&pr.p, &pagerank(&a, 0.85, 100, 1e-10).unwrap(), 1e-15);
        for m in Measure::ALL {
            let p = profile(&a, m);
            if let Ok(p) = p {
                assert!((p.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert!(matches!(profile(&a, Measure::Clustering), Err(TopologyError::ZeroSum { .. })));
    }

    #[test]
    fn divergence_hand_value() {
        let kl = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]);
        assert!((kl - 0.20752).abs() < 1e-5, "{kl}");
        assert_eq!(kl_divergence(&[0.1, 0.9], &[0.1, 0.9]), 0.0);
        let s = MultiViewSample::new("a", "x", vec![graph(3, &[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 0.5)])]).unwrap();
        assert_eq!(topology_divergence(s.view(0), &[&s], Measure::Pagerank).unwrap(), 0.0);
    }

    #[test]
    fn measure_names_round_trip() {
        for m in Measure::ALL {
            assert_eq!(m.name().parse::<Measure>().unwrap(), m);
        }
        assert!("betweenness".parse::<Measure>().is_err());
    }

    fn dense_graph(n: usize, weights: &[f64]) -> Tensor {
        let mut a = Tensor::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                a.set(i, j, weights[k]);
                a.set(j, i, weights[k]);
                k += 1;
            }
        }
        a
    }

    proptest! {
        #[test]
        fn measures_are_permutation_equivariant(
            weights in proptest::collection::vec(0.05f64..2.0, 15),
            perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            let a = dense_graph(6, &weights);
            let pa = Tensor::from_fn(6, 6, |i, j| a.get(perm[i], perm[j]));
            for m in Measure::ALL {
                let base = measure(&a, m).unwrap();
                let moved = measure(&pa, m).unwrap();
                for k in 0..6 {
                    prop_assert!((moved[k] - base[perm[k]]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn scale_invariance_and_ranges(weights in proptest::collection::vec(0.0f64..2.0, 15), c in 0.01f64..50.0) {
            let a = dense_graph(6, &weights);
            let ca = a.map(|w| w * c);
            if let Ok(cc) = clustering_coefficient(&a) {
                prop_assert!(cc.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
                let scaled = clustering_coefficient(&ca).unwrap();
                for (p, q) in cc.iter().zip(&scaled) {
                    prop_assert!((p - q).abs() < 1e-12);
                }
            }
            if let Ok(e) = effective_size(&a) {
                for (p, q) in e.iter().zip(&effective_size(&ca).unwrap()) {
                    prop_assert!((p - q).abs() < 1e-12);
                }
            }
            if let Ok(p) = profile(&a, Measure::Strength) {
                for (x, y) in p.p.iter().zip(&profile(&ca, Measure::Strength).unwrap().p) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn pagerank_converges_to_fixed_point(weights in proptest::collection::vec(0.05f64..2.0, 15)) {
            let a = dense_graph(6, &weights);
            let x = pagerank(&a, 0.85, 1000, 1e-13).unwrap();
            prop_assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let strength = node_strength(&a);
            let mut y = vec![0.15 / 6.0; 6];
            for i in 0..6 {
                for j in 0..6 {
                    y[j] += 0.85 * x[i] * a.get(i, j) / strength[i];
                }
            }
            let residual: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum();
            prop_assert!(residual < 1e-10);
        }

        #[test]
        fn divergence_is_nonnegative(g in proptest::collection::vec(0.0f64..1.0, 5), t in proptest::collection::vec(0.01f64..1.0, 5)) {
            let gs: f64 = g.iter().sum();
            prop_assume!(gs > 0.0);
            let ts: f64 = t.iter().sum();
            let g: Vec<f64> = g.iter().map(|x| x / gs).collect();
            let t: Vec<f64> = t.iter().map(|x| x / ts).collect();
            prop_assert!(kl_divergence(&g, &t) >= -1e-12);
        }
    }
}
