//! Every 4-node graph with edge weights in {0, 0.5, 1}, checked against
//! straightforward re-implementations of the weighted measures.

use graphnorm::tensor::Tensor;
use graphnorm::topology::{clustering_coefficient, effective_size, pagerank, TopologyError};

const N: usize = 4;

fn all_graphs() -> impl Iterator<Item = [[f64; N]; N]> {
    let pairs: Vec<(usize, usize)> = (0..N).flat_map(|i| (i + 1..N).map(move |j| (i, j))).collect();
    let levels = [0.0, 0.5, 1.0];
    (0..3usize.pow(pairs.len() as u32)).map(move |mut code| {
        let mut a = [[0.0; N]; N];
        for &(i, j) in &pairs {
            let w = levels[code % 3];
            code /= 3;
            a[i][j] = w;
            a[j][i] = w;
        }
        a
    })
}

fn tensor(a: &[[f64; N]; N]) -> Tensor {
    Tensor::from_fn(N, N, |i, j| a[i][j])
}

/// Burt's effective size with proportional tie strength from the ego and
/// max-normalized tie strength from each alter.
fn effective_size_oracle(a: &[[f64; N]; N]) -> Option<[f64; N]> {
    let mut out = [0.0; N];
    for u in 0..N {
        let total: f64 = a[u].iter().sum();
        if total == 0.0 {
            return None;
        }
        for v in (0..N).filter(|&v| v != u && a[u][v] > 0.0) {
            let alter_max = a[v].iter().cloned().fold(0.0, f64::max);
            let mut redundancy = 0.0;
            for w in (0..N).filter(|&w| w != u && w != v && a[u][w] > 0.0) {
                redundancy += (a[u][w] / total) * (a[v][w] / alter_max);
            }
            out[u] += 1.0 - redundancy;
        }
    }
    Some(out)
}

/// Unordered triangles counted twice, normalized by deg·(deg − 1).
fn clustering_oracle(a: &[[f64; N]; N]) -> [f64; N] {
    let max = a.iter().flatten().cloned().fold(0.0, f64::max);
    let mut out = [0.0; N];
    for i in 0..N {
        let nbrs: Vec<usize> = (0..N).filter(|&j| j != i && a[i][j] > 0.0).collect();
        let d = nbrs.len();
        if d < 2 {
            continue;
        }
        let mut s = 0.0;
        for x in 0..d {
            for y in x + 1..d {
                let (j, k) = (nbrs[x], nbrs[y]);
                if a[j][k] > 0.0 {
                    s += 2.0 * ((a[i][j] / max) * (a[i][k] / max) * (a[j][k] / max)).cbrt();
                }
            }
        }
        out[i] = s / (d * (d - 1)) as f64;
    }
    out
}

#[test]
fn effective_size_matches_oracle_on_every_graph() {
    let (mut checked, mut isolated) = (0, 0);
    for a in all_graphs() {
        match (effective_size(&tensor(&a)), effective_size_oracle(&a)) {
            (Ok(got), Some(want)) => {
                for (g, w) in got.iter().zip(want) {
                    assert!((g - w).abs() <= 1e-12, "{a:?}: {got:?} vs {want:?}");
                }
                checked += 1;
            }
            (Err(TopologyError::IsolatedNode { .. }), None) => isolated += 1,
            (got, want) => panic!("{a:?}: {got:?} vs {want:?}"),
        }
    }
    assert_eq!(checked + isolated, 729);
    assert!(checked > 300);
}

#[test]
fn clustering_matches_oracle_on_every_graph() {
    for a in all_graphs().skip(1) {
        let got = clustering_coefficient(&tensor(&a)).unwrap();
        let want = clustering_oracle(&a);
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= 1e-12, "{a:?}: {got:?} vs {want:?}");
        }
    }
    assert!(clustering_coefficient(&Tensor::zeros(N, N)).is_err());
}

#[test]
fn pagerank_uniform_on_equal_weight_complete_graphs() {
    for n in 2..9 {
        let a = Tensor::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.7 });
        let p = pagerank(&a, 0.85, 100, 1e-10).unwrap();
        for x in p {
            assert!((x - 1.0 / n as f64).abs() <= 1e-10);
        }
    }
}

/// 9-node weighted graph with some absent edges; expected values from networkx
/// (`pagerank` with tol 1e-12, `effective_size`, weighted `clustering`).
#[test]
fn agrees_with_networkx_reference() {
    let rows: [[f64; 9]; 9] = [
        [0.0, 0.4736210131921994, 1.6025489304127938, 1.1643240721287356, 0.18825728448079837, 0.0, 0.958102596281668, 0.31947782927415713, 0.0],
        [0.4736210131921994, 0.0, 1.0334803652427274, 0.8612560408283556, 1.1735971428762815, 1.4756755745843204, 1.912534509672197, 0.0, 1.29709441415965],
        [1.6025489304127938, 1.0334803652427274, 0.0, 1.9469205495328255, 0.5968024460337513, 0.0, 1.7834221408903144, 0.0, 0.9426193303636627],
        [1.1643240721287356, 0.8612560408283556, 1.9469205495328255, 0.0, 0.18170542700851566, 1.3210001348557896, 1.862927709482709, 0.0, 1.260180399570686],
        [0.18825728448079837, 1.1735971428762815, 0.5968024460337513, 0.18170542700851566, 0.0, 1.3153044217464864, 1.3655978157207005, 1.64015150034107, 0.8571458085969239],
        [0.0, 1.4756755745843204, 0.0, 1.3210001348557896, 1.3153044217464864, 0.0, 0.29266913951639695, 0.0, 0.583957231975702],
        [0.958102596281668, 1.912534509672197, 1.7834221408903144, 1.862927709482709, 1.3655978157207005, 0.29266913951639695, 0.0, 1.4937207712996758, 0.0],
        [0.31947782927415713, 0.0, 0.0, 0.0, 1.64015150034107, 0.0, 1.4937207712996758, 0.0, 0.0],
        [0.0, 1.29709441415965, 0.9426193303636627, 1.260180399570686, 0.8571458085969239, 0.583957231975702, 0.0, 0.0, 0.0]
    ];
    let a = Tensor::from_fn(9, 9, |i, j| rows[i][j]);
    let want_pagerank = [0.082240452256110, 0.133703624917350, 0.128328363740357, 0.138898873174516, 0.123529648659150, 0.086680937758808, 0.155446756075693, 0.065355575885660, 0.085815767532357];
    let want_effective_size = [2.966537957671709, 3.979687462153692, 3.305576459570056, 4.032589161759135, 5.086020082536646, 2.473198738712885, 4.384444320639291, 1.929382603039049, 2.707812066226408];
    let want_clustering = [0.346030860191201, 0.440197957713351, 0.507580019753192, 0.419966959019511, 0.284588951351957, 0.448158070584807, 0.424613374475095, 0.467074678207666, 0.456140806491297];
    let close = |got: &[f64], want: &[f64], tol: f64| got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol);
    assert!(close(&pagerank(&a, 0.85, 100, 1e-10).unwrap(), &want_pagerank, 1e-10));
    assert!(close(&effective_size(&a).unwrap(), &want_effective_size, 1e-12));
    assert!(close(&clustering_coefficient(&a).unwrap(), &want_clustering, 1e-12));
}
