#![allow(dead_code)]

use khop_core::graph::Graph;
use rand::Rng;

/// Random spanning tree plus extra edges with probability `p`.
pub fn random_connected<R: Rng>(rng: &mut R, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for a in 0..n {
        for b in a + 1..n {
            if !edges.contains(&(a, b)) && rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

/// All-pairs hop distances by Floyd-Warshall.
pub fn hop_distances(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.n();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for &j in g.neighbors(i) {
            d[i][j] = 1;
        }
    }
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][m] + d[m][j] < d[i][j] {
                    d[i][j] = d[i][m] + d[m][j];
                }
            }
        }
    }
    d
}

/// Agents at distance `2..=k` from `i`.
pub fn khop_oracle(dist: &[Vec<usize>], i: usize, k: usize) -> Vec<usize> {
    (0..dist.len()).filter(|&j| dist[i][j] >= 2 && dist[i][j] <= k).collect()
}

/// `M = L + H` on `members`, built from adjacency tests only.
pub fn coupling_oracle(g: &Graph, target: usize, members: &[usize]) -> Vec<Vec<f64>> {
    let m = members.len();
    let mut out = vec![vec![0.0; m]; m];
    for (p, &a) in members.iter().enumerate() {
        for (q, &b) in members.iter().enumerate() {
            if p != q && g.has_edge(a, b) {
                out[p][q] = -1.0;
                out[p][p] += 1.0;
            }
        }
        let common = (0..g.n()).filter(|&c| g.has_edge(a, c) && g.has_edge(target, c)).count();
        out[p][p] += common as f64;
    }
    out
}

/// Cholesky factorisation succeeds iff the matrix is positive definite.
pub fn cholesky_pd(a: &[Vec<f64>], shift: f64) -> bool {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j] - if i == j { shift } else { 0.0 };
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    true
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// First sample time from which `norms` stays below `band`.
pub fn settle(times: &[f64], norms: &[f64], band: f64) -> Option<f64> {
    let mut t = None;
    for k in (0..norms.len()).rev() {
        if norms[k] >= band {
            break;
        }
        t = Some(times[k]);
    }
    t
}
