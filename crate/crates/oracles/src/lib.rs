//! Slow, literal reference implementations. Nothing here shares code with
//! `netmix`; the test suites compare the library against these.

use std::collections::HashSet;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-12` times the largest one.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Inverse by solving against unit vectors.
pub fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve(a.to_vec(), e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// `Σ w_i [y_i η_i − ln(1 + e^{η_i})]`.
pub fn logistic_loglik(x: &[Vec<f64>], y: &[f64], w: &[f64], beta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((row, &yi), &wi)| {
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let log1p = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            wi * (yi * eta - log1p)
        })
        .sum()
}

/// Gradient of [`logistic_loglik`].
pub fn logistic_score(x: &[Vec<f64>], y: &[f64], w: &[f64], beta: &[f64]) -> Vec<f64> {
    let p = beta.len();
    let mut g = vec![0.0; p];
    for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let r = wi * (yi - sigmoid(eta));
        for c in 0..p {
            g[c] += r * row[c];
        }
    }
    g
}

/// Observed information `Σ w_i μ_i (1 − μ_i) x_i x_iᵀ`.
pub fn logistic_information(x: &[Vec<f64>], w: &[f64], beta: &[f64]) -> Vec<Vec<f64>> {
    let p = beta.len();
    let mut h = vec![vec![0.0; p]; p];
    for (row, &wi) in x.iter().zip(w) {
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let mu = sigmoid(eta);
        let s = wi * mu * (1.0 - mu);
        for a in 0..p {
            for b in 0..p {
                h[a][b] += s * row[a] * row[b];
            }
        }
    }
    h
}

/// Plain Newton–Raphson on the weighted logistic log-likelihood from
/// `β = 0`. `None` if a step is singular or it fails to settle.
pub fn newton_logistic(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let p = x.first()?.len();
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let g = logistic_score(x, y, w, &beta);
        let h = logistic_information(x, w, &beta);
        let step = solve(h, g)?;
        let mut t = 1.0;
        let before = logistic_loglik(x, y, w, &beta);
        loop {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            if logistic_loglik(x, y, w, &trial) >= before - 1e-12 || t < 1e-8 {
                beta = trial;
                break;
            }
            t /= 2.0;
        }
        let size = step.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        if size < 1e-13 {
            return Some(beta);
        }
    }
    let g = logistic_score(x, y, w, &beta);
    (g.iter().fold(0.0_f64, |m, s| m.max(s.abs())) < 1e-9).then_some(beta)
}

/// A graph as a full `v × v` 0/1 matrix.
pub struct Graph<'a> {
    pub v: usize,
    pub directed: bool,
    pub adjacency: &'a [u8],
}

impl Graph<'_> {
    /// Edge set: ordered pairs if directed, `(min, max)` pairs otherwise.
    pub fn edges(&self) -> HashSet<(usize, usize)> {
        let mut out = HashSet::new();
        for i in 0..self.v {
            for j in 0..self.v {
                if i != j && self.adjacency[i * self.v + j] == 1 {
                    out.insert(if self.directed { (i, j) } else { (i.min(j), i.max(j)) });
                }
            }
        }
        out
    }

    pub fn laplacian(&self) -> Vec<Vec<i64>> {
        let mut l = vec![vec![0i64; self.v]; self.v];
        for i in 0..self.v {
            for j in 0..self.v {
                if i != j && self.adjacency[i * self.v + j] == 1 {
                    l[i][j] = -1;
                    l[i][i] += 1;
                }
            }
        }
        l
    }
}

pub fn jaccard(a: &Graph, b: &Graph) -> f64 {
    let (ea, eb) = (a.edges(), b.edges());
    let union = ea.union(&eb).count();
    if union == 0 {
        return 0.0;
    }
    1.0 - ea.intersection(&eb).count() as f64 / union as f64
}

pub fn l1_adjacency(a: &Graph, b: &Graph) -> f64 {
    a.edges().symmetric_difference(&b.edges()).count() as f64
}

pub fn l1_laplacian(a: &Graph, b: &Graph) -> f64 {
    let (la, lb) = (a.laplacian(), b.laplacian());
    la.iter()
        .flatten()
        .zip(lb.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .sum::<i64>() as f64
}

/// Every `m`-subset of `0..k`, in lexicographic order.
pub fn subsets(k: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            rec(i + 1, k, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, m, &mut Vec::new(), &mut out);
    out
}

/// Sum over points of the distance to the nearest medoid.
pub fn medoid_cost(dist: &[Vec<f64>], medoids: &[usize]) -> f64 {
    dist.iter()
        .map(|row| medoids.iter().map(|&m| row[m]).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Minimum cost over all medoid sets of size `m`.
pub fn exhaustive_medoid_cost(dist: &[Vec<f64>], m: usize) -> f64 {
    subsets(dist.len(), m)
        .iter()
        .map(|s| medoid_cost(dist, s))
        .fold(f64::INFINITY, f64::min)
}
