//! Starting points for EM: graph distances, PAM and perturbed restarts.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NetmixError, Result};
use crate::population::GraphPopulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Jaccard,
    L1Adjacency,
    L1Laplacian,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Jaccard, Metric::L1Adjacency, Metric::L1Laplacian];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Jaccard => "jaccard",
            Metric::L1Adjacency => "l1",
            Metric::L1Laplacian => "laplacian",
        }
    }
}

/// Symmetric `K × K` matrix of nonnegative distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    size: usize,
    entries: Vec<f64>,
    metric: Metric,
}

impl DistanceMatrix {
    /// Wraps a row-major matrix, checking the distance invariants.
    pub fn new(size: usize, entries: Vec<f64>, metric: Metric) -> Result<Self> {
        if entries.len() != size * size {
            return Err(NetmixError::Dimension(format!(
                "{} entries for a {size}x{size} distance matrix",
                entries.len()
            )));
        }
        for a in 0..size {
            if entries[a * size + a] != 0.0 {
                return Err(NetmixError::InvalidArgument("nonzero diagonal".into()));
            }
            for b in 0..size {
                let d = entries[a * size + b];
                if !(d >= 0.0) || d != entries[b * size + a] {
                    return Err(NetmixError::InvalidArgument(format!(
                        "entry ({a}, {b}) is negative or asymmetric"
                    )));
                }
            }
        }
        Ok(Self {
            size,
            entries,
            metric,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.size + b]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.size)
    }
}

/// Packs each graph's dyad vector into 64-bit words.
fn bitsets(pop: &GraphPopulation) -> Vec<Vec<u64>> {
    let positions = pop.dyad_positions();
    let words = positions.len().div_ceil(64);
    (0..pop.n_graphs())
        .map(|k| {
            let mut bits = vec![0u64; words];
            for (d, &(i, j)) in positions.iter().enumerate() {
                if pop.edge(k, i, j) != 0 {
                    bits[d / 64] |= 1 << (d % 64);
                }
            }
            bits
        })
        .collect()
}

fn pairwise(k: usize, metric: Metric, f: impl Fn(usize, usize) -> f64) -> DistanceMatrix {
    let mut entries = vec![0.0; k * k];
    for a in 0..k {
        for b in a + 1..k {
            let d = f(a, b);
            entries[a * k + b] = d;
            entries[b * k + a] = d;
        }
    }
    DistanceMatrix {
        size: k,
        entries,
        metric,
    }
}

/// `1 - |E_a ∩ E_b| / |E_a ∪ E_b|`, with two empty graphs at distance 0.
pub fn jaccard_distance(pop: &GraphPopulation) -> DistanceMatrix {
    let bits = bitsets(pop);
    pairwise(pop.n_graphs(), Metric::Jaccard, |a, b| {
        let (mut inter, mut union) = (0u32, 0u32);
        for (x, y) in bits[a].iter().zip(&bits[b]) {
            inter += (x & y).count_ones();
            union += (x | y).count_ones();
        }
        if union == 0 {
            0.0
        } else {
            1.0 - f64::from(inter) / f64::from(union)
        }
    })
}

/// Number of dyads on which two graphs differ.
pub fn l1_adjacency_distance(pop: &GraphPopulation) -> DistanceMatrix {
    let bits = bitsets(pop);
    pairwise(pop.n_graphs(), Metric::L1Adjacency, |a, b| {
        bits[a]
            .iter()
            .zip(&bits[b])
            .map(|(x, y)| (x ^ y).count_ones())
            .sum::<u32>()
            .into()
    })
}

/// `L = D - A` for graph `k`, row-major. `D` holds out-degrees, which are
/// the plain degrees for undirected graphs.
pub fn laplacian(pop: &GraphPopulation, k: usize) -> Vec<f64> {
    let v = pop.n_vertices();
    let adj = pop.adjacency(k);
    let mut out = vec![0.0; v * v];
    for i in 0..v {
        let mut degree = 0.0;
        for j in 0..v {
            if i != j && adj[i * v + j] != 0 {
                out[i * v + j] = -1.0;
                degree += 1.0;
            }
        }
        out[i * v + i] = degree;
    }
    out
}

/// Elementwise L1 distance between Laplacians.
///
/// Off-diagonal cells contribute the adjacency difference (twice per
/// unordered pair when undirected) and the diagonal contributes
/// `Σ_i |deg_a(i) - deg_b(i)|`, so no `v × v` matrix is materialized.
pub fn l1_laplacian_distance(pop: &GraphPopulation) -> DistanceMatrix {
    let bits = bitsets(pop);
    let v = pop.n_vertices();
    let degrees: Vec<Vec<i64>> = (0..pop.n_graphs())
        .map(|k| {
            let adj = pop.adjacency(k);
            (0..v)
                .map(|i| (0..v).filter(|&j| j != i && adj[i * v + j] != 0).count() as i64)
                .collect()
        })
        .collect();
    let mirror = if pop.directed() { 1 } else { 2 };
    pairwise(pop.n_graphs(), Metric::L1Laplacian, |a, b| {
        let off: u32 = bits[a]
            .iter()
            .zip(&bits[b])
            .map(|(x, y)| (x ^ y).count_ones())
            .sum();
        let diag: i64 = degrees[a]
            .iter()
            .zip(&degrees[b])
            .map(|(x, y)| (x - y).abs())
            .sum();
        (i64::from(off) * mirror + diag) as f64
    })
}

pub fn distance(pop: &GraphPopulation, metric: Metric) -> DistanceMatrix {
    match metric {
        Metric::Jaccard => jaccard_distance(pop),
        Metric::L1Adjacency => l1_adjacency_distance(pop),
        Metric::L1Laplacian => l1_laplacian_distance(pop),
    }
}

/// Result of [`pam_cluster`]. Labels are zero-based and numbered by the
/// order of the medoids' graph indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PamResult {
    pub labels: Vec<usize>,
    pub medoids: Vec<usize>,
    pub cost: f64,
    /// Total cost after BUILD and after every accepted swap.
    pub cost_trace: Vec<f64>,
}

fn total_cost(dist: &DistanceMatrix, medoids: &[usize]) -> f64 {
    (0..dist.size())
        .map(|o| {
            medoids
                .iter()
                .map(|&m| dist.get(o, m))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Problems with at most this many candidate medoid sets are solved
/// exactly.
pub const EXACT_MEDOID_SETS: u64 = 20_000;

fn n_subsets(k: usize, m: usize) -> u64 {
    let mut c: u64 = 1;
    for i in 0..m as u64 {
        c = c.saturating_mul(k as u64 - i) / (i + 1);
        if c > EXACT_MEDOID_SETS {
            return u64::MAX;
        }
    }
    c
}

/// Partition Around Medoids.
///
/// When there are at most [`EXACT_MEDOID_SETS`] candidate medoid sets every
/// set is scored and the cheapest wins. Otherwise greedy BUILD is followed
/// by best-improvement SWAP until no swap lowers the total distance to the
/// nearest medoid.
///
/// Ties resolve to the lowest graph index everywhere (the lexicographically
/// first medoid set, candidate choice in BUILD and SWAP, nearest-medoid
/// assignment), so runs are reproducible.
pub fn pam_cluster(dist: &DistanceMatrix, n_clusters: usize) -> Result<PamResult> {
    let k = dist.size();
    if n_clusters == 0 || n_clusters > k {
        return Err(NetmixError::InvalidArgument(format!(
            "cannot form {n_clusters} clusters from {k} graphs"
        )));
    }
    let (medoids, cost, cost_trace) = if n_subsets(k, n_clusters) <= EXACT_MEDOID_SETS {
        exact_medoids(dist, n_clusters)
    } else {
        build_swap(dist, n_clusters)
    };
    let labels = (0..k)
        .map(|o| {
            if let Some(pos) = medoids.iter().position(|&m| m == o) {
                return pos;
            }
            let mut best = 0;
            for (pos, &m) in medoids.iter().enumerate() {
                if dist.get(o, m) < dist.get(o, medoids[best]) {
                    best = pos;
                }
            }
            best
        })
        .collect();
    Ok(PamResult {
        labels,
        medoids,
        cost,
        cost_trace,
    })
}

fn exact_medoids(dist: &DistanceMatrix, m: usize) -> (Vec<usize>, f64, Vec<f64>) {
    let k = dist.size();
    let mut current: Vec<usize> = (0..m).collect();
    let mut best = (current.clone(), total_cost(dist, &current));
    loop {
        // advance to the next combination in lexicographic order
        let Some(i) = (0..m).rev().find(|&i| current[i] < k - m + i) else { break };
        current[i] += 1;
        for j in i + 1..m {
            current[j] = current[j - 1] + 1;
        }
        let c = total_cost(dist, &current);
        if c < best.1 {
            best = (current.clone(), c);
        }
    }
    let (medoids, cost) = best;
    (medoids, cost, vec![cost])
}

fn build_swap(dist: &DistanceMatrix, n_clusters: usize) -> (Vec<usize>, f64, Vec<f64>) {
    let k = dist.size();
    // nearest[o]: distance from o to its closest medoid so far
    let mut nearest = vec![f64::INFINITY; k];
    let mut medoids = Vec::with_capacity(n_clusters);
    let mut is_medoid = vec![false; k];
    for _ in 0..n_clusters {
        let mut best: Option<(f64, usize)> = None;
        for c in (0..k).filter(|&c| !is_medoid[c]) {
            let cost: f64 = (0..k).map(|o| nearest[o].min(dist.get(o, c))).sum();
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, c));
            }
        }
        let (_, c) = best.expect("a candidate exists while n_clusters <= k");
        medoids.push(c);
        is_medoid[c] = true;
        for o in 0..k {
            nearest[o] = nearest[o].min(dist.get(o, c));
        }
    }
    let mut cost = total_cost(dist, &medoids);
    let mut cost_trace = vec![cost];
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..n_clusters {
            for cand in (0..k).filter(|&c| !is_medoid[c]) {
                let mut trial = medoids.clone();
                trial[slot] = cand;
                let c = total_cost(dist, &trial);
                if c < cost && best.is_none_or(|(b, _, _)| c < b) {
                    best = Some((c, slot, cand));
                }
            }
        }
        let Some((c, slot, cand)) = best else { break };
        is_medoid[medoids[slot]] = false;
        is_medoid[cand] = true;
        medoids[slot] = cand;
        cost = c;
        cost_trace.push(cost);
    }
    medoids.sort_unstable();
    (medoids, cost, cost_trace)
}

/// `K × M` matrix of initial membership probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartMatrix {
    pub n_components: usize,
    /// Row-major `K × M`.
    pub probabilities: Vec<f64>,
    pub source: String,
    /// Rows redrawn by perturbation; empty for base starts.
    pub replaced_rows: Vec<usize>,
}

impl StartMatrix {
    pub fn from_labels(labels: &[usize], n_components: usize, source: impl Into<String>) -> Self {
        let mut probabilities = vec![0.0; labels.len() * n_components];
        for (k, &m) in labels.iter().enumerate() {
            probabilities[k * n_components + m] = 1.0;
        }
        Self {
            n_components,
            probabilities,
            source: source.into(),
            replaced_rows: Vec::new(),
        }
    }

    pub fn n_graphs(&self) -> usize {
        self.probabilities.len() / self.n_components
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.probabilities[k * self.n_components..(k + 1) * self.n_components]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartOptions {
    pub n_starts: usize,
    /// Share of graphs whose rows are redrawn in each perturbed start.
    pub perturb_fraction: f64,
    pub seed: u64,
}

impl Default for StartOptions {
    fn default() -> Self {
        Self {
            n_starts: 10,
            perturb_fraction: 0.3,
            seed: 1,
        }
    }
}

/// The three distance matrices, computed in parallel, in [`Metric::ALL`]
/// order.
pub fn all_distances(pop: &GraphPopulation) -> Vec<DistanceMatrix> {
    Metric::ALL.par_iter().map(|&m| distance(pop, m)).collect()
}

/// Hard PAM partitions under each metric.
pub fn base_partitions(pop: &GraphPopulation, n_components: usize) -> Result<Vec<(Metric, Vec<usize>)>> {
    partitions_from_distances(&all_distances(pop), n_components)
}

pub fn partitions_from_distances(
    distances: &[DistanceMatrix],
    n_components: usize,
) -> Result<Vec<(Metric, Vec<usize>)>> {
    distances
        .iter()
        .map(|d| Ok((d.metric(), pam_cluster(d, n_components)?.labels)))
        .collect()
}

/// Three PAM starts (one per metric) followed by perturbed copies.
///
/// Perturbed start `s` (counting from 0 after the bases) copies base
/// `s mod 3`, then redraws `⌈fraction · K⌉` distinct rows, each replaced by a
/// uniformly chosen hard assignment.
pub fn starts_from_distances(
    pop: &GraphPopulation,
    n_components: usize,
    options: &StartOptions,
) -> Result<Vec<StartMatrix>> {
    let bases = base_partitions(pop, n_components)?;
    Ok(starts_from_partitions(&bases, n_components, options))
}

pub fn starts_from_partitions(
    bases: &[(Metric, Vec<usize>)],
    n_components: usize,
    options: &StartOptions,
) -> Vec<StartMatrix> {
    let mut starts: Vec<StartMatrix> = bases
        .iter()
        .map(|(metric, labels)| StartMatrix::from_labels(labels, n_components, metric.name()))
        .collect();
    if bases.is_empty() {
        return starts;
    }
    let k = bases[0].1.len();
    let n_replace = ((options.perturb_fraction * k as f64).ceil() as usize).min(k);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut s = 0;
    while starts.len() < options.n_starts {
        let (metric, base) = &bases[s % bases.len()];
        let mut labels = base.clone();
        let mut rows = sample(&mut rng, k, n_replace).into_vec();
        rows.sort_unstable();
        for &row in &rows {
            labels[row] = rng.random_range(0..n_components);
        }
        let mut start = StartMatrix::from_labels(
            &labels,
            n_components,
            format!("{}+perturb{}", metric.name(), s + 1),
        );
        start.replaced_rows = rows;
        starts.push(start);
        s += 1;
    }
    starts.truncate(options.n_starts.max(1));
    starts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> GraphPopulation {
        GraphPopulation::from_edge_lists(3, false, &[vec![(0, 1), (1, 2)], vec![(1, 2), (0, 2)]])
            .unwrap()
    }

    #[test]
    fn jaccard_hand_example() {
        let d = jaccard_distance(&pair());
        assert!((d.get(0, 1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn jaccard_extremes() {
        let pop = GraphPopulation::from_edge_lists(
            3,
            false,
            &[vec![(0, 1)], vec![(0, 1)], vec![(1, 2)], vec![], vec![]],
        )
        .unwrap();
        let d = jaccard_distance(&pop);
        assert_eq!(d.get(0, 1), 0.0);
        assert_eq!(d.get(0, 2), 1.0);
        assert_eq!(d.get(3, 4), 0.0);
    }

    #[test]
    fn l1_hand_example() {
        assert_eq!(l1_adjacency_distance(&pair()).get(0, 1), 2.0);
    }

    #[test]
    fn laplacian_of_path_and_complete() {
        let path = GraphPopulation::from_edge_lists(3, false, &[vec![(0, 1), (1, 2)]]).unwrap();
        assert_eq!(
            laplacian(&path, 0),
            vec![1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]
        );
        let full = GraphPopulation::from_edge_lists(3, false, &[vec![(0, 1), (1, 2), (0, 2)]]).unwrap();
        assert_eq!(
            laplacian(&full, 0),
            vec![2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]
        );
        let empty = GraphPopulation::from_edge_lists(3, false, &[vec![]]).unwrap();
        assert!(laplacian(&empty, 0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplacian_distance_hand_example() {
        let pop = GraphPopulation::from_edge_lists(3, false, &[vec![(0, 1), (1, 2)], vec![(0, 1)]])
            .unwrap();
        assert_eq!(l1_laplacian_distance(&pop).get(0, 1), 4.0);
    }

    #[test]
    fn pam_rejects_too_many_clusters() {
        let d = jaccard_distance(&pair());
        assert!(pam_cluster(&d, 3).is_err());
        assert!(pam_cluster(&d, 0).is_err());
    }

    #[test]
    fn pam_each_graph_its_own_cluster() {
        let pop = GraphPopulation::from_edge_lists(
            3,
            false,
            &[vec![(0, 1)], vec![(1, 2)], vec![(0, 2)], vec![(0, 1), (1, 2)]],
        )
        .unwrap();
        let res = pam_cluster(&l1_adjacency_distance(&pop), 4).unwrap();
        assert_eq!(res.labels, vec![0, 1, 2, 3]);
        assert_eq!(res.cost, 0.0);
    }

    #[test]
    fn pam_recovers_two_pairs() {
        let pop = GraphPopulation::from_edge_lists(
            4,
            false,
            &[
                vec![(0, 1), (0, 2)],
                vec![(2, 3), (1, 3)],
                vec![(0, 1), (0, 2)],
                vec![(2, 3), (1, 3)],
            ],
        )
        .unwrap();
        let res = pam_cluster(&l1_adjacency_distance(&pop), 2).unwrap();
        assert_eq!(res.labels, vec![0, 1, 0, 1]);
        assert_eq!(res.cost, 0.0);
    }

    #[test]
    fn ten_starts_with_valid_rows() {
        let pop = GraphPopulation::from_edge_lists(
            4,
            false,
            &(0..10)
                .map(|k| if k % 2 == 0 { vec![(0, 1), (2, 3)] } else { vec![(0, 2)] })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let starts = starts_from_distances(&pop, 2, &StartOptions::default()).unwrap();
        assert_eq!(starts.len(), 10);
        for s in &starts {
            for k in 0..10 {
                assert!((s.row(k).iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_fraction_copies_bases() {
        let bases = vec![
            (Metric::Jaccard, vec![0, 1, 0, 1]),
            (Metric::L1Adjacency, vec![0, 0, 1, 1]),
            (Metric::L1Laplacian, vec![1, 0, 0, 1]),
        ];
        let opts = StartOptions {
            perturb_fraction: 0.0,
            ..Default::default()
        };
        let starts = starts_from_partitions(&bases, 2, &opts);
        for (s, start) in starts.iter().enumerate() {
            assert_eq!(start.probabilities, starts[s % 3].probabilities);
        }
    }

    #[test]
    fn thirty_percent_of_ten_replaces_three_rows() {
        let bases = vec![(Metric::Jaccard, vec![0; 10])];
        let starts = starts_from_partitions(&bases, 2, &StartOptions::default());
        assert!(starts[0].replaced_rows.is_empty());
        for start in &starts[1..] {
            assert_eq!(start.replaced_rows.len(), 3);
            let changed = (0..10).filter(|&k| start.row(k)[1] == 1.0).count();
            assert!(changed <= 3);
        }
    }
}
