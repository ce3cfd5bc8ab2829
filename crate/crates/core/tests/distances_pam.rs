use netmix::init::{distance, laplacian, pam_cluster, DistanceMatrix, Metric};
use netmix::GraphPopulation;
use netmix_oracles::{exhaustive_medoid_cost, jaccard, l1_adjacency, l1_laplacian, medoid_cost, Graph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_population(rng: &mut ChaCha8Rng, k: usize) -> GraphPopulation {
    let v = rng.random_range(2..9);
    let directed = rng.random::<bool>();
    let density = rng.random_range(0.0..1.0);
    let adjacency = (0..k)
        .map(|_| {
            let mut a = vec![0u8; v * v];
            for i in 0..v {
                for j in 0..v {
                    if i == j || (!directed && j < i) {
                        continue;
                    }
                    let e = u8::from(rng.random::<f64>() < density);
                    a[i * v + j] = e;
                    if !directed {
                        a[j * v + i] = e;
                    }
                }
            }
            a
        })
        .collect();
    GraphPopulation::from_matrices(v, directed, adjacency).unwrap()
}

fn graph(pop: &GraphPopulation, k: usize) -> Graph<'_> {
    Graph {
        v: pop.n_vertices(),
        directed: pop.directed(),
        adjacency: pop.adjacency(k),
    }
}

fn rows(d: &DistanceMatrix) -> Vec<Vec<f64>> {
    d.rows().map(|r| r.to_vec()).collect()
}

#[test]
fn distances_match_brute_force_definitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    for _ in 0..20 {
        let k = rng.random_range(2..10);
        let pop = random_population(&mut rng, k);
        let oracles: [(Metric, fn(&Graph, &Graph) -> f64); 3] = [
            (Metric::Jaccard, jaccard),
            (Metric::L1Adjacency, l1_adjacency),
            (Metric::L1Laplacian, l1_laplacian),
        ];
        for (metric, oracle) in oracles {
            let d = distance(&pop, metric);
            for a in 0..k {
                for b in 0..k {
                    assert_eq!(d.get(a, b), oracle(&graph(&pop, a), &graph(&pop, b)), "{metric:?} ({a},{b})");
                }
            }
        }
    }
}

#[test]
fn laplacian_rows_sum_to_zero_for_undirected_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    for _ in 0..20 {
        let pop = random_population(&mut rng, 1);
        if pop.directed() {
            continue;
        }
        let v = pop.n_vertices();
        let l = laplacian(&pop, 0);
        for row in l.chunks(v) {
            assert_eq!(row.iter().sum::<f64>(), 0.0);
        }
    }
}

#[test]
fn pam_matches_exhaustive_search_on_small_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(92);
    let mut checked = 0;
    for _ in 0..60 {
        let k = rng.random_range(2..=8);
        let pop = random_population(&mut rng, k);
        for metric in Metric::ALL {
            let d = distance(&pop, metric);
            for m in 1..=3.min(k) {
                let pam = pam_cluster(&d, m).unwrap();
                let dense = rows(&d);
                let best = exhaustive_medoid_cost(&dense, m);
                assert!((pam.cost - best).abs() < 1e-9, "K={k} M={m} {metric:?}: {} vs {best}", pam.cost);
                assert!((medoid_cost(&dense, &pam.medoids) - pam.cost).abs() < 1e-9);
                checked += 1;
            }
        }
    }
    assert!(checked > 300);
}

#[test]
fn pam_on_points_in_the_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(93);
    for _ in 0..200 {
        let k = rng.random_range(2..=8);
        let pts: Vec<(f64, f64)> = (0..k).map(|_| (rng.random(), rng.random())).collect();
        let entries: Vec<f64> = pts
            .iter()
            .flat_map(|a| pts.iter().map(move |b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()))
            .collect();
        let d = DistanceMatrix::new(k, entries, Metric::L1Adjacency).unwrap();
        for m in 1..=3.min(k) {
            let pam = pam_cluster(&d, m).unwrap();
            let best = exhaustive_medoid_cost(&rows(&d), m);
            assert!((pam.cost - best).abs() < 1e-9, "K={k} M={m}: {} vs {best}", pam.cost);
        }
    }
}

#[test]
fn pam_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(94);
    let pop = random_population(&mut rng, 6);
    let d = distance(&pop, Metric::L1Adjacency);
    let all = pam_cluster(&d, 6).unwrap();
    assert_eq!(all.cost, 0.0);
    let one = pam_cluster(&d, 1).unwrap();
    let sums: Vec<f64> = d.rows().map(|r| r.iter().sum()).collect();
    let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(sums[one.medoids[0]], min);
    assert!(pam_cluster(&d, 7).is_err());
}

proptest! {
    #[test]
    fn distances_are_symmetric_nonnegative_with_zero_diagonal(seed in any::<u64>(), k in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pop = random_population(&mut rng, k);
        for metric in Metric::ALL {
            let d = distance(&pop, metric);
            for a in 0..k {
                prop_assert_eq!(d.get(a, a), 0.0);
                for b in 0..k {
                    prop_assert_eq!(d.get(a, b), d.get(b, a));
                    prop_assert!(d.get(a, b) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn relabelling_vertices_preserves_distances(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pop = random_population(&mut rng, 3);
        let v = pop.n_vertices();
        let mut perm: Vec<usize> = (0..v).collect();
        for i in (1..v).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<Vec<u8>> = (0..3)
            .map(|k| {
                let mut a = vec![0u8; v * v];
                for i in 0..v {
                    for j in 0..v {
                        a[perm[i] * v + perm[j]] = pop.edge(k, i, j);
                    }
                }
                a
            })
            .collect();
        let other = GraphPopulation::from_matrices(v, pop.directed(), permuted).unwrap();
        for metric in Metric::ALL {
            let (d1, d2) = (distance(&pop, metric), distance(&other, metric));
            for a in 0..3 {
                for b in 0..3 {
                    prop_assert_eq!(d1.get(a, b), d2.get(a, b));
                }
            }
        }
    }
}

#[test]
fn large_problems_reach_a_swap_local_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(95);
    let k = 40;
    let pts: Vec<(f64, f64)> = (0..k).map(|_| (rng.random(), rng.random())).collect();
    let entries: Vec<f64> = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| (a.0 - b.0).abs() + (a.1 - b.1).abs()))
        .collect();
    let d = DistanceMatrix::new(k, entries, Metric::L1Adjacency).unwrap();
    let dense = rows(&d);
    let pam = pam_cluster(&d, 4).unwrap();
    assert!(pam.cost_trace.windows(2).all(|w| w[1] < w[0]));
    for slot in 0..4 {
        for cand in (0..k).filter(|c| !pam.medoids.contains(c)) {
            let mut trial = pam.medoids.clone();
            trial[slot] = cand;
            assert!(medoid_cost(&dense, &trial) >= pam.cost - 1e-12);
        }
    }
}
