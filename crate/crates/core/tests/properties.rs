use netmix::io::{load_population, save_population, Format};
use netmix::population::{dyad_count, dyad_positions, enumerate_dyads};
use netmix::selection::information_criteria;
use netmix::specs::{compile_p1, compile_sbm_apriori};
use netmix::{purity, CovariateSet, GraphPopulation};
use proptest::prelude::*;

fn population() -> impl Strategy<Value = GraphPopulation> {
    (2usize..7, 1usize..5, any::<bool>()).prop_flat_map(|(v, k, directed)| {
        prop::collection::vec(prop::collection::vec(any::<bool>(), v * v), k).prop_map(move |raw| {
            let adjacency = raw
                .iter()
                .map(|bits| {
                    let mut a = vec![0u8; v * v];
                    for i in 0..v {
                        for j in 0..v {
                            if i == j {
                                continue;
                            }
                            let (r, c) = if directed || i < j { (i, j) } else { (j, i) };
                            a[i * v + j] = u8::from(bits[r * v + c]);
                        }
                    }
                    a
                })
                .collect();
            GraphPopulation::from_matrices(v, directed, adjacency).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn dyad_domain_matches_a_brute_force_count(v in 1usize..30, directed in any::<bool>()) {
        let mut count = 0;
        for i in 0..v {
            for j in 0..v {
                if i != j && (directed || i < j) {
                    count += 1;
                }
            }
        }
        prop_assert_eq!(dyad_count(v, directed), count);
        prop_assert_eq!(dyad_positions(v, directed).len(), count);
    }

    #[test]
    fn dyad_table_has_one_row_per_graph_and_dyad(pop in population()) {
        let table = enumerate_dyads(&pop).unwrap();
        prop_assert_eq!(table.len(), pop.n_graphs() * pop.n_dyads());
        prop_assert_eq!(pop.response_matrix().len(), table.len());
        prop_assert!(pop.validate().is_empty());
    }

    #[test]
    fn dense_json_round_trips(pop in population()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("population.json");
        save_population(&path, Format::DenseJson, &pop, &CovariateSet::default()).unwrap();
        let (back, _) = load_population(&path, Format::DenseJson).unwrap();
        prop_assert_eq!(back, pop);
    }

    #[test]
    fn edge_lists_round_trip(pop in population()) {
        let dir = tempfile::tempdir().unwrap();
        save_population(dir.path(), Format::EdgeListCsv, &pop, &CovariateSet::default()).unwrap();
        let (back, _) = load_population(dir.path(), Format::EdgeListCsv).unwrap();
        prop_assert_eq!(back, pop);
    }

    #[test]
    fn purity_is_invariant_to_relabelling(
        labels in prop::collection::vec((0usize..4, 0usize..3), 1..40),
        shift in 1usize..4,
    ) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = labels.into_iter().unzip();
        let renamed: Vec<usize> = pred.iter().map(|&p| (p + shift) % 4).collect();
        let a = purity(&pred, &truth).unwrap();
        prop_assert_eq!(a, purity(&renamed, &truth).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(purity(&truth, &truth).unwrap(), 1.0);
        // a single cluster scores the largest class share
        let largest = (0..3).map(|c| truth.iter().filter(|&&t| t == c).count()).max().unwrap();
        prop_assert_eq!(purity(&vec![0; truth.len()], &truth).unwrap(), largest as f64 / truth.len() as f64);
    }

    #[test]
    fn criteria_algebra(loglik in -1e5f64..0.0, q in 1usize..2000, k in 2usize..500) {
        let ic = information_criteria(loglik, q, k);
        let expected = q as f64 * (2.0 - (k as f64).ln());
        prop_assert!(((ic.aic - ic.bic) - expected).abs() < 1e-9 * (1.0 + ic.aic.abs()));
        let more = information_criteria(loglik, q + 1, k);
        prop_assert!(more.aic > ic.aic && more.bic > ic.bic);
    }

    #[test]
    fn p1_effects_sum_to_zero(v in 3usize..12, seed in any::<u64>()) {
        let pop = GraphPopulation::from_edge_lists(v, false, &[vec![(0, 1)]]).unwrap();
        let model = compile_p1(&pop).unwrap();
        let p = model.n_fixed();
        let coef: Vec<f64> = (0..p).map(|j| ((seed.wrapping_add(j as u64) % 97) as f64 - 48.0) / 10.0).collect();
        let est = model.expand(&coef, &vec![0.0; p * p]);
        let total: f64 = est.iter().filter(|e| e.name.starts_with("alpha")).map(|e| e.estimate).sum();
        prop_assert!(total.abs() < 1e-9);
        prop_assert_eq!(est.iter().filter(|e| e.name.starts_with("alpha")).count(), v);
    }

    #[test]
    fn sbm_cells_cover_every_dyad(v in 2usize..10, b in 1usize..4, directed in any::<bool>()) {
        let pop = GraphPopulation::from_edge_lists(v, directed, &[vec![]]).unwrap();
        let blocks: Vec<i64> = (0..v).map(|i| (i % b) as i64).collect();
        let model = compile_sbm_apriori(&pop, &blocks).unwrap();
        prop_assert_eq!(model.n_dyads, pop.n_dyads());
        let p = model.n_fixed();
        for d in 0..model.n_dyads {
            let row = model.design.row(model.row(0, d));
            prop_assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
            prop_assert_eq!(row.len(), p);
        }
    }
}

#[test]
fn advice_population_shape_has_8820_dyad_rows() {
    let graphs: Vec<Vec<(usize, usize)>> = (0..21).map(|k| vec![(k, (k + 1) % 21)]).collect();
    let pop = GraphPopulation::from_edge_lists(21, true, &graphs).unwrap();
    assert_eq!(enumerate_dyads(&pop).unwrap().len(), 8820);
}
