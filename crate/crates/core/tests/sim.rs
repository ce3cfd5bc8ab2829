use netmix::sim::{
    config_hash, median, run_scenario, scenario_config, simulate_mixture, timing_profile, Cell, ComponentParams,
    MixtureParams, ScenarioConfig,
};

#[test]
fn contiguous_equal_sized_subpopulations() {
    let params = MixtureParams {
        n_vertices: 4,
        directed: true,
        components: vec![
            ComponentParams::Unconstrained { probs: vec![0.0; 12] },
            ComponentParams::Unconstrained { probs: vec![1.0; 12] },
            ComponentParams::Unconstrained { probs: vec![0.0; 12] },
        ],
    };
    let (pop, labels) = simulate_mixture(&params, 7, 1).unwrap();
    assert_eq!(labels, vec![0, 0, 0, 1, 1, 2, 2]);
    for (k, &z) in labels.iter().enumerate() {
        assert_eq!(pop.edge_count(k), if z == 1 { 12 } else { 0 });
    }
}

#[test]
fn block_frequencies_approach_their_probabilities() {
    let blocks = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
    let probs = vec![0.7, 0.1, 0.2, 0.5];
    let params = MixtureParams {
        n_vertices: 10,
        directed: true,
        components: vec![ComponentParams::Sbm { blocks: blocks.clone(), probs: probs.clone() }],
    };
    let (pop, _) = simulate_mixture(&params, 400, 2).unwrap();
    let mut hits = [0.0; 4];
    let mut trials = [0.0; 4];
    for k in 0..pop.n_graphs() {
        for (i, j) in pop.dyad_positions() {
            let c = blocks[i] * 2 + blocks[j];
            trials[c] += 1.0;
            hits[c] += f64::from(pop.edge(k, i, j));
        }
    }
    for c in 0..4 {
        let freq = hits[c] / trials[c];
        let se = (probs[c] * (1.0 - probs[c]) / trials[c]).sqrt();
        assert!((freq - probs[c]).abs() < 5.0 * se, "cell {c}: {freq} vs {}", probs[c]);
    }
}

#[test]
fn undirected_generators_give_symmetric_graphs() {
    let config = scenario_config("A").unwrap();
    let params = config.generator.params(8, 2, 3);
    let (pop, _) = simulate_mixture(&params, 6, 4).unwrap();
    assert!(!pop.directed());
    assert!(pop.validate().is_empty());
}

#[test]
fn timing_profile_recovers_power_laws() {
    let points: Vec<(f64, f64)> = [50.0, 100.0, 200.0, 400.0].iter().map(|&x: &f64| (x, 3e-4 * x.powf(1.7))).collect();
    let fit = timing_profile(&points).unwrap();
    assert!((fit.slope - 1.7).abs() < 1e-10);
    assert!((fit.intercept - 3e-4f64.ln()).abs() < 1e-9);
    assert!(timing_profile(&points[..3]).is_err());
}

#[test]
fn medians_and_hashes() {
    assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
    assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
    assert_eq!(median(&mut []), None);
    let a = scenario_config("A").unwrap();
    let b = scenario_config("B").unwrap();
    assert_eq!(config_hash(&a), config_hash(&scenario_config("a").unwrap()));
    assert_ne!(config_hash(&a), config_hash(&b));
    assert!(scenario_config("Z").is_err());
}

#[test]
fn a_small_scenario_runs_reproducibly() {
    let config = ScenarioConfig {
        replicates: 2,
        grid: vec![Cell { v: 12, k: 12, m: 2 }],
        select_up_to: Some(3),
        ..scenario_config("D").unwrap()
    };
    let first = run_scenario(&config).unwrap();
    let second = run_scenario(&config).unwrap();
    assert_eq!(first.to_csv(), second.to_csv());
    let cell = &first.cells[0];
    assert_eq!(cell.replicates.len(), 2);
    assert!(cell.replicates.iter().all(|r| r.error.is_none()));
    assert_eq!(cell.aic_counts.iter().sum::<usize>(), 2);
    assert_eq!(first.to_csv().lines().count(), 3);
}
