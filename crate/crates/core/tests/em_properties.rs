use netmix::em::{e_step, run_em_with_starts, EStepVariant, EmConfig};
use netmix::glm::irls_fit;
use netmix::init::{starts_from_distances, StartMatrix, StartOptions};
use netmix::sim::{simulate_mixture, Family, Generator};
use netmix::specs::{compile_unconstrained, NetworkModelSpec};
use netmix::{CovariateSet, GraphPopulation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    pop: GraphPopulation,
    spec: NetworkModelSpec,
    truth: Vec<usize>,
    m: usize,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = [Family::P1, Family::Sbm, Family::Unconstrained][seed as usize % 3];
    let generator = Generator {
        family,
        blocks: 2,
        base: rng.random_range(-1.5..0.0),
        shared_sd: 0.5,
        component_sd: rng.random_range(0.2..1.0),
    };
    let v = rng.random_range(4..=12);
    let k = rng.random_range(6..=20);
    let m = rng.random_range(1..=3);
    let params = generator.params(v, m, seed);
    let (pop, truth) = simulate_mixture(&params, k, seed + 1).unwrap();
    Instance { pop, spec: generator.spec(v), truth, m }
}

#[test]
fn objective_never_decreases() {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let inst = instance(seed);
        let model = inst.spec.compile(&inst.pop, &CovariateSet::default()).unwrap();
        let y = inst.pop.response_matrix();
        let starts = starts_from_distances(&inst.pop, inst.m, &StartOptions::default()).unwrap();
        for variant in [EStepVariant::Paper, EStepVariant::Standard] {
            let config = EmConfig { variant, ..EmConfig::default() };
            for start in &starts {
                let fit = run_em_with_starts(&model, &y, std::slice::from_ref(start), &config).unwrap();
                for w in fit.objective_trace.windows(2) {
                    worst = worst.max(w[0] - w[1]);
                }
            }
        }
    }
    assert!(worst <= 1e-9, "largest decrease {worst:e}");
}

#[test]
fn responsibilities_are_distributions() {
    for seed in 0..50 {
        let inst = instance(seed);
        let model = inst.spec.compile(&inst.pop, &CovariateSet::default()).unwrap();
        let fit = netmix::run_em(&inst.pop, &model, inst.m, &EmConfig::default()).unwrap();
        for row in fit.responsibilities.chunks(inst.m) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        assert_eq!(fit.assignment.len(), inst.pop.n_graphs());
    }
}

#[test]
fn single_component_equals_the_weighted_glm() {
    for seed in 0..12 {
        let inst = instance(seed);
        let model = inst.spec.compile(&inst.pop, &CovariateSet::default()).unwrap();
        let fit = netmix::run_em(&inst.pop, &model, 1, &EmConfig::default()).unwrap();
        // stack every graph's dyads against the distinct design rows
        let dense = model.design.to_dense();
        let k = inst.pop.n_graphs();
        let y = inst.pop.response_matrix();
        let p = dense.n_cols();
        let mut values = Vec::with_capacity(k * model.n_dyads * p);
        for g in 0..k {
            for d in 0..model.n_dyads {
                values.extend(dense.row(model.row(g, d)));
            }
        }
        let stacked = netmix::Design::dense(dense.names().to_vec(), k * model.n_dyads, values).unwrap();
        let glm = irls_fit(&stacked, &y, &vec![1.0; y.len()]).unwrap();
        let em = fit.components[0].fixed();
        for (a, b) in em.coefficients.iter().zip(&glm.coefficients) {
            assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
        }
        assert!((fit.objective - glm.loglik).abs() < 1e-8 * glm.loglik.abs().max(1.0));
    }
}

#[test]
fn hard_correct_start_settles_quickly() {
    let generator = Generator {
        family: Family::Sbm,
        blocks: 2,
        base: -1.0,
        shared_sd: 0.3,
        component_sd: 1.5,
    };
    let params = generator.params(20, 2, 7);
    let (pop, truth) = simulate_mixture(&params, 30, 8).unwrap();
    let model = generator.spec(20).compile(&pop, &CovariateSet::default()).unwrap();
    let start = StartMatrix::from_labels(&truth, 2, "truth");
    let fit = run_em_with_starts(&model, &pop.response_matrix(), &[start], &EmConfig::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.n_iter <= 3, "{} iterations", fit.n_iter);
    assert_eq!(netmix::purity(&fit.assignment, &truth).unwrap(), 1.0);
}

#[test]
fn unconstrained_fit_recovers_separated_clusters() {
    let generator = Generator {
        family: Family::Unconstrained,
        blocks: 1,
        base: -1.0,
        shared_sd: 0.5,
        component_sd: 1.5,
    };
    let params = generator.params(12, 2, 3);
    let (pop, truth) = simulate_mixture(&params, 24, 4).unwrap();
    let model = compile_unconstrained(&pop).unwrap();
    let fit = netmix::run_em(&pop, &model, 2, &EmConfig::default()).unwrap();
    assert_eq!(netmix::purity(&fit.assignment, &truth).unwrap(), 1.0);
    assert_eq!(fit.start_summaries.len(), 10);
}

#[test]
fn seeds_make_runs_reproducible() {
    let inst = instance(5);
    let model = inst.spec.compile(&inst.pop, &CovariateSet::default()).unwrap();
    let config = EmConfig { seed: 11, ..EmConfig::default() };
    let a = netmix::run_em(&inst.pop, &model, inst.m, &config).unwrap();
    let b = netmix::run_em(&inst.pop, &model, inst.m, &config).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let _ = inst.truth;
}

proptest! {
    #[test]
    fn e_step_rows_sum_to_one(
        loglik in prop::collection::vec(-1e4f64..0.0, 1..40),
        m in 1usize..4,
        standard in any::<bool>(),
    ) {
        let k = loglik.len() / m;
        prop_assume!(k > 0);
        let ll = &loglik[..k * m];
        let mixing = vec![1.0 / m as f64; m];
        let variant = if standard { EStepVariant::Standard } else { EStepVariant::Paper };
        let p = e_step(ll, &mixing, variant).unwrap();
        for row in p.chunks(m) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn paper_variant_ignores_mixing(loglik in prop::collection::vec(-50f64..0.0, 6), a in 0.01f64..0.99) {
        let p1 = e_step(&loglik, &[a, 1.0 - a], EStepVariant::Paper).unwrap();
        let p2 = e_step(&loglik, &[0.5, 0.5], EStepVariant::Standard).unwrap();
        for (x, y) in p1.iter().zip(&p2) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
