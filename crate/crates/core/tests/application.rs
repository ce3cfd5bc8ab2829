use netmix::application::{
    default_synthetic_clusters, run_application, synthetic_advice_population, ApplicationConfig,
};
use netmix::specs::UnassignedMode;

const FIRST: [usize; 6] = [0, 2, 3, 4, 9, 20];

#[test]
fn synthetic_advice_population_reproduces_the_qualitative_patterns() {
    let (pop, cov, truth) = synthetic_advice_population(&FIRST, &default_synthetic_clusters(), 1).unwrap();
    let report = run_application(&pop, &cov, &ApplicationConfig::default()).unwrap();
    assert_eq!(report.selection.chosen_aic, Some(2));
    assert_eq!(report.n_components, 2);

    let first: Vec<usize> = report
        .memberships
        .iter()
        .enumerate()
        .filter(|(_, m)| m.cluster == 1)
        .map(|(k, _)| k)
        .collect();
    assert_eq!(first, FIRST);
    assert_eq!(netmix::purity(&report.fit.assignment, &truth).unwrap(), 1.0);

    let est = |name: &str| report.estimates(name).unwrap().to_vec();
    assert!(est("beta0")[0] > est("beta0")[1]);
    assert!(est("sender:perceiver").iter().all(|&b| b > 0.0));
    assert!(est("receiver:perceiver").iter().all(|&b| b > 0.0));
    assert!(est("receiver:lead")[1] > est("receiver:lead")[0]);
    assert!(est("sd[receiver]")[0] > est("sd[receiver]")[1]);
    let diagonal: Vec<_> = report.sign_grid.iter().filter(|c| c.sender_block == c.receiver_block).collect();
    assert_eq!(diagonal.len(), 8);
    assert!(diagonal.iter().all(|c| c.symbol() == "++"));
}

#[test]
fn report_tables_have_the_expected_shapes() {
    let (pop, cov, _) = synthetic_advice_population(&FIRST, &default_synthetic_clusters(), 2).unwrap();
    let report = run_application(&pop, &cov, &ApplicationConfig::default()).unwrap();
    assert_eq!(report.memberships_csv().lines().count(), 22);
    // 8 terms + intercept, 4+4 block mains, 16 interactions, 2 sds
    assert_eq!(report.parameter_table_csv().lines().count(), 1 + 9 + 8 + 16 + 2);
    assert_eq!(report.sign_grid_csv().lines().count(), 1 + 2 * 16);
    assert_eq!(report.probabilities_csv().lines().count(), 1 + 2 * 420);
    assert_eq!(report.blups_csv().lines().count(), 22);
    // rows are grouped by department, the unaffiliated executive last
    let order: Vec<i64> = report.probabilities.iter().take(420).map(|c| c.sender_block).collect();
    assert!(order.windows(2).all(|w| w[0] == w[1] || w[1] == 0 || (w[0] != 0 && w[0] < w[1])));
    assert!(report.parameter_table_csv().contains("\"xi[1,1]\""));
    let again = run_application(&pop, &cov, &ApplicationConfig::default()).unwrap();
    assert_eq!(report.parameter_table_csv(), again.parameter_table_csv());
}

#[test]
fn singleton_mode_keeps_the_executive_block() {
    let (pop, cov, _) = synthetic_advice_population(&FIRST, &default_synthetic_clusters(), 3).unwrap();
    let config = ApplicationConfig {
        max_components: 2,
        ..ApplicationConfig::with_unassigned_mode(UnassignedMode::Singleton)
    };
    let report = run_application(&pop, &cov, &config).unwrap();
    assert!(report.warnings.iter().any(|w| w.contains("block of its own")));
    assert!(report.parameters.iter().any(|p| p.name == "gamma[0]"));
}
