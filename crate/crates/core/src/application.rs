//! The cognitive-social-structure pipeline: an unconstrained screen over a
//! range of `M`, then a covariate mixed-model refit at the chosen `M`, with
//! plot-ready tables.
//!
//! ```no_run
//! use netmix::application::{run_application, ApplicationConfig};
//! use netmix::io::{load_population, Format};
//!
//! let (pop, cov) = load_population("data/krackhardt/population.json".as_ref(), Format::DenseJson).unwrap();
//! let report = run_application(&pop, &cov, &ApplicationConfig::default()).unwrap();
//! println!("{}", report.parameter_table_csv());
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::em::{relabel, run_em_with_starts, EmConfig, MixtureFit};
use crate::error::{NetmixError, Result};
use crate::glm::{logistic, wald_p_value};
use crate::init::StartMatrix;
use crate::population::{CovariateSet, GraphPopulation};
use crate::selection::{select_m, SelectionTable};
use crate::specs::{
    compile_unconstrained, BlockOptions, BlockSource, CompiledModel, CountingRule, NetworkModelSpec,
    ParameterEstimate, RandomSpec, UnassignedMode,
};

pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct ApplicationConfig {
    pub min_components: usize,
    pub max_components: usize,
    pub em: EmConfig,
    pub model: NetworkModelSpec,
    pub counting: CountingRule,
    /// Monadic covariate holding the block labels used to order vertices.
    pub block_covariate: String,
    pub unassigned: Option<i64>,
}

impl Default for ApplicationConfig {
    fn default() -> Self {
        Self::with_unassigned_mode(UnassignedMode::Drop)
    }
}

impl ApplicationConfig {
    pub fn with_unassigned_mode(mode: UnassignedMode) -> Self {
        Self {
            min_components: 1,
            max_components: 4,
            em: EmConfig::default(),
            model: advice_model(mode),
            counting: CountingRule::default(),
            block_covariate: "department".into(),
            unassigned: Some(0),
        }
    }
}

/// Age, tenure and leading position of sender and receiver, perceiver
/// indicators, department blocks and sender/receiver random intercepts.
pub fn advice_model(mode: UnassignedMode) -> NetworkModelSpec {
    let terms = ["age", "tenure", "lead", "perceiver"];
    NetworkModelSpec::Covariate {
        terms: ["sender", "receiver"]
            .iter()
            .flat_map(|role| terms.iter().map(move |t| format!("{role}:{t}")))
            .collect(),
        random: RandomSpec {
            sender: true,
            receiver: true,
        },
        blocks: Some(BlockSource::Covariate("department".into())),
        block_options: BlockOptions {
            unassigned: Some(0),
            mode,
        },
    }
}

/// Adds `lead = 1{level < 3}` when the covariates carry `level` but no
/// `lead`.
pub fn with_lead_indicator(cov: &CovariateSet) -> CovariateSet {
    let mut out = cov.clone();
    if out.monadic("lead").is_none() {
        if let Some(level) = cov.monadic("level") {
            let lead = level.iter().map(|&l| f64::from(u8::from(l < 3.0))).collect();
            out.push_monadic("lead", lead);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub graph: String,
    /// 1-based cluster of the mixed-model fit.
    pub cluster: usize,
    pub responsibility: f64,
    /// 1-based cluster of the unconstrained screen.
    pub screen_cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<Option<f64>>,
    /// Wald p-value of `H0: θ = 0`, per cluster.
    pub p_values: Vec<Option<f64>>,
    /// Wald p-value of equality across the first two clusters.
    pub p_equal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignCell {
    pub cluster: usize,
    pub sender_block: String,
    pub receiver_block: String,
    pub estimate: f64,
    pub std_error: f64,
    pub p_value: f64,
}

impl SignCell {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE
    }

    /// `++`/`--` when significant, `+`/`-` otherwise.
    pub fn symbol(&self) -> &'static str {
        match (self.estimate >= 0.0, self.significant()) {
            (true, true) => "++",
            (false, true) => "--",
            (true, false) => "+",
            (false, false) => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityCell {
    pub cluster: usize,
    pub sender: String,
    pub receiver: String,
    pub sender_block: i64,
    pub receiver_block: i64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlupRow {
    pub vertex: String,
    pub block: i64,
    pub sender: Vec<f64>,
    pub receiver: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApplicationReport {
    pub selection: SelectionTable,
    pub n_components: usize,
    pub screen: MixtureFit,
    pub fit: MixtureFit,
    pub warnings: Vec<String>,
    pub memberships: Vec<Membership>,
    pub parameters: Vec<ParameterRow>,
    pub sign_grid: Vec<SignCell>,
    pub probabilities: Vec<ProbabilityCell>,
    pub blups: Vec<BlupRow>,
}

/// Runs the whole pipeline. Clusters are numbered densest first in both
/// fits.
pub fn run_application(
    pop: &GraphPopulation,
    cov: &CovariateSet,
    config: &ApplicationConfig,
) -> Result<ApplicationReport> {
    if !pop.directed() {
        return Err(NetmixError::InvalidArgument("the application expects directed graphs".into()));
    }
    let cov = with_lead_indicator(cov);
    cov.check(pop)?;
    let blocks = cov
        .monadic(&config.block_covariate)
        .ok_or_else(|| NetmixError::UnknownCovariate(config.block_covariate.clone()))?
        .iter()
        .map(|&b| b as i64)
        .collect::<Vec<_>>();

    let screen_model = compile_unconstrained(pop)?;
    let range = config.min_components..=config.max_components;
    let (selection, fits) = select_m(pop, &screen_model, range, &config.em, config.counting)?;
    let m = selection
        .chosen_aic
        .ok_or_else(|| NetmixError::AllStartsFailed(vec!["no converged screen fit".into()]))?;
    let mut screen = fits[m - config.min_components]
        .clone()
        .expect("the chosen row has a fit");
    densest_first(&mut screen, pop);

    let model = config.model.compile(pop, &cov)?;
    let start = StartMatrix::from_labels(&screen.assignment, m, "screen");
    let mut fit = run_em_with_starts(&model, &pop.response_matrix(), &[start], &config.em)?;
    densest_first(&mut fit, pop);

    let memberships = pop
        .graph_ids()
        .iter()
        .enumerate()
        .map(|(k, id)| Membership {
            graph: id.clone(),
            cluster: fit.assignment[k] + 1,
            responsibility: fit.responsibility(k, fit.assignment[k]),
            screen_cluster: screen.assignment[k] + 1,
        })
        .collect();
    let parameters = parameter_rows(&model, &fit);
    let sign_grid = sign_grid(&model, &fit)?;
    let probabilities = probability_cells(pop, &model, &fit, &blocks, config.unassigned);
    let blups = blup_rows(pop, &fit, &blocks);
    Ok(ApplicationReport {
        selection,
        n_components: m,
        screen,
        fit,
        warnings: model.warnings.clone(),
        memberships,
        parameters,
        sign_grid,
        probabilities,
        blups,
    })
}

/// Mean edge density of the graphs assigned to each component.
pub fn cluster_densities(fit: &MixtureFit, pop: &GraphPopulation) -> Vec<f64> {
    let d = pop.n_dyads() as f64;
    fit.clusters()
        .iter()
        .map(|members| {
            if members.is_empty() {
                return f64::NEG_INFINITY;
            }
            members.iter().map(|&k| pop.edge_count(k) as f64 / d).sum::<f64>() / members.len() as f64
        })
        .collect()
}

pub fn densest_first(fit: &mut MixtureFit, pop: &GraphPopulation) {
    let density = cluster_densities(fit, pop);
    let mut order: Vec<usize> = (0..fit.n_components).collect();
    order.sort_by(|&a, &b| density[b].total_cmp(&density[a]));
    relabel(fit, &order);
}

fn expanded(model: &CompiledModel, fit: &MixtureFit) -> Vec<Vec<ParameterEstimate>> {
    fit.components
        .iter()
        .map(|c| {
            let f = c.fixed();
            model.expand(&f.coefficients, &f.covariance)
        })
        .collect()
}

fn parameter_rows(model: &CompiledModel, fit: &MixtureFit) -> Vec<ParameterRow> {
    let per = expanded(model, fit);
    let finite = |se: f64| (se.is_finite() && se > 0.0).then_some(se);
    let mut rows: Vec<ParameterRow> = (0..per[0].len())
        .map(|i| {
            let estimates: Vec<f64> = per.iter().map(|p| p[i].estimate).collect();
            let std_errors: Vec<Option<f64>> = per.iter().map(|p| finite(p[i].std_error)).collect();
            let p_values = estimates
                .iter()
                .zip(&std_errors)
                .map(|(&e, se)| se.and_then(|s| wald_p_value(e, s).ok()))
                .collect();
            let p_equal = match (std_errors.first(), std_errors.get(1)) {
                (Some(Some(a)), Some(Some(b))) => {
                    wald_p_value(estimates[0] - estimates[1], (a * a + b * b).sqrt()).ok()
                }
                _ => None,
            };
            ParameterRow {
                name: per[0][i].name.clone(),
                estimates,
                std_errors,
                p_values,
                p_equal,
            }
        })
        .collect();
    let n_factors = model.random.len();
    for f in 0..n_factors {
        rows.push(ParameterRow {
            name: format!("sd[{}]", model.random[f].name),
            estimates: fit
                .components
                .iter()
                .map(|c| c.glmm().map_or(0.0, |g| g.sd[f]))
                .collect(),
            std_errors: vec![None; fit.n_components],
            p_values: vec![None; fit.n_components],
            p_equal: None,
        });
    }
    rows
}

fn sign_grid(model: &CompiledModel, fit: &MixtureFit) -> Result<Vec<SignCell>> {
    let mut out = Vec::new();
    for (m, params) in expanded(model, fit).iter().enumerate() {
        for p in params.iter().filter(|p| p.name.starts_with("xi[")) {
            let inner = &p.name[3..p.name.len() - 1];
            let (r, s) = inner
                .split_once(',')
                .ok_or_else(|| NetmixError::InvalidArgument(format!("malformed parameter `{}`", p.name)))?;
            let p_value = if p.std_error > 0.0 && p.std_error.is_finite() {
                wald_p_value(p.estimate, p.std_error)?
            } else {
                f64::NAN
            };
            out.push(SignCell {
                cluster: m + 1,
                sender_block: r.to_string(),
                receiver_block: s.to_string(),
                estimate: p.estimate,
                std_error: p.std_error,
                p_value,
            });
        }
    }
    Ok(out)
}

/// Vertices ordered by block label, unassigned last, ties by index.
pub fn block_order(blocks: &[i64], unassigned: Option<i64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by_key(|&i| (Some(blocks[i]) == unassigned, blocks[i], i));
    order
}

/// Conditional edge probabilities (fixed effects plus BLUPs), averaged over
/// the graphs of each cluster, or over every graph for an empty cluster.
fn probability_cells(
    pop: &GraphPopulation,
    model: &CompiledModel,
    fit: &MixtureFit,
    blocks: &[i64],
    unassigned: Option<i64>,
) -> Vec<ProbabilityCell> {
    let v = pop.n_vertices();
    let positions = pop.dyad_positions();
    let mut index = vec![None; v * v];
    for (d, &(i, j)) in positions.iter().enumerate() {
        index[i * v + j] = Some(d);
    }
    let clusters = fit.clusters();
    let all: Vec<usize> = (0..pop.n_graphs()).collect();
    let order = block_order(blocks, unassigned);
    let labels = pop.vertex_labels();
    let mut out = Vec::with_capacity(fit.n_components * v * v);
    for (m, comp) in fit.components.iter().enumerate() {
        let beta = &comp.fixed().coefficients;
        let eta_rows = model.design.linear_predictor(beta);
        let graphs = if clusters[m].is_empty() { &all } else { &clusters[m] };
        for &i in &order {
            for &j in &order {
                let Some(d) = index[i * v + j] else { continue };
                let mut shift = 0.0;
                if let Some(g) = comp.glmm() {
                    for (f, factor) in model.random.iter().enumerate() {
                        let r = model.row(0, d);
                        shift += g.blups[f][factor.level_of_row[r] as usize];
                    }
                }
                let probability = graphs
                    .iter()
                    .map(|&k| logistic(eta_rows[model.row(k, d)] + shift))
                    .sum::<f64>()
                    / graphs.len() as f64;
                out.push(ProbabilityCell {
                    cluster: m + 1,
                    sender: labels[i].clone(),
                    receiver: labels[j].clone(),
                    sender_block: blocks[i],
                    receiver_block: blocks[j],
                    probability,
                });
            }
        }
    }
    out
}

fn blup_rows(pop: &GraphPopulation, fit: &MixtureFit, blocks: &[i64]) -> Vec<BlupRow> {
    let pick = |name: &str, i: usize| -> Vec<f64> {
        fit.components
            .iter()
            .map(|c| {
                c.glmm()
                    .and_then(|g| {
                        g.factor_names
                            .iter()
                            .position(|n| n == name)
                            .map(|f| g.blups[f][i])
                    })
                    .unwrap_or(0.0)
            })
            .collect()
    };
    pop.vertex_labels()
        .iter()
        .enumerate()
        .map(|(i, label)| BlupRow {
            vertex: label.clone(),
            block: blocks[i],
            sender: pick("sender", i),
            receiver: pick("receiver", i),
        })
        .collect()
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

fn write_csv(header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl ApplicationReport {
    pub fn memberships_csv(&self) -> String {
        write_csv(
            strings(&["graph", "cluster", "responsibility", "screen_cluster"]),
            self.memberships.iter().map(|m| {
                vec![
                    m.graph.clone(),
                    m.cluster.to_string(),
                    num(m.responsibility),
                    m.screen_cluster.to_string(),
                ]
            }),
        )
    }

    /// One row per parameter; estimate, standard error and p-value columns
    /// per cluster, then the equality p-value.
    pub fn parameter_table_csv(&self) -> String {
        let m = self.n_components;
        let mut header = vec!["parameter".to_string()];
        header.extend((1..=m).map(|c| format!("estimate_{c}")));
        header.extend((1..=m).map(|c| format!("se_{c}")));
        header.extend((1..=m).map(|c| format!("p_{c}")));
        header.push("p_equal".into());
        write_csv(
            header,
            self.parameters.iter().map(|row| {
                let mut cells = vec![row.name.clone()];
                cells.extend(row.estimates.iter().map(|&e| num(e)));
                cells.extend(row.std_errors.iter().map(|&s| opt(s)));
                cells.extend(row.p_values.iter().map(|&p| opt(p)));
                cells.push(opt(row.p_equal));
                cells
            }),
        )
    }

    pub fn sign_grid_csv(&self) -> String {
        write_csv(
            strings(&["cluster", "sender_block", "receiver_block", "estimate", "std_error", "p_value", "sign"]),
            self.sign_grid.iter().map(|c| {
                vec![
                    c.cluster.to_string(),
                    c.sender_block.clone(),
                    c.receiver_block.clone(),
                    num(c.estimate),
                    num(c.std_error),
                    num(c.p_value),
                    c.symbol().to_string(),
                ]
            }),
        )
    }

    pub fn probabilities_csv(&self) -> String {
        write_csv(
            strings(&["cluster", "sender", "receiver", "sender_block", "receiver_block", "probability"]),
            self.probabilities.iter().map(|c| {
                vec![
                    c.cluster.to_string(),
                    c.sender.clone(),
                    c.receiver.clone(),
                    c.sender_block.to_string(),
                    c.receiver_block.to_string(),
                    num(c.probability),
                ]
            }),
        )
    }

    pub fn blups_csv(&self) -> String {
        let m = self.n_components;
        let mut header = strings(&["vertex", "block"]);
        header.extend((1..=m).map(|c| format!("sender_{c}")));
        header.extend((1..=m).map(|c| format!("receiver_{c}")));
        write_csv(
            header,
            self.blups.iter().map(|b| {
                let mut cells = vec![b.vertex.clone(), b.block.to_string()];
                cells.extend(b.sender.iter().map(|&x| num(x)));
                cells.extend(b.receiver.iter().map(|&x| num(x)));
                cells
            }),
        )
    }

    /// Estimate of `name` in every cluster.
    pub fn estimates(&self, name: &str) -> Option<&[f64]> {
        self.parameters.iter().find(|r| r.name == name).map(|r| r.estimates.as_slice())
    }
}

/// Parameters of one cluster of [`synthetic_advice_population`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCluster {
    pub beta0: f64,
    /// Sender then receiver: age, tenure, lead, perceiver.
    pub slopes: [f64; 8],
    pub within_block: f64,
    pub sender_sd: f64,
    pub receiver_sd: f64,
}

/// A population shaped like a cognitive social structure: 21 employees in
/// four departments plus one unaffiliated executive, each reporting the
/// whole advice network. Perceivers `first` form a dense cluster, the rest
/// a sparse one. Returns the population, its covariates and the true
/// cluster of every graph.
pub fn synthetic_advice_population(
    first: &[usize],
    clusters: &[SyntheticCluster; 2],
    seed: u64,
) -> Result<(GraphPopulation, CovariateSet, Vec<usize>)> {
    const V: usize = 21;
    let department: [i64; V] = [4, 4, 2, 4, 2, 1, 0, 1, 2, 3, 3, 1, 2, 2, 2, 4, 1, 3, 2, 2, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let age: Vec<f64> = (0..V).map(|_| rng.random_range(27.0..62.0_f64).round()).collect();
    let tenure: Vec<f64> = (0..V).map(|_| (rng.random_range(0.0..30.0_f64) * 4.0).round() / 4.0).collect();
    let level: Vec<f64> = (0..V)
        .map(|i| if department[i] == 0 { 1.0 } else if i % 5 == 1 { 2.0 } else { 3.0 })
        .collect();
    let lead: Vec<f64> = level.iter().map(|&l| f64::from(u8::from(l < 3.0))).collect();
    // centre the continuous covariates so the intercept is a typical log-odds
    let centre = |x: &[f64]| {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|a| a - mean).collect::<Vec<f64>>()
    };
    let (age_c, tenure_c) = (centre(&age), centre(&tenure));

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let effects: Vec<(Vec<f64>, Vec<f64>)> = clusters
        .iter()
        .map(|c| {
            let u = (0..V).map(|_| c.sender_sd * std_normal.sample(&mut rng)).collect();
            let w = (0..V).map(|_| c.receiver_sd * std_normal.sample(&mut rng)).collect();
            (u, w)
        })
        .collect();

    let truth: Vec<usize> = (0..V).map(|k| usize::from(!first.contains(&k))).collect();
    let mut adjacency = Vec::with_capacity(V);
    for (k, &z) in truth.iter().enumerate() {
        let c = &clusters[z];
        let (u, w) = &effects[z];
        let mut adj = vec![0u8; V * V];
        for i in 0..V {
            for j in (0..V).filter(|&j| j != i) {
                let x = [
                    age_c[i],
                    tenure_c[i],
                    lead[i],
                    f64::from(u8::from(i == k)),
                    age_c[j],
                    tenure_c[j],
                    lead[j],
                    f64::from(u8::from(j == k)),
                ];
                let mut eta = c.beta0 + u[i] + w[j] + x.iter().zip(&c.slopes).map(|(a, b)| a * b).sum::<f64>();
                if department[i] != 0 && department[i] == department[j] {
                    eta += c.within_block;
                }
                adj[i * V + j] = u8::from(rng.random::<f64>() < logistic(eta));
            }
        }
        adjacency.push(adj);
    }
    let pop = GraphPopulation::from_matrices(V, true, adjacency)?;
    let mut cov = CovariateSet::default();
    cov.push_monadic("age", age);
    cov.push_monadic("tenure", tenure);
    cov.push_monadic("level", level);
    cov.push_monadic("department", department.iter().map(|&d| d as f64).collect());
    Ok((pop, cov, truth))
}

/// Cluster parameters loosely patterned on published estimates for
/// managers' advice networks.
pub fn default_synthetic_clusters() -> [SyntheticCluster; 2] {
    [
        SyntheticCluster {
            beta0: 0.3,
            slopes: [-0.01, -0.03, 0.0, 1.1, 0.03, 0.08, 1.4, 1.35],
            within_block: 1.5,
            sender_sd: 0.35,
            receiver_sd: 0.6,
        },
        SyntheticCluster {
            beta0: -2.2,
            slopes: [-0.01, -0.02, 0.0, 1.0, 0.04, 0.08, 2.1, 1.35],
            within_block: 1.5,
            sender_sd: 0.3,
            receiver_sd: 0.25,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_order_puts_unassigned_last() {
        assert_eq!(block_order(&[2, 0, 1, 2, 1], Some(0)), vec![2, 4, 0, 3, 1]);
        assert_eq!(block_order(&[2, 0, 1], None), vec![1, 2, 0]);
    }

    #[test]
    fn lead_indicator_from_level() {
        let mut cov = CovariateSet::default();
        cov.push_monadic("level", vec![1.0, 2.0, 3.0]);
        assert_eq!(with_lead_indicator(&cov).monadic("lead").unwrap(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn advice_model_has_nine_fixed_terms_and_four_blocks() {
        let (pop, cov, truth) =
            synthetic_advice_population(&[0, 2, 3, 4, 9, 20], &default_synthetic_clusters(), 3).unwrap();
        assert_eq!(truth.iter().filter(|&&z| z == 0).count(), 6);
        let cov = with_lead_indicator(&cov);
        let model = advice_model(UnassignedMode::Drop).compile(&pop, &cov).unwrap();
        assert_eq!(model.n_fixed(), 24);
        assert_eq!(model.random.len(), 2);
        let singleton = advice_model(UnassignedMode::Singleton).compile(&pop, &cov).unwrap();
        assert_eq!(singleton.n_fixed(), 32);
    }

    #[test]
    fn sign_symbols() {
        let cell = |estimate: f64, p_value: f64| SignCell {
            cluster: 1,
            sender_block: "1".into(),
            receiver_block: "1".into(),
            estimate,
            std_error: 1.0,
            p_value,
        };
        assert_eq!(cell(1.0, 0.01).symbol(), "++");
        assert_eq!(cell(-1.0, 0.01).symbol(), "--");
        assert_eq!(cell(1.0, 0.2).symbol(), "+");
        assert_eq!(cell(-1.0, 0.2).symbol(), "-");
    }
}
