//! EM for mixtures of network GLMs and GLMMs.
//!
//! Each start runs an initial M step on its starting responsibilities, then
//! alternates E and M steps until the relative change of the mixture
//! objective drops below `rel_tol`. The best start by final objective wins.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NetmixError, Result};
use crate::glm::{fit_binomial, log_probs, BinomialData, GlmFit, IrlsOptions};
use crate::glmm::{fit_glmm, laplace_marginal_loglik, GlmmFit, PqlOptions};
use crate::init::{
    partitions_from_distances, starts_from_partitions, DistanceMatrix, StartMatrix, StartOptions,
};
use crate::population::GraphPopulation;
use crate::specs::CompiledModel;

/// Components whose total responsibility falls below this are flagged
/// empty and keep their previous parameters.
pub const EMPTY_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EStepVariant {
    /// `p_km ∝ f(Y_k | θ_m)`: mixing proportions fixed at `1/M`.
    #[default]
    Paper,
    /// `p_km ∝ π_m f(Y_k | θ_m)`.
    Standard,
}

impl EStepVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Paper => "paper",
            Self::Standard => "standard",
        }
    }
}

impl fmt::Display for EStepVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EStepVariant {
    type Err = NetmixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "standard" => Ok(Self::Standard),
            _ => Err(NetmixError::InvalidArgument(format!(
                "unknown E-step variant `{s}` (expected paper or standard)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub variant: EStepVariant,
    pub n_starts: usize,
    pub seed: u64,
    pub perturb_fraction: f64,
    #[serde(skip)]
    pub pql: PqlOptions,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
            variant: EStepVariant::Paper,
            n_starts: 10,
            seed: 1,
            perturb_fraction: 0.3,
            pql: PqlOptions::default(),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(NetmixError::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(NetmixError::InvalidArgument("rel_tol must be positive".into()));
        }
        if self.n_starts == 0 {
            return Err(NetmixError::InvalidArgument("at least one start is required".into()));
        }
        if !(0.0..=1.0).contains(&self.perturb_fraction) {
            return Err(NetmixError::InvalidArgument("perturbation fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn start_options(&self) -> StartOptions {
        StartOptions {
            n_starts: self.n_starts,
            perturb_fraction: self.perturb_fraction,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ComponentFit {
    Glm(GlmFit),
    Glmm(GlmmFit),
}

impl ComponentFit {
    /// Fixed-effect block.
    pub fn fixed(&self) -> &GlmFit {
        match self {
            Self::Glm(f) => f,
            Self::Glmm(f) => &f.fixed,
        }
    }

    pub fn glmm(&self) -> Option<&GlmmFit> {
        match self {
            Self::Glmm(f) => Some(f),
            Self::Glm(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub n_components: usize,
    pub family: String,
    pub components: Vec<ComponentFit>,
    pub mixing: Vec<f64>,
    /// Row-major `K × M`.
    pub responsibilities: Vec<f64>,
    /// Row-major `K × M` of `log f(Y_k | θ̂_m)` at the final parameters.
    pub graph_loglik: Vec<f64>,
    /// Objective after every M step, starting with the one on the initial
    /// responsibilities.
    pub objective_trace: Vec<f64>,
    pub objective: f64,
    pub assignment: Vec<usize>,
    pub start_tag: String,
    pub variant: EStepVariant,
    pub converged: bool,
    pub n_iter: usize,
    /// Components that were (near) empty at some iteration.
    pub empty_components: Vec<usize>,
    /// Final objective (or failure) of every start, in start order.
    pub start_summaries: Vec<StartSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub tag: String,
    pub objective: Option<f64>,
    pub n_iter: usize,
    pub error: Option<String>,
}

impl MixtureFit {
    pub fn n_graphs(&self) -> usize {
        self.assignment.len()
    }

    pub fn responsibility(&self, k: usize, m: usize) -> f64 {
        self.responsibilities[k * self.n_components + m]
    }

    /// Members of each component.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_components];
        for (k, &m) in self.assignment.iter().enumerate() {
            out[m].push(k);
        }
        out
    }
}

/// `log f(Y_k | θ_m)` for every graph and component, row-major `K × M`.
pub fn graph_loglik_matrix(model: &CompiledModel, y: &[u8], components: &[ComponentFit]) -> Result<Vec<f64>> {
    let (k_graphs, d) = (model.n_graphs, model.n_dyads);
    let m_count = components.len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(m_count);
    for comp in components {
        let col: Vec<f64> = match comp {
            ComponentFit::Glm(fit) => {
                let table: Vec<(f64, f64)> = model
                    .design
                    .linear_predictor(&fit.coefficients)
                    .into_iter()
                    .map(log_probs)
                    .collect();
                (0..k_graphs)
                    .into_par_iter()
                    .map(|k| {
                        let yk = &y[k * d..(k + 1) * d];
                        yk.iter()
                            .enumerate()
                            .map(|(dd, &yv)| {
                                let (lp, lq) = table[model.row(k, dd)];
                                if yv != 0 {
                                    lp
                                } else {
                                    lq
                                }
                            })
                            .sum()
                    })
                    .collect()
            }
            ComponentFit::Glmm(fit) => (0..k_graphs)
                .into_par_iter()
                .map(|k| {
                    let rows: Vec<(u32, u8)> = (0..d)
                        .map(|dd| (model.row(k, dd) as u32, y[k * d + dd]))
                        .collect();
                    laplace_marginal_loglik(fit, &model.design, &model.random, &rows)
                })
                .collect::<Result<_>>()?,
        };
        columns.push(col);
    }
    let mut out = vec![0.0; k_graphs * m_count];
    for (m, col) in columns.iter().enumerate() {
        for (k, &v) in col.iter().enumerate() {
            out[k * m_count + m] = v;
        }
    }
    Ok(out)
}

fn log_weights(mixing: &[f64], variant: EStepVariant) -> Vec<f64> {
    let m = mixing.len() as f64;
    match variant {
        EStepVariant::Paper => vec![-m.ln(); mixing.len()],
        EStepVariant::Standard => mixing.iter().map(|p| p.ln()).collect(),
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Responsibilities from a `K × M` log-likelihood matrix.
pub fn e_step(loglik: &[f64], mixing: &[f64], variant: EStepVariant) -> Result<Vec<f64>> {
    let m = mixing.len();
    if m == 0 || loglik.len() % m != 0 {
        return Err(NetmixError::Dimension(format!(
            "{} log-likelihoods for {m} components",
            loglik.len()
        )));
    }
    let lw = log_weights(mixing, variant);
    let mut out = Vec::with_capacity(loglik.len());
    for (k, row) in loglik.chunks(m).enumerate() {
        if row.iter().any(|v| v.is_nan()) {
            return Err(NetmixError::Numerical(format!("NaN log-likelihood for graph {k}")));
        }
        let terms: Vec<f64> = row.iter().zip(&lw).map(|(l, w)| l + w).collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(NetmixError::DegenerateLikelihood(k));
        }
        let exps: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / total));
    }
    Ok(out)
}

/// `Σ_k log Σ_m w_m f(Y_k | θ_m)` with `w_m = 1/M` (`Paper` variant) or `π_m`.
pub fn mixture_objective(loglik: &[f64], mixing: &[f64], variant: EStepVariant) -> f64 {
    let m = mixing.len();
    let lw = log_weights(mixing, variant);
    loglik
        .chunks(m)
        .map(|row| log_sum_exp(row.iter().zip(&lw).map(|(l, w)| l + w)))
        .sum()
}

/// MAP labels, lowest index on ties.
pub fn map_assign(responsibilities: &[f64], n_components: usize) -> Vec<usize> {
    responsibilities
        .chunks(n_components)
        .map(|row| {
            let mut best = 0;
            for (m, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = m;
                }
            }
            best
        })
        .collect()
}

/// Responsibility-weighted binomial data for one component.
fn aggregate(model: &CompiledModel, y: &[u8], weights: impl Iterator<Item = f64>) -> BinomialData {
    let d = model.n_dyads;
    let mut data = BinomialData::zeros(model.design.n_rows());
    for (k, w) in weights.enumerate() {
        if w == 0.0 {
            continue;
        }
        let yk = &y[k * d..(k + 1) * d];
        for (dd, &yv) in yk.iter().enumerate() {
            let r = model.row(k, dd);
            data.trials[r] += w;
            if yv != 0 {
                data.successes[r] += w;
            }
        }
    }
    data
}

/// Fits one component to responsibility-weighted data.
pub fn fit_component(
    model: &CompiledModel,
    y: &[u8],
    weights: &[f64],
    warm: Option<&ComponentFit>,
    pql: &PqlOptions,
) -> Result<ComponentFit> {
    let data = aggregate(model, y, weights.iter().copied());
    let start = warm.map(|w| w.fixed().coefficients.clone());
    if model.random.is_empty() {
        let options = IrlsOptions {
            start,
            ..pql.inner.clone()
        };
        Ok(ComponentFit::Glm(fit_binomial(&model.design, &data, &options)?))
    } else {
        let mut options = pql.clone();
        if let Some(ComponentFit::Glmm(w)) = warm {
            options.warm = Some(w.clone());
            options.simplex_step = options.simplex_step.min(0.1);
        }
        Ok(ComponentFit::Glmm(fit_glmm(&model.design, &data, &model.random, &options)?))
    }
}

pub struct MStep {
    pub components: Vec<ComponentFit>,
    pub mixing: Vec<f64>,
    pub empty: Vec<usize>,
}

/// Fits every component with weights `p_km` and sets `π_m` to the column
/// means of `P`.
pub fn m_step(
    model: &CompiledModel,
    y: &[u8],
    responsibilities: &[f64],
    n_components: usize,
    warm: Option<&[ComponentFit]>,
    pql: &PqlOptions,
) -> Result<MStep> {
    let k_graphs = model.n_graphs;
    if responsibilities.len() != k_graphs * n_components {
        return Err(NetmixError::Dimension(format!(
            "{} responsibilities for {k_graphs} graphs and {n_components} components",
            responsibilities.len()
        )));
    }
    let column = |m: usize| -> Vec<f64> { (0..k_graphs).map(|k| responsibilities[k * n_components + m]).collect() };
    let mixing: Vec<f64> = (0..n_components)
        .map(|m| column(m).iter().sum::<f64>() / k_graphs as f64)
        .collect();
    let results: Vec<(Result<ComponentFit>, bool)> = (0..n_components)
        .into_par_iter()
        .map(|m| {
            let w = column(m);
            let previous = warm.map(|c| &c[m]);
            if w.iter().sum::<f64>() < EMPTY_WEIGHT {
                // keep the previous parameters, or start from the pooled fit
                return match previous {
                    Some(p) => (Ok(p.clone()), true),
                    None => (fit_component(model, y, &vec![1.0 / k_graphs as f64; k_graphs], None, pql), true),
                };
            }
            (fit_component(model, y, &w, previous, pql), false)
        })
        .collect();
    let mut components = Vec::with_capacity(n_components);
    let mut empty = Vec::new();
    for (m, (fit, was_empty)) in results.into_iter().enumerate() {
        if was_empty {
            log::warn!("component {} is empty", m + 1);
            empty.push(m);
        }
        components.push(fit?);
    }
    Ok(MStep {
        components,
        mixing,
        empty,
    })
}

struct StartRun {
    components: Vec<ComponentFit>,
    mixing: Vec<f64>,
    responsibilities: Vec<f64>,
    loglik: Vec<f64>,
    trace: Vec<f64>,
    converged: bool,
    empty: Vec<usize>,
}

fn run_start(
    model: &CompiledModel,
    y: &[u8],
    start: &StartMatrix,
    config: &EmConfig,
) -> Result<StartRun> {
    let m_count = start.n_components;
    let mut step = m_step(model, y, &start.probabilities, m_count, None, &config.pql)?;
    let mut empty: Vec<usize> = step.empty.clone();
    let mut loglik = graph_loglik_matrix(model, y, &step.components)?;
    let mut objective = mixture_objective(&loglik, &step.mixing, config.variant);
    let mut trace = vec![objective];
    let mut converged = false;
    for _ in 0..config.max_iter {
        let responsibilities = e_step(&loglik, &step.mixing, config.variant)?;
        let next = m_step(model, y, &responsibilities, m_count, Some(&step.components), &config.pql)?;
        empty.extend(next.empty.iter().copied());
        step = next;
        loglik = graph_loglik_matrix(model, y, &step.components)?;
        let new_objective = mixture_objective(&loglik, &step.mixing, config.variant);
        trace.push(new_objective);
        let change = (new_objective - objective).abs() / objective.abs().max(f64::MIN_POSITIVE);
        objective = new_objective;
        if change < config.rel_tol {
            converged = true;
            break;
        }
    }
    let responsibilities = e_step(&loglik, &step.mixing, config.variant)?;
    empty.sort_unstable();
    empty.dedup();
    Ok(StartRun {
        components: step.components,
        mixing: step.mixing,
        responsibilities,
        loglik,
        trace,
        converged,
        empty,
    })
}

/// Runs EM from the given starts (in parallel) and keeps the best.
pub fn run_em_with_starts(
    model: &CompiledModel,
    y: &[u8],
    starts: &[StartMatrix],
    config: &EmConfig,
) -> Result<MixtureFit> {
    config.validate()?;
    if starts.is_empty() {
        return Err(NetmixError::InvalidArgument("no starting matrices".into()));
    }
    if y.len() != model.n_graphs * model.n_dyads {
        return Err(NetmixError::Dimension(format!(
            "{} responses for {} graphs of {} dyads",
            y.len(),
            model.n_graphs,
            model.n_dyads
        )));
    }
    let m_count = starts[0].n_components;
    let runs: Vec<Result<StartRun>> = starts
        .par_iter()
        .map(|s| {
            if s.n_components != m_count || s.n_graphs() != model.n_graphs {
                return Err(NetmixError::Dimension(format!("start `{}` has the wrong shape", s.source)));
            }
            run_start(model, y, s, config)
        })
        .collect();

    let summaries: Vec<StartSummary> = runs
        .iter()
        .zip(starts)
        .map(|(r, s)| match r {
            Ok(run) => StartSummary {
                tag: s.source.clone(),
                objective: run.trace.last().copied(),
                n_iter: run.trace.len() - 1,
                error: None,
            },
            Err(e) => StartSummary {
                tag: s.source.clone(),
                objective: None,
                n_iter: 0,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, r) in runs.iter().enumerate() {
        if let Ok(run) = r {
            let obj = *run.trace.last().expect("trace is never empty");
            if !obj.is_finite() {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let prev = *runs[b].as_ref().map(|r| r.trace.last().unwrap()).unwrap();
                    obj > prev
                }
            };
            if better {
                best = Some(i);
            }
        }
    }
    let Some(best) = best else {
        return Err(NetmixError::AllStartsFailed(
            summaries
                .iter()
                .map(|s| format!("{}: {}", s.tag, s.error.as_deref().unwrap_or("non-finite objective")))
                .collect(),
        ));
    };
    let start_tag = starts[best].source.clone();
    let run = runs.into_iter().nth(best).unwrap().unwrap();
    let objective = *run.trace.last().unwrap();
    let mut fit = MixtureFit {
        n_components: m_count,
        family: model.family.to_string(),
        assignment: map_assign(&run.responsibilities, m_count),
        components: run.components,
        mixing: run.mixing,
        responsibilities: run.responsibilities,
        graph_loglik: run.loglik,
        n_iter: run.trace.len() - 1,
        objective_trace: run.trace,
        objective,
        start_tag,
        variant: config.variant,
        converged: run.converged,
        empty_components: run.empty,
        start_summaries: summaries,
    };
    canonicalize(&mut fit);
    Ok(fit)
}

/// Runs EM from the distance-based starts of [`crate::init`].
pub fn run_em(pop: &GraphPopulation, model: &CompiledModel, n_components: usize, config: &EmConfig) -> Result<MixtureFit> {
    let distances = crate::init::all_distances(pop);
    run_em_cached(pop, model, n_components, config, &distances)
}

/// [`run_em`] with precomputed distance matrices.
pub fn run_em_cached(
    pop: &GraphPopulation,
    model: &CompiledModel,
    n_components: usize,
    config: &EmConfig,
    distances: &[DistanceMatrix],
) -> Result<MixtureFit> {
    if n_components == 0 || n_components > pop.n_graphs() {
        return Err(NetmixError::InvalidArgument(format!(
            "number of components must lie in 1..={}, got {n_components}",
            pop.n_graphs()
        )));
    }
    config.validate()?;
    let bases = partitions_from_distances(distances, n_components)?;
    let starts = starts_from_partitions(&bases, n_components, &config.start_options());
    run_em_with_starts(model, &pop.response_matrix(), &starts, config)
}

/// Orders components by descending mixing proportion, then by descending
/// first coefficient.
pub fn canonicalize(fit: &mut MixtureFit) {
    let m = fit.n_components;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        fit.mixing[b]
            .partial_cmp(&fit.mixing[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                let ca = fit.components[a].fixed().coefficients.first().copied().unwrap_or(0.0);
                let cb = fit.components[b].fixed().coefficients.first().copied().unwrap_or(0.0);
                cb.partial_cmp(&ca).unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    relabel(fit, &order);
}

/// Reorders components so that new component `i` is old component
/// `order[i]`.
pub fn relabel(fit: &mut MixtureFit, order: &[usize]) {
    let m = fit.n_components;
    assert_eq!(order.len(), m, "permutation length");
    let permute_rows = |values: &[f64]| -> Vec<f64> {
        values
            .chunks(m)
            .flat_map(|row| order.iter().map(move |&o| row[o]))
            .collect()
    };
    fit.responsibilities = permute_rows(&fit.responsibilities);
    fit.graph_loglik = permute_rows(&fit.graph_loglik);
    fit.mixing = order.iter().map(|&o| fit.mixing[o]).collect();
    fit.components = order.iter().map(|&o| fit.components[o].clone()).collect();
    let mut inverse = vec![0; m];
    for (new, &old) in order.iter().enumerate() {
        inverse[old] = new;
    }
    fit.empty_components = fit.empty_components.iter().map(|&e| inverse[e]).collect();
    fit.empty_components.sort_unstable();
    fit.assignment = map_assign(&fit.responsibilities, m);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_component_is_all_ones() {
        let p = e_step(&[-3.0, -10.0, -1.0], &[1.0], EStepVariant::Paper).unwrap();
        assert_eq!(p, vec![1.0; 3]);
    }

    #[test]
    fn equal_logliks_give_uniform_row() {
        let p = e_step(&[-5.0, -5.0, -5.0], &[0.2, 0.3, 0.5], EStepVariant::Paper).unwrap();
        for v in p {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn nine_to_one_ratio() {
        let p = e_step(&[9f64.ln(), 0.0], &[0.5, 0.5], EStepVariant::Paper).unwrap();
        assert_abs_diff_eq!(p[0], 0.9, epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], 0.1, epsilon = 1e-14);
        // standard variant folds in the mixing proportions
        let q = e_step(&[9f64.ln(), 0.0], &[0.1, 0.9], EStepVariant::Standard).unwrap();
        assert_abs_diff_eq!(q[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn huge_gaps_stay_finite() {
        let p = e_step(&[-1e4, 0.0, 1e4, -2e4], &[0.5, 0.5], EStepVariant::Standard).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert_eq!(p[1], 1.0);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn degenerate_row_is_an_error() {
        let r = e_step(&[f64::NEG_INFINITY, f64::NEG_INFINITY], &[0.5, 0.5], EStepVariant::Paper);
        assert!(matches!(r, Err(NetmixError::DegenerateLikelihood(0))));
    }

    #[test]
    fn map_ties_go_low() {
        assert_eq!(map_assign(&[0.9, 0.1, 0.5, 0.5, 0.0, 1.0], 2), vec![0, 0, 1]);
    }

    #[test]
    fn objective_variants() {
        let ll = [-2.0, -3.0];
        let paper = mixture_objective(&ll, &[0.9, 0.1], EStepVariant::Paper);
        assert_abs_diff_eq!(paper, (0.5 * (-2f64).exp() + 0.5 * (-3f64).exp()).ln(), epsilon = 1e-14);
        let standard = mixture_objective(&ll, &[0.9, 0.1], EStepVariant::Standard);
        assert_abs_diff_eq!(standard, (0.9 * (-2f64).exp() + 0.1 * (-3f64).exp()).ln(), epsilon = 1e-14);
    }

    #[test]
    fn variant_round_trip() {
        for v in [EStepVariant::Paper, EStepVariant::Standard] {
            assert_eq!(v.name().parse::<EStepVariant>().unwrap(), v);
        }
        assert!("bayes".parse::<EStepVariant>().is_err());
    }
}
