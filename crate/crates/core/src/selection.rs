//! Information criteria, selection of the number of components, and
//! purity.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{run_em_cached, EmConfig, MixtureFit};
use crate::error::{NetmixError, Result};
use crate::init::{all_distances, DistanceMatrix};
use crate::population::GraphPopulation;
use crate::specs::{count_parameters, CompiledModel, CountingRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
}

/// `AIC = 2q - 2ℓ`, `BIC = q ln K - 2ℓ`. The BIC sample size is the number
/// of graphs.
pub fn information_criteria(loglik: f64, n_params: usize, n_graphs: usize) -> InformationCriteria {
    let q = n_params as f64;
    InformationCriteria {
        aic: 2.0 * q - 2.0 * loglik,
        bic: q * (n_graphs as f64).ln() - 2.0 * loglik,
    }
}

/// Criteria of a fitted mixture, with `q` from the counting rule.
pub fn fit_criteria(fit: &MixtureFit, model: &CompiledModel, rule: CountingRule) -> (usize, InformationCriteria) {
    let q = count_parameters(model, fit.n_components, rule);
    (q, information_criteria(fit.objective, q, fit.n_graphs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub n_components: usize,
    pub loglik: Option<f64>,
    pub n_params: usize,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub n_graphs: usize,
    pub rows: Vec<SelectionRow>,
    pub chosen_aic: Option<usize>,
    pub chosen_bic: Option<usize>,
}

impl SelectionTable {
    pub fn from_rows(n_graphs: usize, rows: Vec<SelectionRow>) -> Self {
        let argmin = |get: fn(&SelectionRow) -> Option<f64>| {
            let mut best: Option<(usize, f64)> = None;
            for row in rows.iter().filter(|r| r.converged) {
                if let Some(v) = get(row) {
                    if best.is_none_or(|(_, b)| v < b) {
                        best = Some((row.n_components, v));
                    }
                }
            }
            best.map(|(m, _)| m)
        };
        let chosen_aic = argmin(|r| r.aic);
        let chosen_bic = argmin(|r| r.bic);
        Self {
            n_graphs,
            rows,
            chosen_aic,
            chosen_bic,
        }
    }

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        let mut out = String::from("M,loglik,n_params,aic,bic,converged,error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.n_components,
                fmt(r.loglik),
                r.n_params,
                fmt(r.aic),
                fmt(r.bic),
                r.converged,
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            ));
        }
        out
    }
}

/// Fits every `M` in `range` (in parallel, sharing the distance matrices)
/// and tabulates both criteria. Failed rows are recorded and excluded from
/// the argmin.
pub fn select_m(
    pop: &GraphPopulation,
    model: &CompiledModel,
    range: std::ops::RangeInclusive<usize>,
    config: &EmConfig,
    rule: CountingRule,
) -> Result<(SelectionTable, Vec<Option<MixtureFit>>)> {
    let k = pop.n_graphs();
    if *range.start() == 0 || *range.end() > k || range.is_empty() {
        return Err(NetmixError::InvalidArgument(format!(
            "component range {}..={} must lie within 1..={k}",
            range.start(),
            range.end()
        )));
    }
    let distances: Vec<DistanceMatrix> = all_distances(pop);
    let ms: Vec<usize> = range.collect();
    let fits: Vec<Result<MixtureFit>> = ms
        .par_iter()
        .map(|&m| run_em_cached(pop, model, m, config, &distances))
        .collect();
    let mut rows = Vec::with_capacity(ms.len());
    let mut kept = Vec::with_capacity(ms.len());
    for (&m, fit) in ms.iter().zip(fits) {
        let q = count_parameters(model, m, rule);
        match fit {
            Ok(fit) => {
                let ic = information_criteria(fit.objective, q, k);
                rows.push(SelectionRow {
                    n_components: m,
                    loglik: Some(fit.objective),
                    n_params: q,
                    aic: Some(ic.aic),
                    bic: Some(ic.bic),
                    converged: fit.converged,
                    error: None,
                });
                kept.push(Some(fit));
            }
            Err(e) => {
                rows.push(SelectionRow {
                    n_components: m,
                    loglik: None,
                    n_params: q,
                    aic: None,
                    bic: None,
                    converged: false,
                    error: Some(e.to_string()),
                });
                kept.push(None);
            }
        }
    }
    Ok((SelectionTable::from_rows(k, rows), kept))
}

/// `(1/K) Σ_clusters max_class |cluster ∩ class|`.
pub fn purity(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(NetmixError::Dimension(format!(
            "{} predicted labels for {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(NetmixError::InvalidArgument("purity of an empty labelling".into()));
    }
    let mut table: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (&p, &t) in predicted.iter().zip(truth) {
        *table.entry(p).or_default().entry(t).or_default() += 1;
    }
    let hits: usize = table.values().map(|row| row.values().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn criteria_formulas() {
        let ic = information_criteria(-10.0, 3, 21);
        assert_abs_diff_eq!(ic.aic, 26.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ic.bic, 3.0 * 21f64.ln() + 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ic.bic, 29.134, epsilon = 1e-3);
    }

    #[test]
    fn purity_examples() {
        assert_eq!(purity(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_abs_diff_eq!(purity(&[0, 0, 0, 0, 1, 1], &[0, 0, 0, 1, 1, 1]).unwrap(), 5.0 / 6.0);
        assert_eq!(purity(&[0; 4], &[0, 0, 1, 1]).unwrap(), 0.5);
        assert!(purity(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn argmin_skips_unconverged_rows() {
        let row = |m: usize, aic: f64, converged: bool| SelectionRow {
            n_components: m,
            loglik: Some(0.0),
            n_params: 1,
            aic: Some(aic),
            bic: Some(aic + 1.0),
            converged,
            error: None,
        };
        let t = SelectionTable::from_rows(10, vec![row(1, 5.0, true), row(2, 1.0, false), row(3, 4.0, true)]);
        assert_eq!(t.chosen_aic, Some(3));
        assert_eq!(t.chosen_bic, Some(3));
    }
}
