//! Weighted Bernoulli-logit regression.
//!
//! Observations are handled in aggregated binomial form: each design row
//! carries a (possibly fractional) number of trials and successes. A set of
//! Bernoulli responses `y` with prior weights `w` is the special case
//! `trials = w`, `successes = w * y`. This is what lets the EM M step fit
//! one row per distinct design row instead of one row per graph and dyad.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NetmixError, Result};
use crate::linalg::{collinear_columns, inverse_spd, solve_spd};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` whenever a
/// log-likelihood is evaluated.
pub const PROB_FLOOR: f64 = 1e-12;

/// Coefficients whose magnitude would exceed this on the logit scale are
/// frozen at `±LOGIT_CAP` (perfect separation).
pub const LOGIT_CAP: f64 = 15.0;

#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// `(log p, log(1 - p))` for a linear predictor, with clamping.
#[inline]
pub fn log_probs(eta: f64) -> (f64, f64) {
    let p = clamp_prob(logistic(eta));
    (p.ln(), (1.0 - p).ln())
}

/// `Σ [y log p + (1 - y) log(1 - p)]` with clamped probabilities.
pub fn loglik_bernoulli(p: &[f64], y: &[u8]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(NetmixError::Dimension(format!(
            "{} probabilities for {} responses",
            p.len(),
            y.len()
        )));
    }
    Ok(p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            if y != 0 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum())
}

/// A design matrix over distinct observation rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Design {
    /// Row-major dense values.
    Dense {
        names: Vec<String>,
        n_rows: usize,
        values: Vec<f64>,
    },
    /// Every row is a single indicator column: row `r` has a one in column
    /// `cell_of_row[r]` and zeros elsewhere. Saturated models (blockmodels,
    /// the unconstrained model) have this form and are fitted in closed
    /// form.
    Cells {
        names: Vec<String>,
        cell_of_row: Vec<u32>,
    },
}

impl Design {
    pub fn dense(names: Vec<String>, n_rows: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * names.len() {
            return Err(NetmixError::Dimension(format!(
                "{} values for a {n_rows}x{} design",
                values.len(),
                names.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(NetmixError::InvalidArgument("design has non-finite entries".into()));
        }
        check_unique(&names)?;
        Ok(Design::Dense {
            names,
            n_rows,
            values,
        })
    }

    pub fn cells(names: Vec<String>, cell_of_row: Vec<u32>) -> Result<Self> {
        if let Some(&c) = cell_of_row.iter().find(|&&c| c as usize >= names.len()) {
            return Err(NetmixError::Dimension(format!(
                "cell {c} out of range for {} columns",
                names.len()
            )));
        }
        check_unique(&names)?;
        Ok(Design::Cells { names, cell_of_row })
    }

    pub fn names(&self) -> &[String] {
        match self {
            Design::Dense { names, .. } | Design::Cells { names, .. } => names,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.names().len()
    }

    pub fn n_rows(&self) -> usize {
        match self {
            Design::Dense { n_rows, .. } => *n_rows,
            Design::Cells { cell_of_row, .. } => cell_of_row.len(),
        }
    }

    /// Row `r` as a dense vector.
    pub fn row(&self, r: usize) -> Vec<f64> {
        match self {
            Design::Dense { names, values, .. } => {
                values[r * names.len()..(r + 1) * names.len()].to_vec()
            }
            Design::Cells { names, cell_of_row } => {
                let mut out = vec![0.0; names.len()];
                out[cell_of_row[r] as usize] = 1.0;
                out
            }
        }
    }

    /// Linear predictor `X β` for every row.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        match self {
            Design::Dense { names, values, .. } => values
                .chunks(names.len())
                .map(|x| x.iter().zip(beta).map(|(a, b)| a * b).sum())
                .collect(),
            Design::Cells { cell_of_row, .. } => {
                cell_of_row.iter().map(|&c| beta[c as usize]).collect()
            }
        }
    }

    pub fn to_dense(&self) -> Design {
        match self {
            Design::Dense { .. } => self.clone(),
            Design::Cells { names, cell_of_row } => {
                let p = names.len();
                let mut values = vec![0.0; cell_of_row.len() * p];
                for (r, &c) in cell_of_row.iter().enumerate() {
                    values[r * p + c as usize] = 1.0;
                }
                Design::Dense {
                    names: names.clone(),
                    n_rows: cell_of_row.len(),
                    values,
                }
            }
        }
    }

    pub(crate) fn dense_values(&self) -> Option<&[f64]> {
        match self {
            Design::Dense { values, .. } => Some(values),
            Design::Cells { .. } => None,
        }
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(NetmixError::InvalidArgument(format!("duplicate column name `{n}`")));
        }
    }
    Ok(())
}

/// Aggregated binomial responses aligned with design rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BinomialData {
    pub trials: Vec<f64>,
    pub successes: Vec<f64>,
}

impl BinomialData {
    pub fn zeros(n_rows: usize) -> Self {
        Self {
            trials: vec![0.0; n_rows],
            successes: vec![0.0; n_rows],
        }
    }

    /// Bernoulli responses with prior weights.
    pub fn weighted_bernoulli(y: &[u8], w: &[f64]) -> Result<Self> {
        if y.len() != w.len() {
            return Err(NetmixError::Dimension(format!(
                "{} responses for {} weights",
                y.len(),
                w.len()
            )));
        }
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(NetmixError::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            trials: w.to_vec(),
            successes: y.iter().zip(w).map(|(&y, &w)| f64::from(y) * w).collect(),
        })
    }

    pub fn total_weight(&self) -> f64 {
        self.trials.iter().sum()
    }

    /// Weighted log-likelihood at linear predictors `eta`.
    pub fn loglik(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(self.trials.iter().zip(&self.successes))
            .filter(|(_, (&n, _))| n > 0.0)
            .map(|(&e, (&n, &s))| {
                let (lp, lq) = log_probs(e);
                s * lp + (n - s) * lq
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// `NaN` for coefficients frozen at the separation cap or without
    /// information.
    pub std_errors: Vec<f64>,
    /// Row-major covariance of the coefficients (inverse weighted Fisher
    /// information); capped coefficients have zero rows and columns.
    pub covariance: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// Columns frozen at `±LOGIT_CAP`.
    pub capped: Vec<usize>,
}

impl GlmFit {
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| (self.coefficients[i], self.std_errors[i]))
    }

    pub fn covariance_at(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.names.len() + j]
    }
}

/// Largest coefficient move of a converged iteration.
const STEP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Relative deviance change that ends the iteration.
    pub tol: f64,
    pub cap: f64,
    /// Warm start.
    pub start: Option<Vec<f64>>,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            cap: LOGIT_CAP,
            start: None,
        }
    }
}

/// Fits a Bernoulli-logit GLM with per-observation weights.
pub fn irls_fit(design: &Design, y: &[u8], w: &[f64]) -> Result<GlmFit> {
    if design.n_rows() != y.len() {
        return Err(NetmixError::Dimension(format!(
            "design has {} rows, {} responses",
            design.n_rows(),
            y.len()
        )));
    }
    fit_binomial(design, &BinomialData::weighted_bernoulli(y, w)?, &IrlsOptions::default())
}

/// Maximizes `Σ_r [s_r log p_r + (n_r - s_r) log(1 - p_r)]` with
/// `logit p = X β`.
pub fn fit_binomial(design: &Design, data: &BinomialData, options: &IrlsOptions) -> Result<GlmFit> {
    if data.trials.len() != design.n_rows() || data.successes.len() != design.n_rows() {
        return Err(NetmixError::Dimension(format!(
            "design has {} rows, data has {}",
            design.n_rows(),
            data.trials.len()
        )));
    }
    if !(data.total_weight() > 0.0) {
        return Err(NetmixError::ZeroWeights);
    }
    match design {
        Design::Cells { names, cell_of_row } => Ok(fit_cells(names, cell_of_row, data, options.cap)),
        Design::Dense { names, values, .. } => fit_dense(names, values, data, options),
    }
}

fn fit_cells(names: &[String], cell_of_row: &[u32], data: &BinomialData, cap: f64) -> GlmFit {
    let p = names.len();
    let mut n = vec![0.0; p];
    let mut s = vec![0.0; p];
    for (r, &c) in cell_of_row.iter().enumerate() {
        n[c as usize] += data.trials[r];
        s[c as usize] += data.successes[r];
    }
    let mut coefficients = vec![0.0; p];
    let mut std_errors = vec![f64::NAN; p];
    let mut covariance = vec![0.0; p * p];
    let mut capped = Vec::new();
    for c in 0..p {
        if n[c] <= 0.0 {
            continue;
        }
        let frac = (s[c] / n[c]).clamp(0.0, 1.0);
        let theta = (frac / (1.0 - frac)).ln();
        if !(theta.abs() <= cap) {
            coefficients[c] = if frac > 0.5 { cap } else { -cap };
            capped.push(c);
        } else {
            coefficients[c] = theta;
            let var = 1.0 / (n[c] * frac * (1.0 - frac));
            std_errors[c] = var.sqrt();
            covariance[c * p + c] = var;
        }
    }
    let eta: Vec<f64> = cell_of_row.iter().map(|&c| coefficients[c as usize]).collect();
    GlmFit {
        names: names.to_vec(),
        coefficients,
        std_errors,
        covariance,
        loglik: data.loglik(&eta),
        converged: true,
        n_iter: 1,
        capped,
    }
}

fn weighted_gram(values: &[f64], p: usize, weights: &[f64], cols: &[usize]) -> DMatrix<f64> {
    let q = cols.len();
    let mut h = DMatrix::<f64>::zeros(q, q);
    for (x, &w) in values.chunks(p).zip(weights) {
        if w == 0.0 {
            continue;
        }
        for a in 0..q {
            let xa = x[cols[a]] * w;
            if xa == 0.0 {
                continue;
            }
            for b in a..q {
                h[(a, b)] += xa * x[cols[b]];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    h
}

fn fit_dense(names: &[String], values: &[f64], data: &BinomialData, options: &IrlsOptions) -> Result<GlmFit> {
    let p = names.len();
    let all: Vec<usize> = (0..p).collect();
    let dropped = collinear_columns(&weighted_gram(values, p, &data.trials, &all));
    if !dropped.is_empty() {
        return Err(NetmixError::RankDeficient(
            dropped.iter().map(|&j| names[j].clone()).collect(),
        ));
    }
    let eta_of = |beta: &[f64]| -> Vec<f64> {
        values
            .chunks(p)
            .map(|x| x.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    };
    let mut beta = options
        .start
        .clone()
        .filter(|s| s.len() == p && s.iter().all(|x| x.is_finite()))
        .unwrap_or_else(|| vec![0.0; p]);
    for b in beta.iter_mut() {
        *b = b.clamp(-options.cap, options.cap);
    }
    let mut free: Vec<usize> = all.clone();
    let mut capped: Vec<usize> = Vec::new();
    let mut eta = eta_of(&beta);
    let mut ll = data.loglik(&eta);
    let mut converged = false;
    let mut n_iter = 0;

    while n_iter < options.max_iter {
        n_iter += 1;
        let mut w = Vec::with_capacity(eta.len());
        let mut resid = Vec::with_capacity(eta.len());
        for (r, &e) in eta.iter().enumerate() {
            let mu = logistic(e);
            w.push(data.trials[r] * mu * (1.0 - mu));
            resid.push(data.successes[r] - data.trials[r] * mu);
        }
        let h = weighted_gram(values, p, &w, &free);
        let mut g = DVector::<f64>::zeros(free.len());
        for (x, &res) in values.chunks(p).zip(&resid) {
            for (a, &c) in free.iter().enumerate() {
                g[a] += x[c] * res;
            }
        }
        let Some(step) = solve_spd(&h, &g) else {
            return Err(NetmixError::Numerical("singular information matrix".into()));
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = beta.clone();
            for (a, &c) in free.iter().enumerate() {
                trial[c] += scale * step[a];
            }
            let trial_eta = eta_of(&trial);
            let trial_ll = data.loglik(&trial_eta);
            if trial_ll >= ll - 1e-12 * ll.abs() {
                accepted = Some((scale, trial_eta, trial_ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((scale, new_eta, new_ll)) = accepted else {
            // no ascent direction left: already at the optimum numerically
            converged = true;
            break;
        };

        // Stop where the first coefficient reaches the cap. The log-likelihood
        // is concave along the step, so the shortened step still ascends.
        let mut reach = scale;
        for (a, &c) in free.iter().enumerate() {
            let end = beta[c] + scale * step[a];
            if end.abs() > options.cap {
                reach = reach.min((end.signum() * options.cap - beta[c]) / step[a]);
            }
        }
        if reach < scale {
            let mut newly_capped = Vec::new();
            for (a, &c) in free.iter().enumerate() {
                beta[c] += reach * step[a];
                if beta[c].abs() >= options.cap * (1.0 - 1e-12) {
                    beta[c] = beta[c].signum() * options.cap;
                    newly_capped.push(c);
                }
            }
            for &c in &newly_capped {
                log::warn!("coefficient `{}` separated; frozen at ±{}", names[c], options.cap);
            }
            free.retain(|c| !newly_capped.contains(c));
            capped.extend(newly_capped);
            eta = eta_of(&beta);
            ll = data.loglik(&eta);
            if free.is_empty() {
                converged = true;
                break;
            }
            continue;
        }
        let dev_change = (2.0 * (new_ll - ll)).abs() / (2.0 * new_ll.abs() + 0.1);
        let mut largest_move: f64 = 0.0;
        for (a, &c) in free.iter().enumerate() {
            beta[c] += scale * step[a];
            largest_move = largest_move.max((scale * step[a]).abs());
        }
        eta = new_eta;
        ll = new_ll;
        // a small deviance change alone can leave the coefficients ~1e-5 off
        if dev_change < options.tol && largest_move < STEP_TOL {
            converged = true;
            break;
        }
    }

    let mut w = Vec::with_capacity(eta.len());
    for (r, &e) in eta.iter().enumerate() {
        let mu = logistic(e);
        w.push(data.trials[r] * mu * (1.0 - mu));
    }
    let mut std_errors = vec![f64::NAN; p];
    let mut covariance = vec![0.0; p * p];
    if let Some(inv) = inverse_spd(&weighted_gram(values, p, &w, &free)) {
        for (a, &ca) in free.iter().enumerate() {
            std_errors[ca] = inv[(a, a)].sqrt();
            for (b, &cb) in free.iter().enumerate() {
                covariance[ca * p + cb] = inv[(a, b)];
            }
        }
    }
    capped.sort_unstable();
    Ok(GlmFit {
        names: names.to_vec(),
        coefficients: beta,
        std_errors,
        covariance,
        loglik: ll,
        converged,
        n_iter,
        capped,
    })
}

/// Two-sided Wald test of `θ¹ = θ²` for a parameter estimated in two
/// independent fits.
pub fn wald_equality_test(fit1: &GlmFit, fit2: &GlmFit, param: &str) -> Result<f64> {
    let missing = || NetmixError::InvalidArgument(format!("parameter `{param}` missing"));
    let (a, se_a) = fit1.coefficient(param).ok_or_else(missing)?;
    let (b, se_b) = fit2.coefficient(param).ok_or_else(missing)?;
    wald_p_value(a - b, (se_a * se_a + se_b * se_b).sqrt())
}

/// Two-sided normal p-value of `estimate / se`.
pub fn wald_p_value(estimate: f64, se: f64) -> Result<f64> {
    if !se.is_finite() || se < 0.0 {
        return Err(NetmixError::InvalidArgument("standard error is not finite".into()));
    }
    if estimate == 0.0 {
        return Ok(1.0);
    }
    let z = (estimate / se).abs();
    Ok(statrs::function::erf::erfc(z / std::f64::consts::SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn intercept(n: usize) -> Design {
        Design::dense(vec!["(intercept)".into()], n, vec![1.0; n]).unwrap()
    }

    #[test]
    fn intercept_only_closed_form() {
        let fit = irls_fit(&intercept(4), &[1, 1, 1, 0], &[1.0; 4]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 3f64.ln(), epsilon = 1e-10);
        assert!(fit.converged);
        assert!(fit.loglik <= 0.0);
    }

    #[test]
    fn halving_weights_keeps_coefficients() {
        let x = Design::dense(
            vec!["a".into(), "b".into()],
            6,
            vec![1., 0.3, 1., -1.2, 1., 2.0, 1., 0.1, 1., -0.5, 1., 1.4],
        )
        .unwrap();
        let y = [1, 0, 1, 0, 1, 0];
        let full = irls_fit(&x, &y, &[1.0; 6]).unwrap();
        let half = irls_fit(&x, &y, &[0.5; 6]).unwrap();
        for (a, b) in full.coefficients.iter().zip(&half.coefficients) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(half.loglik, 0.5 * full.loglik, epsilon = 1e-9);
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let x = Design::dense(
            vec!["a".into(), "b".into(), "a_copy".into()],
            3,
            vec![1., 1., 1., 1., 2., 1., 1., 3., 1.],
        )
        .unwrap();
        match irls_fit(&x, &[1, 0, 1], &[1.0; 3]) {
            Err(NetmixError::RankDeficient(cols)) => assert_eq!(cols, vec!["a_copy".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_weights_rejected() {
        assert!(matches!(
            irls_fit(&intercept(2), &[1, 0], &[0.0, 0.0]),
            Err(NetmixError::ZeroWeights)
        ));
    }

    #[test]
    fn separation_caps_coefficient() {
        let x = Design::dense(
            vec!["(intercept)".into(), "x".into()],
            4,
            vec![1., -2., 1., -1., 1., 1., 1., 2.],
        )
        .unwrap();
        let fit = irls_fit(&x, &[0, 0, 1, 1], &[1.0; 4]).unwrap();
        assert_eq!(fit.capped, vec![1]);
        assert_eq!(fit.coefficients[1], LOGIT_CAP);
        assert!(fit.std_errors[1].is_nan());
    }

    #[test]
    fn cells_match_dense_fit() {
        let cells = Design::cells(vec!["c0".into(), "c1".into()], vec![0, 1, 0, 1, 0]).unwrap();
        let dense = cells.to_dense();
        let y = [1, 0, 0, 1, 1];
        let w = [1.0, 0.5, 2.0, 0.25, 1.0];
        let a = irls_fit(&cells, &y, &w).unwrap();
        let b = irls_fit(&dense, &y, &w).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(a.coefficients[i], b.coefficients[i], epsilon = 1e-9);
            assert_abs_diff_eq!(a.std_errors[i], b.std_errors[i], epsilon = 1e-7);
        }
        assert_abs_diff_eq!(a.loglik, b.loglik, epsilon = 1e-10);
    }

    #[test]
    fn uniform_bernoulli_loglik() {
        let ll = loglik_bernoulli(&[0.5; 6], &[1, 0, 1, 1, 0, 0]).unwrap();
        assert_abs_diff_eq!(ll, 6.0 * 0.5f64.ln(), epsilon = 1e-14);
        assert!(loglik_bernoulli(&[0.5], &[1, 0]).is_err());
        assert!(loglik_bernoulli(&[1.0 - 1e-15], &[1]).unwrap().abs() < 1e-11);
    }

    #[test]
    fn wald_reference_points() {
        let mk = |b: f64, se: f64| GlmFit {
            names: vec!["b".into()],
            coefficients: vec![b],
            std_errors: vec![se],
            covariance: vec![se * se],
            loglik: 0.0,
            converged: true,
            n_iter: 1,
            capped: vec![],
        };
        assert_eq!(wald_equality_test(&mk(0.4, 0.1), &mk(0.4, 0.2), "b").unwrap(), 1.0);
        let se = (0.3f64.powi(2) + 0.4f64.powi(2)).sqrt();
        let p = wald_equality_test(&mk(1.96 * se, 0.3), &mk(0.0, 0.4), "b").unwrap();
        assert_abs_diff_eq!(p, 0.05, epsilon = 1e-4);
        assert!(wald_equality_test(&mk(0.0, 1.0), &mk(0.0, 1.0), "c").is_err());
    }
}
