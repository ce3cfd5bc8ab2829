//! Logistic regression with crossed random intercepts.
//!
//! The linear predictor is `η = X β + Σ_f σ_f b_f[level_f(r)]` with
//! spherical modes `b_f ~ N(0, I)`. For fixed standard deviations the
//! modes and fixed effects are found jointly by penalized IRLS; the
//! standard deviations maximize the Laplace approximation
//!
//! ```text
//! ℓ(η̂) - ½|b̂|² - ½ log det(I + Λ Z'WZ Λ)
//! ```
//!
//! with a Nelder-Mead search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NetmixError, Result};
use crate::glm::{logistic, BinomialData, Design, GlmFit, IrlsOptions};
use crate::linalg::{collinear_columns, inverse_spd, log_det_spd, solve_spd};

/// A grouping factor: one level per design row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFactor {
    pub name: String,
    pub n_levels: usize,
    pub level_of_row: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmmFit {
    pub fixed: GlmFit,
    pub factor_names: Vec<String>,
    /// Random-intercept standard deviations (σ, τ for sender and receiver).
    pub sd: Vec<f64>,
    /// Predicted random intercepts `σ_f b̂_f`, one vector per factor.
    pub blups: Vec<Vec<f64>>,
    /// Laplace-approximate marginal log-likelihood.
    pub laplace_loglik: f64,
    pub converged: bool,
    pub n_outer: usize,
    /// Standard deviations that collapsed below `1e-8`.
    pub boundary: Vec<bool>,
}

impl GlmmFit {
    /// Spherical modes `b_f = u_f / σ_f` (zero where σ_f is zero).
    fn spherical_modes(&self) -> Vec<f64> {
        self.blups
            .iter()
            .zip(&self.sd)
            .flat_map(|(u, &s)| u.iter().map(move |&x| if s > 0.0 { x / s } else { 0.0 }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PqlOptions {
    pub max_outer: usize,
    /// Sup-norm change of the standard deviations that ends the search.
    pub tol: f64,
    /// Skip the variance search and use these standard deviations.
    pub fixed_sd: Option<Vec<f64>>,
    pub start_sd: Option<Vec<f64>>,
    /// Warm start from a previous fit.
    pub warm: Option<GlmmFit>,
    /// Relative size of the initial simplex around the starting point.
    pub simplex_step: f64,
    pub inner: IrlsOptions,
}

impl Default for PqlOptions {
    fn default() -> Self {
        Self {
            max_outer: 200,
            tol: 1e-6,
            fixed_sd: None,
            start_sd: None,
            warm: None,
            simplex_step: 0.25,
            inner: IrlsOptions::default(),
        }
    }
}

/// Fits the mixed model to Bernoulli responses with prior weights.
pub fn pql_fit(
    design: &Design,
    y: &[u8],
    w: &[f64],
    factors: &[RandomFactor],
    options: &PqlOptions,
) -> Result<GlmmFit> {
    if design.n_rows() != y.len() {
        return Err(NetmixError::Dimension(format!(
            "design has {} rows, {} responses",
            design.n_rows(),
            y.len()
        )));
    }
    fit_glmm(design, &BinomialData::weighted_bernoulli(y, w)?, factors, options)
}

struct Problem<'a> {
    names: &'a [String],
    x: Vec<f64>,
    p: usize,
    data: &'a BinomialData,
    factors: &'a [RandomFactor],
    offsets: Vec<usize>,
    n_random: usize,
    cap: f64,
    max_iter: usize,
    tol: f64,
}

#[derive(Clone)]
struct Inner {
    beta: Vec<f64>,
    b: Vec<f64>,
    capped: Vec<usize>,
    loglik: f64,
    laplace: f64,
    converged: bool,
    n_iter: usize,
}

impl Problem<'_> {
    fn eta(&self, beta: &[f64], b: &[f64], sd: &[f64]) -> Vec<f64> {
        self.x
            .chunks(self.p)
            .enumerate()
            .map(|(r, x)| {
                let mut e: f64 = x.iter().zip(beta).map(|(a, c)| a * c).sum();
                for (f, fac) in self.factors.iter().enumerate() {
                    e += sd[f] * b[self.offsets[f] + fac.level_of_row[r] as usize];
                }
                e
            })
            .collect()
    }

    /// Full negative Hessian of the penalized objective over (β, b) and
    /// the gradient, at linear predictor `eta`.
    fn system(&self, eta: &[f64], b: &[f64], sd: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let (p, q) = (self.p, self.n_random);
        let mut h = DMatrix::<f64>::zeros(p + q, p + q);
        let mut g = DVector::<f64>::zeros(p + q);
        let mut idx = vec![0usize; self.factors.len()];
        for (r, x) in self.x.chunks(p).enumerate() {
            let n = self.data.trials[r];
            if n == 0.0 {
                continue;
            }
            let mu = logistic(eta[r]);
            let w = n * mu * (1.0 - mu);
            let res = self.data.successes[r] - n * mu;
            for (f, fac) in self.factors.iter().enumerate() {
                idx[f] = p + self.offsets[f] + fac.level_of_row[r] as usize;
            }
            for a in 0..p {
                if x[a] == 0.0 {
                    continue;
                }
                g[a] += x[a] * res;
                let wa = w * x[a];
                for c in a..p {
                    h[(a, c)] += wa * x[c];
                }
                for (f, &j) in idx.iter().enumerate() {
                    h[(a, j)] += wa * sd[f];
                }
            }
            for (f, &j) in idx.iter().enumerate() {
                g[j] += res * sd[f];
                for (e, &l) in idx.iter().enumerate() {
                    if l >= j {
                        h[(j, l)] += w * sd[f] * sd[e];
                    }
                }
            }
        }
        for j in 0..q {
            h[(p + j, p + j)] += 1.0;
            g[p + j] -= b[j];
        }
        for a in 0..p + q {
            for c in 0..a {
                h[(a, c)] = h[(c, a)];
            }
        }
        (h, g)
    }

    fn penalized(&self, eta: &[f64], b: &[f64]) -> (f64, f64) {
        let ll = self.data.loglik(eta);
        (ll, ll - 0.5 * b.iter().map(|x| x * x).sum::<f64>())
    }

    fn inner(&self, sd: &[f64], start: &Inner) -> Result<(Inner, DMatrix<f64>)> {
        let (p, q) = (self.p, self.n_random);
        let mut beta = start.beta.clone();
        let mut b = start.b.clone();
        let mut capped = start.capped.clone();
        for &c in &capped {
            beta[c] = beta[c].signum() * self.cap;
        }
        let mut eta = self.eta(&beta, &b, sd);
        let (mut ll, mut obj) = self.penalized(&eta, &b);
        let mut converged = false;
        let mut n_iter = 0;
        while n_iter < self.max_iter {
            n_iter += 1;
            let (h, g) = self.system(&eta, &b, sd);
            let active: Vec<usize> = (0..p + q).filter(|j| !capped.contains(j)).collect();
            let h_act = h.select_rows(&active).select_columns(&active);
            let g_act = g.select_rows(&active);
            let step = solve_spd(&h_act, &g_act)
                .ok_or_else(|| NetmixError::Numerical("singular mixed-model system".into()))?;
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut nb = beta.clone();
                let mut nr = b.clone();
                for (a, &j) in active.iter().enumerate() {
                    if j < p {
                        nb[j] += scale * step[a];
                    } else {
                        nr[j - p] += scale * step[a];
                    }
                }
                let ne = self.eta(&nb, &nr, sd);
                let (nll, nobj) = self.penalized(&ne, &nr);
                if nobj >= obj - 1e-12 * obj.abs() {
                    accepted = Some((nb, nr, ne, nll, nobj));
                    break;
                }
                scale *= 0.5;
            }
            let Some((nb, nr, ne, nll, nobj)) = accepted else {
                converged = true;
                break;
            };
            let change = (nobj - obj).abs() / (nobj.abs() + 0.05);
            beta = nb;
            b = nr;
            eta = ne;
            ll = nll;
            obj = nobj;
            let newly: Vec<usize> = (0..p)
                .filter(|&c| !capped.contains(&c) && beta[c].abs() > self.cap)
                .collect();
            if !newly.is_empty() {
                for &c in &newly {
                    beta[c] = beta[c].signum() * self.cap;
                    log::warn!("coefficient `{}` separated; frozen at ±{}", self.names[c], self.cap);
                }
                capped.extend(newly);
                eta = self.eta(&beta, &b, sd);
                (ll, obj) = self.penalized(&eta, &b);
                continue;
            }
            if change < self.tol {
                converged = true;
                break;
            }
        }
        let (h, _) = self.system(&eta, &b, sd);
        let h_bb = h.view((p, p), (q, q)).into_owned();
        let log_det = if q == 0 {
            0.0
        } else {
            log_det_spd(&h_bb).ok_or_else(|| NetmixError::Numerical("Laplace determinant".into()))?
        };
        capped.sort_unstable();
        Ok((
            Inner {
                beta,
                b,
                capped,
                loglik: ll,
                laplace: obj - 0.5 * log_det,
                converged,
                n_iter,
            },
            h,
        ))
    }
}

/// Fits the mixed model to aggregated binomial rows.
pub fn fit_glmm(
    design: &Design,
    data: &BinomialData,
    factors: &[RandomFactor],
    options: &PqlOptions,
) -> Result<GlmmFit> {
    let n = design.n_rows();
    if data.trials.len() != n {
        return Err(NetmixError::Dimension(format!(
            "design has {n} rows, data has {}",
            data.trials.len()
        )));
    }
    for fac in factors {
        if fac.level_of_row.len() != n {
            return Err(NetmixError::Dimension(format!(
                "factor `{}` has {} rows, design has {n}",
                fac.name,
                fac.level_of_row.len()
            )));
        }
        if fac.n_levels < 2 || fac.level_of_row.iter().any(|&l| l as usize >= fac.n_levels) {
            return Err(NetmixError::InvalidArgument(format!(
                "factor `{}` needs at least two levels and in-range level indices",
                fac.name
            )));
        }
    }
    if !(data.total_weight() > 0.0) {
        return Err(NetmixError::ZeroWeights);
    }
    let dense = design.to_dense();
    let x = dense.dense_values().expect("dense design").to_vec();
    let names = design.names();
    let p = names.len();

    let gram = {
        let mut g = DMatrix::<f64>::zeros(p, p);
        for (row, &t) in x.chunks(p).zip(&data.trials) {
            for a in 0..p {
                for c in 0..p {
                    g[(a, c)] += t * row[a] * row[c];
                }
            }
        }
        g
    };
    let dropped = collinear_columns(&gram);
    if !dropped.is_empty() {
        return Err(NetmixError::RankDeficient(
            dropped.iter().map(|&j| names[j].clone()).collect(),
        ));
    }

    let mut offsets = Vec::with_capacity(factors.len());
    let mut n_random = 0;
    for fac in factors {
        offsets.push(n_random);
        n_random += fac.n_levels;
    }
    let problem = Problem {
        names,
        x,
        p,
        data,
        factors,
        offsets,
        n_random,
        cap: options.inner.cap,
        max_iter: options.inner.max_iter,
        tol: options.inner.tol,
    };

    let mut start = Inner {
        beta: options
            .inner
            .start
            .clone()
            .filter(|s| s.len() == p)
            .unwrap_or_else(|| vec![0.0; p]),
        b: vec![0.0; n_random],
        capped: Vec::new(),
        loglik: f64::NEG_INFINITY,
        laplace: f64::NEG_INFINITY,
        converged: false,
        n_iter: 0,
    };
    let mut sd0 = options.start_sd.clone().unwrap_or_else(|| vec![0.5; factors.len()]);
    if let Some(w) = options.warm.as_ref().filter(|w| w.fixed.coefficients.len() == p) {
        start.beta = w.fixed.coefficients.clone();
        start.capped = w.fixed.capped.clone();
        if w.sd.len() == factors.len() {
            let modes = w.spherical_modes();
            if modes.len() == n_random {
                start.b = modes;
            }
            if options.start_sd.is_none() {
                sd0 = w.sd.clone();
            }
        }
    }
    if sd0.len() != factors.len() {
        return Err(NetmixError::InvalidArgument(format!(
            "{} starting standard deviations for {} factors",
            sd0.len(),
            factors.len()
        )));
    }

    let (sd, inner, hessian, converged, n_outer) = match &options.fixed_sd {
        Some(fixed) => {
            if fixed.len() != factors.len() || fixed.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(NetmixError::InvalidArgument(
                    "fixed standard deviations must be finite, nonnegative, one per factor".into(),
                ));
            }
            let (inner, h) = problem.inner(fixed, &start)?;
            let conv = inner.converged;
            (fixed.clone(), inner, h, conv, 0)
        }
        None if factors.is_empty() => {
            let (inner, h) = problem.inner(&[], &start)?;
            let conv = inner.converged;
            (Vec::new(), inner, h, conv, 0)
        }
        None => {
            let mut warm = start.clone();
            let mut failure = None;
            let mut objective = |s: &[f64]| -> f64 {
                let sd: Vec<f64> = s.iter().map(|x| x.abs()).collect();
                match problem.inner(&sd, &warm) {
                    Ok((fit, _)) => {
                        let value = fit.laplace;
                        if value.is_finite() {
                            warm = fit;
                        }
                        -value
                    }
                    Err(e) => {
                        failure = Some(e);
                        f64::INFINITY
                    }
                }
            };
            let nm = nelder_mead(&mut objective, &sd0, options.simplex_step, options.tol, options.max_outer);
            if !nm.value.is_finite() {
                return Err(failure.unwrap_or_else(|| NetmixError::Numerical("variance search failed".into())));
            }
            let sd: Vec<f64> = nm.point.iter().map(|x| x.abs()).collect();
            let (inner, h) = problem.inner(&sd, &warm)?;
            let conv = nm.converged && inner.converged;
            (sd, inner, h, conv, nm.iterations)
        }
    };

    let active: Vec<usize> = (0..p + n_random).filter(|j| !inner.capped.contains(j)).collect();
    let mut std_errors = vec![f64::NAN; p];
    let mut covariance = vec![0.0; p * p];
    if let Some(inv) = inverse_spd(&hessian.select_rows(&active).select_columns(&active)) {
        for (a, &ja) in active.iter().enumerate().filter(|(_, &j)| j < p) {
            std_errors[ja] = inv[(a, a)].sqrt();
            for (c, &jc) in active.iter().enumerate().filter(|(_, &j)| j < p) {
                covariance[ja * p + jc] = inv[(a, c)];
            }
        }
    }
    let blups = factors
        .iter()
        .enumerate()
        .map(|(f, fac)| {
            let off = problem.offsets[f];
            inner.b[off..off + fac.n_levels].iter().map(|x| x * sd[f]).collect()
        })
        .collect();
    Ok(GlmmFit {
        fixed: GlmFit {
            names: names.to_vec(),
            coefficients: inner.beta.clone(),
            std_errors,
            covariance,
            loglik: inner.loglik,
            converged: inner.converged,
            n_iter: inner.n_iter,
            capped: inner.capped.clone(),
        },
        factor_names: factors.iter().map(|f| f.name.clone()).collect(),
        boundary: sd.iter().map(|&s| s < 1e-8).collect(),
        sd,
        blups,
        laplace_loglik: inner.laplace,
        converged,
        n_outer,
    })
}

/// Laplace-approximate marginal log-likelihood of one set of Bernoulli
/// observations (typically one graph) with fixed effects and standard
/// deviations held at the fitted values and fresh random intercepts
/// integrated out.
///
/// `rows` pairs each observation's design row with its response.
pub fn laplace_marginal_loglik(
    fit: &GlmmFit,
    design: &Design,
    factors: &[RandomFactor],
    rows: &[(u32, u8)],
) -> Result<f64> {
    let eta_fixed = design.linear_predictor(&fit.fixed.coefficients);
    let mut offsets = Vec::with_capacity(factors.len());
    let mut q = 0;
    for fac in factors {
        offsets.push(q);
        q += fac.n_levels;
    }
    let sd = &fit.sd;
    let mut b = vec![0.0; q];
    let eval = |b: &[f64]| -> (f64, Vec<f64>) {
        let etas: Vec<f64> = rows
            .iter()
            .map(|&(r, _)| {
                let mut e = eta_fixed[r as usize];
                for (f, fac) in factors.iter().enumerate() {
                    e += sd[f] * b[offsets[f] + fac.level_of_row[r as usize] as usize];
                }
                e
            })
            .collect();
        let ll: f64 = etas
            .iter()
            .zip(rows)
            .map(|(&e, &(_, y))| {
                let (lp, lq) = crate::glm::log_probs(e);
                if y != 0 {
                    lp
                } else {
                    lq
                }
            })
            .sum();
        (ll - 0.5 * b.iter().map(|x| x * x).sum::<f64>(), etas)
    };
    let system = |b: &[f64], etas: &[f64]| -> (DMatrix<f64>, DVector<f64>) {
        let mut h = DMatrix::<f64>::identity(q, q);
        let mut g = DVector::from_iterator(q, b.iter().map(|x| -x));
        let mut idx = vec![0usize; factors.len()];
        for (&(r, y), &e) in rows.iter().zip(etas) {
            let mu = logistic(e);
            let w = mu * (1.0 - mu);
            let res = f64::from(y) - mu;
            for (f, fac) in factors.iter().enumerate() {
                idx[f] = offsets[f] + fac.level_of_row[r as usize] as usize;
            }
            for (f, &j) in idx.iter().enumerate() {
                g[j] += res * sd[f];
                for (e2, &l) in idx.iter().enumerate() {
                    h[(j, l)] += w * sd[f] * sd[e2];
                }
            }
        }
        (h, g)
    };
    let (mut obj, mut etas) = eval(&b);
    if q > 0 && sd.iter().any(|&s| s > 0.0) {
        for _ in 0..50 {
            let (h, g) = system(&b, &etas);
            let step = solve_spd(&h, &g).ok_or_else(|| NetmixError::Numerical("singular Laplace system".into()))?;
            let mut scale = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let trial: Vec<f64> = b.iter().zip(step.iter()).map(|(x, s)| x + scale * s).collect();
                let (t_obj, t_etas) = eval(&trial);
                if t_obj >= obj - 1e-12 * obj.abs() {
                    let change = (t_obj - obj).abs();
                    b = trial;
                    obj = t_obj;
                    etas = t_etas;
                    improved = change > 1e-12 * (obj.abs() + 1.0);
                    break;
                }
                scale *= 0.5;
            }
            if !improved {
                break;
            }
        }
    }
    if q == 0 {
        return Ok(obj);
    }
    let (h, _) = system(&b, &etas);
    let log_det = log_det_spd(&h).ok_or_else(|| NetmixError::Numerical("Laplace determinant".into()))?;
    Ok(obj - 0.5 * log_det)
}

pub(crate) struct NmResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` with the Nelder-Mead simplex method. Stops when every
/// vertex is within `tol` (sup norm) of the best one.
pub(crate) fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> NmResult {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += (step * x[i].abs()).max(0.4 * step);
        let v = f(&x);
        simplex.push((x, v));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    };
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        order(&mut simplex);
        let spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < tol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let v = f(&x);
                    *vertex = (x, v);
                }
            }
        }
    }
    order(&mut simplex);
    let (point, value) = simplex.swap_remove(0);
    NmResult {
        point,
        value,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::irls_fit;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn crossed(n_send: usize, n_recv: usize, sd: (f64, f64), seed: u64) -> (Design, Vec<u8>, Vec<RandomFactor>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::StandardNormal;
        let u: Vec<f64> = (0..n_send).map(|_| sd.0 * rng.sample::<f64, _>(normal)).collect();
        let v: Vec<f64> = (0..n_recv).map(|_| sd.1 * rng.sample::<f64, _>(normal)).collect();
        let mut values = Vec::new();
        let mut y = Vec::new();
        let (mut ls, mut lr) = (Vec::new(), Vec::new());
        for _rep in 0..6 {
            for i in 0..n_send {
                for j in 0..n_recv {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    values.extend([1.0, x]);
                    let eta = -0.3 + 0.8 * x + u[i] + v[j];
                    y.push(u8::from(rng.random::<f64>() < logistic(eta)));
                    ls.push(i as u32);
                    lr.push(j as u32);
                }
            }
        }
        let n = y.len();
        let design = Design::dense(vec!["(intercept)".into(), "x".into()], n, values).unwrap();
        let factors = vec![
            RandomFactor { name: "sender".into(), n_levels: n_send, level_of_row: ls },
            RandomFactor { name: "receiver".into(), n_levels: n_recv, level_of_row: lr },
        ];
        (design, y, factors)
    }

    #[test]
    fn zero_variance_reproduces_glm() {
        let (design, y, factors) = crossed(6, 6, (1.0, 0.5), 3);
        let w = vec![1.0; y.len()];
        let glm = irls_fit(&design, &y, &w).unwrap();
        let options = PqlOptions { fixed_sd: Some(vec![0.0, 0.0]), ..PqlOptions::default() };
        let glmm = pql_fit(&design, &y, &w, &factors, &options).unwrap();
        for (a, b) in glm.coefficients.iter().zip(&glmm.fixed.coefficients) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(glmm.laplace_loglik, glm.loglik, epsilon = 1e-8);
        assert!(glmm.boundary.iter().all(|&b| b));
    }

    #[test]
    fn recovers_positive_variance() {
        let (design, y, factors) = crossed(12, 12, (1.2, 1.2), 11);
        let w = vec![1.0; y.len()];
        let fit = pql_fit(&design, &y, &w, &factors, &PqlOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.sd.iter().all(|&s| s > 0.4), "{:?}", fit.sd);
        for u in &fit.blups {
            let mean = u.iter().sum::<f64>() / u.len() as f64;
            assert!(mean.abs() < 0.2);
        }
    }

    #[test]
    fn marginal_with_zero_variance_is_plain_loglik() {
        let (design, y, factors) = crossed(4, 4, (0.0, 0.0), 5);
        let w = vec![1.0; y.len()];
        let options = PqlOptions { fixed_sd: Some(vec![0.0, 0.0]), ..PqlOptions::default() };
        let fit = pql_fit(&design, &y, &w, &factors, &options).unwrap();
        let rows: Vec<(u32, u8)> = (0..16).map(|r| (r as u32, y[r])).collect();
        let direct: f64 = design
            .linear_predictor(&fit.fixed.coefficients)
            .iter()
            .zip(&y)
            .take(16)
            .map(|(&e, &y)| {
                let (lp, lq) = crate::glm::log_probs(e);
                if y == 1 { lp } else { lq }
            })
            .sum();
        let marginal = laplace_marginal_loglik(&fit, &design, &factors, &rows).unwrap();
        assert_abs_diff_eq!(marginal, direct, epsilon = 1e-12);
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let mut f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2);
        let r = nelder_mead(&mut f, &[0.0, 0.0], 0.25, 1e-8, 500);
        assert!(r.converged);
        assert_abs_diff_eq!(r.point[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.point[1], -0.5, epsilon = 1e-6);
    }
}
