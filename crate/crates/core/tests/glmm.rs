use netmix::glm::{irls_fit, Design};
use netmix::glmm::{laplace_marginal_loglik, pql_fit, PqlOptions, RandomFactor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `levels` groups of `per_level` rows; intercept plus one covariate.
fn grouped(levels: usize, per_level: usize, sd: f64, seed: u64) -> (Design, Vec<u8>, RandomFactor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let u: Vec<f64> = (0..levels).map(|_| sd * normal.sample(&mut rng)).collect();
    let n = levels * per_level;
    let mut values = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    let mut level_of_row = Vec::with_capacity(n);
    for l in 0..levels {
        for _ in 0..per_level {
            let x: f64 = normal.sample(&mut rng);
            values.extend([1.0, x]);
            y.push(u8::from(rng.random::<f64>() < logistic(-0.5 + 0.8 * x + u[l])));
            level_of_row.push(l as u32);
        }
    }
    let design = Design::dense(vec!["beta0".into(), "x".into()], n, values).unwrap();
    let factor = RandomFactor {
        name: "group".into(),
        n_levels: levels,
        level_of_row,
    };
    (design, y, factor)
}

#[test]
fn zero_variance_reproduces_the_glm() {
    let (design, y, factor) = grouped(8, 30, 0.7, 1);
    let w: Vec<f64> = (0..y.len()).map(|i| 0.5 + (i % 3) as f64 * 0.25).collect();
    let options = PqlOptions {
        fixed_sd: Some(vec![0.0]),
        ..PqlOptions::default()
    };
    let fit = pql_fit(&design, &y, &w, &[factor], &options).unwrap();
    let glm = irls_fit(&design, &y, &w).unwrap();
    for (a, b) in fit.fixed.coefficients.iter().zip(&glm.coefficients) {
        assert!((a - b).abs() < 1e-8);
    }
    assert!((fit.laplace_loglik - glm.loglik).abs() < 1e-8);
}

#[test]
fn recovers_a_clear_random_intercept_variance() {
    let (design, y, factor) = grouped(40, 60, 1.0, 2);
    let fit = pql_fit(&design, &y, &vec![1.0; y.len()], &[factor], &PqlOptions::default()).unwrap();
    assert!(fit.converged);
    assert!((fit.sd[0] - 1.0).abs() < 0.35, "sd {}", fit.sd[0]);
    assert!((fit.fixed.coefficients[1] - 0.8).abs() < 0.2);
    // BLUPs are shrunk: their spread is below the fitted sd
    let blups = &fit.blups[0];
    let var = blups.iter().map(|b| b * b).sum::<f64>() / blups.len() as f64;
    assert!(var.sqrt() <= fit.sd[0] * 1.01);
}

#[test]
fn absent_variance_shrinks_towards_zero() {
    let (design, y, factor) = grouped(30, 40, 0.0, 3);
    let fit = pql_fit(&design, &y, &vec![1.0; y.len()], &[factor], &PqlOptions::default()).unwrap();
    assert!(fit.sd[0] < 0.3, "sd {}", fit.sd[0]);
}

#[test]
fn laplace_marginal_matches_numerical_integration() {
    let (design, y, factor) = grouped(5, 40, 0.8, 4);
    let fit = pql_fit(&design, &y, &vec![1.0; y.len()], std::slice::from_ref(&factor), &PqlOptions::default()).unwrap();
    let rows: Vec<(u32, u8)> = y.iter().enumerate().map(|(r, &v)| (r as u32, v)).collect();
    let laplace = laplace_marginal_loglik(&fit, &design, std::slice::from_ref(&factor), &rows).unwrap();

    // each level integrates independently: ∫ Π f(y | η + σ b) φ(b) db
    let eta = design.linear_predictor(&fit.fixed.coefficients);
    let sd = fit.sd[0];
    let mut exact = 0.0;
    for l in 0..5u32 {
        let members: Vec<usize> = (0..y.len()).filter(|&r| factor.level_of_row[r] == l).collect();
        let log_f = |b: f64| -> f64 {
            members
                .iter()
                .map(|&r| {
                    let p = logistic(eta[r] + sd * b);
                    if y[r] == 1 { p.ln() } else { (1.0 - p).ln() }
                })
                .sum::<f64>()
                - 0.5 * b * b
                - 0.5 * (2.0 * std::f64::consts::PI).ln()
        };
        let (lo, hi, n) = (-12.0, 12.0, 24_000);
        let h = (hi - lo) / n as f64;
        let vals: Vec<f64> = (0..=n).map(|i| log_f(lo + i as f64 * h)).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let integral: f64 = vals
            .iter()
            .enumerate()
            .map(|(i, v)| if i == 0 || i == n { 0.5 } else { 1.0 } * (v - max).exp())
            .sum::<f64>()
            * h;
        exact += max + integral.ln();
    }
    assert!((laplace - exact).abs() < 0.02 * 5.0, "laplace {laplace} vs exact {exact}");
}
