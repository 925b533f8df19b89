//! Probability mass functions and closed-form moments of the hierarchy
//! `X | N, pi ~ binomial`, `pi ~ beta`, `N | tau ~ Poisson`, `tau ~ gamma`.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::NaturalParams;

const LN_FACTORIAL_TABLE: usize = 4096;

/// `ln(n!)`, tabulated for small `n`, log-gamma beyond.
pub fn ln_factorial(n: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACTORIAL_TABLE);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..LN_FACTORIAL_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    });
    match table.get(n as usize) {
        Some(&v) => v,
        None => ln_gamma(n as f64 + 1.0),
    }
}

/// `ln C(n, x)`.
pub fn ln_binomial(n: u64, x: u64) -> f64 {
    ln_factorial(n) - ln_factorial(x) - ln_factorial(n - x)
}

fn check_bb(x: u64, n: u64, mu: f64, theta: f64) -> Result<()> {
    if x > n {
        return Err(Error::Domain(format!("x = {x} exceeds n = {n}")));
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(format!("mu = {mu} outside (0, 1)")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("theta = {theta} must be positive")));
    }
    Ok(())
}

/// Kernel of the beta-binomial log-pmf (no binomial coefficient), product form.
pub(crate) fn bb_kernel(x: u64, n: u64, mu: f64, one_minus_mu: f64, theta: f64) -> f64 {
    let mut s = 0.0;
    for v in 0..x {
        s += (mu + v as f64 * theta).ln();
    }
    for w in 0..n - x {
        s += (one_minus_mu + w as f64 * theta).ln();
    }
    for u in 1..n {
        s -= (u as f64 * theta).ln_1p();
    }
    s
}

/// Beta-binomial log-pmf in product form:
/// `ln C(n,x) + sum_v ln(mu + v theta) + sum_w ln(1 - mu + w theta) - sum_u ln(1 + u theta)`.
pub fn beta_binomial_log_pmf(x: u64, n: u64, mu: f64, theta: f64) -> Result<f64> {
    check_bb(x, n, mu, theta)?;
    Ok(ln_binomial(n, x) + bb_kernel(x, n, mu, 1.0 - mu, theta))
}

/// Beta-binomial log-pmf evaluated through gamma-function ratios. Ratios whose
/// two arguments coincide are taken as one.
pub fn beta_binomial_log_pmf_gamma_form(x: u64, n: u64, mu: f64, theta: f64) -> Result<f64> {
    check_bb(x, n, mu, theta)?;
    let (nf, xf) = (n as f64, x as f64);
    let a = mu / theta;
    let b = (1.0 - mu) / theta;
    let s = 1.0 / theta;
    let mut lp = ln_binomial(n, x);
    if n != 0 {
        lp += ln_gamma(s) - ln_gamma(s + nf);
    }
    if x != 0 {
        lp += ln_gamma(a + xf) - ln_gamma(a);
    }
    if x != n {
        lp += ln_gamma(b + nf - xf) - ln_gamma(b);
    }
    Ok(lp)
}

/// Joint log-pmf of the repeated trial counts of one unit:
/// `sum_h [n_h ln lambda_h - ln n_h!] + sum_{u<S} ln(alpha + u delta)
///  - (S + alpha/delta) ln(delta sum_h lambda_h + 1)`.
pub fn gamma_poisson_log_pmf(n: &[u64], lambda: &[f64], alpha: f64, delta: f64) -> Result<f64> {
    if n.len() != lambda.len() {
        return Err(Error::Domain(format!(
            "{} counts but {} rates",
            n.len(),
            lambda.len()
        )));
    }
    if let Some(l) = lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::Domain(format!("lambda = {l} must be positive")));
    }
    if !(alpha > 0.0 && alpha.is_finite() && delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!(
            "alpha = {alpha} and delta = {delta} must be positive"
        )));
    }
    let mut lp = 0.0;
    for (&k, &l) in n.iter().zip(lambda) {
        lp += k as f64 * l.ln() - ln_factorial(k);
    }
    Ok(lp + gp_unit_kernel_tail(n.iter().sum(), lambda.iter().sum(), alpha, delta))
}

/// `sum_{u<S} ln(alpha + u delta) - (S + alpha/delta) ln(delta Lambda + 1)`.
pub(crate) fn gp_unit_kernel_tail(s: u64, lambda_sum: f64, alpha: f64, delta: f64) -> f64 {
    let mut acc = 0.0;
    for u in 0..s {
        acc += (alpha + u as f64 * delta).ln();
    }
    acc - (s as f64 + alpha / delta) * (delta * lambda_sum).ln_1p()
}

/// First and second moments of the model at given natural parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub e_tau: Vec<f64>,
    pub var_tau: Vec<f64>,
    pub e_n: Vec<f64>,
    pub var_n: Vec<f64>,
    /// Per unit, `p x p`.
    pub cov_n: Vec<DMatrix<f64>>,
    pub e_pi: Vec<f64>,
    pub var_pi: Vec<f64>,
    pub e_x: Vec<f64>,
    pub var_x: Vec<f64>,
    /// Per unit, `p x p`.
    pub cov_x: Vec<DMatrix<f64>>,
    /// `Cov(X_gh, N_gh)` per observation row.
    pub cov_xn: Vec<f64>,
}

/// `Var(X)` for a single observation.
pub fn var_successes(mu: f64, theta: f64, lambda: f64, alpha: f64, delta: f64) -> f64 {
    mu * (1.0 - mu) * theta / (1.0 + theta) * lambda * lambda * alpha * (alpha + delta)
        + mu * lambda * alpha * (1.0 + mu * lambda * delta)
}

/// Closed-form moments. Boundary values `theta = 0` and `delta = 0` are
/// accepted and give the independent/no-overdispersion limits.
pub fn compute_moments(natural: &NaturalParams) -> MomentSet {
    let (m, p) = (natural.m, natural.p);
    let rows = m * p;
    let mut out = MomentSet {
        e_tau: natural.alpha.clone(),
        var_tau: natural.alpha.iter().zip(&natural.delta).map(|(a, d)| a * d).collect(),
        e_n: Vec::with_capacity(rows),
        var_n: Vec::with_capacity(rows),
        cov_n: Vec::with_capacity(m),
        e_pi: natural.mu.clone(),
        var_pi: natural
            .mu
            .iter()
            .zip(&natural.theta)
            .map(|(mu, t)| mu * (1.0 - mu) * t / (1.0 + t))
            .collect(),
        e_x: Vec::with_capacity(rows),
        var_x: Vec::with_capacity(rows),
        cov_x: Vec::with_capacity(m),
        cov_xn: Vec::with_capacity(rows),
    };
    for g in 0..m {
        let (a, d) = (natural.alpha[g], natural.delta[g]);
        let base = g * p;
        let lam = &natural.lambda[base..base + p];
        let mu = &natural.mu[base..base + p];
        let theta = &natural.theta[base..base + p];
        for h in 0..p {
            out.e_n.push(lam[h] * a);
            out.var_n.push(lam[h] * a * (1.0 + lam[h] * d));
            out.e_x.push(mu[h] * lam[h] * a);
            out.var_x.push(var_successes(mu[h], theta[h], lam[h], a, d));
            out.cov_xn.push(mu[h] * lam[h] * a * (1.0 + lam[h] * d));
        }
        out.cov_n.push(DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                out.var_n[base + i]
            } else {
                lam[i] * lam[j] * a * d
            }
        }));
        out.cov_x.push(DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                out.var_x[base + i]
            } else {
                mu[i] * mu[j] * lam[i] * lam[j] * a * d
            }
        }));
    }
    out
}
