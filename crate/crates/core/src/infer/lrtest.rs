//! Likelihood-ratio tests between nested fits.

use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

use super::fit::ModelFit;
use super::newton::FitResult;

/// Anything with a maximized log-likelihood and a parameter count.
pub trait Nested {
    /// Log-likelihood used for the comparison. Constants cancel in the
    /// difference as long as both sides report the same form.
    fn loglik(&self) -> f64;
    fn n_params(&self) -> usize;
}

impl Nested for FitResult {
    fn loglik(&self) -> f64 {
        self.loglik
    }

    fn n_params(&self) -> usize {
        self.coefficients.len()
    }
}

impl Nested for ModelFit {
    fn loglik(&self) -> f64 {
        self.bb.loglik + self.gp.loglik
    }

    fn n_params(&self) -> usize {
        self.n_params
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrTestResult {
    pub lr_stat: f64,
    pub df: usize,
    pub p_value: f64,
    pub loglik_full: f64,
    pub loglik_reduced: f64,
    /// Set when a small negative statistic was clamped to zero.
    pub clamped: bool,
}

/// Upper tail `P(X > x)` of the chi-squared distribution with `df` degrees
/// of freedom.
pub fn chi_squared_sf(x: f64, df: usize) -> f64 {
    if df == 0 || x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// `LR = 2 (L_full - L_reduced)` referred to a chi-squared distribution with
/// the difference in parameter counts as degrees of freedom.
///
/// Equal parameter counts are accepted only for fits with equal
/// log-likelihoods, which yields `LR = 0`.
pub fn lr_test<F: Nested + ?Sized, R: Nested + ?Sized>(full: &F, reduced: &R) -> Result<LrTestResult> {
    let (lf, lr) = (full.loglik(), reduced.loglik());
    if !lf.is_finite() || !lr.is_finite() {
        return Err(Error::Usage("log-likelihoods must be finite".into()));
    }
    let tol = 1e-6f64.max(1e-9 * lf.abs().max(lr.abs()));
    let (kf, kr) = (full.n_params(), reduced.n_params());
    if kf < kr {
        return Err(Error::Usage(format!(
            "reduced model has more parameters ({kr}) than the full model ({kf})"
        )));
    }
    let df = kf - kr;
    let mut stat = 2.0 * (lf - lr);
    if df == 0 && stat.abs() > tol {
        return Err(Error::Usage(
            "models have the same number of parameters; degrees of freedom must be positive".into(),
        ));
    }
    let mut clamped = false;
    if stat < 0.0 {
        if stat < -tol {
            return Err(Error::Convergence(format!(
                "negative likelihood-ratio statistic {stat:.6e}; the full model did not reach its maximum"
            )));
        }
        stat = 0.0;
        clamped = true;
    }
    if df == 0 {
        stat = 0.0;
    }
    Ok(LrTestResult {
        lr_stat: stat,
        df,
        p_value: chi_squared_sf(stat, df),
        loglik_full: lf,
        loglik_reduced: lr,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(f64, usize);

    impl Nested for Fixed {
        fn loglik(&self) -> f64 {
            self.0
        }
        fn n_params(&self) -> usize {
            self.1
        }
    }

    #[test]
    fn chi_squared_table_values() {
        assert!((chi_squared_sf(3.841458820694124, 1) - 0.05).abs() < 1e-12);
        assert!((chi_squared_sf(5.991464547107979, 2) - 0.05).abs() < 1e-12);
        assert!((chi_squared_sf(2.0, 2) - (-1.0f64).exp()).abs() < 1e-14);
        assert_eq!(chi_squared_sf(0.0, 3), 1.0);
    }

    #[test]
    fn identical_models() {
        let r = lr_test(&Fixed(-100.0, 5), &Fixed(-100.0, 5)).unwrap();
        assert_eq!(r.lr_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ordinary_test() {
        let r = lr_test(&Fixed(-100.0, 6), &Fixed(-101.92072941, 5)).unwrap();
        assert!((r.lr_stat - 3.84145882).abs() < 1e-8);
        assert!((r.p_value - 0.05).abs() < 1e-8);
        assert_eq!(r.df, 1);
    }

    #[test]
    fn usage_and_convergence_errors() {
        assert!(matches!(lr_test(&Fixed(-100.0, 5), &Fixed(-90.0, 5)), Err(Error::Usage(_))));
        assert!(matches!(lr_test(&Fixed(-100.0, 4), &Fixed(-100.0, 5)), Err(Error::Usage(_))));
        assert!(matches!(lr_test(&Fixed(-100.0, 6), &Fixed(-90.0, 5)), Err(Error::Convergence(_))));
        let r = lr_test(&Fixed(-100.0, 6), &Fixed(-100.0 + 1e-8, 5)).unwrap();
        assert!(r.clamped);
        assert_eq!(r.lr_stat, 0.0);
    }
}
