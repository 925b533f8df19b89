use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Block, Error, Result};
use crate::lik::{Evaluation, Order};

/// A log-likelihood to be maximized over a coefficient vector.
pub trait Objective {
    fn dim(&self) -> usize;

    fn evaluate(&self, beta: &DVector<f64>, order: Order) -> Result<Evaluation>;

    /// Constant completing the kernel to the full log-likelihood.
    fn constant(&self) -> f64 {
        0.0
    }

    /// Sample size entering BIC.
    fn sample_size(&self) -> usize {
        1
    }

    /// Coefficient blocks and their lengths, in stacking order.
    fn layout(&self) -> Vec<(Block, usize)> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the gradient max-norm.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Relative log-likelihood change treated as a stall.
    pub rel_tol: f64,
    /// Starting ridge, relative to the Hessian's largest diagonal entry.
    pub ridge_start: f64,
    /// Fit main effects first and add interactions one at a time.
    pub staged: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            max_halvings: 30,
            rel_tol: 1e-12,
            ridge_start: 1e-8,
            staged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub loglik: f64,
    pub step_norm: f64,
    pub gradient_max: f64,
    pub halvings: usize,
    /// Absolute ridge added to the negative Hessian, zero when none was needed.
    pub ridge: f64,
}

/// Outcome of maximizing one likelihood component.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub layout: Vec<(Block, usize)>,
    pub coefficients: DVector<f64>,
    /// Inverse observed information (pseudo-inverse on the identified subspace).
    pub covariance: DMatrix<f64>,
    /// NaN for coefficients that are not identified.
    pub std_errors: DVector<f64>,
    /// Kernel log-likelihood.
    pub loglik: f64,
    /// Kernel plus constant terms.
    pub loglik_full: f64,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_max: f64,
    pub trace: Vec<IterationRecord>,
    /// Orthonormal basis (columns) of directions along which the likelihood is flat.
    pub null_space: DMatrix<f64>,
    /// Indices of coefficients with a component in the null space.
    pub non_identified: Vec<usize>,
    pub sample_size: usize,
}

impl FitResult {
    pub fn n_params(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_identified(&self) -> bool {
        self.non_identified.is_empty()
    }

    /// Coefficients of `block`, if this fit contains it.
    pub fn block(&self, block: Block) -> Option<DVector<f64>> {
        let mut offset = 0;
        for &(b, len) in &self.layout {
            if b == block {
                return Some(self.coefficients.rows(offset, len).clone_owned());
            }
            offset += len;
        }
        None
    }

    pub fn block_offset(&self, block: Block) -> Option<usize> {
        let mut offset = 0;
        for &(b, len) in &self.layout {
            if b == block {
                return Some(offset);
            }
            offset += len;
        }
        None
    }

    /// Whether a linear function with gradient `g` is estimable.
    pub fn is_estimable(&self, g: &DVector<f64>) -> bool {
        if self.null_space.ncols() == 0 {
            return true;
        }
        let proj = self.null_space.transpose() * g;
        proj.norm() <= 1e-6 * g.norm().max(f64::MIN_POSITIVE)
    }
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn hessian_scale(h: &DMatrix<f64>) -> f64 {
    (0..h.nrows()).fold(1.0, |m, i| m.max(h[(i, i)].abs()))
}

/// Newton direction solving `(-H + ridge I) step = g`, with the ridge doubled
/// until the shifted negative Hessian is positive definite.
fn newton_direction(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    ridge_start: f64,
) -> Result<(DVector<f64>, f64)> {
    let neg = -h;
    let scale = hessian_scale(h);
    let floor = 1e-11 * scale;
    let min_eig = SymmetricEigen::new(neg.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v));
    if !min_eig.is_finite() {
        return Err(Error::Convergence("non-finite Hessian".into()));
    }
    let mut ridge = 0.0;
    if min_eig <= floor {
        let mut eps = ridge_start;
        while min_eig + eps * scale <= floor {
            eps *= 2.0;
        }
        ridge = eps * scale;
    }
    for _ in 0..64 {
        let shifted = &neg + DMatrix::identity(h.nrows(), h.ncols()) * ridge;
        if let Some(chol) = shifted.cholesky() {
            return Ok((chol.solve(g), ridge));
        }
        ridge = if ridge == 0.0 { ridge_start * scale } else { ridge * 2.0 };
    }
    Err(Error::Convergence("could not regularize the Hessian".into()))
}

/// Covariance, null-space basis and non-identified coefficients from the
/// Hessian at the optimum.
pub(crate) fn covariance_from_hessian(h: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
    let k = h.nrows();
    if k == 0 {
        return (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), Vec::new());
    }
    let eig = SymmetricEigen::new(-h);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = 1e-9 * top.max(f64::MIN_POSITIVE);
    let mut cov = DMatrix::zeros(k, k);
    let mut null_cols = Vec::new();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        if lam > cut {
            cov += (v * v.transpose()) / lam;
        } else {
            null_cols.push(v.clone_owned());
        }
    }
    let null_space = if null_cols.is_empty() {
        DMatrix::zeros(k, 0)
    } else {
        DMatrix::from_columns(&null_cols)
    };
    let non_identified = (0..k)
        .filter(|&i| null_space.row(i).norm_squared() > 1e-8)
        .collect();
    // exact symmetry
    let cov = (&cov + cov.transpose()) * 0.5;
    (cov, null_space, non_identified)
}

/// Maximizes `objective` by Newton-Raphson from `init`, with step halving and
/// Hessian ridging.
pub fn fit_component<O: Objective + ?Sized>(
    objective: &O,
    init: &DVector<f64>,
    options: &FitOptions,
) -> Result<FitResult> {
    if init.len() != objective.dim() {
        return Err(Error::Dimension(format!(
            "initial vector has length {}, objective has dimension {}",
            init.len(),
            objective.dim()
        )));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::Initialization("initial values are not finite".into()));
    }
    let mut ev = objective
        .evaluate(init, Order::Hessian)
        .map_err(|e| Error::Initialization(format!("cannot evaluate at initial values: {e}")))?;
    if !ev.value.is_finite() {
        return Err(Error::Initialization(format!(
            "log-likelihood at initial values is {}",
            ev.value
        )));
    }
    let mut beta = init.clone();
    let mut trace = Vec::new();
    let mut stalls = 0;
    while trace.len() < options.max_iter {
        let gmax = max_abs(&ev.gradient);
        if gmax <= options.tol {
            break;
        }
        let (step, ridge) = newton_direction(&ev.hessian, &ev.gradient, options.ridge_start)?;
        let slack = 1e-12 * ev.value.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for halvings in 0..=options.max_halvings {
            let cand = &beta + &step * t;
            if let Ok(e) = objective.evaluate(&cand, Order::Value) {
                if e.value.is_finite() && e.value >= ev.value - slack {
                    accepted = Some((cand, halvings));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, halvings)) = accepted else {
            break;
        };
        let next = objective.evaluate(&cand, Order::Hessian)?;
        let rel = (next.value - ev.value).abs() / ev.value.abs().max(1.0);
        trace.push(IterationRecord {
            loglik: next.value,
            step_norm: step.norm() * t,
            gradient_max: max_abs(&next.gradient),
            halvings,
            ridge,
        });
        beta = cand;
        ev = next;
        stalls = if rel <= options.rel_tol { stalls + 1 } else { 0 };
        if stalls >= 3 {
            break;
        }
    }
    let gradient_max = max_abs(&ev.gradient);
    let (covariance, null_space, non_identified) = covariance_from_hessian(&ev.hessian);
    let std_errors = DVector::from_fn(beta.len(), |i, _| {
        if non_identified.contains(&i) {
            f64::NAN
        } else {
            covariance[(i, i)].max(0.0).sqrt()
        }
    });
    let loglik_full = ev.value + objective.constant();
    let k = beta.len() as f64;
    let n = objective.sample_size();
    Ok(FitResult {
        layout: objective.layout(),
        coefficients: beta,
        covariance,
        std_errors,
        loglik: ev.value,
        loglik_full,
        aic: -2.0 * loglik_full + 2.0 * k,
        bic: -2.0 * loglik_full + k * (n as f64).ln(),
        iterations: trace.len(),
        converged: gradient_max <= options.tol,
        gradient_max,
        trace,
        null_space,
        non_identified,
        sample_size: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `-0.5 (b - c)' A (b - c)` with `A` positive definite.
    struct Quadratic {
        a: DMatrix<f64>,
        c: DVector<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.c.len()
        }

        fn evaluate(&self, beta: &DVector<f64>, _order: Order) -> Result<Evaluation> {
            let d = beta - &self.c;
            Ok(Evaluation {
                value: -0.5 * (d.transpose() * &self.a * &d)[(0, 0)],
                gradient: -(&self.a * &d),
                hessian: -self.a.clone(),
            })
        }
    }

    #[test]
    fn quadratic_converges_in_one_step() {
        let q = Quadratic {
            a: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            c: DVector::from_row_slice(&[1.5, -3.0]),
        };
        let fit = fit_component(&q, &DVector::zeros(2), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.iterations, 1);
        assert!((&fit.coefficients - &q.c).norm() < 1e-12);
        let inv = q.a.clone().try_inverse().unwrap();
        assert!((&fit.covariance - inv).norm() < 1e-12);
        assert_eq!(fit.trace[0].halvings, 0);
    }

    #[test]
    fn flat_direction_is_reported() {
        let q = Quadratic {
            a: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            c: DVector::from_row_slice(&[2.0, 0.0]),
        };
        let fit = fit_component(&q, &DVector::from_row_slice(&[0.0, 0.7]), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.non_identified, vec![1]);
        assert!(fit.std_errors[1].is_nan());
        assert!((fit.std_errors[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-10);
        assert!(fit.trace[0].ridge > 0.0);
    }

    #[test]
    fn non_finite_start_is_initialization_error() {
        let q = Quadratic {
            a: DMatrix::identity(1, 1),
            c: DVector::zeros(1),
        };
        let err = fit_component(&q, &DVector::from_element(1, f64::NAN), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Initialization(_)));
    }

    #[test]
    fn iteration_cap_reports_unconverged() {
        // -cosh-like objective: Newton from far away takes many steps
        struct Smooth;
        impl Objective for Smooth {
            fn dim(&self) -> usize {
                1
            }
            fn evaluate(&self, b: &DVector<f64>, _o: Order) -> Result<Evaluation> {
                let x = b[0];
                Ok(Evaluation {
                    value: -(x.exp() + (-x).exp()),
                    gradient: DVector::from_element(1, -(x.exp() - (-x).exp())),
                    hessian: DMatrix::from_element(1, 1, -(x.exp() + (-x).exp())),
                })
            }
        }
        let opts = FitOptions {
            max_iter: 2,
            ..FitOptions::default()
        };
        let fit = fit_component(&Smooth, &DVector::from_element(1, 8.0), &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.trace.len(), 2);
        let full = fit_component(&Smooth, &DVector::from_element(1, 8.0), &FitOptions::default()).unwrap();
        assert!(full.converged);
        assert!(full.coefficients[0].abs() < 1e-8);
        for w in full.trace.windows(2) {
            assert!(w[1].loglik >= w[0].loglik - 1e-12 * w[0].loglik.abs());
        }
    }
}
