//! Natural-scale summaries at chosen covariate settings, with delta-method
//! standard errors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Block, Error, Result};
use crate::model::{logistic_pair, ParamVector};

use super::fit::ModelFit;

/// Design rows of one condition within a unit profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPoint {
    pub label: String,
    pub z_mu: DVector<f64>,
    pub z_theta: DVector<f64>,
    pub z_lambda: DVector<f64>,
}

/// A unit-level covariate setting and the conditions observed on it.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitProfile {
    pub label: String,
    pub z_alpha: DVector<f64>,
    pub z_delta: DVector<f64>,
    pub points: Vec<PredictionPoint>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionRequest {
    pub profiles: Vec<UnitProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// `None` without a fit covariance; NaN when the quantity is not estimable.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub label: String,
    pub mu: Estimate,
    pub theta: Estimate,
    pub lambda: Estimate,
    pub var_pi: Estimate,
    pub e_x: Estimate,
    pub e_n: Estimate,
    pub var_x: Estimate,
    pub var_n: Estimate,
    pub cov_xn: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSummary {
    pub label: String,
    pub alpha: Estimate,
    pub delta: Estimate,
    pub var_tau: Estimate,
    pub points: Vec<PointSummary>,
    /// Covariance matrices of successes and of trials across the profile's
    /// conditions, variances on the diagonal.
    pub cov_x: Vec<Vec<Estimate>>,
    pub cov_n: Vec<Vec<Estimate>>,
}

/// Coefficient covariance of a [`ModelFit`], split by component.
struct Covariance<'a> {
    fit: &'a ModelFit,
}

/// Standard error of a scalar function with coefficient gradient `g`, laid
/// out as `(beta_mu, beta_theta, beta_lambda, beta_alpha, beta_delta)`.
/// NaN when the function depends on a non-identified direction.
pub fn delta_method_se(fit: &ModelFit, g: &ParamVector) -> f64 {
    Covariance { fit }.se(g)
}

impl Covariance<'_> {
    fn se(&self, g: &ParamVector) -> f64 {
        let mut var = 0.0;
        for comp in [&self.fit.bb, &self.fit.gp] {
            let parts: Vec<f64> = comp
                .layout
                .iter()
                .flat_map(|(b, _)| g.block(*b).iter().copied().collect::<Vec<_>>())
                .collect();
            let gv = DVector::from_vec(parts);
            if gv.iter().all(|v| *v == 0.0) {
                continue;
            }
            if !comp.is_estimable(&gv) {
                return f64::NAN;
            }
            var += (gv.transpose() * &comp.covariance * &gv)[(0, 0)];
        }
        var.max(0.0).sqrt()
    }
}

/// Natural parameters of one point with their link derivatives.
struct Nat {
    mu: f64,
    mu_c: f64,
    theta: f64,
    lambda: f64,
}

/// Accumulates `d summary / d beta` from derivatives on the linear-predictor
/// scale.
struct Grad<'a> {
    g: ParamVector,
    profile: &'a UnitProfile,
}

impl<'a> Grad<'a> {
    fn new(params: &ParamVector, profile: &'a UnitProfile) -> Self {
        let mut g = params.clone();
        for b in Block::ALL {
            g.block_mut(b).fill(0.0);
        }
        Self { g, profile }
    }

    fn add(&mut self, block: Block, point: usize, d_eta: f64) {
        let z = match block {
            Block::Mu => &self.profile.points[point].z_mu,
            Block::Theta => &self.profile.points[point].z_theta,
            Block::Lambda => &self.profile.points[point].z_lambda,
            Block::Alpha => &self.profile.z_alpha,
            Block::Delta => &self.profile.z_delta,
        };
        *self.g.block_mut(block) += z * d_eta;
    }
}

fn dot(z: &DVector<f64>, beta: &DVector<f64>, block: Block, label: &str) -> Result<f64> {
    if z.len() != beta.len() {
        return Err(Error::Dimension(format!(
            "{label}: design row for {block} has {} entries, coefficients have {}",
            z.len(),
            beta.len()
        )));
    }
    let eta = z.dot(beta);
    if !eta.is_finite() {
        return Err(Error::NonFiniteParameter { block, row: 0 });
    }
    Ok(eta)
}

fn exp_checked(eta: f64, block: Block) -> Result<f64> {
    let v = eta.exp();
    if !v.is_finite() || v == 0.0 {
        return Err(Error::NonFiniteParameter { block, row: 0 });
    }
    Ok(v)
}

fn summarize(
    params: &ParamVector,
    profile: &UnitProfile,
    cov: Option<&Covariance<'_>>,
) -> Result<ProfileSummary> {
    let est = |value: f64, grad: Grad<'_>| Estimate {
        value,
        std_error: cov.map(|c| c.se(&grad.g)),
    };
    let alpha = exp_checked(dot(&profile.z_alpha, params.beta_alpha(), Block::Alpha, &profile.label)?, Block::Alpha)?;
    let delta = exp_checked(dot(&profile.z_delta, params.beta_delta(), Block::Delta, &profile.label)?, Block::Delta)?;
    let mut nat = Vec::with_capacity(profile.points.len());
    for pt in &profile.points {
        let (mu, mu_c) = logistic_pair(dot(&pt.z_mu, params.beta_mu(), Block::Mu, &pt.label)?);
        let theta = exp_checked(dot(&pt.z_theta, params.beta_theta(), Block::Theta, &pt.label)?, Block::Theta)?;
        let lambda = exp_checked(dot(&pt.z_lambda, params.beta_lambda(), Block::Lambda, &pt.label)?, Block::Lambda)?;
        nat.push(Nat { mu, mu_c, theta, lambda });
    }
    let (a, d) = (alpha, delta);

    let single = |block: Block, point: usize, value: f64, d_eta: f64| {
        let mut g = Grad::new(params, profile);
        g.add(block, point, d_eta);
        est(value, g)
    };

    let mut points = Vec::with_capacity(nat.len());
    for (h, n) in nat.iter().enumerate() {
        let (mu, l) = (n.mu, n.lambda);
        let m1 = mu * n.mu_c;
        let la = l * a;
        let l2ad = l * l * a * d;

        let mut g = Grad::new(params, profile);
        g.add(Block::Mu, h, m1 * la);
        g.add(Block::Lambda, h, mu * la);
        g.add(Block::Alpha, h, mu * la);
        let e_x = est(mu * la, g);

        let mut g = Grad::new(params, profile);
        g.add(Block::Lambda, h, la);
        g.add(Block::Alpha, h, la);
        let e_n = est(la, g);

        let var_n = var_n_estimate(params, profile, h, l, a, d, &est);

        let r = n.theta / (1.0 + n.theta);
        let vp = m1 * r;
        let mut g = Grad::new(params, profile);
        g.add(Block::Mu, h, m1 * (n.mu_c - mu) * r);
        g.add(Block::Theta, h, m1 * n.theta / (1.0 + n.theta).powi(2));
        let var_pi = est(vp, g);

        // Var(X) = A B + C with A = Var(pi), B = lambda^2 alpha (alpha + delta),
        // C = mu lambda alpha (1 + mu lambda delta)
        let bq = l * l * a * (a + d);
        let mut g = Grad::new(params, profile);
        g.add(Block::Mu, h, m1 * (n.mu_c - mu) * r * bq + m1 * la + 2.0 * mu * m1 * l2ad);
        g.add(Block::Theta, h, m1 * n.theta / (1.0 + n.theta).powi(2) * bq);
        g.add(Block::Lambda, h, vp * 2.0 * bq + mu * la + 2.0 * mu * mu * l2ad);
        g.add(Block::Alpha, h, vp * (2.0 * l * l * a * a + l2ad) + mu * la + mu * mu * l2ad);
        g.add(Block::Delta, h, vp * l2ad + mu * mu * l2ad);
        let var_x = est(vp * bq + mu * la + mu * mu * l2ad, g);

        let cxn = mu * la + mu * l2ad;
        let mut g = Grad::new(params, profile);
        g.add(Block::Mu, h, n.mu_c * cxn);
        g.add(Block::Lambda, h, mu * la + 2.0 * mu * l2ad);
        g.add(Block::Alpha, h, cxn);
        g.add(Block::Delta, h, mu * l2ad);
        let cov_xn = est(cxn, g);

        points.push(PointSummary {
            label: profile.points[h].label.clone(),
            mu: single(Block::Mu, h, mu, m1),
            theta: single(Block::Theta, h, n.theta, n.theta),
            lambda: single(Block::Lambda, h, l, l),
            var_pi,
            e_x,
            e_n,
            var_x,
            var_n,
            cov_xn,
        });
    }

    let k = nat.len();
    let mut cov_x = vec![Vec::with_capacity(k); k];
    let mut cov_n = vec![Vec::with_capacity(k); k];
    for h in 0..k {
        for j in 0..k {
            if h == j {
                cov_x[h].push(points[h].var_x);
                cov_n[h].push(points[h].var_n);
                continue;
            }
            let (nh, nj) = (&nat[h], &nat[j]);
            let cn = nh.lambda * nj.lambda * a * d;
            let mut g = Grad::new(params, profile);
            g.add(Block::Lambda, h, cn);
            g.add(Block::Lambda, j, cn);
            g.add(Block::Alpha, h, cn);
            g.add(Block::Delta, h, cn);
            cov_n[h].push(est(cn, g));

            let cx = nh.mu * nj.mu * cn;
            let mut g = Grad::new(params, profile);
            g.add(Block::Mu, h, nh.mu_c * cx);
            g.add(Block::Mu, j, nj.mu_c * cx);
            g.add(Block::Lambda, h, cx);
            g.add(Block::Lambda, j, cx);
            g.add(Block::Alpha, h, cx);
            g.add(Block::Delta, h, cx);
            cov_x[h].push(est(cx, g));
        }
    }

    let mut g = Grad::new(params, profile);
    g.add(Block::Alpha, 0, a * d);
    g.add(Block::Delta, 0, a * d);
    Ok(ProfileSummary {
        label: profile.label.clone(),
        alpha: single(Block::Alpha, 0, a, a),
        delta: single(Block::Delta, 0, d, d),
        var_tau: est(a * d, g),
        points,
        cov_x,
        cov_n,
    })
}

fn var_n_estimate(
    params: &ParamVector,
    profile: &UnitProfile,
    h: usize,
    l: f64,
    a: f64,
    d: f64,
    est: &dyn Fn(f64, Grad<'_>) -> Estimate,
) -> Estimate {
    let la = l * a;
    let l2ad = l * l * a * d;
    let mut g = Grad::new(params, profile);
    g.add(Block::Lambda, h, la + 2.0 * l2ad);
    g.add(Block::Alpha, h, la + l2ad);
    g.add(Block::Delta, h, l2ad);
    est(la + l2ad, g)
}

/// Summaries at fixed coefficients, without standard errors.
pub fn predict_at(params: &ParamVector, request: &PredictionRequest) -> Result<Vec<ProfileSummary>> {
    request
        .profiles
        .iter()
        .map(|p| summarize(params, p, None))
        .collect()
}

/// Summaries at the fitted coefficients with delta-method standard errors.
pub fn predict_summaries(fit: &ModelFit, request: &PredictionRequest) -> Result<Vec<ProfileSummary>> {
    for (name, comp) in [("beta-binomial", &fit.bb), ("gamma-Poisson", &fit.gp)] {
        if !comp.converged {
            return Err(Error::NotConverged(format!(
                "{name} fit stopped after {} iterations with gradient max-norm {:.3e}",
                comp.iterations, comp.gradient_max
            )));
        }
    }
    let params = fit.estimates();
    let cov = Covariance { fit };
    request
        .profiles
        .iter()
        .map(|p| summarize(&params, p, Some(&cov)))
        .collect()
}

/// A request covering every distinct unit of a design set, each unit's
/// conditions labelled by `conditions`.
pub fn unit_profiles(
    designs: &crate::model::DesignSet,
    conditions: &[String],
    units: &[usize],
) -> Result<PredictionRequest> {
    let p = designs.p();
    if conditions.len() != p {
        return Err(Error::Dimension(format!("{} condition labels for p = {p}", conditions.len())));
    }
    let row = |z: &DMatrix<f64>, r: usize| z.row(r).transpose();
    let mut profiles = Vec::with_capacity(units.len());
    for &g in units {
        if g >= designs.m() {
            return Err(Error::Dimension(format!("unit index {g} out of range")));
        }
        let points = (0..p)
            .map(|h| PredictionPoint {
                label: conditions[h].clone(),
                z_mu: row(designs.z_mu(), g * p + h),
                z_theta: row(designs.z_theta(), g * p + h),
                z_lambda: row(designs.z_lambda(), g * p + h),
            })
            .collect();
        profiles.push(UnitProfile {
            label: format!("unit {g}"),
            z_alpha: row(designs.z_alpha(), g),
            z_delta: row(designs.z_delta(), g),
            points,
        });
    }
    Ok(PredictionRequest { profiles })
}
