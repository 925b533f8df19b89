//! Fixtures shared by the integration tests: the motor-task study layout
//! (three disease stages by two hands per unit, four session/sequence
//! conditions) and the published final-model coefficients.

#![allow(dead_code)]

use std::collections::BTreeMap;

use bbgp::model::{CovariateTable, DesignSet, Factor, ModelFormula, ParamVector, Scope, Term};

pub const STAGES: [&str; 3] = ["0", "1", "2"];
pub const HANDS: [&str; 2] = ["P", "N"];
/// Session and sequence of each condition, in the global condition order.
pub const CONDITIONS: [(&str, &str); 4] = [("B", "A"), ("B", "C"), ("F", "A"), ("F", "C")];

pub const BETA_MU: [f64; 4] = [1.86, -1.35, 1.38, -1.79];
pub const BETA_THETA: [f64; 6] = [-1.07, -2.98, 1.31, 1.66, 2.78, -1.49];
pub const BETA_LAMBDA: [f64; 5] = [1.68, -0.38, -0.71, 0.52, -0.22];
pub const BETA_ALPHA: [f64; 1] = [1.30];
pub const BETA_DELTA: [f64; 1] = [-1.32];

fn factor(name: &str, levels: &[&str], scope: Scope) -> Factor {
    Factor {
        name: name.into(),
        levels: levels.iter().map(|s| s.to_string()).collect(),
        reference: levels[0].into(),
        scope,
    }
}

pub fn factors() -> Vec<Factor> {
    vec![
        factor("stage", &STAGES, Scope::Unit),
        factor("hand", &HANDS, Scope::Unit),
        factor("session", &["B", "F"], Scope::Condition),
        factor("sequence", &["A", "C"], Scope::Condition),
    ]
}

fn terms(list: &[&str]) -> Vec<Term> {
    list.iter().map(|t| Term::parse(t).unwrap()).collect()
}

/// The final model: 4 + 6 + 5 + 1 + 1 = 17 coefficients.
pub fn final_formula() -> ModelFormula {
    final_formula_with_lambda(&["stage", "session", "session*sequence"])
}

pub fn final_formula_with_lambda(lambda: &[&str]) -> ModelFormula {
    ModelFormula::new(
        factors(),
        [
            terms(&["stage[2]", "session", "session*sequence"]),
            terms(&["stage", "stage[1]*session", "stage[1]*hand", "session*hand"]),
            terms(lambda),
            Vec::new(),
            Vec::new(),
        ],
    )
    .unwrap()
}

/// Unit `g` belongs to stage/hand group `g mod 6`.
pub fn unit_group(g: usize) -> (&'static str, &'static str) {
    let k = g % 6;
    (STAGES[k / 2], HANDS[k % 2])
}

pub fn covariates(m: usize) -> CovariateTable {
    let mut values = Vec::with_capacity(m * 4);
    for g in 0..m {
        let (stage, hand) = unit_group(g);
        for (session, sequence) in CONDITIONS {
            values.push(vec![stage.into(), hand.into(), session.into(), sequence.into()]);
        }
    }
    CovariateTable {
        names: ["stage", "hand", "session", "sequence"].map(String::from).to_vec(),
        values,
    }
}

pub fn designs(m: usize) -> DesignSet {
    final_formula().build(&covariates(m), m, 4).unwrap()
}

pub fn published() -> ParamVector {
    ParamVector::from_slices(&BETA_MU, &BETA_THETA, &BETA_LAMBDA, &BETA_ALPHA, &BETA_DELTA)
}

pub fn levels(stage: &str, hand: &str, session: &str, sequence: &str) -> BTreeMap<String, String> {
    [("stage", stage), ("hand", hand), ("session", session), ("sequence", sequence)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Fourth-order central difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: &dyn Fn(&nalgebra::DVector<f64>) -> f64, x: &nalgebra::DVector<f64>, i: usize, h: f64) -> f64 {
    let at = |t: f64| {
        let mut y = x.clone();
        y[i] += t;
        f(&y)
    };
    (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
}

/// Random data and designs with an intercept in every block, plus
/// coefficients keeping all natural parameters moderate.
pub fn random_problem<R: rand::Rng>(rng: &mut R) -> (bbgp::RepeatedCountData, DesignSet, ParamVector) {
    use nalgebra::{DMatrix, DVector};
    let m = rng.random_range(2..7);
    let p = rng.random_range(1..5);
    let counts: Vec<Vec<(u64, u64)>> = (0..m)
        .map(|_| {
            (0..p)
                .map(|_| {
                    let n = rng.random_range(0..16u64);
                    (rng.random_range(0..=n), n)
                })
                .collect()
        })
        .collect();
    let data = bbgp::RepeatedCountData::from_counts(&counts).unwrap();
    let mut mat = |rows: usize| {
        let q = rng.random_range(1..4);
        DMatrix::from_fn(rows, q, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) })
    };
    let d = DesignSet::new(m, p, mat(m * p), mat(m * p), mat(m * p), mat(m), mat(m)).unwrap();
    let mut coef = |q: usize| DVector::from_fn(q, |_, _| rng.random_range(-0.6..0.6));
    let params = ParamVector::new(
        coef(d.z_mu().ncols()),
        coef(d.z_theta().ncols()),
        coef(d.z_lambda().ncols()),
        coef(d.z_alpha().ncols()),
        coef(d.z_delta().ncols()),
    );
    (data, d, params)
}

/// Probability of `n` under the gamma-Poisson mixture, by integrating the
/// Poisson product against the gamma density. With `tau = e^s` the integrand
/// is smooth on the real line and the trapezoid rule converges geometrically.
/// The upper tail beyond `tau = e^8` is negligible for the means used here.
pub fn gp_mixture_by_quadrature(n: &[u64], lambda: &[f64], alpha: f64, delta: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let shape = alpha / delta;
    let log_f = |s: f64| {
        let tau = s.exp();
        let mut v = shape * s - tau / delta - shape * delta.ln() - ln_gamma(shape);
        for (&k, &l) in n.iter().zip(lambda) {
            let rate = l * tau;
            v += k as f64 * rate.ln() - rate - ln_gamma(k as f64 + 1.0);
        }
        v
    };
    let step = 1e-3;
    let (lo, hi) = (-80.0, 8.0);
    let count = ((hi - lo) / step) as usize;
    let body = (0..=count).map(|i| log_f(lo + i as f64 * step).exp()).sum::<f64>() * step;
    // below `lo` the integrand is exp((shape + sum n) s) up to a vanishing
    // factor, so the left tail integrates in closed form
    let rate = shape + n.iter().sum::<u64>() as f64;
    body + log_f(lo).exp() / rate
}

/// One moment formula compared against its Monte Carlo estimate.
pub struct MomentCheck {
    pub name: String,
    pub formula: f64,
    pub empirical: f64,
    pub se: f64,
}

impl MomentCheck {
    pub fn z(&self) -> f64 {
        if self.se == 0.0 {
            if self.formula == self.empirical { 0.0 } else { f64::INFINITY }
        } else {
            (self.empirical - self.formula) / self.se
        }
    }
}

/// Running sums for a covariance estimate and its standard error.
#[derive(Default, Clone)]
struct Pair {
    n: f64,
    sx: f64,
    sy: f64,
    sxy: f64,
    sx2y2: f64,
    sx2y: f64,
    sxy2: f64,
    sx2: f64,
    sy2: f64,
}

impl Pair {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxy += x * y;
        self.sx2y2 += x * x * y * y;
        self.sx2y += x * x * y;
        self.sxy2 += x * y * y;
        self.sx2 += x * x;
        self.sy2 += y * y;
    }

    fn mean_x(&self) -> (f64, f64) {
        let m = self.sx / self.n;
        let v = self.sx2 / self.n - m * m;
        (m, (v / self.n).sqrt())
    }

    /// Sample covariance and the standard error of the mean of
    /// `(x - mx)(y - my)`.
    fn cov(&self) -> (f64, f64) {
        let n = self.n;
        let (mx, my) = (self.sx / n, self.sy / n);
        let c = self.sxy / n - mx * my;
        // E[((x-mx)(y-my))^2] expanded in raw sums
        let e2 = self.sx2y2 / n - 2.0 * my * self.sx2y / n - 2.0 * mx * self.sxy2 / n
            + my * my * self.sx2 / n
            + mx * mx * self.sy2 / n
            + 4.0 * mx * my * self.sxy / n
            - 3.0 * mx * mx * my * my;
        (c, ((e2 - c * c).max(0.0) / n).sqrt())
    }
}

/// Draws `draws` independent units at the given natural parameters and
/// compares all moment formulas with their empirical counterparts.
pub fn moment_checks(
    mu: &[f64],
    theta: &[f64],
    lambda: &[f64],
    alpha: f64,
    delta: f64,
    draws: usize,
    seed: u64,
) -> Vec<MomentCheck> {
    use bbgp::dist::compute_moments;
    use bbgp::sim::{draw_unit, unit_rng};
    let p = mu.len();
    let nat = bbgp::NaturalParams {
        m: 1,
        p,
        mu: mu.to_vec(),
        theta: theta.to_vec(),
        lambda: lambda.to_vec(),
        alpha: vec![alpha],
        delta: vec![delta],
    };
    let mo = compute_moments(&nat);
    let mut tau = Pair::default();
    let mut nn = vec![vec![Pair::default(); p]; p];
    let mut xx = vec![vec![Pair::default(); p]; p];
    let mut pi = vec![Pair::default(); p];
    let mut xn = vec![Pair::default(); p];
    let mut rng = unit_rng(seed, 0, 0);
    for _ in 0..draws {
        let d = draw_unit(&mut rng, mu, theta, lambda, alpha, delta);
        tau.push(d.tau, d.tau);
        for h in 0..p {
            pi[h].push(d.pi[h], d.pi[h]);
            xn[h].push(d.x[h] as f64, d.n[h] as f64);
            for k in h..p {
                nn[h][k].push(d.n[h] as f64, d.n[k] as f64);
                xx[h][k].push(d.x[h] as f64, d.x[k] as f64);
            }
        }
    }
    let mut out = Vec::new();
    let mut add = |name: String, formula: f64, (empirical, se): (f64, f64)| {
        out.push(MomentCheck { name, formula, empirical, se })
    };
    add("E(tau)".into(), mo.e_tau[0], tau.mean_x());
    add("Var(tau)".into(), mo.var_tau[0], tau.cov());
    for h in 0..p {
        add(format!("E(N{h})"), mo.e_n[h], nn[h][h].mean_x());
        add(format!("Var(N{h})"), mo.var_n[h], nn[h][h].cov());
        add(format!("E(pi{h})"), mo.e_pi[h], pi[h].mean_x());
        add(format!("Var(pi{h})"), mo.var_pi[h], pi[h].cov());
        add(format!("E(X{h})"), mo.e_x[h], xx[h][h].mean_x());
        add(format!("Var(X{h})"), mo.var_x[h], xx[h][h].cov());
        add(format!("Cov(X{h},N{h})"), mo.cov_xn[h], xn[h].cov());
        for k in h + 1..p {
            add(format!("Cov(N{h},N{k})"), mo.cov_n[0][(h, k)], nn[h][k].cov());
            add(format!("Cov(X{h},X{k})"), mo.cov_x[0][(h, k)], xx[h][k].cov());
        }
    }
    out
}
