//! Fit and prediction reports: a JSON document plus a text rendering.

use bbgp::error::Block;
use bbgp::infer::{Component, Estimate, FitResult, IterationRecord, ModelFit, ProfileSummary};
use bbgp::model::ColumnMeta;
use bbgp::DesignSet;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output::{fmt_estimate, fmt_se, fmt_value, table};
use crate::spec::ModelSpecFile;

/// Report name of a coefficient, e.g. `beta_mu0`, `beta_lambdaF`,
/// `beta_theta(1*N)`.
pub fn parameter_name(block: Block, column: &str) -> String {
    if column.chars().all(|c| c.is_ascii_alphanumeric()) {
        format!("beta_{}{column}", block.name())
    } else {
        format!("beta_{}({column})", block.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub block: String,
    pub column: String,
    pub parameter: String,
    pub description: String,
    pub estimate: f64,
    /// Absent when the coefficient is not identified.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub loglik: f64,
    pub step_norm: f64,
    pub gradient_max: f64,
    pub halvings: usize,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub name: String,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max: f64,
    pub loglik: f64,
    pub loglik_full: f64,
    pub coefficients: Vec<CoefficientRow>,
    pub covariance: Vec<Vec<f64>>,
    /// Basis vectors of directions along which the likelihood is flat.
    pub null_space: Vec<Vec<f64>>,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub path: String,
    pub units: usize,
    pub conditions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelSpecFile,
    pub data: DataSummary,
    pub converged: bool,
    pub n_params: usize,
    pub loglik_full: f64,
    pub aic: f64,
    pub bic: f64,
    pub components: Vec<ComponentReport>,
}

fn component_name(c: Component) -> &'static str {
    match c {
        Component::BetaBinomial => "beta-binomial",
        Component::GammaPoisson => "gamma-Poisson",
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn component_report(c: Component, r: &FitResult, designs: &DesignSet) -> ComponentReport {
    let mut coefficients = Vec::new();
    let mut i = 0;
    for &b in c.blocks() {
        for col in designs.columns(b) {
            let se = r.std_errors[i];
            coefficients.push(CoefficientRow {
                block: b.name().into(),
                column: col.name.clone(),
                parameter: parameter_name(b, &col.name),
                description: col.description.clone(),
                estimate: r.coefficients[i],
                std_error: if se.is_nan() { None } else { Some(se) },
            });
            i += 1;
        }
    }
    ComponentReport {
        name: component_name(c).into(),
        converged: r.converged,
        iterations: r.iterations,
        gradient_max: r.gradient_max,
        loglik: r.loglik,
        loglik_full: r.loglik_full,
        coefficients,
        covariance: rows(&r.covariance),
        null_space: r.null_space.column_iter().map(|c| c.iter().copied().collect()).collect(),
        trace: r
            .trace
            .iter()
            .map(|t| TraceRow {
                loglik: t.loglik,
                step_norm: t.step_norm,
                gradient_max: t.gradient_max,
                halvings: t.halvings,
                ridge: t.ridge,
            })
            .collect(),
    }
}

impl FitReport {
    pub fn new(model: &ModelSpecFile, data: DataSummary, fit: &ModelFit, designs: &DesignSet) -> Self {
        let mut model = model.clone();
        model.coefficients.clear();
        model.layout = None;
        Self {
            model,
            data,
            converged: fit.converged(),
            n_params: fit.n_params,
            loglik_full: fit.loglik_full,
            aic: fit.aic,
            bic: fit.bic,
            components: vec![
                component_report(Component::BetaBinomial, &fit.bb, designs),
                component_report(Component::GammaPoisson, &fit.gp, designs),
            ],
        }
    }

    /// Rebuilds the fitted model from the report.
    pub fn to_model_fit(&self) -> Result<ModelFit> {
        let bad = |m: &str| CliError::Spec(format!("malformed fit report: {m}"));
        if self.components.len() != 2 {
            return Err(bad("expected two components"));
        }
        let mut parts = Vec::with_capacity(2);
        for (c, rep) in [Component::BetaBinomial, Component::GammaPoisson].into_iter().zip(&self.components) {
            let k = rep.coefficients.len();
            let mut layout = Vec::new();
            for &b in c.blocks() {
                let len = rep.coefficients.iter().filter(|r| r.block == b.name()).count();
                layout.push((b, len));
            }
            if layout.iter().map(|l| l.1).sum::<usize>() != k {
                return Err(bad("coefficient blocks do not match the component"));
            }
            if rep.covariance.len() != k || rep.covariance.iter().any(|r| r.len() != k) {
                return Err(bad("covariance has the wrong shape"));
            }
            if rep.null_space.iter().any(|v| v.len() != k) {
                return Err(bad("null-space vectors have the wrong length"));
            }
            let null_space = if rep.null_space.is_empty() {
                DMatrix::zeros(k, 0)
            } else {
                DMatrix::from_columns(&rep.null_space.iter().map(|v| DVector::from_vec(v.clone())).collect::<Vec<_>>())
            };
            let std_errors = DVector::from_iterator(k, rep.coefficients.iter().map(|r| r.std_error.unwrap_or(f64::NAN)));
            parts.push(FitResult {
                layout,
                coefficients: DVector::from_iterator(k, rep.coefficients.iter().map(|r| r.estimate)),
                covariance: DMatrix::from_fn(k, k, |i, j| rep.covariance[i][j]),
                non_identified: (0..k).filter(|&i| rep.coefficients[i].std_error.is_none()).collect(),
                std_errors,
                loglik: rep.loglik,
                loglik_full: rep.loglik_full,
                aic: f64::NAN,
                bic: f64::NAN,
                iterations: rep.iterations,
                converged: rep.converged,
                gradient_max: rep.gradient_max,
                trace: rep
                    .trace
                    .iter()
                    .map(|t| IterationRecord {
                        loglik: t.loglik,
                        step_norm: t.step_norm,
                        gradient_max: t.gradient_max,
                        halvings: t.halvings,
                        ridge: t.ridge,
                    })
                    .collect(),
                null_space,
                sample_size: self.data.units,
            });
        }
        let gp = parts.pop().expect("two parts");
        let bb = parts.pop().expect("two parts");
        Ok(ModelFit::from_components(bb, gp))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("Beta-binomial/gamma-Poisson regression\n");
        s.push_str(&format!(
            "data: {} ({} units; conditions {})\n",
            self.data.path,
            self.data.units,
            self.data.conditions.join(", ")
        ));
        for c in &self.components {
            s.push('\n');
            let status = if c.converged { "converged" } else { "NOT CONVERGED" };
            s.push_str(&format!(
                "{} component: {status} after {} iterations, max |gradient| {:.3e}\n",
                capitalize(&c.name),
                c.iterations,
                c.gradient_max
            ));
            let header = ["Parameter", "Related to", "Estimate", "Standard error"].map(String::from);
            let body: Vec<Vec<String>> = c
                .coefficients
                .iter()
                .map(|r| vec![r.parameter.clone(), r.description.clone(), fmt_value(r.estimate), fmt_se(r.std_error.or(Some(f64::NAN)))])
                .collect();
            s.push_str(&table(&header, &body));
            let flat: Vec<&str> = c
                .coefficients
                .iter()
                .filter(|r| r.std_error.is_none())
                .map(|r| r.parameter.as_str())
                .collect();
            if !flat.is_empty() {
                s.push_str(&format!(
                    "  n.i.: {} are not separately identified (the likelihood is flat along {} direction(s));\n  \
                     predicted moments remain estimable\n",
                    flat.join(", "),
                    c.null_space.len()
                ));
            }
            s.push_str(&format!(
                "  log-likelihood: kernel {:.4}, full {:.4}\n",
                c.loglik, c.loglik_full
            ));
        }
        s.push_str(&format!(
            "\nJoint model: {} parameters, log-likelihood {:.4}, AIC {:.2}, BIC {:.2}\n",
            self.n_params, self.loglik_full, self.aic, self.bic
        ));
        s.push_str("\nConvergence trace\n");
        let header = ["Component", "Iter", "Log-likelihood", "Step norm", "Max |gradient|", "Halvings", "Ridge"].map(String::from);
        let mut body = Vec::new();
        for c in &self.components {
            for (i, t) in c.trace.iter().enumerate() {
                body.push(vec![
                    c.name.clone(),
                    (i + 1).to_string(),
                    format!("{:.8}", t.loglik),
                    format!("{:.3e}", t.step_norm),
                    format!("{:.3e}", t.gradient_max),
                    t.halvings.to_string(),
                    format!("{:.1e}", t.ridge),
                ]);
            }
        }
        s.push_str(&table(&header, &body));
        s
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Column metadata of every coefficient in parameter order.
pub fn parameter_list(designs: &DesignSet) -> Vec<(Block, ColumnMeta)> {
    Block::ALL
        .iter()
        .flat_map(|&b| designs.columns(b).iter().map(move |c| (b, c.clone())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDoc {
    pub value: f64,
    pub std_error: Option<f64>,
    /// False when the standard error is undefined because the quantity
    /// depends on a non-identified direction.
    pub identified: bool,
}

impl From<&Estimate> for EstimateDoc {
    fn from(e: &Estimate) -> Self {
        let se = e.std_error.filter(|s| !s.is_nan());
        Self {
            value: e.value,
            std_error: se,
            identified: !e.std_error.is_some_and(f64::is_nan),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDoc {
    pub label: String,
    pub mu: EstimateDoc,
    pub theta: EstimateDoc,
    pub lambda: EstimateDoc,
    pub var_pi: EstimateDoc,
    pub e_x: EstimateDoc,
    pub e_n: EstimateDoc,
    pub var_x: EstimateDoc,
    pub var_n: EstimateDoc,
    pub cov_xn: EstimateDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDoc {
    pub label: String,
    pub alpha: EstimateDoc,
    pub delta: EstimateDoc,
    pub var_tau: EstimateDoc,
    pub points: Vec<PointDoc>,
    pub cov_x: Vec<Vec<EstimateDoc>>,
    pub cov_n: Vec<Vec<EstimateDoc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub profiles: Vec<ProfileDoc>,
}

impl PredictReport {
    pub fn new(summaries: &[ProfileSummary]) -> Self {
        let m = |rows: &Vec<Vec<Estimate>>| rows.iter().map(|r| r.iter().map(EstimateDoc::from).collect()).collect();
        Self {
            profiles: summaries
                .iter()
                .map(|s| ProfileDoc {
                    label: s.label.clone(),
                    alpha: (&s.alpha).into(),
                    delta: (&s.delta).into(),
                    var_tau: (&s.var_tau).into(),
                    points: s
                        .points
                        .iter()
                        .map(|p| PointDoc {
                            label: p.label.clone(),
                            mu: (&p.mu).into(),
                            theta: (&p.theta).into(),
                            lambda: (&p.lambda).into(),
                            var_pi: (&p.var_pi).into(),
                            e_x: (&p.e_x).into(),
                            e_n: (&p.e_n).into(),
                            var_x: (&p.var_x).into(),
                            var_n: (&p.var_n).into(),
                            cov_xn: (&p.cov_xn).into(),
                        })
                        .collect(),
                    cov_x: m(&s.cov_x),
                    cov_n: m(&s.cov_n),
                })
                .collect(),
        }
    }
}

/// Text tables of natural-scale summaries, estimates with standard errors
/// in parentheses.
pub fn render_predictions(summaries: &[ProfileSummary]) -> String {
    let mut s = String::new();
    for p in summaries {
        s.push_str(&format!("{}\n", p.label));
        s.push_str(&format!(
            "  alpha {}   delta {}   Var(tau) {}\n",
            fmt_estimate(&p.alpha),
            fmt_estimate(&p.delta),
            fmt_estimate(&p.var_tau)
        ));
        s.push_str("\n  Expected probabilities, dispersions and rates\n");
        let header = ["Condition", "E(pi) = mu", "theta", "lambda"].map(String::from);
        let body: Vec<Vec<String>> = p
            .points
            .iter()
            .map(|q| vec![q.label.clone(), fmt_estimate(&q.mu), fmt_estimate(&q.theta), fmt_estimate(&q.lambda)])
            .collect();
        s.push_str(&table(&header, &body));
        s.push_str("\n  Expected successes and trials\n");
        let header = ["Condition", "Successes", "Trials", "Var(X)", "Var(N)", "Cov(X, N)"].map(String::from);
        let body: Vec<Vec<String>> = p
            .points
            .iter()
            .map(|q| {
                vec![
                    q.label.clone(),
                    fmt_estimate(&q.e_x),
                    fmt_estimate(&q.e_n),
                    fmt_estimate(&q.var_x),
                    fmt_estimate(&q.var_n),
                    fmt_estimate(&q.cov_xn),
                ]
            })
            .collect();
        s.push_str(&table(&header, &body));
        for (title, m) in [("Covariance of successes", &p.cov_x), ("Covariance of trials", &p.cov_n)] {
            s.push_str(&format!("\n  {title}\n"));
            let mut header = vec![String::new()];
            header.extend(p.points.iter().map(|q| q.label.clone()));
            let body: Vec<Vec<String>> = m
                .iter()
                .enumerate()
                .map(|(h, row)| {
                    let mut r = vec![p.points[h].label.clone()];
                    r.extend(row.iter().enumerate().map(|(k, e)| if k <= h { fmt_estimate(e) } else { String::new() }));
                    r
                })
                .collect();
            s.push_str(&table(&header, &body));
        }
        s.push('\n');
    }
    s
}
