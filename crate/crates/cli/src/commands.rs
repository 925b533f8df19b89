use std::collections::BTreeMap;
use std::path::Path;

use bbgp::error::Block;
use bbgp::infer::{lr_test, predict_summaries, LrTestResult, PredictionPoint, PredictionRequest, UnitProfile};
use bbgp::model::{evaluate_links, CovariateTable, ModelFormula, Observation, Scope, UnitRecord};
use bbgp::sim::sample_counts;
use bbgp::{fit, FitOptions, ModelFit, RepeatedCountData};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, save_csv};
use crate::error::{CliError, Result};
use crate::output::emit;
use crate::report::{render_predictions, DataSummary, FitReport, PredictReport};
use crate::spec::ModelSpecFile;

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    NotConverged,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::NotConverged => 1,
        }
    }
}

/// Covariates of a simulated layout: units cycle through the groups and
/// each unit is observed under every listed condition.
fn layout_covariates(spec: &ModelSpecFile, units: usize) -> Result<(Vec<String>, CovariateTable)> {
    let layout = spec
        .layout
        .as_ref()
        .ok_or_else(|| CliError::Spec("simulation needs a [layout] section".into()))?;
    let conditions: Vec<(String, BTreeMap<String, String>)> = if layout.conditions.is_empty() {
        vec![("1".into(), BTreeMap::new())]
    } else {
        layout.conditions.iter().map(|c| (c.id.clone(), c.levels.clone())).collect()
    };
    let groups = if layout.groups.is_empty() {
        vec![BTreeMap::new()]
    } else {
        layout.groups.clone()
    };
    let names = spec.factor_names();
    let mut values = Vec::with_capacity(units * conditions.len());
    for g in 0..units {
        let group = &groups[g % groups.len()];
        for (id, levels) in &conditions {
            let row = names
                .iter()
                .map(|f| {
                    levels.get(f).or_else(|| group.get(f)).cloned().ok_or_else(|| {
                        CliError::Spec(format!("layout gives no level of `{f}` for condition `{id}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
    }
    Ok((conditions.into_iter().map(|c| c.0).collect(), CovariateTable { names, values }))
}

pub fn simulate(spec_path: &Path, units: Option<usize>, seed: Option<u64>, out: &Path) -> Result<Status> {
    let spec = ModelSpecFile::load(spec_path)?;
    let formula = spec.formula()?;
    let params = spec.coefficients(&formula)?;
    let m = units
        .or(spec.layout.as_ref().and_then(|l| l.units))
        .ok_or_else(|| CliError::Spec("number of units not given (--units or layout.units)".into()))?;
    if m == 0 {
        return Err(CliError::Spec("number of units must be positive".into()));
    }
    let (conditions, covariates) = layout_covariates(&spec, m)?;
    let p = conditions.len();
    let designs = formula.build(&covariates, m, p)?;
    let natural = evaluate_links(&params, &designs)?;
    let seed = seed.or(spec.fit.seed).unwrap_or(1);
    let counts = sample_counts(&natural, seed, 0);
    let width = m.to_string().len();
    let records = counts
        .into_iter()
        .enumerate()
        .map(|(g, unit)| UnitRecord {
            unit_id: format!("u{:0width$}", g + 1),
            observations: unit
                .into_iter()
                .zip(&conditions)
                .map(|((x, n), c)| Observation {
                    x,
                    n,
                    condition_id: c.clone(),
                })
                .collect(),
        })
        .collect();
    let data = RepeatedCountData::new(conditions, records)?;
    save_csv(out, &data, &covariates)?;
    Ok(Status::Success)
}

struct Loaded {
    spec: ModelSpecFile,
    data: RepeatedCountData,
    covariates: CovariateTable,
}

fn load(data_path: &Path, spec_path: &Path) -> Result<Loaded> {
    let spec = ModelSpecFile::load(spec_path)?;
    let (data, covariates) = load_csv(data_path, &spec.unit_factors())?;
    Ok(Loaded { spec, data, covariates })
}

fn fit_loaded(l: &Loaded, options: &FitOptions) -> Result<(ModelFit, bbgp::DesignSet)> {
    let designs = l.spec.formula()?.build(&l.covariates, l.data.m(), l.data.p())?;
    Ok((fit(&l.data, &designs, options)?, designs))
}

#[derive(Debug, Clone, Default)]
pub struct FitFlags {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub staged: bool,
}

pub fn fit_cmd(data_path: &Path, spec_path: &Path, flags: &FitFlags, out: Option<&Path>) -> Result<Status> {
    let loaded = load(data_path, spec_path)?;
    let options = loaded.spec.fit_options(flags.tol, flags.max_iter, flags.staged);
    let (model, designs) = fit_loaded(&loaded, &options)?;
    let summary = DataSummary {
        path: data_path.display().to_string(),
        units: loaded.data.m(),
        conditions: loaded.data.conditions().to_vec(),
    };
    let report = FitReport::new(&loaded.spec, summary, &model, &designs);
    emit(out, &report, &report.render())?;
    if report.converged {
        Ok(Status::Success)
    } else {
        eprintln!("warning: the fit did not converge; see the convergence trace");
        Ok(Status::NotConverged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrReport {
    pub full_spec: String,
    pub reduced_spec: String,
    pub lr_stat: f64,
    pub df: usize,
    pub p_value: f64,
    pub loglik_full: f64,
    pub loglik_reduced: f64,
    pub clamped: bool,
    pub converged: bool,
}

fn render_lr(r: &LrTestResult, full: &Path, reduced: &Path) -> String {
    let mut s = format!(
        "Likelihood-ratio test\n  full:    {}\n  reduced: {}\n",
        full.display(),
        reduced.display()
    );
    s.push_str(&format!(
        "  log-likelihood kernels: full {:.6}, reduced {:.6}\n",
        r.loglik_full, r.loglik_reduced
    ));
    s.push_str(&format!("  LR = {:.4}, df = {}, p={:.3}\n", r.lr_stat, r.df, r.p_value));
    s.push_str(&format!("  LR = {:e}, p = {:e}\n", r.lr_stat, r.p_value));
    if r.clamped {
        s.push_str("  note: a slightly negative statistic was set to zero\n");
    }
    s
}

pub fn lrtest_cmd(
    data_path: &Path,
    full_path: &Path,
    reduced_path: &Path,
    flags: &FitFlags,
    out: Option<&Path>,
) -> Result<Status> {
    let full = load(data_path, full_path)?;
    let reduced_spec = ModelSpecFile::load(reduced_path)?;
    let reduced = Loaded {
        data: full.data.clone(),
        covariates: full.covariates.clone(),
        spec: reduced_spec,
    };
    let (fit_full, _) = fit_loaded(&full, &full.spec.fit_options(flags.tol, flags.max_iter, flags.staged))?;
    let (fit_red, _) = fit_loaded(&reduced, &reduced.spec.fit_options(flags.tol, flags.max_iter, flags.staged))?;
    let converged = fit_full.converged() && fit_red.converged();
    if !converged {
        return Err(CliError::NotConverged(
            "a model did not converge; the likelihood-ratio test is not valid".into(),
        ));
    }
    let r = lr_test(&fit_full, &fit_red)?;
    let report = LrReport {
        full_spec: full_path.display().to_string(),
        reduced_spec: reduced_path.display().to_string(),
        lr_stat: r.lr_stat,
        df: r.df,
        p_value: r.p_value,
        loglik_full: r.loglik_full,
        loglik_reduced: r.loglik_reduced,
        clamped: r.clamped,
        converged,
    };
    emit(out, &report, &render_lr(&r, full_path, reduced_path))?;
    Ok(Status::Success)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PointSpec {
    label: Option<String>,
    #[serde(default)]
    levels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProfileSpec {
    label: Option<String>,
    #[serde(default)]
    levels: BTreeMap<String, String>,
    #[serde(default, rename = "point")]
    points: Vec<PointSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContrastFile {
    #[serde(default, rename = "profile")]
    profiles: Vec<ProfileSpec>,
}

fn describe(levels: &BTreeMap<String, String>, order: &[String]) -> String {
    let parts: Vec<String> = order
        .iter()
        .filter_map(|f| levels.get(f).map(|l| format!("{f}={l}")))
        .collect();
    if parts.is_empty() {
        "all".into()
    } else {
        parts.join(", ")
    }
}

/// Every combination of the levels of the factors with the given scope.
fn combinations(formula: &ModelFormula, scope: Scope) -> Vec<BTreeMap<String, String>> {
    let mut out = vec![BTreeMap::new()];
    for f in formula.factors().iter().filter(|f| f.scope == scope) {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                f.levels.iter().map(move |l| {
                    let mut next = prefix.clone();
                    next.insert(f.name.clone(), l.clone());
                    next
                })
            })
            .collect();
    }
    out
}

fn build_request(formula: &ModelFormula, contrast: Option<ContrastFile>) -> Result<PredictionRequest> {
    let order: Vec<String> = formula.factors().iter().map(|f| f.name.clone()).collect();
    let profiles = match contrast {
        Some(c) => c.profiles,
        None => {
            let points: Vec<PointSpec> = combinations(formula, Scope::Condition)
                .into_iter()
                .map(|levels| PointSpec { label: None, levels })
                .collect();
            combinations(formula, Scope::Unit)
                .into_iter()
                .map(|levels| ProfileSpec {
                    label: None,
                    levels,
                    points: points.clone(),
                })
                .collect()
        }
    };
    if profiles.is_empty() {
        return Err(CliError::Spec("contrast file lists no profiles".into()));
    }
    let mut request = PredictionRequest::default();
    for prof in profiles {
        if prof.points.is_empty() {
            return Err(CliError::Spec("every profile needs at least one point".into()));
        }
        let row = |block: Block, levels: &BTreeMap<String, String>| formula.design_row(block, levels);
        let mut unit_levels = prof.levels.clone();
        // per-unit rows only read unit-level factors; fill the others with
        // their reference levels so the lookup is complete
        for f in formula.factors() {
            unit_levels.entry(f.name.clone()).or_insert_with(|| f.reference.clone());
        }
        let mut points = Vec::with_capacity(prof.points.len());
        for pt in &prof.points {
            let mut levels = prof.levels.clone();
            levels.extend(pt.levels.clone());
            points.push(PredictionPoint {
                label: pt.label.clone().unwrap_or_else(|| describe(&pt.levels, &order)),
                z_mu: row(Block::Mu, &levels)?,
                z_theta: row(Block::Theta, &levels)?,
                z_lambda: row(Block::Lambda, &levels)?,
            });
        }
        request.profiles.push(UnitProfile {
            label: prof.label.clone().unwrap_or_else(|| describe(&prof.levels, &order)),
            z_alpha: row(Block::Alpha, &unit_levels)?,
            z_delta: row(Block::Delta, &unit_levels)?,
            points,
        });
    }
    Ok(request)
}

pub fn predict_cmd(fit_path: &Path, contrast_path: Option<&Path>, out: Option<&Path>) -> Result<Status> {
    let text = std::fs::read_to_string(fit_path).map_err(|e| CliError::io(fit_path, e))?;
    let report: FitReport = serde_json::from_str(&text).map_err(|e| CliError::Input {
        path: fit_path.into(),
        message: format!("not a fit report: {e}"),
    })?;
    let formula = report.model.formula()?;
    let contrast = match contrast_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Some(toml::from_str::<ContrastFile>(&text).map_err(|e| CliError::Input {
                path: p.into(),
                message: e.to_string(),
            })?)
        }
        None => None,
    };
    let request = build_request(&formula, contrast)?;
    let model = report.to_model_fit()?;
    let summaries = predict_summaries(&model, &request)?;
    emit(out, &PredictReport::new(&summaries), &render_predictions(&summaries))?;
    Ok(Status::Success)
}
