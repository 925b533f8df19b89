//! Model specification files.
//!
//! ```toml
//! [[factor]]
//! name = "stage"
//! levels = ["0", "1", "2"]
//! reference = "0"
//! scope = "unit"
//!
//! [formula]
//! mu = ["stage[2]", "session", "session*sequence"]
//! lambda = ["stage", "session"]
//!
//! [fit]
//! tol = 1e-8
//! staged = true
//!
//! [coefficients.mu]
//! "0" = 1.86
//! "2" = -1.35
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use bbgp::error::Block;
use bbgp::model::{Factor, ModelFormula, ParamVector, Scope, Term};
use bbgp::FitOptions;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeSpec {
    Unit,
    Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub name: String,
    pub levels: Vec<String>,
    /// Defaults to the first level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub scope: ScopeSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormulaSpec {
    #[serde(default)]
    pub mu: Vec<String>,
    #[serde(default)]
    pub theta: Vec<String>,
    #[serde(default)]
    pub lambda: Vec<String>,
    #[serde(default)]
    pub alpha: Vec<String>,
    #[serde(default)]
    pub delta: Vec<String>,
}

impl FormulaSpec {
    pub fn terms(&self, block: Block) -> &[String] {
        match block {
            Block::Mu => &self.mu,
            Block::Theta => &self.theta,
            Block::Lambda => &self.lambda,
            Block::Alpha => &self.alpha,
            Block::Delta => &self.delta,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub staged: Option<bool>,
    pub seed: Option<u64>,
}

/// One condition of the simulated layout: its id and the levels of the
/// condition-level factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub id: String,
    #[serde(flatten)]
    pub levels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    pub units: Option<usize>,
    #[serde(default)]
    pub conditions: Vec<ConditionSpec>,
    /// Unit-level factor levels, assigned to units in rotation.
    #[serde(default)]
    pub groups: Vec<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecFile {
    #[serde(default, rename = "factor")]
    pub factors: Vec<FactorSpec>,
    #[serde(default)]
    pub formula: FormulaSpec,
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub coefficients: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutSpec>,
}

impl ModelSpecFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Spec(message) => CliError::Input { path: path.into(), message },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| CliError::Spec(e.to_string()))?;
        // validate eagerly so errors surface at load
        spec.formula()?;
        Ok(spec)
    }

    pub fn formula(&self) -> Result<ModelFormula> {
        let factors = self
            .factors
            .iter()
            .map(|f| Factor {
                name: f.name.clone(),
                levels: f.levels.clone(),
                reference: f
                    .reference
                    .clone()
                    .or_else(|| f.levels.first().cloned())
                    .unwrap_or_default(),
                scope: match f.scope {
                    ScopeSpec::Unit => Scope::Unit,
                    ScopeSpec::Condition => Scope::Condition,
                },
            })
            .collect();
        let terms = Block::ALL.map(|b| {
            self.formula
                .terms(b)
                .iter()
                .map(|t| Term::parse(t))
                .collect::<bbgp::Result<Vec<_>>>()
        });
        let [mu, theta, lambda, alpha, delta] = terms;
        Ok(ModelFormula::new(factors, [mu?, theta?, lambda?, alpha?, delta?])?)
    }

    pub fn unit_factors(&self) -> Vec<String> {
        self.factors
            .iter()
            .filter(|f| f.scope == ScopeSpec::Unit)
            .map(|f| f.name.clone())
            .collect()
    }

    pub fn factor_names(&self) -> Vec<String> {
        self.factors.iter().map(|f| f.name.clone()).collect()
    }

    /// Fit options from the file, with command-line overrides applied on top.
    pub fn fit_options(&self, tol: Option<f64>, max_iter: Option<usize>, staged: bool) -> FitOptions {
        let mut o = FitOptions::default();
        if let Some(t) = tol.or(self.fit.tol) {
            o.tol = t;
        }
        if let Some(m) = max_iter.or(self.fit.max_iter) {
            o.max_iter = m;
        }
        o.staged = staged || self.fit.staged.unwrap_or(false);
        o
    }

    /// Coefficients from `[coefficients.<block>]`, keyed by column name.
    /// Every column of the formula must be given.
    pub fn coefficients(&self, formula: &ModelFormula) -> Result<ParamVector> {
        for key in self.coefficients.keys() {
            if !Block::ALL.iter().any(|b| b.name() == key) {
                return Err(CliError::Spec(format!("unknown coefficient block `{key}`")));
            }
        }
        let mut blocks = Vec::with_capacity(5);
        for b in Block::ALL {
            let cols = formula.column_meta(b);
            let given = self.coefficients.get(b.name()).cloned().unwrap_or_default();
            for name in given.keys() {
                if !cols.iter().any(|c| &c.name == name) {
                    return Err(CliError::Spec(format!(
                        "coefficient `{name}` is not a column of the {b} formula"
                    )));
                }
            }
            let mut v = DVector::zeros(cols.len());
            for (j, c) in cols.iter().enumerate() {
                v[j] = *given.get(&c.name).ok_or_else(|| {
                    CliError::Spec(format!("missing coefficient `{}` for {b}", c.name))
                })?;
            }
            blocks.push(v);
        }
        let [mu, theta, lambda, alpha, delta]: [DVector<f64>; 5] = blocks.try_into().expect("five blocks");
        Ok(ParamVector::new(mu, theta, lambda, alpha, delta))
    }
}
