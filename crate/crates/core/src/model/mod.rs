//! Data, designs, coefficients, and the link functions.

mod data;
mod design;
mod formula;
mod params;

pub use data::{Observation, RepeatedCountData, UnitRecord};
pub use design::{ColumnMeta, DesignSet};
pub use formula::{CovariateTable, Factor, ModelFormula, Scope, Term, TermPart};
pub use params::{
    classical_parametrization, evaluate_links, logistic, logistic_pair, logit, Classical,
    NaturalParams, ParamVector,
};
pub(crate) use params::{exp_link, logistic_link};
