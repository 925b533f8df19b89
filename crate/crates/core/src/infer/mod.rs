//! Estimation: starting values, Newton-Raphson, likelihood-ratio tests and
//! natural-scale predictions.

mod fit;
mod init;
mod lrtest;
mod newton;
mod predict;

pub use fit::{fit, fit_bb, fit_gp, fit_with_init, BbObjective, Component, GpObjective, ModelFit};
pub use init::{mom_init_bb, mom_init_gp, MOMENT_FLOOR};
pub use lrtest::{chi_squared_sf, lr_test, LrTestResult, Nested};
pub use newton::{fit_component, FitOptions, FitResult, IterationRecord, Objective};
pub use predict::{
    delta_method_se, predict_at, predict_summaries, unit_profiles, Estimate, PointSummary,
    PredictionPoint, PredictionRequest, ProfileSummary, UnitProfile,
};
