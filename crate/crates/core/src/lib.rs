//! Beta-binomial/gamma-Poisson regression for repeated bivariate counts:
//! successes out of a random number of trials, observed under several
//! conditions on each unit.
//!
//! Successes given trials follow a beta-binomial law with mean `mu` and
//! dispersion `theta`; trials follow a gamma-Poisson law with rate `lambda`
//! scaled by a unit effect with mean `alpha` and dispersion `delta`. Each of
//! the five parameters has its own log-linear (logistic for `mu`) regression.

pub mod dist;
pub mod error;
pub mod infer;
pub mod lik;
pub mod model;
pub mod sim;

pub use error::{Block, Error, Result};
pub use infer::{fit, lr_test, predict_summaries, FitOptions, FitResult, ModelFit};
pub use model::{DesignSet, NaturalParams, ParamVector, RepeatedCountData};
