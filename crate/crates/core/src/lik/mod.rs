//! Log-likelihood kernels of the two model components with analytic
//! gradients and Hessians on the coefficient scale.
//!
//! Contributions are accumulated unit by unit in a fixed order, so results are
//! reproducible bit for bit.

mod bb;
mod gp;

use nalgebra::{DMatrix, DVector};

pub use bb::{bb_hessian, bb_loglik, bb_score};
pub use gp::{gp_hessian, gp_loglik, gp_score, GpWorkspace};
pub(crate) use bb::bb_evaluate;
pub(crate) use gp::gp_evaluate;

use crate::error::{Error, Result};
use crate::model::{DesignSet, RepeatedCountData};

/// How many derivatives to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Log-likelihood value with optional gradient and Hessian (empty when not
/// requested).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Evaluation {
    fn new(dim: usize, order: Order) -> Self {
        Self {
            value: 0.0,
            gradient: if order >= Order::Gradient {
                DVector::zeros(dim)
            } else {
                DVector::zeros(0)
            },
            hessian: if order >= Order::Hessian {
                DMatrix::zeros(dim, dim)
            } else {
                DMatrix::zeros(0, 0)
            },
        }
    }
}

pub(crate) fn check_shapes(data: &RepeatedCountData, designs: &DesignSet) -> Result<()> {
    if data.m() != designs.m() || data.p() != designs.p() {
        return Err(Error::Dimension(format!(
            "data has M = {}, p = {} but designs have M = {}, p = {}",
            data.m(),
            data.p(),
            designs.m(),
            designs.p()
        )));
    }
    Ok(())
}

/// `H[off_a.., off_b..] += w * a b'`.
pub(crate) fn add_outer(
    h: &mut DMatrix<f64>,
    off_a: usize,
    a: &[f64],
    off_b: usize,
    b: &[f64],
    w: f64,
) {
    if w == 0.0 {
        return;
    }
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let wa = w * ai;
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                h[(off_a + i, off_b + j)] += wa * bj;
            }
        }
    }
}

/// Copies the upper triangle into the lower one, making `h` exactly
/// symmetric.
pub(crate) fn fill_lower(h: &mut DMatrix<f64>) {
    for i in 0..h.nrows() {
        for j in i + 1..h.ncols() {
            h[(j, i)] = h[(i, j)];
        }
    }
}

pub(crate) fn row_vec(z: &DMatrix<f64>, r: usize) -> Vec<f64> {
    z.row(r).iter().copied().collect()
}
