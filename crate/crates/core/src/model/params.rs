use nalgebra::{DMatrix, DVector};

use super::design::DesignSet;
use crate::error::{Block, Error, Result};

/// Stacked regression coefficients, one vector per link.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    blocks: [DVector<f64>; 5],
}

impl ParamVector {
    pub fn new(
        beta_mu: DVector<f64>,
        beta_theta: DVector<f64>,
        beta_lambda: DVector<f64>,
        beta_alpha: DVector<f64>,
        beta_delta: DVector<f64>,
    ) -> Self {
        Self {
            blocks: [beta_mu, beta_theta, beta_lambda, beta_alpha, beta_delta],
        }
    }

    pub fn from_slices(
        mu: &[f64],
        theta: &[f64],
        lambda: &[f64],
        alpha: &[f64],
        delta: &[f64],
    ) -> Self {
        Self::new(
            DVector::from_row_slice(mu),
            DVector::from_row_slice(theta),
            DVector::from_row_slice(lambda),
            DVector::from_row_slice(alpha),
            DVector::from_row_slice(delta),
        )
    }

    /// All-zero coefficients sized for `designs`.
    pub fn zeros(designs: &DesignSet) -> Self {
        Self {
            blocks: Block::ALL.map(|b| DVector::zeros(designs.q(b))),
        }
    }

    pub fn block(&self, block: Block) -> &DVector<f64> {
        &self.blocks[block as usize]
    }

    pub fn block_mut(&mut self, block: Block) -> &mut DVector<f64> {
        &mut self.blocks[block as usize]
    }

    pub fn beta_mu(&self) -> &DVector<f64> {
        self.block(Block::Mu)
    }

    pub fn beta_theta(&self) -> &DVector<f64> {
        self.block(Block::Theta)
    }

    pub fn beta_lambda(&self) -> &DVector<f64> {
        self.block(Block::Lambda)
    }

    pub fn beta_alpha(&self) -> &DVector<f64> {
        self.block(Block::Alpha)
    }

    pub fn beta_delta(&self) -> &DVector<f64> {
        self.block(Block::Delta)
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenates the given blocks in order.
    pub fn stack(&self, blocks: &[Block]) -> DVector<f64> {
        let values: Vec<f64> = blocks
            .iter()
            .flat_map(|&b| self.block(b).iter().copied())
            .collect();
        DVector::from_vec(values)
    }

    /// Overwrites the given blocks from a stacked vector.
    pub fn unstack(&mut self, blocks: &[Block], flat: &DVector<f64>) -> Result<()> {
        let total: usize = blocks.iter().map(|&b| self.block(b).len()).sum();
        if total != flat.len() {
            return Err(Error::Dimension(format!(
                "stacked vector has length {}, expected {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for &b in blocks {
            let len = self.block(b).len();
            self.block_mut(b)
                .copy_from(&flat.rows(offset, len).clone_owned());
            offset += len;
        }
        Ok(())
    }

    /// Checks coefficient lengths against `designs` and that all entries are finite.
    pub fn check(&self, designs: &DesignSet) -> Result<()> {
        for b in Block::ALL {
            if self.block(b).len() != designs.q(b) {
                return Err(Error::Dimension(format!(
                    "beta_{b} has length {}, Z_{b} has {} columns",
                    self.block(b).len(),
                    designs.q(b)
                )));
            }
            if self.block(b).iter().any(|v| !v.is_finite()) {
                return Err(Error::Dimension(format!("beta_{b} has a non-finite entry")));
            }
        }
        Ok(())
    }
}

/// Returns `(logistic(eta), 1 - logistic(eta))` without overflow.
pub fn logistic_pair(eta: f64) -> (f64, f64) {
    if eta >= 0.0 {
        let e = (-eta).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = eta.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

pub fn logistic(eta: f64) -> f64 {
    logistic_pair(eta).0
}

pub fn logit(mu: f64) -> f64 {
    (mu / (1.0 - mu)).ln()
}

pub(crate) fn linear_predictor(
    z: &DMatrix<f64>,
    beta: &DVector<f64>,
    block: Block,
) -> Result<DVector<f64>> {
    if z.ncols() != beta.len() {
        return Err(Error::Dimension(format!(
            "beta_{block} has length {}, Z_{block} has {} columns",
            beta.len(),
            z.ncols()
        )));
    }
    let eta = z * beta;
    if let Some(row) = eta.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteParameter { block, row });
    }
    Ok(eta)
}

/// Evaluates `exp(Z beta)`, rejecting overflow and underflow to zero.
pub(crate) fn exp_link(z: &DMatrix<f64>, beta: &DVector<f64>, block: Block) -> Result<Vec<f64>> {
    let eta = linear_predictor(z, beta, block)?;
    eta.iter()
        .enumerate()
        .map(|(row, &e)| {
            let v = e.exp();
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(Error::NonFiniteParameter { block, row })
            }
        })
        .collect()
}

pub(crate) fn logistic_link(z: &DMatrix<f64>, beta: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
    Ok(linear_predictor(z, beta, Block::Mu)?
        .iter()
        .map(|&e| logistic_pair(e))
        .collect())
}

/// Natural-scale parameters: `mu`, `theta`, `lambda` per observation row,
/// `alpha`, `delta` per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    pub m: usize,
    pub p: usize,
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
}

impl NaturalParams {
    /// Same values for every unit and condition.
    pub fn constant(m: usize, p: usize, mu: f64, theta: f64, lambda: f64, alpha: f64, delta: f64) -> Self {
        Self {
            m,
            p,
            mu: vec![mu; m * p],
            theta: vec![theta; m * p],
            lambda: vec![lambda; m * p],
            alpha: vec![alpha; m],
            delta: vec![delta; m],
        }
    }

    pub fn row(&self, g: usize, h: usize) -> usize {
        g * self.p + h
    }
}

/// Maps coefficients to natural-scale parameters through the five links.
pub fn evaluate_links(params: &ParamVector, designs: &DesignSet) -> Result<NaturalParams> {
    let mu = logistic_link(designs.z_mu(), params.beta_mu())?
        .into_iter()
        .map(|(m, _)| m)
        .collect();
    Ok(NaturalParams {
        m: designs.m(),
        p: designs.p(),
        mu,
        theta: exp_link(designs.z_theta(), params.beta_theta(), Block::Theta)?,
        lambda: exp_link(designs.z_lambda(), params.beta_lambda(), Block::Lambda)?,
        alpha: exp_link(designs.z_alpha(), params.beta_alpha(), Block::Alpha)?,
        delta: exp_link(designs.z_delta(), params.beta_delta(), Block::Delta)?,
    })
}

/// The usual beta(a, b) and gamma(c, d) parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classical {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Classical {
    pub fn from_natural(mu: f64, theta: f64, alpha: f64, delta: f64) -> Self {
        Self {
            a: mu / theta,
            b: (1.0 - mu) / theta,
            c: alpha / delta,
            d: 1.0 / delta,
        }
    }

    /// Inverse map, returning `(mu, theta, alpha, delta)`.
    pub fn to_natural(self) -> (f64, f64, f64, f64) {
        let s = self.a + self.b;
        (self.a / s, 1.0 / s, self.c / self.d, 1.0 / self.d)
    }
}

/// Classical parameters at observation `(g, h)`.
pub fn classical_parametrization(natural: &NaturalParams, g: usize, h: usize) -> Result<Classical> {
    if g >= natural.m || h >= natural.p {
        return Err(Error::Dimension(format!(
            "index ({g}, {h}) out of bounds for M = {}, p = {}",
            natural.m, natural.p
        )));
    }
    let r = natural.row(g, h);
    Ok(Classical::from_natural(
        natural.mu[r],
        natural.theta[r],
        natural.alpha[g],
        natural.delta[g],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn intercept_design(m: usize, p: usize) -> DesignSet {
        DesignSet::intercepts(m, p).unwrap()
    }

    #[test]
    fn zero_coefficients_give_unit_values() {
        let d = intercept_design(3, 2);
        let nat = evaluate_links(&ParamVector::zeros(&d), &d).unwrap();
        assert!(nat.mu.iter().all(|&m| m == 0.5));
        for v in nat.theta.iter().chain(&nat.lambda).chain(&nat.alpha).chain(&nat.delta) {
            assert_eq!(*v, 1.0);
        }
    }

    #[test]
    fn published_intercepts_map_to_natural_values() {
        let d = intercept_design(1, 1);
        let params = ParamVector::from_slices(&[0.0], &[0.0], &[1.68], &[1.30], &[-1.32]);
        let nat = evaluate_links(&params, &d).unwrap();
        assert!((nat.lambda[0] - 5.37).abs() < 0.005);
        assert!((nat.alpha[0] - 3.67).abs() < 0.005);
    }

    #[test]
    fn overflow_reports_row() {
        let z = DMatrix::from_row_slice(2, 1, &[1.0, 1000.0]);
        let unit = DMatrix::from_element(1, 1, 1.0);
        let d = DesignSet::new(1, 2, z.clone(), z.clone(), z, unit.clone(), unit).unwrap();
        let params = ParamVector::from_slices(&[1.0], &[0.0], &[1.0], &[0.0], &[0.0]);
        let err = evaluate_links(&params, &d).unwrap_err();
        assert_eq!(
            err,
            Error::NonFiniteParameter {
                block: Block::Lambda,
                row: 1
            }
        );
        // the logistic branch form keeps mu finite for the same predictor
        let nat = evaluate_links(&ParamVector::from_slices(&[1.0], &[0.0], &[0.0], &[0.0], &[0.0]), &d)
            .unwrap();
        assert_eq!(nat.mu[1], 1.0);
    }

    #[test]
    fn dimension_mismatch_is_configuration_error() {
        let d = intercept_design(2, 2);
        let params = ParamVector::from_slices(&[0.0, 1.0], &[0.0], &[0.0], &[0.0], &[0.0]);
        assert!(matches!(evaluate_links(&params, &d), Err(Error::Dimension(_))));
    }

    #[test]
    fn classical_examples() {
        let c = Classical::from_natural(0.5, 1.0, 1.0, 1.0);
        assert_eq!((c.a, c.b), (0.5, 0.5));
        let c = Classical::from_natural(0.87, 0.34, 3.67, 0.27);
        assert!((c.a - 2.558_823_5).abs() < 1e-6);
        assert!((c.b - 0.382_352_9).abs() < 1e-6);
        assert!((c.c - 13.592_592_6).abs() < 1e-6);
        assert!((c.d - 3.703_703_7).abs() < 1e-6);
        assert!((c.a / (c.a + c.b) - 0.87).abs() < 1e-12);
        assert!((c.c / c.d - 3.67).abs() < 1e-12);
    }

    #[test]
    fn classical_index_bounds() {
        let d = intercept_design(2, 3);
        let nat = evaluate_links(&ParamVector::zeros(&d), &d).unwrap();
        assert!(classical_parametrization(&nat, 1, 2).is_ok());
        assert!(classical_parametrization(&nat, 2, 0).is_err());
    }

    proptest! {
        #[test]
        fn links_respect_domains(b in proptest::collection::vec(-30.0f64..30.0, 5)) {
            let d = intercept_design(2, 2);
            let params = ParamVector::from_slices(&[b[0]], &[b[1]], &[b[2]], &[b[3]], &[b[4]]);
            let nat = evaluate_links(&params, &d).unwrap();
            prop_assert!(nat.mu.iter().all(|&m| m > 0.0 && m < 1.0));
            prop_assert!(nat.theta.iter().chain(&nat.lambda).chain(&nat.alpha).chain(&nat.delta).all(|&v| v > 0.0 && v.is_finite()));
        }

        #[test]
        fn classical_round_trip(mu in 0.001f64..0.999, theta in 1e-3f64..50.0, alpha in 1e-3f64..50.0, delta in 1e-3f64..50.0) {
            let (m2, t2, a2, d2) = Classical::from_natural(mu, theta, alpha, delta).to_natural();
            for (x, y) in [(mu, m2), (theta, t2), (alpha, a2), (delta, d2)] {
                prop_assert!(((x - y) / x).abs() <= 1e-12);
            }
        }

        #[test]
        fn links_are_row_local(row in 0usize..4, bump in -2.0f64..2.0) {
            let z = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 0.5, 1.0, -1.0]);
            let unit = DMatrix::from_element(2, 1, 1.0);
            let d = DesignSet::new(2, 2, z.clone(), z.clone(), z.clone(), unit.clone(), unit.clone()).unwrap();
            let params = ParamVector::from_slices(&[0.3, -0.2], &[0.1, 0.4], &[1.0, 0.5], &[0.2], &[-0.5]);
            let base = evaluate_links(&params, &d).unwrap();
            let mut z2 = z.clone();
            z2[(row, 1)] += bump;
            let d2 = DesignSet::new(2, 2, z2.clone(), z2.clone(), z2, unit.clone(), unit).unwrap();
            let moved = evaluate_links(&params, &d2).unwrap();
            for r in (0..4).filter(|&r| r != row) {
                prop_assert_eq!(base.mu[r], moved.mu[r]);
                prop_assert_eq!(base.theta[r], moved.theta[r]);
                prop_assert_eq!(base.lambda[r], moved.lambda[r]);
            }
        }
    }
}
