//! Fitting both likelihood components.

use nalgebra::DVector;

use crate::dist::{ln_binomial, ln_factorial};
use crate::error::{Block, Error, Result};
use crate::lik::{bb_evaluate, check_shapes, gp_evaluate, Evaluation, Order};
use crate::model::{DesignSet, ParamVector, RepeatedCountData};

use super::init::{mom_init_bb, mom_init_gp};
use super::newton::{fit_component, FitOptions, FitResult, Objective};

/// One of the two separately estimable likelihood components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    BetaBinomial,
    GammaPoisson,
}

impl Component {
    pub fn blocks(self) -> &'static [Block] {
        match self {
            Component::BetaBinomial => &[Block::Mu, Block::Theta],
            Component::GammaPoisson => &[Block::Lambda, Block::Alpha, Block::Delta],
        }
    }
}

fn layout(designs: &DesignSet, component: Component) -> Vec<(Block, usize)> {
    component.blocks().iter().map(|&b| (b, designs.q(b))).collect()
}

/// Beta-binomial kernel as a function of the stacked `(beta_mu, beta_theta)`.
pub struct BbObjective<'a> {
    pub data: &'a RepeatedCountData,
    pub designs: &'a DesignSet,
}

impl Objective for BbObjective<'_> {
    fn dim(&self) -> usize {
        self.designs.q(Block::Mu) + self.designs.q(Block::Theta)
    }

    fn evaluate(&self, beta: &DVector<f64>, order: Order) -> Result<Evaluation> {
        let qm = self.designs.q(Block::Mu);
        let bm = beta.rows(0, qm).clone_owned();
        let bt = beta.rows(qm, beta.len() - qm).clone_owned();
        bb_evaluate(&bm, &bt, self.data, self.designs, order)
    }

    fn constant(&self) -> f64 {
        self.data.rows().map(|(_, o)| ln_binomial(o.n, o.x)).sum()
    }

    fn sample_size(&self) -> usize {
        self.data.m()
    }

    fn layout(&self) -> Vec<(Block, usize)> {
        layout(self.designs, Component::BetaBinomial)
    }
}

/// Gamma-Poisson kernel as a function of the stacked
/// `(beta_lambda, beta_alpha, beta_delta)`.
pub struct GpObjective<'a> {
    pub data: &'a RepeatedCountData,
    pub designs: &'a DesignSet,
}

impl Objective for GpObjective<'_> {
    fn dim(&self) -> usize {
        self.designs.q(Block::Lambda) + self.designs.q(Block::Alpha) + self.designs.q(Block::Delta)
    }

    fn evaluate(&self, beta: &DVector<f64>, order: Order) -> Result<Evaluation> {
        let ql = self.designs.q(Block::Lambda);
        let qa = self.designs.q(Block::Alpha);
        let bl = beta.rows(0, ql).clone_owned();
        let ba = beta.rows(ql, qa).clone_owned();
        let bd = beta.rows(ql + qa, beta.len() - ql - qa).clone_owned();
        gp_evaluate(&bl, &ba, &bd, self.data, self.designs, order)
    }

    fn constant(&self) -> f64 {
        -self.data.rows().map(|(_, o)| ln_factorial(o.n)).sum::<f64>()
    }

    fn sample_size(&self) -> usize {
        self.data.m()
    }

    fn layout(&self) -> Vec<(Block, usize)> {
        layout(self.designs, Component::GammaPoisson)
    }
}

/// Fits of both components with information criteria for the joint model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub bb: FitResult,
    pub gp: FitResult,
    /// Full joint log-likelihood including the constant terms.
    pub loglik_full: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_params: usize,
}

impl ModelFit {
    pub fn from_components(bb: FitResult, gp: FitResult) -> Self {
        let loglik_full = bb.loglik_full + gp.loglik_full;
        let n_params = bb.n_params() + gp.n_params();
        let k = n_params as f64;
        let n = bb.sample_size.max(1) as f64;
        Self {
            loglik_full,
            aic: -2.0 * loglik_full + 2.0 * k,
            bic: -2.0 * loglik_full + k * n.ln(),
            n_params,
            bb,
            gp,
        }
    }

    pub fn converged(&self) -> bool {
        self.bb.converged && self.gp.converged
    }

    pub fn estimates(&self) -> ParamVector {
        let part = |r: &FitResult, b: Block| r.block(b).unwrap_or_else(|| DVector::zeros(0));
        ParamVector::new(
            part(&self.bb, Block::Mu),
            part(&self.bb, Block::Theta),
            part(&self.gp, Block::Lambda),
            part(&self.gp, Block::Alpha),
            part(&self.gp, Block::Delta),
        )
    }

    pub fn component(&self, component: Component) -> &FitResult {
        match component {
            Component::BetaBinomial => &self.bb,
            Component::GammaPoisson => &self.gp,
        }
    }

    /// Standard error of each coefficient in the layout of [`ParamVector`].
    pub fn std_errors(&self) -> ParamVector {
        let part = |r: &FitResult, b: Block| {
            let off = r.block_offset(b).unwrap_or(0);
            r.std_errors.rows(off, r.block(b).map_or(0, |v| v.len())).clone_owned()
        };
        ParamVector::new(
            part(&self.bb, Block::Mu),
            part(&self.bb, Block::Theta),
            part(&self.gp, Block::Lambda),
            part(&self.gp, Block::Alpha),
            part(&self.gp, Block::Delta),
        )
    }
}

/// Fits the beta-binomial component from method-of-moments starting values.
pub fn fit_bb(data: &RepeatedCountData, designs: &DesignSet, options: &FitOptions) -> Result<FitResult> {
    check_shapes(data, designs)?;
    if options.staged {
        return fit_staged(data, designs, Component::BetaBinomial, options);
    }
    let (bm, bt) = mom_init_bb(data, designs)?;
    let init = stack(&[bm, bt]);
    fit_component(&BbObjective { data, designs }, &init, options)
}

/// Fits the gamma-Poisson component from method-of-moments starting values.
pub fn fit_gp(data: &RepeatedCountData, designs: &DesignSet, options: &FitOptions) -> Result<FitResult> {
    check_shapes(data, designs)?;
    if options.staged {
        return fit_staged(data, designs, Component::GammaPoisson, options);
    }
    let (bl, ba, bd) = mom_init_gp(data, designs)?;
    let init = stack(&[bl, ba, bd]);
    fit_component(&GpObjective { data, designs }, &init, options)
}

/// Fits both components independently.
pub fn fit(data: &RepeatedCountData, designs: &DesignSet, options: &FitOptions) -> Result<ModelFit> {
    let bb = fit_bb(data, designs, options)?;
    let gp = fit_gp(data, designs, options)?;
    Ok(ModelFit::from_components(bb, gp))
}

/// Fits both components from the given starting coefficients.
pub fn fit_with_init(
    data: &RepeatedCountData,
    designs: &DesignSet,
    init: &ParamVector,
    options: &FitOptions,
) -> Result<ModelFit> {
    check_shapes(data, designs)?;
    init.check(designs)?;
    let bb = fit_component(
        &BbObjective { data, designs },
        &init.stack(Component::BetaBinomial.blocks()),
        options,
    )?;
    let gp = fit_component(
        &GpObjective { data, designs },
        &init.stack(Component::GammaPoisson.blocks()),
        options,
    )?;
    Ok(ModelFit::from_components(bb, gp))
}

fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

fn run(
    data: &RepeatedCountData,
    designs: &DesignSet,
    component: Component,
    init: &DVector<f64>,
    options: &FitOptions,
) -> Result<FitResult> {
    match component {
        Component::BetaBinomial => fit_component(&BbObjective { data, designs }, init, options),
        Component::GammaPoisson => fit_component(&GpObjective { data, designs }, init, options),
    }
}

/// Main effects first, then each interaction column added in turn, every
/// stage warm-started from the previous estimates.
fn fit_staged(
    data: &RepeatedCountData,
    designs: &DesignSet,
    component: Component,
    options: &FitOptions,
) -> Result<FitResult> {
    let blocks = component.blocks();
    let mut active: Vec<Vec<usize>> = blocks
        .iter()
        .map(|&b| {
            (0..designs.q(b))
                .filter(|&j| designs.columns(b)[j].order <= 1)
                .collect()
        })
        .collect();
    let pending: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(i, &b)| {
            (0..designs.q(b))
                .filter(move |&j| designs.columns(b)[j].order > 1)
                .map(move |j| (i, j))
        })
        .collect();

    let reduced = |active: &[Vec<usize>]| -> Result<DesignSet> {
        let mut d = designs.clone();
        for (i, &b) in blocks.iter().enumerate() {
            d = d.select_columns(b, &active[i])?;
        }
        Ok(d)
    };

    let first = reduced(&active)?;
    let init = match component {
        Component::BetaBinomial => {
            let (bm, bt) = mom_init_bb(data, &first)?;
            stack(&[bm, bt])
        }
        Component::GammaPoisson => {
            let (bl, ba, bd) = mom_init_gp(data, &first)?;
            stack(&[bl, ba, bd])
        }
    };
    let mut result = run(data, &first, component, &init, options)?;

    for (i, j) in pending {
        let prev = active.clone();
        active[i].push(j);
        active[i].sort_unstable();
        let next = reduced(&active)?;
        // previous estimates, zero for the newly added column
        let mut init = Vec::new();
        let mut offset = 0;
        for (k, cols) in active.iter().enumerate() {
            for &c in cols {
                match prev[k].iter().position(|&x| x == c) {
                    Some(pos) => init.push(result.coefficients[offset + pos]),
                    None => init.push(0.0),
                }
            }
            offset += prev[k].len();
        }
        result = run(data, &next, component, &DVector::from_vec(init), options)?;
    }
    if result.coefficients.len() != layout(designs, component).iter().map(|l| l.1).sum::<usize>() {
        return Err(Error::Convergence("staged fit did not reach the full design".into()));
    }
    Ok(result)
}
