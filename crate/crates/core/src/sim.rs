//! Exact hierarchical sampler for the model.
//!
//! Each unit draws from its own ChaCha stream keyed by `(seed, replicate)`
//! and selected by the unit index, so datasets are reproducible and units
//! can be generated in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};

use crate::error::{Error, Result};
use crate::model::{evaluate_links, DesignSet, NaturalParams, ParamVector, RepeatedCountData};

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub params: ParamVector,
    pub designs: DesignSet,
    pub seed: u64,
    pub replicates: usize,
}

impl SimSpec {
    pub fn new(params: ParamVector, designs: DesignSet, seed: u64, replicates: usize) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::Dimension("replicates must be at least 1".into()));
        }
        params.check(&designs)?;
        Ok(Self {
            params,
            designs,
            seed,
            replicates,
        })
    }
}

/// One unit's latent and observed draws.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDraw {
    pub tau: f64,
    pub pi: Vec<f64>,
    pub n: Vec<u64>,
    pub x: Vec<u64>,
}

fn key(seed: u64, replicate: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ replicate.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for unit `unit` of replicate `replicate`.
pub fn unit_rng(seed: u64, replicate: u64, unit: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key(seed, replicate));
    rng.set_stream(unit);
    rng
}

fn beta<R: Rng + ?Sized>(rng: &mut R, mu: f64, theta: f64) -> f64 {
    let a = Gamma::new(mu / theta, 1.0).expect("positive shape").sample(rng);
    let b = Gamma::new((1.0 - mu) / theta, 1.0).expect("positive shape").sample(rng);
    if a + b > 0.0 {
        a / (a + b)
    } else {
        // both shapes so small that the draws underflowed: the limit is a
        // point mass at 0 or 1 with probability mu of 1
        if rng.random::<f64>() < mu { 1.0 } else { 0.0 }
    }
}

/// Draws one unit given natural parameters per condition.
pub fn draw_unit<R: Rng + ?Sized>(
    rng: &mut R,
    mu: &[f64],
    theta: &[f64],
    lambda: &[f64],
    alpha: f64,
    delta: f64,
) -> UnitDraw {
    let tau = Gamma::new(alpha / delta, delta).expect("positive gamma parameters").sample(rng);
    let p = lambda.len();
    let mut draw = UnitDraw {
        tau,
        pi: Vec::with_capacity(p),
        n: Vec::with_capacity(p),
        x: Vec::with_capacity(p),
    };
    for h in 0..p {
        let rate = lambda[h] * tau;
        let n = if rate > 0.0 {
            Poisson::new(rate).expect("finite rate").sample(rng) as u64
        } else {
            0
        };
        let pi = beta(rng, mu[h], theta[h]);
        let x = Binomial::new(n, pi).expect("probability in [0, 1]").sample(rng);
        draw.pi.push(pi);
        draw.n.push(n);
        draw.x.push(x);
    }
    draw
}

/// Draws every unit of one replicate from natural parameters, returning
/// `(x, n)` pairs per unit.
pub fn sample_counts(natural: &NaturalParams, seed: u64, replicate: u64) -> Vec<Vec<(u64, u64)>> {
    let p = natural.p;
    (0..natural.m)
        .map(|g| {
            let rows = g * p..(g + 1) * p;
            let mu: Vec<f64> = natural.mu[rows.clone()].to_vec();
            let mut rng = unit_rng(seed, replicate, g as u64);
            let d = draw_unit(
                &mut rng,
                &mu,
                &natural.theta[rows.clone()],
                &natural.lambda[rows],
                natural.alpha[g],
                natural.delta[g],
            );
            d.x.into_iter().zip(d.n).collect()
        })
        .collect()
}

/// Replicate `replicate` of the simulation study.
pub fn sample_replicate(spec: &SimSpec, replicate: usize) -> Result<RepeatedCountData> {
    let natural = evaluate_links(&spec.params, &spec.designs)?;
    RepeatedCountData::from_counts(&sample_counts(&natural, spec.seed, replicate as u64))
}

/// The first replicate.
pub fn sample_dataset(spec: &SimSpec) -> Result<RepeatedCountData> {
    sample_replicate(spec, 0)
}

pub fn sample_replicates(spec: &SimSpec) -> Result<Vec<RepeatedCountData>> {
    (0..spec.replicates).map(|r| sample_replicate(spec, r)).collect()
}
