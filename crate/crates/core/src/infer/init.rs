//! Method-of-moments starting values.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{logit, DesignSet, RepeatedCountData};

/// Lower bound for moment estimates of `theta`, `lambda` and `delta`.
pub const MOMENT_FLOOR: f64 = 1e-4;

fn row_key(z: &DMatrix<f64>, r: usize) -> Vec<u64> {
    z.row(r).iter().map(|v| v.to_bits()).collect()
}

/// Weighted least squares through the pseudo-inverse; coefficients not
/// determined by the rows come out as zero.
fn weighted_ls(rows: &[DVector<f64>], y: &[f64], w: &[f64], q: usize) -> DVector<f64> {
    if rows.is_empty() || q == 0 {
        return DVector::zeros(q);
    }
    let x = DMatrix::from_fn(rows.len(), q, |i, j| rows[i][j] * w[i].sqrt());
    let b = DVector::from_fn(rows.len(), |i, _| y[i] * w[i].sqrt());
    let svd = x.svd(true, true);
    let top = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    svd.solve(&b, 1e-10 * top.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DVector::zeros(q))
}

struct Cell {
    row: DVector<f64>,
    sum_x: f64,
    sum_n: f64,
    count: f64,
    a: f64,
    b: f64,
}

fn cells_by_pattern(z: &DMatrix<f64>, rows: impl Iterator<Item = usize>) -> (BTreeMap<Vec<u64>, Cell>, Vec<Vec<u64>>) {
    let mut cells = BTreeMap::new();
    let mut keys = Vec::new();
    for r in rows {
        let key = row_key(z, r);
        cells.entry(key.clone()).or_insert_with(|| Cell {
            row: z.row(r).transpose(),
            sum_x: 0.0,
            sum_n: 0.0,
            count: 0.0,
            a: 0.0,
            b: 0.0,
        });
        keys.push(key);
    }
    (cells, keys)
}

/// Starting `(beta_mu, beta_theta)`: pooled success proportions per `Z_mu`
/// pattern and a moment estimate of the intra-class correlation
/// `theta / (1 + theta)` per `Z_theta` pattern, mapped through the links.
pub fn mom_init_bb(data: &RepeatedCountData, designs: &DesignSet) -> Result<(DVector<f64>, DVector<f64>)> {
    crate::lik::check_shapes(data, designs)?;
    let x = data.successes();
    let n = data.trials();
    let used: Vec<usize> = (0..n.len()).filter(|&r| n[r] > 0).collect();
    if used.is_empty() {
        return Err(Error::Initialization("every observation has n = 0".into()));
    }

    let (mut mu_cells, mu_keys) = cells_by_pattern(designs.z_mu(), used.iter().copied());
    for (&r, key) in used.iter().zip(&mu_keys) {
        let c = mu_cells.get_mut(key).expect("cell");
        c.sum_x += x[r] as f64;
        c.sum_n += n[r] as f64;
    }
    let p_hat = |c: &Cell| {
        let p = c.sum_x / c.sum_n;
        if p <= 0.0 {
            0.5 / c.sum_n
        } else if p >= 1.0 {
            1.0 - 0.5 / c.sum_n
        } else {
            p
        }
    };
    let rows: Vec<DVector<f64>> = mu_cells.values().map(|c| c.row.clone()).collect();
    let y: Vec<f64> = mu_cells.values().map(|c| logit(p_hat(c))).collect();
    let w: Vec<f64> = mu_cells.values().map(|c| c.sum_n).collect();
    let beta_mu = weighted_ls(&rows, &y, &w, designs.z_mu().ncols());

    let (mut th_cells, th_keys) = cells_by_pattern(designs.z_theta(), used.iter().copied());
    for ((&r, th_key), mu_key) in used.iter().zip(&th_keys).zip(&mu_keys) {
        let p = p_hat(&mu_cells[mu_key]);
        let (xr, nr) = (x[r] as f64, n[r] as f64);
        let c = th_cells.get_mut(th_key).expect("cell");
        let pq = p * (1.0 - p);
        c.a += (xr - nr * p).powi(2) - nr * pq;
        c.b += nr * (nr - 1.0) * pq;
        c.sum_n += nr;
    }
    let rho_floor = MOMENT_FLOOR / (1.0 + MOMENT_FLOOR);
    let rows: Vec<DVector<f64>> = th_cells.values().map(|c| c.row.clone()).collect();
    let y: Vec<f64> = th_cells
        .values()
        .map(|c| {
            let rho = if c.b > 0.0 { c.a / c.b } else { rho_floor };
            let rho = rho.clamp(rho_floor, 0.99);
            (rho / (1.0 - rho)).max(MOMENT_FLOOR).ln()
        })
        .collect();
    let w: Vec<f64> = th_cells.values().map(|c| c.sum_n).collect();
    let beta_theta = weighted_ls(&rows, &y, &w, designs.z_theta().ncols());
    Ok((beta_mu, beta_theta))
}

/// Starting `(beta_lambda, beta_alpha, beta_delta)`.
///
/// Only `lambda * alpha` and `lambda * delta` are determined by the trial
/// counts, so `alpha` is pinned at one (`beta_alpha = 0`) and all mean
/// variation is attributed to `lambda` via per-pattern means of `N`. `delta`
/// then follows from the cross-condition covariance
/// `Cov(N_h, N_h') = lambda_h lambda_h' alpha delta` (from the excess variance
/// when `p = 1`).
pub fn mom_init_gp(
    data: &RepeatedCountData,
    designs: &DesignSet,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    crate::lik::check_shapes(data, designs)?;
    let n: Vec<f64> = data.trials().into_iter().map(|v| v as f64).collect();
    let (m, p) = (data.m(), data.p());
    let (ql, qa, qd) = (designs.z_lambda().ncols(), designs.z_alpha().ncols(), designs.z_delta().ncols());
    let unit_rows: Vec<DVector<f64>> = (0..m).map(|g| designs.z_delta().row(g).transpose()).collect();
    let ones = vec![1.0; m];

    if n.len() == 1 {
        let lam = n[0].max(MOMENT_FLOOR);
        let beta_lambda = weighted_ls(&[designs.z_lambda().row(0).transpose()], &[lam.ln()], &[1.0], ql);
        let beta_delta = weighted_ls(&unit_rows, &[0.1f64.ln()], &ones, qd);
        return Ok((beta_lambda, DVector::zeros(qa), beta_delta));
    }

    let (mut cells, keys) = cells_by_pattern(designs.z_lambda(), 0..n.len());
    for (r, key) in keys.iter().enumerate() {
        let c = cells.get_mut(key).expect("cell");
        c.sum_n += n[r];
        c.count += 1.0;
    }
    let rows: Vec<DVector<f64>> = cells.values().map(|c| c.row.clone()).collect();
    let y: Vec<f64> = cells
        .values()
        .map(|c| (c.sum_n / c.count).max(MOMENT_FLOOR).ln())
        .collect();
    let w: Vec<f64> = cells.values().map(|c| c.count).collect();
    let beta_lambda = weighted_ls(&rows, &y, &w, ql);
    let fitted: Vec<f64> = (designs.z_lambda() * &beta_lambda).iter().map(|e| e.exp()).collect();

    let (mut num, mut den) = (0.0, 0.0);
    for g in 0..m {
        let base = g * p;
        if p == 1 {
            let (k, mean) = (n[base], fitted[base]);
            num += (k - mean).powi(2) - mean;
            den += mean * mean;
        } else {
            for h in 0..p {
                for h2 in h + 1..p {
                    let (r1, r2) = (base + h, base + h2);
                    num += (n[r1] - fitted[r1]) * (n[r2] - fitted[r2]);
                    den += fitted[r1] * fitted[r2];
                }
            }
        }
    }
    let delta = if den > 0.0 { (num / den).max(MOMENT_FLOOR) } else { MOMENT_FLOOR };
    let beta_delta = weighted_ls(&unit_rows, &vec![delta.ln(); m], &ones, qd);
    Ok((beta_lambda, DVector::zeros(qa), beta_delta))
}
