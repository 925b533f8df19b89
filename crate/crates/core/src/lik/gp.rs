use nalgebra::{DMatrix, DVector};

use super::{add_outer, check_shapes, fill_lower, row_vec, Evaluation, Order};
use crate::error::{Block, Result};
use crate::model::{exp_link, DesignSet, ParamVector, RepeatedCountData};

/// Per-unit auxiliary quantities of the gamma-Poisson derivatives.
///
/// With `S_g = sum_h n_gh` and `Lambda_g = sum_h lambda_gh`:
/// `a = delta S + alpha`, `b = delta Lambda + 1`, and over `u = 0..S_g`
/// `c = sum 1/(alpha+u delta)`, `e = sum u/(alpha+u delta)`,
/// `f = sum 1/(alpha+u delta)^2`, `j = sum u/(alpha+u delta)^2`,
/// `q = sum [u/(alpha+u delta)]^2`. Diagonal matrices of the matrix form
/// (`A`, `B`, `C`, ...) are represented by these vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GpWorkspace {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub log_b: Vec<f64>,
    pub c: Vec<f64>,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub j: Vec<f64>,
    pub q: Vec<f64>,
    /// `sum_{u<S} ln(alpha + u delta)`.
    pub log_rising: Vec<f64>,
    /// Stacked trial counts, unit-major.
    pub n: Vec<u64>,
    /// `S_g`.
    pub n_s: Vec<u64>,
    /// `lambda_gh`, unit-major.
    pub lambda: Vec<f64>,
    /// `Lambda_g`.
    pub lambda_s: Vec<f64>,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
}

impl GpWorkspace {
    pub fn new(
        data: &RepeatedCountData,
        lambda: Vec<f64>,
        alpha: Vec<f64>,
        delta: Vec<f64>,
        order: Order,
    ) -> Self {
        let (m, p) = (data.m(), data.p());
        let n = data.trials();
        let mut ws = GpWorkspace {
            a: Vec::with_capacity(m),
            b: Vec::with_capacity(m),
            log_b: Vec::with_capacity(m),
            c: Vec::with_capacity(m),
            e: Vec::with_capacity(m),
            f: Vec::with_capacity(m),
            j: Vec::with_capacity(m),
            q: Vec::with_capacity(m),
            log_rising: Vec::with_capacity(m),
            n_s: Vec::with_capacity(m),
            lambda_s: Vec::with_capacity(m),
            n,
            lambda,
            alpha,
            delta,
        };
        for g in 0..m {
            let s: u64 = ws.n[g * p..(g + 1) * p].iter().sum();
            let lam_s: f64 = ws.lambda[g * p..(g + 1) * p].iter().sum();
            let (al, de) = (ws.alpha[g], ws.delta[g]);
            let (mut c, mut e, mut f, mut j, mut q, mut lr) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for u in 0..s {
                let u = u as f64;
                let t = al + u * de;
                lr += t.ln();
                if order >= Order::Gradient {
                    c += 1.0 / t;
                    e += u / t;
                }
                if order >= Order::Hessian {
                    let t2 = t * t;
                    f += 1.0 / t2;
                    j += u / t2;
                    q += u * u / t2;
                }
            }
            ws.a.push(de * s as f64 + al);
            ws.b.push(de * lam_s + 1.0);
            ws.log_b.push((de * lam_s).ln_1p());
            ws.c.push(c);
            ws.e.push(e);
            ws.f.push(f);
            ws.j.push(j);
            ws.q.push(q);
            ws.log_rising.push(lr);
            ws.n_s.push(s);
            ws.lambda_s.push(lam_s);
        }
        ws
    }

    pub fn from_params(
        params: &ParamVector,
        data: &RepeatedCountData,
        designs: &DesignSet,
    ) -> Result<Self> {
        check_shapes(data, designs)?;
        Ok(Self::new(
            data,
            exp_link(designs.z_lambda(), params.beta_lambda(), Block::Lambda)?,
            exp_link(designs.z_alpha(), params.beta_alpha(), Block::Alpha)?,
            exp_link(designs.z_delta(), params.beta_delta(), Block::Delta)?,
            Order::Hessian,
        ))
    }
}

/// Gamma-Poisson kernel over the stacked `(beta_lambda, beta_alpha, beta_delta)`.
pub(crate) fn gp_evaluate(
    beta_lambda: &DVector<f64>,
    beta_alpha: &DVector<f64>,
    beta_delta: &DVector<f64>,
    data: &RepeatedCountData,
    designs: &DesignSet,
    order: Order,
) -> Result<Evaluation> {
    check_shapes(data, designs)?;
    let ws = GpWorkspace::new(
        data,
        exp_link(designs.z_lambda(), beta_lambda, Block::Lambda)?,
        exp_link(designs.z_alpha(), beta_alpha, Block::Alpha)?,
        exp_link(designs.z_delta(), beta_delta, Block::Delta)?,
        order,
    );
    let (ql, qa, qd) = (beta_lambda.len(), beta_alpha.len(), beta_delta.len());
    let (oa, od) = (ql, ql + qa);
    let p = data.p();
    let mut ev = Evaluation::new(ql + qa + qd, order);
    for g in 0..data.m() {
        let rows = g * p..(g + 1) * p;
        let (al, de) = (ws.alpha[g], ws.delta[g]);
        let (a, b, lb) = (ws.a[g], ws.b[g], ws.log_b[g]);
        let s = ws.n_s[g] as f64;
        let lam_s = ws.lambda_s[g];

        let mut value = ws.log_rising[g] - (s + al / de) * lb;
        for r in rows.clone() {
            if ws.n[r] > 0 {
                value += ws.n[r] as f64 * ws.lambda[r].ln();
            }
        }
        ev.value += value;
        if order == Order::Value {
            continue;
        }

        let za = row_vec(designs.z_alpha(), g);
        let zd = row_vec(designs.z_delta(), g);
        // w = sum_h lambda_h z_lambda_h
        let mut w = vec![0.0; ql];
        for r in rows.clone() {
            let zl = designs.z_lambda().row(r);
            let lam = ws.lambda[r];
            let gl = ws.n[r] as f64 - lam * a / b;
            for (k, z) in zl.iter().enumerate() {
                ev.gradient[k] += gl * z;
                w[k] += lam * z;
            }
            if order == Order::Hessian {
                let zl = row_vec(designs.z_lambda(), r);
                add_outer(&mut ev.hessian, 0, &zl, 0, &zl, -lam * a / b);
            }
        }
        let g_alpha = al * (ws.c[g] - lb / de);
        let g_delta = de * ws.e[g] + al / de * lb - a * lam_s / b;
        for (k, z) in za.iter().enumerate() {
            ev.gradient[oa + k] += g_alpha * z;
        }
        for (k, z) in zd.iter().enumerate() {
            ev.gradient[od + k] += g_delta * z;
        }
        if order < Order::Hessian {
            continue;
        }
        let b2 = b * b;
        // the lambda block couples all conditions of a unit through b
        add_outer(&mut ev.hessian, 0, &w, 0, &w, a * de / b2);
        add_outer(&mut ev.hessian, 0, &w, oa, &za, -al / b);
        add_outer(&mut ev.hessian, 0, &w, od, &zd, -de * (s - al * lam_s) / b2);
        add_outer(
            &mut ev.hessian,
            oa,
            &za,
            oa,
            &za,
            al * (ws.c[g] - lb / de - al * ws.f[g]),
        );
        add_outer(
            &mut ev.hessian,
            oa,
            &za,
            od,
            &zd,
            al * de * (-ws.j[g] - lam_s / (de * b) + lb / (de * de)),
        );
        add_outer(
            &mut ev.hessian,
            od,
            &zd,
            od,
            &zd,
            de * ws.e[g] - de * de * ws.q[g] + al * lam_s / b
                - al / de * lb
                - de * lam_s * (s - al * lam_s) / b2,
        );
    }
    if order == Order::Hessian {
        fill_lower(&mut ev.hessian);
    }
    Ok(ev)
}

/// Gamma-Poisson log-likelihood kernel.
pub fn gp_loglik(params: &ParamVector, data: &RepeatedCountData, designs: &DesignSet) -> Result<f64> {
    Ok(gp_evaluate(
        params.beta_lambda(),
        params.beta_alpha(),
        params.beta_delta(),
        data,
        designs,
        Order::Value,
    )?
    .value)
}

/// Gradient over `(beta_lambda, beta_alpha, beta_delta)`.
pub fn gp_score(
    params: &ParamVector,
    data: &RepeatedCountData,
    designs: &DesignSet,
) -> Result<DVector<f64>> {
    Ok(gp_evaluate(
        params.beta_lambda(),
        params.beta_alpha(),
        params.beta_delta(),
        data,
        designs,
        Order::Gradient,
    )?
    .gradient)
}

/// Hessian over `(beta_lambda, beta_alpha, beta_delta)`.
pub fn gp_hessian(
    params: &ParamVector,
    data: &RepeatedCountData,
    designs: &DesignSet,
) -> Result<DMatrix<f64>> {
    Ok(gp_evaluate(
        params.beta_lambda(),
        params.beta_alpha(),
        params.beta_delta(),
        data,
        designs,
        Order::Hessian,
    )?
    .hessian)
}
