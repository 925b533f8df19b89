use nalgebra::{DMatrix, DVector};

use super::{add_outer, check_shapes, fill_lower, row_vec, Evaluation, Order};
use crate::error::{Block, Result};
use crate::model::{exp_link, logistic_link, DesignSet, ParamVector, RepeatedCountData};

/// Sums over the success, failure and trial products of one observation and
/// their first and second derivatives in (mu, theta).
#[derive(Default)]
struct BbTerms {
    value: f64,
    d_mu: f64,
    d_theta: f64,
    d_mu_mu: f64,
    d_mu_theta: f64,
    d_theta_theta: f64,
}

fn bb_terms(x: u64, n: u64, mu: f64, one_minus_mu: f64, theta: f64, order: Order) -> BbTerms {
    let mut t = BbTerms::default();
    for v in 0..x {
        let v = v as f64;
        let s = mu + v * theta;
        t.value += s.ln();
        if order >= Order::Gradient {
            t.d_mu += 1.0 / s;
            t.d_theta += v / s;
        }
        if order >= Order::Hessian {
            let s2 = s * s;
            t.d_mu_mu -= 1.0 / s2;
            t.d_mu_theta -= v / s2;
            t.d_theta_theta -= v * v / s2;
        }
    }
    for w in 0..n - x {
        let w = w as f64;
        let s = one_minus_mu + w * theta;
        t.value += s.ln();
        if order >= Order::Gradient {
            t.d_mu -= 1.0 / s;
            t.d_theta += w / s;
        }
        if order >= Order::Hessian {
            let s2 = s * s;
            t.d_mu_mu -= 1.0 / s2;
            t.d_mu_theta += w / s2;
            t.d_theta_theta -= w * w / s2;
        }
    }
    for u in 1..n {
        let u = u as f64;
        let ut = u * theta;
        t.value -= ut.ln_1p();
        if order >= Order::Gradient {
            t.d_theta -= u / (1.0 + ut);
        }
        if order >= Order::Hessian {
            let s = 1.0 + ut;
            t.d_theta_theta += u * u / (s * s);
        }
    }
    t
}

/// Beta-binomial kernel over the stacked `(beta_mu, beta_theta)`.
pub(crate) fn bb_evaluate(
    beta_mu: &DVector<f64>,
    beta_theta: &DVector<f64>,
    data: &RepeatedCountData,
    designs: &DesignSet,
    order: Order,
) -> Result<Evaluation> {
    check_shapes(data, designs)?;
    let mu = logistic_link(designs.z_mu(), beta_mu)?;
    let theta = exp_link(designs.z_theta(), beta_theta, Block::Theta)?;
    let (qm, qt) = (beta_mu.len(), beta_theta.len());
    let mut ev = Evaluation::new(qm + qt, order);
    for (r, obs) in data.rows() {
        let (m, m_c) = mu[r];
        let th = theta[r];
        let t = bb_terms(obs.x, obs.n, m, m_c, th, order);
        ev.value += t.value;
        if order == Order::Value || obs.n == 0 {
            continue;
        }
        // chain rule: dmu/deta = mu(1-mu), dtheta/deta = theta
        let dm = m * m_c;
        let g_mu = t.d_mu * dm;
        let g_theta = t.d_theta * th;
        let zm = row_vec(designs.z_mu(), r);
        let zt = row_vec(designs.z_theta(), r);
        for (j, z) in zm.iter().enumerate() {
            ev.gradient[j] += g_mu * z;
        }
        for (j, z) in zt.iter().enumerate() {
            ev.gradient[qm + j] += g_theta * z;
        }
        if order == Order::Hessian {
            let w_mm = t.d_mu_mu * dm * dm + t.d_mu * dm * (m_c - m);
            let w_mt = t.d_mu_theta * dm * th;
            let w_tt = t.d_theta_theta * th * th + t.d_theta * th;
            add_outer(&mut ev.hessian, 0, &zm, 0, &zm, w_mm);
            add_outer(&mut ev.hessian, 0, &zm, qm, &zt, w_mt);
            add_outer(&mut ev.hessian, qm, &zt, qm, &zt, w_tt);
        }
    }
    if order == Order::Hessian {
        fill_lower(&mut ev.hessian);
    }
    Ok(ev)
}

/// Beta-binomial log-likelihood kernel.
pub fn bb_loglik(params: &ParamVector, data: &RepeatedCountData, designs: &DesignSet) -> Result<f64> {
    Ok(bb_evaluate(params.beta_mu(), params.beta_theta(), data, designs, Order::Value)?.value)
}

/// Gradient of the beta-binomial kernel over `(beta_mu, beta_theta)`.
pub fn bb_score(
    params: &ParamVector,
    data: &RepeatedCountData,
    designs: &DesignSet,
) -> Result<DVector<f64>> {
    Ok(bb_evaluate(params.beta_mu(), params.beta_theta(), data, designs, Order::Gradient)?.gradient)
}

/// Hessian of the beta-binomial kernel over `(beta_mu, beta_theta)`.
pub fn bb_hessian(
    params: &ParamVector,
    data: &RepeatedCountData,
    designs: &DesignSet,
) -> Result<DMatrix<f64>> {
    Ok(bb_evaluate(params.beta_mu(), params.beta_theta(), data, designs, Order::Hessian)?.hessian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{beta_binomial_log_pmf, ln_binomial};

    fn single(x: u64, n: u64) -> (RepeatedCountData, DesignSet) {
        (
            RepeatedCountData::from_counts(&[vec![(x, n)]]).unwrap(),
            DesignSet::intercepts(1, 1).unwrap(),
        )
    }

    #[test]
    fn empty_data_has_zero_kernel_and_gradient() {
        let data = RepeatedCountData::from_counts(&[vec![(0, 0), (0, 0)], vec![(0, 0), (0, 0)]]).unwrap();
        let d = DesignSet::intercepts(2, 2).unwrap();
        let params = ParamVector::from_slices(&[0.4], &[-0.3], &[0.0], &[0.0], &[0.0]);
        assert_eq!(bb_loglik(&params, &data, &d).unwrap(), 0.0);
        assert!(bb_score(&params, &data, &d).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_success_is_log_half() {
        let (data, d) = single(1, 1);
        let params = ParamVector::zeros(&d);
        assert!((bb_loglik(&params, &data, &d).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kernel_matches_pmf_minus_binomial_coefficient() {
        let rows = vec![
            vec![(2, 5), (0, 3)],
            vec![(4, 4), (1, 2)],
            vec![(0, 0), (3, 5)],
        ];
        let data = RepeatedCountData::from_counts(&rows).unwrap();
        let d = DesignSet::intercepts(3, 2).unwrap();
        let params = ParamVector::from_slices(&[0.7], &[-0.4], &[0.0], &[0.0], &[0.0]);
        let (mu, theta) = (crate::model::logistic(0.7), (-0.4f64).exp());
        let want: f64 = data
            .rows()
            .map(|(_, o)| beta_binomial_log_pmf(o.x, o.n, mu, theta).unwrap() - ln_binomial(o.n, o.x))
            .sum();
        assert!((bb_loglik(&params, &data, &d).unwrap() - want).abs() <= 1e-12);
    }

    #[test]
    fn all_successes_push_mu_up() {
        let data = RepeatedCountData::from_counts(&[vec![(3, 3)], vec![(5, 5)]]).unwrap();
        let d = DesignSet::intercepts(2, 1).unwrap();
        let g = bb_score(&ParamVector::zeros(&d), &data, &d).unwrap();
        assert!(g[0] > 0.0);
    }

    #[test]
    fn single_trial_reduces_to_logistic_bernoulli() {
        let (data, d) = single(1, 1);
        let params = ParamVector::from_slices(&[0.3], &[0.8], &[0.0], &[0.0], &[0.0]);
        let h = bb_hessian(&params, &data, &d).unwrap();
        let mu = crate::model::logistic(0.3);
        assert!((h[(0, 0)] + mu * (1.0 - mu)).abs() < 1e-14);
        assert_eq!(h[(0, 1)], 0.0);
        assert_eq!(h[(1, 1)], 0.0);
        let g = bb_score(&params, &data, &d).unwrap();
        assert!((g[0] - (1.0 - mu)).abs() < 1e-14);
        assert_eq!(g[1], 0.0);
    }
}
