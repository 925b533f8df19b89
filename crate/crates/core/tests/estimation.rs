mod common;

use bbgp::error::Block;
use bbgp::infer::{
    fit_bb, fit_gp, lr_test, mom_init_bb, mom_init_gp, predict_at, FitOptions, PredictionPoint, PredictionRequest,
    UnitProfile,
};
use bbgp::model::logistic;
use bbgp::sim::{sample_dataset, sample_replicate, SimSpec};
use bbgp::{fit, DesignSet, ParamVector};

fn study_spec(m: usize, seed: u64) -> SimSpec {
    SimSpec::new(common::published(), common::designs(m), seed, 1).unwrap()
}

#[test]
fn bb_initializer_on_single_cell() {
    let d = DesignSet::intercepts(200, 1).unwrap();
    let truth = ParamVector::from_slices(&[bbgp::model::logit(0.7)], &[0.3f64.ln()], &[3.0f64.ln()], &[20f64.ln() - 3f64.ln()], &[-6.0]);
    let data = sample_dataset(&SimSpec::new(truth, d.clone(), 17, 1).unwrap()).unwrap();
    let (bm, bt) = mom_init_bb(&data, &d).unwrap();
    assert!((logistic(bm[0]) - 0.7).abs() < 0.05);
    assert!(bt[0].is_finite());
}

#[test]
fn gp_initializer_targets_identified_products() {
    let d = common::designs(500);
    let data = sample_dataset(&study_spec(500, 3)).unwrap();
    let (bl, ba, bd) = mom_init_gp(&data, &d).unwrap();
    // only lambda alpha and lambda delta are determined by the data
    let la = (bl[0] + ba[0]).exp();
    let ld = (bl[0] + bd[0]).exp();
    let (la0, ld0) = ((1.68f64 + 1.30).exp(), (1.68f64 - 1.32).exp());
    assert!((la - la0).abs() <= 0.25 * la0, "lambda alpha {la} vs {la0}");
    assert!((ld - ld0).abs() <= 0.25 * ld0, "lambda delta {ld} vs {ld0}");
}

#[test]
fn final_model_fit_and_information_criteria() {
    let d = common::designs(500);
    let data = sample_dataset(&study_spec(500, 7)).unwrap();
    let f = fit(&data, &d, &FitOptions::default()).unwrap();
    assert!(f.bb.converged && f.gp.converged);
    assert_eq!(f.n_params, 17);
    let aic = -2.0 * (f.bb.loglik_full + f.gp.loglik_full) + 2.0 * 17.0;
    assert!((f.aic - aic).abs() < 1e-8);
    let bic = -2.0 * f.loglik_full + 17.0 * 500f64.ln();
    assert!((f.bic - bic).abs() < 1e-8);

    // identified coefficients lie near the truth
    let se = f.std_errors();
    let est = f.estimates();
    let truth = common::published();
    for b in [Block::Mu, Block::Theta] {
        for j in 0..truth.block(b).len() {
            let z = (est.block(b)[j] - truth.block(b)[j]) / se.block(b)[j];
            assert!(z.abs() < 4.0, "{b}[{j}]: z = {z}");
        }
    }
    for j in 1..5 {
        let z = (est.beta_lambda()[j] - truth.beta_lambda()[j]) / se.beta_lambda()[j];
        assert!(z.abs() < 4.0, "lambda[{j}]: z = {z}");
    }
    // the three intercepts share one flat direction
    let gp = &f.gp;
    assert_eq!(gp.non_identified, vec![0, 5, 6]);
    assert!(se.beta_lambda()[0].is_nan() && se.beta_alpha()[0].is_nan() && se.beta_delta()[0].is_nan());
    let la = est.beta_lambda()[0] + est.beta_alpha()[0];
    assert!((la - 2.98).abs() < 0.1, "log lambda alpha {la}");
}

#[test]
fn monotone_ascent_and_final_step() {
    let d = common::designs(120);
    let data = sample_dataset(&study_spec(120, 2)).unwrap();
    for r in [fit_bb(&data, &d, &FitOptions::default()).unwrap(), fit_gp(&data, &d, &FitOptions::default()).unwrap()] {
        assert!(r.converged);
        assert!(r.gradient_max <= 1e-8);
        for w in r.trace.windows(2) {
            assert!(w[1].loglik >= w[0].loglik - 1e-12 * w[0].loglik.abs());
        }
        assert!(r.trace.last().unwrap().step_norm <= 1e-3);
    }
}

#[test]
fn staged_fit_reaches_the_same_optimum() {
    let d = common::designs(300);
    let data = sample_dataset(&study_spec(300, 5)).unwrap();
    let direct = fit(&data, &d, &FitOptions::default()).unwrap();
    let staged = fit(&data, &d, &FitOptions { staged: true, ..Default::default() }).unwrap();
    assert!(staged.bb.converged && staged.gp.converged);
    assert!((direct.loglik_full - staged.loglik_full).abs() < 1e-6);
}

#[test]
fn separability_is_exact() {
    let d = common::designs(200);
    let data = sample_dataset(&study_spec(200, 8)).unwrap();
    let alone = fit_bb(&data, &d, &FitOptions::default()).unwrap();
    let joint = fit(&data, &d, &FitOptions::default()).unwrap();
    assert_eq!(alone, joint.bb);
    let mut other = d.clone();
    let z = other.z_lambda().map(|v| v * 0.5 + 0.25);
    other = other.replace(Block::Lambda, z, d.columns(Block::Lambda).to_vec()).unwrap();
    let perturbed = fit(&data, &other, &FitOptions::default()).unwrap();
    assert_eq!(perturbed.bb.coefficients, joint.bb.coefficients);
    assert_eq!(perturbed.bb.covariance, joint.bb.covariance);
}

#[test]
fn lr_test_of_a_genuinely_zero_coefficient() {
    // lambda gains a sequence main effect that is zero in truth
    let full_formula = common::final_formula_with_lambda(&["stage", "session", "sequence", "session*sequence"]);
    let m = 300;
    let full_d = full_formula.build(&common::covariates(m), m, 4).unwrap();
    let red_d = common::designs(m);
    let data = sample_dataset(&study_spec(m, 12)).unwrap();
    let full = fit_gp(&data, &full_d, &FitOptions::default()).unwrap();
    let red = fit_gp(&data, &red_d, &FitOptions::default()).unwrap();
    let t = lr_test(&full, &red).unwrap();
    assert_eq!(t.df, 1);
    assert!(t.lr_stat >= 0.0 && t.p_value > 0.0 && t.p_value <= 1.0);
    let same = lr_test(&full, &full).unwrap();
    assert_eq!((same.lr_stat, same.p_value), (0.0, 1.0));
}

#[test]
fn zero_design_column_takes_the_ridge_path() {
    let m = 60;
    let d = common::designs(m);
    let data = sample_replicate(&study_spec(m, 1), 0).unwrap();
    let z = d.z_mu().clone().insert_column(4, 0.0);
    let mut cols = d.columns(Block::Mu).to_vec();
    cols.push(bbgp::model::ColumnMeta::new("empty", "all-zero column", 2));
    let mut mats = Block::ALL.map(|b| d.matrix(b).clone());
    mats[Block::Mu as usize] = z;
    let metas = Block::ALL.map(|b| if b == Block::Mu { cols.clone() } else { d.columns(b).to_vec() });
    let padded = DesignSet::with_columns(m, 4, mats, metas).unwrap();
    let r = fit_bb(&data, &padded, &FitOptions::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.non_identified, vec![4]);
    assert!(r.trace.iter().any(|t| t.ridge > 0.0));
}

#[test]
fn published_coefficients_give_the_expected_cells() {
    let formula = common::final_formula();
    let p = common::published();
    let point = |stage: &str, hand: &str, session: &str, sequence: &str| {
        let lv = common::levels(stage, hand, session, sequence);
        PredictionPoint {
            label: format!("{stage}{hand}{session}{sequence}"),
            z_mu: formula.design_row(Block::Mu, &lv).unwrap(),
            z_theta: formula.design_row(Block::Theta, &lv).unwrap(),
            z_lambda: formula.design_row(Block::Lambda, &lv).unwrap(),
        }
    };
    let lv = common::levels("0", "P", "B", "A");
    let req = PredictionRequest {
        profiles: vec![UnitProfile {
            label: "normal, preferred".into(),
            z_alpha: formula.design_row(Block::Alpha, &lv).unwrap(),
            z_delta: formula.design_row(Block::Delta, &lv).unwrap(),
            points: vec![point("0", "P", "B", "A"), point("0", "P", "F", "A"), point("2", "N", "F", "C")],
        }],
    };
    let s = &predict_at(&p, &req).unwrap()[0];
    let (a, d) = (1.30f64.exp(), (-1.32f64).exp());
    assert!((s.alpha.value - a).abs() < 1e-12);
    let l = 1.68f64.exp();
    let mu = logistic(1.86);
    assert!((s.points[0].e_n.value - l * a).abs() < 1e-10);
    assert!((s.points[0].e_x.value - mu * l * a).abs() < 1e-10);
    let l_fa = (1.68f64 + 0.52).exp();
    assert!((s.cov_n[0][1].value - l * l_fa * a * d).abs() < 1e-10);
    // advanced, non-preferred, final control
    assert!((s.points[2].mu.value - logistic(1.86 - 1.35 + 1.38 - 1.79)).abs() < 1e-12);
    assert!((s.points[2].theta.value - (-1.07f64 + 1.31 - 1.49).exp()).abs() < 1e-12);
    assert!((s.points[2].lambda.value - (1.68f64 - 0.71 + 0.52 - 0.22).exp()).abs() < 1e-12);
}

#[test]
fn mismatched_shapes_are_configuration_errors() {
    let d = DesignSet::intercepts(3, 2).unwrap();
    let data = bbgp::RepeatedCountData::from_counts(&[vec![(1, 2)], vec![(0, 1)]]).unwrap();
    assert!(matches!(fit(&data, &d, &FitOptions::default()), Err(bbgp::Error::Dimension(_))));
}
