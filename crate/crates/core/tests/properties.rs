use nalgebra::DMatrix;
use nonprob::data::{align_designs, DataTable, Design, DesignSpec, Formula};
use nonprob::dr::{dr_separate, PopSizeMode};
use nonprob::ipw::ipw_estimate;
use nonprob::mi::{mi_glm, mi_nn, mi_pmm, PmmVariant};
use nonprob::pipeline::EstimatorKind;
use nonprob::propensity::{fit_gee, fit_mle, HVariant, PsInput, PsLink, PsOptions};
use nonprob::{irls_fit, Family, NonProbSample, ProbSample, Reference, INTERCEPT};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

fn design(x: &[f64]) -> Design {
    Design::from_matrix(
        vec![INTERCEPT.into(), "x".into()],
        DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] }),
    )
    .unwrap()
}

fn np_sample(x: &[f64], y: &[f64]) -> NonProbSample {
    NonProbSample::new(design(x), vec![("y".into(), y.to_vec())], None).unwrap()
}

fn p_sample(x: &[f64], d: &[f64]) -> ProbSample {
    ProbSample::new(design(x), d.to_vec(), None).unwrap()
}

/// Non-probability sample (x, y) and survey (x, d) with distinct x values.
fn samples() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (20usize..60, 15usize..40).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-2.0f64..2.0, m),
            prop::collection::vec(1.0f64..20.0, m),
        )
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn categorical_expansion(levels in prop::collection::vec(0u8..5, 3..40)) {
        let codes: Vec<String> = levels.iter().map(|l| format!("L{l}")).collect();
        let table = DataTable::from_columns(vec![("g", codes.clone())]).unwrap();
        let f = Formula::parse("~ g").unwrap();
        let spec = DesignSpec::infer(&f, &[&table]).unwrap();
        let a = Design::build(&spec, &table).unwrap();
        let b = Design::build(&spec, &table).unwrap();
        prop_assert_eq!(a.matrix(), b.matrix());
        let mut distinct = codes.clone();
        distinct.sort();
        distinct.dedup();
        prop_assert_eq!(a.n_cols(), distinct.len());
        for i in 0..a.n_rows() {
            let s: f64 = (1..a.n_cols()).map(|j| a.matrix()[(i, j)]).sum();
            prop_assert!(s <= 1.0);
        }
    }

    #[test]
    fn align_is_idempotent((x, y, xp, d) in samples()) {
        let (a, b) = align_designs(&np_sample(&x, &y), &p_sample(&xp, &d)).unwrap();
        let (a2, b2) = align_designs(&a, &b).unwrap();
        prop_assert_eq!(a.x(), a2.x());
        prop_assert_eq!(b.x(), b2.x());
    }

    #[test]
    fn gaussian_residuals_sum_to_zero((x, y, _, _) in samples(), w in prop::collection::vec(0.5f64..3.0, 60)) {
        let w = &w[..x.len()];
        let fit = irls_fit(&design(&x), &y, Family::Gaussian, w, None).unwrap();
        let r: f64 = y.iter().zip(&fit.fitted).zip(w).map(|((y, m), w)| w * (y - m)).sum();
        prop_assert!(r.abs() < 1e-10 * (1.0 + y.iter().map(|v| v.abs()).sum::<f64>()));
    }

    #[test]
    fn deviance_is_monotone((x, _, _, _) in samples(), seed in 0u64..1000) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| ((seed as usize + i) % 3) as f64 + v.abs().floor()).collect();
        let fit = irls_fit(&design(&x), &y, Family::Poisson, &vec![1.0; x.len()], None).unwrap();
        for w in fit.deviance_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn hajek_stays_within_outcome_range((x, y, xp, d) in samples()) {
        let np = np_sample(&x, &y);
        let p = p_sample(&xp, &d);
        let input = PsInput::new(&np, Reference::Survey(&p)).unwrap();
        if let Ok(ps) = fit_mle(&input, PsLink::Logit, &PsOptions::default()) {
            let mu = ipw_estimate(&np, &ps, "y", None).unwrap().mu;
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo - 1e-9 <= mu && mu <= hi + 1e-9);
        }
    }

    #[test]
    fn estimators_scale_with_y((x, y, xp, d) in samples(), c in 0.1f64..10.0) {
        let np = np_sample(&x, &y);
        let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
        let np_c = np_sample(&x, &scaled);
        let p = p_sample(&xp, &d);
        let r = Reference::Survey(&p);
        let input = PsInput::new(&np, r).unwrap();
        let Ok(ps) = fit_mle(&input, PsLink::Logit, &PsOptions::default()) else { return Ok(()) };
        for n in [None, Some(d.iter().sum::<f64>())] {
            let a = ipw_estimate(&np, &ps, "y", n).unwrap().mu;
            let b = ipw_estimate(&np_c, &ps, "y", n).unwrap().mu;
            prop_assert!((b - c * a).abs() < 1e-9 * (1.0 + b.abs()));
        }
        let out = irls_fit(np.design(), &y, Family::Gaussian, np.case_weights(), None).unwrap();
        let out_c = irls_fit(np.design(), &scaled, Family::Gaussian, np.case_weights(), None).unwrap();
        let a = dr_separate(&np, r, &ps, &out, "y", PopSizeMode::Estimated, None).unwrap();
        let b = dr_separate(&np_c, r, &ps, &out_c, "y", PopSizeMode::Estimated, None).unwrap();
        prop_assert!((b.mu - c * a.mu).abs() < 1e-8 * (1.0 + b.mu.abs()));
        prop_assert!((a.mu - a.projection - a.correction).abs() < 1e-12 * (1.0 + a.mu.abs()));
        let m = mi_glm(&np, r, "y", Family::Gaussian).unwrap().mu;
        let m_c = mi_glm(&np_c, r, "y", Family::Gaussian).unwrap().mu;
        prop_assert!((m_c - c * m).abs() < 1e-8 * (1.0 + m_c.abs()));
    }

    #[test]
    fn imputation_shifts_with_y((x, y, xp, d) in samples(), c in -10.0f64..10.0) {
        let np = np_sample(&x, &y);
        let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
        let np_c = np_sample(&x, &shifted);
        let p = p_sample(&xp, &d);
        let pairs = [
            (mi_nn(&np, &p, "y", 3).unwrap().mu, mi_nn(&np_c, &p, "y", 3).unwrap().mu),
            (
                mi_pmm(&np, &p, "y", 3, PmmVariant::A, Family::Gaussian).unwrap().mu,
                mi_pmm(&np_c, &p, "y", 3, PmmVariant::A, Family::Gaussian).unwrap().mu,
            ),
            (
                mi_glm(&np, Reference::Survey(&p), "y", Family::Gaussian).unwrap().mu,
                mi_glm(&np_c, Reference::Survey(&p), "y", Family::Gaussian).unwrap().mu,
            ),
        ];
        for (a, b) in pairs {
            prop_assert!((b - a - c).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn imputation_ignores_row_order((x, y, xp, d) in samples(), rot in 1usize..15) {
        let np = np_sample(&x, &y);
        let p = p_sample(&xp, &d);
        let rot = rot % x.len();
        let order: Vec<usize> = (0..x.len()).map(|i| (i + rot) % x.len()).collect();
        let np_r = np.select_rows(&order);
        let a = mi_glm(&np, Reference::Survey(&p), "y", Family::Gaussian).unwrap().mu;
        let b = mi_glm(&np_r, Reference::Survey(&p), "y", Family::Gaussian).unwrap().mu;
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        let a = mi_nn(&np, &p, "y", 1).unwrap().mu;
        let b = mi_nn(&np_r, &p, "y", 1).unwrap().mu;
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn survey_equal_to_sample_returns_the_sample_mean((x, y, _, _) in samples()) {
        let np = np_sample(&x, &y);
        let n = x.len() as f64;
        let p = p_sample(&x, &vec![1000.0 / n; x.len()]);
        let ybar = y.iter().sum::<f64>() / n;
        let glm = mi_glm(&np, Reference::Survey(&p), "y", Family::Gaussian).unwrap().mu;
        prop_assert!((glm - ybar).abs() < 1e-9 * (1.0 + ybar.abs()));
    }

    #[test]
    fn binomial_imputation_is_a_probability((x, y, xp, d) in samples()) {
        let yb: Vec<f64> = y.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
        let np = np_sample(&x, &yb);
        let p = p_sample(&xp, &d);
        if let Ok(e) = mi_glm(&np, Reference::Survey(&p), "y", Family::Binomial) {
            prop_assert!(e.mu > 0.0 && e.mu < 1.0);
        }
    }

    #[test]
    fn gee_with_x_is_the_logit_mle((x, y, xp, d) in samples()) {
        let np = np_sample(&x, &y);
        let p = p_sample(&xp, &d);
        let input = PsInput::new(&np, Reference::Survey(&p)).unwrap();
        if let (Ok(a), Ok(b)) = (
            fit_mle(&input, PsLink::Logit, &PsOptions::default()),
            fit_gee(&input, PsLink::Logit, HVariant::X, &PsOptions::default()),
        ) {
            for (u, v) in a.gamma.iter().zip(&b.gamma) {
                prop_assert!((u - v).abs() < 1e-8 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn dispatch_is_pure(sel: bool, out: bool, target: bool) {
        let a = EstimatorKind::from_presence(sel, out, target).ok();
        let b = EstimatorKind::from_presence(sel, out, target).ok();
        prop_assert_eq!(a, b);
        let want = match (sel, out) {
            (true, true) => Some(EstimatorKind::Dr),
            (false, true) => Some(EstimatorKind::Mi),
            (true, false) if target => Some(EstimatorKind::Ipw),
            _ => None,
        };
        prop_assert_eq!(a, want);
    }
}
