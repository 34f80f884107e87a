//! Library results against independent implementations and frozen values.

use nalgebra::{DMatrix, DVector};
use nonprob::dr::{dr_bias_min, dr_separate, PopSizeMode};
use nonprob::mi::{mi_glm, mi_nn, mi_npar, NparOptions};
use nonprob::propensity::{fit_mle, pseudo_hessian, pseudo_loglik, PsInput, PsLink, PsOptions};
use nonprob::variance::{analytic_variance_dr, stratified_variance};
use nonprob::{irls_fit, Design, Family, NonProbSample, ProbSample, Reference, INTERCEPT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

fn cols(k: usize) -> Vec<String> {
    let mut c = vec![INTERCEPT.to_string()];
    c.extend((1..k).map(|j| format!("x{j}")));
    c
}

#[test]
fn pseudo_loglik_small_instance() {
    // values from a separate script evaluating the pseudo log-likelihood term by term
    let x_np = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -1.2, 1.0, 2.0]);
    let x_p = DMatrix::from_row_slice(4, 2, &[1.0, 0.3, 1.0, -0.7, 1.0, 1.1, 1.0, 0.0]);
    let input = PsInput::from_parts(cols(2), x_np, vec![1.0, 2.0, 1.0], x_p, vec![10.0, 12.0, 8.0, 15.0]);
    let g = DVector::from_vec(vec![-1.5, 0.4]);
    for (link, want) in [
        (PsLink::Logit, -15.475130786706806),
        (PsLink::Probit, -14.419390441391055),
        (PsLink::Cloglog, -16.080479396026007),
    ] {
        let got = pseudo_loglik(&input, &g, link, 1e-12).unwrap();
        assert!((got - want).abs() < 1e-10 * want.abs(), "{link:?}: {got} vs {want}");
    }
}

#[test]
fn stratified_total_variance_three_strata() {
    let z = [1.0, 2.5, 3.0, 4.0, 4.5, 7.0, 6.0, 8.0, 5.5];
    let s: Vec<String> = "aaabbcccc".chars().map(String::from).collect();
    assert!((stratified_variance(&z, &s) - 8.416666666666666).abs() < 1e-12);
}

/// Plain Newton-Raphson for a two-parameter Poisson log-linear model.
fn newton_poisson(x: &[f64], y: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut b = [0.0, 0.0];
    let mut info = [[0.0; 2]; 2];
    for _ in 0..50 {
        let (mut g0, mut g1) = (0.0, 0.0);
        info = [[0.0; 2]; 2];
        for (xi, yi) in x.iter().zip(y) {
            let mu = (b[0] + b[1] * xi).exp();
            g0 += yi - mu;
            g1 += (yi - mu) * xi;
            info[0][0] += mu;
            info[0][1] += mu * xi;
            info[1][1] += mu * xi * xi;
        }
        info[1][0] = info[0][1];
        let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
        let s0 = (info[1][1] * g0 - info[0][1] * g1) / det;
        let s1 = (-info[1][0] * g0 + info[0][0] * g1) / det;
        b[0] += s0;
        b[1] += s1;
        if s0.abs().max(s1.abs()) < 1e-13 {
            break;
        }
    }
    let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
    (b, [[info[1][1] / det, -info[0][1] / det], [-info[1][0] / det, info[0][0] / det]])
}

#[test]
fn poisson_irls_matches_newton_and_truth() {
    let n = 10_000;
    let truth = [0.5, -0.2];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> =
        x.iter().map(|xi| Poisson::new((truth[0] + truth[1] * xi).exp()).unwrap().sample(&mut rng)).collect();
    let design = Design::from_matrix(cols(2), DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] })).unwrap();
    let fit = irls_fit(&design, &y, Family::Poisson, &vec![1.0; n], None).unwrap();
    let (b, cov) = newton_poisson(&x, &y);
    for j in 0..2 {
        assert!((fit.coefficients[j] - b[j]).abs() < 1e-8, "coef {j}");
        let se = cov[j][j].sqrt();
        assert!(
            (fit.coefficients[j] - truth[j]).abs() < 3.0 * se,
            "coef {j} is {} SE from truth",
            (fit.coefficients[j] - truth[j]) / se
        );
    }
}

#[test]
fn logistic_propensity_recovers_truth() {
    // a census as the reference turns the pseudo likelihood into the ordinary one
    let n = 10_000;
    let truth = [-1.0, 0.8];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
    let sel: Vec<usize> =
        (0..n).filter(|&i| rng.random::<f64>() < PsLink::Logit.prob(truth[0] + truth[1] * x[(i, 1)])).collect();
    let x_np = x.select_rows(sel.iter());
    let input = PsInput::from_parts(cols(2), x_np, vec![1.0; sel.len()], x, vec![1.0; n]);
    let fit = fit_mle(&input, PsLink::Logit, &PsOptions::default()).unwrap();
    let h = pseudo_hessian(&input, &fit.gamma_vec(), PsLink::Logit, 1e-12).unwrap();
    let cov = (-h).try_inverse().unwrap();
    for j in 0..2 {
        let se = cov[(j, j)].sqrt();
        assert!((fit.gamma[j] - truth[j]).abs() < 3.0 * se, "gamma {j}: {} vs {}", fit.gamma[j], truth[j]);
    }
}

fn synthetic(seed: u64, n_np: usize, n_p: usize, m: impl Fn(f64) -> f64) -> (NonProbSample, ProbSample) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_np = DMatrix::from_fn(n_np, 2, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 4.0 - 2.0 });
    let y: Vec<f64> = (0..n_np).map(|i| m(x_np[(i, 1)]) + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let x_p = DMatrix::from_fn(n_p, 2, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 4.0 - 2.0 });
    let d: Vec<f64> = (0..n_p).map(|_| 5.0 + rng.random::<f64>() * 10.0).collect();
    let np = NonProbSample::new(Design::from_matrix(cols(2), x_np).unwrap(), vec![("y".into(), y)], None).unwrap();
    let p = ProbSample::new(Design::from_matrix(cols(2), x_p).unwrap(), d, None).unwrap();
    (np, p)
}

#[test]
fn nearest_neighbour_imputation_matches_a_scan() {
    let (np, p) = synthetic(8, 400, 150, |x| x * x);
    let y = np.outcome("y").unwrap();
    for k in [1, 5] {
        let est = mi_nn(&np, &p, "y", k).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (i, d) in p.weights().iter().enumerate() {
            let q = p.x()[(i, 1)];
            let mut order: Vec<usize> = (0..np.n()).collect();
            order.sort_by(|&a, &b| {
                let da = (np.x()[(a, 1)] - q).abs();
                let db = (np.x()[(b, 1)] - q).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            });
            let mean = order[..k].iter().map(|&j| y[j]).sum::<f64>() / k as f64;
            num += d * mean;
            den += d;
        }
        assert!((est.mu - num / den).abs() < 1e-12, "k = {k}");
    }
}

#[test]
fn local_polynomial_beats_a_line_on_a_sine() {
    let truth = |x: f64| (2.0 * x).sin();
    let (np, p) = synthetic(13, 5000, 500, truth);
    let npar = mi_npar(&np, &p, "y", NparOptions::default()).unwrap();
    let glm = mi_glm(&np, Reference::Survey(&p), "y", Family::Gaussian).unwrap();
    let ise = |pred: &[f64]| pred.iter().enumerate().map(|(i, v)| (v - truth(p.x()[(i, 1)])).powi(2)).sum::<f64>();
    let (a, b) = (ise(&npar.pred_p), ise(&glm.pred_p));
    assert!(a < b, "local {a} vs linear {b}");
}

#[test]
fn joint_and_separate_doubly_robust_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 20_000;
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v + rng.sample::<f64, _>(StandardNormal)).collect();
    let sel: Vec<usize> = (0..n).filter(|&i| rng.random::<f64>() < PsLink::Logit.prob(-2.0 + 0.7 * x[i])).collect();
    let srs: Vec<usize> = rand::seq::index::sample(&mut rng, n, 800).into_vec();
    let design = |rows: &[usize]| {
        Design::from_matrix(cols(2), DMatrix::from_fn(rows.len(), 2, |i, j| if j == 0 { 1.0 } else { x[rows[i]] }))
            .unwrap()
    };
    let np = NonProbSample::new(design(&sel), vec![("y".into(), sel.iter().map(|&i| y[i]).collect())], None).unwrap();
    let p = ProbSample::new(design(&srs), vec![n as f64 / 800.0; 800], None).unwrap();
    let r = Reference::Survey(&p);

    let input = PsInput::new(&np, r).unwrap();
    let ps = fit_mle(&input, PsLink::Logit, &PsOptions::default()).unwrap();
    let out = irls_fit(np.design(), np.outcome("y").unwrap(), Family::Gaussian, np.case_weights(), None).unwrap();
    let sep = dr_separate(&np, r, &ps, &out, "y", PopSizeMode::Estimated, None).unwrap();
    let se = analytic_variance_dr(&sep, &input, &np, r).unwrap().se;
    let joint =
        dr_bias_min(&np, r, PsLink::Logit, Family::Gaussian, "y", &ps.gamma, &out.coefficients, &PsOptions::default())
            .unwrap();
    assert!((sep.mu - joint.mu).abs() < 3.0 * se, "{} vs {} (se {se})", sep.mu, joint.mu);
}
