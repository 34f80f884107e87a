//! Doubly robust estimators: an IPW-weighted residual correction added to
//! a model-based projection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{NonProbSample, Reference};
use crate::error::{Error, Result};
use crate::glm::{Family, OutcomeFit};
use crate::linalg::{max_abs, numeric_jacobian, solve_general};
use crate::propensity::{finish, EstMethod, PsFit, PsInput, PsLink, PsOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrVariant {
    KnownN,
    EstimatedN,
    BiasMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopSizeMode {
    Known,
    Estimated,
}

#[derive(Debug, Clone, Serialize)]
pub struct DrEstimate {
    pub target: String,
    pub mu: f64,
    pub variant: DrVariant,
    pub correction: f64,
    pub projection: f64,
    /// Divisors used for the two terms.
    pub n_correction: f64,
    pub n_projection: f64,
    pub ps: PsFit,
    pub outcome: OutcomeFit,
    /// Max-norm of each block of the joint system (bias minimization only).
    pub block_residuals: Option<(f64, f64)>,
    pub iterations: usize,
}

/// Σ d m̂ over the reference and its divisor; totals-only references need an
/// identity-link model so the projection reduces to totals'β̂.
fn projection_sum(reference: Reference<'_>, outcome: &OutcomeFit) -> Result<(f64, f64)> {
    match reference {
        Reference::Survey(p) => {
            let m = outcome.predict(p.design())?;
            Ok((m.iter().zip(p.weights()).map(|(a, b)| a * b).sum(), p.n_hat()))
        }
        Reference::Population(b) => {
            if outcome.family != Family::Gaussian {
                return Err(Error::Unsupported(format!(
                    "population totals with the {} family: the projection term needs individual survey rows",
                    outcome.family.name()
                )));
            }
            let t = b.totals_for(&outcome.columns)?;
            let n = b
                .pop_size()
                .ok_or_else(|| Error::Benchmark("population size is needed for the projection term".into()))?;
            Ok((t.dot(&outcome.beta()), n))
        }
    }
}

fn correction_sum(np: &NonProbSample, ps: &PsFit, outcome: &OutcomeFit, target: &str) -> Result<f64> {
    let y = np.outcome(target)?;
    let m = outcome.predict_matrix(np.x())?;
    Ok(y.iter().zip(&m).zip(&ps.ipw_weights).zip(np.case_weights()).map(|(((y, m), d), w)| w * d * (y - m)).sum())
}

/// Separately fitted models combined in either population-size mode.
pub fn dr_separate(
    np: &NonProbSample,
    reference: Reference<'_>,
    ps: &PsFit,
    outcome: &OutcomeFit,
    target: &str,
    mode: PopSizeMode,
    pop_size: Option<f64>,
) -> Result<DrEstimate> {
    let corr = correction_sum(np, ps, outcome, target)?;
    let (proj, n_ref) = projection_sum(reference, outcome)?;
    let (n_c, n_p, variant) = match mode {
        PopSizeMode::Known => {
            let n = pop_size
                .or_else(|| match reference {
                    Reference::Population(b) => b.pop_size(),
                    Reference::Survey(_) => None,
                })
                .ok_or_else(|| Error::InvalidArgument("known-N mode needs the population size".into()))?;
            if !(n > 0.0) {
                return Err(Error::InvalidArgument(format!("population size must be positive, got {n}")));
            }
            (n, n, DrVariant::KnownN)
        }
        PopSizeMode::Estimated => (ps.n_hat, n_ref, DrVariant::EstimatedN),
    };
    let correction = corr / n_c;
    let projection = proj / n_p;
    Ok(DrEstimate {
        target: target.to_string(),
        mu: correction + projection,
        variant,
        correction,
        projection,
        n_correction: n_c,
        n_projection: n_p,
        ps: ps.clone(),
        outcome: outcome.clone(),
        block_residuals: None,
        iterations: 0,
    })
}

/// Data for the joint bias-minimization system.
pub struct BiasMinSystem<'a> {
    pub input: &'a PsInput,
    pub y: &'a [f64],
    pub link: PsLink,
    pub family: Family,
    pub clip: f64,
}

impl BiasMinSystem<'_> {
    fn k(&self) -> usize {
        self.input.n_cols()
    }

    /// Stacked (J1, J2) at θ = (γ, β).
    pub fn residual(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let k = self.k();
        let gamma = theta.rows(0, k).into_owned();
        let beta = theta.rows(k, k).into_owned();
        let x = &self.input.x_np;
        let eg = x * &gamma;
        let eb = x * &beta;
        let mut j1 = DVector::zeros(k);
        let mut j2 = DVector::zeros(k);
        for i in 0..x.nrows() {
            let p = self.link.prob_clipped(eg[i], self.clip);
            let w = self.input.w_np[i];
            let m = self.family.mean(eb[i]);
            let m1 = self.family.mean_deriv(eb[i]);
            let xi = x.row(i).transpose();
            j1.axpy(w * (1.0 / p - 1.0) * (self.y[i] - m), &xi, 1.0);
            j2.axpy(w * m1 / p, &xi, 1.0);
        }
        match &self.input.x_p {
            Some(xp) => {
                let ebp = xp * &beta;
                for i in 0..xp.nrows() {
                    let m1 = self.family.mean_deriv(ebp[i]);
                    j2.axpy(-self.input.d_p[i] * m1, &xp.row(i).transpose(), 1.0);
                }
            }
            None => {
                if self.family != Family::Gaussian {
                    return Err(Error::Unsupported(
                        "joint bias minimization against population totals needs an identity-link outcome".into(),
                    ));
                }
                j2 -= &self.input.totals;
            }
        }
        let mut out = DVector::zeros(2 * k);
        out.rows_mut(0, k).copy_from(&j1);
        out.rows_mut(k, k).copy_from(&j2);
        Ok(out)
    }

    /// Analytic Jacobian of [`Self::residual`].
    pub fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let k = self.k();
        let gamma = theta.rows(0, k).into_owned();
        let beta = theta.rows(k, k).into_owned();
        let x = &self.input.x_np;
        let eg = x * &gamma;
        let eb = x * &beta;
        let mut jac = DMatrix::zeros(2 * k, 2 * k);
        let mut a = DMatrix::zeros(k, k);
        let mut b = DMatrix::zeros(k, k);
        let mut c = DMatrix::zeros(k, k);
        let mut d = DMatrix::zeros(k, k);
        for i in 0..x.nrows() {
            let p = self.link.prob_clipped(eg[i], self.clip);
            let dp = self.link.d1(eg[i]);
            let w = self.input.w_np[i];
            let m = self.family.mean(eb[i]);
            let m1 = self.family.mean_deriv(eb[i]);
            let m2 = self.family.mean_deriv2(eb[i]);
            let xi = x.row(i).transpose();
            let inv_d = -dp / (p * p);
            a.ger(w * inv_d * (self.y[i] - m), &xi, &xi, 1.0);
            b.ger(-w * (1.0 / p - 1.0) * m1, &xi, &xi, 1.0);
            c.ger(w * inv_d * m1, &xi, &xi, 1.0);
            d.ger(w * m2 / p, &xi, &xi, 1.0);
        }
        if let Some(xp) = &self.input.x_p {
            let ebp = xp * &beta;
            for i in 0..xp.nrows() {
                let xi = xp.row(i).transpose();
                d.ger(-self.input.d_p[i] * self.family.mean_deriv2(ebp[i]), &xi, &xi, 1.0);
            }
        }
        jac.view_mut((0, 0), (k, k)).copy_from(&a);
        jac.view_mut((0, k), (k, k)).copy_from(&b);
        jac.view_mut((k, 0), (k, k)).copy_from(&c);
        jac.view_mut((k, k), (k, k)).copy_from(&d);
        jac
    }
}

/// Joint estimation of (γ, β) by minimizing the asymptotic bias, started
/// from the separate fits.
#[allow(clippy::too_many_arguments)]
pub fn dr_bias_min(
    np: &NonProbSample,
    reference: Reference<'_>,
    link: PsLink,
    family: Family,
    target: &str,
    start_gamma: &[f64],
    start_beta: &[f64],
    opts: &PsOptions,
) -> Result<DrEstimate> {
    let input = PsInput::new(np, reference)?;
    let k = input.n_cols();
    if start_gamma.len() != k || start_beta.len() != k {
        return Err(Error::InvalidArgument(format!(
            "bias minimization needs selection and outcome models of the same dimension ({k}); got {} and {}",
            start_gamma.len(),
            start_beta.len()
        )));
    }
    let y = np.outcome(target)?;
    let sys = BiasMinSystem { input: &input, y, link, family, clip: opts.clip };
    let mut theta = DVector::from_iterator(2 * k, start_gamma.iter().chain(start_beta).copied());
    let mut r = sys.residual(&theta)?;
    let mut obj = r.norm_squared();
    let scale = max_abs(&input.totals).max(1.0);
    let done = |r: &DVector<f64>| max_abs(r) < 1e-6 || max_abs(r) < 1e-12 * scale;
    let mut iterations = 0;

    while !done(&r) && iterations < opts.max_iter {
        iterations += 1;
        let jac = sys.jacobian(&theta);
        let step = match solve_general(&jac, &(-&r)) {
            Some(s) => s,
            None => {
                let fd = numeric_jacobian(|t| sys.residual(t), &theta)?;
                solve_general(&fd, &(-&r)).ok_or_else(|| Error::Singular("bias-minimization Jacobian".into()))?
            }
        };
        let mut t = 1.0;
        let mut cand = &theta + &step;
        let mut cand_r = sys.residual(&cand)?;
        let mut halvings = 0;
        while !(cand_r.norm_squared() < obj) && halvings < 30 {
            t *= 0.5;
            halvings += 1;
            cand = &theta + &step * t;
            cand_r = sys.residual(&cand)?;
        }
        if !(cand_r.norm_squared() < obj) {
            break;
        }
        theta = cand;
        r = cand_r;
        obj = r.norm_squared();
    }

    let b1 = max_abs(&r.rows(0, k).into_owned());
    let b2 = max_abs(&r.rows(k, k).into_owned());
    if !(done(&r) || max_abs(&r) < 1e-9 * scale) {
        return Err(Error::NoConvergence {
            what: format!("bias minimization (block residuals {b1:.3e}, {b2:.3e})"),
            iterations,
            residual: r.norm(),
            last_iterate: theta.iter().copied().collect(),
        });
    }

    let gamma = theta.rows(0, k).into_owned();
    let beta = theta.rows(k, k).into_owned();
    let ps = finish(&input, gamma, link, EstMethod::Gee, None, opts, iterations, r.rows(0, k).into_owned());
    let fitted: Vec<f64> = (np.x() * &beta).iter().map(|&e| family.mean(e)).collect();
    let outcome = OutcomeFit {
        columns: input.columns.clone(),
        family,
        coefficients: beta.iter().copied().collect(),
        converged: true,
        iterations,
        deviance: y.iter().zip(&fitted).map(|(a, b)| family.deviance_unit(*a, *b)).sum(),
        deviance_trace: Vec::new(),
        fitted,
        separation: false,
    };
    let mut est = dr_separate(np, reference, &ps, &outcome, target, PopSizeMode::Estimated, None)?;
    est.variant = DrVariant::BiasMin;
    est.block_residuals = Some((b1, b2));
    est.iterations = iterations;
    Ok(est)
}
