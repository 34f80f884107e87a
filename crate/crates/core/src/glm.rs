//! Generalized linear models with canonical links, fitted by iteratively
//! reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Design;
use crate::error::{Error, Result};
use crate::linalg::{collinear_columns, max_abs, solve_spd, weighted_crossprod, weighted_xty};

const ETA_MAX: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
    Poisson,
}

impl Family {
    pub fn parse(s: &str) -> Result<Family> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "binomial" => Ok(Family::Binomial),
            "poisson" => Ok(Family::Poisson),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }

    pub fn link_name(&self) -> &'static str {
        match self {
            Family::Gaussian => "identity",
            Family::Binomial => "logit",
            Family::Poisson => "log",
        }
    }

    /// Mean function m(η).
    pub fn mean(&self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Binomial => logistic(eta),
            Family::Poisson => eta.min(ETA_MAX).exp(),
        }
    }

    /// dm/dη.
    pub fn mean_deriv(&self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => {
                let p = logistic(eta);
                p * (1.0 - p)
            }
            Family::Poisson => eta.min(ETA_MAX).exp(),
        }
    }

    /// d²m/dη².
    pub fn mean_deriv2(&self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => 0.0,
            Family::Binomial => {
                let p = logistic(eta);
                p * (1.0 - p) * (1.0 - 2.0 * p)
            }
            Family::Poisson => eta.min(ETA_MAX).exp(),
        }
    }

    /// Variance function v(μ).
    pub fn variance(&self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    /// Canonical link g(μ).
    pub fn link(&self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Binomial => {
                let m = mu.clamp(1e-10, 1.0 - 1e-10);
                (m / (1.0 - m)).ln()
            }
            Family::Poisson => mu.max(1e-10).ln(),
        }
    }

    fn check_response(&self, y: &[f64]) -> Result<()> {
        let bad = match self {
            Family::Gaussian => y.iter().position(|v| !v.is_finite()),
            Family::Binomial => y.iter().position(|v| !(0.0..=1.0).contains(v)),
            Family::Poisson => y.iter().position(|v| !(*v >= 0.0) || !v.is_finite()),
        };
        match bad {
            Some(i) => Err(Error::InvalidArgument(format!(
                "response value {} at row {} is invalid for the {} family",
                y[i],
                i + 1,
                self.name()
            ))),
            None => Ok(()),
        }
    }

    /// Unit log-likelihood (up to terms free of μ; unit dispersion).
    pub fn loglik_unit(&self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Gaussian => -0.5 * (y - mu).powi(2),
            Family::Binomial => {
                let m = mu.clamp(1e-300, 1.0 - 1e-16);
                let mut l = 0.0;
                if y > 0.0 {
                    l += y * m.ln();
                }
                if y < 1.0 {
                    l += (1.0 - y) * (1.0 - m).ln();
                }
                l
            }
            Family::Poisson => {
                let m = mu.max(1e-300);
                if y > 0.0 {
                    y * m.ln() - m
                } else {
                    -m
                }
            }
        }
    }

    pub fn deviance_unit(&self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Gaussian => (y - mu).powi(2),
            Family::Binomial => {
                let m = mu.clamp(1e-300, 1.0 - 1e-16);
                let mut d = 0.0;
                if y > 0.0 {
                    d += y * (y / m).ln();
                }
                if y < 1.0 {
                    d += (1.0 - y) * ((1.0 - y) / (1.0 - m)).ln();
                }
                2.0 * d
            }
            Family::Poisson => {
                let m = mu.max(1e-300);
                if y > 0.0 {
                    2.0 * (y * (y / m).ln() - (y - m))
                } else {
                    2.0 * m
                }
            }
        }
    }
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GlmOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8 }
    }
}

/// A fitted outcome model.
#[derive(Debug, Clone, Serialize)]
pub struct OutcomeFit {
    pub columns: Vec<String>,
    pub family: Family,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    /// Deviance after each accepted iteration (first entry: start value).
    pub deviance_trace: Vec<f64>,
    /// Fitted means on the training sample.
    pub fitted: Vec<f64>,
    /// Fitted probabilities collapsed to 0/1 on more than 10% of rows.
    pub separation: bool,
}

impl OutcomeFit {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.coefficients.len() {
            return Err(Error::ColumnMismatch(format!(
                "model has {} coefficients, matrix has {} columns",
                self.coefficients.len(),
                x.ncols()
            )));
        }
        Ok(x * self.beta())
    }

    /// Mean predictions for a design with the training columns.
    pub fn predict(&self, design: &Design) -> Result<Vec<f64>> {
        if design.columns() != self.columns.as_slice() {
            return Err(Error::ColumnMismatch(format!(
                "prediction columns {:?} differ from training columns {:?}",
                design.columns(),
                self.columns
            )));
        }
        self.predict_matrix(design.matrix())
    }

    pub fn predict_matrix(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(self.linear_predictor(x)?.iter().map(|&e| self.family.mean(e)).collect())
    }
}

pub fn log_likelihood(family: Family, x: &DMatrix<f64>, y: &[f64], w: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().zip(y).zip(w).map(|((&e, &yi), &wi)| wi * family.loglik_unit(yi, family.mean(e))).sum()
}

/// Score of the canonical-link log-likelihood: X' w (y − μ).
pub fn score(family: Family, x: &DMatrix<f64>, y: &[f64], w: &[f64], beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    let resid: Vec<f64> = eta.iter().zip(y).map(|(&e, &yi)| yi - family.mean(e)).collect();
    weighted_xty(x, w, &resid)
}

fn deviance(family: Family, eta: &DVector<f64>, y: &[f64], w: &[f64]) -> f64 {
    eta.iter().zip(y).zip(w).map(|((&e, &yi), &wi)| wi * family.deviance_unit(yi, family.mean(e))).sum()
}

pub fn irls_fit(
    design: &Design,
    y: &[f64],
    family: Family,
    case_weights: &[f64],
    start: Option<&[f64]>,
) -> Result<OutcomeFit> {
    irls_fit_with(design, y, family, case_weights, start, GlmOptions::default())
}

pub fn irls_fit_with(
    design: &Design,
    y: &[f64],
    family: Family,
    case_weights: &[f64],
    start: Option<&[f64]>,
    opts: GlmOptions,
) -> Result<OutcomeFit> {
    let x = design.matrix();
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n || case_weights.len() != n {
        return Err(Error::InvalidArgument(format!(
            "design has {n} rows, response {} and weights {}",
            y.len(),
            case_weights.len()
        )));
    }
    family.check_response(y)?;
    let collinear = collinear_columns(x, case_weights, design.columns());
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }

    let mut beta = match start {
        Some(s) if s.len() == p => DVector::from_column_slice(s),
        Some(s) => return Err(Error::InvalidArgument(format!("start has length {}, expected {p}", s.len()))),
        None => {
            let mut b = DVector::zeros(p);
            if let Some(j) = design.intercept_index() {
                let sw: f64 = case_weights.iter().sum();
                let ybar = y.iter().zip(case_weights).map(|(a, b)| a * b).sum::<f64>() / sw;
                b[j] = family.link(ybar);
            }
            b
        }
    };

    let mut eta = x * &beta;
    let mut dev = deviance(family, &eta, y, case_weights);
    let mut trace = vec![dev];
    let mut converged = false;
    let mut iterations = 0;
    let mut separated = false;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let work: Vec<f64> = eta.iter().zip(case_weights).map(|(&e, &w)| w * family.mean_deriv(e)).collect();
        let resid: Vec<f64> = eta.iter().zip(y).map(|(&e, &yi)| yi - family.mean(e)).collect();
        let grad = weighted_xty(x, case_weights, &resid);
        let info = weighted_crossprod(x, &work);
        let step = match solve_spd(&info, &grad) {
            Some(s) => s,
            None => {
                let cols = collinear_columns(x, &work, design.columns());
                return Err(Error::RankDeficient { columns: cols });
            }
        };

        let mut scale = 1.0;
        let mut new_beta = &beta + &step;
        let mut new_eta = x * &new_beta;
        let mut new_dev = deviance(family, &new_eta, y, case_weights);
        let mut halvings = 0;
        while !(new_dev <= dev + 1e-12 * (dev.abs() + 1.0)) && halvings < 30 {
            scale *= 0.5;
            halvings += 1;
            new_beta = &beta + &step * scale;
            new_eta = x * &new_beta;
            new_dev = deviance(family, &new_eta, y, case_weights);
        }
        if !(new_dev <= dev + 1e-12 * (dev.abs() + 1.0)) {
            // no improving step: the current iterate is as good as it gets
            converged = max_abs(&grad) < 1e-6 * (1.0 + dev.abs());
            break;
        }
        let change = max_abs(&(&new_beta - &beta));
        let dev_change = (dev - new_dev).abs();
        beta = new_beta;
        eta = new_eta;
        dev = new_dev;
        trace.push(dev);

        if family == Family::Binomial {
            let near = eta.iter().map(|&e| family.mean(e)).filter(|m| *m < 1e-10 || *m > 1.0 - 1e-10).count();
            separated = near as f64 > 0.1 * n as f64;
        }
        if change < opts.tol || (separated && dev_change < 1e-12 * (dev.abs() + 0.1)) {
            converged = true;
            break;
        }
    }

    if separated {
        log::warn!("binomial outcome model: fitted probabilities are 0 or 1 on over 10% of rows (near separation)");
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "IRLS".into(),
            iterations,
            residual: max_abs(&score(family, x, y, case_weights, &beta)),
            last_iterate: beta.iter().copied().collect(),
        });
    }
    let fitted = eta.iter().map(|&e| family.mean(e)).collect();
    Ok(OutcomeFit {
        columns: design.columns().to_vec(),
        family,
        coefficients: beta.iter().copied().collect(),
        converged,
        iterations,
        deviance: dev,
        deviance_trace: trace,
        fitted,
        separation: separated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::INTERCEPT;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(x: DMatrix<f64>, with_intercept: bool) -> Design {
        let mut names: Vec<String> = Vec::new();
        for j in 0..x.ncols() {
            if j == 0 && with_intercept {
                names.push(INTERCEPT.into());
            } else {
                names.push(format!("x{j}"));
            }
        }
        Design::from_matrix(names, x).unwrap()
    }

    #[test]
    fn intercept_only_binomial_fits_mean() {
        let y = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let d = design(DMatrix::from_element(8, 1, 1.0), true);
        let fit = irls_fit(&d, &y, Family::Binomial, &[1.0; 8], None).unwrap();
        assert!((fit.coefficients[0] - (0.25f64 / 0.75).ln()).abs() < 1e-12);
        assert!(fit.fitted.iter().all(|m| (m - 0.25).abs() < 1e-12));
    }

    #[test]
    fn gaussian_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() });
        let y: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * x[(i, 1)] - x[(i, 2)] + rng.random::<f64>()).collect();
        let d = design(x.clone(), true);
        let fit = irls_fit(&d, &y, Family::Gaussian, &vec![1.0; n], None).unwrap();
        let xtx = x.tr_mul(&x);
        let ols = xtx.cholesky().unwrap().solve(&x.tr_mul(&DVector::from_vec(y.clone())));
        for j in 0..3 {
            assert!((fit.coefficients[j] - ols[j]).abs() < 1e-10);
        }
        // residuals sum to zero with an intercept
        let r: f64 = y.iter().zip(&fit.fitted).map(|(a, b)| a - b).sum();
        assert!(r.abs() < 1e-10);
    }

    #[test]
    fn binomial_prediction_at_zero() {
        let fit = OutcomeFit {
            columns: vec![INTERCEPT.into(), "x".into()],
            family: Family::Binomial,
            coefficients: vec![0.0, 1.3],
            converged: true,
            iterations: 1,
            deviance: 0.0,
            deviance_trace: vec![],
            fitted: vec![],
            separation: false,
        };
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        assert_eq!(fit.predict_matrix(&x).unwrap(), vec![0.5]);
        assert!(fit.predict_matrix(&DMatrix::zeros(1, 3)).is_err());
        let d = Design::from_matrix(vec!["a".into(), "b".into()], x).unwrap();
        assert!(matches!(fit.predict(&d), Err(Error::ColumnMismatch(_))));
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let x = DMatrix::from_row_slice(4, 3, &[1., 1., 2., 1., 2., 4., 1., 3., 6., 1., 4., 8.]);
        let d = design(x, true);
        let err = irls_fit(&d, &[1., 2., 3., 4.], Family::Gaussian, &[1.0; 4], None).unwrap_err();
        match err {
            Error::RankDeficient { columns } => assert_eq!(columns, vec!["x2"]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn invalid_responses_rejected() {
        let d = design(DMatrix::from_element(2, 1, 1.0), true);
        assert!(irls_fit(&d, &[0.0, 2.0], Family::Binomial, &[1.0; 2], None).is_err());
        assert!(irls_fit(&d, &[-1.0, 2.0], Family::Poisson, &[1.0; 2], None).is_err());
    }

    #[test]
    fn separation_warns_not_fails() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let fit = irls_fit(&design(x, true), &y, Family::Binomial, &[1.0; 20], None).unwrap();
        assert!(fit.separation);
    }

    #[test]
    fn deviance_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for family in [Family::Binomial, Family::Poisson, Family::Gaussian] {
            let n = 200;
            let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    let eta = 0.3 + x[(i, 1)] - 0.5 * x[(i, 2)];
                    match family {
                        Family::Binomial => (rng.random::<f64>() < logistic(eta)) as u8 as f64,
                        Family::Poisson => (eta.exp() * 3.0 * rng.random::<f64>()).floor(),
                        Family::Gaussian => eta + rng.random::<f64>(),
                    }
                })
                .collect();
            let fit = irls_fit(&design(x, true), &y, family, &vec![1.0; n], Some(&[2.0, -2.0, 2.0])).unwrap();
            for pair in fit.deviance_trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9 * pair[0].abs().max(1.0), "{family:?}: {pair:?}");
            }
        }
    }
}
