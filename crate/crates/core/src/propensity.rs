//! Propensity-score models for membership in the non-probability sample.
//!
//! Two fitting routes are available: maximizing the pseudo log-likelihood
//! (needs a reference survey) and solving a calibration-type estimating
//! equation, which also works against known population totals when the
//! estimating function is `x / π`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{NonProbSample, ProbSample, Reference};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, numeric_jacobian, solve_general, weighted_crossprod};

pub const DEFAULT_CLIP: f64 = 1e-6;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsLink {
    Logit,
    Probit,
    Cloglog,
}

impl PsLink {
    pub fn name(&self) -> &'static str {
        match self {
            PsLink::Logit => "logit",
            PsLink::Probit => "probit",
            PsLink::Cloglog => "cloglog",
        }
    }

    pub fn parse(s: &str) -> Result<PsLink> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(PsLink::Logit),
            "probit" => Ok(PsLink::Probit),
            "cloglog" => Ok(PsLink::Cloglog),
            other => Err(Error::InvalidArgument(format!("unknown link `{other}`"))),
        }
    }

    /// π(η), unclipped.
    pub fn prob(&self, eta: f64) -> f64 {
        match self {
            PsLink::Logit => crate::glm::logistic(eta),
            PsLink::Probit => 0.5 * erfc(-eta / std::f64::consts::SQRT_2),
            PsLink::Cloglog => -(-eta.min(700.0).exp()).exp_m1(),
        }
    }

    /// dπ/dη.
    pub fn d1(&self, eta: f64) -> f64 {
        match self {
            PsLink::Logit => {
                let p = crate::glm::logistic(eta);
                p * (1.0 - p)
            }
            PsLink::Probit => INV_SQRT_2PI * (-0.5 * eta * eta).exp(),
            PsLink::Cloglog => {
                let e = eta.min(700.0).exp();
                e * (-e).exp()
            }
        }
    }

    /// d²π/dη².
    pub fn d2(&self, eta: f64) -> f64 {
        match self {
            PsLink::Logit => {
                let p = crate::glm::logistic(eta);
                p * (1.0 - p) * (1.0 - 2.0 * p)
            }
            PsLink::Probit => -eta * self.d1(eta),
            PsLink::Cloglog => {
                let e = eta.min(700.0).exp();
                self.d1(eta) * (1.0 - e)
            }
        }
    }

    /// η such that π(η) = p.
    pub fn inverse(&self, p: f64) -> f64 {
        match self {
            PsLink::Logit => (p / (1.0 - p)).ln(),
            PsLink::Probit => {
                use statrs::distribution::{ContinuousCDF, Normal};
                Normal::standard().inverse_cdf(p)
            }
            PsLink::Cloglog => (-(-p).ln_1p()).ln(),
        }
    }

    pub fn prob_clipped(&self, eta: f64, clip: f64) -> f64 {
        self.prob(eta).clamp(clip, 1.0 - clip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstMethod {
    Mle,
    Gee,
}

impl EstMethod {
    pub fn parse(s: &str) -> Result<EstMethod> {
        match s.to_ascii_lowercase().as_str() {
            "mle" => Ok(EstMethod::Mle),
            "gee" => Ok(EstMethod::Gee),
            other => Err(Error::InvalidArgument(format!("unknown estimation method `{other}`"))),
        }
    }
}

/// The estimating function used by the GEE route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HVariant {
    /// h = x / π: the calibration equations Σ x/π = reference totals.
    #[serde(rename = "x/pi")]
    XOverPi,
    /// h = x: reproduces the logit pseudo score.
    #[serde(rename = "x")]
    X,
}

impl HVariant {
    /// Numeric codes of the command-line flag: 1 → x/π, 2 → x.
    pub fn from_code(code: u8) -> Result<HVariant> {
        match code {
            1 => Ok(HVariant::XOverPi),
            2 => Ok(HVariant::X),
            c => Err(Error::InvalidArgument(format!("gee h code must be 1 or 2, got {c}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            HVariant::XOverPi => "x/pi",
            HVariant::X => "x",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PsOptions {
    pub clip: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub start: Option<Vec<f64>>,
}

impl Default for PsOptions {
    fn default() -> Self {
        Self { clip: DEFAULT_CLIP, max_iter: 100, tol: 1e-8, start: None }
    }
}

/// Matrices feeding the propensity solvers. The reference side is either a
/// survey (rows and design weights) or bare totals.
#[derive(Debug, Clone)]
pub struct PsInput {
    pub columns: Vec<String>,
    pub x_np: DMatrix<f64>,
    pub w_np: Vec<f64>,
    pub x_p: Option<DMatrix<f64>>,
    pub d_p: Vec<f64>,
    pub totals: DVector<f64>,
}

impl PsInput {
    pub fn new(np: &NonProbSample, reference: Reference<'_>) -> Result<PsInput> {
        let columns = np.design().columns().to_vec();
        let totals = reference.totals(&columns)?;
        let (x_p, d_p) = match reference {
            Reference::Survey(p) => {
                if p.design().columns() != columns.as_slice() {
                    return Err(Error::ColumnMismatch(format!(
                        "selection columns {:?} differ from survey columns {:?}",
                        columns,
                        p.design().columns()
                    )));
                }
                (Some(p.x().clone()), p.weights().to_vec())
            }
            Reference::Population(_) => (None, Vec::new()),
        };
        Ok(PsInput { columns, x_np: np.x().clone(), w_np: np.case_weights().to_vec(), x_p, d_p, totals })
    }

    pub fn from_parts(
        columns: Vec<String>,
        x_np: DMatrix<f64>,
        w_np: Vec<f64>,
        x_p: DMatrix<f64>,
        d_p: Vec<f64>,
    ) -> PsInput {
        let totals = x_p.tr_mul(&DVector::from_column_slice(&d_p));
        PsInput { columns, x_np, w_np, x_p: Some(x_p), d_p, totals }
    }

    pub fn n_cols(&self) -> usize {
        self.x_np.ncols()
    }

    pub fn has_survey(&self) -> bool {
        self.x_p.is_some()
    }

    fn survey(&self, what: &str) -> Result<&DMatrix<f64>> {
        self.x_p.as_ref().ok_or_else(|| Error::Unsupported(format!("{what} requires a reference probability sample")))
    }

    /// Keeps the listed columns (by index) on both sides.
    pub fn select_columns(&self, idx: &[usize]) -> PsInput {
        PsInput {
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            x_np: self.x_np.select_columns(idx.iter()),
            w_np: self.w_np.clone(),
            x_p: self.x_p.as_ref().map(|x| x.select_columns(idx.iter())),
            d_p: self.d_p.clone(),
            totals: DVector::from_iterator(idx.len(), idx.iter().map(|&j| self.totals[j])),
        }
    }
}

/// A fitted propensity model.
#[derive(Debug, Clone, Serialize)]
pub struct PsFit {
    pub columns: Vec<String>,
    pub gamma: Vec<f64>,
    pub link: PsLink,
    pub method: EstMethod,
    pub h: Option<HVariant>,
    pub clip: f64,
    /// π̂ on the non-probability sample.
    pub scores_np: Vec<f64>,
    /// π̂ on the reference survey, when there is one.
    pub scores_p: Option<Vec<f64>>,
    /// 1/π̂ on the non-probability sample.
    pub ipw_weights: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Σ w/π̂ over the non-probability sample.
    pub n_hat: f64,
    /// Final value of the score or estimating function.
    pub residual: Vec<f64>,
}

impl PsFit {
    pub fn gamma_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.gamma)
    }

    /// Clipped propensity scores for rows of `x` (training column order).
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.gamma.len() {
            return Err(Error::ColumnMismatch(format!(
                "propensity model has {} coefficients, matrix has {} columns",
                self.gamma.len(),
                x.ncols()
            )));
        }
        Ok(scores(x, &self.gamma_vec(), self.link, self.clip))
    }
}

fn scores(x: &DMatrix<f64>, gamma: &DVector<f64>, link: PsLink, clip: f64) -> Vec<f64> {
    (x * gamma).iter().map(|&e| link.prob_clipped(e, clip)).collect()
}

/// ps_predict over a design matrix for a given fit.
pub fn ps_predict(fit: &PsFit, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    fit.predict(x)
}

/// Σ_NP w log(π/(1−π)) + Σ_P d log(1−π).
pub fn pseudo_loglik(input: &PsInput, gamma: &DVector<f64>, link: PsLink, clip: f64) -> Result<f64> {
    let x_p = input.survey("the pseudo log-likelihood")?;
    let mut l = 0.0;
    for (e, w) in (&input.x_np * gamma).iter().zip(&input.w_np) {
        let p = link.prob_clipped(*e, clip);
        l += w * (p / (1.0 - p)).ln();
    }
    for (e, d) in (x_p * gamma).iter().zip(&input.d_p) {
        let p = link.prob_clipped(*e, clip);
        l += d * (-p).ln_1p();
    }
    if !l.is_finite() {
        return Err(Error::Numeric("pseudo log-likelihood is not finite".into()));
    }
    Ok(l)
}

/// Gradient of the pseudo log-likelihood: Σ_NP w a(η) x − Σ_P d b(η) x with
/// a = π'/(π(1−π)) and b = π'/(1−π). For the logit link a = 1, b = π.
pub fn pseudo_score(input: &PsInput, gamma: &DVector<f64>, link: PsLink, clip: f64) -> Result<DVector<f64>> {
    let x_p = input.survey("the pseudo score")?;
    let k = input.n_cols();
    let mut u = DVector::zeros(k);
    for (i, e) in (&input.x_np * gamma).iter().enumerate() {
        let p = link.prob_clipped(*e, clip);
        let a = link.d1(*e) / (p * (1.0 - p));
        u.axpy(input.w_np[i] * a, &input.x_np.row(i).transpose(), 1.0);
    }
    for (i, e) in (x_p * gamma).iter().enumerate() {
        let p = link.prob_clipped(*e, clip);
        let b = link.d1(*e) / (1.0 - p);
        u.axpy(-input.d_p[i] * b, &x_p.row(i).transpose(), 1.0);
    }
    Ok(u)
}

/// Hessian of the pseudo log-likelihood.
pub fn pseudo_hessian(input: &PsInput, gamma: &DVector<f64>, link: PsLink, clip: f64) -> Result<DMatrix<f64>> {
    let x_p = input.survey("the pseudo Hessian")?;
    let k = input.n_cols();
    let mut h = DMatrix::zeros(k, k);
    for (i, e) in (&input.x_np * gamma).iter().enumerate() {
        let p = link.prob_clipped(*e, clip);
        let (d1, d2) = (link.d1(*e), link.d2(*e));
        let q = p * (1.0 - p);
        let a1 = (d2 * q - d1 * d1 * (1.0 - 2.0 * p)) / (q * q);
        let xi = input.x_np.row(i).transpose();
        h.ger(input.w_np[i] * a1, &xi, &xi, 1.0);
    }
    for (i, e) in (x_p * gamma).iter().enumerate() {
        let p = link.prob_clipped(*e, clip);
        let (d1, d2) = (link.d1(*e), link.d2(*e));
        let b1 = (d2 * (1.0 - p) + d1 * d1) / ((1.0 - p) * (1.0 - p));
        let xi = x_p.row(i).transpose();
        h.ger(-input.d_p[i] * b1, &xi, &xi, 1.0);
    }
    Ok(h)
}

/// Fisher-type information used when the Newton direction is not an ascent
/// direction: Σ_P d π'²/(π(1−π)) x x'.
fn pseudo_information(input: &PsInput, gamma: &DVector<f64>, link: PsLink, clip: f64) -> DMatrix<f64> {
    let x_p = input.x_p.as_ref().expect("survey checked by caller");
    let k = input.n_cols();
    let mut h = DMatrix::zeros(k, k);
    for (i, e) in (x_p * gamma).iter().enumerate() {
        let p = link.prob_clipped(*e, clip);
        let d1 = link.d1(*e);
        let xi = x_p.row(i).transpose();
        h.ger(input.d_p[i] * d1 * d1 / (p * (1.0 - p)), &xi, &xi, 1.0);
    }
    h
}

/// Estimating function G(γ).
///
/// * h = x:   Σ_NP w x − Σ_P d π x
/// * h = x/π: Σ_NP w x / π − reference totals
pub fn gee_residual(
    input: &PsInput,
    gamma: &DVector<f64>,
    link: PsLink,
    h: HVariant,
    clip: f64,
) -> Result<DVector<f64>> {
    let k = input.n_cols();
    match h {
        HVariant::X => {
            let x_p = input.survey("the h = x estimating function")?;
            let mut g = input.x_np.tr_mul(&DVector::from_column_slice(&input.w_np));
            let dp: Vec<f64> =
                (x_p * gamma).iter().zip(&input.d_p).map(|(e, d)| d * link.prob_clipped(*e, clip)).collect();
            g -= x_p.tr_mul(&DVector::from_vec(dp));
            Ok(g)
        }
        HVariant::XOverPi => {
            let inv: Vec<f64> =
                (&input.x_np * gamma).iter().zip(&input.w_np).map(|(e, w)| w / link.prob_clipped(*e, clip)).collect();
            let mut g = input.x_np.tr_mul(&DVector::from_vec(inv));
            debug_assert_eq!(g.len(), k);
            g -= &input.totals;
            Ok(g)
        }
    }
}

/// Analytic Jacobian of [`gee_residual`] with respect to γ.
pub fn gee_jacobian(
    input: &PsInput,
    gamma: &DVector<f64>,
    link: PsLink,
    h: HVariant,
    clip: f64,
) -> Result<DMatrix<f64>> {
    match h {
        HVariant::X => {
            let x_p = input.survey("the h = x estimating function")?;
            let w: Vec<f64> = (x_p * gamma).iter().zip(&input.d_p).map(|(e, d)| -d * link.d1(*e)).collect();
            Ok(weighted_crossprod(x_p, &w))
        }
        HVariant::XOverPi => {
            let w: Vec<f64> = (&input.x_np * gamma)
                .iter()
                .zip(&input.w_np)
                .map(|(e, wi)| {
                    let p = link.prob_clipped(*e, clip);
                    -wi * link.d1(*e) / (p * p)
                })
                .collect();
            Ok(weighted_crossprod(&input.x_np, &w))
        }
    }
}

fn start_vector(input: &PsInput, opts: &PsOptions) -> Result<DVector<f64>> {
    let k = input.n_cols();
    match &opts.start {
        Some(s) if s.len() == k => Ok(DVector::from_column_slice(s)),
        Some(s) => Err(Error::InvalidArgument(format!("selection start has length {}, expected {k}", s.len()))),
        None => Ok(DVector::zeros(k)),
    }
}

fn check_rows(input: &PsInput) -> Result<()> {
    let k = input.n_cols();
    if input.x_np.nrows() < k {
        return Err(Error::Degenerate(format!(
            "selection model has {k} columns but only {} non-probability rows",
            input.x_np.nrows()
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn finish(
    input: &PsInput,
    gamma: DVector<f64>,
    link: PsLink,
    method: EstMethod,
    h: Option<HVariant>,
    opts: &PsOptions,
    iterations: usize,
    residual: DVector<f64>,
) -> PsFit {
    let scores_np = scores(&input.x_np, &gamma, link, opts.clip);
    let scores_p = input.x_p.as_ref().map(|x| scores(x, &gamma, link, opts.clip));
    let ipw_weights: Vec<f64> = scores_np.iter().map(|p| 1.0 / p).collect();
    let n_hat = ipw_weights.iter().zip(&input.w_np).map(|(a, w)| a * w).sum();
    PsFit {
        columns: input.columns.clone(),
        gamma: gamma.iter().copied().collect(),
        link,
        method,
        h,
        clip: opts.clip,
        scores_np,
        scores_p,
        ipw_weights,
        converged: true,
        iterations,
        n_hat,
        residual: residual.iter().copied().collect(),
    }
}

/// Maximum pseudo-likelihood on prepared matrices.
pub fn fit_mle(input: &PsInput, link: PsLink, opts: &PsOptions) -> Result<PsFit> {
    input.survey("maximum pseudo-likelihood")?;
    check_rows(input)?;
    let mut gamma = start_vector(input, opts)?;
    let mut ll = pseudo_loglik(input, &gamma, link, opts.clip)?;
    let scale: f64 = input.d_p.iter().sum::<f64>().max(1.0);

    for iter in 1..=opts.max_iter {
        let u = pseudo_score(input, &gamma, link, opts.clip)?;
        let hess = pseudo_hessian(input, &gamma, link, opts.clip)?;
        let mut step = solve_general(&(-&hess), &u).filter(|s| s.dot(&u) > 0.0);
        if step.is_none() {
            step = solve_general(&pseudo_information(input, &gamma, link, opts.clip), &u);
        }
        let step = step.ok_or_else(|| Error::Singular("pseudo-likelihood Hessian".into()))?;

        let mut t = 1.0;
        let mut cand = &gamma + &step;
        let mut cand_ll = pseudo_loglik(input, &cand, link, opts.clip).unwrap_or(f64::NEG_INFINITY);
        let mut halvings = 0;
        while !(cand_ll >= ll - 1e-12 * ll.abs().max(1.0)) && halvings < 30 {
            t *= 0.5;
            halvings += 1;
            cand = &gamma + &step * t;
            cand_ll = pseudo_loglik(input, &cand, link, opts.clip).unwrap_or(f64::NEG_INFINITY);
        }
        let change = max_abs(&(&cand - &gamma));
        if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
            gamma = cand;
            ll = cand_ll;
        }
        let u_new = pseudo_score(input, &gamma, link, opts.clip)?;
        if change < opts.tol || max_abs(&u_new) < 1e-12 * scale {
            if max_abs(&u_new) < 1e-6 * scale {
                return Ok(finish(input, gamma, link, EstMethod::Mle, None, opts, iter, u_new));
            }
        }
        if halvings == 30 && change < opts.tol {
            break;
        }
    }
    let u = pseudo_score(input, &gamma, link, opts.clip)?;
    Err(Error::NoConvergence {
        what: "pseudo-likelihood Newton-Raphson".into(),
        iterations: opts.max_iter,
        residual: u.norm(),
        last_iterate: gamma.iter().copied().collect(),
    })
}

/// Root of the estimating function on prepared matrices.
pub fn fit_gee(input: &PsInput, link: PsLink, h: HVariant, opts: &PsOptions) -> Result<PsFit> {
    if h == HVariant::X && !input.has_survey() {
        return Err(Error::Unsupported(
            "h = x needs a reference probability sample; use h = x/pi with population totals".into(),
        ));
    }
    check_rows(input)?;
    let mut gamma = start_vector(input, opts)?;
    let resid = |g: &DVector<f64>| gee_residual(input, g, link, h, opts.clip);
    let mut g = resid(&gamma)?;
    let mut obj = g.norm_squared();
    let scale = max_abs(&input.totals).max(1.0);

    for iter in 1..=opts.max_iter {
        let jac = gee_jacobian(input, &gamma, link, h, opts.clip)?;
        let step = match solve_general(&jac, &(-&g)) {
            Some(s) => s,
            None => {
                let fd = numeric_jacobian(|t| resid(t), &gamma)?;
                solve_general(&fd, &(-&g)).ok_or_else(|| Error::Singular("estimating-equation Jacobian".into()))?
            }
        };
        let mut t = 1.0;
        let mut cand = &gamma + &step;
        let mut cand_g = resid(&cand)?;
        let mut halvings = 0;
        while !(cand_g.norm_squared() <= obj) && halvings < 30 {
            t *= 0.5;
            halvings += 1;
            cand = &gamma + &step * t;
            cand_g = resid(&cand)?;
        }
        if !(cand_g.norm_squared() <= obj) {
            break;
        }
        let change = max_abs(&(&cand - &gamma));
        gamma = cand;
        g = cand_g;
        obj = g.norm_squared();
        if max_abs(&g) < 1e-10 * scale || change < opts.tol * 1e-2 {
            if max_abs(&g) < 1e-7 * scale {
                return Ok(finish(input, gamma, link, EstMethod::Gee, Some(h), opts, iter, g));
            }
        }
    }
    if max_abs(&g) < 1e-7 * scale {
        return Ok(finish(input, gamma, link, EstMethod::Gee, Some(h), opts, opts.max_iter, g));
    }
    Err(Error::NoConvergence {
        what: "estimating-equation solver".into(),
        iterations: opts.max_iter,
        residual: g.norm(),
        last_iterate: gamma.iter().copied().collect(),
    })
}

pub fn ps_fit_mle(np: &NonProbSample, p: &ProbSample, link: PsLink, opts: &PsOptions) -> Result<PsFit> {
    fit_mle(&PsInput::new(np, Reference::Survey(p))?, link, opts)
}

pub fn ps_fit_gee(
    np: &NonProbSample,
    reference: Reference<'_>,
    link: PsLink,
    h: HVariant,
    opts: &PsOptions,
) -> Result<PsFit> {
    if h == HVariant::X && matches!(reference, Reference::Population(_)) {
        return Err(Error::Unsupported("population totals can only be used with h = x/pi".into()));
    }
    fit_gee(&PsInput::new(np, reference)?, link, h, opts)
}
