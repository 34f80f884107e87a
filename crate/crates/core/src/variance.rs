//! Standard errors and confidence intervals.
//!
//! Analytic variances linearize the stacked estimating equations of each
//! estimator (a sandwich `H⁻¹ V H⁻ᵀ`). Contributions from the
//! non-probability sample are weighted by `1 − π̂`; contributions from the
//! reference survey use a stratified with-replacement design variance. The
//! bootstrap resamples the non-probability sample with replacement and the
//! survey by a stratified rescaling scheme.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{NonProbSample, ProbSample, Reference};
use crate::dr::{DrEstimate, DrVariant};
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::ipw::{IpwEstimate, IpwForm};
use crate::linalg::{central_jacobian, inverse};
use crate::mi::{MiEstimate, MiMethod};
use crate::propensity::{EstMethod, HVariant, PsFit, PsInput, PsLink};

pub const DEFAULT_REPLICATES: usize = 100;
/// Largest tolerated share of failed bootstrap replicates.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarMethod {
    Analytic,
    Bootstrap,
}

impl VarMethod {
    pub fn name(&self) -> &'static str {
        match self {
            VarMethod::Analytic => "analytic",
            VarMethod::Bootstrap => "bootstrap",
        }
    }

    pub fn parse(s: &str) -> Result<VarMethod> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(VarMethod::Analytic),
            "bootstrap" => Ok(VarMethod::Bootstrap),
            other => Err(Error::InvalidArgument(format!("unknown variance method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceResult {
    pub se: f64,
    pub variance: f64,
    pub method: VarMethod,
    /// Non-probability (model) part.
    pub v1: Option<f64>,
    /// Reference-survey (design) part.
    pub v2: Option<f64>,
    pub replicates: Vec<f64>,
    pub failed: usize,
    /// Set when the variance treats an estimated population size as fixed.
    pub caveat: bool,
    pub warnings: Vec<String>,
}

impl VarianceResult {
    fn analytic(v1: f64, v2: Option<f64>) -> VarianceResult {
        let variance = (v1 + v2.unwrap_or(0.0)).max(0.0);
        VarianceResult {
            se: variance.sqrt(),
            variance,
            method: VarMethod::Analytic,
            v1: Some(v1),
            v2,
            replicates: Vec::new(),
            failed: 0,
            caveat: false,
            warnings: Vec::new(),
        }
    }
}

/// Normal-theory interval `point ± z·se`.
pub fn confidence_interval(point: f64, se: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if !(se >= 0.0) {
        return Err(Error::InvalidArgument(format!("standard error must be non-negative, got {se}")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok((point - z * se, point + z * se))
}

fn strata_groups(strata: &[String]) -> Vec<Vec<usize>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.iter().enumerate() {
        let g = groups.entry(s.as_str()).or_default();
        if g.is_empty() {
            order.push(s.as_str());
        }
        g.push(i);
    }
    order.into_iter().map(|s| groups.remove(s).unwrap_or_default()).collect()
}

/// Stratified with-replacement covariance of the rows of `z`:
/// Σ_h n_h/(n_h−1) Σ_{i∈h} (z_i − z̄_h)(z_i − z̄_h)'. Single-unit strata add
/// nothing.
pub fn stratified_covariance(z: &DMatrix<f64>, strata: &[String]) -> DMatrix<f64> {
    let q = z.ncols();
    let mut v = DMatrix::zeros(q, q);
    for rows in strata_groups(strata) {
        let nh = rows.len();
        if nh < 2 {
            continue;
        }
        let mut mean = DVector::zeros(q);
        for &i in &rows {
            mean += z.row(i).transpose();
        }
        mean /= nh as f64;
        let f = nh as f64 / (nh as f64 - 1.0);
        for &i in &rows {
            let e = z.row(i).transpose() - &mean;
            v.ger(f, &e, &e, 1.0);
        }
    }
    v
}

/// Scalar version of [`stratified_covariance`].
pub fn stratified_variance(z: &[f64], strata: &[String]) -> f64 {
    stratified_covariance(&DMatrix::from_column_slice(z.len(), 1, z), strata)[(0, 0)]
}

/// Linearized design variance of the weighted mean Σ d v / Σ d.
pub fn design_mean_variance(values: &[f64], weights: &[f64], strata: &[String]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, d)| v * d).sum::<f64>() / total;
    let z: Vec<f64> = values.iter().zip(weights).map(|(v, d)| d * (v - mean) / total).collect();
    stratified_variance(&z, strata)
}

/// Per-unit contributions to an estimating function Φ(θ) =
/// Σ_NP rows + Σ_P rows + constant.
struct Contributions {
    np: DMatrix<f64>,
    p: Option<DMatrix<f64>>,
    constant: DVector<f64>,
}

impl Contributions {
    fn total(&self) -> DVector<f64> {
        let mut t = self.constant.clone();
        for r in self.np.row_iter() {
            t += r.transpose();
        }
        if let Some(p) = &self.p {
            for r in p.row_iter() {
                t += r.transpose();
            }
        }
        t
    }
}

/// Rows of the propensity estimating function at γ.
fn ps_rows(input: &PsInput, gamma: &DVector<f64>, link: PsLink, eq: PsEquation, clip: f64) -> Result<Contributions> {
    let k = input.n_cols();
    let n = input.x_np.nrows();
    let mut np = DMatrix::zeros(n, k);
    for (i, e) in (&input.x_np * gamma).iter().enumerate() {
        let p = link.prob_clipped(*e, clip);
        let c = match eq {
            PsEquation::Mle => link.d1(*e) / (p * (1.0 - p)),
            PsEquation::Gee(HVariant::X) => 1.0,
            PsEquation::Gee(HVariant::XOverPi) => 1.0 / p,
        };
        np.set_row(i, &(input.x_np.row(i) * (input.w_np[i] * c)));
    }
    let mut constant = DVector::zeros(k);
    let p = match (&input.x_p, eq) {
        (None, PsEquation::Gee(HVariant::XOverPi)) => {
            constant -= &input.totals;
            None
        }
        (None, _) => return Err(Error::Unsupported("this propensity equation needs survey rows".into())),
        (Some(x_p), _) => {
            let mut rows = DMatrix::zeros(x_p.nrows(), k);
            for (i, e) in (x_p * gamma).iter().enumerate() {
                let p = link.prob_clipped(*e, clip);
                let c = match eq {
                    PsEquation::Mle => link.d1(*e) / (1.0 - p),
                    PsEquation::Gee(HVariant::X) => p,
                    PsEquation::Gee(HVariant::XOverPi) => 1.0,
                };
                rows.set_row(i, &(x_p.row(i) * (-input.d_p[i] * c)));
            }
            Some(rows)
        }
    };
    Ok(Contributions { np, p, constant })
}

#[derive(Debug, Clone, Copy)]
enum PsEquation {
    Mle,
    Gee(HVariant),
}

impl PsEquation {
    fn of(ps: &PsFit) -> PsEquation {
        match ps.method {
            EstMethod::Mle => PsEquation::Mle,
            EstMethod::Gee => PsEquation::Gee(ps.h.unwrap_or(HVariant::XOverPi)),
        }
    }
}

/// Meat pieces: Σ_NP (1 − π_i) ψ_i ψ_i' and the stratified survey part.
fn meat(c: &Contributions, pi_np: &[f64], strata: &[String]) -> (DMatrix<f64>, DMatrix<f64>) {
    let q = c.np.ncols();
    let mut v_np = DMatrix::zeros(q, q);
    for (i, r) in c.np.row_iter().enumerate() {
        let r = r.transpose();
        v_np.ger(1.0 - pi_np[i], &r, &r, 1.0);
    }
    let v_p = match &c.p {
        Some(p) => stratified_covariance(p, strata),
        None => DMatrix::zeros(q, q),
    };
    debug_assert!((&v_np - v_np.transpose()).amax() <= 1e-6 * v_np.amax().max(1.0));
    (v_np, v_p)
}

fn quad(a: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (a.transpose() * m * a)[(0, 0)]
}

fn bread_inverse(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    inverse(h, "sandwich bread matrix; use bootstrap variance instead")
}

/// Sandwich variance of the IPW mean, stacked over (μ, γ).
///
/// `strata` labels the survey rows of `input` (ignored for totals).
pub fn analytic_variance_ipw(
    est: &IpwEstimate,
    ps: &PsFit,
    input: &PsInput,
    y: &[f64],
    strata: &[String],
) -> Result<VarianceResult> {
    if !ps.converged {
        return Err(Error::InvalidArgument("propensity fit did not converge".into()));
    }
    let k = input.n_cols();
    let gamma = ps.gamma_vec();
    let eq = PsEquation::of(ps);
    let rows = ps_rows(input, &gamma, ps.link, eq, ps.clip)?;
    let n = input.x_np.nrows();
    let q = k + 1;
    let mu = est.mu;
    let eta = &input.x_np * &gamma;

    let mut np = DMatrix::zeros(n, q);
    let mut h = DMatrix::zeros(q, q);
    let mut h_mu_gamma = DVector::zeros(k);
    for i in 0..n {
        let p = ps.scores_np[i];
        let w = input.w_np[i];
        let resid = match est.form {
            IpwForm::Hajek => y[i] - mu,
            IpwForm::Ht => y[i],
        };
        np[(i, 0)] = w * resid / p;
        np.view_mut((i, 1), (1, k)).copy_from(&rows.np.row(i));
        h_mu_gamma.axpy(-w * resid * ps.link.d1(eta[i]) / (p * p), &input.x_np.row(i).transpose(), 1.0);
    }
    h[(0, 0)] = match est.form {
        IpwForm::Hajek => -ps.n_hat,
        IpwForm::Ht => -est.pop_size.unwrap_or(ps.n_hat),
    };
    h.view_mut((0, 1), (1, k)).copy_from(&h_mu_gamma.transpose());
    let h_gg = match eq {
        PsEquation::Mle => crate::propensity::pseudo_hessian(input, &gamma, ps.link, ps.clip)?,
        PsEquation::Gee(hv) => crate::propensity::gee_jacobian(input, &gamma, ps.link, hv, ps.clip)?,
    };
    h.view_mut((1, 1), (k, k)).copy_from(&h_gg);

    let p_rows = rows.p.as_ref().map(|p| {
        let mut m = DMatrix::zeros(p.nrows(), q);
        m.view_mut((0, 1), (p.nrows(), k)).copy_from(p);
        m
    });
    let stacked = Contributions { np, p: p_rows, constant: DVector::zeros(q) };
    let (v_np, v_p) = meat(&stacked, &ps.scores_np, strata);
    let hinv = bread_inverse(&h)?;
    let a = hinv.row(0).transpose();
    let v2 = stacked.p.as_ref().map(|_| quad(&a, &v_p));
    Ok(VarianceResult::analytic(quad(&a, &v_np), v2))
}

/// Two-part variance of the GLM mass-imputation mean: the outcome-model
/// part V1 from the linearized β̂ and, with a survey, the design part V2 of
/// the weighted mean of m̂. Population totals give V1 only.
pub fn analytic_variance_mi_glm(
    est: &MiEstimate,
    np: &NonProbSample,
    reference: Reference<'_>,
) -> Result<VarianceResult> {
    let fit = est
        .outcome_fit
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("mass imputation estimate has no outcome model".into()))?;
    if !fit.converged {
        return Err(Error::InvalidArgument("outcome fit did not converge".into()));
    }
    let y = np.outcome(&est.target)?;
    let x = np.x();
    let w = np.case_weights();
    let eta = fit.linear_predictor(x)?;
    let k = x.ncols();
    let mut info = DMatrix::zeros(k, k);
    let mut m = DMatrix::zeros(k, k);
    for i in 0..x.nrows() {
        let xi = x.row(i).transpose();
        let r = y[i] - fit.family.mean(eta[i]);
        info.ger(w[i] * fit.family.mean_deriv(eta[i]), &xi, &xi, 1.0);
        m.ger(w[i] * w[i] * r * r, &xi, &xi, 1.0);
    }
    let (c, v2) = match reference {
        Reference::Survey(p) => {
            let xp = p.design().select_columns(&fit.columns)?;
            let ep = fit.linear_predictor(xp.matrix())?;
            let mut c = DVector::zeros(k);
            for (i, e) in ep.iter().enumerate() {
                c.axpy(p.weights()[i] * fit.family.mean_deriv(*e), &xp.matrix().row(i).transpose(), 1.0);
            }
            c /= p.n_hat();
            (c, Some(design_mean_variance(&est.pred_p, p.weights(), p.strata())))
        }
        Reference::Population(b) => {
            if fit.family != Family::Gaussian {
                return Err(Error::Unsupported("population totals need the gaussian family".into()));
            }
            let n =
                b.pop_size().ok_or_else(|| Error::Benchmark("population size is needed for the variance".into()))?;
            (b.totals_for(&fit.columns)? / n, None)
        }
    };
    let a = inverse(&info, "outcome information matrix")? * c;
    Ok(VarianceResult::analytic(quad(&a, &m), v2))
}

/// Design variance of the weighted mean of imputed values over the survey.
pub fn analytic_variance_mi_nn(est: &MiEstimate, p: &ProbSample) -> Result<VarianceResult> {
    if est.y_star.len() != p.n() {
        return Err(Error::Degenerate("imputed values do not cover the survey".into()));
    }
    let v2 = design_mean_variance(&est.y_star, p.weights(), p.strata());
    let mut out = VarianceResult::analytic(0.0, Some(v2));
    out.v1 = None;
    if matches!(est.method, MiMethod::PmmA | MiMethod::PmmB) {
        out.warnings
            .push("analytic variance for predictive mean matching is approximate; bootstrap is recommended".into());
    }
    Ok(out)
}

/// Sandwich variance of a doubly robust mean over θ = (μ_c, μ_p, γ, β), with
/// a finite-difference bread. Always carries the caveat flag: the divisor
/// N̂ is treated through the stacked equations only to first order.
///
/// `ps_input` holds the selection columns; `np` and `reference` carry the
/// outcome columns.
pub fn analytic_variance_dr(
    est: &DrEstimate,
    ps_input: &PsInput,
    np: &NonProbSample,
    reference: Reference<'_>,
) -> Result<VarianceResult> {
    let kg = ps_input.n_cols();
    let kb = est.outcome.coefficients.len();
    let y = np.outcome(&est.target)?;
    let x_np = np.x().clone();
    let (x_p, d_p, strata, totals_b) = match reference {
        Reference::Survey(p) => {
            let xp = p.design().select_columns(&est.outcome.columns)?;
            (Some(xp.matrix().clone()), p.weights().to_vec(), p.strata().to_vec(), None)
        }
        Reference::Population(b) => (None, Vec::new(), Vec::new(), Some(b.totals_for(&est.outcome.columns)?)),
    };
    let family = est.outcome.family;
    let link = est.ps.link;
    let clip = est.ps.clip;
    let known = est.variant == DrVariant::KnownN;
    let n_fixed = est.n_correction;
    let bias_min = est.variant == DrVariant::BiasMin;
    let eq = PsEquation::of(&est.ps);
    if bias_min && kg != kb {
        return Err(Error::InvalidArgument("bias minimization needs matching model dimensions".into()));
    }
    let q = 2 + kg + kb;
    let n = x_np.nrows();
    let w = np.case_weights().to_vec();

    let contributions = |theta: &DVector<f64>| -> Result<Contributions> {
        let mu_c = theta[0];
        let mu_p = theta[1];
        let gamma = theta.rows(2, kg).into_owned();
        let beta = theta.rows(2 + kg, kb).into_owned();
        let eg = &ps_input.x_np * &gamma;
        let eb = &x_np * &beta;
        let mut rows = DMatrix::zeros(n, q);
        let mut constant = DVector::zeros(q);
        for i in 0..n {
            let p = link.prob_clipped(eg[i], clip);
            let m = family.mean(eb[i]);
            let r = y[i] - m;
            rows[(i, 0)] = if known { w[i] * r / p } else { w[i] * (r - mu_c) / p };
            let xi = x_np.row(i);
            if bias_min {
                rows.view_mut((i, 2), (1, kg)).copy_from(&(xi * (w[i] * (1.0 / p - 1.0) * r)));
                rows.view_mut((i, 2 + kg), (1, kb)).copy_from(&(xi * (w[i] * family.mean_deriv(eb[i]) / p)));
            } else {
                rows.view_mut((i, 2 + kg), (1, kb)).copy_from(&(xi * (w[i] * r)));
            }
        }
        if known {
            constant[0] = -n_fixed * mu_c;
        }
        if !bias_min {
            let ps_c = ps_rows(ps_input, &gamma, link, eq, clip)?;
            rows.view_mut((0, 2), (n, kg)).copy_from(&ps_c.np);
            constant.rows_mut(2, kg).copy_from(&ps_c.constant);
        }
        let p_rows = match &x_p {
            Some(xp) => {
                let ebp = xp * &beta;
                let mut pr = DMatrix::zeros(xp.nrows(), q);
                for i in 0..xp.nrows() {
                    let m = family.mean(ebp[i]);
                    pr[(i, 1)] = if known { d_p[i] * m } else { d_p[i] * (m - mu_p) };
                    if bias_min {
                        pr.view_mut((i, 2 + kg), (1, kb))
                            .copy_from(&(xp.row(i) * (-d_p[i] * family.mean_deriv(ebp[i]))));
                    }
                }
                if known {
                    constant[1] = -n_fixed * mu_p;
                }
                if !bias_min {
                    if let Some(pp) = ps_rows(ps_input, &gamma, link, eq, clip)?.p {
                        pr.view_mut((0, 2), (pp.nrows(), kg)).copy_from(&pp);
                    }
                }
                Some(pr)
            }
            None => {
                let t = totals_b.as_ref().expect("totals present without survey rows");
                constant[1] = t.dot(&beta) - est.n_projection * mu_p;
                if bias_min {
                    constant.rows_mut(2 + kg, kb).copy_from(&(-t));
                }
                None
            }
        };
        Ok(Contributions { np: rows, p: p_rows, constant })
    };

    let theta = DVector::from_iterator(
        q,
        [est.correction, est.projection]
            .into_iter()
            .chain(est.ps.gamma.iter().copied())
            .chain(est.outcome.coefficients.iter().copied()),
    );
    let at = contributions(&theta)?;
    let h = central_jacobian(|t| contributions(t).map(|c| c.total()), &theta)?;
    let hinv = bread_inverse(&h)?;
    let (v_np, v_p) = meat(&at, &est.ps.scores_np, &strata);
    let a = (hinv.row(0) + hinv.row(1)).transpose();
    let v2 = at.p.as_ref().map(|_| quad(&a, &v_p));
    let mut out = VarianceResult::analytic(quad(&a, &v_np), v2);
    out.caveat = true;
    if !known {
        out.warnings
            .push("population size replaced by its estimate; treat the analytic standard error with caution".into());
    }
    Ok(out)
}

/// Stratified rescaling resample of a survey: within each stratum, n_h − 1
/// draws with replacement, each drawn unit's weight multiplied by
/// n_h/(n_h − 1) and by its draw count. Single-unit strata are kept as is.
pub fn subbootstrap<R: Rng + ?Sized>(p: &ProbSample, rng: &mut R) -> Result<ProbSample> {
    let d = p.weights();
    let mut rows = Vec::with_capacity(p.n());
    let mut weights = Vec::with_capacity(p.n());
    for group in strata_groups(p.strata()) {
        let nh = group.len();
        if nh < 2 {
            rows.push(group[0]);
            weights.push(d[group[0]]);
            continue;
        }
        let mut counts = vec![0usize; nh];
        for _ in 0..nh - 1 {
            counts[rng.random_range(0..nh)] += 1;
        }
        let f = nh as f64 / (nh as f64 - 1.0);
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                rows.push(group[j]);
                weights.push(d[group[j]] * f * c as f64);
            }
        }
    }
    p.reweighted(&rows, weights)
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { replicates: DEFAULT_REPLICATES, seed: 0 }
    }
}

/// Replicate generator for replicate `b`: a ChaCha stream keyed by the seed.
pub fn replicate_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

/// 1/(B−1) Σ (r_b − point)².
pub fn boot_variance(point: f64, replicates: &[f64]) -> f64 {
    let b = replicates.len();
    if b < 2 {
        return f64::NAN;
    }
    replicates.iter().map(|r| (r - point).powi(2)).sum::<f64>() / (b as f64 - 1.0)
}

/// Bootstrap standard errors for every component returned by `estimator`.
///
/// Each replicate draws n_NP units with replacement from the
/// non-probability sample and, for a survey reference, a [`subbootstrap`]
/// resample. Replicates that fail are dropped and counted.
pub fn bootstrap_variance<F>(
    estimator: F,
    np: &NonProbSample,
    reference: Reference<'_>,
    point: &[f64],
    opts: &BootstrapOptions,
) -> Result<Vec<VarianceResult>>
where
    F: Fn(&NonProbSample, Reference<'_>) -> Result<Vec<f64>> + Sync,
{
    let b_total = opts.replicates;
    if b_total < 2 {
        return Err(Error::InvalidArgument(format!("bootstrap needs at least 2 replicates, got {b_total}")));
    }
    let n = np.n();
    let runs: Vec<Result<Vec<f64>>> = (0..b_total)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(opts.seed, b);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let np_b = np.select_rows(&rows);
            let out = match reference {
                Reference::Survey(p) => {
                    let p_b = subbootstrap(p, &mut rng)?;
                    estimator(&np_b, Reference::Survey(&p_b))?
                }
                Reference::Population(_) => estimator(&np_b, reference)?,
            };
            if out.len() != point.len() || out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("replicate {b} returned an unusable estimate")));
            }
            Ok(out)
        })
        .collect();

    let mut reps: Vec<Vec<f64>> = vec![Vec::with_capacity(b_total); point.len()];
    let mut failed = 0;
    for r in runs {
        match r {
            Ok(v) => {
                for (j, x) in v.into_iter().enumerate() {
                    reps[j].push(x);
                }
            }
            Err(e) => {
                log::debug!("bootstrap replicate failed: {e}");
                failed += 1;
            }
        }
    }
    if failed as f64 > MAX_FAILURE_RATE * b_total as f64 || b_total - failed < 2 {
        return Err(Error::BootstrapFailures { failed, total: b_total });
    }
    Ok(point
        .iter()
        .zip(reps)
        .map(|(&mu, replicates)| {
            let variance = boot_variance(mu, &replicates);
            let mut warnings = Vec::new();
            if failed > 0 {
                warnings.push(format!("{failed} of {b_total} bootstrap replicates failed and were dropped"));
            }
            VarianceResult {
                se: variance.sqrt(),
                variance,
                method: VarMethod::Bootstrap,
                v1: None,
                v2: None,
                replicates,
                failed,
                caveat: false,
                warnings,
            }
        })
        .collect())
}
