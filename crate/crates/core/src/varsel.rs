//! Penalized variable selection (SCAD, LASSO, MCP) for the outcome and
//! propensity models, with the tuning parameter chosen by K-fold
//! cross-validation.
//!
//! Both losses are handled through a local quadratic model
//! ½ β'Aβ − c'β which is minimized with the penalty by coordinate descent
//! using covariance updates: IRLS supplies the model for the outcome loss,
//! a Gauss-Newton linearization of the balance residual supplies it for
//! the propensity loss.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::INTERCEPT;
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::linalg::weighted_crossprod;
use crate::propensity::{gee_jacobian, gee_residual, HVariant, PsInput, PsLink, DEFAULT_CLIP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Penalty {
    #[serde(rename = "SCAD")]
    Scad,
    #[serde(rename = "lasso")]
    Lasso,
    #[serde(rename = "MCP")]
    Mcp,
}

impl Penalty {
    pub fn parse(s: &str) -> Result<Penalty> {
        match s.to_ascii_lowercase().as_str() {
            "scad" => Ok(Penalty::Scad),
            "lasso" => Ok(Penalty::Lasso),
            "mcp" => Ok(Penalty::Mcp),
            other => Err(Error::InvalidArgument(format!("unknown penalty `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Penalty::Scad => "SCAD",
            Penalty::Lasso => "lasso",
            Penalty::Mcp => "MCP",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub penalty: Penalty,
    /// Explicit grid; generated from λ_max when absent.
    pub lambdas: Option<Vec<f64>>,
    pub nlambda: usize,
    pub lambda_min_ratio: f64,
    pub nfolds: usize,
    pub a_scad: f64,
    pub a_mcp: f64,
    pub seed: u64,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            penalty: Penalty::Scad,
            lambdas: None,
            nlambda: 50,
            lambda_min_ratio: 0.001,
            nfolds: 10,
            a_scad: 3.7,
            a_mcp: 3.0,
            seed: 0,
            max_sweeps: 1000,
            tol: 1e-7,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_scad > 2.0) {
            return Err(Error::InvalidArgument("SCAD parameter a must exceed 2".into()));
        }
        if !(self.a_mcp > 1.0) {
            return Err(Error::InvalidArgument("MCP parameter a must exceed 1".into()));
        }
        if self.nfolds < 2 {
            return Err(Error::InvalidArgument("nfolds must be at least 2".into()));
        }
        if let Some(l) = &self.lambdas {
            if l.is_empty() || l.iter().any(|v| !(*v >= 0.0)) || l.windows(2).any(|w| !(w[0] > w[1])) {
                return Err(Error::InvalidArgument("lambda grid must be non-negative and strictly decreasing".into()));
            }
        } else if self.nlambda == 0 || !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::InvalidArgument("nlambda must be positive and lambda_min in (0, 1)".into()));
        }
        Ok(())
    }

    fn a(&self) -> f64 {
        match self.penalty {
            Penalty::Scad => self.a_scad,
            Penalty::Mcp => self.a_mcp,
            Penalty::Lasso => f64::INFINITY,
        }
    }

    fn grid(&self, lambda_max: f64) -> Vec<f64> {
        if let Some(l) = &self.lambdas {
            return l.clone();
        }
        let top = if lambda_max > 0.0 { lambda_max } else { 1e-8 };
        let n = self.nlambda;
        if n == 1 {
            return vec![top];
        }
        let ratio = self.lambda_min_ratio.ln();
        (0..n).map(|i| top * (ratio * i as f64 / (n - 1) as f64).exp()).collect()
    }
}

/// p_λ(|β|).
pub fn penalty_value(penalty: Penalty, a: f64, beta: f64, lambda: f64) -> f64 {
    let t = beta.abs();
    match penalty {
        Penalty::Lasso => lambda * t,
        Penalty::Scad => {
            if t <= lambda {
                lambda * t
            } else if t <= a * lambda {
                (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
            } else {
                (a + 1.0) * lambda * lambda / 2.0
            }
        }
        Penalty::Mcp => {
            if t <= a * lambda {
                lambda * t - t * t / (2.0 * a)
            } else {
                a * lambda * lambda / 2.0
            }
        }
    }
}

/// d p_λ(t) / dt at t = |β| (right derivative at 0).
pub fn penalty_derivative(penalty: Penalty, a: f64, beta: f64, lambda: f64) -> f64 {
    let t = beta.abs();
    match penalty {
        Penalty::Lasso => lambda,
        Penalty::Scad => {
            if t <= lambda {
                lambda
            } else if t <= a * lambda {
                (a * lambda - t) / (a - 1.0)
            } else {
                0.0
            }
        }
        Penalty::Mcp => (lambda - t / a).max(0.0),
    }
}

/// argmin_t ½ v t² − s t + p_λ(|t|) for v > 0, by comparing the minimizers
/// of each smooth piece.
pub fn threshold(penalty: Penalty, a: f64, s: f64, v: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return s / v;
    }
    let z = s.abs();
    let f = |t: f64| 0.5 * v * t * t - z * t + penalty_value(penalty, a, t, lambda);
    let mut cands = vec![0.0];
    // piece with linear term λ near zero
    let first_end = match penalty {
        Penalty::Lasso => f64::INFINITY,
        Penalty::Scad => lambda,
        Penalty::Mcp => a * lambda,
    };
    match penalty {
        Penalty::Lasso => cands.push(((z - lambda) / v).max(0.0)),
        Penalty::Scad => {
            cands.push(((z - lambda) / v).clamp(0.0, lambda));
            let q = v - 1.0 / (a - 1.0);
            let lin = z - a * lambda / (a - 1.0);
            if q > 0.0 {
                cands.push((lin / q).clamp(lambda, a * lambda));
            }
            cands.push(lambda);
            cands.push(a * lambda);
            cands.push((z / v).max(a * lambda));
        }
        Penalty::Mcp => {
            let q = v - 1.0 / a;
            if q > 0.0 {
                cands.push(((z - lambda) / q).clamp(0.0, first_end));
            }
            cands.push(first_end);
            cands.push((z / v).max(first_end));
        }
    }
    let mut best = 0.0;
    let mut best_f = f(0.0);
    for &t in &cands {
        let ft = f(t);
        if ft < best_f - 1e-15 * best_f.abs().max(1e-300) {
            best = t;
            best_f = ft;
        }
    }
    best * s.signum()
}

/// Coordinate descent for ½ β'Aβ − c'β + Σ_{penalized} p_λ(|β_j|).
/// Coordinates with `free[j] == false` stay at zero.
#[allow(clippy::too_many_arguments)]
fn cd_quadratic(
    a_mat: &DMatrix<f64>,
    c: &DVector<f64>,
    start: &DVector<f64>,
    penalized: &[bool],
    free: &[bool],
    cfg: &PenaltyConfig,
    lambda: f64,
) -> DVector<f64> {
    let p = c.len();
    let mut beta = start.clone();
    for j in 0..p {
        if !free[j] {
            beta[j] = 0.0;
        }
    }
    let mut r = c - a_mat * &beta;
    let a = cfg.a();
    for _ in 0..cfg.max_sweeps {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if !free[j] {
                continue;
            }
            let v = a_mat[(j, j)];
            if !(v > 0.0) {
                continue;
            }
            let s = r[j] + v * beta[j];
            let new = if penalized[j] { threshold(cfg.penalty, a, s, v, lambda) } else { s / v };
            let delta = new - beta[j];
            if delta != 0.0 {
                r.axpy(-delta, &a_mat.column(j), 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs() * v.sqrt());
            }
        }
        if max_change < cfg.tol {
            break;
        }
    }
    beta
}

fn total_penalty(beta: &DVector<f64>, penalized: &[bool], cfg: &PenaltyConfig, lambda: f64) -> f64 {
    beta.iter().zip(penalized).filter(|(_, p)| **p).map(|(b, _)| penalty_value(cfg.penalty, cfg.a(), *b, lambda)).sum()
}

/// A smooth loss with a local quadratic model.
trait Problem: Sync {
    fn dim(&self) -> usize;
    /// Loss value (unpenalized).
    fn loss(&self, beta: &DVector<f64>) -> Result<f64>;
    /// (A, c) such that the loss near `beta` is ½ b'Ab − c'b + const.
    fn quadratic(&self, beta: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)>;
    /// Starting point for the fully penalized model.
    fn null_start(&self) -> DVector<f64>;
}

/// Penalized fit at one λ by repeated quadratic models with step-halving.
fn fit_lambda<P: Problem>(
    prob: &P,
    start: &DVector<f64>,
    penalized: &[bool],
    free: &[bool],
    cfg: &PenaltyConfig,
    lambda: f64,
) -> Result<DVector<f64>> {
    let mut beta = start.clone();
    let obj = |b: &DVector<f64>| -> Result<f64> { Ok(prob.loss(b)? + total_penalty(b, penalized, cfg, lambda)) };
    let mut f0 = obj(&beta)?;
    for _ in 0..50 {
        let (a, c) = prob.quadratic(&beta)?;
        let target = cd_quadratic(&a, &c, &beta, penalized, free, cfg, lambda);
        let step = &target - &beta;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let cand = &beta + &step * t;
            let f1 = obj(&cand)?;
            if f1 <= f0 + 1e-12 * f0.abs().max(1e-12) {
                let change = (&cand - &beta).amax();
                let gain = f0 - f1;
                beta = cand;
                f0 = f1;
                accepted = true;
                if change < 1e-7 || gain <= 1e-10 * f0.abs() {
                    return Ok(beta);
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(beta)
}

/// Whole path with warm starts; entry i corresponds to lambdas[i].
fn fit_path<P: Problem>(
    prob: &P,
    lambdas: &[f64],
    penalized: &[bool],
    free: &[bool],
    cfg: &PenaltyConfig,
) -> Result<Vec<DVector<f64>>> {
    let null_free: Vec<bool> = free.iter().zip(penalized).map(|(f, p)| *f && !*p).collect();
    let mut beta = fit_lambda(prob, &prob.null_start(), penalized, &null_free, cfg, 0.0)?;
    let mut out = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        beta = fit_lambda(prob, &beta, penalized, free, cfg, l)?;
        out.push(beta.clone());
    }
    Ok(out)
}

/// λ_max from the gradient of the loss at the unpenalized-only optimum.
fn lambda_max<P: Problem>(
    prob: &P,
    penalized: &[bool],
    free: &[bool],
    cfg: &PenaltyConfig,
) -> Result<(f64, DVector<f64>)> {
    let null_free: Vec<bool> = free.iter().zip(penalized).map(|(f, p)| *f && !*p).collect();
    let beta0 = fit_lambda(prob, &prob.null_start(), penalized, &null_free, cfg, 0.0)?;
    let (a, c) = prob.quadratic(&beta0)?;
    let grad = &a * &beta0 - c;
    let lm = (0..grad.len()).filter(|&j| penalized[j] && free[j]).map(|j| grad[j].abs()).fold(0.0, f64::max);
    // margin for the null fit's convergence tolerance
    Ok((lm * (1.0 + 1e-4), beta0))
}

/// Column standardization as a linear map: x̃ = x M, β = M β̃.
#[derive(Debug, Clone)]
struct Standardizer {
    m: DMatrix<f64>,
    /// columns with zero spread are never selected
    usable: Vec<bool>,
    penalized: Vec<bool>,
}

impl Standardizer {
    fn new(columns: &[String], stacked: &DMatrix<f64>) -> Standardizer {
        let p = columns.len();
        let icpt = columns.iter().position(|c| c == INTERCEPT);
        let n = stacked.nrows() as f64;
        let mut m = DMatrix::identity(p, p);
        let mut usable = vec![true; p];
        let penalized: Vec<bool> = (0..p).map(|j| Some(j) != icpt).collect();
        for j in 0..p {
            if Some(j) == icpt {
                continue;
            }
            let col = stacked.column(j);
            let mean = col.sum() / n;
            let (center, var) = if icpt.is_some() {
                (mean, col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
            } else {
                (0.0, col.iter().map(|v| v * v).sum::<f64>() / n)
            };
            if !(var > 1e-24) {
                usable[j] = false;
                continue;
            }
            let sd = var.sqrt();
            m[(j, j)] = 1.0 / sd;
            if let Some(i0) = icpt {
                m[(i0, j)] = -center / sd;
            }
        }
        Standardizer { m, usable, penalized }
    }

    fn to_original(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.m * beta
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub columns: Vec<String>,
    /// Indices of selected columns (the intercept is always included).
    pub active: Vec<usize>,
    /// Coefficients at the chosen λ on the original column scale.
    pub coefficients: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub cv_error: Vec<f64>,
    pub lambda: f64,
    pub lambda_index: usize,
    pub penalty: Penalty,
}

impl SelectionResult {
    pub fn active_names(&self) -> Vec<String> {
        self.active.iter().map(|&j| self.columns[j].clone()).collect()
    }
}

fn fold_ids(n: usize, nfolds: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).map(|i| i % nfolds).collect();
    ids.shuffle(rng);
    ids
}

fn choose(cv: &[f64]) -> usize {
    let mut best = 0;
    for (i, e) in cv.iter().enumerate() {
        if *e < cv[best] {
            best = i;
        }
    }
    best
}

fn finish_selection(
    columns: &[String],
    std: &Standardizer,
    path: &[DVector<f64>],
    lambdas: Vec<f64>,
    cv_error: Vec<f64>,
    cfg: &PenaltyConfig,
    what: &str,
) -> SelectionResult {
    let idx = choose(&cv_error);
    let beta = std.to_original(&path[idx]);
    let active: Vec<usize> = (0..columns.len()).filter(|&j| !std.penalized[j] || path[idx][j] != 0.0).collect();
    if active.iter().all(|&j| !std.penalized[j]) {
        log::warn!("{what} selection shrank every coefficient to zero; keeping the intercept-only model");
    }
    SelectionResult {
        columns: columns.to_vec(),
        active,
        coefficients: beta.iter().copied().collect(),
        lambda: lambdas[idx],
        lambda_index: idx,
        lambdas,
        cv_error,
        penalty: cfg.penalty,
    }
}

struct OutcomeProblem {
    x: DMatrix<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    sw: f64,
    family: Family,
    /// the gaussian quadratic does not depend on β
    fixed: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl OutcomeProblem {
    fn new(x: DMatrix<f64>, y: Vec<f64>, w: Vec<f64>, family: Family) -> OutcomeProblem {
        let sw = w.iter().sum();
        let mut prob = OutcomeProblem { x, y, w, sw, family, fixed: None };
        if family == Family::Gaussian {
            let zero = DVector::zeros(prob.x.ncols());
            prob.fixed = prob.local_quadratic(&zero).ok();
        }
        prob
    }

    fn local_quadratic(&self, beta: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let eta = &self.x * beta;
        let work: Vec<f64> =
            eta.iter().zip(&self.w).map(|(e, w)| w * self.family.mean_deriv(*e).max(1e-10) / self.sw).collect();
        let a = weighted_crossprod(&self.x, &work);
        let resid: Vec<f64> =
            eta.iter().zip(&self.y).zip(&self.w).map(|((e, y), w)| w * (y - self.family.mean(*e)) / self.sw).collect();
        let c = &a * beta + self.x.tr_mul(&DVector::from_vec(resid));
        Ok((a, c))
    }
}

impl Problem for OutcomeProblem {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn loss(&self, beta: &DVector<f64>) -> Result<f64> {
        let eta = &self.x * beta;
        let ll: f64 = eta
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((e, y), w)| w * self.family.loglik_unit(*y, self.family.mean(*e)))
            .sum();
        if !ll.is_finite() {
            return Err(Error::Numeric("penalized outcome loss is not finite".into()));
        }
        Ok(-ll / self.sw)
    }

    fn quadratic(&self, beta: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        match &self.fixed {
            Some(q) => Ok(q.clone()),
            None => self.local_quadratic(beta),
        }
    }

    fn null_start(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.dim());
        // the intercept is the first unpenalized column, if any
        let ybar = self.y.iter().zip(&self.w).map(|(y, w)| y * w).sum::<f64>() / self.sw;
        if let Some(j) = (0..self.dim()).find(|&j| self.x.column(j).iter().all(|v| *v == 1.0)) {
            b[j] = self.family.link(ybar);
        }
        b
    }
}

/// Penalized selection for the outcome model, CV on squared prediction
/// error.
pub fn select_outcome(
    columns: &[String],
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    family: Family,
    cfg: &PenaltyConfig,
) -> Result<SelectionResult> {
    cfg.validate()?;
    let n = x.nrows();
    if n <= cfg.nfolds {
        return Err(Error::InvalidArgument(format!(
            "outcome selection needs more rows ({n}) than folds ({})",
            cfg.nfolds
        )));
    }
    let std = Standardizer::new(columns, x);
    let xs = x * &std.m;
    let problem = |rows: &[usize]| {
        OutcomeProblem::new(
            xs.select_rows(rows.iter()),
            rows.iter().map(|&i| y[i]).collect(),
            rows.iter().map(|&i| w[i]).collect(),
            family,
        )
    };
    let all: Vec<usize> = (0..n).collect();
    let full = problem(&all);
    let (lmax, _) = lambda_max(&full, &std.penalized, &std.usable, cfg)?;
    let lambdas = cfg.grid(lmax);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let folds = fold_ids(n, cfg.nfolds, &mut rng);
    let per_fold: Vec<Vec<f64>> = (0..cfg.nfolds)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let path = fit_path(&problem(&train), &lambdas, &std.penalized, &std.usable, cfg)?;
            let xt = xs.select_rows(test.iter());
            let swt: f64 = test.iter().map(|&i| w[i]).sum();
            Ok(path
                .iter()
                .map(|b| {
                    let eta = &xt * b;
                    test.iter().zip(eta.iter()).map(|(&i, e)| w[i] * (y[i] - family.mean(*e)).powi(2)).sum::<f64>()
                        / swt
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let cv: Vec<f64> =
        (0..lambdas.len()).map(|l| per_fold.iter().map(|e| e[l]).sum::<f64>() / cfg.nfolds as f64).collect();
    let path = fit_path(&full, &lambdas, &std.penalized, &std.usable, cfg)?;
    Ok(finish_selection(columns, &std, &path, lambdas, cv, cfg, "outcome"))
}

struct PsProblem {
    input: PsInput,
    link: PsLink,
    h: HVariant,
    scale: f64,
}

impl Problem for PsProblem {
    fn dim(&self) -> usize {
        self.input.n_cols()
    }

    fn loss(&self, gamma: &DVector<f64>) -> Result<f64> {
        let g = gee_residual(&self.input, gamma, self.link, self.h, DEFAULT_CLIP)? / self.scale;
        let v = 0.5 * g.norm_squared();
        if !v.is_finite() {
            return Err(Error::Numeric("balance loss is not finite".into()));
        }
        Ok(v)
    }

    fn quadratic(&self, gamma: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let g = gee_residual(&self.input, gamma, self.link, self.h, DEFAULT_CLIP)? / self.scale;
        let j = gee_jacobian(&self.input, gamma, self.link, self.h, DEFAULT_CLIP)? / self.scale;
        let a = j.tr_mul(&j);
        let c = &a * gamma - j.tr_mul(&g);
        Ok((a, c))
    }

    fn null_start(&self) -> DVector<f64> {
        DVector::zeros(self.dim())
    }
}

fn transform_input(input: &PsInput, m: &DMatrix<f64>) -> PsInput {
    PsInput {
        columns: input.columns.clone(),
        x_np: &input.x_np * m,
        w_np: input.w_np.clone(),
        x_p: input.x_p.as_ref().map(|x| x * m),
        d_p: input.d_p.clone(),
        totals: m.tr_mul(&input.totals),
    }
}

fn subset_input(input: &PsInput, np_rows: &[usize], p_rows: &[usize]) -> PsInput {
    let n_np = input.x_np.nrows() as f64;
    let n_p = input.d_p.len() as f64;
    let r_np = n_np / np_rows.len() as f64;
    let r_p = n_p / p_rows.len().max(1) as f64;
    let w_np: Vec<f64> = np_rows.iter().map(|&i| input.w_np[i] * r_np).collect();
    let x_np = input.x_np.select_rows(np_rows.iter());
    match &input.x_p {
        Some(xp) => PsInput::from_parts(
            input.columns.clone(),
            x_np,
            w_np,
            xp.select_rows(p_rows.iter()),
            p_rows.iter().map(|&i| input.d_p[i] * r_p).collect(),
        ),
        None => PsInput {
            columns: input.columns.clone(),
            x_np,
            w_np,
            x_p: None,
            d_p: Vec::new(),
            totals: input.totals.clone(),
        },
    }
}

/// Penalized selection for the propensity model using the squared balance
/// loss of the chosen estimating function, summed over both samples.
pub fn select_ps(input: &PsInput, link: PsLink, h: HVariant, cfg: &PenaltyConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    if h == HVariant::X && !input.has_survey() {
        return Err(Error::Unsupported("h = x selection needs a reference probability sample".into()));
    }
    let n_np = input.x_np.nrows();
    let n_p = input.d_p.len();
    if n_np <= cfg.nfolds {
        return Err(Error::InvalidArgument(format!("selection needs more rows ({n_np}) than folds ({})", cfg.nfolds)));
    }
    let stacked = match &input.x_p {
        Some(xp) => {
            let mut s = DMatrix::zeros(n_np + n_p, input.n_cols());
            s.rows_mut(0, n_np).copy_from(&input.x_np);
            s.rows_mut(n_np, n_p).copy_from(xp);
            s
        }
        None => input.x_np.clone(),
    };
    let std = Standardizer::new(&input.columns, &stacked);
    let tin = transform_input(input, &std.m);
    let scale = match input.columns.iter().position(|c| c == INTERCEPT) {
        Some(j) if input.totals[j] > 0.0 => input.totals[j],
        _ => n_np as f64,
    };
    // rescale so that standardized columns have unit curvature at the null
    // fit; SCAD and MCP thresholds assume it
    let base = PsProblem { input: tin.clone(), link, h, scale };
    let (_, null) = lambda_max(&base, &std.penalized, &std.usable, cfg)?;
    let (a0, _) = base.quadratic(&null)?;
    let diag: Vec<f64> = (0..a0.ncols()).filter(|&j| std.penalized[j] && std.usable[j]).map(|j| a0[(j, j)]).collect();
    let curvature = diag.iter().sum::<f64>() / diag.len().max(1) as f64;
    let scale = if curvature > 0.0 && curvature.is_finite() { scale * curvature.sqrt() } else { scale };
    let full = PsProblem { input: tin.clone(), link, h, scale };
    let (lmax, _) = lambda_max(&full, &std.penalized, &std.usable, cfg)?;
    let lambdas = cfg.grid(lmax);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let folds_np = fold_ids(n_np, cfg.nfolds, &mut rng);
    let folds_p = fold_ids(n_p, cfg.nfolds, &mut rng);
    let per_fold: Vec<Vec<f64>> = (0..cfg.nfolds)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let split = |ids: &[usize], keep: bool| -> Vec<usize> {
                (0..ids.len()).filter(|&i| (ids[i] == f) != keep).collect()
            };
            let train = subset_input(&tin, &split(&folds_np, true), &split(&folds_p, true));
            let test = subset_input(&tin, &split(&folds_np, false), &split(&folds_p, false));
            let path =
                fit_path(&PsProblem { input: train, link, h, scale }, &lambdas, &std.penalized, &std.usable, cfg)?;
            let tp = PsProblem { input: test, link, h, scale };
            path.iter().map(|g| tp.loss(g)).collect()
        })
        .collect::<Result<_>>()?;
    let cv: Vec<f64> =
        (0..lambdas.len()).map(|l| per_fold.iter().map(|e| e[l]).sum::<f64>() / cfg.nfolds as f64).collect();
    let path = fit_path(&full, &lambdas, &std.penalized, &std.usable, cfg)?;
    Ok(finish_selection(&input.columns, &std, &path, lambdas, cv, cfg, "selection"))
}

/// Union of selected column names, in the order of `columns`.
pub fn combine_union(columns: &[String], a: &[String], b: &[String]) -> Vec<String> {
    columns.iter().filter(|c| c.as_str() == INTERCEPT || a.contains(c) || b.contains(c)).cloned().collect()
}
