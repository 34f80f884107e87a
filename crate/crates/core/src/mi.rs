//! Mass imputation: predict the outcome for every unit of the reference
//! survey from information in the non-probability sample, then take the
//! design-weighted mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{NonProbSample, ProbSample, Reference, INTERCEPT};
use crate::error::{Error, Result};
use crate::glm::{irls_fit, Family, OutcomeFit};
use crate::linalg::solve_general;
use crate::matching::{knn_query, knn_query_1d, DEFAULT_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiMethod {
    Glm,
    Nn,
    PmmA,
    PmmB,
    Npar,
}

impl MiMethod {
    pub fn label(&self) -> &'static str {
        match self {
            MiMethod::Glm => "glm",
            MiMethod::Nn => "nn",
            MiMethod::PmmA => "pmm",
            MiMethod::PmmB => "pmm",
            MiMethod::Npar => "npar",
        }
    }
}

/// Predictive mean matching flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PmmVariant {
    /// survey predictions matched to non-probability predictions
    A,
    /// survey predictions matched to observed outcomes
    B,
}

#[derive(Debug, Clone, Serialize)]
pub struct MiEstimate {
    pub method: MiMethod,
    pub target: String,
    pub mu: f64,
    /// Prediction estimators (GLM only).
    pub pr1: Option<f64>,
    pub pr2: Option<f64>,
    /// Imputed outcomes on the survey rows (empty with population totals).
    pub y_star: Vec<f64>,
    /// Model predictions on the non-probability sample, when a model exists.
    pub pred_np: Vec<f64>,
    /// Model predictions on the survey rows.
    pub pred_p: Vec<f64>,
    pub n_hat_p: f64,
    pub outcome_fit: Option<OutcomeFit>,
    pub warnings: Vec<String>,
}

fn warn(list: &mut Vec<String>, msg: String) {
    log::warn!("{msg}");
    list.push(msg);
}

fn weighted_mean(v: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw
}

fn require_same_columns(np: &NonProbSample, p: &ProbSample) -> Result<()> {
    if np.design().columns() != p.design().columns() {
        return Err(Error::ColumnMismatch(format!(
            "outcome columns {:?} differ from survey columns {:?}",
            np.design().columns(),
            p.design().columns()
        )));
    }
    Ok(())
}

/// Non-intercept columns: the matching/smoothing space.
fn predictor_matrix(x: &DMatrix<f64>, columns: &[String]) -> Result<DMatrix<f64>> {
    let idx: Vec<usize> = columns.iter().enumerate().filter(|(_, c)| c.as_str() != INTERCEPT).map(|(j, _)| j).collect();
    if idx.is_empty() {
        return Err(Error::InvalidArgument("nearest-neighbour imputation needs at least one predictor".into()));
    }
    Ok(x.select_columns(idx.iter()))
}

/// GLM mass imputation with both prediction estimators.
pub fn mi_glm(np: &NonProbSample, reference: Reference<'_>, target: &str, family: Family) -> Result<MiEstimate> {
    let y = np.outcome(target)?;
    let w = np.case_weights();
    let fit = irls_fit(np.design(), y, family, w, None)?;
    let n_w: f64 = w.iter().sum();
    let resid_sum: f64 = y.iter().zip(&fit.fitted).zip(w).map(|((a, b), c)| c * (a - b)).sum();

    match reference {
        Reference::Survey(p) => {
            require_same_columns(np, p)?;
            let pred_p = fit.predict(p.design())?;
            let n_hat = p.n_hat();
            let proj: f64 = pred_p.iter().zip(p.weights()).map(|(m, d)| m * d).sum();
            let pr1 = proj / n_hat;
            let pr2 = (resid_sum + proj) / n_hat;
            Ok(MiEstimate {
                method: MiMethod::Glm,
                target: target.to_string(),
                mu: pr1,
                pr1: Some(pr1),
                pr2: Some(pr2),
                y_star: pred_p.clone(),
                pred_np: fit.fitted.clone(),
                pred_p,
                n_hat_p: n_hat,
                outcome_fit: Some(fit),
                warnings: Vec::new(),
            })
        }
        Reference::Population(b) => {
            if family != Family::Gaussian {
                return Err(Error::Unsupported(format!(
                    "population totals with the {} family: the prediction estimator reduces to totals only for a linear model",
                    family.name()
                )));
            }
            let totals = b.totals_for(np.design().columns())?;
            let n_pop =
                b.pop_size().ok_or_else(|| Error::Benchmark("population size is needed for mass imputation".into()))?;
            let mu_x = totals / n_pop;
            let beta = fit.beta();
            let pr1 = mu_x.dot(&beta);
            let xbar = np.x().tr_mul(&DVector::from_column_slice(w)) / n_w;
            let ybar = weighted_mean(y, w);
            let pr2 = n_w / n_pop * (ybar - xbar.dot(&beta)) + pr1;
            Ok(MiEstimate {
                method: MiMethod::Glm,
                target: target.to_string(),
                mu: pr1,
                pr1: Some(pr1),
                pr2: Some(pr2),
                y_star: Vec::new(),
                pred_np: fit.fitted.clone(),
                pred_p: Vec::new(),
                n_hat_p: n_pop,
                outcome_fit: Some(fit),
                warnings: Vec::new(),
            })
        }
    }
}

fn donor_means(indices: &[Vec<usize>], y: &[f64]) -> Vec<f64> {
    indices.iter().map(|idx| idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64).collect()
}

/// Nearest-neighbour imputation in covariate space.
pub fn mi_nn(np: &NonProbSample, p: &ProbSample, target: &str, k: usize) -> Result<MiEstimate> {
    require_same_columns(np, p)?;
    let y = np.outcome(target)?;
    let cols = np.design().columns();
    let donors = predictor_matrix(np.x(), cols)?;
    let queries = predictor_matrix(p.x(), cols)?;
    let m = knn_query(&donors, &queries, k, DEFAULT_EPS)?;
    let y_star = donor_means(&m.indices, y);
    Ok(MiEstimate {
        method: MiMethod::Nn,
        target: target.to_string(),
        mu: weighted_mean(&y_star, p.weights()),
        pr1: None,
        pr2: None,
        pred_np: Vec::new(),
        pred_p: y_star.clone(),
        y_star,
        n_hat_p: p.n_hat(),
        outcome_fit: None,
        warnings: Vec::new(),
    })
}

/// Predictive mean matching on the mean scale.
pub fn mi_pmm(
    np: &NonProbSample,
    p: &ProbSample,
    target: &str,
    k: usize,
    variant: PmmVariant,
    family: Family,
) -> Result<MiEstimate> {
    require_same_columns(np, p)?;
    let y = np.outcome(target)?;
    let fit = irls_fit(np.design(), y, family, np.case_weights(), None)?;
    let pred_p = fit.predict(p.design())?;
    let mut warnings = Vec::new();
    let donors: &[f64] = match variant {
        PmmVariant::A => &fit.fitted,
        PmmVariant::B => y,
    };
    let first = pred_p.first().copied().unwrap_or(0.0);
    if pred_p.iter().all(|v| (v - first).abs() <= DEFAULT_EPS) {
        warn(&mut warnings, "all survey predictions are equal; donors are chosen by the tie rule".into());
    }
    let m = knn_query_1d(donors, &pred_p, k, DEFAULT_EPS)?;
    let y_star = donor_means(&m.indices, y);
    Ok(MiEstimate {
        method: match variant {
            PmmVariant::A => MiMethod::PmmA,
            PmmVariant::B => MiMethod::PmmB,
        },
        target: target.to_string(),
        mu: weighted_mean(&y_star, p.weights()),
        pr1: None,
        pr2: None,
        y_star,
        pred_np: fit.fitted.clone(),
        pred_p,
        n_hat_p: p.n_hat(),
        outcome_fit: Some(fit),
        warnings,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct NparOptions {
    pub span: f64,
    pub degree: usize,
}

impl Default for NparOptions {
    fn default() -> Self {
        Self { span: 0.75, degree: 1 }
    }
}

/// Local polynomial smoother with tricube weights over the nearest
/// `floor(span · n)` donors.
#[derive(Debug, Clone)]
pub struct LocalPoly {
    x: DMatrix<f64>,
    y: Vec<f64>,
    scale: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    q: usize,
    degree: usize,
}

impl LocalPoly {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, opts: NparOptions) -> Result<LocalPoly> {
        let (n, d) = (x.nrows(), x.ncols());
        if d == 0 || d > 4 {
            return Err(Error::InvalidArgument(format!(
                "local polynomial imputation supports 1 to 4 predictors, got {d}"
            )));
        }
        if n < 30 {
            return Err(Error::Degenerate(format!("local polynomial imputation needs at least 30 donors, got {n}")));
        }
        if opts.degree > 2 {
            return Err(Error::InvalidArgument("degree must be 0, 1 or 2".into()));
        }
        if !(opts.span > 0.0 && opts.span <= 1.0) {
            return Err(Error::InvalidArgument("span must lie in (0, 1]".into()));
        }
        let mut scale = vec![1.0; d];
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for j in 0..d {
            let col = x.column(j);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            if d > 1 && var > 0.0 {
                scale[j] = var.sqrt();
            }
            for &v in col.iter() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let q = ((opts.span * n as f64).floor() as usize).max(d + 2).min(n);
        Ok(LocalPoly { x, y, scale, lo, hi, q, degree: opts.degree })
    }

    fn features(&self, dx: &[f64]) -> Vec<f64> {
        let mut f = vec![1.0];
        if self.degree >= 1 {
            f.extend_from_slice(dx);
        }
        if self.degree == 2 {
            for a in 0..dx.len() {
                for b in a..dx.len() {
                    f.push(dx[a] * dx[b]);
                }
            }
        }
        f
    }

    /// Smoothed value at `x0`; returns whether the point had to be clamped
    /// into the donor bounding box.
    pub fn predict_one(&self, x0: &[f64]) -> (f64, bool) {
        let d = x0.len();
        let mut clamped = false;
        let q0: Vec<f64> = x0
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let c = v.clamp(self.lo[j], self.hi[j]);
                clamped |= c != v;
                c
            })
            .collect();
        let n = self.x.nrows();
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let s: f64 = (0..d).map(|j| ((self.x[(i, j)] - q0[j]) / self.scale[j]).powi(2)).sum();
                (s.sqrt(), i)
            })
            .collect();
        let q = self.q;
        dist.select_nth_unstable_by(q - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let h = dist[q - 1].0;
        let near = &dist[..q];
        let weights: Vec<f64> =
            near.iter().map(|(r, _)| if h > 0.0 { (1.0 - (r / h).powi(3)).max(0.0).powi(3) } else { 1.0 }).collect();
        let sw: f64 = weights.iter().sum();
        let fallback = || {
            let s: f64 = near.iter().zip(&weights).map(|((_, i), w)| w * self.y[*i]).sum();
            if sw > 0.0 {
                s / sw
            } else {
                near.iter().map(|(_, i)| self.y[*i]).sum::<f64>() / q as f64
            }
        };
        if self.degree == 0 || sw <= 0.0 {
            return (fallback(), clamped);
        }
        let p = self.features(&vec![0.0; d]).len();
        let mut xtx = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        for ((_, i), w) in near.iter().zip(&weights) {
            if *w == 0.0 {
                continue;
            }
            let dx: Vec<f64> = (0..d).map(|j| (self.x[(*i, j)] - q0[j]) / self.scale[j]).collect();
            let f = DVector::from_vec(self.features(&dx));
            xtx.ger(*w, &f, &f, 1.0);
            xty.axpy(w * self.y[*i], &f, 1.0);
        }
        let fit = solve_general(&xtx, &xty);
        let value = match fit {
            Some(b) if xtx.clone().svd(false, false).singular_values.min() > 1e-10 * xtx.norm() => b[0],
            _ => fallback(),
        };
        (value, clamped)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> (Vec<f64>, usize) {
        let mut clamped = 0;
        let out = x
            .row_iter()
            .map(|r| {
                let row: Vec<f64> = r.iter().copied().collect();
                let (v, c) = self.predict_one(&row);
                clamped += c as usize;
                v
            })
            .collect();
        (out, clamped)
    }
}

/// Local polynomial mass imputation.
pub fn mi_npar(np: &NonProbSample, p: &ProbSample, target: &str, opts: NparOptions) -> Result<MiEstimate> {
    require_same_columns(np, p)?;
    let y = np.outcome(target)?.to_vec();
    let cols = np.design().columns();
    let donors = predictor_matrix(np.x(), cols)?;
    let queries = predictor_matrix(p.x(), cols)?;
    let smoother = LocalPoly::new(donors.clone(), y, opts)?;
    let (y_star, clamped) = smoother.predict(&queries);
    let (pred_np, _) = smoother.predict(&donors);
    let mut warnings = Vec::new();
    if clamped > 0 {
        warn(
            &mut warnings,
            format!("{clamped} survey rows lie outside the donor range; evaluated at the nearest boundary point"),
        );
    }
    Ok(MiEstimate {
        method: MiMethod::Npar,
        target: target.to_string(),
        mu: weighted_mean(&y_star, p.weights()),
        pr1: None,
        pr2: None,
        pred_p: y_star.clone(),
        y_star,
        pred_np,
        n_hat_p: p.n_hat(),
        outcome_fit: None,
        warnings,
    })
}
