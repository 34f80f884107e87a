//! Post-fit checks: covariate balance, weight distributions and a
//! side-by-side table of estimates.

use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propensity::{HVariant, PsFit, PsInput};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub columns: Vec<String>,
    /// Σ_NP w x / π̂ minus the reference total, per column.
    pub difference: Vec<f64>,
    /// `difference / |total|` (NaN for a zero total).
    pub relative: Vec<f64>,
    pub weighted_totals: Vec<f64>,
    pub reference_totals: Vec<f64>,
    pub h: Option<HVariant>,
}

impl BalanceReport {
    /// Differences rounded to `digits` decimals.
    pub fn rounded(&self, digits: u32) -> Vec<f64> {
        let f = 10f64.powi(digits as i32);
        self.difference.iter().map(|d| (d * f).round() / f).collect()
    }
}

/// IPW-weighted totals of the non-probability sample against the reference
/// totals, over `columns` (a subset of the propensity design).
pub fn check_balance(fit: &PsFit, input: &PsInput, columns: &[String]) -> Result<BalanceReport> {
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| input.columns.iter().position(|k| k == c).ok_or_else(|| Error::MissingColumn(c.clone())))
        .collect::<Result<_>>()?;
    if fit.ipw_weights.len() != input.x_np.nrows() {
        return Err(Error::ColumnMismatch("propensity fit and input cover different rows".into()));
    }
    let w = DVector::from_iterator(input.w_np.len(), input.w_np.iter().zip(&fit.ipw_weights).map(|(a, b)| a * b));
    let weighted = input.x_np.tr_mul(&w);
    let mut report = BalanceReport {
        columns: columns.to_vec(),
        difference: Vec::with_capacity(idx.len()),
        relative: Vec::with_capacity(idx.len()),
        weighted_totals: Vec::with_capacity(idx.len()),
        reference_totals: Vec::with_capacity(idx.len()),
        h: fit.h,
    };
    for &j in &idx {
        let (a, t) = (weighted[j], input.totals[j]);
        report.weighted_totals.push(a);
        report.reference_totals.push(t);
        report.difference.push(a - t);
        report.relative.push(if t == 0.0 { f64::NAN } else { (a - t) / t.abs() });
    }
    Ok(report)
}

/// Min, quartiles (type-7 interpolation), mean and max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Distribution {
    pub fn of(values: &[f64]) -> Distribution {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        Distribution {
            min: v.first().copied().unwrap_or(f64::NAN),
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q3: quantile(&v, 0.75),
            max: v.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightSummary {
    pub weights: Distribution,
    /// Σ w/π̂ over the non-probability sample.
    pub sum: f64,
    pub ps_np: Distribution,
    pub ps_p: Option<Distribution>,
}

pub fn weight_summary(fit: &PsFit) -> WeightSummary {
    WeightSummary {
        weights: Distribution::of(&fit.ipw_weights),
        sum: fit.n_hat,
        ps_np: Distribution::of(&fit.scores_np),
        ps_p: fit.scores_p.as_deref().map(Distribution::of),
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub estimator: String,
    pub target: String,
    pub mean: f64,
    pub se: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub delta: f64,
}

/// Estimates next to each other with their distance from the naive mean.
/// Rows keep input order; see [`sort_by_mean`].
pub fn compare_estimates<'a, I>(results: I, naive: f64) -> Vec<ComparisonRow>
where
    I: IntoIterator<Item = (&'a str, &'a crate::pipeline::EstimateResult)>,
{
    results
        .into_iter()
        .map(|(label, r)| ComparisonRow {
            estimator: label.to_string(),
            target: r.target.clone(),
            mean: r.mean,
            se: r.se,
            lower: r.ci.map(|c| c.0),
            upper: r.ci.map(|c| c.1),
            delta: r.mean - naive,
        })
        .collect()
}

/// Stable ascending sort by point estimate.
pub fn sort_by_mean(rows: &mut [ComparisonRow]) {
    rows.sort_by(|a, b| a.mean.total_cmp(&b.mean));
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_comparison_csv<R: Read>(input: R) -> Result<Vec<ComparisonRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}
