//! Machine report and the human print/summary text.
//!
//! Both texts are rendered from a [`Report`], so every number a reader sees
//! is present in the JSON document.

use serde::Serialize;

use crate::diagnostics::{BalanceReport, Distribution};
use crate::error::Result;
use crate::pipeline::{EstimatorKind, NonprobResult};

const RULE: &str = "----------------------------------------------------------------";
/// Targets listed in the short print before eliding.
const PRINT_LIMIT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEstimate {
    pub target: String,
    pub mean: f64,
    pub se: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub naive: f64,
    pub v1: Option<f64>,
    pub v2: Option<f64>,
    pub bootstrap_failed: Option<usize>,
    pub caveat: bool,
    pub correction: Option<f64>,
    pub projection: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSelection {
    pub link: String,
    pub method: String,
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub sum_weights: f64,
    pub weights: Distribution,
    pub ps_np: Distribution,
    pub ps_p: Option<Distribution>,
    pub balance: BalanceReport,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportOutcome {
    pub target: String,
    pub columns: Vec<String>,
    pub family: Option<String>,
    pub coefficients: Option<Vec<f64>>,
    pub converged: Option<bool>,
    pub residuals: Option<Distribution>,
    pub pred_np: Option<Distribution>,
    pub pred_p: Option<Distribution>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub call: Option<String>,
    pub estimator: EstimatorKind,
    pub estimator_type: String,
    pub method: String,
    pub source: String,
    pub vars_selection: bool,
    pub variance_estimator: String,
    pub pop_size_fixed: bool,
    pub nonprob_size: usize,
    /// Percent of the population size, when one is known or estimated.
    pub nonprob_share: Option<f64>,
    pub prob_size: Option<usize>,
    pub prob_share: Option<f64>,
    pub pop_size: Option<f64>,
    pub estimates: Vec<ReportEstimate>,
    pub selection: Option<ReportSelection>,
    pub outcomes: Vec<ReportOutcome>,
    pub warnings: Vec<String>,
}

fn share(n: usize, pop: Option<f64>) -> Option<f64> {
    pop.filter(|p| *p > 0.0).map(|p| 100.0 * n as f64 / p)
}

fn dist(v: &[f64]) -> Option<Distribution> {
    (!v.is_empty()).then(|| Distribution::of(v))
}

impl Report {
    pub fn new(result: &NonprobResult, call: Option<String>) -> Report {
        let d = &result.descriptor;
        let estimates = result
            .results
            .iter()
            .map(|r| ReportEstimate {
                target: r.target.clone(),
                mean: r.mean,
                se: r.se,
                lower: r.ci.map(|c| c.0),
                upper: r.ci.map(|c| c.1),
                naive: r.naive,
                v1: r.variance.as_ref().and_then(|v| v.v1),
                v2: r.variance.as_ref().and_then(|v| v.v2),
                bootstrap_failed: r
                    .variance
                    .as_ref()
                    .filter(|v| v.method == crate::variance::VarMethod::Bootstrap)
                    .map(|v| v.failed),
                caveat: r.variance.as_ref().is_some_and(|v| v.caveat),
                correction: r.dr_terms.map(|t| t.0),
                projection: r.dr_terms.map(|t| t.1),
            })
            .collect();
        let selection = result.selection.as_ref().map(|s| ReportSelection {
            link: s.fit.link.name().to_string(),
            method: match s.fit.method {
                crate::propensity::EstMethod::Mle => "mle".into(),
                crate::propensity::EstMethod::Gee => "gee".into(),
            },
            columns: s.fit.columns.clone(),
            coefficients: s.fit.gamma.clone(),
            converged: s.fit.converged,
            iterations: s.fit.iterations,
            sum_weights: s.weights.sum,
            weights: s.weights.weights.clone(),
            ps_np: s.weights.ps_np.clone(),
            ps_p: s.weights.ps_p.clone(),
            balance: s.balance.clone(),
            lambda: s.selection.as_ref().map(|x| x.lambda),
        });
        let outcomes = result
            .outcomes
            .iter()
            .map(|o| ReportOutcome {
                target: o.target.clone(),
                columns: o.fit.as_ref().map(|f| f.columns.clone()).unwrap_or_else(|| o.columns.clone()),
                family: o.fit.as_ref().map(|f| f.family.name().to_string()),
                coefficients: o.fit.as_ref().map(|f| f.coefficients.clone()),
                converged: o.fit.as_ref().map(|f| f.converged),
                residuals: dist(&o.residuals),
                pred_np: dist(&o.pred_np),
                pred_p: dist(&o.pred_p),
                lambda: o.selection.as_ref().map(|x| x.lambda),
            })
            .collect();
        Report {
            call,
            estimator: d.kind,
            estimator_type: d.estimator_type.clone(),
            method: d.method.clone(),
            source: d.source.clone(),
            vars_selection: d.vars_selection,
            variance_estimator: d.var_method.clone(),
            pop_size_fixed: d.pop_size_fixed,
            nonprob_size: result.n_np,
            nonprob_share: share(result.n_np, result.pop_size),
            prob_size: result.n_p,
            prob_share: result.n_p.and_then(|n| share(n, result.pop_size)),
            pop_size: result.pop_size,
            estimates,
            selection,
            outcomes,
            warnings: result.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One decimal, with a trailing `.0` dropped: `18%`, `12.6%`.
pub fn format_percent(p: f64) -> String {
    let s = format!("{p:.1}");
    match s.strip_suffix(".0") {
        Some(t) => format!("{t}%"),
        None => format!("{s}%"),
    }
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn estimate_text(e: &ReportEstimate) -> String {
    match (e.se, e.lower, e.upper) {
        (Some(se), Some(lo), Some(hi)) => format!("{} (se={}, ci=({}, {}))", f4(e.mean), f4(se), f4(lo), f4(hi)),
        _ => f4(e.mean),
    }
}

fn dist_text(d: &Distribution) -> String {
    format!("min: {}; mean: {}; median: {}; max: {}", f4(d.min), f4(d.mean), f4(d.median), f4(d.max))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn header(r: &Report, out: &mut String) {
    out.push_str(&format!(" - estimator type: {}\n", r.estimator_type));
}

/// The short form: descriptor and point estimates.
pub fn print_text(r: &Report) -> String {
    let mut out = String::from("A nonprob object\n");
    header(r, &mut out);
    out.push_str(&format!(" - method: {}\n", r.method));
    out.push_str(&format!(" - auxiliary variables source: {}\n", r.source));
    out.push_str(&format!(" - vars selection: {}\n", yes_no(r.vars_selection)));
    out.push_str(&format!(" - variance estimator: {}\n", r.variance_estimator));
    out.push_str(&format!(" - population size fixed: {}\n", yes_no(r.pop_size_fixed)));
    match r.estimates.as_slice() {
        [e] => {
            out.push_str(&format!(" - naive (uncorrected) estimator: {}\n", f4(e.naive)));
            out.push_str(&format!(" - selected estimator: {}\n", estimate_text(e)));
        }
        many => {
            out.push_str(" - naive (uncorrected) estimators:\n");
            for e in many.iter().take(PRINT_LIMIT) {
                out.push_str(&format!("   - {}: {}\n", e.target, f4(e.naive)));
            }
            out.push_str(" - selected estimators:\n");
            for e in many.iter().take(PRINT_LIMIT) {
                out.push_str(&format!("   - {}: {}\n", e.target, estimate_text(e)));
            }
            if many.len() > PRINT_LIMIT {
                out.push_str("   - ...\n");
            }
        }
    }
    out
}

/// The long form: sizes, weight and propensity distributions, and outcome
/// residuals and predictions.
pub fn summary_text(r: &Report) -> String {
    let mut out = String::from("A nonprob_summary object\n");
    if let Some(call) = &r.call {
        out.push_str(&format!(" - call: {call}\n"));
    }
    header(r, &mut out);
    let sized = |n: usize, s: Option<f64>| match s {
        Some(s) => format!("{n} ({})", format_percent(s)),
        None => n.to_string(),
    };
    out.push_str(&format!(" - nonprob sample size: {}\n", sized(r.nonprob_size, r.nonprob_share)));
    if let Some(n) = r.prob_size {
        out.push_str(&format!(" - prob sample size: {}\n", sized(n, r.prob_share)));
    }
    if let Some(n) = r.pop_size {
        out.push_str(&format!(" - population size: {} (fixed: {})\n", n.round(), yes_no(r.pop_size_fixed)));
    }
    let models = match (r.selection.is_some(), !r.outcomes.is_empty()) {
        (true, true) => "\"outcome\" and \"selection\"",
        (true, false) => "\"selection\"",
        _ => "\"outcome\"",
    };
    out.push_str(&format!(" - models: {models}\n"));
    out.push_str(RULE);
    out.push('\n');
    if let Some(s) = &r.selection {
        out.push_str(&format!(" - sum of IPW weights: {:.2}\n", s.sum_weights));
        out.push_str(" - distribution of IPW weights (nonprob sample):\n");
        out.push_str(&format!("   - {}\n", dist_text(&s.weights)));
        out.push_str(" - distribution of IPW probabilities (nonprob sample):\n");
        out.push_str(&format!("   - {}\n", dist_text(&s.ps_np)));
        if let Some(p) = &s.ps_p {
            out.push_str(" - distribution of IPW probabilities (prob sample):\n");
            out.push_str(&format!("   - {}\n", dist_text(p)));
        }
        out.push_str(RULE);
        out.push('\n');
    }
    if !r.outcomes.is_empty() {
        let block = |out: &mut String, title: &str, pick: &dyn Fn(&ReportOutcome) -> Option<&Distribution>| {
            if r.outcomes.iter().all(|o| pick(o).is_none()) {
                return;
            }
            out.push_str(&format!(" - {title}:\n"));
            for o in &r.outcomes {
                if let Some(d) = pick(o) {
                    out.push_str(&format!("   - {}: {}\n", o.target, dist_text(d)));
                }
            }
        };
        block(&mut out, "distribution of outcome residuals", &|o| o.residuals.as_ref());
        block(&mut out, "distribution of outcome predictions (nonprob sample)", &|o| o.pred_np.as_ref());
        block(&mut out, "distribution of outcome predictions (prob sample)", &|o| o.pred_p.as_ref());
        out.push_str(RULE);
        out.push('\n');
    }
    if !r.warnings.is_empty() {
        out.push_str(" - warnings:\n");
        for w in &r.warnings {
            out.push_str(&format!("   - {w}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DataTable, Formula};
    use crate::pipeline::{estimate, EstimationSpec, Inputs, ReferenceInput};

    #[test]
    fn percent_format() {
        assert_eq!(format_percent(100.0 * 9344.0 / 51870.0), "18%");
        assert_eq!(format_percent(100.0 * 6523.0 / 51870.0), "12.6%");
        assert_eq!(format_percent(5.0), "5%");
        assert_eq!(format_percent(0.04), "0%");
    }

    fn fixture(selection: Option<&str>, outcome: Option<&str>) -> Report {
        let np = DataTable::from_columns(vec![
            ("x", vec![0.1, 0.4, 0.9, 1.3, 1.8, 2.2, 2.5, 3.1, 0.7, 1.1, 1.6, 2.9]),
            ("y", vec![1.0, 1.6, 2.1, 2.9, 3.4, 4.6, 4.9, 6.3, 1.9, 2.2, 3.5, 5.6]),
        ])
        .unwrap();
        let sv = DataTable::from_columns(vec![
            ("x", vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 0.2, 0.8]),
            ("w", vec![5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0]),
        ])
        .unwrap();
        let spec = EstimationSpec {
            selection: selection.map(|s| Formula::parse(s).unwrap()),
            outcome: outcome.map(|s| Formula::parse(s).unwrap()),
            target: if outcome.is_none() { vec!["y".into()] } else { Vec::new() },
            ..Default::default()
        };
        let inputs = Inputs {
            np: &np,
            case_weights: None,
            reference: ReferenceInput::Survey { table: &sv, weights: "w", strata: &[] },
        };
        Report::new(&estimate(&spec, &inputs).unwrap(), Some("test".into()))
    }

    #[test]
    fn print_layout() {
        let r = fixture(Some("~ x"), None);
        let text = print_text(&r);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "A nonprob object");
        assert_eq!(lines[1], " - estimator type: inverse probability weighting");
        assert_eq!(lines[2], " - method: logit (mle)");
        assert_eq!(lines[3], " - auxiliary variables source: survey");
        assert_eq!(lines[4], " - vars selection: false");
        assert_eq!(lines[5], " - variance estimator: analytic");
        assert_eq!(lines[6], " - population size fixed: false");
        assert!(lines[7].starts_with(" - naive (uncorrected) estimator: "));
        assert!(lines[8].starts_with(" - selected estimator: ") && lines[8].contains("(se="));
    }

    #[test]
    fn summary_blocks_follow_the_estimator() {
        let ipw = summary_text(&fixture(Some("~ x"), None));
        assert!(ipw.contains("sum of IPW weights"));
        assert!(!ipw.contains("outcome residuals"));
        let mi = summary_text(&fixture(None, Some("y ~ x")));
        assert!(!mi.contains("IPW"));
        assert!(
            mi.contains("outcome predictions (nonprob sample)") && mi.contains("outcome predictions (prob sample)")
        );
        let dr = summary_text(&fixture(Some("~ x"), Some("y ~ x")));
        assert!(dr.contains("sum of IPW weights") && dr.contains("distribution of outcome residuals"));
        assert!(dr.contains(" - nonprob sample size: 12 (30%)"), "{dr}");
        assert!(dr.contains(" - population size: 40 (fixed: false)"));
    }

    fn numbers(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for c in text.chars() {
            if c.is_ascii_digit() || c == '.' || (c == '-' && cur.is_empty()) {
                cur.push(c);
            } else {
                if cur.chars().any(|c| c.is_ascii_digit()) {
                    out.push(cur.trim_end_matches('.').to_string());
                }
                cur.clear();
            }
        }
        out
    }

    fn json_numbers(v: &serde_json::Value, out: &mut Vec<f64>) {
        match v {
            serde_json::Value::Number(n) => out.push(n.as_f64().unwrap()),
            serde_json::Value::Array(a) => a.iter().for_each(|x| json_numbers(x, out)),
            serde_json::Value::Object(o) => o.values().for_each(|x| json_numbers(x, out)),
            _ => {}
        }
    }

    #[test]
    fn every_summary_number_is_in_the_report() {
        for r in [fixture(Some("~ x"), None), fixture(None, Some("y ~ x")), fixture(Some("~ x"), Some("y ~ x"))] {
            let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
            let mut have = Vec::new();
            json_numbers(&json, &mut have);
            for text in [print_text(&r), summary_text(&r)] {
                for tok in numbers(&text) {
                    let decimals = tok.split('.').nth(1).map_or(0, |d| d.len());
                    let shown: f64 = tok.parse().unwrap();
                    let found = have.iter().any(|x| {
                        let s = format!("{:.*}", decimals, x);
                        s.parse::<f64>().unwrap() == shown
                    });
                    assert!(found, "{tok} not in report");
                }
            }
        }
    }

    #[test]
    fn json_is_deterministic() {
        let a = fixture(Some("~ x"), Some("y ~ x")).to_json().unwrap();
        let b = fixture(Some("~ x"), Some("y ~ x")).to_json().unwrap();
        assert_eq!(a, b);
    }
}
