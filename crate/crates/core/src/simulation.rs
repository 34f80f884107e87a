//! Monte Carlo harness: draw a finite population, select a non-probability
//! sample by Poisson sampling with known propensities, draw a simple random
//! reference survey, and run a set of estimators on each replicate.
//!
//! ```toml
//! seed = 1
//! replicates = 200
//! pop-size = 100000
//! prob-size = 1000
//!
//! [[covariates]]
//! name = "x1"
//! dist = "normal"
//! mean = 0.0
//! sd = 1.0
//!
//! [[outcomes]]
//! name = "y"
//! family = "gaussian"
//! intercept = 1.0
//! terms = { x1 = 1.0, "x1^2" = 0.5 }
//!
//! [selection]
//! link = "logit"
//! intercept = -3.0
//! terms = { x1 = 0.8 }
//!
//! [estimators.ipw]
//! selection = "~ x1"
//! target = "y"
//! ```

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution as _, Exp, Normal, Poisson, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::pipeline::{estimate, EstimationSpec, Inputs, ReferenceInput};
use crate::propensity::PsLink;

/// Column holding the survey design weights in generated tables.
pub const WEIGHT_COLUMN: &str = "design_weight";
/// Largest share of failed replicates tolerated per estimator.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum CovariateDist {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    Bernoulli { p: f64 },
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub dist: CovariateDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub name: String,
    #[serde(default = "default_family")]
    pub family: String,
    #[serde(default)]
    pub intercept: f64,
    /// Term (`x1`, `x1^2`, `x1:x2`) to coefficient.
    #[serde(default)]
    pub terms: BTreeMap<String, f64>,
    /// Error standard deviation for the gaussian family.
    #[serde(default = "one")]
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSpec {
    #[serde(default = "default_link")]
    pub link: String,
    pub intercept: f64,
    #[serde(default)]
    pub terms: BTreeMap<String, f64>,
}

fn default_family() -> String {
    "gaussian".into()
}

fn default_link() -> String {
    "logit".into()
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub replicates: usize,
    pub pop_size: usize,
    pub prob_size: usize,
    /// Draw a fresh population for every replicate instead of once.
    #[serde(default)]
    pub redraw_population: bool,
    pub covariates: Vec<CovariateSpec>,
    pub outcomes: Vec<OutcomeSpec>,
    pub selection: SelectionSpec,
    pub estimators: BTreeMap<String, ModelConfig>,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<SimConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path<P: AsRef<std::path::Path>>(path: P) -> Result<SimConfig> {
        SimConfig::from_toml(&std::fs::read_to_string(path.as_ref())?)
    }
}

/// A product of powered covariates.
#[derive(Debug, Clone)]
struct Term(Vec<(usize, i32)>);

fn compile_term(text: &str, names: &[String]) -> Result<Term> {
    let mut factors = Vec::new();
    for f in text.split(':').map(str::trim) {
        let (name, power) = match f.split_once('^') {
            Some((n, p)) => {
                let p: i32 = p.trim().parse().map_err(|_| Error::Config(format!("bad power in term `{text}`")))?;
                (n.trim(), p)
            }
            None => (f, 1),
        };
        let j = names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("term `{text}` uses unknown covariate `{name}`")))?;
        factors.push((j, power));
    }
    Ok(Term(factors))
}

struct LinearPredictor {
    intercept: f64,
    terms: Vec<(Term, f64)>,
}

impl LinearPredictor {
    fn new(intercept: f64, terms: &BTreeMap<String, f64>, names: &[String]) -> Result<Self> {
        let terms = terms.iter().map(|(t, b)| Ok((compile_term(t, names)?, *b))).collect::<Result<_>>()?;
        Ok(LinearPredictor { intercept, terms })
    }

    fn eval(&self, x: &[Vec<f64>], i: usize) -> f64 {
        self.intercept
            + self
                .terms
                .iter()
                .map(|(t, b)| b * t.0.iter().map(|&(j, p)| x[j][i].powi(p)).product::<f64>())
                .sum::<f64>()
    }
}

/// A finite population with known inclusion probabilities.
#[derive(Debug, Clone)]
pub struct Population {
    pub covariate_names: Vec<String>,
    pub covariates: Vec<Vec<f64>>,
    pub outcome_names: Vec<String>,
    pub outcomes: Vec<Vec<f64>>,
    /// Inclusion probability into the non-probability sample.
    pub propensity: Vec<f64>,
}

impl Population {
    pub fn outcome_mean(&self, k: usize) -> f64 {
        let y = &self.outcomes[k];
        y.iter().sum::<f64>() / y.len() as f64
    }

    /// Expected mean of outcome `k` among selected units.
    pub fn selected_mean(&self, k: usize) -> f64 {
        let y = &self.outcomes[k];
        let num: f64 = y.iter().zip(&self.propensity).map(|(y, p)| y * p).sum();
        num / self.propensity.iter().sum::<f64>()
    }
}

fn draw_covariate(dist: &CovariateDist, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let bad = |e: &dyn std::fmt::Display| Error::Config(format!("covariate distribution: {e}"));
    Ok(match *dist {
        CovariateDist::Normal { mean, sd } => {
            let d = Normal::new(mean, sd).map_err(|e| bad(&e))?;
            (0..n).map(|_| d.sample(rng)).collect()
        }
        CovariateDist::Uniform { low, high } => {
            let d = Uniform::new(low, high).map_err(|e| bad(&e))?;
            (0..n).map(|_| d.sample(rng)).collect()
        }
        CovariateDist::Bernoulli { p } => {
            let d = Bernoulli::new(p).map_err(|e| bad(&e))?;
            (0..n).map(|_| if d.sample(rng) { 1.0 } else { 0.0 }).collect()
        }
        CovariateDist::Exponential { rate } => {
            let d = Exp::new(rate).map_err(|e| bad(&e))?;
            (0..n).map(|_| d.sample(rng)).collect()
        }
    })
}

pub fn draw_population(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Population> {
    let n = cfg.pop_size;
    let names: Vec<String> = cfg.covariates.iter().map(|c| c.name.clone()).collect();
    let covariates = cfg.covariates.iter().map(|c| draw_covariate(&c.dist, n, rng)).collect::<Result<Vec<_>>>()?;
    let mut outcomes = Vec::with_capacity(cfg.outcomes.len());
    for o in &cfg.outcomes {
        let lp = LinearPredictor::new(o.intercept, &o.terms, &names)?;
        let family = Family::parse(&o.family)?;
        let noise = Normal::new(0.0, o.sd).map_err(|e| Error::Config(format!("outcome sd: {e}")))?;
        let y = (0..n)
            .map(|i| {
                let eta = lp.eval(&covariates, i);
                Ok(match family {
                    Family::Gaussian => eta + noise.sample(rng),
                    Family::Binomial => f64::from(u8::from(rng.random::<f64>() < family.mean(eta))),
                    Family::Poisson => {
                        let d = Poisson::new(family.mean(eta))
                            .map_err(|e| Error::Config(format!("poisson outcome: {e}")))?;
                        d.sample(rng)
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        outcomes.push(y);
    }
    let link = PsLink::parse(&cfg.selection.link)?;
    let lp = LinearPredictor::new(cfg.selection.intercept, &cfg.selection.terms, &names)?;
    let propensity = (0..n).map(|i| link.prob(lp.eval(&covariates, i))).collect();
    Ok(Population {
        covariate_names: names,
        covariates,
        outcome_names: cfg.outcomes.iter().map(|o| o.name.clone()).collect(),
        outcomes,
        propensity,
    })
}

/// Draws the two samples of one replicate as tables.
pub fn draw_samples(pop: &Population, prob_size: usize, rng: &mut ChaCha8Rng) -> Result<(DataTable, DataTable)> {
    let n = pop.propensity.len();
    if prob_size == 0 || prob_size > n {
        return Err(Error::Config(format!("prob-size must lie in 1..={n}")));
    }
    let np_rows: Vec<usize> = (0..n).filter(|&i| rng.random::<f64>() < pop.propensity[i]).collect();
    let mut p_rows = rand::seq::index::sample(rng, n, prob_size).into_vec();
    p_rows.sort_unstable();
    let d = n as f64 / prob_size as f64;
    let pick = |rows: &[usize], v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let mut np_cols: Vec<(&str, Vec<f64>)> = Vec::new();
    let mut p_cols: Vec<(&str, Vec<f64>)> = Vec::new();
    for (name, x) in pop.covariate_names.iter().zip(&pop.covariates) {
        np_cols.push((name, pick(&np_rows, x)));
        p_cols.push((name, pick(&p_rows, x)));
    }
    for (name, y) in pop.outcome_names.iter().zip(&pop.outcomes) {
        np_cols.push((name, pick(&np_rows, y)));
    }
    p_cols.push((WEIGHT_COLUMN, vec![d; prob_size]));
    Ok((DataTable::from_columns(np_cols)?, DataTable::from_columns(p_cols)?))
}

/// Per-replicate outcome of one estimator and target.
#[derive(Debug, Clone, Copy)]
struct Draw {
    estimate: f64,
    se: Option<f64>,
    covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub estimator: String,
    pub target: String,
    pub succeeded: usize,
    pub failed: usize,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub empirical_se: f64,
    pub mean_se: Option<f64>,
    pub coverage: Option<f64>,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaiveRow {
    pub target: String,
    pub truth: f64,
    pub bias: f64,
    pub empirical_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub replicates: usize,
    pub mean_nonprob_size: f64,
    pub naive: Vec<NaiveRow>,
    pub estimators: Vec<SimRow>,
    /// First error message of each estimator that failed at least once.
    pub errors: BTreeMap<String, String>,
}

impl SimReport {
    pub fn row(&self, estimator: &str, target: &str) -> Option<&SimRow> {
        self.estimators.iter().find(|r| r.estimator == estimator && r.target == target)
    }

    pub fn naive_row(&self, target: &str) -> Option<&NaiveRow> {
        self.naive.iter().find(|r| r.target == target)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fails when any estimator lost more than the tolerated share of
    /// replicates.
    pub fn check(&self) -> Result<()> {
        for r in &self.estimators {
            let total = r.succeeded + r.failed;
            if total > 0 && r.failed as f64 > MAX_FAILURE_RATE * total as f64 {
                return Err(Error::Numeric(format!(
                    "estimator `{}` failed in {} of {} replicates",
                    r.estimator, r.failed, total
                )));
            }
        }
        Ok(())
    }
}

struct Replicate {
    n_np: usize,
    truths: Vec<f64>,
    naive: Vec<f64>,
    /// Per estimator: per-target draws or an error message.
    results: Vec<std::result::Result<Vec<Draw>, String>>,
}

fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (m, s)
}

fn run_replicate(
    cfg: &SimConfig,
    fixed: Option<&Population>,
    specs: &[(String, EstimationSpec)],
    r: usize,
) -> Result<Replicate> {
    let mut rng = replicate_rng(cfg.seed, r as u64 + 1);
    let owned;
    let pop = match fixed {
        Some(p) => p,
        None => {
            owned = draw_population(cfg, &mut rng)?;
            &owned
        }
    };
    let truths: Vec<f64> = (0..pop.outcomes.len()).map(|k| pop.outcome_mean(k)).collect();
    let (np, sv) = draw_samples(pop, cfg.prob_size, &mut rng)?;
    let naive = pop
        .outcome_names
        .iter()
        .map(|y| {
            let v = np.numeric_column(y)?;
            Ok(v.iter().sum::<f64>() / v.len().max(1) as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs = Inputs {
        np: &np,
        case_weights: None,
        reference: ReferenceInput::Survey { table: &sv, weights: WEIGHT_COLUMN, strata: &[] },
    };
    let results = specs
        .iter()
        .map(|(_, spec)| {
            let mut spec = spec.clone();
            spec.inference.seed = spec.inference.seed.wrapping_add(r as u64);
            match estimate(&spec, &inputs) {
                Ok(res) => Ok(res
                    .results
                    .iter()
                    .map(|e| {
                        let k = pop.outcome_names.iter().position(|y| *y == e.target).unwrap_or(0);
                        Draw {
                            estimate: e.mean,
                            se: e.se,
                            covered: e.ci.map(|(lo, hi)| lo <= truths[k] && truths[k] <= hi),
                        }
                    })
                    .collect()),
                Err(e) => Err(e.to_string()),
            }
        })
        .collect();
    Ok(Replicate { n_np: np.n_rows(), truths, naive, results })
}

/// Runs every estimator on `replicates` independent draws. Replicates run in
/// parallel; the report depends only on the configuration.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimReport> {
    if cfg.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    if cfg.covariates.iter().any(|c| c.name == WEIGHT_COLUMN) {
        return Err(Error::Config(format!("`{WEIGHT_COLUMN}` is reserved")));
    }
    let specs = cfg.estimators.iter().map(|(name, m)| Ok((name.clone(), m.to_spec()?))).collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<String>> = specs.iter().map(|(_, s)| s.targets()).collect::<Result<_>>()?;
    for t in targets.iter().flatten() {
        if !cfg.outcomes.iter().any(|o| &o.name == t) {
            return Err(Error::Config(format!("target `{t}` is not a simulated outcome")));
        }
    }
    let fixed = if cfg.redraw_population { None } else { Some(draw_population(cfg, &mut replicate_rng(cfg.seed, 0))?) };
    let reps = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, fixed.as_ref(), &specs, r))
        .collect::<Result<Vec<_>>>()?;

    let n_out = cfg.outcomes.len();
    let truth_mean = |k: usize| reps.iter().map(|r| r.truths[k]).sum::<f64>() / reps.len() as f64;
    let naive = (0..n_out)
        .map(|k| {
            let diffs: Vec<f64> = reps.iter().map(|r| r.naive[k] - r.truths[k]).collect();
            let (bias, _) = mean_sd(&diffs);
            let (_, sd) = mean_sd(&reps.iter().map(|r| r.naive[k]).collect::<Vec<_>>());
            NaiveRow { target: cfg.outcomes[k].name.clone(), truth: truth_mean(k), bias, empirical_se: sd }
        })
        .collect();
    let mut rows = Vec::new();
    let mut errors = BTreeMap::new();
    for (e, (name, _)) in specs.iter().enumerate() {
        for (t, target) in targets[e].iter().enumerate() {
            let k = cfg.outcomes.iter().position(|o| &o.name == target).expect("validated target");
            let mut est = Vec::new();
            let mut diffs = Vec::new();
            let mut ses = Vec::new();
            let mut covered = Vec::new();
            let mut failed = 0;
            for r in &reps {
                match &r.results[e] {
                    Ok(draws) => {
                        let d = draws[t];
                        est.push(d.estimate);
                        diffs.push(d.estimate - r.truths[k]);
                        ses.extend(d.se);
                        covered.extend(d.covered);
                    }
                    Err(msg) => {
                        failed += 1;
                        errors.entry(name.clone()).or_insert_with(|| msg.clone());
                    }
                }
            }
            let (mean, sd) = if est.is_empty() { (f64::NAN, f64::NAN) } else { mean_sd(&est) };
            let bias = if diffs.is_empty() { f64::NAN } else { mean_sd(&diffs).0 };
            let rmse = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
            rows.push(SimRow {
                estimator: name.clone(),
                target: target.clone(),
                succeeded: est.len(),
                failed,
                truth: truth_mean(k),
                mean,
                bias,
                empirical_se: sd,
                mean_se: (!ses.is_empty()).then(|| mean_sd(&ses).0),
                coverage: (!covered.is_empty())
                    .then(|| covered.iter().filter(|c| **c).count() as f64 / covered.len() as f64),
                rmse,
            });
        }
    }
    Ok(SimReport {
        seed: cfg.seed,
        replicates: cfg.replicates,
        mean_nonprob_size: reps.iter().map(|r| r.n_np as f64).sum::<f64>() / reps.len() as f64,
        naive,
        estimators: rows,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        seed = 3
        replicates = 20
        pop-size = 20000
        prob-size = 500

        [[covariates]]
        name = "x1"
        dist = "normal"
        mean = 0.0
        sd = 1.0

        [[covariates]]
        name = "x2"
        dist = "uniform"
        low = -1.0
        high = 1.0

        [[outcomes]]
        name = "y"
        intercept = 1.0
        terms = { x1 = 1.0, x2 = 1.0 }

        [selection]
        intercept = -2.5
        terms = { x1 = 0.8 }

        [estimators.ipw]
        selection = "~ x1 + x2"
        target = "y"

        [estimators.mi]
        outcome = "y ~ x1 + x2"

        [estimators.dr]
        selection = "~ x1 + x2"
        outcome = "y ~ x1 + x2"
    "#;

    #[test]
    fn terms_compile() {
        let names = vec!["a".to_string(), "b".to_string()];
        let t = compile_term("a^2:b", &names).unwrap();
        assert_eq!(t.0, vec![(0, 2), (1, 1)]);
        assert!(compile_term("c", &names).is_err());
        assert!(compile_term("a^x", &names).is_err());
        let lp =
            LinearPredictor::new(1.0, &[("a^2:b".to_string(), 2.0), ("b".to_string(), -1.0)].into(), &names).unwrap();
        let x = vec![vec![3.0], vec![0.5]];
        assert!((lp.eval(&x, 0) - (1.0 + 2.0 * 9.0 * 0.5 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_report_and_bias_removal() {
        let cfg = SimConfig::from_toml(BASE).unwrap();
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(a.naive_row("y").unwrap().bias > 0.3);
        for e in ["ipw", "mi", "dr"] {
            let r = a.row(e, "y").unwrap();
            assert_eq!(r.failed, 0);
            assert!(r.bias.abs() < 0.1, "{e}: {}", r.bias);
        }
        a.check().unwrap();
    }

    #[test]
    fn constant_propensity_leaves_naive_unbiased() {
        let mut cfg = SimConfig::from_toml(BASE).unwrap();
        cfg.selection.terms.clear();
        cfg.replicates = 30;
        let rep = run_simulation(&cfg).unwrap();
        let naive = rep.naive_row("y").unwrap();
        assert!(naive.bias.abs() < 3.0 * naive.empirical_se / (30f64).sqrt() + 0.01, "{naive:?}");
        for e in ["ipw", "mi", "dr"] {
            let r = rep.row(e, "y").unwrap();
            assert!((r.mean - naive.truth - naive.bias).abs() < 0.1, "{e}");
        }
    }

    #[test]
    fn failures_are_counted() {
        let mut cfg = SimConfig::from_toml(BASE).unwrap();
        cfg.replicates = 5;
        // a column absent from the data fails every replicate
        cfg.estimators.insert(
            "broken".into(),
            ModelConfig {
                selection: Some("~ x1".into()),
                target: Some("y".into()),
                method_outcome: Some("nn".into()),
                outcome: Some("y ~ x3".into()),
                ..Default::default()
            },
        );
        let rep = run_simulation(&cfg).unwrap();
        assert_eq!(rep.row("broken", "y").unwrap().failed, 5);
        assert!(rep.errors.contains_key("broken"));
        assert!(rep.check().is_err());
    }

    #[test]
    fn unknown_target_is_a_config_error() {
        let mut cfg = SimConfig::from_toml(BASE).unwrap();
        cfg.estimators.get_mut("ipw").unwrap().target = Some("z".into());
        assert!(matches!(run_simulation(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn selected_mean_matches_monte_carlo() {
        let cfg = SimConfig::from_toml(BASE).unwrap();
        let pop = draw_population(&cfg, &mut replicate_rng(1, 0)).unwrap();
        let expected = pop.selected_mean(0);
        let mut rng = replicate_rng(1, 9);
        let mut sum = 0.0;
        for _ in 0..40 {
            let (np, _) = draw_samples(&pop, 10, &mut rng).unwrap();
            let y = np.numeric_column("y").unwrap();
            sum += y.iter().sum::<f64>() / y.len() as f64;
        }
        assert!((sum / 40.0 - expected).abs() < 0.03);
    }
}
