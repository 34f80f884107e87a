//! Run configuration: a TOML document whose keys match the command-line
//! flags, plus the estimate runner used by the binary.
//!
//! ```toml
//! [data]
//! nonprob = "admin.csv"
//! survey = "jvs.csv"
//! weights = "weight"
//!
//! [model]
//! selection = "~ region + private + size"
//! target = "~ single_shift"
//! method-selection = "logit"
//!
//! [compare.gee]
//! est-method = "gee"
//!
//! [output]
//! report = "report.json"
//! ```
//!
//! Entries under `compare` are overlaid on `[model]` and run side by side.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_benchmark, BenchmarkKind, DataTable, Formula, PopulationBenchmark};
use crate::diagnostics::{compare_estimates, write_comparison_csv, ComparisonRow};
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::mi::PmmVariant;
use crate::pipeline::{estimate, EstimationSpec, Inputs, NonprobResult, OutcomeMethod, ReferenceInput};
use crate::propensity::{EstMethod, HVariant, PsLink};
use crate::report::{print_text, summary_text, Report};
use crate::variance::VarMethod;
use crate::varsel::Penalty;

/// Model and inference settings. Every field is optional so that layers
/// (file, comparison entry, flags) can be overlaid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ModelConfig {
    pub selection: Option<String>,
    pub outcome: Option<String>,
    /// `~ y1 + y2` or `y1,y2`.
    pub target: Option<String>,
    pub method_selection: Option<String>,
    pub method_outcome: Option<String>,
    pub family_outcome: Option<String>,
    pub est_method: Option<String>,
    pub gee_h: Option<u8>,
    pub k: Option<usize>,
    /// 1 matches predictions to predictions, 2 predictions to outcomes.
    pub pmm_match: Option<u8>,
    pub penalty: Option<String>,
    pub nfolds: Option<usize>,
    pub var_method: Option<String>,
    pub num_boot: Option<usize>,
    pub vars_selection: Option<bool>,
    pub vars_combine: Option<bool>,
    pub bias_correction: Option<bool>,
    pub se: Option<bool>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub pop_size: Option<f64>,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr, $($f:ident),*) => {
        ModelConfig { $($f: $top.$f.clone().or_else(|| $base.$f.clone())),* }
    };
}

pub fn parse_targets(text: &str) -> Vec<String> {
    text.trim()
        .trim_start_matches('~')
        .split(['+', ','])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl ModelConfig {
    /// Fields set in `top` win over `self`.
    pub fn overlay(&self, top: &ModelConfig) -> ModelConfig {
        overlay_fields!(
            self,
            top,
            selection,
            outcome,
            target,
            method_selection,
            method_outcome,
            family_outcome,
            est_method,
            gee_h,
            k,
            pmm_match,
            penalty,
            nfolds,
            var_method,
            num_boot,
            vars_selection,
            vars_combine,
            bias_correction,
            se,
            level,
            seed,
            pop_size
        )
    }

    pub fn to_spec(&self) -> Result<EstimationSpec> {
        let mut spec = EstimationSpec {
            selection: self.selection.as_deref().map(Formula::parse).transpose()?,
            outcome: self.outcome.as_deref().map(Formula::parse).transpose()?,
            target: self.target.as_deref().map(parse_targets).unwrap_or_default(),
            pop_size: self.pop_size,
            ..Default::default()
        };
        if let Some(s) = &spec.selection {
            if !s.responses.is_empty() {
                return Err(Error::Formula("the selection formula takes no response".into()));
            }
        }
        let sc = &mut spec.selection_control;
        if let Some(m) = &self.method_selection {
            sc.link = PsLink::parse(m)?;
        }
        if let Some(m) = &self.est_method {
            sc.est_method = EstMethod::parse(m)?;
        }
        if let Some(h) = self.gee_h {
            sc.gee_h = HVariant::from_code(h)?;
        }
        let oc = &mut spec.outcome_control;
        if let Some(m) = &self.method_outcome {
            oc.method = OutcomeMethod::parse(m)?;
        }
        if let Some(f) = &self.family_outcome {
            oc.family = Family::parse(f)?;
        }
        if let Some(k) = self.k {
            if k == 0 {
                return Err(Error::InvalidArgument("k must be at least 1".into()));
            }
            oc.k = k;
        }
        if let Some(m) = self.pmm_match {
            oc.pmm_match = match m {
                1 => PmmVariant::A,
                2 => PmmVariant::B,
                other => return Err(Error::InvalidArgument(format!("pmm-match must be 1 or 2, got {other}"))),
            };
        }
        let penalty = self.penalty.as_deref().map(Penalty::parse).transpose()?;
        for p in [&mut spec.selection_control.penalty, &mut spec.outcome_control.penalty] {
            if let Some(pen) = penalty {
                p.penalty = pen;
            }
            if let Some(n) = self.nfolds {
                if n < 2 {
                    return Err(Error::InvalidArgument("nfolds must be at least 2".into()));
                }
                p.nfolds = n;
            }
            if let Some(s) = self.seed {
                p.seed = s;
            }
        }
        let inf = &mut spec.inference;
        if let Some(v) = &self.var_method {
            inf.var_method = VarMethod::parse(v)?;
        }
        if let Some(b) = self.num_boot {
            inf.num_boot = b;
        }
        inf.vars_selection = self.vars_selection.unwrap_or(false);
        inf.vars_combine = self.vars_combine.unwrap_or(false);
        inf.bias_correction = self.bias_correction.unwrap_or(false);
        inf.se = self.se.unwrap_or(true);
        if let Some(l) = self.level {
            inf.level = l;
        }
        if let Some(s) = self.seed {
            inf.seed = s;
        }
        if inf.bias_correction && !(spec.selection.is_some() && spec.outcome.is_some()) {
            return Err(Error::InvalidArgument("bias correction needs both a selection and an outcome formula".into()));
        }
        spec.kind()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct DataConfig {
    pub nonprob: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    /// Design weight column of the survey.
    pub weights: Option<String>,
    pub strata: Vec<String>,
    pub case_weights: Option<String>,
    pub pop_totals: Option<PathBuf>,
    pub pop_means: Option<PathBuf>,
    /// Row filter on the non-probability data: `col=value`, joined with `&`.
    pub subset: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub comparison: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub compare: BTreeMap<String, ModelConfig>,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path.as_ref())?;
        RunConfig::from_toml(&text)
    }

    /// Named model settings to run: `[model]` alone, or each comparison entry
    /// on top of it.
    pub fn models(&self) -> Vec<(String, ModelConfig)> {
        if self.compare.is_empty() {
            vec![("main".to_string(), self.model.clone())]
        } else {
            self.compare.iter().map(|(k, m)| (k.clone(), self.model.overlay(m))).collect()
        }
    }
}

/// Applies a `col=value & col2=value2` filter.
pub fn apply_subset(table: &DataTable, expr: &str) -> Result<DataTable> {
    let mut out = table.clone();
    for clause in expr.split('&').map(str::trim).filter(|c| !c.is_empty()) {
        let (col, value) = clause
            .split_once("==")
            .or_else(|| clause.split_once('='))
            .ok_or_else(|| Error::InvalidArgument(format!("subset clause `{clause}` is not `column=value`")))?;
        let value = value.trim().trim_matches(|c| c == '"' || c == '\'');
        out = out.filter_equal(col.trim(), value)?;
    }
    if out.n_rows() == 0 {
        return Err(Error::InvalidArgument(format!("subset `{expr}` leaves no rows")));
    }
    Ok(out)
}

/// Loaded data shared by every model of a run.
pub struct LoadedData {
    pub np: DataTable,
    pub survey: Option<DataTable>,
    pub benchmark: Option<PopulationBenchmark>,
}

pub fn load_data(data: &DataConfig, pop_size: Option<f64>) -> Result<LoadedData> {
    let path = data.nonprob.as_ref().ok_or_else(|| Error::Config("no non-probability data file".into()))?;
    let mut np = DataTable::from_csv_path(path)?;
    if let Some(s) = &data.subset {
        np = apply_subset(&np, s)?;
    }
    let sources = [data.survey.is_some(), data.pop_totals.is_some(), data.pop_means.is_some()];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(Error::InvalidArgument(
            "give exactly one of a survey file, population totals or population means".into(),
        ));
    }
    let survey = data.survey.as_ref().map(DataTable::from_csv_path).transpose()?;
    if survey.is_some() && data.weights.is_none() {
        return Err(Error::InvalidArgument("the survey needs a design weight column".into()));
    }
    let benchmark = match (&data.pop_totals, &data.pop_means) {
        (Some(p), _) => Some(load_benchmark(p, BenchmarkKind::Totals, pop_size)?),
        (_, Some(p)) => Some(load_benchmark(p, BenchmarkKind::Means, pop_size)?),
        _ => None,
    };
    Ok(LoadedData { np, survey, benchmark })
}

impl LoadedData {
    pub fn inputs<'a>(&'a self, data: &'a DataConfig) -> Inputs<'a> {
        let reference = match (&self.survey, &self.benchmark) {
            (Some(t), _) => ReferenceInput::Survey {
                table: t,
                weights: data.weights.as_deref().unwrap_or_default(),
                strata: &data.strata,
            },
            (None, Some(b)) => ReferenceInput::Population(b),
            (None, None) => unreachable!("load_data requires a reference source"),
        };
        Inputs { np: &self.np, case_weights: data.case_weights.as_deref(), reference }
    }
}

/// One estimated model of a run.
pub struct RunOutput {
    pub name: String,
    pub result: NonprobResult,
    pub report: Report,
}

fn call_text(m: &ModelConfig) -> String {
    let mut parts = Vec::new();
    if let Some(s) = &m.selection {
        parts.push(format!("selection = {s}"));
    }
    if let Some(o) = &m.outcome {
        parts.push(format!("outcome = {o}"));
    }
    if let Some(t) = &m.target {
        parts.push(format!("target = {t}"));
    }
    parts.join(", ")
}

pub fn run_estimate(cfg: &RunConfig) -> Result<Vec<RunOutput>> {
    let models = cfg.models();
    let specs =
        models.iter().map(|(name, m)| Ok((name.clone(), m.clone(), m.to_spec()?))).collect::<Result<Vec<_>>>()?;
    let pop_size = specs.iter().find_map(|s| s.2.pop_size);
    let data = load_data(&cfg.data, pop_size)?;
    let inputs = data.inputs(&cfg.data);
    specs
        .into_iter()
        .map(|(name, m, spec)| {
            log::info!("estimating `{name}`");
            let result = estimate(&spec, &inputs)?;
            let report = Report::new(&result, Some(call_text(&m)));
            Ok(RunOutput { name, result, report })
        })
        .collect()
}

/// Rows for the comparison CSV, each delta taken against its target's
/// naive mean.
pub fn comparison_rows(outputs: &[RunOutput]) -> Vec<ComparisonRow> {
    outputs
        .iter()
        .flat_map(|o| {
            o.result.results.iter().flat_map(|r| compare_estimates([(o.name.as_str(), r)], r.naive)).collect::<Vec<_>>()
        })
        .collect()
}

/// Machine report for a whole run: one report per model name.
pub fn run_report_json(outputs: &[RunOutput]) -> Result<String> {
    let map: BTreeMap<&str, &Report> = outputs.iter().map(|o| (o.name.as_str(), &o.report)).collect();
    Ok(serde_json::to_string_pretty(&map)?)
}

pub fn summary_document(outputs: &[RunOutput]) -> String {
    let mut text = String::new();
    for o in outputs {
        if outputs.len() > 1 {
            text.push_str(&format!("[{}]\n", o.name));
        }
        text.push_str(&summary_text(&o.report));
    }
    text
}

pub fn print_document(outputs: &[RunOutput]) -> String {
    let mut text = String::new();
    for o in outputs {
        if outputs.len() > 1 {
            text.push_str(&format!("[{}]\n", o.name));
        }
        text.push_str(&print_text(&o.report));
    }
    text
}

/// Writes the report, summary and comparison files named in `out`. The
/// comparison CSV is only written when more than one estimate was produced.
pub fn write_outputs(out: &OutputConfig, outputs: &[RunOutput]) -> Result<()> {
    if let Some(p) = &out.report {
        std::fs::write(p, run_report_json(outputs)? + "\n")?;
    }
    if let Some(p) = &out.summary {
        std::fs::write(p, summary_document(outputs))?;
    }
    let rows = comparison_rows(outputs);
    if let Some(p) = &out.comparison {
        if rows.len() > 1 {
            write_comparison_csv(&rows, File::create(p)?)?;
        }
    }
    Ok(())
}

/// Report written in place of the results when a run fails.
pub fn write_failure(path: &Path, err: &Error) -> Result<()> {
    let payload = serde_json::json!({
        "status": "error",
        "exit_code": err.exit_code(),
        "message": err.to_string(),
    });
    let mut f = File::create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(&payload)?)?;
    Ok(())
}
