//! End-to-end estimation from raw tables.
//!
//! Which estimator runs follows from the formulas present: a selection
//! formula alone gives IPW (a target is then required), an outcome formula
//! alone gives mass imputation, both give a doubly robust estimator.
//! Optional penalized selection picks columns first; the chosen estimator is
//! then refitted unpenalized on the active set.

use serde::{Deserialize, Serialize};

use crate::data::{
    sample_from_table, DataTable, DesignSpec, Formula, NonProbSample, PopulationBenchmark, ProbSample, Reference,
    Sample, SampleRole,
};
use crate::diagnostics::{check_balance, weight_summary, BalanceReport, WeightSummary};
use crate::dr::{dr_bias_min, dr_separate, DrEstimate, PopSizeMode};
use crate::error::{Error, Result};
use crate::glm::{irls_fit, Family, OutcomeFit};
use crate::ipw::{ipw_estimate, naive_mean};
use crate::mi::{mi_glm, mi_nn, mi_npar, mi_pmm, MiEstimate, NparOptions, PmmVariant};
use crate::propensity::{fit_gee, fit_mle, EstMethod, HVariant, PsFit, PsInput, PsLink, PsOptions};
use crate::variance::{
    analytic_variance_dr, analytic_variance_ipw, analytic_variance_mi_glm, analytic_variance_mi_nn, bootstrap_variance,
    confidence_interval, BootstrapOptions, VarMethod, VarianceResult,
};
use crate::varsel::{combine_union, select_outcome, select_ps, PenaltyConfig, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ipw,
    Mi,
    Dr,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Ipw => "inverse probability weighting",
            EstimatorKind::Mi => "mass imputation",
            EstimatorKind::Dr => "doubly robust",
        }
    }

    /// Dispatch on which formulas were supplied.
    pub fn from_presence(selection: bool, outcome: bool, target: bool) -> Result<EstimatorKind> {
        match (selection, outcome) {
            (true, true) => Ok(EstimatorKind::Dr),
            (false, true) => Ok(EstimatorKind::Mi),
            (true, false) if target => Ok(EstimatorKind::Ipw),
            (true, false) => {
                Err(Error::InvalidArgument("a target variable is required when no outcome formula is given".into()))
            }
            (false, false) => {
                Err(Error::InvalidArgument("give a selection formula, an outcome formula, or both".into()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeMethod {
    Glm,
    Nn,
    Pmm,
    Npar,
}

impl OutcomeMethod {
    pub fn name(&self) -> &'static str {
        match self {
            OutcomeMethod::Glm => "glm",
            OutcomeMethod::Nn => "nn",
            OutcomeMethod::Pmm => "pmm",
            OutcomeMethod::Npar => "npar",
        }
    }

    pub fn parse(s: &str) -> Result<OutcomeMethod> {
        match s.to_ascii_lowercase().as_str() {
            "glm" => Ok(OutcomeMethod::Glm),
            "nn" => Ok(OutcomeMethod::Nn),
            "pmm" => Ok(OutcomeMethod::Pmm),
            "npar" => Ok(OutcomeMethod::Npar),
            other => Err(Error::InvalidArgument(format!("unknown outcome method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectionControl {
    pub link: PsLink,
    pub est_method: EstMethod,
    pub gee_h: HVariant,
    pub penalty: PenaltyConfig,
    pub options: PsOptions,
}

impl Default for SelectionControl {
    fn default() -> Self {
        SelectionControl {
            link: PsLink::Logit,
            est_method: EstMethod::Mle,
            gee_h: HVariant::XOverPi,
            penalty: PenaltyConfig::default(),
            options: PsOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutcomeControl {
    pub method: OutcomeMethod,
    pub family: Family,
    pub k: usize,
    pub pmm_match: PmmVariant,
    pub npar: NparOptions,
    pub penalty: PenaltyConfig,
}

impl Default for OutcomeControl {
    fn default() -> Self {
        OutcomeControl {
            method: OutcomeMethod::Glm,
            family: Family::Gaussian,
            k: 5,
            pmm_match: PmmVariant::A,
            npar: NparOptions::default(),
            penalty: PenaltyConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InferenceControl {
    pub var_method: VarMethod,
    pub num_boot: usize,
    pub vars_selection: bool,
    pub vars_combine: bool,
    pub bias_correction: bool,
    pub se: bool,
    pub level: f64,
    pub seed: u64,
}

impl Default for InferenceControl {
    fn default() -> Self {
        InferenceControl {
            var_method: VarMethod::Analytic,
            num_boot: crate::variance::DEFAULT_REPLICATES,
            vars_selection: false,
            vars_combine: false,
            bias_correction: false,
            se: true,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Everything that defines an estimation run except the data.
#[derive(Debug, Clone, Default)]
pub struct EstimationSpec {
    pub selection: Option<Formula>,
    pub outcome: Option<Formula>,
    pub target: Vec<String>,
    pub selection_control: SelectionControl,
    pub outcome_control: OutcomeControl,
    pub inference: InferenceControl,
    /// Known population size; switches to the HT forms.
    pub pop_size: Option<f64>,
}

impl EstimationSpec {
    pub fn kind(&self) -> Result<EstimatorKind> {
        EstimatorKind::from_presence(self.selection.is_some(), self.outcome.is_some(), !self.target.is_empty())
    }

    /// Target variables: the outcome responses when there is an outcome
    /// formula, the explicit target list otherwise.
    pub fn targets(&self) -> Result<Vec<String>> {
        let t = match &self.outcome {
            Some(f) => f.responses.clone(),
            None => self.target.clone(),
        };
        if t.is_empty() {
            return Err(Error::InvalidArgument("no target variable".into()));
        }
        Ok(t)
    }
}

/// The reference side of the inputs.
#[derive(Debug, Clone, Copy)]
pub enum ReferenceInput<'a> {
    Survey { table: &'a DataTable, weights: &'a str, strata: &'a [String] },
    Population(&'a PopulationBenchmark),
}

#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a> {
    pub np: &'a DataTable,
    pub case_weights: Option<&'a str>,
    pub reference: ReferenceInput<'a>,
}

/// What the run was, in the vocabulary of the printed summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Descriptor {
    pub kind: EstimatorKind,
    pub estimator_type: String,
    pub method: String,
    pub source: String,
    pub vars_selection: bool,
    pub var_method: String,
    pub pop_size_fixed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub target: String,
    pub mean: f64,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub naive: f64,
    pub descriptor: Option<Descriptor>,
    pub n_np: usize,
    pub n_p: Option<usize>,
    pub variance: Option<VarianceResult>,
    /// Correction and projection terms of a doubly robust estimate.
    pub dr_terms: Option<(f64, f64)>,
}

impl EstimateResult {
    /// A result carrying only a point estimate.
    pub fn bare(target: &str, mean: f64) -> EstimateResult {
        EstimateResult {
            target: target.to_string(),
            mean,
            se: None,
            ci: None,
            naive: f64::NAN,
            descriptor: None,
            n_np: 0,
            n_p: None,
            variance: None,
            dr_terms: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionModel {
    pub fit: PsFit,
    pub selection: Option<SelectionResult>,
    pub balance: BalanceReport,
    pub weights: WeightSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutcomeModel {
    pub target: String,
    pub columns: Vec<String>,
    pub fit: Option<OutcomeFit>,
    pub selection: Option<SelectionResult>,
    pub pred_np: Vec<f64>,
    pub pred_p: Vec<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonprobResult {
    pub descriptor: Descriptor,
    pub n_np: usize,
    pub n_p: Option<usize>,
    pub pop_size: Option<f64>,
    pub results: Vec<EstimateResult>,
    pub selection: Option<SelectionModel>,
    pub outcomes: Vec<OutcomeModel>,
    pub warnings: Vec<String>,
}

/// Row of [`NonprobResult::extract`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRow {
    pub target: String,
    pub mean: f64,
    pub se: Option<f64>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
}

impl NonprobResult {
    pub fn extract(&self) -> Vec<ExtractRow> {
        self.results
            .iter()
            .map(|r| ExtractRow {
                target: r.target.clone(),
                mean: r.mean,
                se: r.se,
                lower_bound: r.ci.map(|c| c.0),
                upper_bound: r.ci.map(|c| c.1),
            })
            .collect()
    }

    /// Intervals at another level from the stored standard errors.
    pub fn confint(&self, level: f64) -> Result<Vec<(String, f64, f64)>> {
        self.results
            .iter()
            .map(|r| {
                let se = r.se.ok_or_else(|| Error::InvalidArgument("standard errors were not computed".into()))?;
                let (lo, hi) = confidence_interval(r.mean, se, level)?;
                Ok((r.target.clone(), lo, hi))
            })
            .collect()
    }

    /// (probability sample, non-probability sample) sizes.
    pub fn nobs(&self) -> (Option<usize>, usize) {
        (self.n_p, self.n_np)
    }

    /// Inverse propensity weights, for IPW and DR runs.
    pub fn weights(&self) -> Option<&[f64]> {
        self.selection.as_ref().map(|s| s.fit.ipw_weights.as_slice())
    }

    /// Population size and whether it was given rather than estimated.
    pub fn pop_size(&self) -> (Option<f64>, bool) {
        (self.pop_size, self.descriptor.pop_size_fixed)
    }
}

/// Loaded samples over the union of every model's columns.
struct Prepared {
    np: NonProbSample,
    p: Option<ProbSample>,
    selection_cols: Vec<String>,
    outcome_cols: Vec<String>,
    union_cols: Vec<String>,
}

fn formula_columns(f: &Formula, tables: &[&DataTable]) -> Result<Vec<String>> {
    Ok(DesignSpec::infer(f, tables)?.columns())
}

fn prepare(spec: &EstimationSpec, inputs: &Inputs<'_>, targets: &[String]) -> Result<Prepared> {
    let empty = Formula { responses: Vec::new(), terms: Vec::new(), intercept: true };
    let sel = spec.selection.clone();
    let out = spec.outcome.clone();
    let union = match (&sel, &out) {
        (Some(a), Some(b)) => a.union(b),
        (Some(a), None) => a.union(&empty),
        (None, Some(b)) => b.union(&empty),
        (None, None) => return Err(Error::InvalidArgument("no model formula".into())),
    };
    let tables: Vec<&DataTable> = match inputs.reference {
        ReferenceInput::Survey { table, .. } => vec![inputs.np, table],
        ReferenceInput::Population(_) => vec![inputs.np],
    };
    let union_spec = DesignSpec::infer(&union, &tables)?;
    let union_cols = union_spec.columns();
    let check = |f: &Option<Formula>| -> Result<Vec<String>> {
        let Some(f) = f else { return Ok(Vec::new()) };
        let cols = formula_columns(f, &tables)?;
        if let Some(c) = cols.iter().find(|c| !union_cols.contains(c)) {
            return Err(Error::Formula(format!(
                "column `{c}` does not appear in the combined design; use the same intercept convention in both formulas"
            )));
        }
        Ok(cols)
    };
    let selection_cols = check(&sel)?;
    let outcome_cols = check(&out)?;

    let np_formula = Formula { responses: targets.to_vec(), terms: union.terms.clone(), intercept: union.intercept };
    let np = match sample_from_table(
        inputs.np,
        &np_formula,
        SampleRole::NonProb,
        inputs.case_weights,
        &[],
        Some(&union_spec),
    )? {
        Sample::NonProb(s) => s,
        Sample::Prob(_) => unreachable!("role is non-probability"),
    };
    let p = match inputs.reference {
        ReferenceInput::Survey { table, weights, strata } => {
            match sample_from_table(table, &union, SampleRole::Prob, Some(weights), strata, Some(&union_spec))? {
                Sample::Prob(s) => Some(s),
                Sample::NonProb(_) => unreachable!("role is probability"),
            }
        }
        ReferenceInput::Population(b) => {
            for cols in [&selection_cols, &outcome_cols] {
                if !cols.is_empty() {
                    b.totals_for(cols)?;
                }
            }
            None
        }
    };
    Ok(Prepared { np, p, selection_cols, outcome_cols, union_cols })
}

fn subset_np(np: &NonProbSample, cols: &[String]) -> Result<NonProbSample> {
    np.with_design(np.design().select_columns(cols)?)
}

fn subset_p(p: &ProbSample, cols: &[String]) -> Result<ProbSample> {
    p.with_design(p.design().select_columns(cols)?)
}

/// Column sets fixed after selection; replayed on bootstrap resamples.
#[derive(Debug, Clone)]
struct Plan {
    kind: EstimatorKind,
    ps_cols: Vec<String>,
    /// Per target: outcome columns and, when the models share the union of
    /// their columns, that union.
    targets: Vec<(String, Vec<String>, Option<Vec<String>>)>,
    bias_min: bool,
    pop_size: Option<f64>,
}

struct TargetFit {
    mu: f64,
    ps: Option<(PsFit, PsInput)>,
    mi: Option<MiEstimate>,
    dr: Option<DrEstimate>,
    ipw_form: Option<crate::ipw::IpwEstimate>,
    /// Samples over the outcome (or union) columns.
    np_out: Option<NonProbSample>,
    p_out: Option<ProbSample>,
}

fn fit_ps(np: &NonProbSample, reference: Reference<'_>, ctl: &SelectionControl) -> Result<(PsFit, PsInput)> {
    let input = PsInput::new(np, reference)?;
    let fit = match ctl.est_method {
        EstMethod::Mle => {
            if !input.has_survey() {
                return Err(Error::Unsupported(
                    "maximum likelihood propensity estimation needs a probability sample; use --est-method gee with population totals".into(),
                ));
            }
            fit_mle(&input, ctl.link, &ctl.options)?
        }
        EstMethod::Gee => fit_gee(&input, ctl.link, ctl.gee_h, &ctl.options)?,
    };
    Ok((fit, input))
}

fn reference_of<'a>(p: &'a Option<ProbSample>, bench: Option<&'a PopulationBenchmark>) -> Result<Reference<'a>> {
    match (p, bench) {
        (Some(p), _) => Ok(Reference::Survey(p)),
        (None, Some(b)) => Ok(Reference::Population(b)),
        (None, None) => Err(Error::InvalidArgument("no reference data".into())),
    }
}

fn run_plan(
    plan: &Plan,
    spec: &EstimationSpec,
    np: &NonProbSample,
    reference: Reference<'_>,
) -> Result<Vec<TargetFit>> {
    let (p_all, bench) = match reference {
        Reference::Survey(p) => (Some(p.clone()), None),
        Reference::Population(b) => (None, Some(b)),
    };
    let sub = |cols: &[String]| -> Result<(NonProbSample, Option<ProbSample>)> {
        Ok((subset_np(np, cols)?, p_all.as_ref().map(|p| subset_p(p, cols)).transpose()?))
    };
    let shared_ps = if plan.kind != EstimatorKind::Mi && plan.targets.iter().any(|t| t.2.is_none()) {
        let (np_s, p_s) = sub(&plan.ps_cols)?;
        let r = reference_of(&p_s, bench)?;
        Some(fit_ps(&np_s, r, &spec.selection_control)?)
    } else {
        None
    };
    let octl = &spec.outcome_control;
    let mut fits = Vec::with_capacity(plan.targets.len());
    for (target, out_cols, union) in &plan.targets {
        let fit = match plan.kind {
            EstimatorKind::Ipw => {
                let (ps, input) = shared_ps.clone().expect("propensity fit for IPW");
                let (np_s, _) = sub(&plan.ps_cols)?;
                let est = ipw_estimate(&np_s, &ps, target, plan.pop_size)?;
                TargetFit {
                    mu: est.mu,
                    ps: Some((ps, input)),
                    mi: None,
                    dr: None,
                    ipw_form: Some(est),
                    np_out: Some(np_s),
                    p_out: None,
                }
            }
            EstimatorKind::Mi => {
                let (np_o, p_o) = sub(out_cols)?;
                let r = reference_of(&p_o, bench)?;
                let need_survey = || {
                    p_o.as_ref().ok_or_else(|| {
                        Error::Unsupported(format!(
                            "{} imputation needs a probability sample; population totals support only the gaussian glm",
                            octl.method.name()
                        ))
                    })
                };
                let est = match octl.method {
                    OutcomeMethod::Glm => mi_glm(&np_o, r, target, octl.family)?,
                    OutcomeMethod::Nn => mi_nn(&np_o, need_survey()?, target, octl.k)?,
                    OutcomeMethod::Pmm => mi_pmm(&np_o, need_survey()?, target, octl.k, octl.pmm_match, octl.family)?,
                    OutcomeMethod::Npar => mi_npar(&np_o, need_survey()?, target, octl.npar)?,
                };
                TargetFit {
                    mu: est.mu,
                    ps: None,
                    mi: Some(est),
                    dr: None,
                    ipw_form: None,
                    np_out: Some(np_o),
                    p_out: p_o,
                }
            }
            EstimatorKind::Dr => {
                if octl.method != OutcomeMethod::Glm {
                    return Err(Error::Unsupported(format!(
                        "doubly robust estimation needs the glm outcome method, got {}",
                        octl.method.name()
                    )));
                }
                let mode = if plan.pop_size.is_some() { PopSizeMode::Known } else { PopSizeMode::Estimated };
                match union {
                    None => {
                        let (ps, input) = shared_ps.clone().expect("shared propensity fit");
                        let (np_o, p_o) = sub(out_cols)?;
                        let r = reference_of(&p_o, bench)?;
                        let out =
                            irls_fit(np_o.design(), np_o.outcome(target)?, octl.family, np_o.case_weights(), None)?;
                        let est = dr_separate(&np_o, r, &ps, &out, target, mode, plan.pop_size)?;
                        TargetFit {
                            mu: est.mu,
                            ps: Some((ps, input)),
                            mi: None,
                            dr: Some(est),
                            ipw_form: None,
                            np_out: Some(np_o),
                            p_out: p_o,
                        }
                    }
                    Some(cols) => {
                        let (np_u, p_u) = sub(cols)?;
                        let r = reference_of(&p_u, bench)?;
                        let (ps, input) = fit_ps(&np_u, r, &spec.selection_control)?;
                        let out =
                            irls_fit(np_u.design(), np_u.outcome(target)?, octl.family, np_u.case_weights(), None)?;
                        let est = if plan.bias_min {
                            dr_bias_min(
                                &np_u,
                                r,
                                ps.link,
                                octl.family,
                                target,
                                &ps.gamma,
                                &out.coefficients,
                                &spec.selection_control.options,
                            )?
                        } else {
                            dr_separate(&np_u, r, &ps, &out, target, mode, plan.pop_size)?
                        };
                        let ps = (est.ps.clone(), input);
                        TargetFit {
                            mu: est.mu,
                            ps: Some(ps),
                            mi: None,
                            dr: Some(est),
                            ipw_form: None,
                            np_out: Some(np_u),
                            p_out: p_u,
                        }
                    }
                }
            }
        };
        fits.push(fit);
    }
    Ok(fits)
}

fn method_label(kind: EstimatorKind, spec: &EstimationSpec) -> String {
    let s = &spec.selection_control;
    let o = &spec.outcome_control;
    match kind {
        EstimatorKind::Ipw => {
            let m = match s.est_method {
                EstMethod::Mle => "mle",
                EstMethod::Gee => "gee",
            };
            format!("{} ({m})", s.link.name())
        }
        EstimatorKind::Mi | EstimatorKind::Dr => match o.method {
            OutcomeMethod::Glm | OutcomeMethod::Pmm => format!("{} ({})", o.method.name(), o.family.name()),
            m => m.name().to_string(),
        },
    }
}

fn analytic(kind: EstimatorKind, fit: &TargetFit, reference: Reference<'_>, target: &str) -> Result<VarianceResult> {
    match kind {
        EstimatorKind::Ipw => {
            let (ps, input) = fit.ps.as_ref().expect("propensity fit");
            let est = fit.ipw_form.as_ref().expect("ipw estimate");
            let np = fit.np_out.as_ref().expect("sample");
            let strata: &[String] = match reference {
                Reference::Survey(p) => p.strata(),
                Reference::Population(_) => &[],
            };
            analytic_variance_ipw(est, ps, input, np.outcome(target)?, strata)
        }
        EstimatorKind::Mi => {
            let est = fit.mi.as_ref().expect("mass imputation estimate");
            let np = fit.np_out.as_ref().expect("sample");
            match est.method {
                crate::mi::MiMethod::Glm => {
                    let r = match &fit.p_out {
                        Some(p) => Reference::Survey(p),
                        None => reference,
                    };
                    analytic_variance_mi_glm(est, np, r)
                }
                crate::mi::MiMethod::Npar => {
                    let mut v = analytic_variance_mi_nn(est, fit.p_out.as_ref().expect("survey"))?;
                    v.warnings.push("analytic variance for local polynomial imputation covers the survey part only; bootstrap is recommended".into());
                    Ok(v)
                }
                _ => analytic_variance_mi_nn(est, fit.p_out.as_ref().expect("survey")),
            }
        }
        EstimatorKind::Dr => {
            let est = fit.dr.as_ref().expect("dr estimate");
            let np = fit.np_out.as_ref().expect("sample");
            let (_, input) = fit.ps.as_ref().expect("propensity input");
            let r = match &fit.p_out {
                Some(p) => Reference::Survey(p),
                None => reference,
            };
            analytic_variance_dr(est, input, np, r)
        }
    }
}

/// Runs the estimator chain described by `spec` on `inputs`.
pub fn estimate(spec: &EstimationSpec, inputs: &Inputs<'_>) -> Result<NonprobResult> {
    let kind = spec.kind()?;
    let targets = spec.targets()?;
    let inf = &spec.inference;
    if !(inf.level > 0.0 && inf.level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {}", inf.level)));
    }
    if let Some(n) = spec.pop_size {
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument(format!("population size must be positive, got {n}")));
        }
    }
    let bench = match inputs.reference {
        ReferenceInput::Population(b) => Some(b),
        ReferenceInput::Survey { .. } => None,
    };
    if bench.is_some() && kind != EstimatorKind::Mi && spec.selection_control.est_method == EstMethod::Mle {
        return Err(Error::Unsupported(
            "population totals cannot be used with maximum likelihood propensity estimation; use the gee method".into(),
        ));
    }
    let prep = prepare(spec, inputs, &targets)?;
    let reference = reference_of(&prep.p, bench)?;
    let pop_size = spec.pop_size.or_else(|| {
        bench.and_then(|b| match b.pop_size_spec() {
            crate::data::PopSize::Known(n) => Some(n),
            crate::data::PopSize::Estimated => None,
        })
    });
    let mut warnings = Vec::new();

    // variable selection on the full column sets
    let mut ps_cols = prep.selection_cols.clone();
    let mut ps_selection = None;
    if inf.vars_selection && kind != EstimatorKind::Mi {
        let np_s = subset_np(&prep.np, &ps_cols)?;
        let p_s = prep.p.as_ref().map(|p| subset_p(p, &ps_cols)).transpose()?;
        let input = PsInput::new(&np_s, reference_of(&p_s, bench)?)?;
        let sel = select_ps(&input, spec.selection_control.link, HVariant::XOverPi, &spec.selection_control.penalty)?;
        ps_cols = sel.active_names();
        ps_selection = Some(sel);
    }
    let mut plan_targets = Vec::new();
    let mut out_selection = Vec::new();
    for t in &targets {
        let mut cols = prep.outcome_cols.clone();
        let mut chosen = None;
        if inf.vars_selection && kind != EstimatorKind::Ipw {
            let np_o = subset_np(&prep.np, &cols)?;
            let sel = select_outcome(
                &cols,
                np_o.x(),
                np_o.outcome(t)?,
                np_o.case_weights(),
                spec.outcome_control.family,
                &spec.outcome_control.penalty,
            )?;
            cols = sel.active_names();
            chosen = Some(sel);
        }
        let union = if kind == EstimatorKind::Dr && (inf.vars_combine || inf.bias_correction) {
            Some(combine_union(&prep.union_cols, &ps_cols, &cols))
        } else {
            None
        };
        out_selection.push(chosen);
        plan_targets.push((t.clone(), cols, union));
    }
    let plan = Plan {
        kind,
        ps_cols,
        targets: plan_targets,
        bias_min: kind == EstimatorKind::Dr && inf.bias_correction,
        pop_size: if kind == EstimatorKind::Mi { None } else { pop_size },
    };
    let fits = run_plan(&plan, spec, &prep.np, reference)?;

    // variance
    let variances: Vec<Option<VarianceResult>> = if !inf.se {
        vec![None; fits.len()]
    } else {
        match inf.var_method {
            VarMethod::Analytic => fits
                .iter()
                .zip(&targets)
                .map(|(f, t)| analytic(kind, f, reference, t).map(Some))
                .collect::<Result<_>>()?,
            VarMethod::Bootstrap => {
                let point: Vec<f64> = fits.iter().map(|f| f.mu).collect();
                let opts = BootstrapOptions { replicates: inf.num_boot, seed: inf.seed };
                let estimator = |np_b: &NonProbSample, r_b: Reference<'_>| -> Result<Vec<f64>> {
                    Ok(run_plan(&plan, spec, np_b, r_b)?.iter().map(|f| f.mu).collect())
                };
                bootstrap_variance(estimator, &prep.np, reference, &point, &opts)?.into_iter().map(Some).collect()
            }
        }
    };

    let descriptor = Descriptor {
        kind,
        estimator_type: kind.label().to_string(),
        method: method_label(kind, spec),
        source: reference.source_label().to_string(),
        vars_selection: inf.vars_selection,
        var_method: if inf.se { inf.var_method.name().to_string() } else { "none".to_string() },
        pop_size_fixed: pop_size.is_some(),
    };
    let n_np = prep.np.n();
    let n_p = prep.p.as_ref().map(|p| p.n());
    let mut results = Vec::with_capacity(fits.len());
    for ((fit, t), var) in fits.iter().zip(&targets).zip(variances) {
        let se = var.as_ref().map(|v| v.se);
        let ci = se.map(|s| confidence_interval(fit.mu, s, inf.level)).transpose()?;
        if let Some(v) = &var {
            for w in &v.warnings {
                if !warnings.contains(w) {
                    warnings.push(w.clone());
                }
            }
        }
        results.push(EstimateResult {
            target: t.clone(),
            mean: fit.mu,
            se,
            ci,
            naive: naive_mean(&prep.np, t)?,
            descriptor: Some(descriptor.clone()),
            n_np,
            n_p,
            variance: var,
            dr_terms: fit.dr.as_ref().map(|d| (d.correction, d.projection)),
        });
    }
    for f in &fits {
        if let Some(mi) = &f.mi {
            for w in &mi.warnings {
                if !warnings.contains(w) {
                    warnings.push(w.clone());
                }
            }
        }
    }

    let selection = match fits.first().and_then(|f| f.ps.as_ref()) {
        Some((fit, input)) => Some(SelectionModel {
            balance: check_balance(fit, input, &input.columns)?,
            weights: weight_summary(fit),
            fit: fit.clone(),
            selection: ps_selection,
        }),
        None => None,
    };
    let outcomes = fits
        .iter()
        .zip(&plan.targets)
        .zip(out_selection)
        .filter(|_| kind != EstimatorKind::Ipw)
        .map(|((f, (t, cols, union)), sel)| outcome_model(f, t, union.as_ref().unwrap_or(cols), sel))
        .collect::<Result<Vec<_>>>()?;

    Ok(NonprobResult {
        descriptor,
        n_np,
        n_p,
        pop_size: pop_size.or(reference.pop_size()),
        results,
        selection,
        outcomes,
        warnings,
    })
}

fn outcome_model(f: &TargetFit, target: &str, cols: &[String], sel: Option<SelectionResult>) -> Result<OutcomeModel> {
    let np = f.np_out.as_ref().expect("outcome sample");
    let y = np.outcome(target)?;
    let (fit, pred_np, pred_p) = match (&f.mi, &f.dr) {
        (Some(mi), _) => (mi.outcome_fit.clone(), mi.pred_np.clone(), mi.pred_p.clone()),
        (None, Some(dr)) => {
            let pred_np = dr.outcome.predict_matrix(np.x())?;
            let pred_p = match &f.p_out {
                Some(p) => dr.outcome.predict(p.design())?,
                None => Vec::new(),
            };
            (Some(dr.outcome.clone()), pred_np, pred_p)
        }
        (None, None) => (None, Vec::new(), Vec::new()),
    };
    let residuals =
        if pred_np.len() == y.len() { y.iter().zip(&pred_np).map(|(a, b)| a - b).collect() } else { Vec::new() };
    Ok(OutcomeModel {
        target: target.to_string(),
        columns: cols.to_vec(),
        fit,
        selection: sel,
        pred_np,
        pred_p,
        residuals,
    })
}
