//! Command-line front end. Flags override values read from `--config`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{print_document, run_estimate, write_failure, write_outputs, ModelConfig, RunConfig};
use crate::error::{Error, Result};
use crate::simulation::{run_simulation, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "nonprob", version, about = "Population mean estimation from non-probability samples")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate population means (IPW, mass imputation or doubly robust).
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study described by a TOML file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Non-probability sample CSV.
    #[arg(long)]
    pub nonprob: Option<PathBuf>,
    /// Reference probability sample CSV.
    #[arg(long)]
    pub survey: Option<PathBuf>,
    /// Design weight column of the survey.
    #[arg(long)]
    pub weights: Option<String>,
    /// Stratum column(s) of the survey.
    #[arg(long)]
    pub strata: Vec<String>,
    #[arg(long)]
    pub case_weights: Option<String>,
    /// CSV of `name,total` population totals.
    #[arg(long)]
    pub pop_totals: Option<PathBuf>,
    /// CSV of `name,mean` population means; needs --pop-size.
    #[arg(long)]
    pub pop_means: Option<PathBuf>,
    /// Row filter on the non-probability sample, e.g. `region=north`.
    #[arg(long)]
    pub subset: Option<String>,

    #[arg(long)]
    pub selection: Option<String>,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_parser = ["logit", "probit", "cloglog"])]
    pub method_selection: Option<String>,
    #[arg(long, value_parser = ["glm", "nn", "pmm", "npar"])]
    pub method_outcome: Option<String>,
    #[arg(long, value_parser = ["gaussian", "binomial", "poisson"])]
    pub family_outcome: Option<String>,
    #[arg(long)]
    pub pop_size: Option<f64>,
    #[arg(long, value_parser = ["analytic", "bootstrap"])]
    pub var_method: Option<String>,
    #[arg(long)]
    pub num_boot: Option<usize>,
    #[arg(long)]
    pub vars_selection: bool,
    #[arg(long)]
    pub bias_correction: bool,
    #[arg(long)]
    pub vars_combine: bool,
    #[arg(long, value_parser = ["mle", "gee"])]
    pub est_method: Option<String>,
    #[arg(long)]
    pub gee_h: Option<u8>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub pmm_match: Option<u8>,
    #[arg(long, value_parser = ["SCAD", "lasso", "MCP", "scad", "mcp"])]
    pub penalty: Option<String>,
    #[arg(long)]
    pub nfolds: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, overrides_with = "no_se")]
    pub se: bool,
    #[arg(long, overrides_with = "se")]
    pub no_se: bool,

    /// Machine report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Human summary.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Comparison CSV, written when several estimates are produced.
    #[arg(long)]
    pub comparison: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML simulation configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Machine report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

impl EstimateArgs {
    /// The run configuration: file values with flags on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        let flags = ModelConfig {
            selection: self.selection.clone(),
            outcome: self.outcome.clone(),
            target: self.target.clone(),
            method_selection: self.method_selection.clone(),
            method_outcome: self.method_outcome.clone(),
            family_outcome: self.family_outcome.clone(),
            est_method: self.est_method.clone(),
            gee_h: self.gee_h,
            k: self.k,
            pmm_match: self.pmm_match,
            penalty: self.penalty.clone(),
            nfolds: self.nfolds,
            var_method: self.var_method.clone(),
            num_boot: self.num_boot,
            vars_selection: flag(self.vars_selection),
            vars_combine: flag(self.vars_combine),
            bias_correction: flag(self.bias_correction),
            se: if self.no_se { Some(false) } else { flag(self.se) },
            level: self.level,
            seed: self.seed,
            pop_size: self.pop_size,
        };
        cfg.model = cfg.model.overlay(&flags);
        // flags also win over comparison entries
        for m in cfg.compare.values_mut() {
            *m = m.overlay(&flags);
        }
        let d = &mut cfg.data;
        macro_rules! set {
            ($($f:ident),*) => { $( if self.$f.is_some() { d.$f = self.$f.clone(); } )* };
        }
        set!(nonprob, survey, weights, case_weights, pop_totals, pop_means, subset);
        if !self.strata.is_empty() {
            d.strata = self.strata.clone();
        }
        let o = &mut cfg.output;
        if self.report.is_some() {
            o.report = self.report.clone();
        }
        if self.summary.is_some() {
            o.summary = self.summary.clone();
        }
        if self.comparison.is_some() {
            o.comparison = self.comparison.clone();
        }
        Ok(cfg)
    }
}

fn estimate_command(args: &EstimateArgs) -> Result<String> {
    let cfg = args.resolve()?;
    match run_estimate(&cfg) {
        Ok(outputs) => {
            write_outputs(&cfg.output, &outputs)?;
            Ok(print_document(&outputs))
        }
        Err(e) => {
            if let Some(p) = &cfg.output.report {
                write_failure(p, &e)?;
            }
            Err(e)
        }
    }
}

fn simulate_command(args: &SimulateArgs) -> Result<String> {
    let mut cfg = SimConfig::from_path(&args.config)?;
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let report = run_simulation(&cfg)?;
    if let Some(p) = &args.report {
        std::fs::write(p, report.to_json()? + "\n")?;
    }
    let mut text =
        format!("replicates: {}; mean nonprob sample size: {:.1}\n", report.replicates, report.mean_nonprob_size);
    for n in &report.naive {
        text.push_str(&format!("naive {}: bias {:.4}; se {:.4}\n", n.target, n.bias, n.empirical_se));
    }
    text.push_str("estimator\ttarget\tbias\tse\tmean_se\tcoverage\tfailed\n");
    for r in &report.estimators {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        text.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{}\n",
            r.estimator,
            r.target,
            r.bias,
            r.empirical_se,
            opt(r.mean_se),
            opt(r.coverage),
            r.failed
        ));
    }
    report.check()?;
    Ok(text)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let out = match &cli.command {
        Command::Estimate(a) => estimate_command(a),
        Command::Simulate(a) => simulate_command(a),
    };
    match out {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
