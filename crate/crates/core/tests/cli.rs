use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nonprob::simulation::{draw_population, draw_samples, SimConfig};
use nonprob::DataTable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const POPULATION: &str = r#"
seed = 1
replicates = 1
pop-size = 20000
prob-size = 500
covariates = [
  { name = "x1", dist = "normal", mean = 0.0, sd = 1.0 },
  { name = "x2", dist = "bernoulli", p = 0.5 },
]
outcomes = [
  { name = "y", intercept = 1.0, terms = { x1 = 1.0, x2 = 1.0 } },
  { name = "z", family = "binomial", intercept = -0.5, terms = { x1 = 1.0 } },
]
selection = { intercept = -2.5, terms = { x1 = 0.8 } }
estimators = {}
"#;

fn write_csv(path: &Path, t: &DataTable, extra: Option<(&str, Vec<String>)>) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header: Vec<String> = t.headers().to_vec();
    if let Some((name, _)) = &extra {
        header.push(name.to_string());
    }
    w.write_record(&header).unwrap();
    let cols: Vec<Vec<&str>> = t.headers().iter().map(|h| t.column(h).unwrap()).collect();
    for i in 0..t.n_rows() {
        let mut row: Vec<String> = cols.iter().map(|c| c[i].to_string()).collect();
        if let Some((_, v)) = &extra {
            row.push(v[i].clone());
        }
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = TempDir::new().unwrap();
        let cfg = SimConfig::from_toml(POPULATION).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pop = draw_population(&cfg, &mut rng).unwrap();
        let (np, sv) = draw_samples(&pop, cfg.prob_size, &mut rng).unwrap();
        // a copy of x1 makes the design rank deficient
        let dup = np.column("x1").unwrap().iter().map(|s| s.to_string()).collect();
        write_csv(&dir.path().join("np.csv"), &np, Some(("x1_copy", dup)));
        let strata = sv.column("x2").unwrap().iter().map(|s| format!("s{s}")).collect();
        write_csv(&dir.path().join("sv.csv"), &sv, Some(("stratum", strata)));
        let x1: f64 = pop.covariates[0].iter().sum();
        let x2: f64 = pop.covariates[1].iter().sum();
        std::fs::write(dir.path().join("totals.csv"), format!("name,value\nx1,{x1}\nx2,{x2}\nx1_copy,{x1}\n")).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_nonprob")).args(args).current_dir(self.dir.path()).output().unwrap()
    }

    fn estimate(&self, extra: &[&str]) -> Output {
        let mut args = vec!["estimate", "--nonprob", "np.csv"];
        args.extend_from_slice(extra);
        self.run(&args)
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SURVEY: [&str; 4] = ["--survey", "sv.csv", "--weights", "design_weight"];

#[test]
fn estimator_type_follows_the_formulas() {
    let f = Fixture::new();
    for (args, label) in [
        (vec!["--selection", "~ x1 + x2", "--target", "y"], "inverse probability weighting"),
        (vec!["--outcome", "y ~ x1 + x2"], "mass imputation"),
        (vec!["--selection", "~ x1 + x2", "--outcome", "y ~ x1 + x2"], "doubly robust"),
    ] {
        let mut all = SURVEY.to_vec();
        all.extend(args);
        let o = f.estimate(&all);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains(&format!(" - estimator type: {label}")), "{}", stdout(&o));
    }
}

#[test]
fn invalid_combinations_exit_2() {
    let f = Fixture::new();
    let o = f.estimate(&[
        "--pop-totals",
        "totals.csv",
        "--pop-size",
        "20000",
        "--selection",
        "~ x1 + x2",
        "--target",
        "y",
        "--report",
        "fail.json",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let payload: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("fail.json")).unwrap()).unwrap();
    assert_eq!(payload["exit_code"], 2);
    assert!(payload["message"].as_str().unwrap().contains("maximum likelihood"));

    let mut args = SURVEY.to_vec();
    args.extend(["--selection", "~ x1"]);
    assert_eq!(f.estimate(&args).status.code(), Some(2), "missing target");
    let mut args = SURVEY.to_vec();
    args.extend(["--selection", "~ nope", "--target", "y"]);
    assert_eq!(f.estimate(&args).status.code(), Some(2), "unknown column");
    let mut args = SURVEY.to_vec();
    args.extend(["--selection", "~ x1", "--target", "y", "--method-selection", "cauchit"]);
    assert_eq!(f.estimate(&args).status.code(), Some(2), "bad flag value");
}

#[test]
fn estimation_failure_exits_3() {
    let f = Fixture::new();
    let mut args = SURVEY.to_vec();
    args.extend(["--outcome", "y ~ x1 + x1_copy"]);
    let o = f.estimate(&args);
    assert_eq!(o.status.code(), Some(2), "column missing from the survey is a schema error");

    let o = f.estimate(&[
        "--pop-totals",
        "totals.csv",
        "--pop-size",
        "20000",
        "--outcome",
        "y ~ x1 + x1_copy",
        "--report",
        "f.json",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let payload: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f.path("f.json")).unwrap()).unwrap();
    assert_eq!(payload["exit_code"], 3);
}

#[test]
fn population_totals_with_gee() {
    let f = Fixture::new();
    let o = f.estimate(&[
        "--pop-totals",
        "totals.csv",
        "--pop-size",
        "20000",
        "--selection",
        "~ x1 + x2",
        "--target",
        "y",
        "--est-method",
        "gee",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("auxiliary variables source: population"));
    assert!(out.contains("population size fixed: true"));
}

#[test]
fn reports_summary_and_comparison_files() {
    let f = Fixture::new();
    let mut args = SURVEY.to_vec();
    args.extend([
        "--strata",
        "stratum",
        "--selection",
        "~ x1 + x2",
        "--target",
        "~ y + z",
        "--report",
        "r.json",
        "--summary",
        "s.txt",
        "--comparison",
        "c.csv",
    ]);
    let o = f.estimate(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f.path("r.json")).unwrap()).unwrap();
    assert_eq!(report["main"]["estimates"].as_array().unwrap().len(), 2);
    let summary = std::fs::read_to_string(f.path("s.txt")).unwrap();
    assert!(summary.contains("sum of IPW weights"));
    let csv = std::fs::read_to_string(f.path("c.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("estimator,target,mean,se,lower,upper,delta"));
}

#[test]
fn bootstrap_reports_are_byte_identical() {
    let f = Fixture::new();
    for name in ["a.json", "b.json"] {
        let mut args = SURVEY.to_vec();
        args.extend([
            "--selection",
            "~ x1 + x2",
            "--outcome",
            "y ~ x1 + x2",
            "--var-method",
            "bootstrap",
            "--num-boot",
            "30",
            "--seed",
            "99",
            "--report",
            name,
        ]);
        assert_eq!(f.estimate(&args).status.code(), Some(0));
    }
    assert_eq!(std::fs::read(f.path("a.json")).unwrap(), std::fs::read(f.path("b.json")).unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let f = Fixture::new();
    std::fs::write(
        f.path("run.toml"),
        r#"
[data]
nonprob = "np.csv"
survey = "sv.csv"
weights = "design_weight"

[model]
selection = "~ x1 + x2"
target = "y"
est-method = "mle"
no-such-key = 1
"#,
    )
    .unwrap();
    assert_eq!(f.run(&["estimate", "--config", "run.toml"]).status.code(), Some(2), "unknown keys are rejected");

    let text = std::fs::read_to_string(f.path("run.toml")).unwrap().replace("no-such-key = 1\n", "");
    std::fs::write(f.path("run.toml"), text).unwrap();
    let o = f.run(&["estimate", "--config", "run.toml"]);
    assert!(stdout(&o).contains("method: logit (mle)"));
    let o = f.run(&["estimate", "--config", "run.toml", "--est-method", "gee", "--no-se"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("method: logit (gee)"));
    assert!(!out.contains("se="));
}

#[test]
fn subset_filters_the_sample() {
    let f = Fixture::new();
    let mut args = SURVEY.to_vec();
    args.extend(["--outcome", "y ~ x1", "--subset", "x2=1", "--summary", "s.txt"]);
    assert_eq!(f.estimate(&args).status.code(), Some(0));
    let summary = std::fs::read_to_string(f.path("s.txt")).unwrap();
    let full = f.estimate(&[&SURVEY[..], &["--outcome", "y ~ x1", "--summary", "t.txt"]].concat());
    assert_eq!(full.status.code(), Some(0));
    let all = std::fs::read_to_string(f.path("t.txt")).unwrap();
    let size = |s: &str| -> usize {
        let line = s.lines().find(|l| l.contains("nonprob sample size")).unwrap();
        line.split(':').nth(1).unwrap().trim().split(' ').next().unwrap().parse().unwrap()
    };
    assert!(size(&summary) < size(&all));
}

#[test]
fn simulate_command() {
    let f = Fixture::new();
    let sim = POPULATION
        .replace("replicates = 1", "replicates = 4")
        .replace("estimators = {}", "[estimators.mi]\noutcome = \"y ~ x1 + x2\"\n");
    std::fs::write(f.path("sim.toml"), &sim).unwrap();
    let o = f.run(&["simulate", "--config", "sim.toml", "--report", "sim.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(f.path("sim.json")).unwrap();
    f.run(&["simulate", "--config", "sim.toml", "--report", "sim.json"]);
    assert_eq!(first, std::fs::read(f.path("sim.json")).unwrap());

    let broken = sim.replace("y ~ x1 + x2", "y ~ x1 + nope");
    std::fs::write(f.path("broken.toml"), broken).unwrap();
    let o = f.run(&["simulate", "--config", "broken.toml", "--report", "broken.json"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(f.path("broken.json").exists());
}
