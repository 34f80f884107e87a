//! Mass imputation with each outcome method, side by side in a comparison
//! table sorted by estimate.

use nonprob::diagnostics::{compare_estimates, sort_by_mean, write_comparison_csv};
use nonprob::simulation::{draw_population, draw_samples, SimConfig, WEIGHT_COLUMN};
use nonprob::{estimate, EstimationSpec, Family, Formula, Inputs, OutcomeMethod, ReferenceInput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const POPULATION: &str = r#"
seed = 1
replicates = 1
pop-size = 30000
prob-size = 800
covariates = [
  { name = "x1", dist = "normal", mean = 0.0, sd = 1.0 },
  { name = "x2", dist = "uniform", low = 0.0, high = 2.0 },
]
outcomes = [{ name = "employed", family = "binomial", intercept = 0.2, terms = { x1 = 0.9, x2 = -0.6 } }]
selection = { intercept = -3.0, terms = { x1 = 0.6, x2 = 0.4 } }
estimators = {}
"#;

fn main() -> nonprob::Result<()> {
    let cfg = SimConfig::from_toml(POPULATION)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pop = draw_population(&cfg, &mut rng)?;
    let (np, survey) = draw_samples(&pop, cfg.prob_size, &mut rng)?;
    let inputs = Inputs {
        np: &np,
        case_weights: None,
        reference: ReferenceInput::Survey { table: &survey, weights: WEIGHT_COLUMN, strata: &[] },
    };

    let mut runs = Vec::new();
    for method in [OutcomeMethod::Glm, OutcomeMethod::Nn, OutcomeMethod::Pmm, OutcomeMethod::Npar] {
        let mut spec = EstimationSpec { outcome: Some(Formula::parse("employed ~ x1 + x2")?), ..Default::default() };
        spec.outcome_control.method = method;
        spec.outcome_control.family = Family::Binomial;
        let result = estimate(&spec, &inputs)?;
        for w in &result.warnings {
            eprintln!("{}: {w}", method.name());
        }
        runs.push((method.name(), result));
    }

    let naive = runs[0].1.results[0].naive;
    let mut rows = compare_estimates(runs.iter().map(|(m, r)| (*m, &r.results[0])), naive);
    sort_by_mean(&mut rows);
    println!("truth {:.4}, naive {:.4}", pop.outcome_mean(0), naive);
    write_comparison_csv(&rows, std::io::stdout())
}
