//! Doubly robust estimation with the full summary, including outcome
//! residuals and predictions on both samples.

use nonprob::simulation::{draw_population, draw_samples, SimConfig, WEIGHT_COLUMN};
use nonprob::{estimate, summary_text, EstimationSpec, Formula, Inputs, ReferenceInput, Report};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const POPULATION: &str = r#"
seed = 1
replicates = 1
pop-size = 50000
prob-size = 1000
covariates = [
  { name = "x1", dist = "normal", mean = 0.0, sd = 1.0 },
  { name = "x2", dist = "normal", mean = 0.0, sd = 1.0 },
]
outcomes = [{ name = "y", intercept = 1.0, terms = { x1 = 1.0, x2 = 1.0, "x1^2" = 0.5 } }]
selection = { intercept = -3.0, terms = { x1 = 0.5, x2 = 0.5 } }
estimators = {}
"#;

fn main() -> nonprob::Result<()> {
    let cfg = SimConfig::from_toml(POPULATION)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pop = draw_population(&cfg, &mut rng)?;
    let (np, survey) = draw_samples(&pop, cfg.prob_size, &mut rng)?;
    let inputs = Inputs {
        np: &np,
        case_weights: None,
        reference: ReferenceInput::Survey { table: &survey, weights: WEIGHT_COLUMN, strata: &[] },
    };

    // the outcome model misses the quadratic term; the propensity model is right
    let spec = EstimationSpec {
        selection: Some(Formula::parse("~ x1 + x2")?),
        outcome: Some(Formula::parse("y ~ x1 + x2")?),
        ..Default::default()
    };
    let result = estimate(&spec, &inputs)?;
    print!("{}", summary_text(&Report::new(&result, Some("selection = ~ x1 + x2, outcome = y ~ x1 + x2".into()))));
    let e = &result.results[0];
    let (correction, projection) = e.dr_terms.expect("doubly robust terms");
    println!(
        "truth {:.4}; projection {projection:.4} + correction {correction:.4} = {:.4}",
        pop.outcome_mean(0),
        e.mean
    );
    Ok(())
}
