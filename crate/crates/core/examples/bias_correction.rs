//! Penalized variable selection followed by the bias-minimizing doubly
//! robust estimator on the union of selected columns.

use nonprob::simulation::{draw_population, draw_samples, CovariateDist, CovariateSpec, SimConfig, WEIGHT_COLUMN};
use nonprob::{estimate, print_text, EstimationSpec, Formula, Inputs, ReferenceInput, Report};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const POPULATION: &str = r#"
seed = 1
replicates = 1
pop-size = 40000
prob-size = 1000
covariates = []
outcomes = [{ name = "y", intercept = 2.0, terms = { x1 = 1.0, x2 = -1.0, x3 = 0.5 } }]
selection = { intercept = -2.5, terms = { x1 = 0.6, x4 = 0.6 } }
estimators = {}
"#;

fn main() -> nonprob::Result<()> {
    let mut cfg = SimConfig::from_toml(POPULATION)?;
    cfg.covariates = (1..=10)
        .map(|j| CovariateSpec { name: format!("x{j}"), dist: CovariateDist::Normal { mean: 0.0, sd: 1.0 } })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pop = draw_population(&cfg, &mut rng)?;
    let (np, survey) = draw_samples(&pop, cfg.prob_size, &mut rng)?;
    let inputs = Inputs {
        np: &np,
        case_weights: None,
        reference: ReferenceInput::Survey { table: &survey, weights: WEIGHT_COLUMN, strata: &[] },
    };

    let rhs = (1..=10).map(|j| format!("x{j}")).collect::<Vec<_>>().join(" + ");
    let mut spec = EstimationSpec {
        selection: Some(Formula::parse(&format!("~ {rhs}"))?),
        outcome: Some(Formula::parse(&format!("y ~ {rhs}"))?),
        ..Default::default()
    };
    spec.inference.vars_selection = true;
    spec.inference.vars_combine = true;
    spec.inference.bias_correction = true;
    spec.selection_control.penalty.nfolds = 5;
    spec.outcome_control.penalty.nfolds = 5;
    let result = estimate(&spec, &inputs)?;

    let sel = result.selection.as_ref().and_then(|s| s.selection.as_ref()).expect("selection ran");
    println!("propensity columns kept: {:?}", sel.active_names());
    let out = result.outcomes[0].selection.as_ref().expect("selection ran");
    println!("outcome columns kept:    {:?}", out.active_names());
    println!("fitted on:               {:?}\n", result.outcomes[0].columns);
    print!("{}", print_text(&Report::new(&result, None)));
    println!("truth: {:.4}", pop.outcome_mean(0));
    Ok(())
}
