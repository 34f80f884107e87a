//! Inverse probability weighting against a reference survey, with each
//! propensity link and both estimation methods.

use nonprob::propensity::{EstMethod, HVariant, PsLink};
use nonprob::report::print_text;
use nonprob::simulation::{draw_population, draw_samples, SimConfig, WEIGHT_COLUMN};
use nonprob::{estimate, EstimationSpec, Formula, Inputs, ReferenceInput, Report};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const POPULATION: &str = r#"
seed = 1
replicates = 1
pop-size = 50000
prob-size = 1000
covariates = [
  { name = "x1", dist = "normal", mean = 0.0, sd = 1.0 },
  { name = "x2", dist = "bernoulli", p = 0.4 },
]
outcomes = [{ name = "y", intercept = 1.0, terms = { x1 = 1.0, x2 = 0.5 } }]
selection = { intercept = -2.5, terms = { x1 = 0.7, x2 = -0.5 } }
estimators = {}
"#;

fn main() -> nonprob::Result<()> {
    let cfg = SimConfig::from_toml(POPULATION)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pop = draw_population(&cfg, &mut rng)?;
    let (np, survey) = draw_samples(&pop, cfg.prob_size, &mut rng)?;
    println!("population mean of y: {:.4}\n", pop.outcome_mean(0));

    let inputs = Inputs {
        np: &np,
        case_weights: None,
        reference: ReferenceInput::Survey { table: &survey, weights: WEIGHT_COLUMN, strata: &[] },
    };
    for link in [PsLink::Logit, PsLink::Probit, PsLink::Cloglog] {
        for method in [EstMethod::Mle, EstMethod::Gee] {
            let mut spec = EstimationSpec {
                selection: Some(Formula::parse("~ x1 + x2")?),
                target: vec!["y".into()],
                ..Default::default()
            };
            spec.selection_control.link = link;
            spec.selection_control.est_method = method;
            spec.selection_control.gee_h = HVariant::XOverPi;
            let result = estimate(&spec, &inputs)?;
            print!("{}", print_text(&Report::new(&result, None)));
            println!();
        }
    }
    Ok(())
}
