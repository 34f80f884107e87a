//! Analytic against bootstrap standard errors on a stratified survey.

use nonprob::data::DataTable;
use nonprob::simulation::{draw_population, draw_samples, SimConfig, WEIGHT_COLUMN};
use nonprob::variance::VarMethod;
use nonprob::{estimate, EstimationSpec, Formula, Inputs, ReferenceInput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const POPULATION: &str = r#"
seed = 1
replicates = 1
pop-size = 40000
prob-size = 900
covariates = [{ name = "x", dist = "normal", mean = 0.0, sd = 1.0 }]
outcomes = [{ name = "y", intercept = 0.5, terms = { x = 1.0 } }]
selection = { intercept = -3.0, terms = { x = 0.7 } }
estimators = {}
"#;

fn with_strata(t: &DataTable) -> nonprob::Result<DataTable> {
    let x = t.numeric_column("x")?;
    let w = t.numeric_column(WEIGHT_COLUMN)?;
    let s: Vec<&str> = x
        .iter()
        .map(|v| {
            if *v < -0.5 {
                "low"
            } else if *v < 0.5 {
                "mid"
            } else {
                "high"
            }
        })
        .collect();
    DataTable::from_columns(vec![
        ("x", x.iter().map(|v| v.to_string()).collect::<Vec<_>>()),
        (WEIGHT_COLUMN, w.iter().map(|v| v.to_string()).collect()),
        ("stratum", s.iter().map(|v| v.to_string()).collect()),
    ])
}

fn main() -> nonprob::Result<()> {
    let cfg = SimConfig::from_toml(POPULATION)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pop = draw_population(&cfg, &mut rng)?;
    let (np, survey) = draw_samples(&pop, cfg.prob_size, &mut rng)?;
    let survey = with_strata(&survey)?;
    let strata = vec!["stratum".to_string()];
    let inputs = Inputs {
        np: &np,
        case_weights: None,
        reference: ReferenceInput::Survey { table: &survey, weights: WEIGHT_COLUMN, strata: &strata },
    };

    for (name, sel, out) in
        [("ipw", Some("~ x"), None), ("mi", None, Some("y ~ x")), ("dr", Some("~ x"), Some("y ~ x"))]
    {
        let mut spec = EstimationSpec {
            selection: sel.map(Formula::parse).transpose()?,
            outcome: out.map(Formula::parse).transpose()?,
            target: if out.is_none() { vec!["y".into()] } else { Vec::new() },
            ..Default::default()
        };
        let analytic = estimate(&spec, &inputs)?;
        spec.inference.var_method = VarMethod::Bootstrap;
        spec.inference.num_boot = 200;
        spec.inference.seed = 2024;
        let boot = estimate(&spec, &inputs)?;
        let (a, b) = (analytic.results[0].se.unwrap(), boot.results[0].se.unwrap());
        println!(
            "{name}: mean {:.4}; se analytic {a:.4}, bootstrap {b:.4} (ratio {:.3})",
            analytic.results[0].mean,
            a / b
        );
    }
    Ok(())
}
