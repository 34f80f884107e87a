//! Calibrated IPW using only population totals, then the balance check that
//! shows the weighted sample reproduces those totals.

use nonprob::data::{read_benchmark, BenchmarkKind};
use nonprob::propensity::{EstMethod, HVariant};
use nonprob::simulation::{draw_population, draw_samples, SimConfig};
use nonprob::{estimate, EstimationSpec, Formula, Inputs, ReferenceInput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const POPULATION: &str = r#"
seed = 1
replicates = 1
pop-size = 40000
prob-size = 10
covariates = [
  { name = "age", dist = "uniform", low = 18.0, high = 80.0 },
  { name = "urban", dist = "bernoulli", p = 0.6 },
]
outcomes = [{ name = "spend", intercept = 20.0, terms = { age = 0.3, urban = 5.0 }, sd = 4.0 }]
selection = { intercept = -1.0, terms = { age = -0.04, urban = 0.8 } }
estimators = {}
"#;

fn main() -> nonprob::Result<()> {
    let cfg = SimConfig::from_toml(POPULATION)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pop = draw_population(&cfg, &mut rng)?;
    let (np, _) = draw_samples(&pop, cfg.prob_size, &mut rng)?;

    // totals as they would arrive from a register, one `name,value` per line
    let csv = format!(
        "name,value\nage,{}\nurban,{}\n",
        pop.covariates[0].iter().sum::<f64>(),
        pop.covariates[1].iter().sum::<f64>()
    );
    let bench = read_benchmark(csv.as_bytes(), BenchmarkKind::Totals, Some(cfg.pop_size as f64))?;

    let mut spec = EstimationSpec {
        selection: Some(Formula::parse("~ age + urban")?),
        target: vec!["spend".into()],
        ..Default::default()
    };
    spec.selection_control.est_method = EstMethod::Gee;
    spec.selection_control.gee_h = HVariant::XOverPi;
    let inputs = Inputs { np: &np, case_weights: None, reference: ReferenceInput::Population(&bench) };
    let result = estimate(&spec, &inputs)?;
    let e = &result.results[0];
    println!("mean {:.4} (se {:.4}), truth {:.4}", e.mean, e.se.unwrap_or(f64::NAN), pop.outcome_mean(0));

    let balance = &result.selection.as_ref().expect("IPW keeps its selection model").balance;
    for (c, d) in balance.columns.iter().zip(balance.rounded(6)) {
        println!("balance {c:>12}: {d}");
    }
    Ok(())
}
