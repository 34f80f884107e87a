//! SCAD, lasso and MCP with cross-validated lambda on a sparse outcome
//! model, fitted directly on design matrices.

use nalgebra::DMatrix;
use nonprob::varsel::{select_outcome, Penalty, PenaltyConfig};
use nonprob::{Family, INTERCEPT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> nonprob::Result<()> {
    let (n, p) = (500, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = DMatrix::from_fn(n, p + 1, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + 2.0 * x[(i, 1)] - 1.5 * x[(i, 2)] + x[(i, 3)] + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut columns = vec![INTERCEPT.to_string()];
    columns.extend((1..=p).map(|j| format!("x{j}")));
    let w = vec![1.0; n];

    for penalty in [Penalty::Scad, Penalty::Lasso, Penalty::Mcp] {
        let cfg = PenaltyConfig { penalty, nfolds: 5, seed: 1, ..Default::default() };
        let sel = select_outcome(&columns, &x, &y, &w, Family::Gaussian, &cfg)?;
        println!("{:>5}: lambda {:.4}, kept {:?}", penalty.name(), sel.lambda, sel.active_names());
    }
    Ok(())
}
