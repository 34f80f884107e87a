//! IRLS fits for the three outcome families.

use nalgebra::DMatrix;
use nonprob::{irls_fit, Design, Family, INTERCEPT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

fn main() -> nonprob::Result<()> {
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
    let design = Design::from_matrix(vec![INTERCEPT.into(), "x".into()], x.clone())?;
    let beta = [0.3, 0.7];
    let w = vec![1.0; n];

    for family in [Family::Gaussian, Family::Binomial, Family::Poisson] {
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let mu = family.mean(beta[0] + beta[1] * x[(i, 1)]);
                match family {
                    Family::Gaussian => mu + rng.sample::<f64, _>(StandardNormal),
                    Family::Binomial => f64::from(u8::from(rng.random::<f64>() < mu)),
                    Family::Poisson => Poisson::new(mu).unwrap().sample(&mut rng),
                }
            })
            .collect();
        let fit = irls_fit(&design, &y, family, &w, None)?;
        println!(
            "{:>8}: beta = ({:.3}, {:.3}), {} iterations, deviance {:.2}",
            family.name(),
            fit.coefficients[0],
            fit.coefficients[1],
            fit.iterations,
            fit.deviance
        );
    }
    Ok(())
}
