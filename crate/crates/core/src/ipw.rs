//! Inverse probability weighting estimators of the mean.

use serde::{Deserialize, Serialize};

use crate::data::NonProbSample;
use crate::error::{Error, Result};
use crate::propensity::PsFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IpwForm {
    /// divides by a known population size
    #[serde(rename = "HT")]
    Ht,
    /// divides by the sum of inverse propensities
    #[serde(rename = "Hajek")]
    Hajek,
}

#[derive(Debug, Clone, Serialize)]
pub struct IpwEstimate {
    pub target: String,
    pub mu: f64,
    pub form: IpwForm,
    pub naive: f64,
    pub n_hat: f64,
    pub pop_size: Option<f64>,
}

/// Case-weighted sample mean of the outcome.
pub fn naive_mean(np: &NonProbSample, target: &str) -> Result<f64> {
    let y = np.outcome(target)?;
    let w = np.case_weights();
    let sw: f64 = w.iter().sum();
    Ok(y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw)
}

/// Horvitz-Thompson form when `pop_size` is given, Hájek form otherwise.
pub fn ipw_estimate(np: &NonProbSample, ps: &PsFit, target: &str, pop_size: Option<f64>) -> Result<IpwEstimate> {
    let y = np.outcome(target)?;
    if ps.ipw_weights.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "propensity fit has {} scores for {} sample rows",
            ps.ipw_weights.len(),
            y.len()
        )));
    }
    let total: f64 = y.iter().zip(&ps.ipw_weights).zip(np.case_weights()).map(|((y, d), w)| y * d * w).sum();
    let (mu, form) = match pop_size {
        Some(n) if n > 0.0 && n.is_finite() => (total / n, IpwForm::Ht),
        Some(n) => return Err(Error::InvalidArgument(format!("population size must be positive, got {n}"))),
        None => (total / ps.n_hat, IpwForm::Hajek),
    };
    Ok(IpwEstimate { target: target.to_string(), mu, form, naive: naive_mean(np, target)?, n_hat: ps.n_hat, pop_size })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Design, INTERCEPT};
    use crate::propensity::{EstMethod, PsLink};
    use nalgebra::DMatrix;

    fn fixed_fit(scores: Vec<f64>) -> PsFit {
        let ipw: Vec<f64> = scores.iter().map(|p| 1.0 / p).collect();
        PsFit {
            columns: vec![INTERCEPT.into()],
            gamma: vec![0.0],
            link: PsLink::Logit,
            method: EstMethod::Mle,
            h: None,
            clip: 1e-6,
            n_hat: ipw.iter().sum(),
            scores_np: scores,
            scores_p: None,
            ipw_weights: ipw,
            converged: true,
            iterations: 0,
            residual: vec![],
        }
    }

    fn sample(y: Vec<f64>) -> NonProbSample {
        let n = y.len();
        let d = Design::from_matrix(vec![INTERCEPT.into()], DMatrix::from_element(n, 1, 1.0)).unwrap();
        NonProbSample::new(d, vec![("y".into(), y)], None).unwrap()
    }

    #[test]
    fn constant_scores() {
        let np = sample(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let fit = fixed_fit(vec![0.5; 5]);
        assert_eq!(ipw_estimate(&np, &fit, "y", Some(10.0)).unwrap().mu, 3.0);
        assert_eq!(ipw_estimate(&np, &fit, "y", None).unwrap().mu, 3.0);
        assert!(ipw_estimate(&np, &fit, "y", Some(0.0)).is_err());
    }

    #[test]
    fn hajek_of_constant_and_bounds() {
        let np = sample(vec![2.5; 4]);
        let fit = fixed_fit(vec![0.1, 0.7, 0.3, 0.9]);
        assert!((ipw_estimate(&np, &fit, "y", None).unwrap().mu - 2.5).abs() < 1e-14);
        let np = sample(vec![-1.0, 4.0, 0.5, 2.0]);
        let m = ipw_estimate(&np, &fit, "y", None).unwrap().mu;
        assert!((-1.0..=4.0).contains(&m));
        let scaled = sample(vec![-3.0, 12.0, 1.5, 6.0]);
        let m3 = ipw_estimate(&scaled, &fit, "y", Some(20.0)).unwrap().mu;
        let m1 = ipw_estimate(&np, &fit, "y", Some(20.0)).unwrap().mu;
        assert!((m3 - 3.0 * m1).abs() < 1e-12);
    }
}
