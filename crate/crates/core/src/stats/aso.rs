use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;
use crate::seed;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsoConfig {
    pub alpha: f64,
    pub n_bootstrap: usize,
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for AsoConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_bootstrap: 1000,
            grid_points: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsoResult {
    pub eps_min: f64,
    pub eps_w2: f64,
    pub alpha_used: f64,
    pub n_bootstrap: usize,
}

impl AsoResult {
    /// A is declared almost stochastically dominant over B.
    pub fn dominant(&self) -> bool {
        self.eps_min < 0.5
    }
}

/// Empirical quantile: the smallest sample value whose CDF reaches `t`.
fn quantile(sorted: &[f64], t: f64) -> f64 {
    let n = sorted.len();
    let k = ((t * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn violation_ratio(a_sorted: &[f64], b_sorted: &[f64], grid_points: usize) -> f64 {
    let mut violation = 0.0;
    let mut total = 0.0;
    for i in 0..grid_points {
        let t = (i as f64 + 0.5) / grid_points as f64;
        let d = quantile(a_sorted, t) - quantile(b_sorted, t);
        let sq = d * d;
        total += sq;
        if d < 0.0 {
            violation += sq;
        }
    }
    if total == 0.0 {
        0.5
    } else {
        violation / total
    }
}

/// Share of the squared 2-Wasserstein distance between the empirical
/// distributions of `a` and `b` that comes from quantiles where `a` is
/// below `b`. Zero distance gives 0.5.
pub fn eps_w2(a: &[f64], b: &[f64], grid_points: usize) -> f64 {
    violation_ratio(&sorted(a), &sorted(b), grid_points)
}

fn check(v: &[f64]) -> Result<(), StatsError> {
    if v.len() < 2 {
        return Err(StatsError::TooFewScores(v.len()));
    }
    if let Some(&bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(StatsError::Invalid(format!("non-finite score {bad}")));
    }
    Ok(())
}

/// Almost Stochastic Order test of "A is better than B".
///
/// `eps_min` is the one-sided `1 - alpha` upper confidence bound of the
/// violation ratio, using the bootstrap standard deviation and a normal
/// approximation, clamped to `[0, 1]`.
pub fn aso(a: &[f64], b: &[f64], config: &AsoConfig) -> Result<AsoResult, StatsError> {
    check(a)?;
    check(b)?;
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(StatsError::Invalid(format!("alpha {} outside (0, 1)", config.alpha)));
    }
    if config.n_bootstrap < 2 || config.grid_points == 0 {
        return Err(StatsError::Invalid("need at least 2 bootstrap resamples and 1 grid point".into()));
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let eps = violation_ratio(&sa, &sb, config.grid_points);
    let result = |eps_min: f64| AsoResult {
        eps_min,
        eps_w2: eps,
        alpha_used: config.alpha,
        n_bootstrap: config.n_bootstrap,
    };
    if sa == sb {
        return Ok(result(0.5));
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let scale = (n * m / (n + m)).sqrt();
    let deviations: Vec<f64> = (0..config.n_bootstrap)
        .map(|r| {
            let mut rng = seed::rng_for(config.seed, "aso-bootstrap", r as u64);
            let ra: Vec<f64> = (0..a.len()).map(|_| a[rng.random_range(0..a.len())]).collect();
            let rb: Vec<f64> = (0..b.len()).map(|_| b[rng.random_range(0..b.len())]).collect();
            scale * (violation_ratio(&sorted(&ra), &sorted(&rb), config.grid_points) - eps)
        })
        .collect();
    let mean = deviations.iter().sum::<f64>() / deviations.len() as f64;
    let var = deviations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (deviations.len() - 1) as f64;
    let z = Normal::standard().inverse_cdf(1.0 - config.alpha);
    Ok(result((eps + var.sqrt() / scale * z).clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strictly_better_sample_has_no_violation() {
        let a = [0.8, 0.82, 0.85, 0.9];
        let b = [0.5, 0.55, 0.6, 0.61];
        let r = aso(&a, &b, &AsoConfig::default()).unwrap();
        assert_eq!(r.eps_w2, 0.0);
        assert_eq!(r.eps_min, 0.0);
        assert!(r.dominant());
        assert_eq!(eps_w2(&b, &a, 1000), 1.0);
    }

    #[test]
    fn identical_samples_give_one_half() {
        let a = [0.61, 0.64, 0.58];
        let r = aso(&a, &a, &AsoConfig::default()).unwrap();
        assert_eq!((r.eps_w2, r.eps_min), (0.5, 0.5));
        assert!(!r.dominant());
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(matches!(aso(&[0.5], &[0.4, 0.3], &AsoConfig::default()), Err(StatsError::TooFewScores(1))));
        let bad = AsoConfig {
            alpha: 0.0,
            ..AsoConfig::default()
        };
        assert!(aso(&[0.5, 0.6], &[0.4, 0.3], &bad).is_err());
    }

    #[test]
    fn quantile_is_left_continuous_inverse() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.01), 1.0);
        assert_eq!(quantile(&s, 0.25), 1.0);
        assert_eq!(quantile(&s, 0.26), 2.0);
        assert_eq!(quantile(&s, 1.0), 4.0);
    }
}
