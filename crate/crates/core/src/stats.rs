//! Scalar statistics helpers.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Standard normal CDF Φ(z).
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n−1); zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Mean and spread of one quantity measured under several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStat {
    pub mean: f64,
    pub stddev: f64,
    pub per_seed: Vec<f64>,
}

impl SeedStat {
    pub fn from_values(values: Vec<f64>) -> Self {
        SeedStat {
            mean: mean(&values),
            stddev: sample_std(&values),
            per_seed: values,
        }
    }
}
