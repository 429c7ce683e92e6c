use serde::{Deserialize, Serialize};

use crate::error::{MirageError, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

use super::{EmbeddingSet, ModelTag};

/// Isotropic Gaussian mixture with analytically known class means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub n_classes: usize,
    pub dim: usize,
    pub class_mean_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(MirageError::InvalidInput(
                "need at least two classes".into(),
            ));
        }
        if self.dim == 0 {
            return Err(MirageError::InvalidInput(
                "dimension must be at least 1".into(),
            ));
        }
        if !(self.noise_sigma > 0.0) || !self.noise_sigma.is_finite() {
            return Err(MirageError::InvalidInput(
                "noise sigma must be positive".into(),
            ));
        }
        if !self.class_mean_scale.is_finite() {
            return Err(MirageError::InvalidInput(
                "class mean scale must be finite".into(),
            ));
        }
        if self.n_per_class == 0 {
            return Err(MirageError::InvalidInput(
                "need at least one sample per class".into(),
            ));
        }
        Ok(())
    }
}

/// Mean vector of class `c`.
///
/// Classes sit on scaled coordinate axes spread evenly over the dimensions:
/// with `stride = max(1, dim / n_classes)`, class `c` is `scale · e_{c·stride}`.
/// When there are more classes than dimensions the axes are reused with
/// growing multiples, `scale · (⌊c/dim⌋ + 1) · e_{c mod dim}`. Any two classes
/// on distinct axes are therefore `scale·√2` apart.
pub fn class_mean(spec: &SyntheticSpec, c: usize) -> Vec<f64> {
    let stride = (spec.dim / spec.n_classes).max(1);
    let mut m = vec![0.0; spec.dim];
    if c * stride < spec.dim {
        m[c * stride] = spec.class_mean_scale;
    } else {
        m[c % spec.dim] = spec.class_mean_scale * ((c / spec.dim) + 1) as f64;
    }
    m
}

/// Draws `n_per_class` samples `m_c + σ·N(0, I)` per class, class-major.
pub fn generate_gaussian_mixture(spec: &SyntheticSpec) -> Result<EmbeddingSet> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let n = spec.n_per_class * spec.n_classes;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.n_classes {
        let mean = class_mean(spec, c);
        for _ in 0..spec.n_per_class {
            data.extend(mean.iter().map(|m| m + spec.noise_sigma * rng.normal()));
            labels.push(c as u32);
        }
    }
    let features = Matrix::new(n, spec.dim, data)?;
    let mut set = EmbeddingSet::new(features, labels, "input", ModelTag::Other)?;
    set.source_meta
        .insert("generator".into(), "gaussian_mixture".into());
    set.source_meta.insert("seed".into(), spec.seed.to_string());
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, sigma: f64) -> SyntheticSpec {
        SyntheticSpec {
            n_per_class: n,
            n_classes: 3,
            dim: 6,
            class_mean_scale: 2.0,
            noise_sigma: sigma,
            seed: 17,
        }
    }

    #[test]
    fn means_are_on_spread_axes() {
        let s = spec(1, 1.0);
        assert_eq!(class_mean(&s, 0), vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(class_mean(&s, 1), vec![0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        assert_eq!(class_mean(&s, 2), vec![0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let tiny = SyntheticSpec {
            dim: 1,
            n_classes: 2,
            ..s
        };
        assert_ne!(class_mean(&tiny, 0), class_mean(&tiny, 1));
    }

    #[test]
    fn degenerate_noise_hits_the_means() {
        let s = spec(20, 1e-9);
        let set = generate_gaussian_mixture(&s).unwrap();
        for i in 0..set.len() {
            let m = class_mean(&s, set.labels[i] as usize);
            for (x, mu) in set.features.row(i).iter().zip(&m) {
                assert!((x - mu).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn empirical_moments() {
        let s = spec(10_000, 0.7);
        let set = generate_gaussian_mixture(&s).unwrap();
        for c in 0..3u32 {
            let rows: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == c).collect();
            let part = set.features.select_rows(&rows);
            let means = part.column_means();
            let target = class_mean(&s, c as usize);
            let gap: f64 = means
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = target.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(
                gap / norm < 0.05,
                "class {c}: relative mean error {}",
                gap / norm
            );
            for v in part.column_variances() {
                assert!((v / (0.7 * 0.7) - 1.0).abs() < 0.05, "variance {v}");
            }
        }
    }

    #[test]
    fn seeded_and_validated() {
        let a = generate_gaussian_mixture(&spec(50, 1.0)).unwrap();
        let b = generate_gaussian_mixture(&spec(50, 1.0)).unwrap();
        assert_eq!(a, b);
        assert!(generate_gaussian_mixture(&SyntheticSpec {
            n_classes: 1,
            ..spec(5, 1.0)
        })
        .is_err());
        assert!(generate_gaussian_mixture(&spec(5, 0.0)).is_err());
    }
}
