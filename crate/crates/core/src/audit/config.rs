use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MirageError, Result};
use crate::geometry::DEFAULT_CKA_SAMPLE_CAP;
use crate::probe::ProbeConfig;

/// Diagnostic names understood by certification.
pub const DIAG_LPR: &str = "lpr";
pub const DIAG_LAYERWISE_LPR: &str = "layerwise_lpr";
pub const DIAG_CKA: &str = "cka";
pub const DIAG_SEPARABILITY: &str = "separability";
pub const DIAG_SNR_BOUND: &str = "snr_bound";

pub const DEFAULT_PRIMARY_LAYER: &str = "penultimate";

/// Allowed `|D(unlearned) − D(retrained)|` for one diagnostic.
///
/// In TOML an absolute tolerance is a bare number and a relative one is
/// written `{ relative = 0.5 }`, meaning a multiple of the retrained value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tolerance {
    Absolute(f64),
    Relative { relative: f64 },
}

impl Tolerance {
    pub fn threshold(&self, retrained: f64) -> f64 {
        match *self {
            Tolerance::Absolute(e) => e,
            Tolerance::Relative { relative } => relative * retrained.abs(),
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Tolerance::Absolute(e) => e,
            Tolerance::Relative { relative } => relative,
        }
    }
}

pub fn default_epsilon() -> BTreeMap<String, Tolerance> {
    BTreeMap::from([
        (DIAG_LPR.to_string(), Tolerance::Absolute(0.03)),
        (DIAG_LAYERWISE_LPR.to_string(), Tolerance::Absolute(0.03)),
        (DIAG_CKA.to_string(), Tolerance::Absolute(0.02)),
        (
            DIAG_SEPARABILITY.to_string(),
            Tolerance::Relative { relative: 0.5 },
        ),
        (DIAG_SNR_BOUND.to_string(), Tolerance::Absolute(0.03)),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub probe: ProbeConfig,
    pub cka_sample_cap: usize,
    pub epsilon: BTreeMap<String, Tolerance>,
    /// Probe seeds; LPR is averaged over them.
    pub seeds: Vec<u64>,
    /// Layers to audit; empty means every layer present in the triple.
    pub layers: Vec<String>,
    pub primary_layer: String,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            probe: ProbeConfig::default(),
            cka_sample_cap: DEFAULT_CKA_SAMPLE_CAP,
            epsilon: default_epsilon(),
            seeds: (0..5).collect(),
            layers: Vec::new(),
            primary_layer: DEFAULT_PRIMARY_LAYER.to_string(),
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        self.probe.validate()?;
        if self.seeds.is_empty() {
            return Err(MirageError::Config("audit needs at least one seed".into()));
        }
        if self.cka_sample_cap < 2 {
            return Err(MirageError::Config(
                "cka_sample_cap must be at least 2".into(),
            ));
        }
        for (name, tol) in &self.epsilon {
            let v = tol.value();
            if !(v >= 0.0) || !v.is_finite() {
                return Err(MirageError::Config(format!(
                    "epsilon for {name} must be a finite value ≥ 0"
                )));
            }
        }
        Ok(())
    }

    /// Parses a TOML document. Missing keys take defaults; the epsilon table
    /// is merged over the default tolerances.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: AuditConfig =
            toml::from_str(text).map_err(|e| MirageError::Config(e.to_string()))?;
        cfg.with_default_epsilon()
    }

    /// Fills tolerances missing from `epsilon` with the defaults, then
    /// validates.
    pub fn with_default_epsilon(mut self) -> Result<Self> {
        let mut eps = default_epsilon();
        eps.append(&mut self.epsilon);
        self.epsilon = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MirageError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            MirageError::Config(msg) => MirageError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(
            AuditConfig::from_toml_str("").unwrap(),
            AuditConfig::default()
        );
    }

    #[test]
    fn overrides_merge() {
        let cfg = AuditConfig::from_toml_str(
            "seeds = [7, 8]\nlayers = [\"mid\"]\n[probe]\nreg_c = 0.5\n[epsilon]\nlpr = 0.1\nseparability = { relative = 0.25 }\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![7, 8]);
        assert_eq!(cfg.probe.reg_c, 0.5);
        assert_eq!(cfg.epsilon["lpr"], Tolerance::Absolute(0.1));
        assert_eq!(
            cfg.epsilon["separability"],
            Tolerance::Relative { relative: 0.25 }
        );
        assert_eq!(cfg.epsilon["cka"], Tolerance::Absolute(0.02));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(AuditConfig::from_toml_str("seeds = []").is_err());
        assert!(AuditConfig::from_toml_str("[epsilon]\nlpr = -0.1").is_err());
        assert!(AuditConfig::from_toml_str("unknown_key = 1").is_err());
        assert!(AuditConfig::from_toml_str("[probe]\neval_fraction = 1.5").is_err());
    }

    #[test]
    fn relative_threshold() {
        assert_eq!(Tolerance::Relative { relative: 0.5 }.threshold(-0.4), 0.2);
        assert_eq!(Tolerance::Absolute(0.03).threshold(10.0), 0.03);
    }
}
