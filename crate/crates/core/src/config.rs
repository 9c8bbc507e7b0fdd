use serde::{Deserialize, Serialize};

use crate::dist::{ClaimDistribution, ClaimLaw};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Residual and exclusion radius around `s = 1`.
    pub root: f64,
    /// Approximate roots closer than this are one multiple root.
    pub cluster: f64,
    /// Slack on `|s| <= 1` when deciding whether a root is inside the disk.
    pub boundary: f64,
    /// Largest imaginary part dropped from a solution, and slack on `[0, 1]`.
    pub real: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root: 1e-10,
            cluster: 1e-6,
            boundary: 1e-8,
            real: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub paths: u64,
    pub horizon: u64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            horizon: 5_000,
            seed: 1,
        }
    }
}

/// Everything a run needs: the model, table sizes, tolerances and simulation controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kappa: u32,
    pub dist: ClaimLaw,
    #[serde(default = "default_u_max")]
    pub u_max: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub mc: McConfig,
}

fn default_u_max() -> usize {
    50
}

fn default_t_max() -> usize {
    100
}

impl ModelConfig {
    pub fn new(kappa: u32, dist: ClaimLaw) -> Self {
        Self {
            kappa,
            dist,
            u_max: default_u_max(),
            t_max: default_t_max(),
            tolerances: Tolerances::default(),
            mc: McConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa == 0 {
            return Err(Error::Config("kappa must be a positive integer".into()));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("root", t.root),
            ("cluster", t.cluster),
            ("boundary", t.boundary),
            ("real", t.real),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerance `{name}` must be positive")));
            }
        }
        if self.mc.paths == 0 {
            return Err(Error::Config("mc.paths must be at least 1".into()));
        }
        if self.mc.horizon == 0 {
            return Err(Error::Config("mc.horizon must be at least 1".into()));
        }
        Ok(())
    }

    pub fn distribution(&self) -> Result<ClaimDistribution> {
        ClaimDistribution::new(self.dist.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = ModelConfig::from_json(r#"{"kappa": 3, "dist": {"kind": "geometric", "p": 0.336}}"#).unwrap();
        assert_eq!(cfg.kappa, 3);
        assert_eq!(cfg.dist, ClaimLaw::Geometric { p: 0.336 });
        assert_eq!(cfg.tolerances, Tolerances::default());
        assert_eq!(cfg.u_max, 50);
    }

    #[test]
    fn parses_full_config() {
        let text = r#"{
            "kappa": 3,
            "dist": {"kind": "finite", "pmf": [0.128, 0.576, 0.264, 0.032]},
            "u_max": 20, "t_max": 7,
            "tolerances": {"cluster": 1e-5},
            "mc": {"paths": 1000, "seed": 9}
        }"#;
        let cfg = ModelConfig::from_json(text).unwrap();
        assert_eq!(cfg.tolerances.cluster, 1e-5);
        assert_eq!(cfg.tolerances.root, 1e-10);
        assert_eq!(cfg.mc.paths, 1000);
        assert_eq!(cfg.mc.horizon, 5000);
        assert_eq!(cfg.t_max, 7);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ModelConfig::from_json(r#"{"kappa": 0, "dist": {"kind": "geometric", "p": 0.5}}"#).is_err());
        assert!(ModelConfig::from_json(r#"{"kappa": 2, "dist": {"kind": "poisson", "p": 0.5}}"#).is_err());
        assert!(ModelConfig::from_json(r#"{"kappa": 2, "dist": {"kind": "geometric", "p": 0.5}, "bogus": 1}"#).is_err());
        assert!(ModelConfig::from_json(
            r#"{"kappa": 2, "dist": {"kind": "geometric", "p": 0.5}, "tolerances": {"root": -1}}"#
        )
        .is_err());
        assert!(ModelConfig::from_json(r#"{"kappa": 2, "dist": {"kind": "geometric", "p": 0.5}, "mc": {"paths": 0}}"#).is_err());
    }
}
