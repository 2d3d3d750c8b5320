use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::determinant::{validate_mlist, Route};
use crate::error::{Error, Result};
use crate::hamiltonians::{build_family, FamilySpec, LevelCurve};
use crate::linalg::Tolerances;
use crate::transport::{Method, DEFAULT_WILSON_POINTS};

pub const DEMO_CONFIG: &str = include_str!("../../configs/demo.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Checks {
    /// Largest pairwise circular distance between γ values.
    pub method_agreement: f64,
    /// Bound on Δ± at the largest m.
    pub final_gap: f64,
    /// Relative growth of Δ± tolerated between consecutive m.
    pub monotone_slack: f64,
    pub monotone_floor: f64,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            method_agreement: 1e-4,
            final_gap: 1e-2,
            monotone_slack: 0.1,
            monotone_floor: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

fn default_mlist() -> Vec<f64> {
    vec![4.0, 8.0, 16.0, 32.0]
}

fn default_slist() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_gamma_method() -> Method {
    Method::Holonomy
}

fn default_wilson_points() -> usize {
    DEFAULT_WILSON_POINTS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilySpec,
    #[serde(default)]
    pub level: LevelCurve,
    #[serde(default = "default_mlist")]
    pub m: Vec<f64>,
    #[serde(default = "default_slist")]
    pub s: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Source of γ for the determinant comparisons.
    #[serde(default = "default_gamma_method")]
    pub gamma_method: Method,
    /// Kato steps of the gauge grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default = "default_wilson_points")]
    pub wilson_points: usize,
    /// Also evaluate `D_m` itself, not only the block operator.
    #[serde(default)]
    pub full_route: bool,
    #[serde(default)]
    pub route: Route,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub output: Output,
}

impl RunConfig {
    pub fn new(family: FamilySpec) -> Self {
        RunConfig {
            family,
            level: LevelCurve::default(),
            m: default_mlist(),
            s: default_slist(),
            methods: default_methods(),
            gamma_method: default_gamma_method(),
            steps: None,
            wilson_points: default_wilson_points(),
            full_route: false,
            route: Route::default(),
            tolerances: Tolerances::default(),
            checks: Checks::default(),
            output: Output::default(),
        }
    }

    pub fn demo() -> Self {
        Self::from_toml_str(DEMO_CONFIG).expect("bundled demo config is valid")
    }

    /// Parses without validating.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigError(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::ConfigError(msg) => Error::ConfigError(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigError(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        validate_mlist(&self.m).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::ConfigError(format!("field `m`: {msg}")),
            other => other,
        })?;
        if self.s.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::ConfigError("field `s`: values must lie in [0, 1]".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::ConfigError("field `methods`: at least one method".into()));
        }
        if self.wilson_points < 64 {
            return Err(Error::ConfigError("field `wilson_points`: at least 64".into()));
        }
        if let Some(steps) = self.steps {
            if steps < 16 || steps % 2 != 0 {
                return Err(Error::ConfigError("field `steps`: an even number >= 16".into()));
            }
        }
        build_family(&self.family)
            .map_err(|e| Error::ConfigError(format!("field `family`: {e}")))?;
        Ok(())
    }

    /// SHA-256 of the normalized serialization.
    pub fn hash(&self) -> Result<String> {
        let text = self.to_toml_string()?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Replaces the seed of a random family.
    pub fn set_seed(&mut self, new_seed: u64) -> Result<()> {
        match &mut self.family {
            FamilySpec::RandomGapped { seed, .. } => {
                *seed = new_seed;
                Ok(())
            }
            other => Err(Error::ConfigError(format!(
                "--seed applies to random_gapped families, not {}",
                other.label()
            ))),
        }
    }

    pub fn level_is_zero(&self) -> bool {
        self.level == LevelCurve::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_parses() {
        let cfg = RunConfig::demo();
        assert_eq!(cfg.m, vec![4.0, 8.0, 16.0, 32.0]);
        assert_eq!(cfg.gamma_method, Method::Wilson);
        assert!(cfg.full_route);
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = RunConfig::new(FamilySpec::random_gapped(4, 2, 9, 2));
        cfg.level = LevelCurve::Trigonometric {
            offset: 0.1,
            cos: vec![0.05],
            sin: vec![],
        };
        cfg.steps = Some(1024);
        cfg.output.csv = Some("out.csv".into());
        for original in [RunConfig::demo(), cfg] {
            let text = original.to_toml_string().unwrap();
            let again = RunConfig::from_toml_str(&text).unwrap();
            assert_eq!(again, original);
            assert_eq!(again.to_toml_string().unwrap(), text);
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml_str("[family]\ntype = \"diag_const\"\nenergies = [1.0, -1.0]\n")
            .unwrap();
        assert_eq!(cfg.methods.len(), 4);
        assert_eq!(cfg.tolerances, Tolerances::default());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let cases = [
            "m = []\n[family]\ntype = \"diag_const\"\nenergies = [1.0, -1.0]\n",
            "m = [4.0, 2.0]\n[family]\ntype = \"diag_const\"\nenergies = [1.0, -1.0]\n",
            "bogus = 1\n[family]\ntype = \"diag_const\"\nenergies = [1.0, -1.0]\n",
            "[family]\ntype = \"spin_half\"\ntheta = 1.0\n",
            "[family]\ntype = \"fourier\"\nc0 = [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [1.0, 0.0]]]\n",
        ];
        for text in cases {
            assert!(matches!(RunConfig::from_toml_str(text), Err(Error::ConfigError(_))), "{text}");
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = RunConfig::from_toml_str("m = [1.0,\n[family]\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::demo();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.m.push(64.0);
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn seed_override() {
        let mut cfg = RunConfig::new(FamilySpec::random_gapped(4, 2, 9, 2));
        cfg.set_seed(12).unwrap();
        assert!(matches!(cfg.family, FamilySpec::RandomGapped { seed: 12, .. }));
        assert!(RunConfig::demo().set_seed(1).is_err());
    }
}
