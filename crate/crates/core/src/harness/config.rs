//! TOML experiment configuration and `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::{NoiseSpec, RegressionModel};
use crate::error::{Error, Result};
use crate::hypothesis::SpaceConfig;
use crate::solver::{ScheduleParams, SolverOptions};

/// The configuration every subcommand starts from when none is given.
pub const DEFAULT_CONFIG: &str = include_str!("default.toml");

/// How the scale is chosen for each fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaPolicy {
    Fixed { value: f64 },
    /// `σ = n^{Φ(ε, q)}`.
    Adaptive { epsilon: f64, q: f64 },
    /// One series per listed value.
    Grid { values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    LeastSquares,
    Lad,
}

/// Settings for the fixed-σ versus adaptive-σ offset demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasDemoConfig {
    /// Homoscedastic model to fit; defaults to `f* ≡ 0` with the experiment's noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<RegressionModel>,
    pub sigmas: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    /// Also run `σ = n^{Φ}` along `n_grid`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<ScheduleParams>,
    /// Fit constants only (the offset is then the fitted constant minus `f*`).
    pub constant_only: bool,
}

impl Default for BiasDemoConfig {
    fn default() -> Self {
        Self {
            model: None,
            sigmas: vec![0.01, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0],
            n: 100_000,
            replicates: 1,
            adaptive: Some(ScheduleParams { epsilon: 1.0, q: 1.0 }),
            constant_only: true,
        }
    }
}

/// Settings for the randomised bound-check suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSuiteConfig {
    pub triples: usize,
    pub mc_n: usize,
    pub epsilons: Vec<f64>,
    /// σ is drawn log-uniformly from `(1.1·max{2M, 1}, sigma_max)`.
    pub sigma_max: f64,
}

impl Default for BoundSuiteConfig {
    fn default() -> Self {
        Self {
            triples: 100,
            mc_n: 1_000_000,
            epsilons: vec![0.5, 1.0, 2.0],
            sigma_max: 50.0,
        }
    }
}

fn default_eval_n() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub model: RegressionModel,
    pub space: SpaceConfig,
    pub sigma_policy: SigmaPolicy,
    #[serde(default)]
    pub comparators: Vec<Comparator>,
    /// Moment order `ε` with `E|Y|^{1+ε} < ∞`; taken from an adaptive policy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Size of the independent sample used to estimate excess risk.
    #[serde(default = "default_eval_n")]
    pub eval_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub bias_demo: BiasDemoConfig,
    #[serde(default)]
    pub bounds: BoundSuiteConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses `text`, applies `key=value` overrides, then validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn default_config() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("shipped default config is valid")
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The declared moment order: `epsilon`, else the adaptive policy's.
    pub fn effective_epsilon(&self) -> Option<f64> {
        self.epsilon.or(match self.sigma_policy {
            SigmaPolicy::Adaptive { epsilon, .. } => Some(epsilon),
            _ => None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("`{key}`: {msg}")));
        if self.n_grid.is_empty() {
            return bad("n_grid", "must list at least one sample size".into());
        }
        if self.n_grid[0] == 0 {
            return bad("n_grid", "sample sizes must be positive".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid", format!("must be strictly increasing, got {:?}", self.n_grid));
        }
        if self.replicates == 0 {
            return bad("replicates", "must be at least 1".into());
        }
        if self.eval_n < 2 {
            return bad("eval_n", "must be at least 2".into());
        }
        self.model.validate().or_else(|e| bad("model", e.to_string()))?;
        crate::hypothesis::make_space(&self.space, &self.model.domain).map_err(|e| Error::Config(format!("`space`: {e}")))?;
        self.solver.validate().or_else(|e| bad("solver", e.to_string()))?;
        match &self.sigma_policy {
            SigmaPolicy::Fixed { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return bad("sigma_policy.value", format!("must be positive, got {value}"));
                }
            }
            SigmaPolicy::Adaptive { epsilon, q } => {
                ScheduleParams::new(*epsilon, *q).map_err(|e| Error::Config(format!("`sigma_policy`: {e}")))?;
            }
            SigmaPolicy::Grid { values } => {
                if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("sigma_policy.values", format!("must be a nonempty list of positive values, got {values:?}"));
                }
            }
        }
        if let Some(eps) = self.effective_epsilon() {
            check_moment_order(&self.model.noise, eps).or_else(|m| bad("epsilon", m))?;
        }
        let b = &self.bias_demo;
        if b.n == 0 || b.replicates == 0 {
            return bad("bias_demo", "n and replicates must be positive".into());
        }
        if b.sigmas.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("bias_demo.sigmas", "must be positive".into());
        }
        if let Some(p) = &b.adaptive {
            p.validate().or_else(|e| bad("bias_demo.adaptive", e.to_string()))?;
        }
        if let Some(m) = &b.model {
            m.validate().or_else(|e| bad("bias_demo.model", e.to_string()))?;
        }
        let s = &self.bounds;
        if s.mc_n < 2 {
            return bad("bounds.mc_n", "must be at least 2".into());
        }
        if s.epsilons.is_empty() || s.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad("bounds.epsilons", "must be a nonempty list of positive values".into());
        }
        if !(s.sigma_max.is_finite() && s.sigma_max > 0.0) {
            return bad("bounds.sigma_max", "must be positive".into());
        }
        Ok(())
    }
}

/// `E|ε|^{1+ε}` must be finite for the declared `ε`.
pub(crate) fn check_moment_order(noise: &NoiseSpec, epsilon: f64) -> std::result::Result<(), String> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(format!("must be positive, got {epsilon}"));
    }
    let tail = noise.tail_exponent();
    if 1.0 + epsilon >= tail {
        return Err(format!(
            "E|Y|^(1+eps) is infinite for eps = {epsilon}: the noise only has moments below order {tail}"
        ));
    }
    Ok(())
}

/// Sets a dotted `key=value` in `table`. The value is read as a TOML value
/// when it parses as one, otherwise as a string. Intermediate tables must
/// already exist; unknown leaf keys are rejected later by deserialisation.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{item}` has an empty key")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let (leaf, path) = parts.split_last().expect("nonempty key");
    let mut cur = table;
    for (i, part) in path.iter().enumerate() {
        let shown = parts[..=i].join(".");
        cur = match cur.get_mut(*part) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(Error::Config(format!("override key `{key}`: `{shown}` is not a table"))),
            None => return Err(Error::Config(format!("override key `{key}`: no table `{shown}` in the config"))),
        };
    }
    cur.insert((*leaf).to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default_config();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn overrides_apply_and_name_bad_keys() {
        let c = ExperimentConfig::from_toml_with_overrides(
            DEFAULT_CONFIG,
            &["replicates=3".into(), "space.bandwidth = 0.5".into(), "sigma_policy.epsilon=0.8".into()],
        )
        .unwrap();
        assert_eq!(c.replicates, 3);
        assert_eq!(c.space.bandwidth, 0.5);
        assert_eq!(c.sigma_policy, SigmaPolicy::Adaptive { epsilon: 0.8, q: 1.0 });

        let err = ExperimentConfig::from_toml_with_overrides(DEFAULT_CONFIG, &["space.bandwdith=0.5".into()]).unwrap_err();
        assert!(err.to_string().contains("bandwdith"), "{err}");
        let err = ExperimentConfig::from_toml_with_overrides(DEFAULT_CONFIG, &["nope.x=1".into()]).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
        let err = ExperimentConfig::from_toml_with_overrides(DEFAULT_CONFIG, &["replicates".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn invariants_are_enforced() {
        for bad in ["n_grid=[100, 100]", "replicates=0", "n_grid=[]"] {
            let err = ExperimentConfig::from_toml_with_overrides(DEFAULT_CONFIG, &[bad.into()]).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad}");
        }
        // Student-t with 1.5 degrees of freedom has no moment of order 2.
        let err = ExperimentConfig::from_toml_with_overrides(
            DEFAULT_CONFIG,
            &["model.noise={family=\"student_t\", df=1.5, scale=1.0}".into()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
        assert!(ExperimentConfig::from_toml_with_overrides(
            DEFAULT_CONFIG,
            &[
                "model.noise={family=\"student_t\", df=1.5, scale=1.0}".into(),
                "sigma_policy.epsilon=0.4".into(),
            ],
        )
        .is_ok());
    }

    #[test]
    fn string_fallback_for_bare_words() {
        let mut t: toml::Table = "a = 1".parse().unwrap();
        apply_override(&mut t, "b=hello world").unwrap();
        assert_eq!(t["b"].as_str(), Some("hello world"));
    }
}
