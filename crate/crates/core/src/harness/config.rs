//! TOML experiment configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sa_core::{NoiseKind, NoiseModel, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Oja,
    RegressionAffine,
    RegressionSphere,
    NearestCorrelation,
    Polyhedral,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Oja,
        ExperimentKind::RegressionAffine,
        ExperimentKind::RegressionSphere,
        ExperimentKind::NearestCorrelation,
        ExperimentKind::Polyhedral,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Oja => "oja",
            ExperimentKind::RegressionAffine => "regression_affine",
            ExperimentKind::RegressionSphere => "regression_sphere",
            ExperimentKind::NearestCorrelation => "nearest_correlation",
            ExperimentKind::Polyhedral => "polyhedral",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            ExperimentKind::Oja => "principal subspace tracking on the Stiefel manifold",
            ExperimentKind::RegressionAffine => "least squares under an affine constraint Lw = c",
            ExperimentKind::RegressionSphere => "least squares on the unit sphere",
            ExperimentKind::NearestCorrelation => "relaxed SA onto the correlation matrices",
            ExperimentKind::Polyhedral => "relaxed SA for a quadratic over a polyhedron",
        }
    }
}

/// Problem sizes. Which fields matter depends on the experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n: Option<usize>,
    pub r: Option<usize>,
    pub d: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub a0: f64,
    pub p: f64,
    pub offset: u64,
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<StepSchedule> {
        StepSchedule::new(self.a0, self.p, self.offset).map_err(|e| Error::Config(e.to_string()))
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = StepSchedule::default_slow();
        Self {
            a0: s.scale(),
            p: s.exponent(),
            offset: s.offset(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindConfig {
    /// Expected field, no noise.
    Zero,
    /// Additive Gaussian noise of standard deviation `sigma`.
    Gaussian,
    /// Additive uniform noise on `[-sigma, sigma]`.
    Uniform,
    /// Field evaluated on a sampled data stream (observation noise `sigma`
    /// for regression).
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKindConfig,
    #[serde(default)]
    pub sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKindConfig::Zero,
            sigma: 0.0,
        }
    }
}

impl NoiseConfig {
    /// Additive noise model; `Sampled` maps to zero additive noise.
    pub fn additive(&self, seed: u64) -> Result<NoiseModel> {
        let kind = match self.kind {
            NoiseKindConfig::Zero | NoiseKindConfig::Sampled => NoiseKind::Zero,
            NoiseKindConfig::Gaussian => NoiseKind::TangentGaussian { sigma: self.sigma },
            NoiseKindConfig::Uniform => NoiseKind::TangentBoundedUniform { radius: self.sigma },
        };
        NoiseModel::new(kind, seed).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Experiment-specific parameters; every field has a default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Oja: eigenvalues of the covariance (length n).
    pub spectrum: Option<Vec<f64>>,
    /// Regression: constraint rows `L` and right-hand side `c`.
    pub l: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<f64>>,
    /// Regression: true weights of the linear model.
    pub w_true: Option<Vec<f64>>,
    /// Regression: diagonal of the regressor covariance.
    pub regressor_variances: Option<Vec<f64>>,
    /// Initial point (vector experiments).
    pub x0: Option<Vec<f64>>,
    /// Nearest correlation: observed matrix rows.
    pub c_obs: Option<Vec<Vec<f64>>>,
    /// Polyhedral: inequality rows `a_i` and bounds `b_i` (`a_iᵀx ≤ b_i`).
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<f64>>,
    /// Polyhedral: box bounds, used when `a`/`b` are absent.
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    /// Polyhedral: minimiser of `g(x) = ½‖x − target‖²`.
    pub target: Option<Vec<f64>>,
    /// Polyhedral: constant drive `H(x) = drive` instead of a target.
    pub drive: Option<Vec<f64>>,
    /// Relaxation λ of the projection stages.
    pub relaxation: Option<f64>,
    /// Maximum sweeps per call of `f` under (A7) escalation.
    pub a7_budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub dims: Dims,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    /// Fast rate γ of the relaxed experiments (default `0.5/(n+10)^0.6`).
    #[serde(default)]
    pub fast_schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub seed: u64,
    pub n_steps: usize,
    pub output_path: PathBuf,
    #[serde(default)]
    pub verify: Vec<String>,
    /// Report every this many steps (default `n_steps / 100`).
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    #[serde(default)]
    pub problem: ProblemConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative output paths resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.output_path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.output_path = dir.join(&cfg.output_path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        for (name, v) in [("n", self.dims.n), ("r", self.dims.r), ("d", self.dims.d)] {
            if v == Some(0) {
                return Err(Error::Config(format!("dims.{name} must be positive")));
            }
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(Error::Config("noise.sigma must be a nonnegative number".into()));
        }
        self.schedule.build()?;
        if let Some(f) = &self.fast_schedule {
            f.build()?;
        }
        for check in &self.verify {
            if !super::verify::CHECKS.iter().any(|(name, _)| name == check) {
                return Err(Error::Config(format!("unknown check `{check}` in verify")));
            }
        }
        Ok(())
    }

    pub fn checkpoint_every(&self) -> usize {
        self.checkpoint_every.unwrap_or((self.n_steps / 100).max(1))
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "oja"
seed = 1
n_steps = 10
output_path = "out.csv"
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.schedule, ScheduleConfig::default());
        assert_eq!(cfg.noise.kind, NoiseKindConfig::Zero);
        assert_eq!(cfg.checkpoint_every(), 1);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{MINIMAL}\nbogus = 3\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = format!("{MINIMAL}\n[problem]\nspectrumm = [1.0]\n");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = MINIMAL.replace("n_steps = 10", "n_steps = 0");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = format!("{MINIMAL}\n[schedule]\na0 = 1.0\np = 0.5\noffset = 1\n");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = format!("{MINIMAL}\nverify = [\"nope\"]\n");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = MINIMAL.replace("\"oja\"", "\"pca\"");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let b = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = ExperimentConfig::from_toml_str(&MINIMAL.replace("seed = 1", "seed = 2")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
