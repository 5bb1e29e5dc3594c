//! Run configuration (JSON). Relative paths resolve against the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SktError};
use crate::model::Params;
use crate::reduction::Sign;
use crate::solver::NewtonOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub length: f64,
    pub n: usize,
    /// Evaluate nonlinear terms on a 3/2-oversampled grid.
    #[serde(default)]
    pub dealias: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignChoice {
    Plus,
    Minus,
    Both,
}

impl SignChoice {
    pub fn signs(self) -> Vec<Sign> {
        match self {
            SignChoice::Plus => vec![Sign::Plus],
            SignChoice::Minus => vec![Sign::Minus],
            SignChoice::Both => vec![Sign::Plus, Sign::Minus],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub j: usize,
    pub sign: SignChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonConfig {
    pub start: f64,
    pub end: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl EpsilonConfig {
    /// Descending grid from `start` to `end`.
    pub fn grid(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let k = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i == 0 {
                    return self.start;
                }
                if i + 1 == self.count {
                    return self.end;
                }
                let f = i as f64 / k;
                match self.spacing {
                    Spacing::Log => (self.start.ln() + f * (self.end.ln() - self.start.ln())).exp(),
                    Spacing::Linear => self.start + f * (self.end - self.start),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        let d = NewtonOptions::default();
        NewtonConfig { tol: d.tol, max_iter: d.max_iter }
    }
}

impl NewtonConfig {
    pub fn options(&self) -> NewtonOptions {
        NewtonOptions { tol: self.tol, max_iter: self.max_iter, ..NewtonOptions::default() }
    }
}

/// Which pipeline stages to execute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stages {
    pub branch: bool,
    pub stability: bool,
    pub homotopy: bool,
    pub evolution: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages { branch: true, stability: true, homotopy: true, evolution: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: Params,
    pub domain: DomainConfig,
    pub mode: ModeConfig,
    pub epsilon: EpsilonConfig,
    /// Ascending alpha values for the homotopy into the full system.
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub newton: NewtonConfig,
    pub outputs: PathBuf,
    #[serde(default)]
    pub stages: Stages,
    /// Branch points (by eps) at which the growth rate is measured; defaults
    /// to the largest eps of the grid.
    #[serde(default)]
    pub evolution_eps: Vec<f64>,
    /// eps at which the alpha homotopy starts; defaults to the largest eps.
    #[serde(default)]
    pub homotopy_eps: Option<f64>,
}

fn bad(msg: impl Into<String>) -> SktError {
    SktError::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; returns the config and the directory relative paths resolve against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let cfg = RunConfig::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn output_dir(&self, base: &Path) -> PathBuf {
        if self.outputs.is_absolute() {
            self.outputs.clone()
        } else {
            base.join(&self.outputs)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| bad(e.to_string()))?;
        let d = &self.domain;
        if !(d.length.is_finite() && d.length > 0.0) {
            return Err(bad(format!("domain.length = {} must be positive", d.length)));
        }
        if d.n < 64 || !d.n.is_power_of_two() {
            return Err(bad(format!("domain.n = {} must be a power of two >= 64", d.n)));
        }
        if self.mode.j == 0 || self.mode.j >= d.n / 2 {
            return Err(bad(format!("mode.j = {} must lie in [1, n/2)", self.mode.j)));
        }
        let e = &self.epsilon;
        if e.count == 0 {
            return Err(bad("epsilon.count must be at least 1"));
        }
        let ordered = if e.count == 1 { e.start >= e.end } else { e.start > e.end };
        if !(e.end > 0.0 && ordered && e.start.is_finite()) {
            return Err(bad(format!("epsilon needs start > end > 0 (got {} .. {})", e.start, e.end)));
        }
        let lambda = (self.mode.j as f64 * std::f64::consts::PI / d.length).powi(2);
        let eps_max = self.params.a2 / lambda;
        if e.start >= eps_max {
            return Err(bad(format!("epsilon.start = {} must be below a2/lambda_j = {eps_max}", e.start)));
        }
        if self.alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) || self.alpha.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("alpha must be positive and strictly ascending"));
        }
        if !(self.newton.tol > 0.0) || self.newton.max_iter == 0 {
            return Err(bad("newton.tol and newton.max_iter must be positive"));
        }
        let grid = e.grid();
        let on_grid = |x: f64| grid.iter().any(|g| (g - x).abs() <= 1e-12 * g);
        if let Some(x) = self.evolution_eps.iter().find(|x| !on_grid(**x)) {
            return Err(bad(format!("evolution_eps {x} is not a point of the eps grid")));
        }
        if let Some(x) = self.homotopy_eps.filter(|x| !on_grid(*x)) {
            return Err(bad(format!("homotopy_eps {x} is not a point of the eps grid")));
        }
        Ok(())
    }
}
