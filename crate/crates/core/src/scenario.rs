//! Scenario files: one JSON object per run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{optimal_j, SpliceMode};
use crate::design::{DesignModel, DesignSpec};
use crate::diagnostics::thresholds::ENERGY_PERMUTATIONS;
use crate::diagnostics::{regime_check, RegimeVerdict};
use crate::error::{Error, Result};
use crate::function::{panel_function, AdditiveFunction, PANEL_IDS};
use crate::white_noise::DEFAULT_STEPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Simulate,
    Risk,
    Equivalence,
    Operator,
    Regime,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Simulate, Suite::Risk, Suite::Equivalence, Suite::Operator, Suite::Regime];

    pub fn label(&self) -> &'static str {
        match self {
            Suite::Simulate => "simulate",
            Suite::Risk => "risk",
            Suite::Equivalence => "equivalence",
            Suite::Operator => "operator",
            Suite::Regime => "regime",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}; expected one of simulate, risk, equivalence, operator, regime")))
    }
}

/// Coarse level: a fixed divisor of `K` or chosen from `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoarseLevel {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl Default for CoarseLevel {
    fn default() -> Self {
        CoarseLevel::Auto(AutoTag::Auto)
    }
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}
fn default_points() -> usize {
    64
}
fn default_panel() -> Vec<String> {
    vec!["sine".into()]
}
fn default_suites() -> Vec<Suite> {
    vec![Suite::Simulate, Suite::Operator, Suite::Regime]
}
fn default_reps() -> usize {
    200
}
fn default_j_constant() -> f64 {
    1.0
}
fn default_permutations() -> usize {
    ENERGY_PERMUTATIONS
}
fn default_splice() -> SpliceMode {
    SpliceMode::Oracle
}
fn default_gamma_indices() -> Vec<usize> {
    (1..=8).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "J", default)]
    pub j: CoarseLevel,
    #[serde(rename = "T", default = "default_steps")]
    pub t: usize,
    #[serde(rename = "G", default = "default_points")]
    pub g: usize,
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub alpha: f64,
    #[serde(default = "default_panel")]
    pub panel: Vec<String>,
    #[serde(default)]
    pub design: DesignSpec,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_j_constant")]
    pub j_constant: f64,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    /// Sample sizes for the risk suite; defaults to `n/16, n/8, n/4, n/2, n`.
    #[serde(default)]
    pub schedule: Option<Vec<usize>>,
    /// 1-based Fourier indices for the compressed operator.
    #[serde(default = "default_gamma_indices")]
    pub gamma_indices: Vec<usize>,
    /// How the equivalence suite produces stage-I vectors. `oracle` gives
    /// the exact `N(G, σ²I/n)` law; `end_to_end` feeds the recentered
    /// vectors through and so measures the localization error as well.
    #[serde(default = "default_splice")]
    pub splice: SpliceMode,
}

impl Scenario {
    /// A filled-in example showing every default.
    pub fn defaults() -> Self {
        Scenario {
            seed: 1,
            n: 4096,
            d: 1,
            k: 64,
            j: CoarseLevel::default(),
            t: default_steps(),
            g: default_points(),
            sigma: 1.0,
            rho: 0.5,
            beta: 1.0,
            alpha: 0.0,
            panel: default_panel(),
            design: DesignSpec::default(),
            suites: default_suites(),
            reps: default_reps(),
            j_constant: default_j_constant(),
            permutations: default_permutations(),
            schedule: None,
            gamma_indices: default_gamma_indices(),
            splice: default_splice(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn model(&self) -> Result<DesignModel> {
        self.design.build(self.d, self.rho)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k < 2 {
            return bad(format!("K >= 2 violated: K = {}", self.k));
        }
        if let CoarseLevel::Fixed(j) = self.j {
            if j < 2 || self.k % j != 0 {
                return bad(format!("J divides K violated: J = {j}, K = {}", self.k));
            }
        }
        if self.n < 4 {
            return bad(format!("n >= 4 violated: n = {}", self.n));
        }
        if self.d == 0 {
            return bad("d >= 1 violated".into());
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma >= 0 violated: sigma = {}", self.sigma));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta in (0, 1] violated: beta = {}", self.beta));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha >= 0 violated: alpha = {}", self.alpha));
        }
        if self.g < 2 || self.t < 8 || self.t % self.g != 0 {
            return bad(format!("G >= 2, T >= 8 and G divides T violated: T = {}, G = {}", self.t, self.g));
        }
        if self.panel.is_empty() {
            return bad("panel must name at least one function".into());
        }
        if let Some(id) = self.panel.iter().find(|id| !PANEL_IDS.contains(&id.as_str())) {
            return bad(format!("unknown panel function {id:?}; known: {}", PANEL_IDS.join(", ")));
        }
        if self.gamma_indices.is_empty() || self.gamma_indices.contains(&0) {
            return bad("gamma_indices must be non-empty and 1-based".into());
        }
        if !(self.j_constant > 0.0) {
            return bad(format!("j_constant > 0 violated: {}", self.j_constant));
        }
        if let Some(s) = &self.schedule {
            if s.iter().any(|&n| n < 4) {
                return bad("schedule sample sizes must be >= 4".into());
            }
        }
        let model = self.model().map_err(|e| Error::Config(format!("design: {e}")))?;
        let bounds = model.validate_bounds();
        if !bounds.ok {
            return bad(format!(
                "design density bounds violated: min {} < rho {} or max {} > 1/rho",
                bounds.min_density, self.rho, bounds.max_density
            ));
        }
        model.check_alignment(self.k).map_err(|e| Error::Config(format!("design: {e}")))?;
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Canonical JSON echo with all defaults filled in.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn coarse_bins(&self, n: usize) -> Result<usize> {
        match self.j {
            CoarseLevel::Fixed(j) => Ok(j),
            CoarseLevel::Auto(_) => optimal_j(n, self.d, self.beta, self.k, self.j_constant),
        }
    }

    pub fn panel_functions(&self) -> Result<Vec<(String, AdditiveFunction)>> {
        self.panel
            .iter()
            .map(|id| Ok((id.clone(), panel_function(id, self.d)?)))
            .collect()
    }

    pub fn risk_schedule(&self) -> Vec<usize> {
        self.schedule
            .clone()
            .unwrap_or_else(|| [16, 8, 4, 2, 1].iter().map(|f| (self.n / f).max(4)).collect())
    }

    pub fn regime(&self) -> Result<RegimeVerdict> {
        regime_check(self.beta, self.alpha)
    }
}

/// The two fields the regime check needs; everything else is ignored.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct RegimeConfig {
    pub beta: f64,
    pub alpha: f64,
}

impl RegimeConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))
    }
}
