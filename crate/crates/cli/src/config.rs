use std::path::Path;

use anyhow::{bail, Context, Result};
use forestplan::offline::{Alpha, DEFAULT_NODE_BUDGET, DEFAULT_PATIENCE, DEFAULT_Z};
use forestplan::sas::CostModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Keyword(String),
    Value(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub z: f64,
    pub alpha: AlphaSetting,
    /// Search patience: expansions allowed without a better goal.
    pub delta: u64,
    pub node_budget: u64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L_max")]
    pub l_max: usize,
    /// Keep solving up to `L_max` and return the cheapest plan.
    pub sweep: bool,
    pub cost_seed: u64,
    pub beta_range: [f64; 2],
    /// Explicit per-feature weights; overrides the seeded draw.
    pub beta: Option<Vec<f64>>,
    pub workers: usize,
    pub timeout_ms: Option<u64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            z: DEFAULT_Z,
            alpha: AlphaSetting::Keyword("auto".into()),
            delta: DEFAULT_PATIENCE,
            node_budget: DEFAULT_NODE_BUDGET,
            k: 3,
            l_max: 10,
            sweep: false,
            cost_seed: 0,
            beta_range: [1.0, 100.0],
            beta: None,
            workers: 1,
            timeout_ms: None,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config: Config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Config::default(),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if !(self.z > 0.0 && self.z <= 1.0) {
            bail!("config: z = {} must lie in (0, 1]", self.z);
        }
        self.alpha()?;
        if self.delta == 0 || self.node_budget == 0 {
            bail!("config: delta and node_budget must be positive");
        }
        if self.k == 0 || self.l_max == 0 {
            bail!("config: K and L_max must be at least 1");
        }
        let [lo, hi] = self.beta_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            bail!("config: beta_range must satisfy 0 < lo <= hi");
        }
        if self.beta.as_ref().is_some_and(|b| b.iter().any(|w| !(w.is_finite() && *w > 0.0))) {
            bail!("config: every beta must be positive");
        }
        Ok(())
    }

    pub fn alpha(&self) -> Result<Alpha> {
        match &self.alpha {
            AlphaSetting::Keyword(k) if k == "auto" => Ok(Alpha::Auto),
            AlphaSetting::Keyword(k) => bail!("config: alpha must be \"auto\" or a number, got \"{k}\""),
            AlphaSetting::Value(v) if v.is_finite() && *v >= 0.0 => Ok(Alpha::Value(*v)),
            AlphaSetting::Value(v) => bail!("config: alpha = {v} must be non-negative"),
        }
    }

    /// Explicit weights when given, otherwise a draw from `beta_range`
    /// seeded by `cost_seed`.
    pub fn cost_model(&self, features: usize) -> Result<CostModel> {
        match &self.beta {
            Some(b) if b.len() != features => bail!("config: beta has {} entries for {features} features", b.len()),
            Some(b) => Ok(CostModel { beta: b.clone() }),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cost_seed);
                Ok(CostModel::random(features, self.beta_range[0], self.beta_range[1], &mut rng))
            }
        }
    }
}
