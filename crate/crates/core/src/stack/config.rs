use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobtree::{CartConfig, MobConfig};
use crate::stability::StabilityConfig;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20150901;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Lasso,
    Cart,
    Mob,
}

impl Learner {
    pub const ALL: [Learner; 3] = [Learner::Lasso, Learner::Cart, Learner::Mob];

    pub fn as_str(self) -> &'static str {
        match self {
            Learner::Lasso => "lasso",
            Learner::Cart => "cart",
            Learner::Mob => "mob",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Learner::Lasso => "LASSO",
            Learner::Cart => "CART",
            Learner::Mob => "MOB",
        }
    }

    pub fn parse(s: &str) -> Option<Learner> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" => Some(Learner::Lasso),
            "cart" => Some(Learner::Cart),
            "mob" => Some(Learner::Mob),
            _ => None,
        }
    }
}

impl std::fmt::Display for Learner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarlyStop {
    pub enabled: bool,
    /// Minimum drop in validation MAE for a layer to be kept.
    pub delta: f64,
    pub validation_fraction: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            enabled: true,
            delta: 1e-4,
            validation_fraction: 0.2,
        }
    }
}

/// Final MOB tree; also the early-stopping probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinalMob {
    pub max_depth: usize,
    pub alpha: f64,
}

impl Default for FinalMob {
    fn default() -> Self {
        FinalMob {
            max_depth: 5,
            alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartSettings {
    pub max_depth: Option<usize>,
    pub min_node_size: usize,
    pub cp: f64,
}

impl Default for CartSettings {
    fn default() -> Self {
        let c = CartConfig::default();
        CartSettings {
            max_depth: c.max_depth,
            min_node_size: c.min_node_size,
            cp: c.cp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoSettings {
    /// Candidate penalties as fractions of the data's `lambda_max`.
    pub ratios: Vec<f64>,
    /// Share of training rows held out to pick the ratio.
    pub holdout_fraction: f64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        LassoSettings {
            ratios: vec![1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001],
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackConfig {
    pub seed: u64,
    pub layers: Vec<LayerConfig>,
    pub min_node_size: usize,
    pub permutations: usize,
    pub trim: f64,
    pub row_fraction: f64,
    pub col_fraction: f64,
    pub early_stop: EarlyStop,
    pub learners: Vec<Learner>,
    pub mob: FinalMob,
    pub cart: CartSettings,
    pub lasso: LassoSettings,
}

impl Default for StackConfig {
    fn default() -> Self {
        let layer = |max_depth| LayerConfig {
            trees: 50,
            max_depth,
            alpha: 0.1,
        };
        StackConfig {
            seed: DEFAULT_SEED,
            layers: vec![layer(5), layer(3), layer(3)],
            min_node_size: 20,
            permutations: 199,
            trim: 0.1,
            row_fraction: 0.632,
            col_fraction: 0.5,
            early_stop: EarlyStop::default(),
            learners: Learner::ALL.to_vec(),
            mob: FinalMob::default(),
            cart: CartSettings::default(),
            lasso: LassoSettings::default(),
        }
    }
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("at least one layer is required".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.trees == 0 {
                return Err(Error::Config(format!("layer {} has no trees", i + 1)));
            }
            self.stability(l.alpha, 0).validate()?;
        }
        self.stability(self.mob.alpha, 0).validate()?;
        let es = &self.early_stop;
        if es.enabled {
            if !(es.validation_fraction > 0.0 && es.validation_fraction < 1.0) {
                return Err(Error::Config(format!(
                    "validation_fraction {} must lie in (0, 1)",
                    es.validation_fraction
                )));
            }
            if !(es.delta >= 0.0) {
                return Err(Error::Config("early-stop delta must be >= 0".into()));
            }
        }
        if self.learners.is_empty() {
            return Err(Error::Config("no final learners requested".into()));
        }
        if self.lasso.ratios.is_empty() || self.lasso.ratios.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Config("lasso ratios must be a non-empty list of values >= 0".into()));
        }
        if !(self.lasso.holdout_fraction > 0.0 && self.lasso.holdout_fraction < 1.0) {
            return Err(Error::Config("lasso holdout_fraction must lie in (0, 1)".into()));
        }
        crate::forest::PatchSpec {
            row_fraction: self.row_fraction,
            col_fraction: self.col_fraction,
            seed: 0,
        }
        .validate()
    }

    pub(crate) fn stability(&self, alpha: f64, seed: u64) -> StabilityConfig {
        StabilityConfig {
            alpha,
            permutations: self.permutations,
            trim: self.trim,
            seed,
        }
    }

    pub(crate) fn layer_mob(&self, layer: &LayerConfig) -> MobConfig {
        MobConfig {
            max_depth: layer.max_depth,
            min_node_size: self.min_node_size,
            stability: self.stability(layer.alpha, 0),
            max_split_candidates: None,
        }
    }

    pub(crate) fn final_mob(&self, seed: u64) -> MobConfig {
        MobConfig {
            max_depth: self.mob.max_depth,
            min_node_size: self.min_node_size,
            stability: self.stability(self.mob.alpha, seed),
            max_split_candidates: None,
        }
    }

    pub(crate) fn cart_config(&self) -> CartConfig {
        CartConfig {
            max_depth: self.cart.max_depth,
            min_node_size: self.cart.min_node_size,
            cp: self.cart.cp,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<StackConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

impl EarlyStop {
    pub fn off() -> Self {
        EarlyStop {
            enabled: false,
            ..Default::default()
        }
    }
}
