use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HeadKind;
use crate::optim::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", try_from = "String")]
pub enum Strategy {
    /// Source data only, single head.
    SrcOnly,
    /// Target data only, single head.
    TgtOnly,
    /// Both datasets pooled, single head.
    All,
    /// Source training, then continued training on target.
    FineTune,
    /// Shared trunk, one output matrix per domain.
    Dual,
    /// Shared trunk, augmented head trained through the upper bound.
    Proposed,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::SrcOnly,
        Strategy::TgtOnly,
        Strategy::All,
        Strategy::FineTune,
        Strategy::Dual,
        Strategy::Proposed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SrcOnly => "srconly",
            Strategy::TgtOnly => "tgtonly",
            Strategy::All => "all",
            Strategy::FineTune => "finetune",
            Strategy::Dual => "dual",
            Strategy::Proposed => "proposed",
        }
    }

    /// Display name used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::SrcOnly => "SrcOnly",
            Strategy::TgtOnly => "TgtOnly",
            Strategy::All => "All",
            Strategy::FineTune => "FineTune",
            Strategy::Dual => "Dual",
            Strategy::Proposed => "Proposed",
        }
    }

    pub fn head(self) -> HeadKind {
        match self {
            Strategy::Dual => HeadKind::Dual,
            Strategy::Proposed => HeadKind::Augmented,
            _ => HeadKind::Single,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub cell_size: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epoch budget for FineTune's target phase; `None` reuses `max_epochs`.
    pub target_max_epochs: Option<usize>,
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm clip; off when `None`.
    pub clip: Option<f64>,
    pub adam: AdamConfig,
    /// Uniform init half-width for trunk and single/dual heads.
    pub init_scale: f64,
    /// FineTune: start the target phase with fresh Adam moments.
    pub reset_adam_on_finetune: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Proposed,
            cell_size: 300,
            batch_size: 16,
            max_epochs: 100,
            target_max_epochs: None,
            patience: 3,
            seed: 0,
            clip: None,
            adam: AdamConfig::default(),
            init_scale: 0.08,
            reset_adam_on_finetune: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.cell_size == 0 {
            return bad("cell_size must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be positive");
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return bad("clip must be positive");
            }
        }
        let a = &self.adam;
        if !(a.alpha > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("invalid Adam hyperparameters");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
            assert_eq!(s.label().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("fine-tune".parse::<Strategy>().unwrap(), Strategy::FineTune);
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn defaults_follow_published_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!(c.cell_size, 300);
        assert_eq!((c.adam.alpha, c.adam.beta1, c.adam.beta2), (0.001, 0.9, 0.999));
        c.validate().unwrap();
        assert!(TrainConfig { patience: 0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..c }.validate().is_err());
    }
}
