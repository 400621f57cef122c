use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::train::config::Strategy;

/// Version of the per-epoch metrics CSV layout.
pub const METRICS_CSV_VERSION: u32 = 1;
pub const METRICS_CSV_HEADER: &str = "epoch,phase,source_train_loss,target_train_loss,dev_loss,bound_gap_mean";

/// Per-token means for one epoch. `None` when the epoch saw no such data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// `source`, `target` or `joint`.
    pub phase: String,
    pub source_train_loss: Option<f64>,
    pub target_train_loss: Option<f64>,
    pub dev_loss: Option<f64>,
    /// Augmented heads: mean of (bound − exact composed loss) over training tokens.
    pub bound_gap_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub strategy: Strategy,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

impl RunMetrics {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            epochs: Vec::new(),
            best_epoch: None,
        }
    }

    /// Dev losses in the order early stopping consumed them.
    pub fn dev_losses(&self) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.dev_loss).collect()
    }

    pub fn csv_row(e: &EpochRecord) -> String {
        format!(
            "{},{},{},{},{},{}",
            e.epoch,
            e.phase,
            cell(e.source_train_loss),
            cell(e.target_train_loss),
            cell(e.dev_loss),
            cell(e.bound_gap_mean)
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{METRICS_CSV_HEADER}").unwrap();
        for e in &self.epochs {
            writeln!(out, "{}", Self::csv_row(e)).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_leaves_missing_cells_empty() {
        let mut m = RunMetrics::new(Strategy::TgtOnly);
        m.epochs.push(EpochRecord {
            epoch: 1,
            phase: "joint".into(),
            source_train_loss: None,
            target_train_loss: Some(2.5),
            dev_loss: Some(2.25),
            bound_gap_mean: None,
        });
        assert_eq!(
            m.to_csv(),
            format!("{METRICS_CSV_HEADER}\n1,joint,,2.500000000,2.250000000,\n")
        );
    }
}
