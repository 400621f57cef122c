//! Training harness: batching, domain interleaving, early stopping and the
//! six training strategies.

mod config;
mod metrics;
mod run;
mod schedule;

pub use config::{Strategy, TrainConfig};
pub use metrics::{EpochRecord, RunMetrics, METRICS_CSV_HEADER, METRICS_CSV_VERSION};
pub use run::{continue_on_target, init_params, mean_nll, run_strategy, run_strategy_with, TrainOutcome};
pub use schedule::{best_epoch, early_stop, epoch_schedule, StopDecision};
