//! Multi-strategy, multi-seed comparisons on the target test split.

use std::fmt::Write;

use rayon::prelude::*;

use crate::data::DomainDataset;
use crate::decode::{DEFAULT_BEAM_WIDTH, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{DomainTag, ModelParams};
use crate::train::{run_strategy, RunMetrics, Strategy, TrainConfig};

#[derive(Clone, Debug)]
pub struct CompareConfig {
    /// Shared settings; `strategy` and `seed` are replaced per run.
    pub base: TrainConfig,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub beam_width: usize,
    pub max_len: usize,
    /// Run independent (strategy, seed) pairs on worker threads.
    pub parallel: bool,
}

impl CompareConfig {
    pub fn new(base: TrainConfig, seeds: Vec<u64>) -> Self {
        Self {
            base,
            strategies: Strategy::ALL.to_vec(),
            seeds,
            beam_width: DEFAULT_BEAM_WIDTH,
            max_len: DEFAULT_MAX_LEN,
            parallel: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub report: EvalReport,
    pub metrics: RunMetrics,
}

/// Trains one strategy and evaluates it on the target test split.
pub fn run_one(
    base: &TrainConfig,
    strategy: Strategy,
    seed: u64,
    source: &DomainDataset,
    target: &DomainDataset,
    beam_width: usize,
    max_len: usize,
) -> Result<(ModelParams<f64>, RunResult)> {
    let config = TrainConfig {
        strategy,
        seed,
        ..base.clone()
    };
    let out = run_strategy::<f64>(&config, source, target)?;
    let report = evaluate(&out.params, &target.test, DomainTag::Target, beam_width, max_len)?;
    Ok((
        out.params,
        RunResult {
            strategy,
            seed,
            report,
            metrics: out.metrics,
        },
    ))
}

pub const RUNS_CSV_HEADER: &str = "strategy,seed,bleu1,bleu2,bleu3,bleu4,perplexity,best_epoch,epochs";
pub const TABLE_CSV_HEADER: &str = "strategy,B1,B2,B3,B4,PPL";

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub bleu: [f64; 4],
    pub perplexity: f64,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    /// In (strategy, seed) order of the configuration.
    pub runs: Vec<RunResult>,
}

impl Comparison {
    pub fn runs_for(&self, strategy: Strategy) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.strategy == strategy)
    }

    /// Per-strategy medians over seeds, in first-appearance order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut order: Vec<Strategy> = Vec::new();
        for r in &self.runs {
            if !order.contains(&r.strategy) {
                order.push(r.strategy);
            }
        }
        order
            .into_iter()
            .map(|s| {
                let runs: Vec<&RunResult> = self.runs_for(s).collect();
                let col = |f: &dyn Fn(&EvalReport) -> f64| median(&runs.iter().map(|r| f(&r.report)).collect::<Vec<_>>());
                SummaryRow {
                    strategy: s,
                    bleu: [col(&|r| r.bleu1), col(&|r| r.bleu2), col(&|r| r.bleu3), col(&|r| r.bleu4)],
                    perplexity: col(&|r| r.perplexity),
                }
            })
            .collect()
    }

    pub fn median_of(&self, strategy: Strategy) -> Option<SummaryRow> {
        self.summary().into_iter().find(|r| r.strategy == strategy)
    }

    pub fn runs_csv(&self) -> String {
        let mut out = format!("{RUNS_CSV_HEADER}\n");
        for r in &self.runs {
            let b = r.report.bleu();
            writeln!(
                out,
                "{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{},{}",
                r.strategy,
                r.seed,
                b[0],
                b[1],
                b[2],
                b[3],
                r.report.perplexity,
                r.metrics.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
                r.metrics.epochs.len()
            )
            .unwrap();
        }
        out
    }

    pub fn table_csv(&self) -> String {
        let mut out = format!("{TABLE_CSV_HEADER}\n");
        for row in self.summary() {
            let b = row.bleu;
            writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                row.strategy.label(),
                b[0],
                b[1],
                b[2],
                b[3],
                row.perplexity
            )
            .unwrap();
        }
        out
    }

    /// Aligned plain-text table; BLEU as percentages.
    pub fn table_text(&self) -> String {
        let mut out = format!("{:<10} {:>6} {:>6} {:>6} {:>6} {:>9}\n", "", "B1", "B2", "B3", "B4", "PPL");
        for row in self.summary() {
            let b = row.bleu;
            writeln!(
                out,
                "{:<10} {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>9.3}",
                row.strategy.label(),
                100.0 * b[0],
                100.0 * b[1],
                100.0 * b[2],
                100.0 * b[3],
                row.perplexity
            )
            .unwrap();
        }
        out
    }
}

/// Runs every (strategy, seed) pair of `cfg`.
pub fn compare(cfg: &CompareConfig, source: &DomainDataset, target: &DomainDataset) -> Result<Comparison> {
    compare_with(cfg, source, target, &|_| {})
}

/// As [`compare`], calling `progress` after each finished run.
pub fn compare_with(
    cfg: &CompareConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    progress: &(dyn Fn(&RunResult) + Sync),
) -> Result<Comparison> {
    if cfg.strategies.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::InvalidArgument("comparison needs at least one strategy and one seed".into()));
    }
    let jobs: Vec<(Strategy, u64)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let job = |&(s, seed): &(Strategy, u64)| {
        run_one(&cfg.base, s, seed, source, target, cfg.beam_width, cfg.max_len).map(|(_, r)| {
            progress(&r);
            r
        })
    };
    let runs = if cfg.parallel {
        jobs.par_iter().map(job).collect::<Result<Vec<_>>>()?
    } else {
        jobs.iter().map(job).collect::<Result<Vec<_>>>()?
    };
    Ok(Comparison { runs })
}

/// A comparison repeated for several target training-set sizes. Smaller sizes
/// use prefixes of the same target training split.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub points: Vec<(usize, Comparison)>,
}

pub const SWEEP_CSV_HEADER: &str = "target_train,strategy,seed,bleu1,bleu2,bleu3,bleu4,perplexity";

impl Sweep {
    /// Every run at every size.
    pub fn csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for (size, cmp) in &self.points {
            for r in &cmp.runs {
                let b = r.report.bleu();
                writeln!(
                    out,
                    "{size},{},{},{:.9},{:.9},{:.9},{:.9},{:.9}",
                    r.strategy, r.seed, b[0], b[1], b[2], b[3], r.report.perplexity
                )
                .unwrap();
            }
        }
        out
    }

    /// Median perplexity of `strategy` at each size, in sweep order.
    pub fn median_perplexity(&self, strategy: Strategy) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .filter_map(|(n, c)| c.median_of(strategy).map(|r| (*n, r.perplexity)))
            .collect()
    }
}

pub fn sweep_target_sizes(
    cfg: &CompareConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    sizes: &[usize],
) -> Result<Sweep> {
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if n > target.train.len() {
            return Err(Error::InvalidArgument(format!(
                "target size {n} exceeds the {} available training examples",
                target.train.len()
            )));
        }
        points.push((n, compare(cfg, source, &target.with_train_prefix(n))?));
    }
    Ok(Sweep { points })
}
