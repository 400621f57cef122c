use rayon::prelude::*;

use crate::data::{DomainDataset, Example};
use crate::error::{Error, Result};
use crate::math::Rng;
use crate::model::{accumulate_sequence, sequence_nll, DomainTag, HeadKind, ModelParams, Objective};
use crate::optim::AdamState;
use crate::scalar::{cast_slice, Scalar};
use crate::train::config::{Strategy, TrainConfig};
use crate::train::metrics::{EpochRecord, RunMetrics};
use crate::train::schedule::{best_epoch, early_stop, epoch_schedule, StopDecision};

const INIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const TARGET_PHASE_STREAM: u64 = 3;

/// Result of a training run: the best-dev parameters and the epoch log.
#[derive(Clone, Debug)]
pub struct TrainOutcome<S = f64> {
    pub params: ModelParams<S>,
    pub metrics: RunMetrics,
}

/// One optimization phase: which data it sees and which dev set it watches.
struct Phase<'a> {
    source: &'a [Example],
    target: &'a [Example],
    dev: &'a [Example],
    dev_tag: DomainTag,
    max_epochs: usize,
    stream: u64,
    name: &'static str,
}

/// Mean per-token evaluation NLL. Examples are scored in parallel and summed
/// in index order, so the value does not depend on thread count.
pub fn mean_nll<S: Scalar>(params: &ModelParams<S>, examples: &[Example], tag: DomainTag) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyReduction);
    }
    let parts: Vec<(f64, usize)> = examples
        .par_iter()
        .map(|ex| {
            let ctx = cast_slice::<S>(&ex.ctx);
            sequence_nll(params, &ctx, &ex.tokens, tag).map(|(l, n)| (l.as_f64(), n))
        })
        .collect::<Result<_>>()?;
    let (mut total, mut count) = (0.0, 0usize);
    for (l, n) in parts {
        total += l;
        count += n;
    }
    Ok(total / count as f64)
}

fn batches(rng: &mut Rng, n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(size).map(<[usize]>::to_vec).collect()
}

fn clip_grads<S: Scalar>(grads: &mut ModelParams<S>, max_norm: f64) {
    let norm = grads.matrices().iter().map(|m| m.sum_sq().as_f64()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = S::lit(max_norm / norm);
        for m in grads.matrices_mut() {
            m.scale(s);
        }
    }
}

struct Trainer<'c, S> {
    config: &'c TrainConfig,
    params: ModelParams<S>,
    adam: AdamState<S>,
    grads: ModelParams<S>,
    metrics: RunMetrics,
}

impl<'c, S: Scalar> Trainer<'c, S> {
    fn new(config: &'c TrainConfig, params: ModelParams<S>, strategy: Strategy) -> Self {
        let adam = Self::fresh_adam(config, &params);
        let grads = params.zeros_like();
        Self {
            config,
            params,
            adam,
            grads,
            metrics: RunMetrics::new(strategy),
        }
    }

    fn fresh_adam(config: &TrainConfig, params: &ModelParams<S>) -> AdamState<S> {
        let lens: Vec<usize> = params.matrices().iter().map(|m| m.as_slice().len()).collect();
        AdamState::new(config.adam, &lens)
    }

    fn train_batch(&mut self, examples: &[&Example], tag: DomainTag, epoch: usize, batch: usize) -> Result<(f64, f64, usize)> {
        for m in self.grads.matrices_mut() {
            m.fill(S::zero());
        }
        let tokens: usize = examples.iter().map(|e| e.predictions()).sum();
        if tokens == 0 {
            return Ok((0.0, 0.0, 0));
        }
        let scale = S::lit(1.0 / tokens as f64);
        let (mut objective, mut exact) = (0.0, 0.0);
        for ex in examples {
            let ctx = cast_slice::<S>(&ex.ctx);
            let l = accumulate_sequence(&self.params, &ctx, &ex.tokens, tag, Objective::Bound, scale, &mut self.grads)
                .map_err(|e| if e.is_numeric() { Error::NonFiniteLoss { epoch, batch } } else { e })?;
            objective += l.objective.as_f64();
            exact += l.exact.as_f64();
        }
        if !objective.is_finite() || !self.grads.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch });
        }
        if let Some(c) = self.config.clip {
            clip_grads(&mut self.grads, c);
        }
        let active = self.params.active_blocks(tag);
        let grads: Vec<&[S]> = self.grads.matrices().into_iter().map(|m| m.as_slice()).collect();
        let mut params: Vec<&mut [S]> = self.params.matrices_mut().into_iter().map(|m| m.as_mut_slice()).collect();
        self.adam.step_masked(&mut params, &grads, &active)?;
        Ok((objective, exact, tokens))
    }

    fn run_phase(&mut self, phase: Phase<'_>, observer: &mut dyn FnMut(&EpochRecord)) -> Result<()> {
        let mut rng = Rng::derive(self.config.seed, phase.stream);
        let first_epoch = self.metrics.epochs.len();
        let mut dev_losses = Vec::new();
        let mut best: Option<ModelParams<S>> = None;
        let bs = self.config.batch_size;
        for k in 0..phase.max_epochs {
            let epoch = first_epoch + k + 1;
            let src_batches = batches(&mut rng, phase.source.len(), bs);
            let tgt_batches = batches(&mut rng, phase.target.len(), bs);
            let schedule = epoch_schedule(&mut rng, src_batches.len(), tgt_batches.len());
            let (mut si, mut ti) = (0, 0);
            let mut sums = [(0.0, 0usize); 2];
            let (mut gap, mut gap_tokens) = (0.0, 0usize);
            for (b, &tag) in schedule.iter().enumerate() {
                let (data, idx) = match tag {
                    DomainTag::Source => {
                        si += 1;
                        (phase.source, &src_batches[si - 1])
                    }
                    DomainTag::Target => {
                        ti += 1;
                        (phase.target, &tgt_batches[ti - 1])
                    }
                };
                let exs: Vec<&Example> = idx.iter().map(|&i| &data[i]).collect();
                let (obj, exact, n) = self.train_batch(&exs, tag, epoch, b + 1)?;
                let slot = &mut sums[tag as usize];
                slot.0 += obj;
                slot.1 += n;
                gap += obj - exact;
                gap_tokens += n;
            }
            let mean = |(l, n): (f64, usize)| (n > 0).then(|| l / n as f64);
            let dev_loss = if phase.dev.is_empty() {
                None
            } else {
                Some(mean_nll(&self.params, phase.dev, phase.dev_tag)?)
            };
            let record = EpochRecord {
                epoch,
                phase: phase.name.to_string(),
                source_train_loss: mean(sums[DomainTag::Source as usize]),
                target_train_loss: mean(sums[DomainTag::Target as usize]),
                dev_loss,
                bound_gap_mean: (self.params.head_kind() == HeadKind::Augmented)
                    .then(|| mean((gap, gap_tokens)))
                    .flatten(),
            };
            observer(&record);
            self.metrics.epochs.push(record);
            let Some(d) = dev_loss else { continue };
            dev_losses.push(d);
            if best_epoch(&dev_losses) == Some(dev_losses.len()) {
                best = Some(self.params.clone());
            }
            if let StopDecision::Stop { .. } = early_stop(&dev_losses, self.config.patience) {
                break;
            }
        }
        if let (Some(b), Some(k)) = (best, best_epoch(&dev_losses)) {
            self.params = b;
            self.metrics.best_epoch = Some(first_epoch + k);
        } else if self.metrics.epochs.len() > first_epoch {
            self.metrics.best_epoch = Some(self.metrics.epochs.len());
        }
        Ok(())
    }
}

fn check_compatible(source: &DomainDataset, target: &DomainDataset) -> Result<usize> {
    if source.vocab.hash() != target.vocab.hash() {
        return Err(Error::VocabMismatch {
            expected: target.vocab.hash(),
            found: source.vocab.hash(),
        });
    }
    match (source.ctx_dim()?, target.ctx_dim()?) {
        (Some(a), Some(b)) if a != b => Err(Error::dim(format!("source ctx dimension {a} differs from target {b}"))),
        (Some(d), _) | (None, Some(d)) => Ok(d),
        (None, None) => Err(Error::MissingDataset("both datasets are empty".into())),
    }
}

fn require(ok: bool, what: &str, strategy: Strategy) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::MissingDataset(format!("{strategy} needs {what}")))
    }
}

/// Freshly initialized parameters for a strategy, drawn from the run seed.
pub fn init_params<S: Scalar>(config: &TrainConfig, vocab: usize, d_ctx: usize) -> Result<ModelParams<S>> {
    let mut rng = Rng::derive(config.seed, INIT_STREAM);
    ModelParams::init(vocab, config.cell_size, d_ctx, config.strategy.head(), config.init_scale, &mut rng)
}

pub fn run_strategy<S: Scalar>(config: &TrainConfig, source: &DomainDataset, target: &DomainDataset) -> Result<TrainOutcome<S>> {
    run_strategy_with(config, source, target, &mut |_| {})
}

/// Trains `config.strategy`, reporting each finished epoch to `observer`.
pub fn run_strategy_with<S: Scalar>(
    config: &TrainConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome<S>> {
    config.validate()?;
    let d_ctx = check_compatible(source, target)?;
    let strategy = config.strategy;
    let has_src = !source.train.is_empty();
    let has_tgt = !target.train.is_empty();
    match strategy {
        Strategy::SrcOnly => require(has_src, "source training data", strategy)?,
        Strategy::TgtOnly => require(has_tgt, "target training data", strategy)?,
        Strategy::FineTune => {
            require(has_src, "source training data", strategy)?;
            require(has_tgt || config.target_max_epochs == Some(0), "target training data", strategy)?;
        }
        Strategy::All | Strategy::Dual | Strategy::Proposed => {
            require(has_src || has_tgt, "training data in at least one domain", strategy)?
        }
    }
    let params = init_params::<S>(config, target.vocab.len(), d_ctx)?;
    let mut trainer = Trainer::new(config, params, strategy);
    let none: &[Example] = &[];
    let phase = |source, target, dev, dev_tag, name| Phase {
        source,
        target,
        dev,
        dev_tag,
        max_epochs: config.max_epochs,
        stream: TRAIN_STREAM,
        name,
    };
    match strategy {
        Strategy::SrcOnly => trainer.run_phase(
            phase(&source.train, none, &source.dev, DomainTag::Source, "source"),
            observer,
        )?,
        Strategy::TgtOnly => trainer.run_phase(phase(none, &target.train, &target.dev, DomainTag::Target, "joint"), observer)?,
        Strategy::All | Strategy::Dual | Strategy::Proposed => trainer.run_phase(
            phase(&source.train, &target.train, &target.dev, DomainTag::Target, "joint"),
            observer,
        )?,
        Strategy::FineTune => {
            trainer.run_phase(
                phase(&source.train, none, &source.dev, DomainTag::Source, "source"),
                observer,
            )?;
            return continue_trainer(trainer, target, observer);
        }
    }
    Ok(TrainOutcome {
        params: trainer.params,
        metrics: trainer.metrics,
    })
}

fn continue_trainer<S: Scalar>(
    mut trainer: Trainer<'_, S>,
    target: &DomainDataset,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome<S>> {
    let config = trainer.config;
    if config.reset_adam_on_finetune {
        trainer.adam = Trainer::fresh_adam(config, &trainer.params);
    }
    trainer.run_phase(
        Phase {
            source: &[],
            target: &target.train,
            dev: &target.dev,
            dev_tag: DomainTag::Target,
            max_epochs: config.target_max_epochs.unwrap_or(config.max_epochs),
            stream: TARGET_PHASE_STREAM,
            name: "target",
        },
        observer,
    )?;
    Ok(TrainOutcome {
        params: trainer.params,
        metrics: trainer.metrics,
    })
}

/// FineTune's target phase started from saved parameters (fresh Adam state).
/// With `reset_adam_on_finetune` set this reproduces the in-memory run exactly.
pub fn continue_on_target<S: Scalar>(
    config: &TrainConfig,
    params: ModelParams<S>,
    prior: RunMetrics,
    target: &DomainDataset,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome<S>> {
    config.validate()?;
    params.validate()?;
    if params.vocab_size() != target.vocab.len() {
        return Err(Error::dim(format!(
            "model vocabulary {} differs from dataset vocabulary {}",
            params.vocab_size(),
            target.vocab.len()
        )));
    }
    let mut trainer = Trainer::new(config, params, Strategy::FineTune);
    trainer.metrics = prior;
    trainer.adam = Trainer::fresh_adam(config, &trainer.params);
    continue_trainer(trainer, target, observer)
}
