use crate::math::Rng;
use crate::model::DomainTag;

/// Batch origins for one epoch: `n_source` Source tags and `n_target` Target
/// tags in seeded random order, so every batch of both domains is used once.
pub fn epoch_schedule(rng: &mut Rng, n_source: usize, n_target: usize) -> Vec<DomainTag> {
    let mut tags = Vec::with_capacity(n_source + n_target);
    tags.extend(std::iter::repeat_n(DomainTag::Source, n_source));
    tags.extend(std::iter::repeat_n(DomainTag::Target, n_target));
    rng.shuffle(&mut tags);
    tags
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    /// Stop and restore the checkpoint from `best_epoch` (1-based).
    Stop { best_epoch: usize },
}

/// 1-based epoch with the lowest dev loss; earliest wins ties.
pub fn best_epoch(dev_losses: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &l) in dev_losses.iter().enumerate() {
        match best {
            Some((_, b)) if l >= b => {}
            _ => best = Some((i, l)),
        }
    }
    best.map(|(i, _)| i + 1)
}

/// Patience-based early stopping: stop once the best dev loss is `patience`
/// epochs old.
pub fn early_stop(dev_losses: &[f64], patience: usize) -> StopDecision {
    match best_epoch(dev_losses) {
        Some(best) if dev_losses.len() - best >= patience.max(1) => StopDecision::Stop { best_epoch: best },
        _ => StopDecision::Continue,
    }
}
