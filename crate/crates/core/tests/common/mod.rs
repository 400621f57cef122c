#![allow(dead_code)]

use std::sync::Arc;

use domadapt::data::{DomainDataset, Example, Vocab, BOS, EOS};
use domadapt::decode::score_sentence;
use domadapt::math::{Matrix, Rng};
use domadapt::model::{DomainTag, HeadKind, ModelParams};
use domadapt::optim::AdamConfig;
use domadapt::train::{run_strategy, Strategy, TrainConfig};

pub fn random_model(rng: &mut Rng, vocab: usize, n: usize, d_ctx: usize, head: HeadKind, scale: f64) -> ModelParams<f64> {
    ModelParams::init(vocab, n, d_ctx, head, scale, rng).unwrap()
}

/// `[BOS, w…, EOS]` with `len` inner words drawn from the non-reserved ids.
pub fn random_caption(rng: &mut Rng, vocab: usize, len: usize) -> Vec<usize> {
    let mut t = vec![BOS];
    t.extend((0..len).map(|_| 4 + rng.below(vocab - 4)));
    t.push(EOS);
    t
}

pub fn random_example(rng: &mut Rng, vocab: usize, d_ctx: usize, max_words: usize) -> Example {
    let len = rng.below(max_words + 1);
    Example {
        ctx: rng.uniform_vec(-1.0, 1.0, d_ctx).unwrap(),
        tokens: random_caption(rng, vocab, len),
    }
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, rng.uniform_vec(-scale, scale, rows * cols).unwrap()).unwrap()
}

pub fn random_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    rng.uniform_vec(-scale, scale, n).unwrap()
}

pub const HEADS: [HeadKind; 3] = [HeadKind::Single, HeadKind::Dual, HeadKind::Augmented];

/// Every finished caption of at most `max_len` tokens, scored exactly as the
/// decoder does; best score wins, then the lexicographically smallest.
pub fn brute_force(p: &ModelParams<f64>, ctx: &[f64], max_len: usize) -> (Vec<usize>, f64) {
    let vocab = p.vocab_size();
    let words: Vec<usize> = (3..vocab).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in &frontier {
            let mut seq = prefix.clone();
            seq.push(EOS);
            let framed: Vec<usize> = std::iter::once(BOS).chain(seq.iter().copied()).collect();
            let s = score_sentence(p, ctx, &framed, DomainTag::Target).unwrap();
            let better = match &best {
                None => true,
                Some((b, bs)) => s > *bs || (s == *bs && seq < *b),
            };
            if better {
                best = Some((seq, s));
            }
            for &w in &words {
                let mut q = prefix.clone();
                q.push(w);
                next.push(q);
            }
        }
        frontier = next;
    }
    best.unwrap()
}

/// A model trained until it reproduces its captions.
pub fn memorizer(examples: &[Example], vocab: &Arc<Vocab>) -> ModelParams<f64> {
    let mut target = DomainDataset::empty(DomainTag::Target, vocab.clone());
    target.train = examples.to_vec();
    let source = DomainDataset::empty(DomainTag::Source, vocab.clone());
    let cfg = TrainConfig {
        strategy: Strategy::TgtOnly,
        cell_size: 32,
        batch_size: 4,
        max_epochs: 300,
        adam: AdamConfig {
            alpha: 0.02,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    run_strategy::<f64>(&cfg, &source, &target).unwrap().params
}
