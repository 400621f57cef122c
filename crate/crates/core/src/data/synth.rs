//! Synthetic two-domain caption corpora.
//!
//! Each domain draws captions from a mixture of latent topics. Topics are
//! shared between domains over a common word block; each domain also owns an
//! exclusive word block and its own prior over topics. An example's context
//! vector is a fixed linear image of its topic mixture plus Gaussian noise, so
//! the context carries real information about the caption.
//!
//! Words are drawn as follows: with probability `bigram_bias` the next word is
//! the fixed successor of the previous one; otherwise a topic is sampled from
//! the example's mixture and the word comes from that topic's distribution over
//! the domain-exclusive block (probability `exclusive_rate`) or the shared block.
//!
//! Every split is generated from its own RNG stream keyed by `(seed, domain,
//! split)`, so changing one split's size leaves the others untouched and a
//! smaller training set is always a prefix of a larger one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::dataset::{DomainDataset, Example, Split};
use crate::data::vocab::{Vocab, BOS, EOS, RESERVED};
use crate::error::{Error, Result};
use crate::math::Rng;
use crate::model::DomainTag;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub shared_vocab: usize,
    pub source_exclusive: usize,
    pub target_exclusive: usize,
    pub source_train: usize,
    pub source_dev: usize,
    pub source_test: usize,
    pub target_train: usize,
    pub target_dev: usize,
    pub target_test: usize,
    /// Caption length range in words, inclusive, excluding BOS/EOS.
    pub min_len: usize,
    pub max_len: usize,
    pub d_ctx: usize,
    pub topics: usize,
    /// 0 gives both domains the same topic prior; 1 gives each its own.
    pub domain_shift: f64,
    pub exclusive_rate: f64,
    pub bigram_bias: f64,
    pub ctx_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            shared_vocab: 60,
            source_exclusive: 30,
            target_exclusive: 30,
            source_train: 5000,
            source_dev: 500,
            source_test: 500,
            target_train: 300,
            target_dev: 200,
            target_test: 300,
            min_len: 4,
            max_len: 10,
            d_ctx: 16,
            topics: 8,
            domain_shift: 0.7,
            exclusive_rate: 0.3,
            bigram_bias: 0.35,
            ctx_noise: 0.1,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.shared_vocab + self.source_exclusive + self.target_exclusive == 0 {
            return bad("synthetic vocabulary is empty".into());
        }
        for (tag, excl, total) in [
            ("source", self.source_exclusive, self.source_train + self.source_dev + self.source_test),
            ("target", self.target_exclusive, self.target_train + self.target_dev + self.target_test),
        ] {
            if total > 0 && self.shared_vocab + excl == 0 {
                return bad(format!("{tag} domain has examples but no words"));
            }
        }
        if self.min_len > self.max_len {
            return bad(format!("min_len {} exceeds max_len {}", self.min_len, self.max_len));
        }
        if self.topics == 0 || self.d_ctx == 0 {
            return bad("topics and d_ctx must be positive".into());
        }
        for (name, v) in [
            ("domain_shift", self.domain_shift),
            ("exclusive_rate", self.exclusive_rate),
            ("bigram_bias", self.bigram_bias),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if !(self.ctx_noise >= 0.0 && self.ctx_noise.is_finite()) {
            return bad(format!("ctx_noise = {} must be finite and non-negative", self.ctx_noise));
        }
        Ok(())
    }

    fn sizes(&self, tag: DomainTag) -> [usize; 3] {
        match tag {
            DomainTag::Source => [self.source_train, self.source_dev, self.source_test],
            DomainTag::Target => [self.target_train, self.target_dev, self.target_test],
        }
    }

    fn exclusive(&self, tag: DomainTag) -> usize {
        match tag {
            DomainTag::Source => self.source_exclusive,
            DomainTag::Target => self.target_exclusive,
        }
    }

    /// Vocabulary: shared words `c00…`, then source-only `s00…`, then target-only `t00…`.
    pub fn vocab(&self) -> Vocab {
        let width = |n: usize| n.saturating_sub(1).to_string().len().max(2);
        let mut names = Vec::new();
        for (prefix, n) in [
            ("c", self.shared_vocab),
            ("s", self.source_exclusive),
            ("t", self.target_exclusive),
        ] {
            let w = width(n);
            names.extend((0..n).map(|i| format!("{prefix}{i:0w$}")));
        }
        Vocab::from_tokens(names).expect("generated names are unique")
    }
}

const WORLD_STREAM: u64 = 0x5eed_0001;

fn split_stream(tag: DomainTag, split: Split) -> u64 {
    let d = match tag {
        DomainTag::Source => 1,
        DomainTag::Target => 2,
    };
    let s = match split {
        Split::Train => 1,
        Split::Dev => 2,
        Split::Test => 3,
    };
    0x5eed_1000 + d * 16 + s
}

/// Heavy-tailed random distribution: normalized cubes of unit exponentials.
fn peaked(rng: &mut Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.exponential().powi(3)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

struct DomainModel {
    prior: Vec<f64>,
    /// Per-topic distribution over this domain's exclusive block.
    exclusive_topics: Vec<Vec<f64>>,
    exclusive_successor: Vec<usize>,
    /// First vocabulary id of the exclusive block.
    exclusive_base: usize,
}

/// Structure shared by both domains.
struct World {
    shared_topics: Vec<Vec<f64>>,
    shared_successor: Vec<usize>,
    projection: Vec<Vec<f64>>,
    source: DomainModel,
    target: DomainModel,
}

const SHARED_BASE: usize = RESERVED.len();

impl World {
    fn new(spec: &SynthSpec) -> Self {
        let mut rng = Rng::derive(spec.seed, WORLD_STREAM);
        let k = spec.topics;
        let shared_topics = (0..k).map(|_| peaked(&mut rng, spec.shared_vocab)).collect();
        let shared_successor = (0..spec.shared_vocab).map(|_| rng.below(spec.shared_vocab)).collect();
        let projection = (0..spec.d_ctx).map(|_| (0..k).map(|_| rng.normal()).collect()).collect();
        let domain = |excl: usize, base: usize, rng: &mut Rng| {
            let tilt = peaked(rng, k);
            let prior = tilt
                .iter()
                .map(|&t| (1.0 - spec.domain_shift) / k as f64 + spec.domain_shift * t)
                .collect();
            DomainModel {
                prior,
                exclusive_topics: (0..k).map(|_| peaked(rng, excl)).collect(),
                exclusive_successor: (0..excl).map(|_| rng.below(excl)).collect(),
                exclusive_base: base,
            }
        };
        let source = domain(spec.source_exclusive, SHARED_BASE + spec.shared_vocab, &mut rng);
        let target = domain(
            spec.target_exclusive,
            SHARED_BASE + spec.shared_vocab + spec.source_exclusive,
            &mut rng,
        );
        Self {
            shared_topics,
            shared_successor,
            projection,
            source,
            target,
        }
    }

    fn domain(&self, tag: DomainTag) -> &DomainModel {
        match tag {
            DomainTag::Source => &self.source,
            DomainTag::Target => &self.target,
        }
    }

    fn successor(&self, dm: &DomainModel, word: usize) -> usize {
        let shared_end = SHARED_BASE + self.shared_successor.len();
        if word < shared_end {
            SHARED_BASE + self.shared_successor[word - SHARED_BASE]
        } else {
            dm.exclusive_base + dm.exclusive_successor[word - dm.exclusive_base]
        }
    }

    fn example(&self, spec: &SynthSpec, tag: DomainTag, rng: &mut Rng) -> Example {
        let dm = self.domain(tag);
        let excl = spec.exclusive(tag);
        let mixture: Vec<f64> = {
            let w: Vec<f64> = dm.prior.iter().map(|&p| p * rng.exponential().powi(2)).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        };
        let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
        let mut tokens = Vec::with_capacity(len + 2);
        tokens.push(BOS);
        let mut prev: Option<usize> = None;
        for _ in 0..len {
            let word = match prev {
                Some(p) if rng.next_f64() < spec.bigram_bias => self.successor(dm, p),
                _ => {
                    let topic = rng.categorical(&mixture);
                    let use_excl =
                        excl > 0 && (spec.shared_vocab == 0 || rng.next_f64() < spec.exclusive_rate);
                    if use_excl {
                        dm.exclusive_base + rng.categorical(&dm.exclusive_topics[topic])
                    } else {
                        SHARED_BASE + rng.categorical(&self.shared_topics[topic])
                    }
                }
            };
            tokens.push(word);
            prev = Some(word);
        }
        tokens.push(EOS);
        let ctx = self
            .projection
            .iter()
            .map(|row| {
                let clean: f64 = row.iter().zip(&mixture).map(|(a, m)| a * m).sum();
                clean + spec.ctx_noise * rng.normal()
            })
            .collect();
        Example { ctx, tokens }
    }
}

/// Generates the source and target datasets over one shared vocabulary.
pub fn synth_generate(spec: &SynthSpec) -> Result<(DomainDataset, DomainDataset)> {
    spec.validate()?;
    let vocab = Arc::new(spec.vocab());
    let world = World::new(spec);
    let make = |tag: DomainTag| {
        let mut ds = DomainDataset::empty(tag, vocab.clone());
        for (split, &n) in Split::ALL.iter().zip(spec.sizes(tag).iter()) {
            let mut rng = Rng::derive(spec.seed, split_stream(tag, *split));
            let examples = (0..n).map(|_| world.example(spec, tag, &mut rng)).collect();
            match split {
                Split::Train => ds.train = examples,
                Split::Dev => ds.dev = examples,
                Split::Test => ds.test = examples,
            }
        }
        ds
    };
    Ok((make(DomainTag::Source), make(DomainTag::Target)))
}

/// Token frequencies over a split's caption words (ids indexed directly).
pub fn unigram_counts(examples: &[Example], vocab_size: usize) -> Vec<usize> {
    let mut counts = vec![0; vocab_size];
    for ex in examples {
        for &w in ex.words() {
            counts[w] += 1;
        }
    }
    counts
}

/// The `k` most frequent word ids, ties broken by id.
pub fn top_tokens(examples: &[Example], vocab_size: usize, k: usize) -> Vec<(usize, usize)> {
    let counts = unigram_counts(examples, vocab_size);
    let mut ranked: Vec<(usize, usize)> = counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            source_train: 200,
            source_dev: 20,
            source_test: 20,
            target_train: 50,
            target_dev: 10,
            target_test: 10,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_generate(&small()).unwrap();
        let b = synth_generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&SynthSpec { seed: 2, ..small() }).unwrap();
        assert_ne!(a.0.train, c.0.train);
    }

    #[test]
    fn zero_vocab_is_an_error() {
        let spec = SynthSpec {
            shared_vocab: 0,
            source_exclusive: 0,
            target_exclusive: 0,
            ..small()
        };
        assert!(synth_generate(&spec).is_err());
    }

    #[test]
    fn train_prefix_is_stable() {
        let (_, big) = synth_generate(&SynthSpec { target_train: 80, ..small() }).unwrap();
        let (_, little) = synth_generate(&small()).unwrap();
        assert_eq!(&big.train[..50], &little.train[..]);
        assert_eq!(big.dev, little.dev);
        assert_eq!(big.test, little.test);
    }

    #[test]
    fn captions_are_framed_and_sized() {
        let spec = small();
        let (s, t) = synth_generate(&spec).unwrap();
        for ex in s.train.iter().chain(&t.train) {
            assert_eq!(ex.tokens[0], BOS);
            assert_eq!(*ex.tokens.last().unwrap(), EOS);
            assert!((spec.min_len..=spec.max_len).contains(&ex.words().len()));
            assert_eq!(ex.ctx.len(), spec.d_ctx);
        }
    }
}
