//! Finite-difference checks of every analytic gradient in the model.

mod common;

use common::*;
use domadapt::feataug::{aug_gradient, LabeledPoint, LinearAugModel};
use domadapt::math::{grad_check, Rng, DEFAULT_STEP};
use domadapt::model::{
    accumulate_sequence, augmented_loss, backward, ce_loss, forward, DomainTag, HeadKind, ModelParams, Objective,
};

const TOL: f64 = 1e-5;

/// Summed objective of a few sequences as a function of the flat parameters.
fn model_check(params: &ModelParams<f64>, data: &[(Vec<f64>, Vec<usize>)], tag: DomainTag, obj: Objective) -> f64 {
    let x = params.flatten();
    grad_check(
        |flat: &[f64]| {
            let mut p = params.clone();
            p.load_flat(flat)?;
            let mut g = p.zeros_like();
            let mut total = 0.0;
            for (ctx, tokens) in data {
                total += accumulate_sequence(&p, ctx, tokens, tag, obj, 1.0, &mut g)?.objective;
            }
            Ok((total, g.flatten()))
        },
        &x,
        DEFAULT_STEP,
    )
    .unwrap()
}

fn sample(seed: u64) -> (ModelParams<f64>, Vec<(Vec<f64>, Vec<usize>)>, HeadKind) {
    let mut rng = Rng::new(seed);
    let vocab = 5 + rng.below(28);
    let n = 2 + rng.below(15);
    let d = 1 + rng.below(6);
    let head = HEADS[seed as usize % 3];
    let p = random_model(&mut rng, vocab, n, d, head, 0.5);
    let data = (0..2)
        .map(|_| {
            let ex = random_example(&mut rng, vocab, d, 4);
            (ex.ctx, ex.tokens)
        })
        .collect();
    (p, data, head)
}

#[test]
fn full_model_all_heads_and_objectives() {
    for seed in 0..24 {
        let (p, data, head) = sample(seed);
        for tag in [DomainTag::Source, DomainTag::Target] {
            let mut objectives = vec![Objective::Exact];
            if head == HeadKind::Augmented {
                objectives.push(Objective::Bound);
            }
            for obj in objectives {
                let err = model_check(&p, &data, tag, obj);
                assert!(err < TOL, "seed {seed} {head:?} {tag} {obj:?}: {err:e}");
            }
        }
    }
}

#[test]
fn backward_matches_linear_functional_of_logits() {
    for seed in 100..120 {
        let (p, data, _) = sample(seed);
        let (ctx, tokens) = &data[0];
        let mut rng = Rng::new(seed + 7);
        let r: Vec<Vec<f64>> = (0..tokens.len() - 1).map(|_| random_vec(&mut rng, p.vocab_size(), 1.0)).collect();
        let err = grad_check(
            |flat: &[f64]| {
                let mut q = p.clone();
                q.load_flat(flat)?;
                let (logits, tape) = forward(&q, ctx, tokens, DomainTag::Target)?;
                let v: f64 = logits.iter().zip(&r).map(|(l, w)| l.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).sum();
                Ok((v, backward(&q, &tape, &r, DomainTag::Target)?.flatten()))
            },
            &p.flatten(),
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn head_losses_against_weights_and_hidden_state() {
    for seed in 0..20 {
        let mut rng = Rng::new(1000 + seed);
        let (v, n) = (2 + rng.below(31), 2 + rng.below(15));
        let g = random_matrix(&mut rng, v, n, 1.0);
        let d = random_matrix(&mut rng, v, n, 1.0);
        let h = random_vec(&mut rng, n, 1.0);
        let y = rng.below(v);
        let split = |x: &[f64]| {
            let a = domadapt::math::Matrix::from_vec(v, n, x[..v * n].to_vec()).unwrap();
            let b = domadapt::math::Matrix::from_vec(v, n, x[v * n..2 * v * n].to_vec()).unwrap();
            (a, b, x[2 * v * n..].to_vec())
        };
        let mut x = g.as_slice().to_vec();
        x.extend_from_slice(d.as_slice());
        x.extend_from_slice(&h);
        let aug = grad_check(
            |x: &[f64]| {
                let (a, b, h) = split(x);
                let r = augmented_loss(&a, &b, &h, y)?;
                let mut grad = r.dtheta_g.into_vec();
                grad.extend(r.dtheta_d.into_vec());
                grad.extend(r.dh);
                Ok((r.loss, grad))
            },
            &x,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(aug < TOL, "augmented seed {seed}: {aug:e}");
        let mut x = g.as_slice().to_vec();
        x.extend_from_slice(&h);
        let ce = grad_check(
            |x: &[f64]| {
                let w = domadapt::math::Matrix::from_vec(v, n, x[..v * n].to_vec())?;
                let r = ce_loss(&w, &x[v * n..], y)?;
                let mut grad = r.dw.into_vec();
                grad.extend(r.dh);
                Ok((r.loss, grad))
            },
            &x,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(ce < TOL, "ce seed {seed}: {ce:e}");
    }
}

#[test]
fn hinge_model_away_from_kinks() {
    for seed in 0..20 {
        let mut rng = Rng::new(2000 + seed);
        let dim = 1 + rng.below(10);
        let m = LinearAugModel::random(dim, 0.1 + rng.next_f64(), 1.0, &mut rng).unwrap();
        let mut pts = |k: usize| -> Vec<LabeledPoint> {
            (0..k)
                .map(|_| LabeledPoint {
                    x: random_vec(&mut rng, dim, 2.0),
                    y: if rng.next_f64() < 0.5 { -1.0 } else { 1.0 },
                })
                .collect()
        };
        let (s, t) = (pts(7), pts(5));
        let pack = |m: &LinearAugModel| [m.theta_g.clone(), m.theta_s.clone(), m.theta_t.clone()].concat();
        let err = grad_check(
            |x: &[f64]| {
                let mm = LinearAugModel {
                    theta_g: x[..dim].to_vec(),
                    theta_s: x[dim..2 * dim].to_vec(),
                    theta_t: x[2 * dim..].to_vec(),
                    lambda: m.lambda,
                };
                let (v, g, gs, gt) = aug_gradient(&mm, &s, &t)?;
                Ok((v, [g, gs, gt].concat()))
            },
            &pack(&m),
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn single_precision_gradients_roughly_agree() {
    let (p, data, _) = sample(3);
    let p32 = p.cast::<f32>();
    let mut g64 = p.zeros_like();
    let mut g32 = p32.zeros_like();
    for (ctx, tokens) in &data {
        accumulate_sequence(&p, ctx, tokens, DomainTag::Source, Objective::Bound, 1.0, &mut g64).unwrap();
        let c32: Vec<f32> = ctx.iter().map(|&x| x as f32).collect();
        accumulate_sequence(&p32, &c32, tokens, DomainTag::Source, Objective::Bound, 1.0, &mut g32).unwrap();
    }
    for (a, b) in g64.flatten().iter().zip(g32.flatten()) {
        assert!((a - b as f64).abs() < 1e-4 * (1.0 + a.abs()));
    }
}
