//! Qualitative behaviour of the decomposed linear classifier.

use domadapt::feataug::{
    accuracy, aug_objective, svm_objective, train_linear, train_svm, LabeledPoint, LinearAugModel,
};
use domadapt::math::{norm_sq, Rng};

fn points(rng: &mut Rng, w: &[f64], n: usize, margin: f64) -> Vec<LabeledPoint> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: Vec<f64> = (0..w.len()).map(|_| rng.normal()).collect();
        let s: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
        if s.abs() >= margin {
            out.push(LabeledPoint {
                x,
                y: s.signum(),
            });
        }
    }
    out
}

fn diff_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[test]
fn heavy_regularization_shrinks_all_parts() {
    let mut rng = Rng::new(1);
    let init = LinearAugModel::random(6, 5.0, 1.0, &mut rng).unwrap();
    let w = [1.0, -1.0, 0.5, 0.0, 2.0, 0.3];
    let (s, t) = (points(&mut rng, &w, 40, 0.0), points(&mut rng, &w, 40, 0.0));
    let fit = train_linear(&init, &s, &t, 200, 0.01, false).unwrap();
    for (a, b) in [
        (&fit.last.theta_g, &init.theta_g),
        (&fit.last.theta_s, &init.theta_s),
        (&fit.last.theta_t, &init.theta_t),
    ] {
        assert!(norm_sq(a) < norm_sq(b));
    }
}

#[test]
fn symmetric_domains_pull_domain_parts_together() {
    for seed in 0..3 {
        let mut rng = Rng::new(10 + seed);
        let init = LinearAugModel::random(5, 0.05, 1.0, &mut rng).unwrap();
        let data = points(&mut rng, &[1.0, 2.0, -1.0, 0.0, 0.5], 60, 0.1);
        let fit = train_linear(&init, &data, &data, 500, 0.02, false).unwrap();
        let before = diff_sq(&init.theta_s, &init.theta_t);
        let after = diff_sq(&fit.last.theta_s, &fit.last.theta_t);
        assert!(after < before, "seed {seed}: {after} vs {before}");
    }
}

#[test]
fn separable_data_is_fit_exactly() {
    let mut rng = Rng::new(3);
    let w = [0.8, -1.2, 0.4, 1.0];
    let shift = [0.8, -1.0, 0.6, 1.2];
    let s = points(&mut rng, &w, 50, 0.5);
    let t = points(&mut rng, &shift, 50, 0.5);
    let init = LinearAugModel::zeros(4, 1e-4).unwrap();
    let fit = train_linear(&init, &s, &t, 3000, 0.05, false).unwrap();
    assert_eq!(accuracy(&fit.last.w_s(), &s), 1.0);
    assert_eq!(accuracy(&fit.last.w_t(), &t), 1.0);
}

#[test]
fn averaged_objective_does_not_increase() {
    let mut rng = Rng::new(4);
    let init = LinearAugModel::random(5, 0.1, 1.0, &mut rng).unwrap();
    let w = [1.0, 0.0, -1.0, 0.5, 0.2];
    let (s, t) = (points(&mut rng, &w, 30, 0.0), points(&mut rng, &w, 30, 0.0));
    let fit = train_linear(&init, &s, &t, 400, 0.01, false).unwrap();
    let start = aug_objective(&init, &s, &t).unwrap();
    assert!(aug_objective(&fit.averaged, &s, &t).unwrap() <= start);
    assert!(fit.objectives.iter().all(|&o| o >= 0.0));
    assert_eq!(fit.objectives.len(), 401);
}

#[test]
fn frozen_general_part_separates_into_two_svms() {
    for seed in 0..5 {
        let mut rng = Rng::new(100 + seed);
        let dim = 3 + rng.below(4);
        let lambda = 0.05;
        let mut init = LinearAugModel::random(dim, lambda, 0.5, &mut rng).unwrap();
        init.theta_g = vec![0.0; dim];
        let w: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let (s, t) = (points(&mut rng, &w, 25, 0.0), points(&mut rng, &w, 35, 0.0));
        let joint = train_linear(&init, &s, &t, 300, 0.02, true).unwrap();
        assert_eq!(joint.last.theta_g, vec![0.0; dim]);
        let ws = train_svm(&init.theta_s, &s, lambda, 300, 0.02).unwrap();
        let wt = train_svm(&init.theta_t, &t, lambda, 300, 0.02).unwrap();
        let separate = svm_objective(&ws, &s, lambda).unwrap() + svm_objective(&wt, &t, lambda).unwrap();
        let together = aug_objective(&joint.last, &s, &t).unwrap();
        assert!((separate - together).abs() < 1e-6, "seed {seed}: {separate} vs {together}");
    }
}
