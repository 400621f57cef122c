//! Output layers and their per-token losses.
//!
//! Three head designs share one trunk:
//!
//! * `Single`: one `|V|×n` matrix `W`, logits `W h`.
//! * `Dual`: a separate matrix per domain.
//! * `Augmented`: a general block `θ_g` plus one block per domain. The
//!   deployed weights are `w_d = θ_g + θ_d`. Training minimizes an upper
//!   bound on the cross-entropy of the composed weights,
//!
//!   ```text
//!   −θ_g,yᵀh + ½·lse(2θ_g h) − θ_d,yᵀh + ½·lse(2θ_d h)  ≥  −w_d,yᵀh + lse(w_d h)
//!   ```
//!
//!   which holds because `lse` is convex: `lse(a + b) = lse(½·2a + ½·2b)`.
//!   The gap vanishes when `θ_g = θ_d`, so the bound pulls the two blocks
//!   together the way the `‖θ_g − θ_d‖²` term does for feature augmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, softmax_in_place, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Source,
    Target,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Source => "source",
            DomainTag::Target => "target",
        }
    }
}

impl std::fmt::Display for DomainTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "source" | "src" => Ok(DomainTag::Source),
            "target" | "tgt" => Ok(DomainTag::Target),
            other => Err(Error::InvalidArgument(format!("unknown domain {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OutputHead<S = f64> {
    Single {
        w: Matrix<S>,
    },
    Dual {
        source: Matrix<S>,
        target: Matrix<S>,
    },
    Augmented {
        general: Matrix<S>,
        source: Matrix<S>,
        target: Matrix<S>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Single,
    Dual,
    Augmented,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Single => "single",
            HeadKind::Dual => "dual",
            HeadKind::Augmented => "augmented",
        }
    }
}

impl<S: Scalar> OutputHead<S> {
    pub fn zeros(kind: HeadKind, vocab: usize, n: usize) -> Self {
        let z = || Matrix::zeros(vocab, n);
        match kind {
            HeadKind::Single => OutputHead::Single { w: z() },
            HeadKind::Dual => OutputHead::Dual {
                source: z(),
                target: z(),
            },
            HeadKind::Augmented => OutputHead::Augmented {
                general: z(),
                source: z(),
                target: z(),
            },
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            OutputHead::Single { .. } => HeadKind::Single,
            OutputHead::Dual { .. } => HeadKind::Dual,
            OutputHead::Augmented { .. } => HeadKind::Augmented,
        }
    }

    pub fn matrices(&self) -> Vec<&Matrix<S>> {
        match self {
            OutputHead::Single { w } => vec![w],
            OutputHead::Dual { source, target } => vec![source, target],
            OutputHead::Augmented {
                general,
                source,
                target,
            } => vec![general, source, target],
        }
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix<S>> {
        match self {
            OutputHead::Single { w } => vec![w],
            OutputHead::Dual { source, target } => vec![source, target],
            OutputHead::Augmented {
                general,
                source,
                target,
            } => vec![general, source, target],
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        match self {
            OutputHead::Single { .. } => &["head.w"],
            OutputHead::Dual { .. } => &["head.source", "head.target"],
            OutputHead::Augmented { .. } => &["head.general", "head.source", "head.target"],
        }
    }

    /// Which head matrices a batch from `tag` touches, in `matrices()` order.
    pub fn active_blocks(&self, tag: DomainTag) -> Vec<bool> {
        let is_src = tag == DomainTag::Source;
        match self {
            OutputHead::Single { .. } => vec![true],
            OutputHead::Dual { .. } => vec![is_src, !is_src],
            OutputHead::Augmented { .. } => vec![true, is_src, !is_src],
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.matrices()[0].rows()
    }

    pub fn cell_size(&self) -> usize {
        self.matrices()[0].cols()
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.matrices()[0].shape();
        for m in self.matrices() {
            if m.shape() != shape {
                return Err(Error::dim(format!(
                    "head matrices disagree: {:?} vs {shape:?}",
                    m.shape()
                )));
            }
        }
        Ok(())
    }
}

fn check_token(y: usize, vocab: usize) -> Result<()> {
    if y >= vocab {
        return Err(Error::TokenOutOfRange { id: y, size: vocab });
    }
    Ok(())
}

fn check_head_dims<S: Scalar>(w: &Matrix<S>, h: &[S]) -> Result<()> {
    if w.cols() != h.len() {
        return Err(Error::dim(format!(
            "output matrix {:?} with hidden state of length {}",
            w.shape(),
            h.len()
        )));
    }
    Ok(())
}

/// Per-token cross-entropy `−(Wh)_y + lse(Wh)` with analytic gradients.
#[derive(Clone, Debug)]
pub struct CeGrad<S> {
    pub loss: S,
    pub dw: Matrix<S>,
    pub dh: Vec<S>,
}

/// Cross-entropy of `softmax(W h)` against `y`.
pub fn ce_loss<S: Scalar>(w: &Matrix<S>, h: &[S], y: usize) -> Result<CeGrad<S>> {
    check_head_dims(w, h)?;
    check_token(y, w.rows())?;
    let mut dw = w.zeros_like();
    let mut dh = vec![S::zero(); h.len()];
    let loss = ce_accumulate(w, h, y, S::one(), &mut dw, &mut dh)?;
    Ok(CeGrad { loss, dw, dh })
}

/// Adds `scale · ∂/∂(W, h)` of the cross-entropy into `dw`, `dh`; returns the loss.
pub(crate) fn ce_accumulate<S: Scalar>(
    w: &Matrix<S>,
    h: &[S],
    y: usize,
    scale: S,
    dw: &mut Matrix<S>,
    dh: &mut [S],
) -> Result<S> {
    let logits = w.matvec(h)?;
    let mut p = logits.clone();
    let lse = softmax_in_place(&mut p)?;
    let loss = lse - logits[y];
    p[y] -= S::one();
    p.iter_mut().for_each(|x| *x *= scale);
    dw.add_outer(&p, h);
    w.t_matvec_acc(&p, dh);
    Ok(loss)
}

/// One half of the augmented bound: `−θ_yᵀh + ½·lse(2θh)`.
///
/// The `½·lse(2·)` form is kept literally. Its gradient with respect to `θ`
/// is `(softmax(2θh) − e_y) hᵀ`.
pub(crate) fn half_bound_accumulate<S: Scalar>(
    theta: &Matrix<S>,
    h: &[S],
    y: usize,
    scale: S,
    dtheta: &mut Matrix<S>,
    dh: &mut [S],
) -> Result<(S, Vec<S>)> {
    let logits = theta.matvec(h)?;
    let two = S::lit(2.0);
    let half = S::lit(0.5);
    let mut p: Vec<S> = logits.iter().map(|&z| two * z).collect();
    let lse2 = softmax_in_place(&mut p)?;
    let loss = half * lse2 - logits[y];
    p[y] -= S::one();
    p.iter_mut().for_each(|x| *x *= scale);
    dtheta.add_outer(&p, h);
    theta.t_matvec_acc(&p, dh);
    Ok((loss, logits))
}

#[derive(Clone, Debug)]
pub struct AugmentedGrad<S> {
    pub loss: S,
    pub dtheta_g: Matrix<S>,
    pub dtheta_d: Matrix<S>,
    pub dh: Vec<S>,
}

/// Upper-bound loss for the decomposed weights `θ_g + θ_d`.
pub fn augmented_loss<S: Scalar>(
    theta_g: &Matrix<S>,
    theta_d: &Matrix<S>,
    h: &[S],
    y: usize,
) -> Result<AugmentedGrad<S>> {
    theta_g.check_same_shape(theta_d)?;
    check_head_dims(theta_g, h)?;
    check_token(y, theta_g.rows())?;
    let mut dtheta_g = theta_g.zeros_like();
    let mut dtheta_d = theta_d.zeros_like();
    let mut dh = vec![S::zero(); h.len()];
    let (lg, _) = half_bound_accumulate(theta_g, h, y, S::one(), &mut dtheta_g, &mut dh)?;
    let (ld, _) = half_bound_accumulate(theta_d, h, y, S::one(), &mut dtheta_d, &mut dh)?;
    Ok(AugmentedGrad {
        loss: lg + ld,
        dtheta_g,
        dtheta_d,
        dh,
    })
}

/// `augmented_loss − ce_loss(θ_g + θ_d)`; non-negative up to rounding.
pub fn bound_gap<S: Scalar>(theta_g: &Matrix<S>, theta_d: &Matrix<S>, h: &[S], y: usize) -> Result<S> {
    theta_g.check_same_shape(theta_d)?;
    check_head_dims(theta_g, h)?;
    check_token(y, theta_g.rows())?;
    let zg = theta_g.matvec(h)?;
    let zd = theta_d.matvec(h)?;
    gap_from_logits(&zg, &zd, y)
}

/// Gap computed from the two blocks' logits `θ_g h` and `θ_d h`.
pub(crate) fn gap_from_logits<S: Scalar>(zg: &[S], zd: &[S], y: usize) -> Result<S> {
    let half = S::lit(0.5);
    let two = S::lit(2.0);
    let g2: Vec<S> = zg.iter().map(|&z| two * z).collect();
    let d2: Vec<S> = zd.iter().map(|&z| two * z).collect();
    let sum: Vec<S> = zg.iter().zip(zd).map(|(&a, &b)| a + b).collect();
    let bound = half * log_sum_exp(&g2)? - zg[y] + half * log_sum_exp(&d2)? - zd[y];
    let exact = log_sum_exp(&sum)? - sum[y];
    Ok(bound - exact)
}

/// Deployed per-domain weights `(θ_g + θ_s, θ_g + θ_t)`.
pub fn compose_weights<S: Scalar>(head: &OutputHead<S>) -> Result<(Matrix<S>, Matrix<S>)> {
    match head {
        OutputHead::Augmented {
            general,
            source,
            target,
        } => Ok((general.add(source)?, general.add(target)?)),
        other => Err(Error::HeadVariant {
            expected: "augmented",
            found: other.kind().as_str(),
        }),
    }
}

/// The matrix whose product with `h` gives evaluation logits for `tag`.
/// Borrowed for Single/Dual, composed (a fresh sum) for Augmented.
pub fn eval_weights<S: Scalar>(head: &OutputHead<S>, tag: DomainTag) -> Result<std::borrow::Cow<'_, Matrix<S>>> {
    use std::borrow::Cow;
    Ok(match head {
        OutputHead::Single { w } => Cow::Borrowed(w),
        OutputHead::Dual { source, target } => Cow::Borrowed(match tag {
            DomainTag::Source => source,
            DomainTag::Target => target,
        }),
        OutputHead::Augmented {
            general,
            source,
            target,
        } => Cow::Owned(general.add(match tag {
            DomainTag::Source => source,
            DomainTag::Target => target,
        })?),
    })
}

/// Logits of `head` for a hidden state.
///
/// Augmented heads only serve evaluation, through the composed weights;
/// their training objective is [`augmented_loss`].
pub fn head_logits<S: Scalar>(head: &OutputHead<S>, tag: DomainTag, h: &[S], mode: Mode) -> Result<Vec<S>> {
    if mode == Mode::Train && head.kind() == HeadKind::Augmented {
        return Err(Error::AugmentedTrainLogits);
    }
    let w = eval_weights(head, tag)?;
    check_head_dims(&w, h)?;
    w.matvec(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;

    fn rand_matrix(rows: usize, cols: usize, rng: &mut Rng, s: f64) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| rng.uniform(-s, s).unwrap())
    }

    #[test]
    fn zero_weights_give_uniform_loss() {
        let w = Matrix::<f64>::zeros(7, 3);
        let g = ce_loss(&w, &[0.5, -0.2, 0.9], 4).unwrap();
        assert!((g.loss - 7f64.ln()).abs() < 1e-15);
        assert!(g.dh.iter().all(|&x| x == 0.0));
        let a = augmented_loss(&w, &w, &[0.5, -0.2, 0.9], 2).unwrap();
        assert!((a.loss - 7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn binary_logistic_form() {
        // logits (a, b) = (0.7, -1.3) via h = [1], W = [[0.7], [-1.3]].
        let w = Matrix::from_vec(2, 1, vec![0.7, -1.3]).unwrap();
        let g = ce_loss(&w, &[1.0], 0).unwrap();
        let expected = (1.0 + (-1.3f64 - 0.7).exp()).ln();
        assert!((g.loss - expected).abs() < 1e-15);
    }

    #[test]
    fn token_out_of_range() {
        let w = Matrix::<f64>::zeros(3, 2);
        assert!(matches!(
            ce_loss(&w, &[0.0, 0.0], 3),
            Err(Error::TokenOutOfRange { id: 3, size: 3 })
        ));
        assert!(augmented_loss(&w, &w, &[0.0, 0.0], 9).is_err());
        assert!(ce_loss(&w, &[0.0], 0).is_err());
    }

    #[test]
    fn equal_blocks_make_the_bound_tight() {
        let mut rng = Rng::new(4);
        for _ in 0..20 {
            let theta = rand_matrix(9, 4, &mut rng, 1.0);
            let h = rng.uniform_vec(-1.0, 1.0, 4).unwrap();
            let y = rng.below(9);
            let aug = augmented_loss(&theta, &theta, &h, y).unwrap();
            let mut doubled = theta.clone();
            doubled.scale(2.0);
            let ce = ce_loss(&doubled, &h, y).unwrap();
            assert!((aug.loss - ce.loss).abs() < 1e-10);
            assert!(bound_gap(&theta, &theta, &h, y).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn compose_requires_augmented() {
        let single = OutputHead::<f64>::zeros(HeadKind::Single, 4, 2);
        assert!(matches!(
            compose_weights(&single),
            Err(Error::HeadVariant { .. })
        ));
        let mut rng = Rng::new(8);
        let head = OutputHead::Augmented {
            general: rand_matrix(4, 2, &mut rng, 1.0),
            source: rand_matrix(4, 2, &mut rng, 1.0),
            target: Matrix::zeros(4, 2),
        };
        let (ws, wt) = compose_weights(&head).unwrap();
        if let OutputHead::Augmented { general, source, .. } = &head {
            assert_eq!(&wt, general);
            for ((&w, &g), &s) in ws.as_slice().iter().zip(general.as_slice()).zip(source.as_slice()) {
                assert_eq!(w - g - s, 0.0);
            }
        }
    }

    #[test]
    fn cancelling_blocks_give_uniform_predictions() {
        let mut rng = Rng::new(2);
        let g = rand_matrix(5, 3, &mut rng, 1.0);
        let mut neg = g.clone();
        neg.scale(-1.0);
        let head = OutputHead::Augmented {
            general: g,
            source: neg,
            target: Matrix::zeros(5, 3),
        };
        let logits = head_logits(&head, DomainTag::Source, &[0.3, 0.1, -0.8], Mode::Eval).unwrap();
        assert!(logits.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn augmented_train_logits_refused() {
        let head = OutputHead::<f64>::zeros(HeadKind::Augmented, 4, 2);
        assert!(matches!(
            head_logits(&head, DomainTag::Target, &[0.0, 0.0], Mode::Train),
            Err(Error::AugmentedTrainLogits)
        ));
        let single = OutputHead::<f64>::zeros(HeadKind::Single, 4, 2);
        assert!(head_logits(&single, DomainTag::Target, &[0.0, 0.0], Mode::Train).is_ok());
    }

    #[test]
    fn dual_head_matches_single_path() {
        let mut rng = Rng::new(13);
        let ws = rand_matrix(6, 3, &mut rng, 1.0);
        let wt = rand_matrix(6, 3, &mut rng, 1.0);
        let h = rng.uniform_vec(-1.0, 1.0, 3).unwrap();
        let dual = OutputHead::Dual {
            source: ws.clone(),
            target: wt.clone(),
        };
        let single = OutputHead::Single { w: ws.clone() };
        assert_eq!(
            head_logits(&dual, DomainTag::Source, &h, Mode::Eval).unwrap(),
            head_logits(&single, DomainTag::Target, &h, Mode::Eval).unwrap()
        );
        let same = OutputHead::Dual {
            source: ws.clone(),
            target: ws,
        };
        assert_eq!(
            head_logits(&same, DomainTag::Source, &h, Mode::Eval).unwrap(),
            head_logits(&same, DomainTag::Target, &h, Mode::Eval).unwrap()
        );
        let aug = OutputHead::Augmented {
            general: wt.clone(),
            source: Matrix::zeros(6, 3),
            target: Matrix::zeros(6, 3),
        };
        assert_eq!(
            head_logits(&aug, DomainTag::Target, &h, Mode::Eval).unwrap(),
            wt.matvec(&h).unwrap()
        );
    }
}
