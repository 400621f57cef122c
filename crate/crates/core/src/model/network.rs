//! Context-conditioned LSTM caption generator.
//!
//! Step 0 consumes `u_0 = W0 · ctx` from a zero state. Step `t ≥ 1` consumes
//! the embedding of token `t−1` and its hidden state predicts token `t`. A
//! sequence `[BOS, y_1, …, y_k, EOS]` therefore yields `k + 1` predictions.

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, Matrix, Rng};
use crate::model::heads::{
    ce_accumulate, eval_weights, half_bound_accumulate, DomainTag, HeadKind, OutputHead,
};
use crate::model::lstm::{
    lstm_step_backward, lstm_step_unchecked, LstmParams, LstmState, TapeRecord, LSTM_NAMES,
};
use crate::scalar::Scalar;
use crate::data::{BOS, EOS, PAD};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<S = f64> {
    /// `|V| × n`; row `k` is the input embedding of token `k`.
    pub embedding: Matrix<S>,
    /// `n × d_ctx` context projection.
    pub w0: Matrix<S>,
    pub lstm: LstmParams<S>,
    pub head: OutputHead<S>,
}

/// Gradients share the parameter layout.
pub type ModelGrads<S = f64> = ModelParams<S>;

impl<S: Scalar> ModelParams<S> {
    pub fn zeros(vocab: usize, n: usize, d_ctx: usize, head: HeadKind) -> Self {
        Self {
            embedding: Matrix::zeros(vocab, n),
            w0: Matrix::zeros(n, d_ctx),
            lstm: LstmParams::zeros(n),
            head: OutputHead::zeros(head, vocab, n),
        }
    }

    /// Uniform `[−scale, scale)` initialization. Augmented head blocks use
    /// `scale / 2` so composed weights start at the scale of a single head.
    pub fn init(vocab: usize, n: usize, d_ctx: usize, head: HeadKind, scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(vocab, n, d_ctx, head);
        let head_scale = if head == HeadKind::Augmented {
            scale / 2.0
        } else {
            scale
        };
        let n_trunk = 10;
        for (k, m) in p.matrices_mut().into_iter().enumerate() {
            let s = if k < n_trunk { scale } else { head_scale };
            let draws = rng.uniform_vec(-s, s, m.as_slice().len())?;
            for (x, d) in m.as_mut_slice().iter_mut().zip(draws) {
                *x = S::lit(d);
            }
        }
        Ok(p)
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn cell_size(&self) -> usize {
        self.lstm.cell_size()
    }

    pub fn ctx_dim(&self) -> usize {
        self.w0.cols()
    }

    pub fn head_kind(&self) -> HeadKind {
        self.head.kind()
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm.validate()?;
        self.head.validate()?;
        let n = self.cell_size();
        let v = self.vocab_size();
        if self.embedding.cols() != n {
            return Err(Error::dim(format!("embedding is {:?}, cell size {n}", self.embedding.shape())));
        }
        if self.w0.rows() != n {
            return Err(Error::dim(format!("w0 is {:?}, cell size {n}", self.w0.shape())));
        }
        if self.head.vocab_size() != v || self.head.cell_size() != n {
            return Err(Error::dim(format!(
                "head is {}x{}, expected {v}x{n}",
                self.head.vocab_size(),
                self.head.cell_size()
            )));
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut names = vec!["embedding", "w0"];
        names.extend(LSTM_NAMES);
        names.extend(self.head.names());
        names
    }

    /// All parameter blocks in a fixed order: embedding, w0, eight LSTM matrices, head blocks.
    pub fn matrices(&self) -> Vec<&Matrix<S>> {
        let mut out = vec![&self.embedding, &self.w0];
        out.extend(self.lstm.matrices());
        out.extend(self.head.matrices());
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix<S>> {
        let mut out = vec![&mut self.embedding, &mut self.w0];
        out.extend(self.lstm.matrices_mut());
        out.extend(self.head.matrices_mut());
        out
    }

    /// Blocks that receive gradient from a batch of `tag` data.
    pub fn active_blocks(&self, tag: DomainTag) -> Vec<bool> {
        let mut mask = vec![true; 10];
        mask.extend(self.head.active_blocks(tag));
        mask
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size(), self.cell_size(), self.ctx_dim(), self.head_kind())
    }

    pub fn num_params(&self) -> usize {
        self.matrices().iter().map(|m| m.as_slice().len()).sum()
    }

    pub fn flatten(&self) -> Vec<S> {
        self.matrices().iter().flat_map(|m| m.as_slice().iter().copied()).collect()
    }

    pub fn load_flat(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let mut off = 0;
        for m in self.matrices_mut() {
            let len = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.matrices_mut().into_iter().zip(other.matrices()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().iter().all(|m| m.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            embedding: self.embedding.cast(),
            w0: self.w0.cast(),
            lstm: LstmParams {
                w_ix: self.lstm.w_ix.cast(),
                w_ih: self.lstm.w_ih.cast(),
                w_fx: self.lstm.w_fx.cast(),
                w_fh: self.lstm.w_fh.cast(),
                w_ox: self.lstm.w_ox.cast(),
                w_oh: self.lstm.w_oh.cast(),
                w_gx: self.lstm.w_gx.cast(),
                w_gh: self.lstm.w_gh.cast(),
            },
            head: match &self.head {
                OutputHead::Single { w } => OutputHead::Single { w: w.cast() },
                OutputHead::Dual { source, target } => OutputHead::Dual {
                    source: source.cast(),
                    target: target.cast(),
                },
                OutputHead::Augmented {
                    general,
                    source,
                    target,
                } => OutputHead::Augmented {
                    general: general.cast(),
                    source: source.cast(),
                    target: target.cast(),
                },
            },
        }
    }

    /// Runs the context step from a zero state.
    pub fn context_step(&self, ctx: &[S]) -> Result<(LstmState<S>, TapeRecord<S>)> {
        if ctx.len() != self.ctx_dim() {
            return Err(Error::dim(format!(
                "context of length {} for a model expecting {}",
                ctx.len(),
                self.ctx_dim()
            )));
        }
        let mut u0 = vec![S::zero(); self.cell_size()];
        self.w0.matvec_acc(ctx, &mut u0);
        Ok(lstm_step_unchecked(&self.lstm, &u0, &LstmState::zeros(self.cell_size())))
    }

    /// Feeds `token` (the previous output) through the cell.
    pub fn token_step(&self, state: &LstmState<S>, token: usize) -> Result<(LstmState<S>, TapeRecord<S>)> {
        if token >= self.vocab_size() {
            return Err(Error::TokenOutOfRange {
                id: token,
                size: self.vocab_size(),
            });
        }
        if state.h.len() != self.cell_size() || state.c.len() != self.cell_size() {
            return Err(Error::dim("state does not match cell size"));
        }
        Ok(lstm_step_unchecked(&self.lstm, self.embedding.row(token), state))
    }
}

/// Checks `[BOS, …, EOS]` framing: BOS only first, EOS only last, no padding.
pub fn validate_sequence(tokens: &[usize], vocab: usize) -> Result<()> {
    if tokens.len() < 2 {
        return Err(Error::Sequence(format!("need at least BOS and EOS, got {} tokens", tokens.len())));
    }
    if tokens[0] != BOS {
        return Err(Error::Sequence("sequence must start with BOS".into()));
    }
    if tokens[tokens.len() - 1] != EOS {
        return Err(Error::Sequence("sequence must end with EOS".into()));
    }
    for (pos, &t) in tokens.iter().enumerate() {
        if t >= vocab {
            return Err(Error::TokenOutOfRange { id: t, size: vocab });
        }
        let inner = pos > 0 && pos + 1 < tokens.len();
        if inner && (t == BOS || t == EOS || t == PAD) {
            return Err(Error::Sequence(format!("reserved token {t} at position {pos}")));
        }
    }
    Ok(())
}

/// Cached forward pass of the trunk over one sequence.
#[derive(Clone, Debug)]
pub struct Tape<S = f64> {
    pub ctx: Vec<S>,
    pub tokens: Vec<usize>,
    /// `records[0]` is the context step; `records[t]` consumed `tokens[t−1]`.
    pub records: Vec<TapeRecord<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn predictions(&self) -> usize {
        self.records.len() - 1
    }

    /// Hidden state used for prediction `t` (which targets `tokens[t + 1]`).
    pub fn hidden(&self, t: usize) -> &[S] {
        &self.records[t + 1].h
    }

    pub fn target(&self, t: usize) -> usize {
        self.tokens[t + 1]
    }
}

pub fn trunk_forward<S: Scalar>(params: &ModelParams<S>, ctx: &[S], tokens: &[usize]) -> Result<Tape<S>> {
    validate_sequence(tokens, params.vocab_size())?;
    let (mut state, rec) = params.context_step(ctx)?;
    let mut records = Vec::with_capacity(tokens.len());
    records.push(rec);
    for &tok in &tokens[..tokens.len() - 1] {
        let (next, rec) = lstm_step_unchecked(&params.lstm, params.embedding.row(tok), &state);
        records.push(rec);
        state = next;
    }
    Ok(Tape {
        ctx: ctx.to_vec(),
        tokens: tokens.to_vec(),
        records,
    })
}

/// Evaluation-mode logits for every prediction step, plus the tape.
pub fn forward<S: Scalar>(
    params: &ModelParams<S>,
    ctx: &[S],
    tokens: &[usize],
    tag: DomainTag,
) -> Result<(Vec<Vec<S>>, Tape<S>)> {
    let tape = trunk_forward(params, ctx, tokens)?;
    let w = eval_weights(&params.head, tag)?;
    let logits = (0..tape.predictions())
        .map(|t| w.matvec(tape.hidden(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok((logits, tape))
}

fn check_tape<S: Scalar>(params: &ModelParams<S>, tape: &Tape<S>) -> Result<()> {
    let n = params.cell_size();
    let ok = tape.records.len() == tape.tokens.len()
        && tape.ctx.len() == params.ctx_dim()
        && tape.records.iter().all(|r| r.h.len() == n)
        && tape.tokens.iter().all(|&t| t < params.vocab_size());
    if ok {
        Ok(())
    } else {
        Err(Error::dim("tape does not match model parameters"))
    }
}

/// Backpropagates hidden-state gradients `dh[t]` (one per prediction) through
/// time, accumulating trunk gradients into `grads`.
pub(crate) fn trunk_backward<S: Scalar>(
    params: &ModelParams<S>,
    tape: &Tape<S>,
    dh_out: &[Vec<S>],
    grads: &mut ModelGrads<S>,
) {
    let n = params.cell_size();
    let mut dh_next = vec![S::zero(); n];
    let mut dc_next = vec![S::zero(); n];
    for step in (0..tape.records.len()).rev() {
        let mut dh = dh_next;
        if step >= 1 {
            for (a, &b) in dh.iter_mut().zip(&dh_out[step - 1]) {
                *a += b;
            }
        }
        let (du, dh_prev, dc_prev) =
            lstm_step_backward(&params.lstm, &tape.records[step], &dh, &dc_next, &mut grads.lstm);
        if step == 0 {
            grads.w0.add_outer(&du, &tape.ctx);
        } else {
            let tok = tape.tokens[step - 1];
            for (a, &b) in grads.embedding.row_mut(tok).iter_mut().zip(&du) {
                *a += b;
            }
        }
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
}

/// Gradients of `Σ_t ⟨dlogits[t], logits[t]⟩` for evaluation-mode logits.
///
/// For an augmented head the logits come from `θ_g + θ_tag`, so both blocks
/// receive the same gradient.
pub fn backward<S: Scalar>(
    params: &ModelParams<S>,
    tape: &Tape<S>,
    dlogits: &[Vec<S>],
    tag: DomainTag,
) -> Result<ModelGrads<S>> {
    check_tape(params, tape)?;
    if dlogits.len() != tape.predictions() || dlogits.iter().any(|d| d.len() != params.vocab_size()) {
        return Err(Error::dim("output gradients do not match the tape"));
    }
    let mut grads = params.zeros_like();
    let w = eval_weights(&params.head, tag)?;
    let mut dw = w.zeros_like();
    let mut dh_out = Vec::with_capacity(dlogits.len());
    for (t, d) in dlogits.iter().enumerate() {
        dw.add_outer(d, tape.hidden(t));
        let mut dh = vec![S::zero(); params.cell_size()];
        w.t_matvec_acc(d, &mut dh);
        dh_out.push(dh);
    }
    add_head_grad(&mut grads.head, tag, &dw)?;
    trunk_backward(params, tape, &dh_out, &mut grads);
    Ok(grads)
}

fn add_head_grad<S: Scalar>(head: &mut OutputHead<S>, tag: DomainTag, dw: &Matrix<S>) -> Result<()> {
    match head {
        OutputHead::Single { w } => w.add_assign(dw),
        OutputHead::Dual { source, target } => match tag {
            DomainTag::Source => source.add_assign(dw),
            DomainTag::Target => target.add_assign(dw),
        },
        OutputHead::Augmented {
            general,
            source,
            target,
        } => {
            general.add_assign(dw)?;
            match tag {
                DomainTag::Source => source.add_assign(dw),
                DomainTag::Target => target.add_assign(dw),
            }
        }
    }
}

/// Which loss a training step minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Cross-entropy of the evaluation logits (composed weights for augmented heads).
    Exact,
    /// Augmented heads: the `ℓ(θ_g) + ℓ(θ_d)` upper bound. Other heads fall back to `Exact`.
    Bound,
}

/// Summed per-token losses of one sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SequenceLoss<S> {
    /// Value of the optimized objective.
    pub objective: S,
    /// Cross-entropy of the evaluation-mode prediction.
    pub exact: S,
    pub tokens: usize,
}

/// Adds `scale · ∇` of one sequence's loss into `grads` and returns the loss.
pub fn accumulate_sequence<S: Scalar>(
    params: &ModelParams<S>,
    ctx: &[S],
    tokens: &[usize],
    tag: DomainTag,
    objective: Objective,
    scale: S,
    grads: &mut ModelGrads<S>,
) -> Result<SequenceLoss<S>> {
    let tape = trunk_forward(params, ctx, tokens)?;
    let n = params.cell_size();
    let mut dh_out = Vec::with_capacity(tape.predictions());
    let mut total = SequenceLoss {
        objective: S::zero(),
        exact: S::zero(),
        tokens: tape.predictions(),
    };
    let bound = objective == Objective::Bound && params.head_kind() == HeadKind::Augmented;
    if bound {
        let OutputHead::Augmented {
            general,
            source,
            target,
        } = &params.head
        else {
            unreachable!()
        };
        let theta_d = match tag {
            DomainTag::Source => source,
            DomainTag::Target => target,
        };
        let mut g_general = general.zeros_like();
        let mut g_domain = general.zeros_like();
        for t in 0..tape.predictions() {
            let h = tape.hidden(t);
            let y = tape.target(t);
            let mut dh = vec![S::zero(); n];
            let (lg, zg) = half_bound_accumulate(general, h, y, scale, &mut g_general, &mut dh)?;
            let (ld, zd) = half_bound_accumulate(theta_d, h, y, scale, &mut g_domain, &mut dh)?;
            let sum: Vec<S> = zg.iter().zip(&zd).map(|(&a, &b)| a + b).collect();
            total.objective += lg + ld;
            total.exact += log_sum_exp(&sum)? - sum[y];
            dh_out.push(dh);
        }
        let OutputHead::Augmented {
            general: gg,
            source: gs,
            target: gt,
        } = &mut grads.head
        else {
            return Err(Error::dim("gradient head variant differs from parameters"));
        };
        gg.add_assign(&g_general)?;
        match tag {
            DomainTag::Source => gs.add_assign(&g_domain)?,
            DomainTag::Target => gt.add_assign(&g_domain)?,
        }
    } else {
        let w = eval_weights(&params.head, tag)?;
        let mut dw = w.zeros_like();
        for t in 0..tape.predictions() {
            let mut dh = vec![S::zero(); n];
            let loss = ce_accumulate(&w, tape.hidden(t), tape.target(t), scale, &mut dw, &mut dh)?;
            total.objective += loss;
            total.exact += loss;
            dh_out.push(dh);
        }
        add_head_grad(&mut grads.head, tag, &dw)?;
    }
    trunk_backward(params, &tape, &dh_out, grads);
    Ok(total)
}

/// Summed evaluation-mode negative log-likelihood and prediction count.
pub fn sequence_nll<S: Scalar>(
    params: &ModelParams<S>,
    ctx: &[S],
    tokens: &[usize],
    tag: DomainTag,
) -> Result<(S, usize)> {
    validate_sequence(tokens, params.vocab_size())?;
    let w = eval_weights(&params.head, tag)?;
    let (mut state, _) = params.context_step(ctx)?;
    let mut nll = S::zero();
    for pair in tokens.windows(2) {
        let (next, _) = lstm_step_unchecked(&params.lstm, params.embedding.row(pair[0]), &state);
        let logits = w.matvec(&next.h)?;
        nll += log_sum_exp(&logits)? - logits[pair[1]];
        state = next;
    }
    Ok((nll, tokens.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bos_eos_yields_one_prediction() {
        let p = ModelParams::<f64>::zeros(6, 4, 3, HeadKind::Single);
        let (logits, tape) = forward(&p, &[0.1, 0.2, 0.3], &[BOS, EOS], DomainTag::Target).unwrap();
        assert_eq!(logits.len(), 1);
        assert_eq!(tape.records.len(), 2);
    }

    #[test]
    fn zero_model_is_uniform() {
        let p = ModelParams::<f64>::zeros(9, 4, 2, HeadKind::Dual);
        let toks = [BOS, 5, 7, 4, EOS];
        let (nll, count) = sequence_nll(&p, &[1.0, -1.0], &toks, DomainTag::Source).unwrap();
        assert_eq!(count, 4);
        assert!((nll - 4.0 * 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sequence_framing_is_enforced() {
        let p = ModelParams::<f64>::zeros(6, 4, 2, HeadKind::Single);
        let ctx = [0.0, 0.0];
        assert!(matches!(
            trunk_forward(&p, &ctx, &[BOS, 4, EOS, 5]),
            Err(Error::Sequence(_))
        ));
        assert!(matches!(
            trunk_forward(&p, &ctx, &[BOS, 6, EOS]),
            Err(Error::TokenOutOfRange { id: 6, size: 6 })
        ));
        assert!(trunk_forward(&p, &ctx, &[4, EOS]).is_err());
        assert!(trunk_forward(&p, &[0.0], &[BOS, EOS]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let mut rng = Rng::new(1);
        let p = ModelParams::<f64>::init(8, 4, 3, HeadKind::Augmented, 0.5, &mut rng).unwrap();
        let (logits, tape) = forward(&p, &[0.3, -0.2, 0.9], &[BOS, 4, 5, EOS], DomainTag::Source).unwrap();
        let zeros: Vec<Vec<f64>> = logits.iter().map(|l| vec![0.0; l.len()]).collect();
        let g = backward(&p, &tape, &zeros, DomainTag::Source).unwrap();
        assert!(g.flatten().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_is_seeded_and_scaled() {
        let a = ModelParams::<f64>::init(7, 4, 3, HeadKind::Augmented, 0.08, &mut Rng::new(3)).unwrap();
        let b = ModelParams::<f64>::init(7, 4, 3, HeadKind::Augmented, 0.08, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.embedding.as_slice().iter().all(|x| x.abs() < 0.08));
        for m in a.head.matrices() {
            assert!(m.as_slice().iter().all(|x| x.abs() < 0.04));
        }
        a.validate().unwrap();
    }
}
