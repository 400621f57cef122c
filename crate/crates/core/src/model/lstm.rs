//! Bias-free LSTM cell:
//!
//! ```text
//! i = σ(W_ix u + W_ih h')      f = σ(W_fx u + W_fh h')
//! o = σ(W_ox u + W_oh h')      g = tanh(W_gx u + W_gh h')
//! c = f ⊙ c' + i ⊙ g           h = o ⊙ tanh(c)
//! ```

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<S = f64> {
    pub w_ix: Matrix<S>,
    pub w_ih: Matrix<S>,
    pub w_fx: Matrix<S>,
    pub w_fh: Matrix<S>,
    pub w_ox: Matrix<S>,
    pub w_oh: Matrix<S>,
    pub w_gx: Matrix<S>,
    pub w_gh: Matrix<S>,
}

pub(crate) const LSTM_NAMES: [&str; 8] = [
    "lstm.w_ix", "lstm.w_ih", "lstm.w_fx", "lstm.w_fh", "lstm.w_ox", "lstm.w_oh", "lstm.w_gx",
    "lstm.w_gh",
];

impl<S: Scalar> LstmParams<S> {
    pub fn zeros(n: usize) -> Self {
        let z = || Matrix::zeros(n, n);
        Self {
            w_ix: z(),
            w_ih: z(),
            w_fx: z(),
            w_fh: z(),
            w_ox: z(),
            w_oh: z(),
            w_gx: z(),
            w_gh: z(),
        }
    }

    pub fn from_matrices(ms: [Matrix<S>; 8]) -> Result<Self> {
        let [w_ix, w_ih, w_fx, w_fh, w_ox, w_oh, w_gx, w_gh] = ms;
        let p = Self {
            w_ix,
            w_ih,
            w_fx,
            w_fh,
            w_ox,
            w_oh,
            w_gx,
            w_gh,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn cell_size(&self) -> usize {
        self.w_ix.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cell_size();
        for (name, m) in LSTM_NAMES.iter().zip(self.matrices()) {
            if m.shape() != (n, n) {
                return Err(Error::dim(format!(
                    "{name} is {:?}, expected ({n}, {n})",
                    m.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn matrices(&self) -> [&Matrix<S>; 8] {
        [
            &self.w_ix, &self.w_ih, &self.w_fx, &self.w_fh, &self.w_ox, &self.w_oh, &self.w_gx,
            &self.w_gh,
        ]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix<S>; 8] {
        [
            &mut self.w_ix,
            &mut self.w_ih,
            &mut self.w_fx,
            &mut self.w_fh,
            &mut self.w_ox,
            &mut self.w_oh,
            &mut self.w_gx,
            &mut self.w_gh,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<S = f64> {
    pub c: Vec<S>,
    pub h: Vec<S>,
}

impl<S: Scalar> LstmState<S> {
    pub fn zeros(n: usize) -> Self {
        Self {
            c: vec![S::zero(); n],
            h: vec![S::zero(); n],
        }
    }
}

/// Activations cached by one step for backpropagation.
#[derive(Clone, Debug)]
pub struct TapeRecord<S = f64> {
    pub u: Vec<S>,
    pub h_prev: Vec<S>,
    pub c_prev: Vec<S>,
    pub i: Vec<S>,
    pub f: Vec<S>,
    pub o: Vec<S>,
    pub g: Vec<S>,
    pub c: Vec<S>,
    pub tanh_c: Vec<S>,
    pub h: Vec<S>,
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    // Branch keeps exp() from overflowing for large |x|.
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn gate<S: Scalar>(wx: &Matrix<S>, wh: &Matrix<S>, u: &[S], h: &[S]) -> Vec<S> {
    let mut a = vec![S::zero(); wx.rows()];
    wx.matvec_acc(u, &mut a);
    wh.matvec_acc(h, &mut a);
    a
}

/// One recurrence step.
pub fn lstm_step<S: Scalar>(
    params: &LstmParams<S>,
    u: &[S],
    prev: &LstmState<S>,
) -> Result<(LstmState<S>, TapeRecord<S>)> {
    let n = params.cell_size();
    if u.len() != n || prev.c.len() != n || prev.h.len() != n {
        return Err(Error::dim(format!(
            "lstm_step: cell size {n}, input {}, state ({}, {})",
            u.len(),
            prev.c.len(),
            prev.h.len()
        )));
    }
    Ok(lstm_step_unchecked(params, u, prev))
}

pub(crate) fn lstm_step_unchecked<S: Scalar>(
    params: &LstmParams<S>,
    u: &[S],
    prev: &LstmState<S>,
) -> (LstmState<S>, TapeRecord<S>) {
    let mut i = gate(&params.w_ix, &params.w_ih, u, &prev.h);
    let mut f = gate(&params.w_fx, &params.w_fh, u, &prev.h);
    let mut o = gate(&params.w_ox, &params.w_oh, u, &prev.h);
    let mut g = gate(&params.w_gx, &params.w_gh, u, &prev.h);
    i.iter_mut().for_each(|x| *x = sigmoid(*x));
    f.iter_mut().for_each(|x| *x = sigmoid(*x));
    o.iter_mut().for_each(|x| *x = sigmoid(*x));
    g.iter_mut().for_each(|x| *x = x.tanh());

    let n = i.len();
    let mut c = Vec::with_capacity(n);
    let mut tanh_c = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for k in 0..n {
        let ck = f[k] * prev.c[k] + i[k] * g[k];
        let tk = ck.tanh();
        c.push(ck);
        tanh_c.push(tk);
        h.push(o[k] * tk);
    }
    let state = LstmState {
        c: c.clone(),
        h: h.clone(),
    };
    let rec = TapeRecord {
        u: u.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        i,
        f,
        o,
        g,
        c,
        tanh_c,
        h,
    };
    (state, rec)
}

/// Backpropagates one step.
///
/// `dh` is the total gradient reaching `h_t` (from the output and from step
/// `t+1`), `dc` the gradient reaching `c_t` from step `t+1`. Accumulates
/// weight gradients into `grads` and returns `(du, dh_prev, dc_prev)`.
pub(crate) fn lstm_step_backward<S: Scalar>(
    params: &LstmParams<S>,
    rec: &TapeRecord<S>,
    dh: &[S],
    dc: &[S],
    grads: &mut LstmParams<S>,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let n = rec.h.len();
    let one = S::one();
    let mut da_i = vec![S::zero(); n];
    let mut da_f = vec![S::zero(); n];
    let mut da_o = vec![S::zero(); n];
    let mut da_g = vec![S::zero(); n];
    let mut dc_prev = vec![S::zero(); n];
    for k in 0..n {
        let t = rec.tanh_c[k];
        let d_o = dh[k] * t;
        let d_c = dc[k] + dh[k] * rec.o[k] * (one - t * t);
        let d_i = d_c * rec.g[k];
        let d_g = d_c * rec.i[k];
        let d_f = d_c * rec.c_prev[k];
        dc_prev[k] = d_c * rec.f[k];
        da_i[k] = d_i * rec.i[k] * (one - rec.i[k]);
        da_f[k] = d_f * rec.f[k] * (one - rec.f[k]);
        da_o[k] = d_o * rec.o[k] * (one - rec.o[k]);
        da_g[k] = d_g * (one - rec.g[k] * rec.g[k]);
    }

    grads.w_ix.add_outer(&da_i, &rec.u);
    grads.w_ih.add_outer(&da_i, &rec.h_prev);
    grads.w_fx.add_outer(&da_f, &rec.u);
    grads.w_fh.add_outer(&da_f, &rec.h_prev);
    grads.w_ox.add_outer(&da_o, &rec.u);
    grads.w_oh.add_outer(&da_o, &rec.h_prev);
    grads.w_gx.add_outer(&da_g, &rec.u);
    grads.w_gh.add_outer(&da_g, &rec.h_prev);

    let mut du = vec![S::zero(); n];
    let mut dh_prev = vec![S::zero(); n];
    params.w_ix.t_matvec_acc(&da_i, &mut du);
    params.w_fx.t_matvec_acc(&da_f, &mut du);
    params.w_ox.t_matvec_acc(&da_o, &mut du);
    params.w_gx.t_matvec_acc(&da_g, &mut du);
    params.w_ih.t_matvec_acc(&da_i, &mut dh_prev);
    params.w_fh.t_matvec_acc(&da_f, &mut dh_prev);
    params.w_oh.t_matvec_acc(&da_o, &mut dh_prev);
    params.w_gh.t_matvec_acc(&da_g, &mut dh_prev);
    (du, dh_prev, dc_prev)
}
