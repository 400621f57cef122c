//! Dense linear algebra, stable reductions, randomness and gradient checking.

mod gradcheck;
mod matrix;
mod reduce;
mod rng;

pub use gradcheck::{grad_check, DEFAULT_STEP};
pub use matrix::{axpy, dot, norm_sq, Matrix};
pub use reduce::{argmax, log_softmax, log_sum_exp, softmax, softmax_in_place};
pub use rng::{Rng, ALGORITHM as RNG_ALGORITHM};
