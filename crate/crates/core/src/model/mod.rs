//! The caption generator: LSTM trunk, output heads, and their gradients.

pub mod heads;
pub mod lstm;
pub mod network;

pub use heads::{
    augmented_loss, bound_gap, ce_loss, compose_weights, eval_weights, head_logits, AugmentedGrad, CeGrad,
    DomainTag, HeadKind, Mode, OutputHead,
};
pub use lstm::{lstm_step, LstmParams, LstmState, TapeRecord};
pub use network::{
    accumulate_sequence, backward, forward, sequence_nll, trunk_forward, validate_sequence, ModelGrads,
    ModelParams, Objective, SequenceLoss, Tape,
};
