//! Small differentiable substrate: dense layers, LSTM stacks with BPTT,
//! an encoder-decoder, Adam, checkpoints and finite-difference checks.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod lstm;
pub mod params;
pub mod seq2seq;
pub mod tensor;

pub use adam::Adam;
pub use dense::Dense;
pub use gradcheck::{grad_check, GradCheckReport};
pub use lstm::{LstmCell, LstmStack, SequenceModel, StackState};
pub use params::Parameters;
pub use seq2seq::{DecoderStep, Seq2Seq};
pub use tensor::Tensor;

/// Global-norm gradient clipping threshold applied before every update.
pub const GRAD_CLIP_NORM: f64 = 5.0;
