//! Encoder-decoder LSTM with a scalar head per decoder step.
//!
//! The encoder's final per-layer state initializes the decoder. A decoder
//! step may take slot 0 of its input from the previous step's output
//! (free-running), and gradients flow through that feedback path.

use rand::Rng;

use super::dense::Dense;
use super::lstm::{LstmStack, StackState, StackStepCache};
use super::params::{prefixed, zeros_like, Parameters};
use super::tensor::Tensor;
use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq {
    pub encoder: LstmStack,
    pub decoder: LstmStack,
    /// `hidden -> 1`
    pub head: Dense,
}

/// One decoder input. With `feedback`, `input[0]` is overwritten by the
/// previous step's output.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStep {
    pub input: Vec<f64>,
    pub feedback: bool,
}

impl DecoderStep {
    pub fn given(input: Vec<f64>) -> Self {
        DecoderStep { input, feedback: false }
    }

    pub fn feedback(input: Vec<f64>) -> Self {
        DecoderStep { input, feedback: true }
    }
}

#[derive(Debug, Clone)]
pub struct Seq2SeqCache {
    enc: Vec<StackStepCache>,
    dec: Vec<StackStepCache>,
    feedback: Vec<bool>,
    dec_hidden: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl Seq2Seq {
    pub fn new(enc_input: usize, dec_input: usize, hidden: usize, layers: usize, rng: &mut impl Rng) -> Seq2Seq {
        Seq2Seq {
            encoder: LstmStack::new(enc_input, hidden, layers, rng),
            decoder: LstmStack::new(dec_input, hidden, layers, rng),
            head: Dense::new(hidden, 1, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.hidden_dim() != self.decoder.hidden_dim()
            || self.encoder.layers.len() != self.decoder.layers.len()
        {
            return Err(Error::Dimension(
                "encoder and decoder must share hidden size and depth".into(),
            ));
        }
        dim_check("head input", self.decoder.hidden_dim(), self.head.input_dim())?;
        dim_check("head output", 1, self.head.output_dim())
    }

    /// Encoder pass without caches; returns the decoder's initial state.
    pub fn encode(&self, inputs: &[Vec<f64>]) -> StackState {
        let mut state = self.encoder.zero_state();
        for x in inputs {
            self.encoder.step_no_cache(x, &mut state);
        }
        state
    }

    /// One inference decoder step from `state`; returns the raw output.
    pub fn decode_step(&self, input: &[f64], state: &mut StackState) -> f64 {
        self.decoder.step_no_cache(input, state);
        self.head.forward(state.top())[0]
    }

    pub fn forward(&self, enc_inputs: &[Vec<f64>], steps: &[DecoderStep]) -> Result<Seq2SeqCache> {
        let mut state = self.encoder.zero_state();
        let mut enc = Vec::with_capacity(enc_inputs.len());
        for x in enc_inputs {
            dim_check("encoder input", self.encoder.input_dim(), x.len())?;
            enc.push(self.encoder.step(x, &mut state));
        }
        let mut dec = Vec::with_capacity(steps.len());
        let mut outputs = Vec::with_capacity(steps.len());
        let mut dec_hidden = Vec::with_capacity(steps.len());
        for (k, step) in steps.iter().enumerate() {
            dim_check("decoder input", self.decoder.input_dim(), step.input.len())?;
            let mut input = step.input.clone();
            if step.feedback {
                let prev = *outputs
                    .last()
                    .ok_or_else(|| Error::Usage(format!("decoder step {k} requests feedback with no prior output")))?;
                input[0] = prev;
            }
            dec.push(self.decoder.step(&input, &mut state));
            let h = state.top().to_vec();
            outputs.push(self.head.forward(&h)[0]);
            dec_hidden.push(h);
        }
        Ok(Seq2SeqCache {
            enc,
            dec,
            feedback: steps.iter().map(|s| s.feedback).collect(),
            dec_hidden,
            outputs,
        })
    }

    /// Full BPTT given `d_outputs[k] = dL/d(output_k)`.
    pub fn backward(&self, cache: &Seq2SeqCache, d_outputs: &[f64]) -> Result<Seq2Seq> {
        dim_check("output gradients", cache.outputs.len(), d_outputs.len())?;
        let mut grads = zeros_like(self);
        let mut carry = self.decoder.zero_state();
        let mut feedback_grad = 0.0;
        for k in (0..cache.dec.len()).rev() {
            let dy = d_outputs[k] + feedback_grad;
            let mut dh = vec![0.0; self.hidden_dim()];
            self.head
                .backward(&cache.dec_hidden[k], &[dy], &mut grads.head, Some(&mut dh));
            let dx = self
                .decoder
                .step_backward(&cache.dec[k], &dh, &mut carry, &mut grads.decoder);
            feedback_grad = if cache.feedback[k] { dx[0] } else { 0.0 };
        }
        let zero_top = vec![0.0; self.hidden_dim()];
        for k in (0..cache.enc.len()).rev() {
            self.encoder
                .step_backward(&cache.enc[k], &zero_top, &mut carry, &mut grads.encoder);
        }
        Ok(grads)
    }
}

impl Parameters for Seq2Seq {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut v = prefixed("encoder", self.encoder.named_params());
        v.extend(prefixed("decoder", self.decoder.named_params()));
        v.extend(prefixed("head", self.head.named_params()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.encoder.params_mut();
        v.extend(self.decoder.params_mut());
        v.extend(self.head.params_mut());
        v
    }
}
