//! Uniform access to a model's tensors, for optimizers, clipping, checkpoints
//! and gradient checking. Gradients are stored in a zeroed clone of the model.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub trait Parameters {
    /// Every tensor with a stable dotted name, in a fixed order.
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    /// Same order as [`named_params`](Self::named_params).
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
}

pub(crate) fn prefixed<'a>(prefix: &str, inner: Vec<(String, &'a Tensor)>) -> Vec<(String, &'a Tensor)> {
    inner.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

pub fn zeros_like<P: Parameters + Clone>(p: &P) -> P {
    let mut z = p.clone();
    zero(&mut z);
    z
}

pub fn zero<P: Parameters>(p: &mut P) {
    for t in p.params_mut() {
        t.fill(0.0);
    }
}

pub fn param_count<P: Parameters>(p: &P) -> usize {
    p.named_params().iter().map(|(_, t)| t.len()).sum()
}

/// `dst += alpha * src`, tensor by tensor.
pub fn add_scaled<P: Parameters>(dst: &mut P, src: &P, alpha: f64) {
    let src = src.named_params();
    for (d, (_, s)) in dst.params_mut().into_iter().zip(src) {
        debug_assert_eq!(d.shape, s.shape);
        super::tensor::axpy(alpha, &s.data, &mut d.data);
    }
}

pub fn scale<P: Parameters>(p: &mut P, alpha: f64) {
    for t in p.params_mut() {
        t.data.iter_mut().for_each(|v| *v *= alpha);
    }
}

pub fn global_norm<P: Parameters>(p: &P) -> f64 {
    p.named_params()
        .iter()
        .flat_map(|(_, t)| t.data.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescale so the global L2 norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        scale(grads, max_norm / norm);
    }
    norm
}

pub fn all_finite<P: Parameters>(p: &P) -> bool {
    p.named_params().iter().all(|(_, t)| t.all_finite())
}

pub fn ensure_finite<P: Parameters>(p: &P, what: &str) -> Result<()> {
    for (name, t) in p.named_params() {
        if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("{what}: non-finite value in {name}[{i}]")));
        }
    }
    Ok(())
}

/// Copy every tensor of `src` into `dst` (same architecture).
pub fn copy_params<P: Parameters>(dst: &mut P, src: &P) {
    let src = src.named_params();
    for (d, (_, s)) in dst.params_mut().into_iter().zip(src) {
        d.data.copy_from_slice(&s.data);
    }
}

/// Sum a list of gradient sets in order (deterministic reduction).
pub fn sum_in_order<P: Parameters + Clone>(parts: Vec<P>) -> Option<P> {
    let mut it = parts.into_iter();
    let mut acc = it.next()?;
    for p in it {
        add_scaled(&mut acc, &p, 1.0);
    }
    Some(acc)
}
