//! LSTM cells, stacked layers and backpropagation through time.
//!
//! Gate layout inside the fused `4H` pre-activation is `[input, forget,
//! candidate, output]`.

use rand::Rng;

use super::dense::Dense;
use super::params::{prefixed, Parameters};
use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, sigmoid, Tensor};
use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `[4H, input_dim]`
    pub w_x: Tensor,
    /// `[4H, H]`
    pub w_h: Tensor,
    /// `[4H]`
    pub b: Tensor,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

/// Everything one forward step needs to be differentiated.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Post-activation gates `[i, f, g, o]`, length `4H`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl LstmStepCache {
    pub fn h(&self) -> Vec<f64> {
        let hd = self.c.len();
        let o = &self.gates[3 * hd..];
        o.iter().zip(&self.tanh_c).map(|(o, t)| o * t).collect()
    }
}

impl LstmCell {
    pub fn new(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> LstmCell {
        let mut b = Tensor::zeros(&[4 * hidden_dim]);
        b.data[hidden_dim..2 * hidden_dim].fill(1.0);
        LstmCell {
            w_x: Tensor::xavier(4 * hidden_dim, input_dim, input_dim, hidden_dim, rng),
            w_h: Tensor::xavier(4 * hidden_dim, hidden_dim, hidden_dim, hidden_dim, rng),
            b,
            input_dim,
            hidden_dim,
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> LstmCell {
        LstmCell {
            w_x: Tensor::zeros(&[4 * hidden_dim, input_dim]),
            w_h: Tensor::zeros(&[4 * hidden_dim, hidden_dim]),
            b: Tensor::zeros(&[4 * hidden_dim]),
            input_dim,
            hidden_dim,
        }
    }

    /// One step; returns the cache, from which `h'` and `c'` are read.
    pub fn forward(&self, x: &[f64], h: &[f64], c: &[f64]) -> LstmStepCache {
        let hd = self.hidden_dim;
        let mut z = self.b.data.clone();
        matvec_acc(&self.w_x.data, x, &mut z);
        matvec_acc(&self.w_h.data, h, &mut z);
        for v in &mut z[..2 * hd] {
            *v = sigmoid(*v);
        }
        for v in &mut z[2 * hd..3 * hd] {
            *v = v.tanh();
        }
        for v in &mut z[3 * hd..] {
            *v = sigmoid(*v);
        }
        let mut c_new = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        for k in 0..hd {
            c_new[k] = z[hd + k] * c[k] + z[k] * z[2 * hd + k];
            tanh_c[k] = c_new[k].tanh();
        }
        LstmStepCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            c_prev: c.to_vec(),
            gates: z,
            c: c_new,
            tanh_c,
        }
    }

    /// Checked single step returning `(h', c')`.
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        dim_check("lstm input", self.input_dim, x.len())?;
        dim_check("lstm hidden state", self.hidden_dim, h.len())?;
        dim_check("lstm cell state", self.hidden_dim, c.len())?;
        let cache = self.forward(x, h, c);
        Ok((cache.h(), cache.c))
    }

    /// Backward through one step. `dh`/`dc` are the gradients w.r.t. this
    /// step's outputs; returns `(dx, dh_prev, dc_prev)`.
    pub fn backward(
        &self,
        cache: &LstmStepCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCell,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hd = self.hidden_dim;
        let g = &cache.gates;
        let mut dz = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for k in 0..hd {
            let (i, f, cand, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
            let tc = cache.tanh_c[k];
            let d_o = dh[k] * tc;
            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dz[k] = dct * cand * i * (1.0 - i);
            dz[hd + k] = dct * cache.c_prev[k] * f * (1.0 - f);
            dz[2 * hd + k] = dct * i * (1.0 - cand * cand);
            dz[3 * hd + k] = d_o * o * (1.0 - o);
            dc_prev[k] = dct * f;
        }
        outer_acc(&mut grads.w_x.data, &dz, &cache.x);
        outer_acc(&mut grads.w_h.data, &dz, &cache.h_prev);
        for (gb, d) in grads.b.data.iter_mut().zip(&dz) {
            *gb += d;
        }
        let mut dx = vec![0.0; self.input_dim];
        matvec_t_acc(&self.w_x.data, &dz, &mut dx);
        let mut dh_prev = vec![0.0; hd];
        matvec_t_acc(&self.w_h.data, &dz, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }
}

impl Parameters for LstmCell {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_x".into(), &self.w_x),
            ("w_h".into(), &self.w_h),
            ("b".into(), &self.b),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.b]
    }
}

/// Per-layer `(h, c)` of a stack.
#[derive(Debug, Clone, PartialEq)]
pub struct StackState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl StackState {
    pub fn zeros(layers: usize, hidden: usize) -> StackState {
        StackState {
            h: vec![vec![0.0; hidden]; layers],
            c: vec![vec![0.0; hidden]; layers],
        }
    }

    pub fn top(&self) -> &[f64] {
        self.h.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Stacked LSTM; layer `l+1` consumes the hidden output of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    pub layers: Vec<LstmCell>,
}

/// Caches of every layer for one time step.
pub type StackStepCache = Vec<LstmStepCache>;

impl LstmStack {
    pub fn new(input_dim: usize, hidden_dim: usize, layers: usize, rng: &mut impl Rng) -> LstmStack {
        let layers = (0..layers)
            .map(|l| LstmCell::new(if l == 0 { input_dim } else { hidden_dim }, hidden_dim, rng))
            .collect();
        LstmStack { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].hidden_dim
    }

    pub fn zero_state(&self) -> StackState {
        StackState::zeros(self.layers.len(), self.hidden_dim())
    }

    /// Advance every layer by one step, updating `state` in place.
    pub fn step(&self, x: &[f64], state: &mut StackState) -> StackStepCache {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut input = x.to_vec();
        for (l, cell) in self.layers.iter().enumerate() {
            let cache = cell.forward(&input, &state.h[l], &state.c[l]);
            state.h[l] = cache.h();
            state.c[l] = cache.c.clone();
            input = state.h[l].clone();
            caches.push(cache);
        }
        caches
    }

    /// Inference-only step without keeping caches.
    pub fn step_no_cache(&self, x: &[f64], state: &mut StackState) {
        let mut input = x.to_vec();
        for (l, cell) in self.layers.iter().enumerate() {
            let cache = cell.forward(&input, &state.h[l], &state.c[l]);
            state.h[l] = cache.h();
            input.clone_from(&state.h[l]);
            state.c[l] = cache.c;
        }
    }

    /// Backward through one stacked step. `dh_top` is the external gradient on
    /// the top hidden output; `carry` holds the recurrent gradients flowing in
    /// from step `t+1` and is replaced by those flowing to step `t-1`.
    /// Returns the gradient w.r.t. the layer-0 input.
    pub fn step_backward(
        &self,
        caches: &StackStepCache,
        dh_top: &[f64],
        carry: &mut StackState,
        grads: &mut LstmStack,
    ) -> Vec<f64> {
        let top = self.layers.len() - 1;
        let mut from_above: Vec<f64> = dh_top.to_vec();
        for l in (0..=top).rev() {
            let mut dh = carry.h[l].clone();
            dh.iter_mut().zip(&from_above).for_each(|(a, b)| *a += b);
            let (dx, dh_prev, dc_prev) = self.layers[l].backward(&caches[l], &dh, &carry.c[l], &mut grads.layers[l]);
            carry.h[l] = dh_prev;
            carry.c[l] = dc_prev;
            from_above = dx;
        }
        from_above
    }

    /// Unrolled forward pass from `init` (zeros when `None`).
    pub fn forward_sequence(
        &self,
        xs: &[Vec<f64>],
        init: Option<StackState>,
    ) -> Result<(Vec<Vec<f64>>, Vec<StackStepCache>, StackState)> {
        let mut state = init.unwrap_or_else(|| self.zero_state());
        let mut outputs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            dim_check("sequence input", self.input_dim(), x.len())?;
            caches.push(self.step(x, &mut state));
            outputs.push(state.top().to_vec());
        }
        Ok((outputs, caches, state))
    }

    /// BPTT over a cached sequence. `d_outputs[t]` is the gradient on the top
    /// hidden output at step `t`; `d_final` the gradient on the final state.
    /// Returns per-step input gradients and the gradient on the initial state.
    pub fn backward_sequence(
        &self,
        caches: &[StackStepCache],
        d_outputs: &[Vec<f64>],
        d_final: Option<StackState>,
        grads: &mut LstmStack,
    ) -> Result<(Vec<Vec<f64>>, StackState)> {
        dim_check("output gradient steps", caches.len(), d_outputs.len())?;
        let mut carry = d_final.unwrap_or_else(|| self.zero_state());
        let mut dxs = vec![Vec::new(); caches.len()];
        for t in (0..caches.len()).rev() {
            dxs[t] = self.step_backward(&caches[t], &d_outputs[t], &mut carry, grads);
        }
        Ok((dxs, carry))
    }
}

impl Parameters for LstmStack {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, c)| prefixed(&format!("l{l}"), c.named_params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|c| c.params_mut()).collect()
    }
}

/// An LSTM stack with a dense head applied to the top hidden state at every
/// step.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    pub stack: LstmStack,
    pub head: Dense,
}

#[derive(Debug, Clone)]
pub struct SequenceCache {
    pub steps: Vec<StackStepCache>,
    pub hidden: Vec<Vec<f64>>,
}

impl SequenceModel {
    pub fn new(input_dim: usize, hidden: usize, layers: usize, output_dim: usize, rng: &mut impl Rng) -> Self {
        SequenceModel {
            stack: LstmStack::new(input_dim, hidden, layers, rng),
            head: Dense::new(hidden, output_dim, rng),
        }
    }

    pub fn forward_sequence(&self, xs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, SequenceCache)> {
        if self.head.input_dim() != self.stack.hidden_dim() {
            return Err(Error::Dimension("head input must equal stack hidden size".into()));
        }
        let (hidden, steps, _) = self.stack.forward_sequence(xs, None)?;
        let outputs = hidden.iter().map(|h| self.head.forward(h)).collect();
        Ok((outputs, SequenceCache { steps, hidden }))
    }

    /// Gradients of a loss whose per-step output gradients are `loss_grads`.
    pub fn backward_sequence(&self, cache: &SequenceCache, loss_grads: &[Vec<f64>]) -> Result<SequenceModel> {
        dim_check("loss gradient steps", cache.steps.len(), loss_grads.len())?;
        let mut grads = super::params::zeros_like(self);
        let mut d_hidden = Vec::with_capacity(loss_grads.len());
        for (h, dy) in cache.hidden.iter().zip(loss_grads) {
            dim_check("loss gradient width", self.head.output_dim(), dy.len())?;
            let mut dh = vec![0.0; h.len()];
            self.head.backward(h, dy, &mut grads.head, Some(&mut dh));
            d_hidden.push(dh);
        }
        self.stack
            .backward_sequence(&cache.steps, &d_hidden, None, &mut grads.stack)?;
        Ok(grads)
    }
}

impl Parameters for SequenceModel {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut v = prefixed("stack", self.stack.named_params());
        v.extend(prefixed("head", self.head.named_params()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.stack.params_mut();
        v.extend(self.head.params_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::grad_check;
    use crate::neural::params::{all_finite, global_norm};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent textbook implementation with separate per-gate loops.
    fn oracle_step(cell: &LstmCell, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = cell.hidden_dim;
        let pre = |gate: usize, k: usize| -> f64 {
            let row = gate * hd + k;
            let mut s = cell.b.data[row];
            for j in 0..cell.input_dim {
                s += cell.w_x.data[row * cell.input_dim + j] * x[j];
            }
            for j in 0..hd {
                s += cell.w_h.data[row * hd + j] * h[j];
            }
            s
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h_new = vec![0.0; hd];
        let mut c_new = vec![0.0; hd];
        for k in 0..hd {
            let i = sig(pre(0, k));
            let f = sig(pre(1, k));
            let g = pre(2, k).tanh();
            let o = sig(pre(3, k));
            c_new[k] = f * c[k] + i * g;
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    fn random_cell(input: usize, hidden: usize, seed: u64) -> LstmCell {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cell = LstmCell::new(input, hidden, &mut rng);
        for v in &mut cell.b.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        cell
    }

    #[test]
    fn zero_params_give_zero_state() {
        let cell = LstmCell::zeros(3, 4);
        let (h, c) = cell.step(&[0.3, -1.0, 2.0], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(h.iter().chain(&c).all(|v| *v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut cell = random_cell(2, 3, 1);
        cell.b.data[3..6].fill(50.0);
        let x = [0.4, -0.7];
        let h = [0.1, 0.2, -0.3];
        let c = [0.5, -1.5, 2.0];
        let cache = cell.forward(&x, &h, &c);
        for k in 0..3 {
            let expected = c[k] + cache.gates[k] * cache.gates[6 + k];
            assert!((cache.c[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_oracle_step() {
        let cell = random_cell(4, 3, 7);
        let x = [0.2, -0.5, 1.5, 0.0];
        let h = [0.3, -0.1, 0.9];
        let c = [-0.4, 1.2, 0.05];
        let (h1, c1) = cell.step(&x, &h, &c).unwrap();
        let (h2, c2) = oracle_step(&cell, &x, &h, &c);
        for k in 0..3 {
            assert!((h1[k] - h2[k]).abs() < 1e-12);
            assert!((c1[k] - c2[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn step_rejects_bad_dims() {
        let cell = LstmCell::zeros(2, 2);
        assert!(matches!(
            cell.step(&[1.0], &[0.0; 2], &[0.0; 2]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn empty_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = SequenceModel::new(2, 3, 2, 1, &mut rng);
        let (out, cache) = m.forward_sequence(&[]).unwrap();
        assert!(out.is_empty() && cache.steps.is_empty());
        let (_, _, state) = m.stack.forward_sequence(&[], None).unwrap();
        assert_eq!(state, m.stack.zero_state());
    }

    #[test]
    fn single_step_sequence_is_step_plus_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = SequenceModel::new(2, 3, 1, 2, &mut rng);
        let x = vec![0.5, -0.25];
        let (out, _) = m.forward_sequence(std::slice::from_ref(&x)).unwrap();
        let (h, _) = m.stack.layers[0].step(&x, &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(out[0], m.head.forward(&h));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = SequenceModel::new(3, 4, 2, 1, &mut rng);
        let xs: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64 * 0.1, 1.0, -0.5]).collect();
        assert_eq!(m.forward_sequence(&xs).unwrap().0, m.forward_sequence(&xs).unwrap().0);
    }

    #[test]
    fn zero_loss_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = SequenceModel::new(3, 4, 2, 2, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5).map(|t| vec![t as f64, 0.5, -1.0]).collect();
        let (_, cache) = m.forward_sequence(&xs).unwrap();
        let g = m.backward_sequence(&cache, &vec![vec![0.0; 2]; 5]).unwrap();
        assert_eq!(global_norm(&g), 0.0);
    }

    #[test]
    fn single_unit_gradient_matches_hand_derivation() {
        // One step, one unit, zero initial state, loss = y with y = v*h + b_out.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = SequenceModel::new(1, 1, 1, 1, &mut rng);
        let cell = &mut m.stack.layers[0];
        cell.w_x.data = vec![0.5, -0.3, 0.8, 0.2];
        cell.b.data = vec![0.1, 1.0, -0.2, 0.3];
        m.head.w.data = vec![1.5];
        let x = 0.7;
        let (_, cache) = m.forward_sequence(&[vec![x]]).unwrap();
        let grads = m.backward_sequence(&cache, &[vec![1.0]]).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let zi = 0.5 * x + 0.1;
        let zg = 0.8 * x - 0.2;
        let zo = 0.2 * x + 0.3;
        let (i, g, o) = (sig(zi), zg.tanh(), sig(zo));
        let c = i * g;
        let h = o * c.tanh();
        let dh = 1.5;
        let dc = dh * o * (1.0 - c.tanh().powi(2));
        let expected_wx = [
            dc * g * i * (1.0 - i) * x,
            0.0, // c_prev = 0 kills the forget-gate path
            dc * i * (1.0 - g * g) * x,
            dh * c.tanh() * o * (1.0 - o) * x,
        ];
        for (k, e) in expected_wx.iter().enumerate() {
            assert!((grads.stack.layers[0].w_x.data[k] - e).abs() < 1e-14, "gate {k}");
        }
        assert!((grads.head.w.data[0] - h).abs() < 1e-15);
        assert_eq!(grads.head.b.data[0], 1.0);
    }

    fn quadratic_loss(m: &SequenceModel, xs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
        let (out, _) = m.forward_sequence(xs).unwrap();
        out.iter()
            .zip(targets)
            .flat_map(|(o, t)| o.iter().zip(t).map(|(a, b)| 0.5 * (a - b) * (a - b)))
            .sum()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn bptt_matches_finite_differences(
            seed in 0u64..1000,
            input in 1usize..5,
            hidden in 1usize..5,
            layers in 1usize..3,
            out_dim in 1usize..4,
            len in 1usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = SequenceModel::new(input, hidden, layers, out_dim, &mut rng);
            let xs: Vec<Vec<f64>> = (0..len).map(|_| (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let ts: Vec<Vec<f64>> = (0..len).map(|_| (0..out_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let (out, cache) = m.forward_sequence(&xs).unwrap();
            let dl: Vec<Vec<f64>> = out.iter().zip(&ts).map(|(o, t)| o.iter().zip(t).map(|(a, b)| a - b).collect()).collect();
            let grads = m.backward_sequence(&cache, &dl).unwrap();
            let report = grad_check(&m, &grads, |p| quadratic_loss(p, &xs, &ts), 1e-5, 1e-4);
            prop_assert!(report.passed, "{report:?}");
        }

        #[test]
        fn hidden_output_bounded(seed in 0u64..500, scale in 0.1f64..20.0) {
            let mut cell = random_cell(3, 4, seed);
            for v in cell.w_x.data.iter_mut().chain(cell.w_h.data.iter_mut()) { *v *= scale; }
            let (h, c) = cell.step(&[1.0, -2.0, 3.0], &[0.5; 4], &[10.0; 4]).unwrap();
            prop_assert!(h.iter().all(|v| v.abs() <= 1.0));
            prop_assert!(h.iter().chain(&c).all(|v| v.is_finite()));
        }
    }

    #[test]
    fn new_cell_has_unit_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell = LstmCell::new(2, 3, &mut rng);
        assert_eq!(&cell.b.data[3..6], &[1.0, 1.0, 1.0]);
        assert!(cell.b.data[..3].iter().chain(&cell.b.data[6..]).all(|v| *v == 0.0));
        assert!(all_finite(&cell));
    }
}
