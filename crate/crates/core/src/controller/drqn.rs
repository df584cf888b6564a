//! Recurrent Q-network: three ReLU dense layers, one LSTM layer and a linear
//! head with one output per gap `1..=K`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::replay::SequenceSample;
use super::AgentState;
use crate::error::{dim_check, Error, Result};
use crate::exec::Execution;
use crate::neural::dense::{relu_backward_in_place, relu_in_place};
use crate::neural::lstm::StackStepCache;
use crate::neural::params::{copy_params, prefixed, sum_in_order, zeros_like};
use crate::neural::{Adam, Dense, LstmStack, Parameters, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct DrqnConfig {
    pub dense: [usize; 3],
    pub lstm_hidden: usize,
    pub k: usize,
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Replay sequence length.
    pub seq_len: usize,
    pub buffer_capacity: usize,
    /// Train steps between target synchronizations.
    pub sync_every: u64,
    pub seed: u64,
}

impl Default for DrqnConfig {
    fn default() -> Self {
        DrqnConfig {
            dense: [128, 128, 64],
            lstm_hidden: 64,
            k: 12,
            lr: 1e-4,
            gamma: 0.99,
            batch_size: 32,
            seq_len: 12,
            buffer_capacity: 5000,
            sync_every: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrqnNet {
    pub d1: Dense,
    pub d2: Dense,
    pub d3: Dense,
    pub lstm: LstmStack,
    pub head: Dense,
}

struct StepCache {
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    a3: Vec<f64>,
    lstm: StackStepCache,
    h: Vec<f64>,
}

pub struct DrqnCache {
    steps: Vec<StepCache>,
    pub q: Vec<Vec<f64>>,
}

impl DrqnNet {
    pub fn new(input: usize, dense: [usize; 3], hidden: usize, k: usize, rng: &mut impl Rng) -> DrqnNet {
        DrqnNet {
            d1: Dense::new(input, dense[0], rng),
            d2: Dense::new(dense[0], dense[1], rng),
            d3: Dense::new(dense[1], dense[2], rng),
            lstm: LstmStack::new(dense[2], hidden, 1, rng),
            head: Dense::new(hidden, k, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.d1.input_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.head.output_dim()
    }

    fn embed(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut a1 = self.d1.forward(x);
        relu_in_place(&mut a1);
        let mut a2 = self.d2.forward(&a1);
        relu_in_place(&mut a2);
        let mut a3 = self.d3.forward(&a2);
        relu_in_place(&mut a3);
        (a1, a2, a3)
    }

    /// Q-values at every step of a sequence run from the zero state.
    pub fn forward(&self, xs: &[&[f64]]) -> Result<DrqnCache> {
        let mut state = self.lstm.zero_state();
        let mut steps = Vec::with_capacity(xs.len());
        let mut q = Vec::with_capacity(xs.len());
        for x in xs {
            dim_check("Q-network input", self.input_dim(), x.len())?;
            let (a1, a2, a3) = self.embed(x);
            let lstm = self.lstm.step(&a3, &mut state);
            let h = state.top().to_vec();
            q.push(self.head.forward(&h));
            steps.push(StepCache {
                x: x.to_vec(),
                a1,
                a2,
                a3,
                lstm,
                h,
            });
        }
        Ok(DrqnCache { steps, q })
    }

    /// Q-values after the last state of the sequence.
    pub fn q_last(&self, xs: &[&[f64]]) -> Result<Vec<f64>> {
        let mut state = self.lstm.zero_state();
        for x in xs {
            dim_check("Q-network input", self.input_dim(), x.len())?;
            let (_, _, a3) = self.embed(x);
            self.lstm.step_no_cache(&a3, &mut state);
        }
        Ok(self.head.forward(state.top()))
    }

    pub fn backward(&self, cache: &DrqnCache, dq: &[Vec<f64>]) -> Result<DrqnNet> {
        dim_check("Q gradient steps", cache.steps.len(), dq.len())?;
        let mut g = zeros_like(self);
        let mut carry = self.lstm.zero_state();
        for (s, d) in cache.steps.iter().zip(dq).rev() {
            let mut dh = vec![0.0; s.h.len()];
            self.head.backward(&s.h, d, &mut g.head, Some(&mut dh));
            let mut da3 = self.lstm.step_backward(&s.lstm, &dh, &mut carry, &mut g.lstm);
            relu_backward_in_place(&s.a3, &mut da3);
            let mut da2 = vec![0.0; s.a2.len()];
            self.d3.backward(&s.a2, &da3, &mut g.d3, Some(&mut da2));
            relu_backward_in_place(&s.a2, &mut da2);
            let mut da1 = vec![0.0; s.a1.len()];
            self.d2.backward(&s.a1, &da2, &mut g.d2, Some(&mut da1));
            relu_backward_in_place(&s.a1, &mut da1);
            self.d1.backward(&s.x, &da1, &mut g.d1, None);
        }
        Ok(g)
    }
}

impl Parameters for DrqnNet {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut v = prefixed("d1", self.d1.named_params());
        v.extend(prefixed("d2", self.d2.named_params()));
        v.extend(prefixed("d3", self.d3.named_params()));
        v.extend(prefixed("lstm", self.lstm.named_params()));
        v.extend(prefixed("head", self.head.named_params()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.d1.params_mut();
        v.extend(self.d2.params_mut());
        v.extend(self.d3.params_mut());
        v.extend(self.lstm.params_mut());
        v.extend(self.head.params_mut());
        v
    }
}

/// First index of the maximum (ties go to the smallest gap).
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy gap in `1..=K` from the network run over `recent` states.
pub fn select_action(net: &DrqnNet, recent: &[AgentState], epsilon: f64, rng: &mut dyn RngCore) -> Result<usize> {
    if recent.is_empty() {
        return Err(Error::Usage("action selection needs at least one state".into()));
    }
    let explore: f64 = rng.gen();
    if explore < epsilon {
        return Ok(rng.gen_range(1..=net.num_actions()));
    }
    let xs: Vec<&[f64]> = recent.iter().map(|s| s.values.as_slice()).collect();
    Ok(argmax(&net.q_last(&xs)?) + 1)
}

/// TD targets for the valid transitions of each sample, in order:
/// `r` on terminal transitions, else `r + gamma * max_a Q_target(s', a)` with
/// the target network run over the sample's successor states.
pub fn td_target(batch: &[SequenceSample], target: &DrqnNet, gamma: f64) -> Result<Vec<Vec<f64>>> {
    batch
        .iter()
        .map(|s| {
            let valid: Vec<_> = s.valid().collect();
            let next: Vec<&[f64]> = valid.iter().map(|t| t.next_state.values.as_slice()).collect();
            let q_next = if gamma == 0.0 || valid.iter().all(|t| t.done) {
                vec![Vec::new(); valid.len()]
            } else {
                target.forward(&next)?.q
            };
            Ok(valid
                .iter()
                .zip(q_next)
                .map(|(t, q)| {
                    if t.done || gamma == 0.0 {
                        t.reward
                    } else {
                        t.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    }
                })
                .collect())
        })
        .collect()
}

/// Summed squared TD error of one sample and its gradient, scaled by `1/n`.
pub fn sample_loss_and_grad(
    net: &DrqnNet,
    sample: &SequenceSample,
    targets: &[f64],
    n: usize,
) -> Result<(f64, DrqnNet)> {
    let valid: Vec<_> = sample.valid().collect();
    dim_check("TD targets", valid.len(), targets.len())?;
    let xs: Vec<&[f64]> = valid.iter().map(|t| t.state.values.as_slice()).collect();
    let cache = net.forward(&xs)?;
    let mut loss = 0.0;
    let dq: Vec<Vec<f64>> = valid
        .iter()
        .zip(&cache.q)
        .zip(targets)
        .map(|((t, q), &y)| {
            let a = t.action - 1;
            let err = q[a] - y;
            loss += err * err;
            let mut d = vec![0.0; q.len()];
            d[a] = 2.0 * err / n as f64;
            d
        })
        .collect();
    Ok((loss, net.backward(&cache, &dq)?))
}

/// Mean squared TD error over all valid steps of a batch.
pub fn batch_loss(net: &DrqnNet, batch: &[SequenceSample], targets: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for (s, ys) in batch.iter().zip(targets) {
        let xs: Vec<&[f64]> = s.valid().map(|t| t.state.values.as_slice()).collect();
        let q = net.forward(&xs)?.q;
        for ((t, q), y) in s.valid().zip(q).zip(ys) {
            total += (q[t.action - 1] - y).powi(2);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// Online and target networks with their optimizer.
#[derive(Debug, Clone)]
pub struct DrqnAgent {
    pub online: DrqnNet,
    pub target: DrqnNet,
    pub adam: Adam,
    pub train_steps: u64,
    pub cfg: DrqnConfig,
    /// Exploration and replay-sampling stream.
    pub rng: ChaCha8Rng,
}

impl DrqnAgent {
    pub fn new(state_dim: usize, cfg: DrqnConfig) -> DrqnAgent {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let online = DrqnNet::new(state_dim, cfg.dense, cfg.lstm_hidden, cfg.k, &mut rng);
        DrqnAgent {
            target: online.clone(),
            online,
            adam: Adam::new(cfg.lr),
            train_steps: 0,
            cfg,
            rng,
        }
    }

    pub fn sync_target(&mut self) {
        copy_params(&mut self.target, &self.online);
    }

    /// One Adam step on a batch; synchronizes the target on schedule.
    /// Returns the mean squared TD error before the update.
    pub fn train_step(&mut self, batch: &[SequenceSample], exec: Execution) -> Result<f64> {
        let targets = td_target(batch, &self.target, self.cfg.gamma)?;
        let n: usize = targets.iter().map(Vec::len).sum();
        if n == 0 {
            return Ok(0.0);
        }
        let pairs: Vec<(&SequenceSample, &Vec<f64>)> = batch.iter().zip(&targets).collect();
        let online = &self.online;
        let parts = exec.try_map(&pairs, |(s, ys)| sample_loss_and_grad(online, s, ys, n))?;
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(parts.len());
        for (l, g) in parts {
            loss += l;
            grads.push(g);
        }
        let loss = loss / n as f64;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "Q-network loss is {loss} at train step {}",
                self.train_steps
            )));
        }
        let total = sum_in_order(grads).expect("non-empty batch");
        self.adam.step_averaged(&mut self.online, total, 1)?;
        self.train_steps += 1;
        if self.cfg.sync_every > 0 && self.train_steps % self.cfg.sync_every == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn meta(&self) -> String {
        format!(
            "kind=drqn\ndense={},{},{}\nlstm_hidden={}\nk={}\ntrain_steps={}\n",
            self.cfg.dense[0], self.cfg.dense[1], self.cfg.dense[2], self.cfg.lstm_hidden, self.cfg.k, self.train_steps
        )
    }
}
