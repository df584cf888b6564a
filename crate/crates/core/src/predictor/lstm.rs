//! Encoder-decoder LSTM forecaster over the 168-hour target.
//!
//! Encoder input per history step: `[x, sin(hour), cos(hour)]`. Decoder input
//! per target step: `[previous value, sin(hour), cos(hour)]`, where the
//! previous value of step 0 is the last history point.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{history_hour, hour_encoding, Forecaster, CLAMP_HI, CLAMP_LO};
use crate::data::EpisodeInstance;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Execution};
use crate::neural::params::{copy_params, sum_in_order};
use crate::neural::{Adam, DecoderStep, Seq2Seq, StackState};

pub const INPUT_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorConfig {
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            hidden: 128,
            layers: 2,
            epochs: 50,
            batch_size: 16,
            lr: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmPredictor {
    pub net: Seq2Seq,
    pub trained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub p_tf: f64,
    pub train_loss: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorReport {
    /// Free-running validation RMSE of the initial parameters.
    pub initial_val_rmse: f64,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (`None` if none beat the start).
    pub best_epoch: Option<usize>,
    pub best_val_rmse: f64,
}

fn step_input(prev: f64, hour: u32) -> Vec<f64> {
    let [s, c] = hour_encoding(hour);
    vec![prev, s, c]
}

pub fn encoder_inputs(ep: &EpisodeInstance) -> Vec<Vec<f64>> {
    ep.history
        .iter()
        .enumerate()
        .map(|(i, &x)| step_input(x, history_hour(ep, i)))
        .collect()
}

fn last_history(ep: &EpisodeInstance) -> Result<f64> {
    ep.history
        .last()
        .copied()
        .ok_or_else(|| Error::Dimension("episode has an empty history".into()))
}

/// Linear teacher-forcing decay from 1 at the first epoch to 0 at the last.
pub fn teacher_forcing_prob(epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        1.0
    } else {
        1.0 - epoch as f64 / (epochs - 1) as f64
    }
}

impl LstmPredictor {
    pub fn new(hidden: usize, layers: usize, rng: &mut impl Rng) -> LstmPredictor {
        LstmPredictor {
            net: Seq2Seq::new(INPUT_DIM, INPUT_DIM, hidden, layers, rng),
            trained: false,
        }
    }

    /// Decoder steps for training: step 0 gets the last history value; later
    /// steps get the true previous target with probability `p_tf`, otherwise
    /// the decoder's own previous output.
    pub fn training_steps(ep: &EpisodeInstance, p_tf: f64, rng: &mut impl Rng) -> Result<Vec<DecoderStep>> {
        let mut prev = last_history(ep)?;
        let mut steps = Vec::with_capacity(ep.target.len());
        for (k, &y) in ep.target.iter().enumerate() {
            let input = step_input(prev, ep.hour_at(k));
            let forced = k == 0 || p_tf >= 1.0 || (p_tf > 0.0 && rng.gen_bool(p_tf));
            steps.push(if forced {
                DecoderStep::given(input)
            } else {
                DecoderStep::feedback(input)
            });
            prev = y;
        }
        Ok(steps)
    }

    /// Mean squared error over the target and its gradient.
    pub fn episode_loss_and_grad(&self, ep: &EpisodeInstance, p_tf: f64, rng: &mut impl Rng) -> Result<(f64, Seq2Seq)> {
        let steps = Self::training_steps(ep, p_tf, rng)?;
        let cache = self.net.forward(&encoder_inputs(ep), &steps)?;
        let n = ep.target.len() as f64;
        let mut loss = 0.0;
        let d: Vec<f64> = cache
            .outputs
            .iter()
            .zip(&ep.target)
            .map(|(o, y)| {
                loss += (o - y) * (o - y);
                2.0 * (o - y) / n
            })
            .collect();
        let grads = self.net.backward(&cache, &d)?;
        Ok((loss / n, grads))
    }

    /// Training-mode loss without gradients.
    pub fn episode_loss(&self, ep: &EpisodeInstance, p_tf: f64, rng: &mut impl Rng) -> Result<f64> {
        let steps = Self::training_steps(ep, p_tf, rng)?;
        let cache = self.net.forward(&encoder_inputs(ep), &steps)?;
        let n = ep.target.len() as f64;
        Ok(cache
            .outputs
            .iter()
            .zip(&ep.target)
            .map(|(o, y)| (o - y) * (o - y))
            .sum::<f64>()
            / n)
    }

    fn session_unchecked<'a>(&'a self, ep: &EpisodeInstance) -> Result<LstmSession<'a>> {
        Ok(LstmSession {
            net: &self.net,
            state: self.net.encode(&encoder_inputs(ep)),
            prev: last_history(ep)?,
            next: 0,
            hours: (0..ep.target.len()).map(|t| ep.hour_at(t)).collect(),
        })
    }

    pub fn session<'a>(&'a self, ep: &EpisodeInstance) -> Result<LstmSession<'a>> {
        if !self.trained {
            return Err(Error::Usage("predictor parameters are untrained".into()));
        }
        self.session_unchecked(ep)
    }

    /// Roll the decoder over steps `0..t`, feeding the observations given
    /// (at their steps) and its own outputs elsewhere, then forecast steps
    /// `t..t+k`, truncated at the horizon end.
    pub fn predict_horizon(
        &self,
        ep: &EpisodeInstance,
        observations: &[(usize, f64)],
        t: usize,
        k: usize,
    ) -> Result<Vec<f64>> {
        let mut s = self.session(ep)?;
        if t >= ep.target.len() {
            return Err(Error::Usage(format!("step {t} is past the horizon")));
        }
        let mut obs = observations.iter().peekable();
        for step in 0..t {
            while obs.peek().is_some_and(|(ts, _)| *ts < step) {
                obs.next();
            }
            let value = obs.next_if(|(ts, _)| *ts == step).map(|&(_, v)| v);
            s.advance(value)?;
        }
        s.peek(k)
    }

    /// Free-running forecast of the whole target with no observations.
    pub fn free_run(&self, ep: &EpisodeInstance) -> Result<Vec<f64>> {
        self.session_unchecked(ep)?.peek(ep.target.len())
    }

    pub fn meta(&self) -> String {
        format!(
            "kind=lstm_predictor\nhidden={}\nlayers={}\n",
            self.net.hidden_dim(),
            self.net.encoder.layers.len()
        )
    }
}

pub struct LstmSession<'a> {
    net: &'a Seq2Seq,
    state: StackState,
    prev: f64,
    next: usize,
    hours: Vec<u32>,
}

impl LstmSession<'_> {
    fn decode(net: &Seq2Seq, state: &mut StackState, prev: f64, hour: u32) -> Result<f64> {
        let raw = net.decode_step(&step_input(prev, hour), state);
        if !raw.is_finite() {
            return Err(Error::Numerical(format!("predictor produced {raw}")));
        }
        Ok(raw.clamp(CLAMP_LO, CLAMP_HI))
    }
}

impl Forecaster for LstmSession<'_> {
    fn next_step(&self) -> usize {
        self.next
    }

    fn advance(&mut self, observation: Option<f64>) -> Result<f64> {
        let hour = *self
            .hours
            .get(self.next)
            .ok_or_else(|| Error::Usage(format!("forecaster advanced past the horizon ({})", self.hours.len())))?;
        let forecast = Self::decode(self.net, &mut self.state, self.prev, hour)?;
        self.prev = observation.unwrap_or(forecast);
        self.next += 1;
        Ok(forecast)
    }

    fn peek(&self, k: usize) -> Result<Vec<f64>> {
        let mut state = self.state.clone();
        let mut prev = self.prev;
        let end = (self.next + k).min(self.hours.len());
        let mut out = Vec::with_capacity(end - self.next);
        for &hour in &self.hours[self.next..end] {
            prev = Self::decode(self.net, &mut state, prev, hour)?;
            out.push(prev);
        }
        Ok(out)
    }
}

/// Free-running RMSE over a set of episodes (normalized units).
pub fn free_run_rmse(p: &LstmPredictor, episodes: &[EpisodeInstance], exec: Execution) -> Result<f64> {
    let sums = exec.try_map(episodes, |ep| -> Result<(f64, usize)> {
        let f = p.free_run(ep)?;
        Ok((f.iter().zip(&ep.target).map(|(a, b)| (a - b) * (a - b)).sum(), f.len()))
    })?;
    let (se, n) = sums.into_iter().fold((0.0, 0), |(s, n), (a, b)| (s + a, n + b));
    if n == 0 {
        return Ok(f64::NAN);
    }
    Ok((se / n as f64).sqrt())
}

/// Mini-batch Adam with teacher forcing. The parameters with the lowest
/// free-running validation RMSE are returned (the initial ones if no epoch
/// improves, or the last ones if `val` is empty).
pub fn train_predictor(
    train: &[EpisodeInstance],
    val: &[EpisodeInstance],
    cfg: &PredictorConfig,
    exec: Execution,
) -> Result<(LstmPredictor, PredictorReport)> {
    if train.is_empty() {
        return Err(Error::Usage("predictor training needs at least one episode".into()));
    }
    if cfg.batch_size == 0 || cfg.hidden == 0 || cfg.layers == 0 {
        return Err(Error::Config(
            "predictor hidden, layers and batch size must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = LstmPredictor::new(cfg.hidden, cfg.layers, &mut rng);
    let mut adam = Adam::new(cfg.lr);
    let initial_val_rmse = free_run_rmse(&model, val, exec)?;
    let mut best = model.net.clone();
    let mut best_val = initial_val_rmse;
    let mut best_epoch = None;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        let p_tf = teacher_forcing_prob(epoch, cfg.epochs);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let tag = ((epoch as u64) << 32) | b as u64;
            let results = exec.try_map(batch, |&i| {
                let mut ep_rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, tag), i as u64));
                model.episode_loss_and_grad(&train[i], p_tf, &mut ep_rng)
            })?;
            let mut grads = Vec::with_capacity(results.len());
            for (loss, g) in results {
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!("predictor loss is {loss} at epoch {epoch}")));
                }
                loss_sum += loss;
                grads.push(g);
            }
            let total = sum_in_order(grads).expect("non-empty batch");
            adam.step_averaged(&mut model.net, total, batch.len())?;
        }
        let val_rmse = free_run_rmse(&model, val, exec)?;
        let train_loss = loss_sum / train.len() as f64;
        log::info!("predictor epoch {epoch}: p_tf {p_tf:.3} train mse {train_loss:.6} val rmse {val_rmse:.6}");
        if val.is_empty() || val_rmse < best_val {
            best_val = val_rmse;
            best_epoch = Some(epoch);
            copy_params(&mut best, &model.net);
        }
        epochs.push(EpochStats {
            epoch,
            p_tf,
            train_loss,
            val_rmse,
        });
    }
    model.net = best;
    model.trained = true;
    Ok((
        model,
        PredictorReport {
            initial_val_rmse,
            epochs,
            best_epoch,
            best_val_rmse: best_val,
        },
    ))
}
