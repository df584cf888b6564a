//! Observation scheduling: agent state, reward, policies and the recurrent
//! Q-network that picks the gap to the next observation.

pub mod drqn;
pub mod replay;

pub use drqn::{DrqnAgent, DrqnConfig, DrqnNet};
pub use replay::{ReplayBuffer, SequenceSample, Transition};

use rand::Rng;

use crate::data::HISTORY_LEN;
use crate::error::{dim_check, Error, Result};
use crate::metrics::dtw_distance;
use crate::predictor::hour_encoding;
use crate::sim::EpisodeConfig;

/// Flat state width for a forecast window of `k`:
/// `x_t, forecast[k], t_local, sin, cos, o_ava, history[48]`.
pub fn state_dim(k: usize) -> usize {
    5 + k + HISTORY_LEN
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub values: Vec<f64>,
    /// Which forecast slots hold a real forecast (false past the horizon).
    pub forecast_mask: Vec<bool>,
}

impl AgentState {
    /// Marker stored as the successor of a terminal transition.
    pub fn terminal(k: usize) -> AgentState {
        AgentState {
            values: vec![0.0; state_dim(k)],
            forecast_mask: vec![false; k],
        }
    }
}

/// Flatten the decision-time inputs in the fixed order
/// `[x_t, forecast (zero-padded to K), t/T, sin(hour), cos(hour), o_ava/O, history]`.
pub fn build_state(
    x_t: f64,
    forecast: &[f64],
    t_local: usize,
    hour: u32,
    o_ava: usize,
    history: &[f64],
    cfg: &EpisodeConfig,
) -> Result<AgentState> {
    dim_check("state history", HISTORY_LEN, history.len())?;
    if forecast.len() > cfg.k {
        return Err(Error::Dimension(format!(
            "state forecast: at most {} values, got {}",
            cfg.k,
            forecast.len()
        )));
    }
    if o_ava > cfg.budget {
        return Err(Error::Usage(format!(
            "{o_ava} observations left exceeds the budget {}",
            cfg.budget
        )));
    }
    let mut values = Vec::with_capacity(state_dim(cfg.k));
    values.push(x_t);
    values.extend_from_slice(forecast);
    values.resize(1 + cfg.k, 0.0);
    values.push(t_local as f64 / cfg.horizon as f64);
    values.extend(hour_encoding(hour));
    values.push(o_ava as f64 / cfg.budget as f64);
    values.extend_from_slice(history);
    let mut forecast_mask = vec![true; forecast.len()];
    forecast_mask.resize(cfg.k, false);
    Ok(AgentState { values, forecast_mask })
}

/// How a segment's absolute errors enter the accuracy term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccuracyTerm {
    /// Mean over the segment.
    Mean,
    /// Sum over the segment, so every bridged hour is charged once.
    Sum,
}

/// How the DTW distance of a segment enters the similarity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityTerm {
    /// The distance itself.
    Dtw,
    /// The distance times the square root of the segment length. A constant
    /// error then costs the same per hour whatever the gap.
    Scaled,
}

/// `-(mean |forecast - truth|) - w1 * DTW(forecast, truth) - w2 * waste`.
pub fn compute_reward(forecast: &[f64], truth: &[f64], w1: f64, w2: f64, waste: usize) -> Result<f64> {
    compute_reward_with(forecast, truth, w1, w2, waste, AccuracyTerm::Mean, SimilarityTerm::Dtw)
}

pub fn compute_reward_with(
    forecast: &[f64],
    truth: &[f64],
    w1: f64,
    w2: f64,
    waste: usize,
    accuracy: AccuracyTerm,
    similarity: SimilarityTerm,
) -> Result<f64> {
    dim_check("reward segment", forecast.len(), truth.len())?;
    if forecast.is_empty() {
        return Ok(-w2 * waste as f64);
    }
    let mut acc = forecast.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>();
    if accuracy == AccuracyTerm::Mean {
        acc /= forecast.len() as f64;
    }
    let mut dtw = dtw_distance(forecast, truth)?;
    if similarity == SimilarityTerm::Scaled {
        dtw *= (forecast.len() as f64).sqrt();
    }
    Ok(-acc - w1 * dtw - w2 * waste as f64)
}

/// Fixed-interval baseline, clipped so the step never passes the horizon.
pub fn uniform_policy(t_local: usize, interval: usize, horizon: usize) -> usize {
    interval.min(horizon.saturating_sub(t_local)).max(1)
}

/// Linear decay from `start` to `end` over the first `decay_episodes`
/// episodes, then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: usize,
}

impl EpsilonSchedule {
    /// Decay over `fraction` of `total` episodes.
    pub fn over(total: usize, fraction: f64, start: f64, end: f64) -> EpsilonSchedule {
        EpsilonSchedule {
            start,
            end,
            decay_episodes: (total as f64 * fraction).ceil() as usize,
        }
    }

    pub fn value(&self, episode: usize) -> f64 {
        if episode >= self.decay_episodes {
            self.end
        } else {
            self.start + (self.end - self.start) * episode as f64 / self.decay_episodes as f64
        }
    }
}

/// Chooses the gap to the next observation.
pub trait Policy {
    /// `recent` holds the episode's states so far, oldest first, ending with
    /// the current one.
    fn select(&self, recent: &[AgentState], t_local: usize, rng: &mut dyn rand::RngCore) -> Result<usize>;

    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy {
    pub interval: usize,
    pub horizon: usize,
}

impl Policy for UniformPolicy {
    fn select(&self, _: &[AgentState], t_local: usize, _: &mut dyn rand::RngCore) -> Result<usize> {
        Ok(uniform_policy(t_local, self.interval, self.horizon))
    }

    fn name(&self) -> &'static str {
        "uniform"
    }
}

/// Always the same gap.
#[derive(Debug, Clone, Copy)]
pub struct FixedPolicy(pub usize);

impl Policy for FixedPolicy {
    fn select(&self, _: &[AgentState], _: usize, _: &mut dyn rand::RngCore) -> Result<usize> {
        Ok(self.0)
    }

    fn name(&self) -> &'static str {
        "fixed"
    }
}

/// Uniform over `1..=k`.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub k: usize,
}

impl Policy for RandomPolicy {
    fn select(&self, _: &[AgentState], _: usize, rng: &mut dyn rand::RngCore) -> Result<usize> {
        Ok(rng.gen_range(1..=self.k))
    }

    fn name(&self) -> &'static str {
        "random"
    }
}

/// ε-greedy over a Q-network's outputs.
pub struct DrqnPolicy<'a> {
    pub net: &'a DrqnNet,
    pub epsilon: f64,
    pub seq_len: usize,
}

impl Policy for DrqnPolicy<'_> {
    fn select(&self, recent: &[AgentState], _: usize, rng: &mut dyn rand::RngCore) -> Result<usize> {
        let from = recent.len().saturating_sub(self.seq_len);
        drqn::select_action(self.net, &recent[from..], self.epsilon, rng)
    }

    fn name(&self) -> &'static str {
        "drqn"
    }
}
