//! Episode engine: steps the horizon under the observation budget, drives
//! the forecaster and the policy, and records transitions and the profile.

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{
    build_state, compute_reward_with, drqn::select_action, AccuracyTerm, AgentState, DrqnAgent, DrqnNet, DrqnPolicy,
    EpsilonSchedule, Policy, ReplayBuffer, SimilarityTerm, Transition, UniformPolicy,
};
use crate::data::{EpisodeInstance, Normalizer};
use crate::error::{Error, Result};
use crate::estimator::{assemble_profile, CollectedProfile, Estimator};
use crate::exec::{derive_seed, Execution};
use crate::metrics::MetricReport;
use crate::predictor::{Forecaster, Predictor};

/// How the steps left unobserved after the budget runs out are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailPenalty {
    /// On the terminal transition, score the bridged tail in `K`-step chunks
    /// with the same accuracy and DTW terms as an ordinary gap.
    Chunked,
    /// The tail is not scored.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub horizon: usize,
    pub budget: usize,
    pub k: usize,
    pub w1: f64,
    pub w2: f64,
    pub tail_penalty: TailPenalty,
    pub accuracy: AccuracyTerm,
    pub similarity: SimilarityTerm,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            horizon: 168,
            budget: 28,
            k: 12,
            w1: 1.0,
            w2: 10.0,
            tail_penalty: TailPenalty::Chunked,
            accuracy: AccuracyTerm::Sum,
            similarity: SimilarityTerm::Scaled,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 || self.budget > self.horizon {
            return Err(Error::Config(format!(
                "budget must be in 1..={}, got {}",
                self.horizon, self.budget
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("forecast window K must be at least 1".into()));
        }
        Ok(())
    }

    /// Gap of the uniform baseline (`T / O`).
    pub fn uniform_interval(&self) -> usize {
        (self.horizon / self.budget).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: AgentState,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub location: usize,
    pub location_id: String,
    pub window: usize,
    pub observation_times: Vec<usize>,
    /// Step at which each decision was taken, with the gap chosen.
    pub decisions: Vec<(usize, usize)>,
    pub rewards: Vec<f64>,
    /// The forecaster's prediction for every step, made before that step's
    /// observation (if any).
    pub forecasts: Vec<f64>,
    pub profile: CollectedProfile,
    pub waste: usize,
    pub total_return: f64,
}

impl EpisodeLog {
    pub fn observed_values(&self) -> Vec<f64> {
        self.observation_times.iter().map(|&t| self.profile.values[t]).collect()
    }

    pub const CSV_HEADER: &'static str = "t,observed,value,forecast,reward";

    /// One row per step; `reward` is set on decision steps.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let mut rewards = vec![None; self.profile.values.len()];
        for ((t, _), r) in self.decisions.iter().zip(&self.rewards) {
            rewards[*t] = Some(*r);
        }
        for t in 0..self.profile.values.len() {
            let _ = write!(
                out,
                "{t},{},{:.6},{:.6},",
                u8::from(self.profile.observed[t]),
                self.profile.values[t],
                self.forecasts[t]
            );
            if let Some(r) = rewards[t] {
                let _ = write!(out, "{r:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Step-wise environment over one episode (normalized values).
pub struct EpisodeEnv<'a> {
    ep: &'a EpisodeInstance,
    cfg: &'a EpisodeConfig,
    session: Box<dyn Forecaster + 'a>,
    t: usize,
    left: usize,
    done: bool,
    observations: Vec<(usize, f64)>,
    bridging: Vec<(usize, Vec<f64>)>,
    forecasts: Vec<f64>,
    decisions: Vec<(usize, usize)>,
    rewards: Vec<f64>,
    states: Vec<AgentState>,
    lookahead: Vec<f64>,
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what} produced {} at offset {i}", values[i])));
    }
    Ok(())
}

impl<'a> EpisodeEnv<'a> {
    /// Starts the episode with the forced observation at step 0.
    pub fn new(ep: &'a EpisodeInstance, predictor: &'a Predictor, cfg: &'a EpisodeConfig) -> Result<Self> {
        cfg.validate()?;
        if ep.target.len() != cfg.horizon {
            return Err(Error::Dimension(format!(
                "episode target has {} steps, horizon is {}",
                ep.target.len(),
                cfg.horizon
            )));
        }
        let mut env = EpisodeEnv {
            ep,
            cfg,
            session: predictor.session(ep)?,
            t: 0,
            left: cfg.budget,
            done: false,
            observations: Vec::with_capacity(cfg.budget),
            bridging: Vec::new(),
            forecasts: Vec::with_capacity(cfg.horizon),
            decisions: Vec::new(),
            rewards: Vec::new(),
            states: Vec::new(),
            lookahead: Vec::new(),
        };
        env.observe(0)?;
        if env.is_terminal_at(0) {
            env.done = true;
            env.fill_tail()?;
        } else {
            env.refresh_state()?;
        }
        Ok(env)
    }

    fn observe(&mut self, t: usize) -> Result<()> {
        let y = self.ep.target[t];
        let f = self.session.advance(Some(y))?;
        check_finite(&[f], "predictor")?;
        self.forecasts.push(f);
        self.observations.push((t, y));
        self.left -= 1;
        Ok(())
    }

    fn is_terminal_at(&self, t: usize) -> bool {
        self.left == 0 || t + 1 >= self.cfg.horizon
    }

    fn refresh_state(&mut self) -> Result<()> {
        self.lookahead = self.session.peek(self.cfg.k)?;
        check_finite(&self.lookahead, "predictor")?;
        let state = build_state(
            self.ep.target[self.t],
            &self.lookahead,
            self.t,
            self.ep.hour_at(self.t),
            self.left,
            &self.ep.history,
            self.cfg,
        )?;
        self.states.push(state);
        Ok(())
    }

    /// Bridge the steps after the last observation; returns them.
    fn fill_tail(&mut self) -> Result<Vec<f64>> {
        let start = self.session.next_step();
        let mut tail = Vec::with_capacity(self.cfg.horizon - start);
        while self.session.next_step() < self.cfg.horizon {
            tail.push(self.session.advance(None)?);
        }
        check_finite(&tail, "predictor")?;
        if !tail.is_empty() {
            self.forecasts.extend_from_slice(&tail);
            self.bridging.push((start, tail.clone()));
        }
        Ok(tail)
    }

    fn tail_penalty(&self, start: usize, tail: &[f64]) -> Result<f64> {
        if self.cfg.tail_penalty == TailPenalty::None || tail.is_empty() {
            return Ok(0.0);
        }
        let mut penalty = 0.0;
        for (c, chunk) in tail.chunks(self.cfg.k).enumerate() {
            let s = start + c * self.cfg.k;
            penalty -= compute_reward_with(
                chunk,
                &self.ep.target[s..s + chunk.len()],
                self.cfg.w1,
                0.0,
                0,
                self.cfg.accuracy,
                self.cfg.similarity,
            )?;
        }
        Ok(penalty)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn budget_left(&self) -> usize {
        self.left
    }

    /// States seen so far, oldest first; the last is the current one.
    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    /// Apply gap `a` (clipped at the horizon end).
    pub fn step(&mut self, a: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Usage("episode already finished".into()));
        }
        if a == 0 || a > self.cfg.k {
            return Err(Error::Usage(format!("action {a} outside 1..={}", self.cfg.k)));
        }
        let t = self.t;
        let horizon = self.cfg.horizon;
        let a_eff = a.min(horizon - t);
        let new_t = t + a_eff;
        let seg_len = a_eff.min(horizon - 1 - t);

        let mut bridge = Vec::with_capacity(a_eff);
        for _ in 1..a_eff {
            bridge.push(self.session.advance(None)?);
        }
        check_finite(&bridge, "predictor")?;
        if !bridge.is_empty() {
            self.forecasts.extend_from_slice(&bridge);
            self.bridging.push((t + 1, bridge));
        }
        if new_t < horizon {
            self.observe(new_t)?;
        }
        self.decisions.push((t, a));

        let done = self.is_terminal_at(new_t);
        let (waste, tail_penalty) = if done {
            let tail_start = self.session.next_step();
            let tail = self.fill_tail()?;
            (self.left, self.tail_penalty(tail_start, &tail)?)
        } else {
            (0, 0.0)
        };
        let used = &self.lookahead[..seg_len];
        let truth = &self.ep.target[t + 1..t + 1 + seg_len];
        let reward = compute_reward_with(
            used,
            truth,
            self.cfg.w1,
            self.cfg.w2,
            waste,
            self.cfg.accuracy,
            self.cfg.similarity,
        )? - tail_penalty;
        self.rewards.push(reward);
        self.t = new_t;
        self.done = done;

        let next_state = if done {
            AgentState::terminal(self.cfg.k)
        } else {
            self.refresh_state()?;
            self.states.last().expect("state just pushed").clone()
        };
        Ok(StepOutcome {
            reward,
            next_state,
            done,
        })
    }

    pub fn finish(self) -> Result<EpisodeLog> {
        if !self.done {
            return Err(Error::Usage("episode is not finished".into()));
        }
        let profile = assemble_profile(
            &self.observations,
            &self.bridging,
            &self.ep.history,
            self.cfg.horizon,
            self.ep.hour_of_day_offset,
        )?;
        Ok(EpisodeLog {
            location: self.ep.location,
            location_id: self.ep.location_id.clone(),
            window: self.ep.window,
            observation_times: self.observations.iter().map(|&(t, _)| t).collect(),
            total_return: self.rewards.iter().sum(),
            decisions: self.decisions,
            rewards: self.rewards,
            forecasts: self.forecasts,
            profile,
            waste: self.left,
        })
    }
}

pub fn run_episode(
    ep: &EpisodeInstance,
    predictor: &Predictor,
    policy: &dyn Policy,
    cfg: &EpisodeConfig,
    rng: &mut dyn RngCore,
) -> Result<EpisodeLog> {
    let mut env = EpisodeEnv::new(ep, predictor, cfg)?;
    while !env.is_done() {
        let a = policy.select(env.states(), env.t(), rng)?;
        env.step(a)?;
    }
    env.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which ε decays.
    pub epsilon_decay_fraction: f64,
    /// Greedy validation every this many episodes; 0 disables it.
    pub eval_every: usize,
    /// Learn from potential-shaped rewards (see [`shaping_rate`]). Logged
    /// returns are always unshaped.
    pub shaping: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            episodes: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_fraction: 0.6,
            eval_every: 0,
            shaping: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow {
    pub episode: usize,
    pub location: usize,
    pub window: usize,
    pub total_return: f64,
    /// Mean TD loss over the episode's train steps (NaN if none ran).
    pub loss: f64,
    pub epsilon: f64,
    pub observations: usize,
}

pub const TRAINING_LOG_HEADER: &str = "episode,location,window,return,loss,epsilon,observations";

impl TrainingRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{}",
            self.episode, self.location, self.window, self.total_return, self.loss, self.epsilon, self.observations
        )
    }
}

/// Train the agent online against a frozen predictor: one ε-greedy episode
/// at a time, a train step per decision once the buffer holds a batch.
pub fn run_training(
    agent: &mut DrqnAgent,
    predictor: &Predictor,
    episodes: &[EpisodeInstance],
    cfg: &EpisodeConfig,
    tcfg: &TrainingConfig,
    exec: Execution,
) -> Result<Vec<TrainingRow>> {
    run_training_validated(agent, predictor, episodes, &[], cfg, tcfg, exec).map(|(rows, _)| rows)
}

/// Mean cost per horizon step of the uniform policy on `episodes`.
///
/// Shaping uses the potential `Φ(s) = -rate * (T - t)`, zero at terminal
/// states, which adds `γΦ(s') - Φ(s)` to every reward. That leaves the
/// optimal policy unchanged and centers the values near zero, so the
/// small differences between gaps are not swamped by the cost still to come.
pub fn shaping_rate(
    predictor: &Predictor,
    episodes: &[EpisodeInstance],
    cfg: &EpisodeConfig,
    exec: Execution,
) -> Result<f64> {
    let policy = UniformPolicy {
        interval: cfg.uniform_interval(),
        horizon: cfg.horizon,
    };
    let returns = exec.try_map(episodes, |ep| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        run_episode(ep, predictor, &policy, cfg, &mut rng).map(|log| log.total_return)
    })?;
    let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
    Ok(-mean / cfg.horizon as f64)
}

/// Mean greedy return on `episodes`.
pub fn greedy_return(
    agent: &DrqnAgent,
    predictor: &Predictor,
    episodes: &[EpisodeInstance],
    cfg: &EpisodeConfig,
    exec: Execution,
) -> Result<f64> {
    let policy = DrqnPolicy {
        net: &agent.online,
        epsilon: 0.0,
        seq_len: agent.cfg.seq_len.max(1),
    };
    let returns = exec.try_map(episodes, |ep| {
        // ε = 0 never draws from the RNG.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        run_episode(ep, predictor, &policy, cfg, &mut rng).map(|log| log.total_return)
    })?;
    Ok(returns.iter().sum::<f64>() / returns.len().max(1) as f64)
}

/// As [`run_training`], and every `tcfg.eval_every` episodes the greedy
/// policy is scored on `val`. The online network with the best validation
/// return is kept. Returns the training log and `(episode, val_return)`.
pub fn run_training_validated(
    agent: &mut DrqnAgent,
    predictor: &Predictor,
    episodes: &[EpisodeInstance],
    val: &[EpisodeInstance],
    cfg: &EpisodeConfig,
    tcfg: &TrainingConfig,
    exec: Execution,
) -> Result<(Vec<TrainingRow>, Vec<(usize, f64)>)> {
    if episodes.is_empty() || tcfg.episodes == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let schedule = EpsilonSchedule::over(
        tcfg.episodes,
        tcfg.epsilon_decay_fraction,
        tcfg.epsilon_start,
        tcfg.epsilon_end,
    );
    let mut buffer = ReplayBuffer::new(agent.cfg.buffer_capacity);
    let mut rows = Vec::with_capacity(tcfg.episodes);
    let mut validation = Vec::new();
    let mut best: Option<(f64, DrqnNet)> = None;
    let seq_len = agent.cfg.seq_len.max(1);
    let batch_size = agent.cfg.batch_size.max(1);
    let rate = if tcfg.shaping {
        let r = shaping_rate(predictor, episodes, cfg, exec)?;
        log::info!("drqn: shaping at {r:.5} per step");
        r
    } else {
        0.0
    };
    let gamma = agent.cfg.gamma;
    let potential = |t: usize| -rate * (cfg.horizon - t) as f64;

    for e in 0..tcfg.episodes {
        let epsilon = schedule.value(e);
        let ep = &episodes[rand::Rng::gen_range(&mut agent.rng, 0..episodes.len())];
        let mut env = EpisodeEnv::new(ep, predictor, cfg)?;
        let mut losses = Vec::new();
        while !env.is_done() {
            let states = env.states();
            let recent = &states[states.len().saturating_sub(seq_len)..];
            let a = select_action(&agent.online, recent, epsilon, &mut agent.rng)?;
            let state = env.states().last().expect("live episode has a state").clone();
            let t = env.t();
            let out = env.step(a)?;
            let next = if out.done { 0.0 } else { potential(env.t()) };
            buffer.push(Transition {
                episode: e as u64,
                state,
                action: a,
                reward: out.reward + gamma * next - potential(t),
                next_state: out.next_state,
                done: out.done,
            });
            if buffer.len() >= batch_size {
                let batch = buffer.sample(batch_size, seq_len, &mut agent.rng);
                losses.push(agent.train_step(&batch, exec)?);
            }
        }
        let log = env.finish()?;
        let loss = if losses.is_empty() {
            f64::NAN
        } else {
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        log::debug!(
            "drqn episode {e}: return {:.4} loss {loss:.5} eps {epsilon:.3}",
            log.total_return
        );
        rows.push(TrainingRow {
            episode: e,
            location: ep.location,
            window: ep.window,
            total_return: log.total_return,
            loss,
            epsilon,
            observations: log.observation_times.len(),
        });

        if tcfg.eval_every > 0 && !val.is_empty() && (e + 1) % tcfg.eval_every == 0 {
            let r = greedy_return(agent, predictor, val, cfg, exec)?;
            log::debug!("drqn validation after {} episodes: return {r:.4}", e + 1);
            validation.push((e + 1, r));
            if best.as_ref().map_or(true, |(b, _)| r > *b) {
                best = Some((r, agent.online.clone()));
            }
        }
    }
    if let Some((r, net)) = best {
        log::info!("drqn: keeping the network with validation return {r:.4}");
        agent.online = net;
    }
    Ok((rows, validation))
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricReport,
    pub logs: Vec<EpisodeLog>,
    /// Final estimates in normalized units.
    pub estimates: Vec<Vec<f64>>,
}

/// Run every episode, refine with the estimator, and score in original
/// units. Episodes are independent and run under `exec`; each gets its own
/// RNG stream derived from `seed`.
pub fn evaluate_configuration(
    episodes: &[EpisodeInstance],
    predictor: &Predictor,
    policy: &(dyn Policy + Sync),
    estimator: &Estimator,
    cfg: &EpisodeConfig,
    normalizer: &Normalizer,
    seed: u64,
    exec: Execution,
) -> Result<Evaluation> {
    let idx: Vec<usize> = (0..episodes.len()).collect();
    let results = exec.try_map(&idx, |&i| -> Result<(EpisodeLog, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let log = run_episode(&episodes[i], predictor, policy, cfg, &mut rng)?;
        let est = estimator.estimate(&log.profile)?;
        Ok((log, est))
    })?;
    let (logs, estimates): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let raw_est: Vec<Vec<f64>> = estimates.iter().map(|e| normalizer.invert_slice(e)).collect();
    let raw_truth: Vec<Vec<f64>> = episodes.iter().map(|ep| normalizer.invert_slice(&ep.target)).collect();
    let raw_obs: Vec<Vec<f64>> = logs
        .iter()
        .map(|l| normalizer.invert_slice(&l.observed_values()))
        .collect();
    let report = MetricReport::from_episodes(&raw_est, &raw_truth, &raw_obs)?;
    Ok(Evaluation {
        report,
        logs,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{FixedPolicy, RandomPolicy, UniformPolicy};

    fn episode(seed: u64) -> EpisodeInstance {
        let wave = |i: usize| 0.3 + 0.2 * ((i as f64 + seed as f64) * 0.26).sin();
        EpisodeInstance {
            location: seed as usize,
            location_id: seed.to_string(),
            window: 0,
            history: (0..48).map(wave).collect(),
            target: (48..216).map(wave).collect(),
            hour_of_day_offset: (seed % 24) as u32,
        }
    }

    fn run(policy: &dyn Policy, predictor: &Predictor) -> EpisodeLog {
        let cfg = EpisodeConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        run_episode(&episode(3), predictor, policy, &cfg, &mut rng).unwrap()
    }

    #[test]
    fn uniform_policy_observes_every_six_hours() {
        let log = run(
            &UniformPolicy {
                interval: 6,
                horizon: 168,
            },
            &Predictor::ArKalman,
        );
        assert_eq!(log.observation_times, (0..28).map(|i| 6 * i).collect::<Vec<_>>());
        assert_eq!(log.waste, 0);
        assert!(log.rewards.iter().all(|&r| r <= 0.0));
    }

    #[test]
    fn widest_gap_wastes_half_the_budget() {
        let cfg = EpisodeConfig {
            tail_penalty: TailPenalty::None,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let log = run_episode(&episode(1), &Predictor::Oracle, &FixedPolicy(12), &cfg, &mut rng).unwrap();
        assert_eq!(log.observation_times, (0..14).map(|i| 12 * i).collect::<Vec<_>>());
        assert_eq!(log.waste, 14);
        assert_eq!(*log.rewards.last().unwrap(), -140.0);
        assert!(log.rewards[..log.rewards.len() - 1].iter().all(|&r| r == 0.0));
    }

    #[test]
    fn oracle_rewards_are_zero_without_waste() {
        let log = run(
            &UniformPolicy {
                interval: 6,
                horizon: 168,
            },
            &Predictor::Oracle,
        );
        assert!(log.rewards.iter().all(|&r| r == 0.0));
        let log = run(&FixedPolicy(1), &Predictor::Oracle);
        assert!(log.rewards.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn front_loading_pays_for_the_tail() {
        let ep = episode(2);
        let chunked = EpisodeConfig::default();
        let none = EpisodeConfig {
            tail_penalty: TailPenalty::None,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = run_episode(&ep, &Predictor::Persistence, &FixedPolicy(1), &chunked, &mut rng).unwrap();
        let b = run_episode(&ep, &Predictor::Persistence, &FixedPolicy(1), &none, &mut rng).unwrap();
        assert_eq!(a.observation_times, (0..28).collect::<Vec<_>>());
        assert!(a.total_return < b.total_return - 1.0);
    }

    #[test]
    fn random_policy_keeps_ledger_and_coverage() {
        let cfg = EpisodeConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in 0..50 {
            let ep = episode(s);
            let log = run_episode(&ep, &Predictor::ArKalman, &RandomPolicy { k: 12 }, &cfg, &mut rng).unwrap();
            assert_eq!(log.observation_times.len() + log.waste, 28);
            assert_eq!(log.profile.observed_count(), log.observation_times.len());
            assert_eq!(log.forecasts.len(), 168);
            for &t in &log.observation_times {
                assert_eq!(log.profile.values[t], ep.target[t]);
            }
            assert!(log.rewards.iter().all(|&r| r <= 0.0));
        }
    }

    #[test]
    fn episode_csv_has_a_row_per_step() {
        let log = run(
            &UniformPolicy {
                interval: 6,
                horizon: 168,
            },
            &Predictor::Persistence,
        );
        let csv = log.to_csv();
        assert_eq!(csv.lines().count(), 169);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,1,"));
    }

    #[test]
    fn training_is_deterministic_and_noop_without_episodes() {
        use crate::controller::{state_dim, DrqnConfig};
        let cfg = EpisodeConfig::default();
        let dcfg = DrqnConfig {
            dense: [8, 8, 4],
            lstm_hidden: 4,
            batch_size: 4,
            sync_every: 10,
            lr: 1e-3,
            ..Default::default()
        };
        let tcfg = TrainingConfig {
            episodes: 3,
            ..Default::default()
        };
        let eps: Vec<_> = (0..4).map(episode).collect();
        let mut idle = DrqnAgent::new(state_dim(12), dcfg.clone());
        let before = idle.online.clone();
        assert!(run_training(
            &mut idle,
            &Predictor::Persistence,
            &[],
            &cfg,
            &tcfg,
            Execution::Parallel
        )
        .unwrap()
        .is_empty());
        assert_eq!(idle.online, before);

        let mut a = DrqnAgent::new(state_dim(12), dcfg.clone());
        let mut b = DrqnAgent::new(state_dim(12), dcfg);
        let la = run_training(&mut a, &Predictor::Persistence, &eps, &cfg, &tcfg, Execution::Parallel).unwrap();
        let lb = run_training(
            &mut b,
            &Predictor::Persistence,
            &eps,
            &cfg,
            &tcfg,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(la.len(), 3);
        assert_eq!(format!("{la:?}"), format!("{lb:?}"));
        assert_eq!(a.online, b.online);
        assert_ne!(a.online, before);
    }

    #[test]
    fn shaping_changes_learning_but_not_logged_returns() {
        use crate::controller::{state_dim, DrqnConfig};
        let cfg = EpisodeConfig::default();
        let dcfg = DrqnConfig {
            dense: [8, 8, 4],
            lstm_hidden: 4,
            batch_size: 4,
            lr: 1e-3,
            ..Default::default()
        };
        let eps: Vec<_> = (0..4).map(episode).collect();
        let rate = shaping_rate(&Predictor::ArKalman, &eps, &cfg, Execution::Sequential).unwrap();
        assert!(rate > 0.0);
        // Fully random actions, so both runs visit the same transitions.
        let tcfg = |shaping| TrainingConfig {
            episodes: 3,
            epsilon_start: 1.0,
            epsilon_end: 1.0,
            shaping,
            ..Default::default()
        };
        let mut plain = DrqnAgent::new(state_dim(12), dcfg.clone());
        let mut shaped = DrqnAgent::new(state_dim(12), dcfg);
        let lp = run_training(
            &mut plain,
            &Predictor::ArKalman,
            &eps,
            &cfg,
            &tcfg(false),
            Execution::Sequential,
        )
        .unwrap();
        let ls = run_training(
            &mut shaped,
            &Predictor::ArKalman,
            &eps,
            &cfg,
            &tcfg(true),
            Execution::Sequential,
        )
        .unwrap();
        let returns = |rows: &[TrainingRow]| rows.iter().map(|r| r.total_return).collect::<Vec<_>>();
        assert_eq!(returns(&lp), returns(&ls));
        assert_ne!(plain.online, shaped.online);
    }

    #[test]
    fn perfect_profile_scores_zero() {
        let eps: Vec<_> = (0..3).map(episode).collect();
        let norm = Normalizer::new(0.0, 2.0).unwrap();
        let cfg = EpisodeConfig::default();
        let ev = evaluate_configuration(
            &eps,
            &Predictor::Oracle,
            &UniformPolicy {
                interval: 6,
                horizon: 168,
            },
            &Estimator::None,
            &cfg,
            &norm,
            0,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(ev.report.rmse, 0.0);
        assert_eq!(ev.report.mae, 0.0);
        assert_eq!(ev.report.mape_pct, 0.0);
        let again = evaluate_configuration(
            &eps,
            &Predictor::Oracle,
            &UniformPolicy {
                interval: 6,
                horizon: 168,
            },
            &Estimator::None,
            &cfg,
            &norm,
            0,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(ev.report.coverage, again.report.coverage);
    }
}
