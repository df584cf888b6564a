//! Flat `key=value` experiment configuration with presets.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::controller::{AccuracyTerm, DrqnConfig, SimilarityTerm};
use crate::data::{SplitSpec, TARGET_LEN};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, GprParams};
use crate::exec::derive_seed;
use crate::predictor::lstm::PredictorConfig;
use crate::sim::{EpisodeConfig, TailPenalty, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(Error::Config(format!("unknown preset {s:?} (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Lstm,
    ArKalman,
    /// No learned forecaster; gaps are bridged by persistence.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Drqn,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Lstm,
    Gpr,
    None,
}

impl PredictorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictorKind::Lstm => "lstm",
            PredictorKind::ArKalman => "ar4_kalman",
            PredictorKind::None => "none",
        }
    }
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Drqn => "drqn",
            PolicyKind::Uniform => "uniform",
        }
    }
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Lstm => "lstm",
            EstimatorKind::Gpr => "gpr",
            EstimatorKind::None => "none",
        }
    }
}

/// GP signal variance: a fixed value or the variance of the normalized
/// training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalVar {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Empty means `predictor+policy+estimator`.
    pub name: String,
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub split: [f64; 3],
    /// Per-partition location caps; 0 keeps all.
    pub train_locations: usize,
    pub val_locations: usize,
    pub test_locations: usize,
    /// Windows kept per location; 0 keeps all.
    pub episodes_per_location: usize,

    pub predictor: PredictorKind,
    pub policy: PolicyKind,
    pub estimator: EstimatorKind,

    pub horizon: usize,
    pub budget: usize,
    pub k: usize,
    pub w1: f64,
    pub w2: f64,
    pub tail_penalty: TailPenalty,
    pub reward_accuracy: AccuracyTerm,
    pub reward_similarity: SimilarityTerm,

    pub predictor_hidden: usize,
    pub predictor_layers: usize,
    pub predictor_epochs: usize,
    pub predictor_batch: usize,
    pub predictor_lr: f64,

    pub drqn_dense: [usize; 3],
    pub drqn_lstm_hidden: usize,
    pub drqn_lr: f64,
    pub gamma: f64,
    pub drqn_batch: usize,
    pub seq_len: usize,
    pub buffer: usize,
    pub sync_every: u64,
    pub drqn_episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
    /// Greedy validation cadence in episodes; 0 keeps the last network.
    pub drqn_eval_every: usize,
    pub drqn_shaping: bool,

    pub estimator_hidden: usize,
    pub estimator_layers: usize,
    pub estimator_epochs: usize,
    pub estimator_batch: usize,
    pub estimator_lr: f64,
    pub estimator_mask: bool,

    pub gpr_length_scale: f64,
    pub gpr_signal_var: SignalVar,
    pub gpr_noise_var: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(Preset::Full)
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> ExperimentConfig {
        let full = ExperimentConfig {
            name: String::new(),
            data: PathBuf::from("data.csv"),
            out: PathBuf::from("out"),
            seed: 0,
            split: [0.7, 0.2, 0.1],
            train_locations: 0,
            val_locations: 0,
            test_locations: 0,
            episodes_per_location: 0,
            predictor: PredictorKind::Lstm,
            policy: PolicyKind::Drqn,
            estimator: EstimatorKind::Lstm,
            horizon: TARGET_LEN,
            budget: 28,
            k: 12,
            w1: 1.0,
            w2: 10.0,
            tail_penalty: TailPenalty::Chunked,
            reward_accuracy: AccuracyTerm::Sum,
            reward_similarity: SimilarityTerm::Scaled,
            predictor_hidden: 128,
            predictor_layers: 2,
            predictor_epochs: 50,
            predictor_batch: 16,
            predictor_lr: 1e-4,
            drqn_dense: [128, 128, 64],
            drqn_lstm_hidden: 64,
            drqn_lr: 1e-4,
            gamma: 0.99,
            drqn_batch: 32,
            seq_len: 12,
            buffer: 5000,
            sync_every: 200,
            drqn_episodes: 5000,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_fraction: 0.6,
            drqn_eval_every: 250,
            drqn_shaping: true,
            estimator_hidden: 256,
            estimator_layers: 2,
            estimator_epochs: 30,
            estimator_batch: 16,
            estimator_lr: 1e-4,
            estimator_mask: true,
            gpr_length_scale: 6.0,
            gpr_signal_var: SignalVar::Auto,
            gpr_noise_var: 1e-4,
        };
        match p {
            Preset::Full => full,
            Preset::Desk => ExperimentConfig {
                train_locations: 30,
                val_locations: 8,
                test_locations: 8,
                episodes_per_location: 4,
                predictor_hidden: 32,
                predictor_layers: 1,
                predictor_epochs: 30,
                predictor_batch: 8,
                predictor_lr: 3e-3,
                drqn_dense: [64, 64, 32],
                drqn_lstm_hidden: 32,
                drqn_lr: 1e-3,
                drqn_batch: 16,
                drqn_episodes: 1000,
                sync_every: 50,
                drqn_eval_every: 50,
                estimator_hidden: 32,
                estimator_layers: 1,
                estimator_epochs: 30,
                estimator_batch: 8,
                estimator_lr: 3e-3,
                ..full
            },
        }
    }

    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "name" => self.name = v.to_string(),
            "data" => self.data = PathBuf::from(v),
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            "split" => self.split = SplitSpec::parse_ratios(v)?,
            "train_locations" => self.train_locations = parse(key, v)?,
            "val_locations" => self.val_locations = parse(key, v)?,
            "test_locations" => self.test_locations = parse(key, v)?,
            "episodes_per_location" => self.episodes_per_location = parse(key, v)?,
            "predictor" => {
                self.predictor = match v {
                    "lstm" => PredictorKind::Lstm,
                    "ar4_kalman" => PredictorKind::ArKalman,
                    "none" => PredictorKind::None,
                    _ => {
                        return Err(Error::Config(format!(
                            "predictor must be lstm, ar4_kalman or none, got {v:?}"
                        )))
                    }
                }
            }
            "policy" => {
                self.policy = match v {
                    "drqn" => PolicyKind::Drqn,
                    "uniform" => PolicyKind::Uniform,
                    _ => return Err(Error::Config(format!("policy must be drqn or uniform, got {v:?}"))),
                }
            }
            "estimator" => {
                self.estimator = match v {
                    "lstm" => EstimatorKind::Lstm,
                    "gpr" => EstimatorKind::Gpr,
                    "none" => EstimatorKind::None,
                    _ => return Err(Error::Config(format!("estimator must be lstm, gpr or none, got {v:?}"))),
                }
            }
            "horizon" => self.horizon = parse(key, v)?,
            "budget" => self.budget = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "w1" => self.w1 = parse(key, v)?,
            "w2" => self.w2 = parse(key, v)?,
            "tail_penalty" => {
                self.tail_penalty = match v {
                    "chunked" => TailPenalty::Chunked,
                    "none" => TailPenalty::None,
                    _ => {
                        return Err(Error::Config(format!(
                            "tail_penalty must be chunked or none, got {v:?}"
                        )))
                    }
                }
            }
            "reward_accuracy" => {
                self.reward_accuracy = match v {
                    "sum" => AccuracyTerm::Sum,
                    "mean" => AccuracyTerm::Mean,
                    _ => return Err(Error::Config(format!("reward_accuracy must be sum or mean, got {v:?}"))),
                }
            }
            "reward_similarity" => {
                self.reward_similarity = match v {
                    "scaled" => SimilarityTerm::Scaled,
                    "dtw" => SimilarityTerm::Dtw,
                    _ => {
                        return Err(Error::Config(format!(
                            "reward_similarity must be scaled or dtw, got {v:?}"
                        )))
                    }
                }
            }
            "predictor_hidden" => self.predictor_hidden = parse(key, v)?,
            "predictor_layers" => self.predictor_layers = parse(key, v)?,
            "predictor_epochs" => self.predictor_epochs = parse(key, v)?,
            "predictor_batch" => self.predictor_batch = parse(key, v)?,
            "predictor_lr" => self.predictor_lr = parse(key, v)?,
            "drqn_dense" => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(Error::Config(format!("drqn_dense needs three widths, got {v:?}")));
                }
                for (d, p) in self.drqn_dense.iter_mut().zip(parts) {
                    *d = parse(key, p)?;
                }
            }
            "drqn_lstm_hidden" => self.drqn_lstm_hidden = parse(key, v)?,
            "drqn_lr" => self.drqn_lr = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "drqn_batch" => self.drqn_batch = parse(key, v)?,
            "seq_len" => self.seq_len = parse(key, v)?,
            "buffer" => self.buffer = parse(key, v)?,
            "sync_every" => self.sync_every = parse(key, v)?,
            "drqn_episodes" => self.drqn_episodes = parse(key, v)?,
            "epsilon_start" => self.epsilon_start = parse(key, v)?,
            "epsilon_end" => self.epsilon_end = parse(key, v)?,
            "epsilon_decay_fraction" => self.epsilon_decay_fraction = parse(key, v)?,
            "drqn_eval_every" => self.drqn_eval_every = parse(key, v)?,
            "drqn_shaping" => self.drqn_shaping = parse_bool(key, v)?,
            "estimator_hidden" => self.estimator_hidden = parse(key, v)?,
            "estimator_layers" => self.estimator_layers = parse(key, v)?,
            "estimator_epochs" => self.estimator_epochs = parse(key, v)?,
            "estimator_batch" => self.estimator_batch = parse(key, v)?,
            "estimator_lr" => self.estimator_lr = parse(key, v)?,
            "estimator_mask" => self.estimator_mask = parse_bool(key, v)?,
            "gpr_length_scale" => self.gpr_length_scale = parse(key, v)?,
            "gpr_signal_var" => {
                self.gpr_signal_var = if v == "auto" {
                    SignalVar::Auto
                } else {
                    SignalVar::Fixed(parse(key, v)?)
                }
            }
            "gpr_noise_var" => self.gpr_noise_var = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Apply `key=value` lines on top of `self`. Blank lines and `#` comments
    /// are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, base: Preset) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::preset(base);
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Every field, one per line, in a form [`apply_text`](Self::apply_text) reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("name", self.name.clone());
        kv("data", self.data.display().to_string());
        kv("out", self.out.display().to_string());
        kv("seed", self.seed.to_string());
        kv(
            "split",
            format!("{},{},{}", self.split[0], self.split[1], self.split[2]),
        );
        kv("train_locations", self.train_locations.to_string());
        kv("val_locations", self.val_locations.to_string());
        kv("test_locations", self.test_locations.to_string());
        kv("episodes_per_location", self.episodes_per_location.to_string());
        kv("predictor", self.predictor.as_str().into());
        kv("policy", self.policy.as_str().into());
        kv("estimator", self.estimator.as_str().into());
        kv("horizon", self.horizon.to_string());
        kv("budget", self.budget.to_string());
        kv("k", self.k.to_string());
        kv("w1", self.w1.to_string());
        kv("w2", self.w2.to_string());
        kv(
            "tail_penalty",
            match self.tail_penalty {
                TailPenalty::Chunked => "chunked",
                TailPenalty::None => "none",
            }
            .into(),
        );
        kv(
            "reward_accuracy",
            match self.reward_accuracy {
                AccuracyTerm::Sum => "sum",
                AccuracyTerm::Mean => "mean",
            }
            .into(),
        );
        kv(
            "reward_similarity",
            match self.reward_similarity {
                SimilarityTerm::Scaled => "scaled",
                SimilarityTerm::Dtw => "dtw",
            }
            .into(),
        );
        kv("predictor_hidden", self.predictor_hidden.to_string());
        kv("predictor_layers", self.predictor_layers.to_string());
        kv("predictor_epochs", self.predictor_epochs.to_string());
        kv("predictor_batch", self.predictor_batch.to_string());
        kv("predictor_lr", self.predictor_lr.to_string());
        kv(
            "drqn_dense",
            format!("{},{},{}", self.drqn_dense[0], self.drqn_dense[1], self.drqn_dense[2]),
        );
        kv("drqn_lstm_hidden", self.drqn_lstm_hidden.to_string());
        kv("drqn_lr", self.drqn_lr.to_string());
        kv("gamma", self.gamma.to_string());
        kv("drqn_batch", self.drqn_batch.to_string());
        kv("seq_len", self.seq_len.to_string());
        kv("buffer", self.buffer.to_string());
        kv("sync_every", self.sync_every.to_string());
        kv("drqn_episodes", self.drqn_episodes.to_string());
        kv("epsilon_start", self.epsilon_start.to_string());
        kv("epsilon_end", self.epsilon_end.to_string());
        kv("epsilon_decay_fraction", self.epsilon_decay_fraction.to_string());
        kv("drqn_eval_every", self.drqn_eval_every.to_string());
        kv("drqn_shaping", self.drqn_shaping.to_string());
        kv("estimator_hidden", self.estimator_hidden.to_string());
        kv("estimator_layers", self.estimator_layers.to_string());
        kv("estimator_epochs", self.estimator_epochs.to_string());
        kv("estimator_batch", self.estimator_batch.to_string());
        kv("estimator_lr", self.estimator_lr.to_string());
        kv("estimator_mask", self.estimator_mask.to_string());
        kv("gpr_length_scale", self.gpr_length_scale.to_string());
        kv(
            "gpr_signal_var",
            match self.gpr_signal_var {
                SignalVar::Auto => "auto".into(),
                SignalVar::Fixed(v) => v.to_string(),
            },
        );
        kv("gpr_noise_var", self.gpr_noise_var.to_string());
        s
    }

    pub fn config_name(&self) -> String {
        if self.name.is_empty() {
            format!(
                "{}+{}+{}",
                self.predictor.as_str(),
                self.policy.as_str(),
                self.estimator.as_str()
            )
        } else {
            self.name.clone()
        }
    }

    /// Checks every field; called before any data is read.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        SplitSpec::new(self.split, 0)?;
        if self.horizon != TARGET_LEN {
            return bad(format!("horizon is fixed at {TARGET_LEN}, got {}", self.horizon));
        }
        self.episode_config().validate()?;
        if !(self.w1.is_finite() && self.w1 >= 0.0 && self.w2.is_finite() && self.w2 >= 0.0) {
            return bad(format!(
                "w1 and w2 must be finite and nonnegative, got {} and {}",
                self.w1, self.w2
            ));
        }
        for (key, v) in [
            ("predictor_hidden", self.predictor_hidden),
            ("predictor_layers", self.predictor_layers),
            ("predictor_batch", self.predictor_batch),
            ("drqn_lstm_hidden", self.drqn_lstm_hidden),
            ("drqn_batch", self.drqn_batch),
            ("seq_len", self.seq_len),
            ("buffer", self.buffer),
            ("estimator_hidden", self.estimator_hidden),
            ("estimator_layers", self.estimator_layers),
            ("estimator_batch", self.estimator_batch),
        ] {
            if v == 0 {
                return bad(format!("{key} must be positive"));
            }
        }
        if self.drqn_dense.contains(&0) {
            return bad("drqn_dense widths must be positive".into());
        }
        for (key, v) in [
            ("predictor_lr", self.predictor_lr),
            ("drqn_lr", self.drqn_lr),
            ("estimator_lr", self.estimator_lr),
            ("gpr_length_scale", self.gpr_length_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{key} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0,1], got {}", self.gamma));
        }
        if !((0.0..=1.0).contains(&self.epsilon_start)
            && (0.0..=1.0).contains(&self.epsilon_end)
            && self.epsilon_end <= self.epsilon_start)
        {
            return bad(format!(
                "epsilon must satisfy 0 <= end <= start <= 1, got start {} end {}",
                self.epsilon_start, self.epsilon_end
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return bad(format!(
                "epsilon_decay_fraction must be in [0,1], got {}",
                self.epsilon_decay_fraction
            ));
        }
        if !(self.gpr_noise_var.is_finite() && self.gpr_noise_var >= 0.0) {
            return bad(format!("gpr_noise_var must be nonnegative, got {}", self.gpr_noise_var));
        }
        if let SignalVar::Fixed(v) = self.gpr_signal_var {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("gpr_signal_var must be positive or auto, got {v}"));
            }
        }
        if self.config_name().contains(',') || self.config_name().contains('\n') {
            return bad("name must not contain commas or newlines".into());
        }
        if self.data.as_os_str().is_empty() {
            return bad("data path is empty".into());
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            ratios: self.split,
            seed: derive_seed(self.seed, stage::SPLIT),
        }
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            horizon: self.horizon,
            budget: self.budget,
            k: self.k,
            w1: self.w1,
            w2: self.w2,
            tail_penalty: self.tail_penalty,
            accuracy: self.reward_accuracy,
            similarity: self.reward_similarity,
        }
    }

    pub fn predictor_config(&self) -> PredictorConfig {
        PredictorConfig {
            hidden: self.predictor_hidden,
            layers: self.predictor_layers,
            epochs: self.predictor_epochs,
            batch_size: self.predictor_batch,
            lr: self.predictor_lr,
            seed: derive_seed(self.seed, stage::PREDICTOR),
        }
    }

    pub fn drqn_config(&self) -> DrqnConfig {
        DrqnConfig {
            dense: self.drqn_dense,
            lstm_hidden: self.drqn_lstm_hidden,
            k: self.k,
            lr: self.drqn_lr,
            gamma: self.gamma,
            batch_size: self.drqn_batch,
            seq_len: self.seq_len,
            buffer_capacity: self.buffer,
            sync_every: self.sync_every,
            seed: derive_seed(self.seed, stage::AGENT),
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            episodes: self.drqn_episodes,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_fraction: self.epsilon_decay_fraction,
            eval_every: self.drqn_eval_every,
            shaping: self.drqn_shaping,
        }
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            hidden: self.estimator_hidden,
            layers: self.estimator_layers,
            epochs: self.estimator_epochs,
            batch_size: self.estimator_batch,
            lr: self.estimator_lr,
            seed: derive_seed(self.seed, stage::ESTIMATOR),
            use_mask: self.estimator_mask,
        }
    }

    /// GP hyperparameters, with `auto` resolved against `train_variance`.
    pub fn gpr_params(&self, train_variance: f64) -> GprParams {
        GprParams {
            length_scale: self.gpr_length_scale,
            signal_var: match self.gpr_signal_var {
                SignalVar::Auto => train_variance.max(1e-12),
                SignalVar::Fixed(v) => v,
            },
            noise_var: self.gpr_noise_var,
        }
    }
}

/// Tags for the per-stage seeds.
pub mod stage {
    pub const SPLIT: u64 = 1;
    pub const PREDICTOR: u64 = 2;
    pub const AGENT: u64 = 3;
    pub const ESTIMATOR: u64 = 4;
    pub const PROFILES_TRAIN: u64 = 5;
    pub const PROFILES_VAL: u64 = 6;
    pub const EVAL: u64 = 7;
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for p in [Preset::Desk, Preset::Full] {
            let mut cfg = ExperimentConfig::preset(p);
            cfg.seed = 42;
            cfg.gpr_signal_var = SignalVar::Fixed(0.013);
            cfg.predictor_lr = 0.1 + 0.2;
            cfg.reward_similarity = SimilarityTerm::Dtw;
            let back = ExperimentConfig::from_text(&cfg.to_text(), Preset::Full).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn unknown_key_and_bad_value_are_config_errors() {
        assert!(matches!(
            ExperimentConfig::from_text("colour=red", Preset::Desk),
            Err(Error::Config(_))
        ));
        let e = ExperimentConfig::from_text("\n# c\npolicy=greedy", Preset::Desk).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(ExperimentConfig::from_text("budget=abc", Preset::Desk).is_err());
    }

    #[test]
    fn validation_catches_bad_fields() {
        let ok = ExperimentConfig::preset(Preset::Desk);
        ok.validate().unwrap();
        for text in [
            "budget=0",
            "horizon=100",
            "k=0",
            "gamma=1.5",
            "epsilon_end=0.9\nepsilon_start=0.5",
            "split=0.5,0.5,0.5",
            "drqn_lr=0",
            "drqn_dense=64,0,32",
            "name=a,b",
        ] {
            let cfg = ExperimentConfig::from_text(text, Preset::Desk);
            let err = cfg.and_then(|c| c.validate());
            assert!(matches!(err, Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn every_table_configuration_is_expressible() {
        for (p, pol, est) in [
            ("none", "uniform", "gpr"),
            ("ar4_kalman", "drqn", "none"),
            ("lstm", "uniform", "lstm"),
            ("lstm", "drqn", "lstm"),
            ("lstm", "drqn", "none"),
            ("lstm", "uniform", "none"),
        ] {
            let text = format!("predictor={p}\npolicy={pol}\nestimator={est}\n");
            let cfg = ExperimentConfig::from_text(&text, Preset::Desk).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.config_name(), format!("{p}+{pol}+{est}"));
        }
    }

    #[test]
    fn stage_seeds_differ() {
        let c = ExperimentConfig::preset(Preset::Desk);
        let seeds = [
            c.split_spec().seed,
            c.predictor_config().seed,
            c.drqn_config().seed,
            c.estimator_config().seed,
        ];
        for i in 0..seeds.len() {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }
}
