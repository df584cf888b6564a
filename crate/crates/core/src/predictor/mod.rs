//! Forecasters for the coming hours of an episode.
//!
//! Every predictor is driven through a [`Forecaster`] session: the simulator
//! advances it one step at a time, passing the observed value when there is
//! one, and peeks ahead to build the agent state and bridge gaps.

pub mod ar_kalman;
pub mod lstm;

pub use ar_kalman::{ar_fit, ArKalmanModel};
pub use lstm::{train_predictor, LstmPredictor, PredictorConfig, PredictorReport};

use std::f64::consts::PI;

use crate::data::EpisodeInstance;
use crate::error::{Error, Result};

/// Learned forecasts are clamped to this range in normalized units.
pub const CLAMP_LO: f64 = -0.5;
pub const CLAMP_HI: f64 = 1.5;

/// `[sin, cos]` of the hour on a 24-hour circle; hour 0 is `(0, 1)`.
pub fn hour_encoding(hour: u32) -> [f64; 2] {
    let a = 2.0 * PI * f64::from(hour % 24) / 24.0;
    [a.sin(), a.cos()]
}

/// Hour of day of history index `i` (the history ends right before target 0).
pub fn history_hour(ep: &EpisodeInstance, i: usize) -> u32 {
    let back = (ep.history.len() - i) as i64;
    (i64::from(ep.hour_of_day_offset) - back).rem_euclid(24) as u32
}

/// A stateful rollout over one episode's target horizon.
pub trait Forecaster {
    /// Index of the step the next [`advance`](Self::advance) consumes.
    fn next_step(&self) -> usize;

    /// Forecast the next step, then absorb `observation` if given. Returns
    /// the forecast made before seeing the observation.
    fn advance(&mut self, observation: Option<f64>) -> Result<f64>;

    /// Free-running forecasts for the next `k` steps, truncated at the
    /// horizon end. Does not change the session.
    fn peek(&self, k: usize) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Lstm(LstmPredictor),
    /// AR(4) refit on each episode's history, Kalman-updated on observations.
    ArKalman,
    /// Carry the most recent known value forward.
    Persistence,
    /// Returns the ground truth. Only meaningful in tests and diagnostics.
    Oracle,
}

impl Predictor {
    pub fn name(&self) -> &'static str {
        match self {
            Predictor::Lstm(_) => "lstm",
            Predictor::ArKalman => "ar4_kalman",
            Predictor::Persistence => "none",
            Predictor::Oracle => "oracle",
        }
    }

    pub fn session<'a>(&'a self, ep: &'a EpisodeInstance) -> Result<Box<dyn Forecaster + 'a>> {
        Ok(match self {
            Predictor::Lstm(p) => Box::new(p.session(ep)?),
            Predictor::ArKalman => Box::new(ArSession {
                model: ar_fit(&ep.history)?,
                next: 0,
                horizon: ep.target.len(),
            }),
            Predictor::Persistence => Box::new(PersistenceSession {
                last: *ep
                    .history
                    .last()
                    .ok_or_else(|| Error::Dimension("episode has an empty history".into()))?,
                next: 0,
                horizon: ep.target.len(),
            }),
            Predictor::Oracle => Box::new(OracleSession {
                truth: &ep.target,
                next: 0,
            }),
        })
    }
}

fn check_horizon(next: usize, horizon: usize) -> Result<()> {
    if next >= horizon {
        return Err(Error::Usage(format!(
            "forecaster advanced past the horizon ({horizon})"
        )));
    }
    Ok(())
}

struct ArSession {
    model: ArKalmanModel,
    next: usize,
    horizon: usize,
}

impl Forecaster for ArSession {
    fn next_step(&self) -> usize {
        self.next
    }

    fn advance(&mut self, observation: Option<f64>) -> Result<f64> {
        check_horizon(self.next, self.horizon)?;
        self.next += 1;
        self.model.kalman_step(observation)
    }

    fn peek(&self, k: usize) -> Result<Vec<f64>> {
        Ok(self.model.forecast(k.min(self.horizon - self.next)))
    }
}

struct PersistenceSession {
    last: f64,
    next: usize,
    horizon: usize,
}

impl Forecaster for PersistenceSession {
    fn next_step(&self) -> usize {
        self.next
    }

    fn advance(&mut self, observation: Option<f64>) -> Result<f64> {
        check_horizon(self.next, self.horizon)?;
        self.next += 1;
        let forecast = self.last;
        if let Some(y) = observation {
            self.last = y;
        }
        Ok(forecast)
    }

    fn peek(&self, k: usize) -> Result<Vec<f64>> {
        Ok(vec![self.last; k.min(self.horizon - self.next)])
    }
}

struct OracleSession<'a> {
    truth: &'a [f64],
    next: usize,
}

impl Forecaster for OracleSession<'_> {
    fn next_step(&self) -> usize {
        self.next
    }

    fn advance(&mut self, _observation: Option<f64>) -> Result<f64> {
        check_horizon(self.next, self.truth.len())?;
        self.next += 1;
        Ok(self.truth[self.next - 1])
    }

    fn peek(&self, k: usize) -> Result<Vec<f64>> {
        let end = (self.next + k).min(self.truth.len());
        Ok(self.truth[self.next..end].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode() -> EpisodeInstance {
        EpisodeInstance {
            location: 0,
            location_id: "a".into(),
            window: 0,
            history: (0..48).map(|i| 0.2 + 0.1 * (i as f64 * 0.3).sin()).collect(),
            target: (0..168).map(|i| 0.3 + 0.1 * (i as f64 * 0.3).cos()).collect(),
            hour_of_day_offset: 5,
        }
    }

    #[test]
    fn hour_encoding_at_midnight() {
        assert_eq!(hour_encoding(0), [0.0, 1.0]);
        let [s, c] = hour_encoding(6);
        assert!((s - 1.0).abs() < 1e-15 && c.abs() < 1e-15);
    }

    #[test]
    fn history_hours_lead_into_target() {
        let ep = episode();
        assert_eq!(history_hour(&ep, 47), 4);
        assert_eq!(history_hour(&ep, 0), 5);
    }

    #[test]
    fn persistence_carries_last_known_value() {
        let ep = episode();
        let p = Predictor::Persistence;
        let mut s = p.session(&ep).unwrap();
        assert_eq!(s.advance(Some(0.9)).unwrap(), ep.history[47]);
        assert_eq!(s.peek(3).unwrap(), vec![0.9; 3]);
        assert_eq!(s.advance(None).unwrap(), 0.9);
    }

    #[test]
    fn peek_is_truncated_at_horizon_end() {
        let ep = episode();
        for p in [Predictor::Persistence, Predictor::ArKalman, Predictor::Oracle] {
            let mut s = p.session(&ep).unwrap();
            for _ in 0..167 {
                s.advance(None).unwrap();
            }
            assert_eq!(s.next_step(), 167);
            assert_eq!(s.peek(12).unwrap().len(), 1, "{}", p.name());
            s.advance(None).unwrap();
            assert!(s.peek(12).unwrap().is_empty());
            assert!(matches!(s.advance(None), Err(Error::Usage(_))));
        }
    }

    #[test]
    fn oracle_returns_truth() {
        let ep = episode();
        let p = Predictor::Oracle;
        let mut s = p.session(&ep).unwrap();
        assert_eq!(s.peek(4).unwrap(), ep.target[..4].to_vec());
        assert_eq!(s.advance(None).unwrap(), ep.target[0]);
    }

    #[test]
    fn ar_session_peek_matches_advance() {
        let ep = episode();
        let p = Predictor::ArKalman;
        let mut s = p.session(&ep).unwrap();
        s.advance(Some(ep.target[0])).unwrap();
        let ahead = s.peek(12).unwrap();
        for (k, v) in ahead.iter().enumerate() {
            assert_eq!(*v, s.advance(None).unwrap(), "step {k}");
        }
    }
}
