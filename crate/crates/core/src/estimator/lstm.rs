//! Learned refinement of a collected profile.
//!
//! An encoder runs over the 216-step concatenation of history and profile
//! with inputs `[value, observed flag, sin(hour), cos(hour)]`; a decoder then
//! walks the 168 profile steps again with the same inputs and a head adds a
//! correction to each profile value. Observed steps keep the observation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CollectedProfile;
use crate::error::{dim_check, Error, Result};
use crate::exec::Execution;
use crate::neural::params::{copy_params, sum_in_order};
use crate::neural::{Adam, DecoderStep, Seq2Seq};
use crate::predictor::hour_encoding;

pub const INPUT_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Feed the observed flag to the network (zeros otherwise).
    pub use_mask: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            hidden: 256,
            layers: 2,
            epochs: 30,
            batch_size: 16,
            lr: 1e-4,
            seed: 0,
            use_mask: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmEstimator {
    pub net: Seq2Seq,
    pub use_mask: bool,
    pub trained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    /// RMSE of the unrefined validation profiles.
    pub profile_val_rmse: f64,
    pub train_loss: Vec<f64>,
    pub val_rmse: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub best_val_rmse: f64,
}

impl LstmEstimator {
    /// The head starts at zero, so an untrained estimator is the identity.
    pub fn new(hidden: usize, layers: usize, use_mask: bool, rng: &mut ChaCha8Rng) -> LstmEstimator {
        let mut net = Seq2Seq::new(INPUT_DIM, INPUT_DIM, hidden, layers, rng);
        net.head.w.fill(0.0);
        LstmEstimator {
            net,
            use_mask,
            trained: false,
        }
    }

    fn inputs(&self, p: &CollectedProfile) -> Result<(Vec<Vec<f64>>, Vec<DecoderStep>)> {
        dim_check("profile mask", p.values.len(), p.observed.len())?;
        let flag = |o: bool| if self.use_mask && o { 1.0 } else { 0.0 };
        let h = p.history.len();
        let mut enc = Vec::with_capacity(h + p.values.len());
        for (i, &x) in p.history.iter().enumerate() {
            let hour = (i64::from(p.hour_of_day_offset) - (h - i) as i64).rem_euclid(24) as u32;
            let [s, c] = hour_encoding(hour);
            enc.push(vec![x, flag(true), s, c]);
        }
        let mut dec = Vec::with_capacity(p.values.len());
        for (t, (&x, &o)) in p.values.iter().zip(&p.observed).enumerate() {
            let [s, c] = hour_encoding(p.hour_at(t));
            let step = vec![x, flag(o), s, c];
            enc.push(step.clone());
            dec.push(DecoderStep::given(step));
        }
        Ok((enc, dec))
    }

    fn combine(p: &CollectedProfile, outputs: &[f64]) -> Vec<f64> {
        p.values
            .iter()
            .zip(&p.observed)
            .zip(outputs)
            .map(|((&v, &o), &d)| if o { v } else { v + d })
            .collect()
    }

    pub fn estimate(&self, p: &CollectedProfile) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::Usage("estimator parameters are untrained".into()));
        }
        self.estimate_unchecked(p)
    }

    fn estimate_unchecked(&self, p: &CollectedProfile) -> Result<Vec<f64>> {
        let (enc, dec) = self.inputs(p)?;
        let mut state = self.net.encode(&enc);
        let outputs: Vec<f64> = dec.iter().map(|s| self.net.decode_step(&s.input, &mut state)).collect();
        let out = Self::combine(p, &outputs);
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("estimator produced {} at step {i}", out[i])));
        }
        Ok(out)
    }

    /// Mean squared error against `truth` and its gradient.
    pub fn loss_and_grad(&self, p: &CollectedProfile, truth: &[f64]) -> Result<(f64, Seq2Seq)> {
        dim_check("estimator target", p.values.len(), truth.len())?;
        let (enc, dec) = self.inputs(p)?;
        let cache = self.net.forward(&enc, &dec)?;
        let est = Self::combine(p, &cache.outputs);
        let n = truth.len() as f64;
        let mut loss = 0.0;
        let d: Vec<f64> = est
            .iter()
            .zip(truth)
            .zip(&p.observed)
            .map(|((e, y), &o)| {
                loss += (e - y) * (e - y);
                if o {
                    0.0
                } else {
                    2.0 * (e - y) / n
                }
            })
            .collect();
        Ok((loss / n, self.net.backward(&cache, &d)?))
    }

    pub fn meta(&self) -> String {
        format!(
            "kind=lstm_estimator\nhidden={}\nlayers={}\nuse_mask={}\n",
            self.net.hidden_dim(),
            self.net.encoder.layers.len(),
            self.use_mask
        )
    }
}

fn rmse_over(est: &LstmEstimator, profiles: &[CollectedProfile], truths: &[Vec<f64>], exec: Execution) -> Result<f64> {
    let idx: Vec<usize> = (0..profiles.len()).collect();
    let parts = exec.try_map(&idx, |&i| -> Result<(f64, usize)> {
        let e = est.estimate_unchecked(&profiles[i])?;
        Ok((e.iter().zip(&truths[i]).map(|(a, b)| (a - b) * (a - b)).sum(), e.len()))
    })?;
    let (se, n) = parts.into_iter().fold((0.0, 0), |(s, n), (a, b)| (s + a, n + b));
    Ok(if n == 0 { f64::NAN } else { (se / n as f64).sqrt() })
}

/// Mini-batch Adam on squared reconstruction error, keeping the parameters
/// with the lowest validation RMSE (the identity start counts as a candidate).
pub fn train_estimator(
    train: (&[CollectedProfile], &[Vec<f64>]),
    val: (&[CollectedProfile], &[Vec<f64>]),
    cfg: &EstimatorConfig,
    exec: Execution,
) -> Result<(LstmEstimator, EstimatorReport)> {
    let (profiles, truths) = train;
    dim_check("estimator training pairs", profiles.len(), truths.len())?;
    dim_check("estimator validation pairs", val.0.len(), val.1.len())?;
    if profiles.is_empty() {
        return Err(Error::Usage("estimator training needs at least one profile".into()));
    }
    if cfg.batch_size == 0 || cfg.hidden == 0 || cfg.layers == 0 {
        return Err(Error::Config(
            "estimator hidden, layers and batch size must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = LstmEstimator::new(cfg.hidden, cfg.layers, cfg.use_mask, &mut rng);
    let mut adam = Adam::new(cfg.lr);
    let profile_val_rmse = rmse_over(&model, val.0, val.1, exec)?;
    let mut best = model.net.clone();
    let mut best_val = profile_val_rmse;
    let mut best_epoch = None;
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut val_rmse = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..profiles.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let parts = exec.try_map(batch, |&i| model.loss_and_grad(&profiles[i], &truths[i]))?;
            let mut grads = Vec::with_capacity(parts.len());
            for (l, g) in parts {
                if !l.is_finite() {
                    return Err(Error::Numerical(format!("estimator loss is {l} at epoch {epoch}")));
                }
                loss_sum += l;
                grads.push(g);
            }
            adam.step_averaged(
                &mut model.net,
                sum_in_order(grads).expect("non-empty batch"),
                batch.len(),
            )?;
        }
        let v = rmse_over(&model, val.0, val.1, exec)?;
        let l = loss_sum / profiles.len() as f64;
        log::info!("estimator epoch {epoch}: train mse {l:.6} val rmse {v:.6}");
        if val.0.is_empty() || v < best_val {
            best_val = v;
            best_epoch = Some(epoch);
            copy_params(&mut best, &model.net);
        }
        train_loss.push(l);
        val_rmse.push(v);
    }
    model.net = best;
    model.trained = true;
    Ok((
        model,
        EstimatorReport {
            profile_val_rmse,
            train_loss,
            val_rmse,
            best_epoch,
            best_val_rmse: best_val,
        },
    ))
}
