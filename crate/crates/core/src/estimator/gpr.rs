//! Gaussian process regression over time with a squared-exponential kernel
//! and fixed hyperparameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GprParams {
    /// Length-scale in hours.
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Default for GprParams {
    fn default() -> Self {
        GprParams {
            length_scale: 6.0,
            signal_var: 1.0,
            noise_var: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GprModel {
    pub params: GprParams,
    pub times: Vec<f64>,
    pub prior_mean: f64,
    /// `(K + noise I)^-1 (y - mean)`
    alpha: DVector<f64>,
}

fn kernel(p: &GprParams, a: f64, b: f64) -> f64 {
    let d = a - b;
    p.signal_var * (-0.5 * d * d / (p.length_scale * p.length_scale)).exp()
}

pub fn gpr_fit(observations: &[(usize, f64)], params: &GprParams) -> Result<GprModel> {
    if observations.len() < 2 {
        return Err(Error::Usage(format!(
            "GP regression needs at least 2 observations, got {}",
            observations.len()
        )));
    }
    if !(params.length_scale > 0.0 && params.signal_var > 0.0 && params.noise_var >= 0.0) {
        return Err(Error::Config(format!("invalid GP hyperparameters {params:?}")));
    }
    let n = observations.len();
    let times: Vec<f64> = observations.iter().map(|&(t, _)| t as f64).collect();
    let prior_mean = observations.iter().map(|&(_, v)| v).sum::<f64>() / n as f64;
    let y = DVector::from_iterator(n, observations.iter().map(|&(_, v)| v - prior_mean));
    let gram = DMatrix::from_fn(n, n, |i, j| kernel(params, times[i], times[j]));

    let mut jitter = params.noise_var;
    let mut attempt = 0;
    let chol = loop {
        let k = &gram + DMatrix::identity(n, n) * jitter;
        if let Some(c) = k.cholesky() {
            break c;
        }
        attempt += 1;
        if attempt > 8 {
            return Err(Error::Numerical(
                "GP kernel matrix is not positive definite after jitter".into(),
            ));
        }
        jitter = jitter.max(1e-10 * params.signal_var) * 10.0;
    };
    let alpha = chol.solve(&y);
    Ok(GprModel {
        params: *params,
        times,
        prior_mean,
        alpha,
    })
}

/// Posterior mean at each query time.
pub fn gpr_predict(m: &GprModel, times: &[usize]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            let t = t as f64;
            m.prior_mean
                + m.times
                    .iter()
                    .zip(m.alpha.iter())
                    .map(|(&ti, a)| kernel(&m.params, t, ti) * a)
                    .sum::<f64>()
        })
        .collect()
}
