//! AR(4) fitted on the stage-one history, run as a Kalman filter in
//! companion form so sparse observations can correct the state.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::error::{Error, Result};

pub const AR_ORDER: usize = 4;
/// Measurement noise as a fraction of the fitted process noise.
pub const MEASUREMENT_NOISE_RATIO: f64 = 0.05;
const TINY_VARIANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ArKalmanModel {
    /// `phi[j]` multiplies the value `j + 1` steps back.
    pub phi: [f64; AR_ORDER],
    /// History mean; the state is mean-removed.
    pub mean: f64,
    /// `[z_t, z_{t-1}, z_{t-2}, z_{t-3}]`
    pub state: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub q: f64,
    pub r: f64,
    /// Set when the fit degenerated and the model is plain persistence.
    pub fallback: bool,
}

impl ArKalmanModel {
    fn transition(&self) -> Matrix4<f64> {
        let p = &self.phi;
        Matrix4::new(
            p[0], p[1], p[2], p[3], //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        )
    }

    fn from_history(history: &[f64], phi: [f64; AR_ORDER], mean: f64, q: f64, fallback: bool) -> Self {
        let n = history.len();
        let state = Vector4::from_fn(|i, _| history[n - 1 - i] - mean);
        let r = if fallback {
            TINY_VARIANCE
        } else {
            MEASUREMENT_NOISE_RATIO * q
        };
        ArKalmanModel {
            phi,
            mean,
            state,
            cov: Matrix4::identity() * r,
            q,
            r,
            fallback,
        }
    }

    /// Time update, then a measurement update when `observation` is given.
    /// Returns the one-step prediction made before the measurement.
    pub fn kalman_step(&mut self, observation: Option<f64>) -> Result<f64> {
        let f = self.transition();
        self.state = f * self.state;
        let mut p = f * self.cov * f.transpose();
        p[(0, 0)] += self.q;
        let prediction = self.state[0] + self.mean;

        if let Some(y) = observation {
            let s = p[(0, 0)] + self.r;
            if s > 0.0 {
                let gain: Vector4<f64> = p.column(0) / s;
                let innovation = y - self.mean - self.state[0];
                self.state += gain * innovation;
                let row0 = p.row(0).into_owned();
                p -= gain * row0;
            } else {
                self.state[0] = y - self.mean;
            }
        }
        self.cov = (p + p.transpose()) * 0.5;
        if !self.cov.iter().all(|v| v.is_finite()) || !self.state.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("AR/Kalman covariance became non-finite".into()));
        }
        Ok(prediction)
    }

    /// k-step-ahead forecasts from the current posterior, without updates.
    pub fn forecast(&self, k: usize) -> Vec<f64> {
        let f = self.transition();
        let mut x = self.state;
        (0..k)
            .map(|_| {
                x = f * x;
                x[0] + self.mean
            })
            .collect()
    }
}

/// Least-squares AR(4) fit on the mean-removed history.
///
/// Rank-deficient designs are solved in the minimum-norm sense; a history
/// with no variation at all falls back to persistence.
pub fn ar_fit(history: &[f64]) -> Result<ArKalmanModel> {
    if history.len() < AR_ORDER + 1 {
        return Err(Error::Dimension(format!(
            "AR({AR_ORDER}) fit needs at least {} points, got {}",
            AR_ORDER + 1,
            history.len()
        )));
    }
    if let Some(i) = history.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite history value at {i}")));
    }
    let n = history.len();
    let mean = history.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = history.iter().map(|v| v - mean).collect();
    let rows = n - AR_ORDER;
    let design = DMatrix::from_fn(rows, AR_ORDER, |r, c| z[r + AR_ORDER - 1 - c]);
    let target = DVector::from_fn(rows, |r, _| z[r + AR_ORDER]);

    let scale = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let svd = design.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    if scale <= 1e-12 || sigma_max <= 1e-12 {
        log::warn!("AR({AR_ORDER}) normal equations are singular; using persistence");
        return Ok(ArKalmanModel::from_history(
            history,
            [1.0, 0.0, 0.0, 0.0],
            mean,
            TINY_VARIANCE,
            true,
        ));
    }
    let solution = svd
        .solve(&target, 1e-10 * sigma_max)
        .map_err(|e| Error::Numerical(format!("AR least squares failed: {e}")))?;
    let phi = [solution[0], solution[1], solution[2], solution[3]];
    let residuals = &target - &design * &solution;
    let q = (residuals.norm_squared() / rows as f64).max(TINY_VARIANCE);
    Ok(ArKalmanModel::from_history(history, phi, mean, q, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_history_is_persistence() {
        let mut m = ar_fit(&[0.3; 48]).unwrap();
        assert!(m.fallback);
        assert!(m.forecast(20).iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!((m.kalman_step(None).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn too_short_history_rejected() {
        assert!(matches!(ar_fit(&[1.0, 2.0, 3.0, 4.0]), Err(Error::Dimension(_))));
    }

    /// Coefficients of the AR(4) whose characteristic roots are the given
    /// complex-conjugate pairs `(radius, angle)`.
    fn phi_from_roots(pairs: [(f64, f64); 2]) -> [f64; 4] {
        // (1 - a1 z + b1 z^2)(1 - a2 z + b2 z^2) in powers of the lag operator
        let [(r1, w1), (r2, w2)] = pairs;
        let (a1, b1) = (2.0 * r1 * w1.cos(), r1 * r1);
        let (a2, b2) = (2.0 * r2 * w2.cos(), r2 * r2);
        [a1 + a2, -(b1 + b2 + a1 * a2), a1 * b2 + a2 * b1, -b1 * b2]
    }

    #[test]
    fn recovers_known_coefficients() {
        use std::f64::consts::PI;
        // Lightly damped oscillations keep all four modes visible in 48 points.
        let truth = phi_from_roots([(0.97, PI / 6.0), (0.93, PI / 3.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = vec![1.0, -0.5, 0.8, 0.3];
        for t in 4..48 {
            let v: f64 = (0..4).map(|j| truth[j] * x[t - 1 - j]).sum::<f64>() + 1e-4 * rng.gen_range(-1.0..1.0);
            x.push(v);
        }
        let shifted: Vec<f64> = x.iter().map(|v| v + 5.0).collect();
        let m = ar_fit(&shifted).unwrap();
        assert!(!m.fallback);
        for j in 0..4 {
            assert!((m.phi[j] - truth[j]).abs() < 0.05, "phi {:?} vs {truth:?}", m.phi);
        }
    }

    /// Plain normal equations via Gaussian elimination with partial pivoting,
    /// regularized by a vanishing ridge so rank-deficient systems pick the
    /// minimum-norm solution in the limit.
    fn oracle_least_squares(z: &[f64]) -> [f64; 4] {
        let mut a = [[0.0f64; 5]; 4];
        for t in 4..z.len() {
            let row = [z[t - 1], z[t - 2], z[t - 3], z[t - 4]];
            for i in 0..4 {
                for j in 0..4 {
                    a[i][j] += row[i] * row[j];
                }
                a[i][4] += row[i] * z[t];
            }
        }
        for (i, r) in a.iter_mut().enumerate() {
            r[i] += 1e-9;
        }
        for col in 0..4 {
            let piv = (col..4)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in 0..4 {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..5 {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        [
            a[0][4] / a[0][0],
            a[1][4] / a[1][1],
            a[2][4] / a[2][2],
            a[3][4] / a[3][3],
        ]
    }

    #[test]
    fn ramp_is_continued() {
        let hist: Vec<f64> = (0..48).map(|i| 0.1 + 0.01 * i as f64).collect();
        let m = ar_fit(&hist).unwrap();
        let next = m.forecast(1)[0];
        let expected = 0.1 + 0.01 * 48.0;
        assert!((next - expected).abs() / expected < 0.05);

        let mean = hist.iter().sum::<f64>() / 48.0;
        let z: Vec<f64> = hist.iter().map(|v| v - mean).collect();
        let phi = oracle_least_squares(&z);
        let oracle_next = mean + (0..4).map(|j| phi[j] * z[47 - j]).sum::<f64>();
        assert!((next - oracle_next).abs() / oracle_next < 0.05);
    }

    fn noisy_model(seed: u64) -> ArKalmanModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hist: Vec<f64> = (0..48)
            .map(|i| 0.2 + 0.1 * (i as f64 * 0.26).sin() + 0.02 * rng.gen_range(-1.0..1.0))
            .collect();
        ar_fit(&hist).unwrap()
    }

    #[test]
    fn zero_measurement_noise_pins_state() {
        let mut m = noisy_model(3);
        m.r = 0.0;
        m.kalman_step(Some(0.77)).unwrap();
        assert!((m.state[0] + m.mean - 0.77).abs() < 1e-12);
    }

    #[test]
    fn unobserved_steps_follow_the_recurrence() {
        let mut m = noisy_model(4);
        m.kalman_step(Some(0.25)).unwrap();
        let snapshot = m.clone();
        let mut lagged: Vec<f64> = (0..4).map(|i| snapshot.state[3 - i]).collect();
        for k in 0..10 {
            let filtered = m.kalman_step(None).unwrap();
            let n = lagged.len();
            let next: f64 = (0..4).map(|j| snapshot.phi[j] * lagged[n - 1 - j]).sum();
            lagged.push(next);
            let direct = next + snapshot.mean;
            assert!((filtered - direct).abs() <= 1e-8 * direct.abs().max(1e-12), "step {k}");
            assert_eq!(snapshot.forecast(k + 1)[k], filtered);
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd_and_shrinks_on_update() {
        let mut m = noisy_model(5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for step in 0..200 {
            let obs = (step % 3 == 0).then(|| rng.gen_range(0.0..0.5));
            if let Some(y) = obs {
                // Compare the prior (after time update) with the posterior.
                let mut prior = m.clone();
                prior.kalman_step(None).unwrap();
                m.kalman_step(Some(y)).unwrap();
                assert!(m.cov.trace() <= prior.cov.trace() + 1e-15);
            } else {
                m.kalman_step(None).unwrap();
            }
            assert_eq!(m.cov, m.cov.transpose());
            let eig = SymmetricEigen::new(m.cov).eigenvalues;
            assert!(eig.iter().all(|&e| e >= -1e-10), "{eig:?}");
        }
    }
}
