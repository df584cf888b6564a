use super::params::{clip_global_norm, ensure_finite, scale, Parameters};
use crate::error::{Error, Result};

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Average a summed gradient over `count` samples, clip to
    /// [`GRAD_CLIP_NORM`](super::GRAD_CLIP_NORM) and update. Returns the
    /// pre-clip norm.
    pub fn step_averaged<P: Parameters>(&mut self, params: &mut P, mut grads: P, count: usize) -> Result<f64> {
        if count > 1 {
            scale(&mut grads, 1.0 / count as f64);
        }
        let norm = clip_global_norm(&mut grads, super::GRAD_CLIP_NORM);
        self.update(params, &grads)?;
        Ok(norm)
    }

    /// Apply one update. Parameters are left untouched when the gradients or
    /// the result would be non-finite.
    pub fn update<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        ensure_finite(grads, "gradient")?;
        let g = grads.named_params();
        let mut p = params.params_mut();
        if g.len() != p.len() {
            return Err(Error::Dimension(format!(
                "optimizer got {} gradient tensors for {} parameters",
                g.len(),
                p.len()
            )));
        }
        for ((name, gt), pt) in g.iter().zip(p.iter()) {
            if gt.shape != pt.shape {
                return Err(Error::Dimension(format!(
                    "gradient {name} shape {:?} vs parameter {:?}",
                    gt.shape, pt.shape
                )));
            }
        }
        if self.m.is_empty() {
            self.m = p.iter().map(|t| vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != p.len() || self.m.iter().zip(&p).any(|(m, t)| m.len() != t.len()) {
            return Err(Error::Dimension("optimizer state does not match parameters".into()));
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut updated: Vec<Vec<f64>> = Vec::with_capacity(p.len());
        for (k, (_, gt)) in g.iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let mut next = p[k].data.clone();
            for i in 0..gt.data.len() {
                let gi = gt.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                next[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!(
                    "Adam step {} would write a non-finite parameter",
                    self.step
                )));
            }
            updated.push(next);
        }
        for (t, data) in p.iter_mut().zip(updated) {
            t.data = data;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::dense::Dense;
    use crate::neural::params::zeros_like;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer() -> Dense {
        Dense::new(2, 2, &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn zero_gradient_only_advances_step() {
        let mut p = layer();
        let before = p.clone();
        let g = zeros_like(&p);
        let mut opt = Adam::new(1e-3);
        opt.update(&mut p, &g).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        // m1 = 0.1 g, v1 = 0.001 g^2; bias correction gives mhat = g,
        // vhat = g^2, so delta = -lr * g / (|g| + eps).
        let mut p = layer();
        let mut g = zeros_like(&p);
        g.w.data[0] = 0.3;
        g.b.data[1] = -2.0;
        let w0 = p.w.data[0];
        let b1 = p.b.data[1];
        let mut opt = Adam::new(0.01);
        opt.update(&mut p, &g).unwrap();
        let expect_w = w0 - 0.01 * 0.3 / (0.3 + 1e-8);
        let expect_b = b1 + 0.01 * 2.0 / (2.0 + 1e-8);
        assert!((p.w.data[0] - expect_w).abs() < 1e-15);
        assert!((p.b.data[1] - expect_b).abs() < 1e-15);
    }

    #[test]
    fn minimizes_quadratic_monotonically() {
        // f(x) = x^2 on a single bias entry.
        let mut p = Dense {
            w: crate::neural::tensor::Tensor::zeros(&[1, 1]),
            b: crate::neural::tensor::Tensor::filled(&[1], 3.0),
        };
        let mut opt = Adam::new(0.05);
        let mut prev = 9.0;
        for _ in 0..50 {
            let mut g = zeros_like(&p);
            g.b.data[0] = 2.0 * p.b.data[0];
            opt.update(&mut p, &g).unwrap();
            let f = p.b.data[0].powi(2);
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = layer();
        let before = p.clone();
        let mut g = zeros_like(&p);
        g.w.data[2] = f64::NAN;
        let mut opt = Adam::new(1e-3);
        assert!(matches!(opt.update(&mut p, &g), Err(Error::Numerical(_))));
        assert_eq!(p, before);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = layer();
        let g = Dense::new(3, 2, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(Adam::new(1e-3).update(&mut p, &g), Err(Error::Dimension(_))));
    }
}
