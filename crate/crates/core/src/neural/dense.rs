use rand::Rng;

use super::params::Parameters;
use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, Tensor};

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    pub fn new(input_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Dense {
        Dense {
            w: Tensor::xavier(output_dim, input_dim, input_dim, output_dim, rng),
            b: Tensor::zeros(&[output_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.data.clone();
        matvec_acc(&self.w.data, x, &mut y);
        y
    }

    /// Accumulate parameter gradients into `grads` and `W^T dy` into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Dense, dx: Option<&mut [f64]>) {
        outer_acc(&mut grads.w.data, dy, x);
        for (gb, d) in grads.b.data.iter_mut().zip(dy) {
            *gb += d;
        }
        if let Some(dx) = dx {
            matvec_t_acc(&self.w.data, dy, dx);
        }
    }
}

impl Parameters for Dense {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }
}

pub fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Zero the gradient wherever the activation was clipped by ReLU.
pub fn relu_backward_in_place(activated: &[f64], grad: &mut [f64]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}
