//! Fully-connected layer.

use ndarray::{linalg::general_mat_mul, Array1, Array2, Axis};
use rand::Rng;

use crate::init::he_uniform_2d;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct Linear<F> {
    /// (out, in)
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct LinearGrads<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Linear<F> {
    pub fn new<R: Rng>(rng: &mut R, in_features: usize, out_features: usize) -> Self {
        Self {
            weight: he_uniform_2d(rng, (out_features, in_features)),
            bias: Array1::zeros(out_features),
        }
    }

    pub fn zero_grads(&self) -> LinearGrads<F> {
        LinearGrads {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// (n, in) -> (n, out)
    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let (n, d) = x.dim();
        let (o, wd) = self.weight.dim();
        assert_eq!(d, wd, "linear input width {d} != weight {wd}");
        let mut y = Array2::zeros((n, o));
        general_mat_mul(F::one(), x, &self.weight.t(), F::zero(), &mut y);
        for mut row in y.outer_iter_mut() {
            row += &self.bias;
        }
        y
    }

    pub fn backward(
        &self,
        x: &Array2<F>,
        gout: &Array2<F>,
        grads: Option<&mut LinearGrads<F>>,
    ) -> Array2<F> {
        let mut dx = Array2::zeros(x.raw_dim());
        general_mat_mul(F::one(), gout, &self.weight, F::zero(), &mut dx);
        if let Some(gr) = grads {
            general_mat_mul(F::one(), &gout.t(), x, F::one(), &mut gr.weight);
            gr.bias += &gout.sum_axis(Axis(0));
        }
        dx
    }
}
