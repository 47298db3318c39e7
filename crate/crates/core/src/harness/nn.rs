//! Dense layers with hand-written gradients.

use rand::Rng;

/// `y = W x + b` with a row-major `out x inp` weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub out: usize,
    pub inp: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            out,
            inp,
            weight: vec![0.0; out * inp],
            bias: vec![0.0; out],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn random<R: Rng + ?Sized>(out: usize, inp: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (out + inp) as f64).sqrt();
        let mut layer = Self::zeros(out, inp);
        for w in &mut layer.weight {
            *w = rng.random_range(-limit..=limit);
        }
        layer
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inp);
        for ((yo, row), b) in y.iter_mut().zip(self.weight.chunks_exact(self.inp)).zip(&self.bias) {
            *yo = b + dot(row, x);
        }
    }

    /// Accumulates `dy x^T` and `dy` into `grad`, and `W^T dy` into `dx` if given.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Affine, dx: Option<&mut [f64]>) {
        for ((g, &d), gb) in grad.weight.chunks_exact_mut(self.inp).zip(dy).zip(&mut grad.bias) {
            *gb += d;
            if d != 0.0 {
                axpy(d, x, g);
            }
        }
        if let Some(dx) = dx {
            for (row, &d) in self.weight.chunks_exact(self.inp).zip(dy) {
                if d != 0.0 {
                    axpy(d, row, dx);
                }
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn tanh_in_place(x: &mut [f64]) {
    for v in x {
        *v = v.tanh();
    }
}

/// Turns `dy` (gradient w.r.t. `y = tanh(x)`) into the gradient w.r.t. `x`.
pub fn tanh_backward(y: &[f64], dy: &mut [f64]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        *d *= 1.0 - v * v;
    }
}

/// Gradient w.r.t. logits given the gradient `g` w.r.t. `log_softmax(logits)`
/// and the log-probabilities themselves: `g - softmax * sum(g)`.
pub fn log_softmax_backward(log_probs: &[f64], g: &[f64], dz: &mut [f64]) {
    let total: f64 = g.iter().sum();
    for ((d, &gi), &lp) in dz.iter_mut().zip(g).zip(log_probs) {
        *d = gi - lp.exp() * total;
    }
}
