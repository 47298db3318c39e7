//! Forward-backward recursions for the transducer loss.
//!
//! With `lp(t, u, k)` the lattice entry and `y` the labels,
//!
//! ```text
//! alpha(0, 0) = 0
//! alpha(t, u) = logaddexp(alpha(t-1, u) + lp(t-1, u, blank),
//!                         alpha(t, u-1) + lp(t, u-1, y[u]))
//! log P(y)    = alpha(T-1, U) + lp(T-1, U, blank)
//! ```
//!
//! Every complete alignment ends with a blank emitted from `(T-1, U)`.

use super::{Lattice, TransducerError, BLANK};
use crate::numeric::log_add_exp;

/// Loss and its gradient with respect to every lattice entry; `grad` uses the
/// lattice's indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct RnntLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// `alpha` over the `T x (U + 1)` grid, row-major.
pub fn forward_variables(lat: &Lattice, labels: &[usize]) -> Result<Vec<f64>, TransducerError> {
    lat.check(labels)?;
    let (t_len, u_len) = (lat.frames(), labels.len() + 1);
    let mut alpha = vec![f64::NEG_INFINITY; t_len * u_len];
    alpha[0] = 0.0;
    for t in 0..t_len {
        for u in 0..u_len {
            if t == 0 && u == 0 {
                continue;
            }
            let from_blank = if t > 0 {
                alpha[(t - 1) * u_len + u] + lat.get(t - 1, u, BLANK)
            } else {
                f64::NEG_INFINITY
            };
            let from_label = if u > 0 {
                alpha[t * u_len + u - 1] + lat.get(t, u - 1, labels[u - 1])
            } else {
                f64::NEG_INFINITY
            };
            alpha[t * u_len + u] = log_add_exp(from_blank, from_label);
        }
    }
    Ok(alpha)
}

fn backward_variables(lat: &Lattice, labels: &[usize]) -> Vec<f64> {
    let (t_len, u_len) = (lat.frames(), labels.len() + 1);
    let mut beta = vec![f64::NEG_INFINITY; t_len * u_len];
    for t in (0..t_len).rev() {
        for u in (0..u_len).rev() {
            let value = if t == t_len - 1 && u == u_len - 1 {
                lat.get(t, u, BLANK)
            } else {
                let via_blank = if t + 1 < t_len {
                    beta[(t + 1) * u_len + u] + lat.get(t, u, BLANK)
                } else {
                    f64::NEG_INFINITY
                };
                let via_label = if u + 1 < u_len {
                    beta[t * u_len + u + 1] + lat.get(t, u, labels[u])
                } else {
                    f64::NEG_INFINITY
                };
                log_add_exp(via_blank, via_label)
            };
            beta[t * u_len + u] = value;
        }
    }
    beta
}

/// `log P(y | x)`, summed over every alignment of `labels` with the lattice.
pub fn rnnt_log_posterior(lat: &Lattice, labels: &[usize]) -> Result<f64, TransducerError> {
    let alpha = forward_variables(lat, labels)?;
    let last = alpha.len() - 1;
    Ok(alpha[last] + lat.get(lat.frames() - 1, labels.len(), BLANK))
}

/// Negative log posterior and its exact gradient.
///
/// The gradient of `-log P` with respect to an entry used by the recursion is
/// minus the posterior occupancy of that transition,
/// `exp(alpha(t, u) + lp(t, u, k) + beta(next) - log P)`; all other entries get 0.
pub fn rnnt_loss_and_grad(lat: &Lattice, labels: &[usize]) -> Result<RnntLoss, TransducerError> {
    let alpha = forward_variables(lat, labels)?;
    let beta = backward_variables(lat, labels);
    let (t_len, u_len) = (lat.frames(), labels.len() + 1);
    let log_p = alpha[alpha.len() - 1] + lat.get(t_len - 1, u_len - 1, BLANK);
    if log_p == f64::NEG_INFINITY {
        return Err(TransducerError::ZeroProbability);
    }
    debug_assert!((beta[0] - log_p).abs() <= 1e-9 * log_p.abs().max(1.0));

    let mut grad = vec![0.0; lat.as_slice().len()];
    for t in 0..t_len {
        for u in 0..u_len {
            let a = alpha[t * u_len + u];
            if a == f64::NEG_INFINITY {
                continue;
            }
            let blank_next = if t + 1 < t_len {
                Some(beta[(t + 1) * u_len + u])
            } else if u + 1 == u_len {
                Some(0.0)
            } else {
                None
            };
            if let Some(b) = blank_next {
                grad[lat.index(t, u, BLANK)] = -(a + lat.get(t, u, BLANK) + b - log_p).exp();
            }
            if u + 1 < u_len {
                let k = labels[u];
                grad[lat.index(t, u, k)] = -(a + lat.get(t, u, k) + beta[t * u_len + u + 1] - log_p).exp();
            }
        }
    }
    Ok(RnntLoss { loss: -log_p, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transducer::brute_force_posterior;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lattice(rng: &mut ChaCha8Rng, t: usize, u: usize, v: usize) -> Lattice {
        let logits = (0..t * (u + 1) * v).map(|_| rng.random_range(-3.0..3.0)).collect();
        Lattice::from_logits(t, u, v, logits).unwrap()
    }

    fn random_labels(rng: &mut ChaCha8Rng, u: usize, v: usize) -> Vec<usize> {
        (0..u).map(|_| rng.random_range(1..v)).collect()
    }

    #[test]
    fn single_frame_no_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lat = random_lattice(&mut rng, 1, 0, 4);
        assert_eq!(rnnt_log_posterior(&lat, &[]).unwrap(), lat.get(0, 0, BLANK));
    }

    #[test]
    fn certain_blank_gives_zero() {
        let lp: Vec<f64> = (0..3).flat_map(|_| [0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]).collect();
        let lat = Lattice::new(3, 0, 3, lp).unwrap();
        assert_eq!(rnnt_log_posterior(&lat, &[]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_two_frames_one_label() {
        // two alignments (emit, blank, blank) and (blank, emit, blank), each (1/V)^3
        let v = 5usize;
        let lat = Lattice::new(2, 1, v, vec![-(v as f64).ln(); 2 * 2 * v]).unwrap();
        let expected = (2.0 / (v as f64).powi(3)).ln();
        assert!((rnnt_log_posterior(&lat, &[3]).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let (t, u, v) = (rng.random_range(1..=5), rng.random_range(0..=4), rng.random_range(2..=6));
            let lat = random_lattice(&mut rng, t, u, v);
            let y = random_labels(&mut rng, u, v);
            let dp = rnnt_log_posterior(&lat, &y).unwrap();
            let bf = brute_force_posterior(&lat, &y).unwrap();
            assert!((dp - bf).abs() < 1e-10, "{dp} vs {bf}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for _ in 0..20 {
            let lat = random_lattice(&mut rng, 3, 2, 4);
            let y = random_labels(&mut rng, 2, 4);
            let out = rnnt_loss_and_grad(&lat, &y).unwrap();
            for i in 0..lat.as_slice().len() {
                let mut plus = lat.clone();
                plus.as_mut_slice()[i] += h;
                let mut minus = lat.clone();
                minus.as_mut_slice()[i] -= h;
                let fd = (-rnnt_log_posterior(&plus, &y).unwrap() + rnnt_log_posterior(&minus, &y).unwrap()) / (2.0 * h);
                let err = (fd - out.grad[i]).abs() / fd.abs().max(out.grad[i].abs()).max(1e-3);
                assert!(err < 1e-5, "entry {i}: fd {fd} analytic {}", out.grad[i]);
            }
        }
    }

    #[test]
    fn deterministic_path_has_zero_loss() {
        // T = 2, y = [1]: emit at (0, 0), blank at (0, 1), blank at (1, 1)
        let ninf = f64::NEG_INFINITY;
        let v = 3;
        let mut lp = vec![ninf; 2 * 2 * v];
        let idx = |t: usize, u: usize, k: usize| (t * 2 + u) * v + k;
        lp[idx(0, 0, 1)] = 0.0;
        lp[idx(0, 1, 0)] = 0.0;
        lp[idx(1, 0, 0)] = 0.0;
        lp[idx(1, 1, 0)] = 0.0;
        let lat = Lattice::new(2, 1, v, lp).unwrap();
        let out = rnnt_loss_and_grad(&lat, &[1]).unwrap();
        assert_eq!(out.loss, 0.0);
        for i in [idx(0, 0, 1), idx(0, 1, 0), idx(1, 1, 0)] {
            assert_eq!(out.grad[i], -1.0);
        }
        assert!(out.grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn loss_is_non_negative_and_errors_are_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lat = random_lattice(&mut rng, 4, 2, 5);
        assert!(rnnt_loss_and_grad(&lat, &[1, 4]).unwrap().loss >= 0.0);
        let mut bad = lat.clone();
        bad.as_mut_slice()[3] = f64::NAN;
        assert_eq!(rnnt_log_posterior(&bad, &[1, 4]), Err(TransducerError::NaN("lattice")));
        let impossible = Lattice::new(1, 1, 2, vec![0.0, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(rnnt_loss_and_grad(&impossible, &[1]), Err(TransducerError::ZeroProbability));
    }
}
