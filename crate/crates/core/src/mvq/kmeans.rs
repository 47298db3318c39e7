//! Lloyd's k-means with k-means++ seeding.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;

use super::nearest;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Row-major `k x dim`.
    pub centroids: Vec<f64>,
    /// Nearest centroid of every point under the final centroids.
    pub assignment: Vec<usize>,
    /// Mean squared error after seeding, then after each iteration.
    pub mse_trace: Vec<f64>,
}

fn assign(points: &[f64], dim: usize, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    points
        .par_chunks_exact(dim)
        .map(|p| nearest(centroids, dim, p))
        .unzip()
}

fn mean(errors: &[f64]) -> f64 {
    errors.iter().sum::<f64>() / errors.len() as f64
}

fn seed_plus_plus<R: Rng>(points: &[f64], dim: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let n = points.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&points[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = points
        .chunks_exact(dim)
        .map(|p| super::squared_distance(p, &centroids[..dim]))
        .collect();
    for _ in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a centroid
            Err(_) => rng.random_range(0..n),
        };
        let c = points[pick * dim..(pick + 1) * dim].to_vec();
        for (d, p) in d2.iter_mut().zip(points.chunks_exact(dim)) {
            *d = d.min(super::squared_distance(p, &c));
        }
        centroids.extend(c);
    }
    centroids
}

/// Runs `iters` Lloyd iterations on row-major `points`.
///
/// An empty cluster is moved onto the point with the largest error against the
/// freshly updated centroids, so the traced MSE never increases.
pub fn lloyd<R: Rng>(points: &[f64], dim: usize, k: usize, iters: usize, rng: &mut R) -> KMeansResult {
    assert!(points.len() >= dim && k > 0, "k-means needs points and clusters");
    let centroids = seed_plus_plus(points, dim, k, rng);
    lloyd_from(points, dim, centroids, iters)
}

fn lloyd_from(points: &[f64], dim: usize, mut centroids: Vec<f64>, iters: usize) -> KMeansResult {
    let k = centroids.len() / dim;
    let (mut assignment, errors) = assign(points, dim, &centroids);
    let mut mse_trace = vec![mean(&errors)];

    for _ in 0..iters {
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.chunks_exact(dim).zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *dst = s * inv;
                }
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut errors: Vec<f64> = points
                .chunks_exact(dim)
                .zip(&assignment)
                .map(|(p, &a)| super::squared_distance(p, &centroids[a * dim..(a + 1) * dim]))
                .collect();
            for c in empty {
                let mut worst = 0;
                for (i, &e) in errors.iter().enumerate() {
                    if e > errors[worst] {
                        worst = i;
                    }
                }
                centroids[c * dim..(c + 1) * dim]
                    .copy_from_slice(&points[worst * dim..(worst + 1) * dim]);
                errors[worst] = 0.0;
            }
        }
        let (next, errors) = assign(points, dim, &centroids);
        assignment = next;
        mse_trace.push(mean(&errors));
    }

    KMeansResult {
        centroids,
        assignment,
        mse_trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force MSE of `points` against `centroids`.
    fn mse_oracle(points: &[f64], dim: usize, centroids: &[f64]) -> f64 {
        let mut total = 0.0;
        for p in points.chunks_exact(dim) {
            let mut best = f64::INFINITY;
            for c in centroids.chunks_exact(dim) {
                let d: f64 = p.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                best = best.min(d);
            }
            total += best;
        }
        total / (points.len() / dim) as f64
    }

    #[test]
    fn trace_is_monotone_and_matches_oracle() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<f64> = (0..300 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let km = lloyd(&points, 2, 16, 10, &mut rng);
            assert_eq!(km.mse_trace.len(), 11);
            for w in km.mse_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            let last = *km.mse_trace.last().unwrap();
            assert!((mse_oracle(&points, 2, &km.centroids) - last).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let points = vec![0.0, 1.0, 2.0, 10.0];
        // centroid 2 starts far from everything and owns no point
        let km = lloyd_from(&points, 1, vec![0.5, 6.0, 1000.0], 1);
        // updated centroids {1, 10}; errors (1, 0, 1, 0), first worst is 0.0
        assert_eq!(km.centroids, vec![1.0, 10.0, 0.0]);
        assert_eq!(km.assignment, vec![2, 0, 0, 1]);
        assert_eq!(km.mse_trace, vec![(0.25 + 0.25 + 2.25 + 16.0) / 4.0, 0.25]);
    }
}
