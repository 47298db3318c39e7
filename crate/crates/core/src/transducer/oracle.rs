//! Literal alignment enumeration, for checking the dynamic program.

use super::{Lattice, TransducerError, BLANK};
use crate::numeric::log_sum_exp;

pub const MAX_ORACLE_FRAMES: usize = 6;
pub const MAX_ORACLE_LABELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Advance one frame.
    Blank,
    /// Emit the next label and stay on the frame.
    Emit,
}

/// Every alignment of `labels` labels with `frames` frames: all orderings of
/// `frames - 1` blanks and `labels` emissions, followed by the final blank.
pub fn alignments(frames: usize, labels: usize) -> Vec<Vec<Step>> {
    fn go(blanks: usize, emits: usize, prefix: &mut Vec<Step>, out: &mut Vec<Vec<Step>>) {
        if blanks == 0 && emits == 0 {
            let mut path = prefix.clone();
            path.push(Step::Blank);
            out.push(path);
            return;
        }
        if blanks > 0 {
            prefix.push(Step::Blank);
            go(blanks - 1, emits, prefix, out);
            prefix.pop();
        }
        if emits > 0 {
            prefix.push(Step::Emit);
            go(blanks, emits - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if frames > 0 {
        go(frames - 1, labels, &mut Vec::new(), &mut out);
    }
    out
}

/// `log P(y | x)` as the log of an explicit sum over [`alignments`], each
/// scored as the product of its per-step probabilities.
pub fn brute_force_posterior(lat: &Lattice, labels: &[usize]) -> Result<f64, TransducerError> {
    if lat.frames() > MAX_ORACLE_FRAMES || labels.len() > MAX_ORACLE_LABELS {
        return Err(TransducerError::TooLarge {
            frames: lat.frames(),
            labels: labels.len(),
        });
    }
    lat.check(labels)?;
    let scores: Vec<f64> = alignments(lat.frames(), labels.len())
        .iter()
        .map(|path| {
            let (mut t, mut u, mut score) = (0, 0, 0.0);
            for step in path {
                match step {
                    Step::Blank => {
                        score += lat.get(t, u, BLANK);
                        t += 1;
                    }
                    Step::Emit => {
                        score += lat.get(t, u, labels[u]);
                        u += 1;
                    }
                }
            }
            score
        })
        .collect();
    Ok(log_sum_exp(&scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Lattice-path counts from Pascal's rule, independent of the enumerator.
    fn pascal(n: usize, k: usize) -> usize {
        let mut row = vec![1usize];
        for _ in 0..n {
            let mut next = vec![1usize; row.len() + 1];
            for i in 1..row.len() {
                next[i] = row[i - 1] + row[i];
            }
            row = next;
        }
        row[k]
    }

    #[test]
    fn path_counts_follow_binomials() {
        assert_eq!(alignments(3, 2).len(), 6);
        for t in 1..=MAX_ORACLE_FRAMES {
            for u in 0..=MAX_ORACLE_LABELS {
                let paths = alignments(t, u);
                assert_eq!(paths.len(), pascal(t - 1 + u, u), "T={t} U={u}");
                for p in &paths {
                    assert_eq!(p.iter().filter(|s| **s == Step::Blank).count(), t);
                    assert_eq!(p.iter().filter(|s| **s == Step::Emit).count(), u);
                    assert_eq!(*p.last().unwrap(), Step::Blank);
                }
            }
        }
    }

    #[test]
    fn size_guard() {
        let lat = Lattice::new(7, 0, 2, vec![0.0; 14]).unwrap();
        assert_eq!(
            brute_force_posterior(&lat, &[]),
            Err(TransducerError::TooLarge { frames: 7, labels: 0 })
        );
    }

    #[test]
    fn single_cell() {
        let lat = Lattice::from_logits(1, 0, 3, vec![0.3, 1.0, -2.0]).unwrap();
        assert_eq!(brute_force_posterior(&lat, &[]).unwrap(), lat.get(0, 0, BLANK));
    }
}
