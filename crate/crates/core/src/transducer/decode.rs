//! Beam search over transducer outputs with optional shallow fusion.
//!
//! The search is step-synchronous: every step expands each live hypothesis
//! `(labels, frame)` by one symbol, either a blank (next frame, or completion
//! on the last frame) or one label. All routes to a given `(labels, frame)`
//! take `len(labels) + frame` steps, so merging duplicates within a step sums
//! every alignment of that prefix. With an unbounded beam the completed
//! scores are exact posteriors; with a beam of one the search is greedy
//! decoding.

use std::cmp::Ordering;
use std::collections::HashMap;

use super::{check_labels, Lattice, TransducerError, BLANK};
use crate::numeric::log_add_exp;

/// Acoustic side of decoding: a normalized log distribution over the
/// blank-augmented vocabulary for a frame and the labels emitted so far.
pub trait StepScorer {
    fn frames(&self) -> usize;
    fn vocab(&self) -> usize;
    fn log_probs(&self, frame: usize, context: &[usize]) -> Vec<f64>;
}

/// External language model over label sequences.
pub trait LanguageModel {
    /// `log P(next | prefix)` for every label id; entry 0 (blank) is ignored.
    fn log_probs(&self, prefix: &[usize]) -> Vec<f64>;
}

/// Labels allowed per frame when no explicit output cap is given.
pub const DEFAULT_SYMBOLS_PER_FRAME: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    /// Cap on emitted labels; `None` means `DEFAULT_SYMBOLS_PER_FRAME * T`.
    pub max_len: Option<usize>,
    /// Shallow-fusion weight on the LM log-probability.
    pub lm_weight: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam: 4,
            max_len: None,
            lm_weight: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeHypothesis {
    pub tokens: Vec<usize>,
    /// `acoustic_score + lm_weight * lm_score`.
    pub score: f64,
    pub acoustic_score: f64,
    pub lm_score: f64,
}

/// Descending score, then lexicographic labels.
fn rank(a_score: f64, a_tokens: &[usize], b_score: f64, b_tokens: &[usize]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_tokens.cmp(b_tokens))
}

fn scored<S: StepScorer + ?Sized>(scorer: &S, frame: usize, context: &[usize]) -> Result<Vec<f64>, TransducerError> {
    let lp = scorer.log_probs(frame, context);
    if lp.len() != scorer.vocab() {
        return Err(TransducerError::Shape(format!(
            "scorer returned {} values for vocabulary {}",
            lp.len(),
            scorer.vocab()
        )));
    }
    if lp.iter().any(|x| x.is_nan()) {
        return Err(TransducerError::NaN("scorer output"));
    }
    Ok(lp)
}

struct Fusion<'a> {
    lm: &'a dyn LanguageModel,
    weight: f64,
}

impl Fusion<'_> {
    fn new<'a>(lm: Option<&'a dyn LanguageModel>, weight: f64) -> Result<Option<Fusion<'a>>, TransducerError> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(TransducerError::InvalidWeight(weight));
        }
        // a zero weight never consults the LM
        Ok(lm.filter(|_| weight > 0.0).map(|lm| Fusion { lm, weight }))
    }

    fn log_probs(&self, prefix: &[usize], vocab: usize) -> Result<Vec<f64>, TransducerError> {
        let lp = self.lm.log_probs(prefix);
        if lp.len() != vocab {
            return Err(TransducerError::Shape(format!(
                "language model returned {} values for vocabulary {vocab}",
                lp.len()
            )));
        }
        if lp[1..].iter().any(|x| x.is_nan()) {
            return Err(TransducerError::NaN("language model output"));
        }
        Ok(lp)
    }
}

fn check_scorer<S: StepScorer + ?Sized>(scorer: &S) -> Result<(), TransducerError> {
    if scorer.frames() == 0 || scorer.vocab() < 2 {
        return Err(TransducerError::Shape(format!(
            "scorer has {} frames and vocabulary {}",
            scorer.frames(),
            scorer.vocab()
        )));
    }
    Ok(())
}

/// Argmax decoding: at every step take the best symbol, lowest id on ties.
pub fn greedy_search<S: StepScorer + ?Sized>(
    scorer: &S,
    config: &BeamConfig,
    lm: Option<&dyn LanguageModel>,
) -> Result<DecodeHypothesis, TransducerError> {
    check_scorer(scorer)?;
    let fusion = Fusion::new(lm, config.lm_weight)?;
    let vocab = scorer.vocab();
    let max_len = config.max_len.unwrap_or(DEFAULT_SYMBOLS_PER_FRAME * scorer.frames());
    let mut tokens = Vec::new();
    let (mut acoustic, mut lm_score) = (0.0, 0.0);
    let mut frame = 0;
    while frame < scorer.frames() {
        let lp = scored(scorer, frame, &tokens)?;
        let lm_lp = match &fusion {
            Some(f) => Some(f.log_probs(&tokens, vocab)?),
            None => None,
        };
        let weight = fusion.as_ref().map_or(0.0, |f| f.weight);
        let allowed = if tokens.len() < max_len { vocab } else { 1 };
        let mut best = (BLANK, lp[BLANK]);
        for (k, &a) in lp.iter().enumerate().take(allowed).skip(1) {
            let s = a + lm_lp.as_ref().map_or(0.0, |l| weight * l[k]);
            if s > best.1 {
                best = (k, s);
            }
        }
        acoustic += lp[best.0];
        if best.0 == BLANK {
            frame += 1;
        } else {
            lm_score += lm_lp.as_ref().map_or(0.0, |l| l[best.0]);
            tokens.push(best.0);
        }
    }
    let weight = fusion.as_ref().map_or(0.0, |f| f.weight);
    Ok(DecodeHypothesis {
        tokens,
        score: acoustic + weight * lm_score,
        acoustic_score: acoustic,
        lm_score,
    })
}

struct Candidate {
    tokens: Vec<usize>,
    frame: usize,
    done: bool,
    acoustic: f64,
    lm: f64,
}

impl Candidate {
    fn score(&self, weight: f64) -> f64 {
        if weight == 0.0 {
            self.acoustic
        } else {
            self.acoustic + weight * self.lm
        }
    }
}

/// Transducer beam search with log-linear shallow fusion.
///
/// Hypotheses are ranked by `acoustic + lm_weight * lm`; ties go to the
/// lexicographically smaller label sequence. Completed hypotheses compete for
/// beam slots with live ones, and the best completed one is returned.
pub fn beam_search<S: StepScorer + ?Sized>(
    scorer: &S,
    config: &BeamConfig,
    lm: Option<&dyn LanguageModel>,
) -> Result<DecodeHypothesis, TransducerError> {
    if config.beam == 0 {
        return Err(TransducerError::InvalidBeam);
    }
    check_scorer(scorer)?;
    let fusion = Fusion::new(lm, config.lm_weight)?;
    let weight = fusion.as_ref().map_or(0.0, |f| f.weight);
    let vocab = scorer.vocab();
    let frames = scorer.frames();
    let max_len = config.max_len.unwrap_or(DEFAULT_SYMBOLS_PER_FRAME * frames);

    let mut live = vec![Candidate {
        tokens: Vec::new(),
        frame: 0,
        done: false,
        acoustic: 0.0,
        lm: 0.0,
    }];
    let mut finished: Vec<Candidate> = Vec::new();

    while !live.is_empty() {
        let mut pool: Vec<Candidate> = Vec::new();
        let mut index: HashMap<(Vec<usize>, usize, bool), usize> = HashMap::new();
        let mut push = |c: Candidate, pool: &mut Vec<Candidate>| {
            let key = (c.tokens.clone(), c.frame, c.done);
            match index.get(&key) {
                Some(&i) => pool[i].acoustic = log_add_exp(pool[i].acoustic, c.acoustic),
                None => {
                    index.insert(key, pool.len());
                    pool.push(c);
                }
            }
        };
        for hyp in &live {
            let lp = scored(scorer, hyp.frame, &hyp.tokens)?;
            let last = hyp.frame + 1 == frames;
            push(
                Candidate {
                    tokens: hyp.tokens.clone(),
                    frame: if last { hyp.frame } else { hyp.frame + 1 },
                    done: last,
                    acoustic: hyp.acoustic + lp[BLANK],
                    lm: hyp.lm,
                },
                &mut pool,
            );
            if hyp.tokens.len() >= max_len {
                continue;
            }
            let lm_lp = match &fusion {
                Some(f) => Some(f.log_probs(&hyp.tokens, vocab)?),
                None => None,
            };
            for (k, &a) in lp.iter().enumerate().skip(1) {
                let mut tokens = hyp.tokens.clone();
                tokens.push(k);
                push(
                    Candidate {
                        tokens,
                        frame: hyp.frame,
                        done: false,
                        acoustic: hyp.acoustic + a,
                        lm: hyp.lm + lm_lp.as_ref().map_or(0.0, |l| l[k]),
                    },
                    &mut pool,
                );
            }
        }
        pool.sort_by(|a, b| {
            rank(a.score(weight), &a.tokens, b.score(weight), &b.tokens)
                .then_with(|| b.done.cmp(&a.done))
                .then_with(|| a.frame.cmp(&b.frame))
        });
        pool.truncate(config.beam);
        live.clear();
        for c in pool {
            if c.done {
                finished.push(c);
            } else {
                live.push(c);
            }
        }
    }

    let best = finished
        .into_iter()
        .min_by(|a, b| rank(a.score(weight), &a.tokens, b.score(weight), &b.tokens))
        .expect("every search path ends in a completed hypothesis");
    Ok(DecodeHypothesis {
        score: best.score(weight),
        acoustic_score: best.acoustic,
        lm_score: best.lm,
        tokens: best.tokens,
    })
}

/// The lattice a scorer induces for a fixed label sequence.
pub fn build_lattice<S: StepScorer + ?Sized>(scorer: &S, labels: &[usize]) -> Result<Lattice, TransducerError> {
    check_scorer(scorer)?;
    check_labels(labels, scorer.vocab())?;
    let mut values = Vec::with_capacity(scorer.frames() * (labels.len() + 1) * scorer.vocab());
    for t in 0..scorer.frames() {
        for u in 0..=labels.len() {
            values.extend(scored(scorer, t, &labels[..u])?);
        }
    }
    Lattice::new(scorer.frames(), labels.len(), scorer.vocab(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::log_softmax_in_place;
    use crate::transducer::rnnt_log_posterior;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random context-dependent scorer: the distribution at `(t, context)` is a
    /// hash of the frame and the last two labels.
    struct HashScorer {
        frames: usize,
        vocab: usize,
        table: Vec<f64>,
    }

    impl HashScorer {
        fn new(frames: usize, vocab: usize, seed: u64, sharpness: f64) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let table = (0..frames * vocab * vocab * vocab)
                .map(|_| rng.random_range(-sharpness..sharpness))
                .collect();
            Self { frames, vocab, table }
        }
    }

    impl StepScorer for HashScorer {
        fn frames(&self) -> usize {
            self.frames
        }
        fn vocab(&self) -> usize {
            self.vocab
        }
        fn log_probs(&self, frame: usize, context: &[usize]) -> Vec<f64> {
            let a = context.last().copied().unwrap_or(0);
            let b = context.len().checked_sub(2).map_or(0, |i| context[i]);
            let start = ((frame * self.vocab + a) * self.vocab + b) * self.vocab;
            let mut row = self.table[start..start + self.vocab].to_vec();
            log_softmax_in_place(&mut row);
            row
        }
    }

    struct BiasLm {
        favourite: usize,
        vocab: usize,
    }

    impl LanguageModel for BiasLm {
        fn log_probs(&self, _prefix: &[usize]) -> Vec<f64> {
            let mut row = vec![-5.0; self.vocab];
            row[self.favourite] = 0.0;
            row[0] = 0.0;
            log_softmax_in_place(&mut row[1..]);
            row
        }
    }

    fn exhaustive(scorer: &HashScorer, max_len: usize, lm: Option<(&dyn LanguageModel, f64)>) -> (Vec<usize>, f64) {
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut frontier = vec![Vec::new()];
        while let Some(y) = frontier.pop() {
            let lat = build_lattice(scorer, &y).unwrap();
            let mut score = rnnt_log_posterior(&lat, &y).unwrap();
            if let Some((lm, w)) = lm {
                score += w * (0..y.len()).map(|i| lm.log_probs(&y[..i])[y[i]]).sum::<f64>();
            }
            let better = match &best {
                None => true,
                Some((by, bs)) => score > *bs || (score == *bs && y < *by),
            };
            if better {
                best = Some((y.clone(), score));
            }
            if y.len() < max_len {
                for k in 1..scorer.vocab {
                    let mut next = y.clone();
                    next.push(k);
                    frontier.push(next);
                }
            }
        }
        best.unwrap()
    }

    #[test]
    fn beam_one_is_greedy() {
        for seed in 0..50 {
            let scorer = HashScorer::new(5, 4, seed, 3.0);
            let cfg = BeamConfig {
                beam: 1,
                max_len: Some(6),
                lm_weight: 0.0,
            };
            let g = greedy_search(&scorer, &cfg, None).unwrap();
            let b = beam_search(&scorer, &cfg, None).unwrap();
            assert_eq!(g, b, "seed {seed}");
        }
    }

    #[test]
    fn wide_beam_is_exhaustive() {
        for seed in 0..10 {
            let scorer = HashScorer::new(4, 4, 100 + seed, 2.0);
            let cfg = BeamConfig {
                beam: 10_000,
                max_len: Some(4),
                lm_weight: 0.0,
            };
            let b = beam_search(&scorer, &cfg, None).unwrap();
            let (y, score) = exhaustive(&scorer, 4, None);
            assert_eq!(b.tokens, y);
            assert!((b.score - score).abs() < 1e-10);
        }
    }

    #[test]
    fn wide_beam_with_fusion_is_exhaustive() {
        let lm = BiasLm { favourite: 2, vocab: 4 };
        for seed in 0..5 {
            let scorer = HashScorer::new(3, 4, 200 + seed, 1.0);
            let cfg = BeamConfig {
                beam: 10_000,
                max_len: Some(3),
                lm_weight: 0.7,
            };
            let b = beam_search(&scorer, &cfg, Some(&lm)).unwrap();
            let (y, score) = exhaustive(&scorer, 3, Some((&lm, 0.7)));
            assert_eq!(b.tokens, y);
            assert!((b.score - score).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_weight_ignores_the_lm() {
        let scorer = HashScorer::new(5, 5, 3, 2.0);
        let cfg = BeamConfig {
            beam: 4,
            max_len: None,
            lm_weight: 0.0,
        };
        let plain = beam_search(&scorer, &cfg, None).unwrap();
        for fav in 1..5 {
            let lm = BiasLm { favourite: fav, vocab: 5 };
            assert_eq!(beam_search(&scorer, &cfg, Some(&lm)).unwrap(), plain);
        }
    }

    #[test]
    fn heavy_fusion_follows_the_lm() {
        let scorer = HashScorer::new(4, 4, 5, 0.1);
        let lm = BiasLm { favourite: 3, vocab: 4 };
        let cfg = BeamConfig {
            beam: 4,
            max_len: Some(2),
            lm_weight: 50.0,
        };
        let hyp = beam_search(&scorer, &cfg, Some(&lm)).unwrap();
        assert!(hyp.tokens.iter().all(|&k| k == 3));
        assert!((hyp.score - (hyp.acoustic_score + 50.0 * hyp.lm_score)).abs() < 1e-12);
    }

    #[test]
    fn certain_path_is_found_for_any_beam() {
        // frame t emits label t + 1 once, then blank
        struct Certain;
        impl StepScorer for Certain {
            fn frames(&self) -> usize {
                3
            }
            fn vocab(&self) -> usize {
                4
            }
            fn log_probs(&self, frame: usize, context: &[usize]) -> Vec<f64> {
                let mut row = vec![f64::NEG_INFINITY; 4];
                if context.len() == frame {
                    row[frame + 1] = 0.0;
                } else {
                    row[0] = 0.0;
                }
                row
            }
        }
        for beam in [1, 2, 4, 64] {
            let cfg = BeamConfig {
                beam,
                ..BeamConfig::default()
            };
            let hyp = beam_search(&Certain, &cfg, None).unwrap();
            assert_eq!(hyp.tokens, vec![1, 2, 3]);
            assert_eq!(hyp.score, 0.0);
        }
    }

    #[test]
    fn configuration_errors() {
        let scorer = HashScorer::new(2, 3, 0, 1.0);
        let bad_beam = BeamConfig {
            beam: 0,
            ..BeamConfig::default()
        };
        assert_eq!(beam_search(&scorer, &bad_beam, None), Err(TransducerError::InvalidBeam));
        let bad_weight = BeamConfig {
            lm_weight: -0.1,
            ..BeamConfig::default()
        };
        assert_eq!(
            beam_search(&scorer, &bad_weight, None),
            Err(TransducerError::InvalidWeight(-0.1))
        );
    }
}
