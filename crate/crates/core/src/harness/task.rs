//! Synthetic formatted-speech task.
//!
//! Each utterance is one or more short sentences. A word occupies a fixed
//! number of frames carrying its code, a comma adds a silent pause frame and
//! every sentence ends in a silent frame whose pitch channel is +1 for a
//! question and -1 for a statement; the last word of a sentence also carries
//! a rising or falling pitch. Word codes are case-blind, so capitalization has
//! to come from the label context. Teacher embeddings are a fixed nonlinear
//! projection of a wider window of the clean signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::HarnessError;
use crate::mvq::{self, CiDataset, CodebookSet, EmbeddingSet, TrainReport};
use crate::textnorm::{detokenize, Transcript};
use crate::transducer::TokenInventory;

/// Channels: 8 for the word code, then energy, then pitch.
pub const FRAME_DIM: usize = 10;
const CODE_DIM: usize = 8;
const ENERGY: usize = 8;
const PITCH: usize = 9;

pub const TEACHER_DIM: usize = 16;
/// Frames on each side the teacher sees.
const TEACHER_RADIUS: usize = 2;
const TEACHER_SEED: u64 = 0x7ea0_c4e5;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    /// Lowercase word list, at most 8 entries.
    pub words: Vec<String>,
    pub min_words: usize,
    pub max_words: usize,
    pub max_sentences: usize,
    pub comma_prob: f64,
    pub question_prob: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub frames_per_word: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            words: ["who", "is", "she", "he", "went", "home", "now", "there"]
                .map(String::from)
                .to_vec(),
            min_words: 2,
            max_words: 3,
            max_sentences: 2,
            comma_prob: 0.4,
            question_prob: 0.4,
            noise: 0.3,
            frames_per_word: 2,
        }
    }
}

impl TaskConfig {
    /// A single capitalized word and a period, without noise.
    pub fn two_token() -> Self {
        Self {
            words: vec!["go".into()],
            min_words: 1,
            max_words: 1,
            max_sentences: 2,
            comma_prob: 0.0,
            question_prob: 0.0,
            noise: 0.0,
            frames_per_word: 2,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let ok = !self.words.is_empty()
            && self.words.len() <= CODE_DIM
            && self.words.iter().all(|w| !w.is_empty() && w.chars().all(|c| c.is_lowercase()))
            && 1 <= self.min_words
            && self.min_words <= self.max_words
            && self.max_sentences >= 1
            && (0.0..=1.0).contains(&self.comma_prob)
            && (0.0..=1.0).contains(&self.question_prob)
            && self.noise >= 0.0
            && self.frames_per_word >= 1;
        if ok {
            Ok(())
        } else {
            Err(HarnessError::Config(format!("invalid task configuration {self:?}")))
        }
    }

    /// Every token the task can produce, in a fixed order.
    pub fn inventory(&self) -> Result<TokenInventory, HarnessError> {
        self.validate()?;
        let mut tokens: Vec<String> = Vec::new();
        if self.max_words >= 2 {
            tokens.extend(self.words.iter().cloned());
        }
        tokens.extend(self.words.iter().map(|w| capitalize(w)));
        tokens.push(".".into());
        if self.comma_prob > 0.0 && self.max_words >= 2 {
            tokens.push(",".into());
        }
        if self.question_prob > 0.0 {
            tokens.push("?".into());
        }
        Ok(TokenInventory::new(tokens)?)
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyUtterance {
    /// `T x FRAME_DIM`, row-major.
    pub frames: Vec<f64>,
    /// Label ids into the task inventory.
    pub target: Vec<usize>,
    /// `T x TEACHER_DIM`, row-major.
    pub teacher: Vec<f64>,
}

impl ToyUtterance {
    pub fn n_frames(&self) -> usize {
        self.frames.len() / FRAME_DIM
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * FRAME_DIM..(t + 1) * FRAME_DIM]
    }

    pub fn transcript(&self, inventory: &TokenInventory) -> Transcript {
        Transcript::new(detokenize(&inventory.decode(&self.target)))
    }
}

/// Walsh-Hadamard row `w`: orthogonal ±1 codes.
fn word_code(w: usize) -> [f64; CODE_DIM] {
    std::array::from_fn(|c| if (w & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
}

fn teacher_projection() -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(TEACHER_SEED);
    let inp = FRAME_DIM * (2 * TEACHER_RADIUS + 1);
    let scale = (3.0 / inp as f64).sqrt() * 1.5;
    (0..TEACHER_DIM * inp).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Stacks `radius` frames either side of each frame, zero-padded at the edges.
pub fn splice(frames: &[f64], dim: usize, radius: usize) -> Vec<f64> {
    let t_len = frames.len() / dim;
    let width = dim * (2 * radius + 1);
    let mut out = vec![0.0; t_len * width];
    for t in 0..t_len {
        for (j, dt) in (-(radius as isize)..=radius as isize).enumerate() {
            let s = t as isize + dt;
            if (0..t_len as isize).contains(&s) {
                let s = s as usize;
                out[t * width + j * dim..t * width + (j + 1) * dim].copy_from_slice(&frames[s * dim..(s + 1) * dim]);
            }
        }
    }
    out
}

fn teacher_embeddings(clean: &[f64], projection: &[f64]) -> Vec<f64> {
    let spliced = splice(clean, FRAME_DIM, TEACHER_RADIUS);
    let inp = FRAME_DIM * (2 * TEACHER_RADIUS + 1);
    spliced
        .chunks_exact(inp)
        .flat_map(|x| {
            projection
                .chunks_exact(inp)
                .map(|row| super::nn::dot(row, x).tanh())
                .collect::<Vec<_>>()
        })
        .collect()
}

fn utterance(config: &TaskConfig, inventory: &TokenInventory, projection: &[f64], rng: &mut ChaCha8Rng) -> ToyUtterance {
    let id = |tok: &str| inventory.id(tok).expect("token in inventory");
    let mut clean: Vec<f64> = Vec::new();
    let mut target = Vec::new();
    let sentences = rng.random_range(1..=config.max_sentences);
    for _ in 0..sentences {
        let n_words = rng.random_range(config.min_words..=config.max_words);
        let question = rng.random_bool(config.question_prob);
        let comma_after = if n_words >= 2 && rng.random_bool(config.comma_prob) {
            Some(rng.random_range(0..n_words - 1))
        } else {
            None
        };
        for i in 0..n_words {
            let w = rng.random_range(0..config.words.len());
            let token = if i == 0 {
                capitalize(&config.words[w])
            } else {
                config.words[w].clone()
            };
            target.push(id(&token));
            let code = word_code(w);
            for f in 0..config.frames_per_word {
                let mut frame = [0.0; FRAME_DIM];
                frame[..CODE_DIM].copy_from_slice(&code);
                frame[ENERGY] = 1.0;
                if i + 1 == n_words {
                    let slope = 0.5 * (f + 1) as f64 / config.frames_per_word as f64;
                    frame[PITCH] = if question { slope } else { -slope };
                }
                clean.extend_from_slice(&frame);
            }
            if comma_after == Some(i) {
                target.push(id(","));
                clean.extend_from_slice(&[0.0; FRAME_DIM]);
            }
        }
        target.push(id(if question { "?" } else { "." }));
        let mut end = [0.0; FRAME_DIM];
        end[PITCH] = if question { 1.0 } else { -1.0 };
        clean.extend_from_slice(&end);
    }
    let teacher = teacher_embeddings(&clean, projection);
    let mut frames = clean;
    if config.noise > 0.0 {
        let normal = Normal::new(0.0, config.noise).expect("finite noise level");
        for x in &mut frames {
            *x += normal.sample(rng);
        }
    }
    ToyUtterance { frames, target, teacher }
}

/// `n` utterances; utterance `i` draws from its own stream of the seed, so the
/// result does not depend on how generation is scheduled.
pub fn generate_dataset(n: usize, seed: u64, config: &TaskConfig) -> Result<Vec<ToyUtterance>, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config("dataset size must be at least 1".into()));
    }
    let inventory = config.inventory()?;
    let projection = teacher_projection();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            utterance(config, &inventory, &projection, &mut rng)
        })
        .collect())
}

/// Teacher embeddings of a dataset in matrix-file form.
pub fn teacher_set(data: &[ToyUtterance]) -> EmbeddingSet {
    EmbeddingSet {
        dim: TEACHER_DIM,
        utterances: data.iter().map(|u| u.teacher.clone()).collect(),
    }
}

/// Trains codebooks on all teacher frames and encodes every utterance.
pub fn prepare_kd_targets(
    data: &[ToyUtterance],
    config: mvq::TrainConfig,
) -> Result<(CodebookSet, CiDataset, TrainReport), HarnessError> {
    let all: Vec<f64> = data.iter().flat_map(|u| u.teacher.iter().copied()).collect();
    let (codebooks, report) = mvq::train_codebooks(&all, TEACHER_DIM, config)?;
    let mut ci = CiDataset::new(config.n_codebooks);
    for u in data {
        ci.utterances.push(codebooks.encode_frames(&u.teacher)?);
    }
    Ok((codebooks, ci, report))
}
