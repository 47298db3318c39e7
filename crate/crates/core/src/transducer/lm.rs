//! Add-k smoothed n-gram model over label ids, for shallow fusion.

use std::collections::HashMap;

use super::{check_labels, LanguageModel, TransducerError, BLANK};

#[derive(Debug, Clone)]
pub struct NgramLm {
    order: usize,
    vocab: usize,
    k: f64,
    /// History (padded with blank) to counts over `0..vocab`.
    counts: HashMap<Vec<usize>, Vec<f64>>,
}

impl NgramLm {
    /// Counts `order`-grams over `sentences`, padding the start with blank.
    pub fn train(sentences: &[Vec<usize>], vocab: usize, order: usize, k: f64) -> Result<Self, TransducerError> {
        if order == 0 || vocab < 2 || !(k > 0.0 && k.is_finite()) {
            return Err(TransducerError::Shape(format!(
                "n-gram needs order >= 1, V >= 2 and k > 0, got {order}, {vocab}, {k}"
            )));
        }
        let mut counts: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
        for s in sentences {
            check_labels(s, vocab)?;
            for i in 0..s.len() {
                let history = Self::history_of(order, &s[..i]);
                counts.entry(history).or_insert_with(|| vec![0.0; vocab])[s[i]] += 1.0;
            }
        }
        Ok(Self {
            order,
            vocab,
            k,
            counts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    fn history_of(order: usize, prefix: &[usize]) -> Vec<usize> {
        let n = order - 1;
        let mut h = vec![BLANK; n.saturating_sub(prefix.len())];
        h.extend_from_slice(&prefix[prefix.len().saturating_sub(n)..]);
        h
    }
}

impl LanguageModel for NgramLm {
    fn log_probs(&self, prefix: &[usize]) -> Vec<f64> {
        let history = Self::history_of(self.order, prefix);
        let labels = (self.vocab - 1) as f64;
        let mut out = vec![f64::NEG_INFINITY; self.vocab];
        match self.counts.get(&history) {
            Some(c) => {
                let total: f64 = c[1..].iter().sum::<f64>() + self.k * labels;
                for (o, &n) in out.iter_mut().zip(c).skip(1) {
                    *o = ((n + self.k) / total).ln();
                }
            }
            None => out[1..].fill(-labels.ln()),
        }
        out
    }
}
