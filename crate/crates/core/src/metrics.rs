//! Formatted-text ASR metrics.
//!
//! All rates are corpus-level: summed edit costs over summed reference token
//! counts, as percentages. The F1 protocol only looks at utterance pairs whose
//! plain-view WER is zero, so words line up position by position and each
//! inter-word slot can be compared directly.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::textnorm::{is_punct_token, Transcript, View};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("corpus size mismatch: {refs} references vs {hyps} hypotheses")]
    LengthMismatch { refs: usize, hyps: usize },
    #[error("references contain no tokens in the {0:?} view")]
    NoReferenceTokens(View),
    #[error("references contain no punctuation marks; PER is undefined")]
    NoReferencePunctuation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EditKind {
    Match,
    Sub,
    Ins,
    Del,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EditOp {
    pub kind: EditKind,
    pub ref_index: Option<usize>,
    pub hyp_index: Option<usize>,
}

/// A minimum-cost Levenshtein alignment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EditAlignment {
    pub ops: Vec<EditOp>,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditAlignment {
    pub fn cost(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn matches(&self) -> usize {
        self.ops.len() - self.cost()
    }
}

/// Levenshtein distance table, `(n + 1) x (m + 1)` row-major.
fn distance_table<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<usize> {
    let cols = hypothesis.len() + 1;
    let mut d = vec![0usize; (reference.len() + 1) * cols];
    for (j, cell) in d.iter_mut().take(cols).enumerate() {
        *cell = j;
    }
    for i in 1..=reference.len() {
        d[i * cols] = i;
        for j in 1..cols {
            let diag = d[(i - 1) * cols + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let up = d[(i - 1) * cols + j] + 1;
            let left = d[i * cols + j - 1] + 1;
            d[i * cols + j] = diag.min(up).min(left);
        }
    }
    d
}

pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    *distance_table(reference, hypothesis).last().unwrap()
}

/// Minimum edit alignment; the backtrace prefers match, then substitution,
/// then deletion, then insertion.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditAlignment {
    let d = distance_table(reference, hypothesis);
    let cols = hypothesis.len() + 1;
    let mut out = EditAlignment::default();
    let (mut i, mut j) = (reference.len(), hypothesis.len());
    while i > 0 || j > 0 {
        let here = d[i * cols + j];
        if i > 0 && j > 0 {
            let diag = d[(i - 1) * cols + j - 1];
            if reference[i - 1] == hypothesis[j - 1] && here == diag {
                out.ops.push(EditOp {
                    kind: EditKind::Match,
                    ref_index: Some(i - 1),
                    hyp_index: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
            if here == diag + 1 && reference[i - 1] != hypothesis[j - 1] {
                out.ops.push(EditOp {
                    kind: EditKind::Sub,
                    ref_index: Some(i - 1),
                    hyp_index: Some(j - 1),
                });
                out.substitutions += 1;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * cols + j] + 1 {
            out.ops.push(EditOp {
                kind: EditKind::Del,
                ref_index: Some(i - 1),
                hyp_index: None,
            });
            out.deletions += 1;
            i -= 1;
        } else {
            out.ops.push(EditOp {
                kind: EditKind::Ins,
                ref_index: None,
                hyp_index: Some(j - 1),
            });
            out.insertions += 1;
            j -= 1;
        }
    }
    out.ops.reverse();
    out
}

fn check_corpus(refs: &[Transcript], hyps: &[Transcript]) -> Result<(), MetricsError> {
    if refs.len() != hyps.len() {
        return Err(MetricsError::LengthMismatch {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    if refs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    Ok(())
}

/// Summed edit cost and reference length over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ErrorCounts {
    pub errors: usize,
    pub reference_tokens: usize,
}

impl ErrorCounts {
    fn add(self, other: Self) -> Self {
        Self {
            errors: self.errors + other.errors,
            reference_tokens: self.reference_tokens + other.reference_tokens,
        }
    }
}

pub fn view_error_counts(
    refs: &[Transcript],
    hyps: &[Transcript],
    view: View,
) -> Result<ErrorCounts, MetricsError> {
    check_corpus(refs, hyps)?;
    Ok(refs
        .par_iter()
        .zip(hyps.par_iter())
        .map(|(r, h)| {
            let r = r.tokenize(view).tokens;
            let h = h.tokenize(view).tokens;
            ErrorCounts {
                errors: edit_distance(&r, &h),
                reference_tokens: r.len(),
            }
        })
        .reduce(ErrorCounts::default, ErrorCounts::add))
}

/// Corpus word error rate (percent) in the given view: `Plain` gives WER,
/// `Cased` gives WER C and `CasedPunct` gives WER PC.
pub fn wer(refs: &[Transcript], hyps: &[Transcript], view: View) -> Result<f64, MetricsError> {
    let counts = view_error_counts(refs, hyps, view)?;
    if counts.reference_tokens == 0 {
        return Err(MetricsError::NoReferenceTokens(view));
    }
    Ok(100.0 * counts.errors as f64 / counts.reference_tokens as f64)
}

fn punctuation_of(t: &Transcript) -> Vec<String> {
    t.tokenize(View::CasedPunct)
        .tokens
        .into_iter()
        .filter(|tok| is_punct_token(tok))
        .collect()
}

pub fn punctuation_error_counts(
    refs: &[Transcript],
    hyps: &[Transcript],
) -> Result<ErrorCounts, MetricsError> {
    check_corpus(refs, hyps)?;
    Ok(refs
        .par_iter()
        .zip(hyps.par_iter())
        .map(|(r, h)| {
            let r = punctuation_of(r);
            let h = punctuation_of(h);
            ErrorCounts {
                errors: edit_distance(&r, &h),
                reference_tokens: r.len(),
            }
        })
        .reduce(ErrorCounts::default, ErrorCounts::add))
}

/// Punctuation error rate (percent): edit distance over the punctuation-only
/// subsequences.
pub fn per(refs: &[Transcript], hyps: &[Transcript]) -> Result<f64, MetricsError> {
    let counts = punctuation_error_counts(refs, hyps)?;
    if counts.reference_tokens == 0 {
        return Err(MetricsError::NoReferencePunctuation);
    }
    Ok(100.0 * counts.errors as f64 / counts.reference_tokens as f64)
}

/// True/false positive and false negative counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PrfCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PrfCounts {
    fn add(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    /// `tp / (tp + fp)`, or 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, or 0 when there was nothing to find.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Suite {
    pub zero_wer_count: usize,
    pub total_count: usize,
    /// `None` when no pair has zero plain WER.
    pub punct: Option<PrfCounts>,
    pub capit: Option<PrfCounts>,
}

/// Punctuation marks grouped by slot: slot `k` holds the marks after the
/// `k`-th word, slot 0 those before the first word.
fn punctuation_slots(tokens: &[String]) -> Vec<Vec<&str>> {
    let mut slots = vec![Vec::new()];
    for tok in tokens {
        if is_punct_token(tok) {
            slots.last_mut().unwrap().push(tok.as_str());
        } else {
            slots.push(Vec::new());
        }
    }
    slots
}

fn punctuation_counts(reference: &Transcript, hypothesis: &Transcript) -> PrfCounts {
    let r = reference.tokenize(View::CasedPunct).tokens;
    let h = hypothesis.tokenize(View::CasedPunct).tokens;
    let r_slots = punctuation_slots(&r);
    let h_slots = punctuation_slots(&h);
    debug_assert_eq!(r_slots.len(), h_slots.len());
    let mut counts = PrfCounts::default();
    for (rs, hs) in r_slots.iter().zip(&h_slots) {
        let mut tp = 0;
        for mark in crate::textnorm::RETAINED_PUNCTUATION {
            let in_ref = rs.iter().filter(|m| **m == mark).count();
            let in_hyp = hs.iter().filter(|m| **m == mark).count();
            tp += in_ref.min(in_hyp);
        }
        counts.tp += tp;
        counts.fp += hs.len() - tp;
        counts.fn_ += rs.len() - tp;
    }
    counts
}

fn is_capitalized(word: &str) -> bool {
    word != word.to_lowercase()
}

fn capitalization_counts(reference: &Transcript, hypothesis: &Transcript) -> PrfCounts {
    let r = reference.tokenize(View::Cased).tokens;
    let h = hypothesis.tokenize(View::Cased).tokens;
    let mut counts = PrfCounts::default();
    for (rw, hw) in r.iter().zip(&h) {
        let exact = rw == hw;
        if is_capitalized(rw) {
            if exact {
                counts.tp += 1;
            } else {
                counts.fn_ += 1;
            }
        }
        if is_capitalized(hw) && !exact {
            counts.fp += 1;
        }
    }
    counts
}

/// Punctuation and capitalization precision/recall counts over the pairs
/// whose plain-view WER is exactly zero.
pub fn f1_suite(refs: &[Transcript], hyps: &[Transcript]) -> Result<F1Suite, MetricsError> {
    check_corpus(refs, hyps)?;
    let qualifying: Vec<(PrfCounts, PrfCounts)> = refs
        .par_iter()
        .zip(hyps.par_iter())
        .filter(|(r, h)| r.tokenize(View::Plain).tokens == h.tokenize(View::Plain).tokens)
        .map(|(r, h)| (punctuation_counts(r, h), capitalization_counts(r, h)))
        .collect();
    let zero_wer_count = qualifying.len();
    let (punct, capit) = if zero_wer_count == 0 {
        (None, None)
    } else {
        let (p, c) = qualifying.into_iter().fold(
            (PrfCounts::default(), PrfCounts::default()),
            |(pa, ca), (p, c)| (pa.add(p), ca.add(c)),
        );
        (Some(p), Some(c))
    };
    Ok(F1Suite {
        zero_wer_count,
        total_count: refs.len(),
        punct,
        capit,
    })
}

/// Every metric for one corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub wer: f64,
    pub wer_c: f64,
    pub wer_pc: f64,
    /// `None` when the references carry no punctuation at all.
    pub per: Option<f64>,
    pub zero_wer_count: usize,
    pub total_count: usize,
    pub punct: Option<PrfCounts>,
    pub capit: Option<PrfCounts>,
}

impl MetricsReport {
    pub fn zero_wer_fraction(&self) -> f64 {
        ratio(self.zero_wer_count, self.total_count)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let prf = |c: &Option<PrfCounts>| match c {
            Some(c) => json!({"p": c.precision(), "r": c.recall(), "f1": c.f1()}),
            None => serde_json::Value::Null,
        };
        json!({
            "wer": self.wer,
            "wer_c": self.wer_c,
            "wer_pc": self.wer_pc,
            "per": self.per,
            "zero_wer_fraction": self.zero_wer_fraction(),
            "punct": prf(&self.punct),
            "capit": prf(&self.capit),
        })
    }

    fn rows(&self) -> Vec<(&'static str, String)> {
        let pct = |x: f64| format!("{x:.2}");
        let frac = |c: &Option<PrfCounts>, f: fn(&PrfCounts) -> f64| {
            c.as_ref().map_or_else(|| "n/a".to_string(), |c| format!("{:.2}", 100.0 * f(c)))
        };
        vec![
            ("wer", pct(self.wer)),
            ("wer_c", pct(self.wer_c)),
            ("wer_pc", pct(self.wer_pc)),
            ("per", self.per.map_or_else(|| "n/a".to_string(), pct)),
            (
                "zero_wer",
                format!(
                    "{}/{} ({:.2})",
                    self.zero_wer_count,
                    self.total_count,
                    100.0 * self.zero_wer_fraction()
                ),
            ),
            ("punct_p", frac(&self.punct, PrfCounts::precision)),
            ("punct_r", frac(&self.punct, PrfCounts::recall)),
            ("punct_f1", frac(&self.punct, PrfCounts::f1)),
            ("capit_p", frac(&self.capit, PrfCounts::precision)),
            ("capit_r", frac(&self.capit, PrfCounts::recall)),
            ("capit_f1", frac(&self.capit, PrfCounts::f1)),
        ]
    }

    /// Human-readable two-column table; rates and F1 values as percentages.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.rows() {
            writeln!(out, "{k:<10} {v:>16}").unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let rows = self.rows();
        let header: Vec<&str> = rows.iter().map(|(k, _)| *k).collect();
        let values: Vec<String> = rows.into_iter().map(|(_, v)| v).collect();
        format!("{}\n{}\n", header.join(","), values.join(","))
    }
}

/// Computes every metric. PER is left empty rather than failing when the
/// references have no punctuation.
pub fn evaluate(refs: &[Transcript], hyps: &[Transcript]) -> Result<MetricsReport, MetricsError> {
    let per = match per(refs, hyps) {
        Ok(v) => Some(v),
        Err(MetricsError::NoReferencePunctuation) => None,
        Err(e) => return Err(e),
    };
    let f1 = f1_suite(refs, hyps)?;
    Ok(MetricsReport {
        wer: wer(refs, hyps, View::Plain)?,
        wer_c: wer(refs, hyps, View::Cased)?,
        wer_pc: wer(refs, hyps, View::CasedPunct)?,
        per,
        zero_wer_count: f1.zero_wer_count,
        total_count: f1.total_count,
        punct: f1.punct,
        capit: f1.capit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::preprocess;
    use proptest::prelude::*;

    const GOLD: &str = "Who is Humpty Dumpty? asked the Mice.";
    const NO_KD: &str = "Who is Uncy Dumpty? asked the Mice.";

    fn corpus(lines: &[&str]) -> Vec<Transcript> {
        lines.iter().map(|l| preprocess(l)).collect()
    }

    #[test]
    fn align_examples() {
        let a = align(&["a", "b"], &["a", "b"]);
        assert_eq!(a.cost(), 0);
        assert!(a.ops.iter().all(|op| op.kind == EditKind::Match));
        assert_eq!(a.ops.len(), 2);

        let a = align(&["a", "b", "c"], &[]);
        assert_eq!((a.cost(), a.deletions), (3, 3));

        let r = ["who", "is", "humpty", "dumpty", "asked", "the", "mice"];
        let h = ["who", "is", "uncy", "dumpty", "asked", "the", "mice"];
        let a = align(&r, &h);
        assert_eq!((a.cost(), a.substitutions), (1, 1));
        assert_eq!(a.ops[2].kind, EditKind::Sub);
    }

    #[test]
    fn backtrace_prefers_substitution_over_indels() {
        // "a b" vs "b a" can be two substitutions or a del + ins.
        let a = align(&["a", "b"], &["b", "a"]);
        assert_eq!(a.cost(), 2);
        assert_eq!(a.substitutions, 2);
        // When a deletion and an insertion tie, the deletion comes first in
        // the backtrace, i.e. last in forward order.
        let a = align(&["x"], &["y", "x"]);
        assert_eq!(a.cost(), 1);
        assert_eq!(a.insertions, 1);
    }

    #[test]
    fn single_substitution_word_error_rates() {
        let refs = corpus(&[GOLD]);
        let hyps = corpus(&[NO_KD]);
        assert!((wer(&refs, &hyps, View::Plain).unwrap() - 100.0 / 7.0).abs() < 1e-12);
        assert!((wer(&refs, &hyps, View::Cased).unwrap() - 100.0 / 7.0).abs() < 1e-12);
        assert!((wer(&refs, &hyps, View::CasedPunct).unwrap() - 100.0 / 9.0).abs() < 1e-12);
        assert_eq!(per(&refs, &hyps).unwrap(), 0.0);
        for view in View::ALL {
            assert_eq!(wer(&refs, &refs, view).unwrap(), 0.0);
        }
    }

    #[test]
    fn corpus_errors() {
        assert_eq!(wer(&[], &[], View::Plain), Err(MetricsError::EmptyCorpus));
        assert_eq!(
            wer(&corpus(&["a"]), &[], View::Plain),
            Err(MetricsError::LengthMismatch { refs: 1, hyps: 0 })
        );
        assert_eq!(
            wer(&corpus(&[""]), &corpus(&["a"]), View::Plain),
            Err(MetricsError::NoReferenceTokens(View::Plain))
        );
        assert_eq!(
            per(&corpus(&["a b"]), &corpus(&["a b ."])),
            Err(MetricsError::NoReferencePunctuation)
        );
    }

    #[test]
    fn empty_reference_counts_insertions() {
        let refs = corpus(&["a b", ""]);
        let hyps = corpus(&["a b", "x y z"]);
        let c = view_error_counts(&refs, &hyps, View::Plain).unwrap();
        assert_eq!(c, ErrorCounts { errors: 3, reference_tokens: 2 });
        assert_eq!(wer(&refs, &hyps, View::Plain).unwrap(), 150.0);
    }

    #[test]
    fn per_examples() {
        let refs = corpus(&["a. b, c?"]);
        let hyps = corpus(&["a. b c"]);
        assert!((per(&refs, &hyps).unwrap() - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_examples() {
        let same = corpus(&["Hello , world ."]);
        let s = f1_suite(&same, &same).unwrap();
        let (p, c) = (s.punct.unwrap(), s.capit.unwrap());
        assert_eq!((p.precision(), p.recall(), p.f1()), (1.0, 1.0, 1.0));
        assert_eq!((c.precision(), c.recall(), c.f1()), (1.0, 1.0, 1.0));

        let s = f1_suite(&corpus(&["Yes . No ."]), &corpus(&["Yes , No ."])).unwrap();
        let p = s.punct.unwrap();
        assert_eq!(p, PrfCounts { tp: 1, fp: 1, fn_: 1 });
        assert_eq!((p.precision(), p.recall(), p.f1()), (0.5, 0.5, 0.5));

        let s = f1_suite(&corpus(&[GOLD]), &corpus(&[NO_KD])).unwrap();
        assert_eq!(s.zero_wer_count, 0);
        assert!(s.punct.is_none() && s.capit.is_none());
    }

    #[test]
    fn capitalization_counts_positions() {
        // Mice -> mice is a miss, asked -> Asked is a false alarm,
        // MICE for Mice counts as both.
        let c = capitalization_counts(&preprocess("Who asked the Mice"), &preprocess("Who Asked the mice"));
        assert_eq!(c, PrfCounts { tp: 1, fp: 1, fn_: 1 });
        let c = capitalization_counts(&preprocess("the Mice"), &preprocess("the MICE"));
        assert_eq!(c, PrfCounts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn report_renders_all_keys() {
        let refs = corpus(&[GOLD, "Yes . No ."]);
        let hyps = corpus(&[NO_KD, "Yes , No ."]);
        let r = evaluate(&refs, &hyps).unwrap();
        let j = r.to_json();
        for key in ["wer", "wer_c", "wer_pc", "per", "zero_wer_fraction", "punct", "capit"] {
            assert!(j.get(key).is_some(), "{key}");
        }
        assert_eq!(j["punct"]["p"], 0.5);
        assert_eq!(r.zero_wer_fraction(), 0.5);
        assert!(r.to_table().contains("wer_pc"));
        assert_eq!(r.to_csv().lines().count(), 2);
    }

    fn small_seq() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..4, 0..7)
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(
            prop_oneof![
                Just("cat"), Just("dog"), Just("sun"), Just("Anna"), Just("."), Just(","), Just("?")
            ]
            .prop_map(str::to_string),
            1..10,
        )
    }

    proptest! {
        #[test]
        fn alignment_counts_are_consistent(a in small_seq(), b in small_seq()) {
            let al = align(&a, &b);
            let subs = al.ops.iter().filter(|o| o.kind == EditKind::Sub).count();
            let ins = al.ops.iter().filter(|o| o.kind == EditKind::Ins).count();
            let dels = al.ops.iter().filter(|o| o.kind == EditKind::Del).count();
            prop_assert_eq!((subs, ins, dels), (al.substitutions, al.insertions, al.deletions));
            prop_assert_eq!(al.cost(), edit_distance(&a, &b));
            prop_assert_eq!(al.ops.len() - ins, a.len());
            prop_assert_eq!(al.ops.len() - dels, b.len());
        }

        #[test]
        fn edit_distance_is_a_metric(a in small_seq(), b in small_seq(), c in small_seq()) {
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
            prop_assert_eq!(edit_distance(&a, &a), 0);
        }

        #[test]
        fn case_errors_only_add(ws in words(), flips in proptest::collection::vec(any::<bool>(), 10)) {
            let reference = ws.join(" ");
            let perturbed: Vec<String> = ws
                .iter()
                .zip(&flips)
                .map(|(w, f)| if *f { w.to_uppercase() } else { w.clone() })
                .collect();
            let refs = vec![preprocess(&reference)];
            let hyps = vec![preprocess(&perturbed.join(" "))];
            let plain = view_error_counts(&refs, &hyps, View::Plain).unwrap();
            let cased = view_error_counts(&refs, &hyps, View::Cased).unwrap();
            prop_assert!(plain.errors <= cased.errors);
            prop_assert_eq!(plain.errors, 0);
        }

        #[test]
        fn per_ignores_word_substitutions(ws in words(), swaps in proptest::collection::vec(any::<bool>(), 10)) {
            let refs = vec![preprocess(&ws.join(" "))];
            let perturbed: Vec<String> = ws
                .iter()
                .zip(&swaps)
                .map(|(w, s)| if *s && !is_punct_token(w) { "zebra".to_string() } else { w.clone() })
                .collect();
            let hyps = vec![preprocess(&perturbed.join(" "))];
            prop_assert_eq!(
                punctuation_error_counts(&refs, &hyps).unwrap().errors,
                0
            );
        }

        #[test]
        fn prf_matches_integer_counts(a in words(), b in words()) {
            let refs = vec![preprocess(&a.join(" "))];
            // Same words, punctuation taken from another sequence.
            let words_only: Vec<&String> = a.iter().filter(|w| !is_punct_token(w)).collect();
            let marks: Vec<&String> = b.iter().filter(|w| is_punct_token(w)).collect();
            let mut mixed = Vec::new();
            for (i, w) in words_only.iter().enumerate() {
                mixed.push(w.to_string());
                if let Some(m) = marks.get(i) {
                    mixed.push(m.to_string());
                }
            }
            let hyps = vec![preprocess(&mixed.join(" "))];
            let s = f1_suite(&refs, &hyps).unwrap();
            if let Some(p) = s.punct {
                if p.tp + p.fp > 0 {
                    prop_assert_eq!(p.precision(), p.tp as f64 / (p.tp + p.fp) as f64);
                }
                if p.tp + p.fn_ > 0 {
                    prop_assert_eq!(p.recall(), p.tp as f64 / (p.tp + p.fn_) as f64);
                }
                let ref_marks = refs[0].tokenize(View::CasedPunct).tokens.iter().filter(|t| is_punct_token(t)).count();
                let hyp_marks = hyps[0].tokenize(View::CasedPunct).tokens.iter().filter(|t| is_punct_token(t)).count();
                prop_assert_eq!(p.tp + p.fn_, ref_marks);
                prop_assert_eq!(p.tp + p.fp, hyp_marks);
            }
        }
    }
}
