//! Transcript preprocessing and tokenized views.
//!
//! Preprocessing keeps only periods, commas and question marks, separates
//! every retained mark from its neighbours by a single space and collapses
//! whitespace. Apostrophes between two alphanumeric characters stay part of
//! the word; any other punctuation character acts as a word boundary and is
//! removed. Runs of the same retained mark (`...`, `,,`) collapse to one.

use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The punctuation marks that survive preprocessing.
pub const RETAINED_PUNCTUATION: [&str; 3] = [".", ",", "?"];

static UNICODE_PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\p{P}$").unwrap());

#[derive(Debug, Error)]
pub enum TextError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid JSONL record: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// A raw transcript together with its normalized form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    raw: String,
    normalized: String,
}

impl Transcript {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let normalized = normalize(&raw);
        Self { raw, normalized }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn normalized(&self) -> &str {
        &self.normalized
    }

    pub fn tokenize(&self, view: View) -> TokenSequence {
        tokenize(self, view)
    }
}

/// Which formatting axes a token sequence keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum View {
    /// Lowercased, no punctuation tokens.
    Plain,
    /// Original casing, no punctuation tokens.
    Cased,
    /// Original casing with punctuation marks as standalone tokens.
    CasedPunct,
}

impl View {
    pub const ALL: [View; 3] = [View::Plain, View::Cased, View::CasedPunct];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub view: View,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// True for `.`, `,` and `?` tokens.
pub fn is_punct_token(token: &str) -> bool {
    RETAINED_PUNCTUATION.contains(&token)
}

fn is_retained_mark(c: char) -> bool {
    matches!(c, '.' | ',' | '?')
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}')
}

/// Unicode general category P, plus ASCII symbols such as `$`, `+`, `|`.
pub fn is_punctuation_char(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    let mut buf = [0u8; 4];
    UNICODE_PUNCT.is_match(c.encode_utf8(&mut buf))
}

fn normalize(raw: &str) -> String {
    let chars: Vec<char> = raw.chars().collect();
    let mut tokens: Vec<String> = Vec::new();
    let mut word = String::new();

    fn flush(word: &mut String, tokens: &mut Vec<String>) {
        if !word.is_empty() {
            tokens.push(std::mem::take(word));
        }
    }

    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if is_retained_mark(c) {
            flush(&mut word, &mut tokens);
            let mark = c.to_string();
            if tokens.last() != Some(&mark) {
                tokens.push(mark);
            }
        } else if is_apostrophe(c) {
            let inner = i > 0
                && i + 1 < chars.len()
                && chars[i - 1].is_alphanumeric()
                && chars[i + 1].is_alphanumeric();
            if inner {
                word.push(c);
            } else {
                flush(&mut word, &mut tokens);
            }
        } else if is_punctuation_char(c) {
            flush(&mut word, &mut tokens);
        } else {
            word.push(c);
        }
    }
    flush(&mut word, &mut tokens);
    tokens.join(" ")
}

/// Applies the three preprocessing rules to `raw`.
pub fn preprocess(raw: &str) -> Transcript {
    Transcript::new(raw)
}

/// Splits a preprocessed transcript into the requested view.
pub fn tokenize(t: &Transcript, view: View) -> TokenSequence {
    let all = t.normalized.split(' ').filter(|s| !s.is_empty());
    let tokens = match view {
        View::CasedPunct => all.map(str::to_owned).collect(),
        View::Cased => all.filter(|s| !is_punct_token(s)).map(str::to_owned).collect(),
        View::Plain => all
            .filter(|s| !is_punct_token(s))
            .map(str::to_lowercase)
            .collect(),
    };
    TokenSequence { tokens, view }
}

/// Joins tokens into display text, attaching punctuation to the preceding word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        if !out.is_empty() && !is_punct_token(tok) {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// One line of a transcript corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One utterance per line; ids are zero-based line numbers.
    Text,
    /// One `{"id": ..., "text": ...}` object per line.
    Jsonl,
}

pub fn parse_corpus(content: &str, format: CorpusFormat) -> Result<Vec<Utterance>, TextError> {
    match format {
        CorpusFormat::Text => Ok(content
            .lines()
            .enumerate()
            .map(|(i, line)| Utterance {
                id: i.to_string(),
                text: line.to_owned(),
            })
            .collect()),
        CorpusFormat::Jsonl => content
            .lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(i, line)| {
                serde_json::from_str(line).map_err(|source| TextError::Json { line: i + 1, source })
            })
            .collect(),
    }
}

pub fn read_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Utterance>, TextError> {
    let content = fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&content, format)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GOLD: &str = "Who is Humpty Dumpty? asked the Mice.";

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(
            preprocess(GOLD).normalized(),
            "Who is Humpty Dumpty ? asked the Mice ."
        );
        assert_eq!(preprocess("").normalized(), "");
        assert_eq!(preprocess("Hello,  world!").normalized(), "Hello , world");
    }

    #[test]
    fn apostrophes_hyphens_and_ellipses() {
        assert_eq!(preprocess("Don't stop.").normalized(), "Don't stop .");
        assert_eq!(preprocess("'quoted' words").normalized(), "quoted words");
        assert_eq!(preprocess("well-known; fact").normalized(), "well known fact");
        assert_eq!(preprocess("Wait... what?!").normalized(), "Wait . what ?");
        assert_eq!(preprocess("a , , b").normalized(), "a , b");
        assert_eq!(preprocess("“Hi,” she said.").normalized(), "Hi , she said .");
        assert_eq!(preprocess("\t  \n").normalized(), "");
    }

    #[test]
    fn tokenize_views() {
        let t = preprocess(GOLD);
        assert_eq!(
            t.tokenize(View::Plain).tokens,
            toks(&["who", "is", "humpty", "dumpty", "asked", "the", "mice"])
        );
        assert_eq!(
            t.tokenize(View::Cased).tokens,
            toks(&["Who", "is", "Humpty", "Dumpty", "asked", "the", "Mice"])
        );
        assert_eq!(
            t.tokenize(View::CasedPunct).tokens,
            toks(&["Who", "is", "Humpty", "Dumpty", "?", "asked", "the", "Mice", "."])
        );
        for view in View::ALL {
            assert!(preprocess("").tokenize(view).is_empty());
        }
    }

    #[test]
    fn detokenize_attaches_marks() {
        let t = preprocess(GOLD);
        assert_eq!(detokenize(&t.tokenize(View::CasedPunct).tokens), GOLD);
        assert_eq!(detokenize::<&str>(&[]), "");
    }

    #[test]
    fn jsonl_and_text_corpora() {
        let text = parse_corpus("a b\n\nc .\n", CorpusFormat::Text).unwrap();
        assert_eq!(text.len(), 3);
        assert_eq!(text[1].text, "");
        let jsonl = parse_corpus(
            "{\"id\":\"u1\",\"text\":\"Hi.\"}\n{\"id\":\"u2\",\"text\":\"Yes?\"}\n",
            CorpusFormat::Jsonl,
        )
        .unwrap();
        assert_eq!(jsonl[1].id, "u2");
        let err = parse_corpus("{\"id\":1}", CorpusFormat::Jsonl).unwrap_err();
        assert!(matches!(err, TextError::Json { line: 1, .. }));
    }

    fn transcript_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                "[A-Za-z]{1,6}",
                Just(" ".to_string()),
                Just("  ".to_string()),
                Just(".".to_string()),
                Just(",".to_string()),
                Just("?".to_string()),
                Just("!".to_string()),
                Just("'".to_string()),
                Just("-".to_string()),
                Just("\u{2014}".to_string()),
                Just("\t".to_string()),
            ],
            0..24,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(raw in transcript_strategy()) {
            let once = preprocess(&raw);
            let twice = preprocess(once.normalized());
            prop_assert_eq!(once.normalized(), twice.normalized());
        }

        #[test]
        fn normalized_invariants_hold(raw in transcript_strategy()) {
            let t = preprocess(&raw);
            let n = t.normalized();
            prop_assert!(!n.contains("  "));
            prop_assert_eq!(n.trim(), n);
            for c in n.chars() {
                if is_punctuation_char(c) {
                    prop_assert!(is_retained_mark(c) || is_apostrophe(c), "stray {:?}", c);
                }
            }
            for tok in n.split(' ').filter(|s| !s.is_empty()) {
                if tok.chars().any(is_retained_mark) {
                    prop_assert!(is_punct_token(tok), "mark not isolated in {:?}", tok);
                }
            }
        }

        #[test]
        fn views_are_consistent(raw in transcript_strategy()) {
            let t = preprocess(&raw);
            let plain = t.tokenize(View::Plain).tokens;
            let cased = t.tokenize(View::Cased).tokens;
            let punct = t.tokenize(View::CasedPunct).tokens;
            prop_assert_eq!(plain.len(), cased.len());
            prop_assert!(cased.len() <= punct.len());
            let lowered: Vec<String> = cased.iter().map(|w| w.to_lowercase()).collect();
            prop_assert_eq!(&lowered, &plain);
            let stripped: Vec<String> =
                punct.iter().filter(|w| !is_punct_token(w)).cloned().collect();
            prop_assert_eq!(stripped, cased);
        }
    }
}
