//! Little-endian file formats.
//!
//! Codebook indexes (`MVQ1`):
//! `magic[4] | N: u8 | utterances: u32 | { frames: u32 | frames * N bytes }*`
//!
//! Codebooks (`MVQC`):
//! `magic[4] | N: u8 | D: u32 | N * 256 * D f64`
//!
//! Embedding or feature matrices (`F64M`):
//! `magic[4] | D: u32 | utterances: u32 | { frames: u32 | frames * D f64 }*`

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{CodebookIndexes, CodebookSet, MvqError, CODEBOOK_SIZE};

const CI_MAGIC: &[u8; 4] = b"MVQ1";
const CODEBOOK_MAGIC: &[u8; 4] = b"MVQC";
const MATRIX_MAGIC: &[u8; 4] = b"F64M";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0:?}")]
    UnsupportedVersion(char),
    #[error("truncated payload: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated { offset: usize, needed: usize, len: usize },
    #[error("{0} trailing bytes after the last record declared in the header")]
    TrailingBytes(usize),
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("non-finite value at offset {0}")]
    NonFinite(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    /// Stable numeric code per error kind, used as a process exit status.
    pub fn code(&self) -> i32 {
        match self {
            FormatError::BadMagic { .. } => 10,
            FormatError::UnsupportedVersion(_) => 11,
            FormatError::Truncated { .. } => 12,
            FormatError::TrailingBytes(_) => 13,
            FormatError::HeaderMismatch(_) => 14,
            FormatError::NonFinite(_) => 15,
            FormatError::Io { .. } => 16,
        }
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                len: self.buf.len(),
            }),
        }
    }

    pub(crate) fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, count: usize) -> Result<Vec<f64>, FormatError> {
        let offset = self.pos;
        let bytes = self.take(count.checked_mul(8).ok_or(FormatError::Truncated {
            offset,
            needed: usize::MAX,
            len: self.buf.len(),
        })?)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(FormatError::NonFinite(offset + 8 * i));
        }
        Ok(values)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let found = self.take(4).map_err(|_| FormatError::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(self.buf).into_owned(),
        })?;
        if found == expected {
            return Ok(());
        }
        // same family, different version digit
        if found[..3] == expected[..3] && expected[3].is_ascii_digit() && found[3].is_ascii_digit() {
            return Err(FormatError::UnsupportedVersion(found[3] as char));
        }
        Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        })
    }

    pub(crate) fn finish(self) -> Result<(), FormatError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn to_u32(value: usize, what: &str) -> Result<u32, FormatError> {
    u32::try_from(value).map_err(|_| FormatError::HeaderMismatch(format!("{what} {value} exceeds u32")))
}

/// Codebook indexes for a corpus: one [`CodebookIndexes`] per utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiDataset {
    pub n_codebooks: usize,
    pub utterances: Vec<CodebookIndexes>,
}

impl CiDataset {
    pub fn new(n_codebooks: usize) -> Self {
        Self {
            n_codebooks,
            utterances: Vec::new(),
        }
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(CodebookIndexes::frames).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let n = u8::try_from(self.n_codebooks)
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| FormatError::HeaderMismatch(format!("N = {} does not fit 1..=255", self.n_codebooks)))?;
        let mut out = Vec::with_capacity(9 + 4 * self.utterances.len() + self.total_frames() * self.n_codebooks);
        out.extend_from_slice(CI_MAGIC);
        out.push(n);
        out.extend_from_slice(&to_u32(self.utterances.len(), "utterance count")?.to_le_bytes());
        for (i, utt) in self.utterances.iter().enumerate() {
            if utt.n_codebooks() != self.n_codebooks {
                return Err(FormatError::HeaderMismatch(format!(
                    "utterance {i} has {} codebooks, header says {}",
                    utt.n_codebooks(),
                    self.n_codebooks
                )));
            }
            out.extend_from_slice(&to_u32(utt.frames(), "frame count")?.to_le_bytes());
            out.extend_from_slice(utt.as_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(CI_MAGIC)?;
        let n = r.u8()? as usize;
        if n == 0 {
            return Err(FormatError::HeaderMismatch("zero codebooks".into()));
        }
        let count = r.u32()? as usize;
        let mut utterances = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            let frames = r.u32()? as usize;
            let offset = r.pos;
            let data = r.take(frames.checked_mul(n).ok_or(FormatError::Truncated {
                offset,
                needed: usize::MAX,
                len: bytes.len(),
            })?)?;
            utterances.push(CodebookIndexes {
                n_codebooks: n,
                indexes: data.to_vec(),
            });
        }
        r.finish()?;
        Ok(Self {
            n_codebooks: n,
            utterances,
        })
    }
}

pub fn write_ci(path: &Path, dataset: &CiDataset) -> Result<(), FormatError> {
    write_file(path, &dataset.to_bytes()?)
}

pub fn read_ci(path: &Path) -> Result<CiDataset, FormatError> {
    CiDataset::from_bytes(&read_file(path)?)
}

impl CodebookSet {
    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let mut out = Vec::with_capacity(9 + self.entries.len() * 8);
        out.extend_from_slice(CODEBOOK_MAGIC);
        out.push(self.n_codebooks as u8);
        out.extend_from_slice(&to_u32(self.dim, "dimension")?.to_le_bytes());
        for x in &self.entries {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(CODEBOOK_MAGIC)?;
        let n = r.u8()? as usize;
        let dim = r.u32()? as usize;
        if n == 0 || dim == 0 {
            return Err(FormatError::HeaderMismatch(format!("N = {n}, D = {dim}")));
        }
        let entries = r.f64s(n * CODEBOOK_SIZE * dim)?;
        r.finish()?;
        CodebookSet::new(n, dim, entries).map_err(|e| match e {
            MvqError::Format(f) => f,
            other => FormatError::HeaderMismatch(other.to_string()),
        })
    }
}

pub fn write_codebooks(path: &Path, codebooks: &CodebookSet) -> Result<(), FormatError> {
    write_file(path, &codebooks.to_bytes()?)
}

pub fn read_codebooks(path: &Path) -> Result<CodebookSet, FormatError> {
    CodebookSet::from_bytes(&read_file(path)?)
}

/// Per-utterance `frames x dim` matrices of f64, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub utterances: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    pub fn frames(&self, i: usize) -> usize {
        self.utterances[i].len() / self.dim
    }

    /// All frames of all utterances, concatenated.
    pub fn flatten(&self) -> Vec<f64> {
        self.utterances.concat()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let mut out = Vec::new();
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&to_u32(self.dim, "dimension")?.to_le_bytes());
        out.extend_from_slice(&to_u32(self.utterances.len(), "utterance count")?.to_le_bytes());
        for (i, m) in self.utterances.iter().enumerate() {
            if self.dim == 0 || m.len() % self.dim != 0 {
                return Err(FormatError::HeaderMismatch(format!(
                    "utterance {i} has {} values, not a multiple of {}",
                    m.len(),
                    self.dim
                )));
            }
            out.extend_from_slice(&to_u32(m.len() / self.dim, "frame count")?.to_le_bytes());
            for x in m {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(MATRIX_MAGIC)?;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(FormatError::HeaderMismatch("zero dimension".into()));
        }
        let count = r.u32()? as usize;
        let mut utterances = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            let frames = r.u32()? as usize;
            utterances.push(r.f64s(frames.saturating_mul(dim))?);
        }
        r.finish()?;
        Ok(Self { dim, utterances })
    }
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<(), FormatError> {
    write_file(path, &set.to_bytes()?)
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet, FormatError> {
    EmbeddingSet::from_bytes(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(n: usize, frames: &[usize], seed: u8) -> CiDataset {
        CiDataset {
            n_codebooks: n,
            utterances: frames
                .iter()
                .enumerate()
                .map(|(u, &t)| CodebookIndexes {
                    n_codebooks: n,
                    indexes: (0..t * n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed ^ u as u8)).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn empty_dataset_is_valid() {
        let ds = CiDataset::new(16);
        let bytes = ds.to_bytes().unwrap();
        assert_eq!(bytes.len(), 9);
        assert_eq!(CiDataset::from_bytes(&bytes).unwrap(), ds);
    }

    #[test]
    fn ci_layout_is_exact() {
        let ds = dataset(2, &[1], 0);
        let bytes = ds.to_bytes().unwrap();
        let mut expected = b"MVQ1".to_vec();
        expected.push(2);
        expected.extend([1, 0, 0, 0]);
        expected.extend([1, 0, 0, 0]);
        expected.extend(ds.utterances[0].as_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn ci_error_kinds() {
        let bytes = dataset(4, &[3, 5], 1).to_bytes().unwrap();
        for cut in [bytes.len() - 1, 9 + 4 + 6, 11, 5] {
            let err = CiDataset::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, FormatError::Truncated { .. }), "cut {cut}: {err}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(CiDataset::from_bytes(&extra), Err(FormatError::TrailingBytes(1))));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(CiDataset::from_bytes(&bad).unwrap_err().code(), 10);
        let mut v2 = bytes.clone();
        v2[3] = b'2';
        assert!(matches!(CiDataset::from_bytes(&v2), Err(FormatError::UnsupportedVersion('2'))));
        assert!(matches!(CiDataset::from_bytes(b"MV"), Err(FormatError::BadMagic { .. })));

        let mut mixed = dataset(4, &[2], 0);
        mixed.utterances.push(dataset(3, &[2], 0).utterances.remove(0));
        assert!(matches!(mixed.to_bytes(), Err(FormatError::HeaderMismatch(_))));
        let mut zero_n = bytes.clone();
        zero_n[4] = 0;
        assert!(matches!(CiDataset::from_bytes(&zero_n), Err(FormatError::HeaderMismatch(_))));
    }

    #[test]
    fn codebook_round_trip_and_errors() {
        let entries: Vec<f64> = (0..2 * 256 * 3).map(|i| (i as f64).sin() * 1e-3).collect();
        let cb = CodebookSet::new(2, 3, entries).unwrap();
        let bytes = cb.to_bytes().unwrap();
        assert_eq!(bytes.len(), 4 + 1 + 4 + 2 * 256 * 3 * 8);
        let back = CodebookSet::from_bytes(&bytes).unwrap();
        assert!(back.entries().iter().zip(cb.entries()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(matches!(
            CodebookSet::from_bytes(&bytes[..bytes.len() - 3]),
            Err(FormatError::Truncated { .. })
        ));
        let mut nan = bytes.clone();
        nan[9..17].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(CodebookSet::from_bytes(&nan), Err(FormatError::NonFinite(9))));
        assert!(matches!(CodebookSet::from_bytes(b"MVQ1\x01"), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn embedding_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.f64");
        let set = EmbeddingSet {
            dim: 2,
            utterances: vec![vec![1.0, -2.5, 3.0, 0.0], vec![]],
        };
        write_embeddings(&path, &set).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), set);
        assert_eq!(fs::metadata(&path).unwrap().len(), 12 + 4 + 32 + 4);
        assert!(matches!(
            read_embeddings(&dir.path().join("missing")),
            Err(FormatError::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn ci_round_trip_is_bit_exact(n in 1usize..20, frames in proptest::collection::vec(0usize..12, 0..6), seed in any::<u8>()) {
            let ds = dataset(n, &frames, seed);
            let bytes = ds.to_bytes().unwrap();
            let total: usize = frames.iter().sum();
            prop_assert_eq!(bytes.len(), 9 + 4 * frames.len() + total * n);
            let back = CiDataset::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
            prop_assert_eq!(back, ds);
        }
    }
}
