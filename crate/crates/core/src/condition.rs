//! Protein conditioning: sequences, embeddings, and the fused context fed
//! to the denoiser for a pair of targets.
//!
//! Embeddings normally come from an external protein language model through
//! a JSON-lines file. [`kmer_encode`] is a deterministic stand-in that
//! hashes overlapping k-mers into signed buckets.

use crate::molgraph::fnv1a;
use crate::tensor::Mat;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// The 20 standard residues plus the ambiguity codes B, Z and X.
pub const ALPHABET: &str = "ACDEFGHIKLMNPQRSTVWYBZX";

pub const DEFAULT_KMER_DIM: usize = 32;
pub const DEFAULT_KMER_K: usize = 3;
pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error("protein {0:?} has an empty sequence")]
    EmptySequence(String),
    #[error("protein {id:?}: residue {ch:?} at position {pos} is not an amino-acid code")]
    Residue { id: String, ch: char, pos: usize },
    #[error("k-mer encoder needs d >= 8 and 1 <= k <= 5 (got d={d}, k={k})")]
    EncoderShape { d: usize, k: usize },
    #[error("line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: dimension {got} differs from {expected}")]
    Dimension {
        line: usize,
        got: usize,
        expected: usize,
    },
    #[error("embedding widths differ: {0} vs {1}")]
    Mismatch(usize, usize),
    #[error("unknown strategy {0:?} (expected ca, cat, vn or null)")]
    Strategy(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProteinSequence {
    pub id: String,
    pub residues: String,
}

impl ProteinSequence {
    /// Upper-cases `residues` and checks it against [`ALPHABET`].
    pub fn new(id: impl Into<String>, residues: &str) -> Result<Self, ConditionError> {
        let id = id.into();
        let residues = residues.to_ascii_uppercase();
        if residues.is_empty() {
            return Err(ConditionError::EmptySequence(id));
        }
        if let Some((pos, ch)) = residues.chars().enumerate().find(|&(_, c)| !ALPHABET.contains(c)) {
            return Err(ConditionError::Residue { id, ch, pos });
        }
        Ok(ProteinSequence { id, residues })
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinEmbedding {
    pub id: String,
    pub cls: Vec<f64>,
    /// One row per residue.
    pub tokens: Mat,
}

impl ProteinEmbedding {
    pub fn dim(&self) -> usize {
        self.cls.len()
    }
}

/// Token `i` is the L2-normalized signed count vector of every length-`k`
/// window that covers residue `i` (windows clipped to the sequence). Each
/// window hashes to bucket `h % d` with sign from the top bit of `h`. `cls`
/// is the mean token. Only integer arithmetic happens before normalization.
pub fn kmer_encode(
    p: &ProteinSequence,
    d: usize,
    k: usize,
) -> Result<ProteinEmbedding, ConditionError> {
    if d < 8 || !(1..=5).contains(&k) {
        return Err(ConditionError::EncoderShape { d, k });
    }
    if p.is_empty() {
        return Err(ConditionError::EmptySequence(p.id.clone()));
    }
    let codes: Vec<u64> = p
        .residues
        .bytes()
        .map(|b| ALPHABET.bytes().position(|a| a == b).expect("validated residue") as u64)
        .collect();
    let len = codes.len();
    let w = k.min(len);
    // window s covers residues s..s+w
    let windows: Vec<(usize, i64)> = (0..=len - w)
        .map(|s| {
            let mut words = vec![w as u64];
            words.extend_from_slice(&codes[s..s + w]);
            let h = fnv1a(&words);
            let sign = if h >> 63 == 1 { -1 } else { 1 };
            ((h % d as u64) as usize, sign)
        })
        .collect();
    let mut tokens = Mat::zeros(len, d);
    for i in 0..len {
        let first = (i + 1).saturating_sub(w);
        let last = i.min(len - w);
        let mut counts = vec![0i64; d];
        for &(bucket, sign) in &windows[first..=last] {
            counts[bucket] += sign;
        }
        let norm = (counts.iter().map(|&c| c * c).sum::<i64>() as f64).sqrt();
        if norm > 0.0 {
            for (o, &c) in tokens.row_mut(i).iter_mut().zip(&counts) {
                *o = c as f64 / norm;
            }
        }
    }
    let mut cls = vec![0.0; d];
    for i in 0..len {
        for (c, v) in cls.iter_mut().zip(tokens.row(i)) {
            *c += v;
        }
    }
    for c in &mut cls {
        *c /= len as f64;
    }
    Ok(ProteinEmbedding {
        id: p.id.clone(),
        cls,
        tokens,
    })
}

#[derive(Deserialize)]
struct EmbeddingRecord {
    id: String,
    cls: Vec<f64>,
    tokens: Vec<Vec<f64>>,
}

/// Parses newline-delimited `{"id", "cls", "tokens"}` records. Blank lines
/// are skipped. All records must share one width.
pub fn parse_embeddings(text: &str) -> Result<BTreeMap<String, ProteinEmbedding>, ConditionError> {
    let mut out = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = serde_json::from_str(raw).map_err(|e| ConditionError::Record {
            line,
            msg: e.to_string(),
        })?;
        let expected = *dim.get_or_insert(rec.cls.len());
        if rec.cls.len() != expected {
            return Err(ConditionError::Dimension {
                line,
                got: rec.cls.len(),
                expected,
            });
        }
        if expected == 0 || rec.tokens.is_empty() {
            return Err(ConditionError::Record {
                line,
                msg: "empty cls or tokens".into(),
            });
        }
        if let Some(t) = rec.tokens.iter().find(|t| t.len() != expected) {
            return Err(ConditionError::Dimension {
                line,
                got: t.len(),
                expected,
            });
        }
        let tokens = Mat::from_rows(&rec.tokens);
        if !tokens.all_finite() || rec.cls.iter().any(|v| !v.is_finite()) {
            return Err(ConditionError::Record {
                line,
                msg: "non-finite value".into(),
            });
        }
        if out.contains_key(&rec.id) {
            return Err(ConditionError::DuplicateId { line, id: rec.id });
        }
        out.insert(
            rec.id.clone(),
            ProteinEmbedding {
                id: rec.id,
                cls: rec.cls,
                tokens,
            },
        );
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<BTreeMap<String, ProteinEmbedding>, ConditionError> {
    parse_embeddings(&std::fs::read_to_string(path)?)
}

/// Serializes one embedding as a single JSON line (no trailing newline).
pub fn embedding_json_line(e: &ProteinEmbedding) -> String {
    let tokens: Vec<&[f64]> = (0..e.tokens.rows).map(|r| e.tokens.row(r)).collect();
    serde_json::json!({"id": e.id, "cls": e.cls, "tokens": tokens}).to_string()
}

/// Reads FASTA: `>` header lines start a record whose id is the first
/// whitespace-separated word; sequence lines are concatenated.
pub fn parse_fasta(text: &str) -> Result<Vec<ProteinSequence>, ConditionError> {
    let mut out = Vec::new();
    let mut current: Option<(String, String)> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            if let Some((id, seq)) = current.take() {
                out.push(ProteinSequence::new(id, &seq)?);
            }
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            if id.is_empty() {
                return Err(ConditionError::Record {
                    line: k + 1,
                    msg: "FASTA header without id".into(),
                });
            }
            current = Some((id, String::new()));
        } else {
            match current.as_mut() {
                Some((_, seq)) => seq.push_str(line),
                None => {
                    return Err(ConditionError::Record {
                        line: k + 1,
                        msg: "sequence before first header".into(),
                    })
                }
            }
        }
    }
    if let Some((id, seq)) = current {
        out.push(ProteinSequence::new(id, &seq)?);
    }
    Ok(out)
}

pub fn read_fasta(path: &Path) -> Result<Vec<ProteinSequence>, ConditionError> {
    parse_fasta(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ca,
    Cat,
    Vn,
    Null,
}

impl FromStr for Strategy {
    type Err = ConditionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ca" => Ok(Strategy::Ca),
            "cat" => Ok(Strategy::Cat),
            "vn" => Ok(Strategy::Vn),
            "null" => Ok(Strategy::Null),
            _ => Err(ConditionError::Strategy(s.to_string())),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Ca => "ca",
            Strategy::Cat => "cat",
            Strategy::Vn => "vn",
            Strategy::Null => "null",
        })
    }
}

/// Fused conditioning input for one protein pair.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionContext {
    /// Residue rows of both proteins. Row `separator` is a zero placeholder
    /// that the denoiser replaces with its learned separator vector.
    CrossAttention { tokens: Mat, separator: usize },
    /// `a.cls ++ b.cls`
    Concat { pooled: Vec<f64> },
    /// `a.cls ++ b.cls`
    VirtualNode { pooled: Vec<f64> },
    /// Unconditional; the denoiser substitutes its learned null vector.
    Null,
}

impl ConditionContext {
    pub fn strategy(&self) -> Strategy {
        match self {
            ConditionContext::CrossAttention { .. } => Strategy::Ca,
            ConditionContext::Concat { .. } => Strategy::Cat,
            ConditionContext::VirtualNode { .. } => Strategy::Vn,
            ConditionContext::Null => Strategy::Null,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, ConditionContext::Null)
    }

    /// Width of a single protein embedding, when known.
    pub fn protein_dim(&self) -> Option<usize> {
        match self {
            ConditionContext::CrossAttention { tokens, .. } => Some(tokens.cols),
            ConditionContext::Concat { pooled } | ConditionContext::VirtualNode { pooled } => {
                Some(pooled.len() / 2)
            }
            ConditionContext::Null => None,
        }
    }
}

pub fn pair_context(
    a: &ProteinEmbedding,
    b: &ProteinEmbedding,
    strategy: Strategy,
) -> Result<ConditionContext, ConditionError> {
    if strategy == Strategy::Null {
        return Ok(ConditionContext::Null);
    }
    if a.dim() != b.dim() || a.tokens.cols != a.dim() || b.tokens.cols != b.dim() {
        return Err(ConditionError::Mismatch(a.dim(), b.dim()));
    }
    let pooled = || [a.cls.as_slice(), b.cls.as_slice()].concat();
    Ok(match strategy {
        Strategy::Ca => {
            let d = a.dim();
            let mut data = Vec::with_capacity((a.tokens.rows + 1 + b.tokens.rows) * d);
            data.extend_from_slice(&a.tokens.data);
            data.extend(std::iter::repeat(0.0).take(d));
            data.extend_from_slice(&b.tokens.data);
            ConditionContext::CrossAttention {
                tokens: Mat::from_vec(a.tokens.rows + 1 + b.tokens.rows, d, data),
                separator: a.tokens.rows,
            }
        }
        Strategy::Cat => ConditionContext::Concat { pooled: pooled() },
        Strategy::Vn => ConditionContext::VirtualNode { pooled: pooled() },
        Strategy::Null => unreachable!(),
    })
}
