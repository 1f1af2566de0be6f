//! Bioactivity table ingestion: activity labels, conflict removal, and
//! pairing of molecules active on two or more proteins into training
//! triples.

use crate::condition::{parse_fasta, ConditionError, ProteinSequence};
use crate::molgraph::{canonical_form, is_valid, AtomVocab, MolGraph};
use crate::smiles::{self, SmilesError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

pub const ACTIVE_BELOW_NM: f64 = 100.0;
pub const INACTIVE_ABOVE_NM: f64 = 10_000.0;
pub const DEFAULT_PAIR_CAP: usize = 10;
pub const DEFAULT_SIZE_CAP: usize = 38;

const COLUMNS: [&str; 4] = ["smiles", "protein_id", "measure", "value_nM"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("records file has no header line")]
    MissingHeader,
    #[error("records header lacks column {0:?}")]
    MissingColumn(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Sequence(#[from] ConditionError),
    #[error("line {line}: {msg}")]
    Triple { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Smiles { line: usize, source: SmilesError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    IC50,
    Kd,
    Ki,
    EC50,
}

impl FromStr for Measure {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ic50" => Ok(Measure::IC50),
            "kd" => Ok(Measure::Kd),
            "ki" => Ok(Measure::Ki),
            "ec50" => Ok(Measure::EC50),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub smiles: String,
    pub protein_id: String,
    pub measure: Measure,
    pub value_nm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Active,
    Inactive,
    Ambiguous,
}

/// A molecule paired with two proteins it is active against;
/// `protein_a < protein_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTriple {
    pub graph: MolGraph,
    pub protein_a: String,
    pub protein_b: String,
}

/// Parses a tab-separated table whose header names the columns `smiles`,
/// `protein_id`, `measure` and `value_nM` (any order, extra columns
/// ignored). Malformed rows are skipped; returns the records and the skip
/// count.
pub fn parse_records(text: &str) -> Result<(Vec<DatasetRecord>, usize), IngestError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or(IngestError::MissingHeader)?
        .split('\t')
        .map(str::trim)
        .collect();
    let mut idx = [0usize; 4];
    for (k, col) in COLUMNS.iter().enumerate() {
        idx[k] = header
            .iter()
            .position(|h| h == col)
            .ok_or(IngestError::MissingColumn(col))?;
    }
    let mut records = Vec::new();
    let mut skipped = 0;
    for line in lines {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let get = |k: usize| fields.get(idx[k]).copied().filter(|s| !s.is_empty());
        let parsed = (|| {
            let smiles = get(0)?.to_string();
            let protein_id = get(1)?.to_string();
            let measure = get(2)?.parse().ok()?;
            let value_nm: f64 = get(3)?.parse().ok()?;
            (value_nm.is_finite() && value_nm > 0.0).then_some(DatasetRecord {
                smiles,
                protein_id,
                measure,
                value_nm,
            })
        })();
        match parsed {
            Some(r) => records.push(r),
            None => skipped += 1,
        }
    }
    Ok((records, skipped))
}

fn read(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LoadReport {
    pub records: usize,
    pub skipped_rows: usize,
    pub sequences: usize,
}

pub fn load_dataset(
    records_path: &Path,
    fasta_path: &Path,
) -> Result<(Vec<DatasetRecord>, BTreeMap<String, ProteinSequence>, LoadReport), IngestError> {
    let (records, skipped) = parse_records(&read(records_path)?)?;
    let fasta = read(fasta_path)?;
    let sequences: BTreeMap<String, ProteinSequence> = parse_fasta(&fasta)?
        .into_iter()
        .map(|s| (s.id.clone(), s))
        .collect();
    let report = LoadReport {
        records: records.len(),
        skipped_rows: skipped,
        sequences: sequences.len(),
    };
    Ok((records, sequences, report))
}

/// Below 100 nM is active, above 10 000 nM inactive, anything between
/// ambiguous; the same thresholds apply to every measure type.
pub fn label_bioactivity(r: &DatasetRecord) -> Label {
    if r.value_nm < ACTIVE_BELOW_NM {
        Label::Active
    } else if r.value_nm > INACTIVE_ABOVE_NM {
        Label::Inactive
    } else {
        Label::Ambiguous
    }
}

/// Canonical molecule key for grouping; SMILES that do not parse keep their
/// raw text so they still group with identical strings.
pub fn molecule_key(smiles: &str, vocab: &AtomVocab) -> String {
    match smiles::parse(smiles, vocab) {
        Ok(g) => canonical_form(&g),
        Err(_) => format!("raw:{smiles}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub record: DatasetRecord,
    pub label: Label,
    pub key: String,
}

pub fn label_records(records: &[DatasetRecord], vocab: &AtomVocab) -> Vec<LabeledRecord> {
    let mut keys: HashMap<&str, String> = HashMap::new();
    records
        .iter()
        .map(|r| {
            let key = keys
                .entry(r.smiles.as_str())
                .or_insert_with(|| molecule_key(&r.smiles, vocab))
                .clone();
            LabeledRecord {
                record: r.clone(),
                label: label_bioactivity(r),
                key,
            }
        })
        .collect()
}

/// Drops ambiguous rows, removes every (molecule, protein) pair that carries
/// both an active and an inactive label, and keeps the first row of each
/// remaining (molecule, protein, label) group in input order.
pub fn resolve_conflicts(records: &[LabeledRecord]) -> Vec<LabeledRecord> {
    let mut labels: HashMap<(&str, &str), BTreeSet<Label>> = HashMap::new();
    for r in records.iter().filter(|r| r.label != Label::Ambiguous) {
        labels
            .entry((r.key.as_str(), r.record.protein_id.as_str()))
            .or_default()
            .insert(r.label);
    }
    let mut seen = BTreeSet::new();
    records
        .iter()
        .filter(|r| {
            r.label != Label::Ambiguous
                && labels[&(r.key.as_str(), r.record.protein_id.as_str())].len() == 1
                && seen.insert((r.key.clone(), r.record.protein_id.clone()))
        })
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PairReport {
    pub molecules: usize,
    pub unparsable: usize,
    pub invalid: usize,
    pub oversize: usize,
    pub single_target: usize,
    pub missing_sequence: usize,
    pub capped_pairs: usize,
    pub triples: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PairOptions {
    pub pair_cap: usize,
    pub size_cap: usize,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            pair_cap: DEFAULT_PAIR_CAP,
            size_cap: DEFAULT_SIZE_CAP,
        }
    }
}

/// One triple per unordered pair of proteins a molecule is active on, pairs
/// in lexicographic order and at most `pair_cap` per molecule. Proteins
/// without a sequence are ignored. Output is sorted by canonical form, then
/// protein ids.
pub fn pair_dual_targets(
    records: &[LabeledRecord],
    sequences: &BTreeMap<String, ProteinSequence>,
    vocab: &AtomVocab,
    opts: PairOptions,
) -> (Vec<TrainingTriple>, PairReport) {
    let mut report = PairReport::default();
    let mut by_molecule: BTreeMap<&str, (&str, BTreeSet<&str>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.label == Label::Active) {
        by_molecule
            .entry(r.key.as_str())
            .or_insert((r.record.smiles.as_str(), BTreeSet::new()))
            .1
            .insert(r.record.protein_id.as_str());
    }
    let mut out = Vec::new();
    for (key, (smiles_text, proteins)) in by_molecule {
        report.molecules += 1;
        let known: Vec<&str> = proteins
            .iter()
            .copied()
            .filter(|p| sequences.contains_key(*p))
            .collect();
        if known.len() < 2 {
            if proteins.len() >= 2 {
                report.missing_sequence += 1;
            } else {
                report.single_target += 1;
            }
            continue;
        }
        let Ok(graph) = smiles::parse(smiles_text, vocab) else {
            report.unparsable += 1;
            continue;
        };
        if !is_valid(&graph, vocab).0 {
            report.invalid += 1;
            continue;
        }
        if graph.n() > opts.size_cap {
            report.oversize += 1;
            continue;
        }
        debug_assert_eq!(key, canonical_form(&graph));
        let mut pairs = Vec::new();
        for (i, a) in known.iter().enumerate() {
            for b in &known[i + 1..] {
                pairs.push((*a, *b));
            }
        }
        if pairs.len() > opts.pair_cap {
            report.capped_pairs += pairs.len() - opts.pair_cap;
            pairs.truncate(opts.pair_cap);
        }
        for (a, b) in pairs {
            out.push((
                key.to_string(),
                TrainingTriple {
                    graph: graph.clone(),
                    protein_a: a.to_string(),
                    protein_b: b.to_string(),
                },
            ));
        }
    }
    out.sort_by(|x, y| {
        (&x.0, &x.1.protein_a, &x.1.protein_b).cmp(&(&y.0, &y.1.protein_a, &y.1.protein_b))
    });
    report.triples = out.len();
    (out.into_iter().map(|(_, t)| t).collect(), report)
}

/// Full pipeline from raw records to sorted triples.
pub fn build_triples(
    records: &[DatasetRecord],
    sequences: &BTreeMap<String, ProteinSequence>,
    vocab: &AtomVocab,
    opts: PairOptions,
) -> (Vec<TrainingTriple>, PairReport) {
    let labeled = label_records(records, vocab);
    let resolved = resolve_conflicts(&labeled);
    pair_dual_targets(&resolved, sequences, vocab, opts)
}

/// `canonical_smiles \t protein_a \t protein_b` per line.
pub fn write_triples(triples: &[TrainingTriple], vocab: &AtomVocab) -> Result<String, SmilesError> {
    let mut out = String::new();
    for t in triples {
        out.push_str(&smiles::write(&t.graph, vocab)?);
        out.push('\t');
        out.push_str(&t.protein_a);
        out.push('\t');
        out.push_str(&t.protein_b);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_triples(text: &str, vocab: &AtomVocab) -> Result<Vec<TrainingTriple>, IngestError> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(IngestError::Triple {
                line: k + 1,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let graph = smiles::parse(fields[0].trim(), vocab)
            .map_err(|source| IngestError::Smiles { line: k + 1, source })?;
        out.push(TrainingTriple {
            graph,
            protein_a: fields[1].trim().to_string(),
            protein_b: fields[2].trim().to_string(),
        });
    }
    Ok(out)
}
