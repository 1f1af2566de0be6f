//! Quality metrics over sets of generated molecules.
//!
//! Uniqueness, novelty and diversity look only at valid molecules.
//! Molecules are compared by canonical form, so every metric is invariant
//! to atom ordering.

use crate::molgraph::{
    canonical_form, fingerprint, is_valid, tanimoto, AtomVocab, Fingerprint, FingerprintError,
    MolGraph, DEFAULT_NBITS, DEFAULT_RADIUS,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("diversity needs at least 2 valid molecules, got {0}")]
    TooFewValid(usize),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
}

fn valid<'a>(gs: &'a [MolGraph], vocab: &AtomVocab) -> Vec<&'a MolGraph> {
    gs.iter().filter(|g| is_valid(g, vocab).0).collect()
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Fraction of graphs passing the valence check; 0 for an empty list.
pub fn validity_rate(gs: &[MolGraph], vocab: &AtomVocab) -> f64 {
    if gs.is_empty() {
        log::warn!("validity of an empty molecule list is reported as 0");
    }
    ratio(valid(gs, vocab).len(), gs.len())
}

/// Distinct canonical forms among valid graphs over the valid count.
pub fn uniqueness(gs: &[MolGraph], vocab: &AtomVocab) -> f64 {
    let v = valid(gs, vocab);
    if v.is_empty() {
        log::warn!("uniqueness with no valid molecules is reported as 0");
    }
    let keys: BTreeSet<String> = v.iter().map(|g| canonical_form(g)).collect();
    ratio(keys.len(), v.len())
}

/// Fraction of valid graphs whose canonical form is not in `train_keys`.
pub fn novelty(gs: &[MolGraph], train_keys: &BTreeSet<String>, vocab: &AtomVocab) -> f64 {
    let v = valid(gs, vocab);
    if v.is_empty() {
        log::warn!("novelty with no valid molecules is reported as 0");
    }
    let novel = v
        .iter()
        .filter(|g| !train_keys.contains(&canonical_form(g)))
        .count();
    ratio(novel, v.len())
}

/// Mean Tanimoto dissimilarity over unordered pairs of valid graphs, using
/// the default fingerprint.
pub fn diversity(gs: &[MolGraph], vocab: &AtomVocab) -> Result<f64, MetricsError> {
    let fps = valid(gs, vocab)
        .into_iter()
        .map(|g| fingerprint(g, DEFAULT_RADIUS, DEFAULT_NBITS))
        .collect::<Result<Vec<_>, _>>()?;
    diversity_of_fingerprints(&fps)
}

pub fn diversity_of_fingerprints(fps: &[Fingerprint]) -> Result<f64, MetricsError> {
    let n = fps.len();
    if n < 2 {
        return Err(MetricsError::TooFewValid(n));
    }
    let rows: Vec<Result<f64, FingerprintError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in (i + 1)..n {
                s += 1.0 - tanimoto(&fps[i], &fps[j])?;
            }
            Ok(s)
        })
        .collect();
    let mut total = 0.0;
    for r in rows {
        total += r?;
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeFlags {
    pub valid: bool,
    /// First valid occurrence of its canonical form.
    pub unique: bool,
    pub novel: bool,
    pub canonical: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total: usize,
    pub valid: usize,
    pub unique: usize,
    pub novel: usize,
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    /// Absent when fewer than two molecules are valid.
    pub diversity: Option<f64>,
    pub warnings: Vec<String>,
    pub molecules: Vec<MoleculeFlags>,
}

/// All metrics at once. `None` entries stand for output that could not be
/// read back as a graph and count as invalid.
pub fn report_entries(
    entries: &[Option<MolGraph>],
    train_keys: &BTreeSet<String>,
    vocab: &AtomVocab,
) -> Result<MetricsReport, MetricsError> {
    let mut seen = BTreeSet::new();
    let mut molecules = Vec::with_capacity(entries.len());
    let mut fps = Vec::new();
    for g in entries {
        let flags = match g {
            Some(g) if is_valid(g, vocab).0 => {
                let key = canonical_form(g);
                fps.push(fingerprint(g, DEFAULT_RADIUS, DEFAULT_NBITS)?);
                MoleculeFlags {
                    valid: true,
                    unique: seen.insert(key.clone()),
                    novel: !train_keys.contains(&key),
                    canonical: Some(key),
                }
            }
            _ => MoleculeFlags {
                valid: false,
                unique: false,
                novel: false,
                canonical: None,
            },
        };
        molecules.push(flags);
    }
    let total = entries.len();
    let valid = fps.len();
    let unique = molecules.iter().filter(|m| m.unique).count();
    let novel = molecules.iter().filter(|m| m.novel).count();
    let mut warnings = Vec::new();
    if total == 0 {
        warnings.push("empty molecule list".to_string());
    }
    if valid == 0 {
        warnings.push("no valid molecules".to_string());
    }
    let diversity = if valid >= 2 {
        Some(diversity_of_fingerprints(&fps)?)
    } else {
        warnings.push("diversity needs at least 2 valid molecules".to_string());
        None
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(MetricsReport {
        total,
        valid,
        unique,
        novel,
        validity: ratio(valid, total),
        uniqueness: ratio(unique, valid),
        novelty: ratio(novel, valid),
        diversity,
        warnings,
        molecules,
    })
}

pub fn report(
    gs: &[MolGraph],
    train_keys: &BTreeSet<String>,
    vocab: &AtomVocab,
) -> Result<MetricsReport, MetricsError> {
    let entries: Vec<Option<MolGraph>> = gs.iter().cloned().map(Some).collect();
    report_entries(&entries, train_keys, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse;

    fn vocab() -> AtomVocab {
        AtomVocab::default()
    }

    fn mol(s: &str) -> MolGraph {
        parse(s, &vocab()).unwrap()
    }

    /// Two fluorines joined by a double bond break valence.
    fn invalid() -> MolGraph {
        let f = vocab().index_of("F").unwrap();
        MolGraph::new(vocab().len(), 4, vec![f, f], &[(0, 1, 2)]).unwrap()
    }

    #[test]
    fn validity_counts() {
        let v = vocab();
        let four = [mol("CCO"), mol("c1ccccc1"), mol("CC(=O)O"), mol("N")];
        assert_eq!(validity_rate(&four, &v), 1.0);
        let mut one_bad = four.to_vec();
        one_bad[3] = invalid();
        assert_eq!(validity_rate(&one_bad, &v), 0.75);
        assert_eq!(validity_rate(&[], &v), 0.0);
        let r = report(&[], &BTreeSet::new(), &v).unwrap();
        assert!(r.warnings.iter().any(|w| w.contains("empty")));
    }

    #[test]
    fn uniqueness_counts() {
        let v = vocab();
        assert_eq!(uniqueness(&[mol("CCO"), mol("OCC")], &v), 0.5);
        assert_eq!(uniqueness(&[mol("CCO"), mol("CCN")], &v), 1.0);
        assert_eq!(uniqueness(&[invalid()], &v), 0.0);
        let r = report(&[invalid()], &BTreeSet::new(), &v).unwrap();
        assert!(r.warnings.iter().any(|w| w.contains("no valid")));
    }

    #[test]
    fn novelty_counts() {
        let v = vocab();
        let gs = [mol("CCO"), mol("CCN"), mol("CCC"), mol("CCF")];
        let all: BTreeSet<String> = gs.iter().map(canonical_form).collect();
        assert_eq!(novelty(&gs, &all, &v), 0.0);
        assert_eq!(novelty(&gs, &BTreeSet::new(), &v), 1.0);
        let one: BTreeSet<String> = [canonical_form(&mol("OCC"))].into();
        assert_eq!(novelty(&gs, &one, &v), 0.75);
    }

    #[test]
    fn diversity_cases() {
        let v = vocab();
        assert_eq!(diversity(&[mol("CCO"), mol("OCC")], &v).unwrap(), 0.0);
        let a = Fingerprint::from_bits(8, [1, 2, 3]).unwrap();
        let b = Fingerprint::from_bits(8, [2, 3, 4]).unwrap();
        assert_eq!(diversity_of_fingerprints(&[a, b]).unwrap(), 0.5);
        assert!(matches!(
            diversity(&[mol("CCO"), invalid()], &v),
            Err(MetricsError::TooFewValid(1))
        ));
        let gs = [mol("CCO"), mol("c1ccccc1"), mol("CC(=O)O"), mol("CCN")];
        let mut rev = gs.to_vec();
        rev.reverse();
        let (x, y) = (diversity(&gs, &v).unwrap(), diversity(&rev, &v).unwrap());
        assert!((x - y).abs() < 1e-15);
    }

    #[test]
    fn report_agrees_with_the_individual_metrics() {
        let v = vocab();
        let gs = [mol("CCO"), mol("OCC"), invalid(), mol("c1ccccc1"), mol("CCN")];
        let train: BTreeSet<String> = [canonical_form(&mol("CCN"))].into();
        let r = report(&gs, &train, &v).unwrap();
        assert_eq!((r.total, r.valid, r.unique, r.novel), (5, 4, 3, 3));
        assert_eq!(r.validity, validity_rate(&gs, &v));
        assert_eq!(r.uniqueness, uniqueness(&gs, &v));
        assert_eq!(r.novelty, novelty(&gs, &train, &v));
        assert_eq!(r.diversity, Some(diversity(&gs, &v).unwrap()));
        assert!(r.novel <= r.valid && r.valid <= r.total);
        let back: MetricsReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
