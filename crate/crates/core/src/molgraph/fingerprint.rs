//! Circular fingerprints and Tanimoto similarity.
//!
//! Atom environments are grown one bond shell at a time: the radius-0
//! identifier depends only on the element, and each further shell hashes
//! the previous identifier together with the sorted (bond class, neighbor
//! identifier) multiset. Identifiers are 64-bit FNV-1a hashes folded
//! modulo the bit width.

use super::MolGraph;
use std::collections::BTreeSet;
use thiserror::Error;

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_NBITS: usize = 2048;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    nbits: usize,
    bits: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("bit {bit} outside fingerprint width {nbits}")]
    BitOutOfRange { bit: usize, nbits: usize },
    #[error("fingerprint widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("fingerprint width {0} is not a power of two")]
    Width(usize),
}

impl Fingerprint {
    pub fn from_bits(
        nbits: usize,
        bits: impl IntoIterator<Item = usize>,
    ) -> Result<Self, FingerprintError> {
        let bits: BTreeSet<usize> = bits.into_iter().collect();
        if let Some(&bit) = bits.iter().find(|&&b| b >= nbits) {
            return Err(FingerprintError::BitOutOfRange { bit, nbits });
        }
        Ok(Fingerprint { nbits, bits })
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn bits(&self) -> &BTreeSet<usize> {
        &self.bits
    }
}

pub fn fingerprint(g: &MolGraph, radius: usize, nbits: usize) -> Result<Fingerprint, FingerprintError> {
    if !nbits.is_power_of_two() {
        return Err(FingerprintError::Width(nbits));
    }
    let n = g.n();
    let mut ids: Vec<u64> = (0..n).map(|i| fnv1a(&[g.atom(i) as u64])).collect();
    let mut bits: BTreeSet<usize> = ids.iter().map(|&h| (h % nbits as u64) as usize).collect();
    for r in 1..=radius {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut shell: Vec<(u64, u64)> = g
                    .neighbors(i)
                    .map(|(j, b)| (b as u64, ids[j]))
                    .collect();
                shell.sort_unstable();
                let mut words = vec![r as u64, ids[i]];
                for (b, id) in shell {
                    words.push(b);
                    words.push(id);
                }
                fnv1a(&words)
            })
            .collect();
        bits.extend(next.iter().map(|&h| (h % nbits as u64) as usize));
        ids = next;
    }
    Ok(Fingerprint { nbits, bits })
}

/// |a ∩ b| / |a ∪ b|, defined as 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.nbits != b.nbits {
        return Err(FingerprintError::WidthMismatch(a.nbits, b.nbits));
    }
    let inter = a.bits.intersection(&b.bits).count();
    let union = a.bits.len() + b.bits.len() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}
