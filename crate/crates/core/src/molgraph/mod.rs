//! Molecular graphs as categorical node and edge assignments.
//!
//! A [`MolGraph`] stores one atom class per node and one bond class per
//! unordered node pair, with class 0 meaning "no bond". The one-hot views
//! (`X`, `E`) and the adjacency are derived on demand.

mod canon;
mod fingerprint;

pub use canon::{canonical_form, canonical_order};
pub use fingerprint::{
    fingerprint, tanimoto, Fingerprint, FingerprintError, DEFAULT_NBITS, DEFAULT_RADIUS,
};
pub(crate) use fingerprint::fnv1a;

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Bond classes used throughout: 0 none, 1 single, 2 double, 3 triple.
pub const NO_BOND: usize = 0;
pub const SINGLE: usize = 1;
pub const DOUBLE: usize = 2;
pub const TRIPLE: usize = 3;
pub const DEFAULT_BOND_TYPES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node index {index} out of range for {n} nodes in pair ({i}, {j})")]
    NodeOutOfRange {
        index: usize,
        n: usize,
        i: usize,
        j: usize,
    },
    #[error("self-bond at ({i}, {i})")]
    SelfBond { i: usize },
    #[error("duplicate bond ({i}, {j})")]
    DuplicateBond { i: usize, j: usize },
    #[error("bond class {class} in pair ({i}, {j}) outside 1..{bond_types}")]
    BondClass {
        class: usize,
        bond_types: usize,
        i: usize,
        j: usize,
    },
    #[error("atom class {class} at node {node} outside 0..{atom_types}")]
    AtomClass {
        class: usize,
        node: usize,
        atom_types: usize,
    },
    #[error("permutation is not a bijection on 0..{n}")]
    BadPermutation { n: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MolGraph {
    atom_types: usize,
    bond_types: usize,
    atoms: Vec<usize>,
    /// `n * n` bond classes, symmetric, zero diagonal.
    bonds: Vec<usize>,
}

impl MolGraph {
    /// Builds a graph from atom classes and an unordered bond list.
    /// Unlisted pairs are "no bond".
    pub fn new(
        atom_types: usize,
        bond_types: usize,
        atoms: Vec<usize>,
        bonds: &[(usize, usize, usize)],
    ) -> Result<Self, GraphError> {
        let n = atoms.len();
        for (node, &class) in atoms.iter().enumerate() {
            if class >= atom_types {
                return Err(GraphError::AtomClass {
                    class,
                    node,
                    atom_types,
                });
            }
        }
        let mut table = vec![NO_BOND; n * n];
        for &(i, j, class) in bonds {
            for index in [i, j] {
                if index >= n {
                    return Err(GraphError::NodeOutOfRange { index, n, i, j });
                }
            }
            if i == j {
                return Err(GraphError::SelfBond { i });
            }
            if class == NO_BOND || class >= bond_types {
                return Err(GraphError::BondClass {
                    class,
                    bond_types,
                    i,
                    j,
                });
            }
            if table[i * n + j] != NO_BOND {
                return Err(GraphError::DuplicateBond {
                    i: i.min(j),
                    j: i.max(j),
                });
            }
            table[i * n + j] = class;
            table[j * n + i] = class;
        }
        Ok(MolGraph {
            atom_types,
            bond_types,
            atoms,
            bonds: table,
        })
    }

    /// Builds a graph from a full `n * n` bond table; the upper triangle is
    /// authoritative and mirrored, the diagonal is forced to no-bond.
    pub(crate) fn from_upper(
        atom_types: usize,
        bond_types: usize,
        atoms: Vec<usize>,
        mut bonds: Vec<usize>,
    ) -> Self {
        let n = atoms.len();
        debug_assert_eq!(bonds.len(), n * n);
        for i in 0..n {
            bonds[i * n + i] = NO_BOND;
            for j in (i + 1)..n {
                bonds[j * n + i] = bonds[i * n + j];
            }
        }
        MolGraph {
            atom_types,
            bond_types,
            atoms,
            bonds,
        }
    }

    pub fn n(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom_types(&self) -> usize {
        self.atom_types
    }

    pub fn bond_types(&self) -> usize {
        self.bond_types
    }

    pub fn atoms(&self) -> &[usize] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> usize {
        self.atoms[i]
    }

    pub fn bond(&self, i: usize, j: usize) -> usize {
        self.bonds[i * self.n() + j]
    }

    /// Row-major `n * n` bond classes.
    pub fn bond_table(&self) -> &[usize] {
        &self.bonds
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.bond(i, j) != NO_BOND
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n();
        self.bonds[i * n..(i + 1) * n]
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != NO_BOND)
            .map(|(j, &b)| (j, b))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Sum of bond orders at atom `i`, with bond class `k` counted as order `k`.
    pub fn bond_order_sum(&self, i: usize) -> usize {
        self.neighbors(i).map(|(_, b)| b).sum()
    }

    /// Unordered bonds `(i, j, class)` with `i < j`.
    pub fn bond_list(&self) -> Vec<(usize, usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let b = self.bond(i, j);
                if b != NO_BOND {
                    out.push((i, j, b));
                }
            }
        }
        out
    }

    /// `n x f` one-hot atom matrix.
    pub fn x_one_hot(&self) -> Vec<Vec<f64>> {
        self.atoms
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; self.atom_types];
                row[a] = 1.0;
                row
            })
            .collect()
    }

    /// `n x n x b` one-hot bond tensor.
    pub fn e_one_hot(&self) -> Vec<Vec<Vec<f64>>> {
        let n = self.n();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut v = vec![0.0; self.bond_types];
                        v[self.bond(i, j)] = 1.0;
                        v
                    })
                    .collect()
            })
            .collect()
    }

    /// Connected components, each sorted ascending, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut k = 0;
            while k < comp.len() {
                let v = comp[k];
                k += 1;
                for (u, _) in self.neighbors(v) {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Relabels nodes so that node `i` becomes node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<MolGraph, GraphError> {
        let n = self.n();
        let mut hit = vec![false; n];
        if perm.len() != n {
            return Err(GraphError::BadPermutation { n });
        }
        for &p in perm {
            if p >= n || hit[p] {
                return Err(GraphError::BadPermutation { n });
            }
            hit[p] = true;
        }
        let mut atoms = vec![0; n];
        let mut bonds = vec![NO_BOND; n * n];
        for i in 0..n {
            atoms[perm[i]] = self.atoms[i];
            for j in 0..n {
                bonds[perm[i] * n + perm[j]] = self.bonds[i * n + j];
            }
        }
        Ok(MolGraph {
            atom_types: self.atom_types,
            bond_types: self.bond_types,
            atoms,
            bonds,
        })
    }

    /// Plain-text edge list, used for graphs that have no SMILES rendering.
    pub fn edge_list(&self, vocab: &AtomVocab) -> String {
        let atoms: Vec<&str> = self
            .atoms
            .iter()
            .map(|&a| vocab.symbol(a).unwrap_or("?"))
            .collect();
        let bonds: Vec<String> = self
            .bond_list()
            .into_iter()
            .map(|(i, j, b)| format!("{i}-{j}:{b}"))
            .collect();
        format!("n={};atoms={};bonds={}", self.n(), atoms.join(","), bonds.join(","))
    }
}

impl fmt::Display for MolGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MolGraph(n={}, atoms={:?}, bonds={:?})", self.n(), self.atoms, self.bond_list())
    }
}

/// Ordered element symbols with their maximum bond-order sums.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomVocab {
    entries: Vec<VocabEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub symbol: String,
    pub max_valence: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("duplicate element symbol {0}")]
    Duplicate(String),
    #[error("element {0} has non-positive valence")]
    ZeroValence(String),
    #[error("vocabulary is empty")]
    Empty,
}

impl AtomVocab {
    pub fn new(entries: Vec<VocabEntry>) -> Result<Self, VocabError> {
        if entries.is_empty() {
            return Err(VocabError::Empty);
        }
        for (k, e) in entries.iter().enumerate() {
            if e.max_valence == 0 {
                return Err(VocabError::ZeroValence(e.symbol.clone()));
            }
            if entries[..k].iter().any(|o| o.symbol == e.symbol) {
                return Err(VocabError::Duplicate(e.symbol.clone()));
            }
        }
        Ok(AtomVocab { entries })
    }

    pub fn from_pairs(pairs: &[(&str, usize)]) -> Result<Self, VocabError> {
        AtomVocab::new(
            pairs
                .iter()
                .map(|&(s, v)| VocabEntry {
                    symbol: s.to_string(),
                    max_valence: v,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn symbol(&self, class: usize) -> Option<&str> {
        self.entries.get(class).map(|e| e.symbol.as_str())
    }

    pub fn max_valence(&self, class: usize) -> Option<usize> {
        self.entries.get(class).map(|e| e.max_valence)
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.symbol == symbol)
    }
}

impl Default for AtomVocab {
    fn default() -> Self {
        AtomVocab::from_pairs(&[
            ("C", 4),
            ("N", 3),
            ("O", 2),
            ("F", 1),
            ("P", 5),
            ("S", 6),
            ("Cl", 1),
            ("Br", 1),
            ("I", 1),
        ])
        .expect("default vocabulary is well formed")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValenceViolation {
    pub atom: usize,
    pub bond_order_sum: usize,
    pub max_valence: usize,
}

/// Hydrogen-implicit valence check: every atom's bond-order sum must not
/// exceed its element's maximum valence. Atom classes outside the
/// vocabulary count as violations with `max_valence` 0.
pub fn is_valid(g: &MolGraph, vocab: &AtomVocab) -> (bool, Vec<ValenceViolation>) {
    let violations: Vec<ValenceViolation> = (0..g.n())
        .filter_map(|i| {
            let sum = g.bond_order_sum(i);
            let max = vocab.max_valence(g.atom(i)).unwrap_or(0);
            (sum > max).then_some(ValenceViolation {
                atom: i,
                bond_order_sum: sum,
                max_valence: max,
            })
        })
        .collect();
    (violations.is_empty(), violations)
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_atom_has_no_bonds() {
        let g = graph(&["C"], &[]);
        assert_eq!(g.n(), 1);
        assert_eq!(g.bond(0, 0), NO_BOND);
        assert_eq!(g.e_one_hot()[0][0], vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn double_bond_is_mirrored() {
        let g = graph(&["C", "O"], &[(0, 1, DOUBLE)]);
        assert_eq!(g.bond(0, 1), DOUBLE);
        assert_eq!(g.bond(1, 0), DOUBLE);
        assert!(g.adjacent(1, 0));
    }

    #[test]
    fn construction_errors_name_the_pair() {
        let v = vocab();
        let err = MolGraph::new(v.len(), 4, vec![0, 0], &[(0, 0, SINGLE)]).unwrap_err();
        assert_eq!(err, GraphError::SelfBond { i: 0 });
        assert!(err.to_string().contains("self-bond"));
        let err = MolGraph::new(v.len(), 4, vec![0, 0], &[(0, 1, SINGLE), (1, 0, DOUBLE)])
            .unwrap_err();
        assert_eq!(err, GraphError::DuplicateBond { i: 0, j: 1 });
        let err = MolGraph::new(v.len(), 4, vec![0, 0], &[(0, 2, SINGLE)]).unwrap_err();
        assert!(matches!(err, GraphError::NodeOutOfRange { index: 2, .. }));
        let err = MolGraph::new(2, 4, vec![0, 5], &[]).unwrap_err();
        assert!(matches!(err, GraphError::AtomClass { class: 5, .. }));
    }

    #[test]
    fn permute_identity_inverse_and_swap() {
        let g = graph(&["C", "O", "N"], &[(0, 1, SINGLE), (1, 2, DOUBLE)]);
        assert_eq!(g.permute(&[0, 1, 2]).unwrap(), g);
        let perm = vec![2, 0, 1];
        let back = g.permute(&perm).unwrap().permute(&inverse_permutation(&perm)).unwrap();
        assert_eq!(back, g);

        let co = graph(&["C", "O"], &[(0, 1, SINGLE)]);
        let swapped = co.permute(&[1, 0]).unwrap();
        assert_eq!(swapped.atoms(), &[vocab().index_of("O").unwrap(), 0]);
        assert_eq!(swapped.bond(0, 1), SINGLE);
        assert!(co.permute(&[0, 0]).is_err());
        assert!(co.permute(&[0]).is_err());
    }

    #[test]
    fn valence_examples() {
        let v = vocab();
        assert!(is_valid(&graph(&["C"], &[]), &v).0);

        let bonds: Vec<_> = (1..=5).map(|k| (0, k, SINGLE)).collect();
        let (ok, viol) = is_valid(&graph(&["C"; 6], &bonds), &v);
        assert!(!ok);
        assert_eq!(
            viol,
            vec![ValenceViolation {
                atom: 0,
                bond_order_sum: 5,
                max_valence: 4
            }]
        );

        let co2 = graph(&["O", "C", "O"], &[(0, 1, DOUBLE), (1, 2, DOUBLE)]);
        assert!(is_valid(&co2, &v).0);
    }

    #[test]
    fn vocab_rejects_duplicates_and_zero_valence() {
        assert!(AtomVocab::from_pairs(&[("C", 4), ("C", 4)]).is_err());
        assert!(AtomVocab::from_pairs(&[("C", 0)]).is_err());
        assert_eq!(AtomVocab::default().len(), 9);
    }

    fn arb_graph() -> impl Strategy<Value = MolGraph> {
        (1usize..=6).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..4, n),
                proptest::collection::vec(0usize..4, n * n),
            )
                .prop_map(move |(atoms, table)| MolGraph::from_upper(9, 4, atoms, table))
        })
    }

    proptest! {
        #[test]
        fn validity_is_permutation_invariant(g in arb_graph(), seed in any::<u64>()) {
            let n = g.n();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let p = g.permute(&perm).unwrap();
            prop_assert_eq!(is_valid(&g, &vocab()).0, is_valid(&p, &vocab()).0);
            prop_assert_eq!(p.permute(&inverse_permutation(&perm)).unwrap(), g);
        }
    }
}
