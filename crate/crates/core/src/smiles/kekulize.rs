//! Kekulization of aromatic bonds by backtracking perfect matching.

use super::SmilesError;
use crate::molgraph::{MolGraph, DEFAULT_BOND_TYPES, DOUBLE, NO_BOND, SINGLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondKind {
    Order(usize),
    Aromatic,
}

/// A parsed molecule whose aromatic bonds are not yet assigned.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AromaticGraph {
    pub atoms: Vec<usize>,
    pub aromatic: Vec<bool>,
    /// Explicit bracket hydrogen counts (0 when unspecified).
    pub hcount: Vec<u8>,
    pub bonds: Vec<(usize, usize, BondKind)>,
    pub atom_types: usize,
}

impl AromaticGraph {
    pub(crate) fn push_atom(&mut self, class: usize, aromatic: bool, hcount: u8) -> usize {
        self.atoms.push(class);
        self.aromatic.push(aromatic);
        self.hcount.push(hcount);
        self.atom_types = self.atom_types.max(class + 1);
        self.atoms.len() - 1
    }

    pub(crate) fn has_bond(&self, a: usize, b: usize) -> bool {
        self.bonds
            .iter()
            .any(|&(x, y, _)| (x == a && y == b) || (x == b && y == a))
    }
}

/// Lowest standard valence of the aromatic element at vocabulary
/// `class`, looked up by symbol.
fn aromatic_valence(symbol: Option<&str>) -> usize {
    match symbol {
        Some("C") => 4,
        Some("N") | Some("P") | Some("B") => 3,
        Some("O") | Some("S") => 2,
        _ => 4,
    }
}

/// Assigns single/double orders to aromatic bonds. An aromatic atom takes
/// part in the matching when its sigma bond-order sum plus explicit
/// hydrogens is below its lowest standard valence (pyridine-type N and
/// ring carbons do, pyrrole-type [nH], furan O and thiophene S do not).
/// Every participating atom receives exactly one double bond.
pub fn kekulize(g: &AromaticGraph) -> Result<MolGraph, SmilesError> {
    kekulize_with(g, &crate::molgraph::AtomVocab::default(), None)
}

pub(crate) fn kekulize_with(
    g: &AromaticGraph,
    vocab: &crate::molgraph::AtomVocab,
    atom_types: Option<usize>,
) -> Result<MolGraph, SmilesError> {
    let n = g.atoms.len();
    let atom_types = atom_types.unwrap_or(vocab.len().max(g.atom_types));
    let mut table = vec![NO_BOND; n * n];
    let mut arom_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0usize; n];
    for &(a, b, kind) in &g.bonds {
        match kind {
            BondKind::Order(k) => {
                table[a * n + b] = k;
                table[b * n + a] = k;
                sigma[a] += k;
                sigma[b] += k;
            }
            BondKind::Aromatic => {
                arom_adj[a].push(b);
                arom_adj[b].push(a);
                sigma[a] += 1;
                sigma[b] += 1;
            }
        }
    }
    let needs: Vec<bool> = (0..n)
        .map(|i| {
            g.aromatic[i]
                && sigma[i] + (g.hcount[i] as usize) < aromatic_valence(vocab.symbol(g.atoms[i]))
        })
        .collect();
    for adj in &mut arom_adj {
        adj.sort_unstable();
    }

    let mut mate: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    for start in 0..n {
        if !needs[start] || visited[start] {
            continue;
        }
        // aromatic component of participating atoms
        let mut comp = vec![start];
        visited[start] = true;
        let mut k = 0;
        while k < comp.len() {
            let v = comp[k];
            k += 1;
            for &u in &arom_adj[v] {
                if needs[u] && !visited[u] {
                    visited[u] = true;
                    comp.push(u);
                }
            }
        }
        comp.sort_unstable();
        if comp.len() % 2 == 1 || !match_component(&comp, &arom_adj, &needs, &mut mate) {
            return Err(SmilesError::Kekulization {
                atoms: comp,
                offset: 0,
            });
        }
    }

    for &(a, b, kind) in &g.bonds {
        if kind == BondKind::Aromatic {
            let order = if mate[a] == Some(b) { DOUBLE } else { SINGLE };
            table[a * n + b] = order;
            table[b * n + a] = order;
        }
    }
    Ok(MolGraph::from_upper(
        atom_types,
        DEFAULT_BOND_TYPES,
        g.atoms.clone(),
        table,
    ))
}

/// Backtracking perfect matching, always extending the lowest-index
/// unmatched atom.
fn match_component(
    comp: &[usize],
    adj: &[Vec<usize>],
    needs: &[bool],
    mate: &mut [Option<usize>],
) -> bool {
    let Some(&pivot) = comp.iter().find(|&&v| mate[v].is_none()) else {
        return true;
    };
    for &u in &adj[pivot] {
        if needs[u] && mate[u].is_none() && u != pivot {
            mate[pivot] = Some(u);
            mate[u] = Some(pivot);
            if match_component(comp, adj, needs, mate) {
                return true;
            }
            mate[pivot] = None;
            mate[u] = None;
        }
    }
    false
}
