//! Canonical SMILES output.

use super::SmilesError;
use crate::molgraph::{canonical_order, AtomVocab, MolGraph, NO_BOND};
use std::collections::{BTreeSet, HashSet};

const ORGANIC: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];

/// Writes `g` as SMILES. The graph is first relabeled into canonical order,
/// so isomorphic graphs produce the same string. Disconnected graphs are
/// written as '.'-joined fragments.
pub fn write(g: &MolGraph, vocab: &AtomVocab) -> Result<String, SmilesError> {
    let order = canonical_order(g);
    let mut perm = vec![0; order.len()];
    for (pos, &node) in order.iter().enumerate() {
        perm[node] = pos;
    }
    let h = g.permute(&perm).expect("canonical order is a permutation");
    if let Some(&(_, _, class)) = h.bond_list().iter().find(|b| b.2 > 3) {
        return Err(SmilesError::UnwritableBond { class });
    }
    let mut w = Writer::new(&h, vocab);
    let mut parts = Vec::new();
    for start in 0..h.n() {
        if !w.visited[start] {
            w.plan(start, None);
            let mut out = String::new();
            w.emit(start, None, &mut out);
            parts.push(out);
        }
    }
    Ok(parts.join("."))
}

struct Writer<'a> {
    g: &'a MolGraph,
    vocab: &'a AtomVocab,
    visited: Vec<bool>,
    children: Vec<Vec<usize>>,
    /// ring-closure partners opened at this atom, in discovery order
    opens: Vec<Vec<usize>>,
    /// ring-closure partners closed at this atom
    closes: Vec<Vec<usize>>,
    seen_edges: HashSet<(usize, usize)>,
    ring_ids: Vec<(usize, usize, u32)>,
    free: BTreeSet<u32>,
}

impl<'a> Writer<'a> {
    fn new(g: &'a MolGraph, vocab: &'a AtomVocab) -> Self {
        let n = g.n();
        Writer {
            g,
            vocab,
            visited: vec![false; n],
            children: vec![Vec::new(); n],
            opens: vec![Vec::new(); n],
            closes: vec![Vec::new(); n],
            seen_edges: HashSet::new(),
            ring_ids: Vec::new(),
            free: (1..=99).collect(),
        }
    }

    fn plan(&mut self, v: usize, parent: Option<usize>) {
        self.visited[v] = true;
        let nbrs: Vec<usize> = self.g.neighbors(v).map(|(u, _)| u).collect();
        for u in nbrs {
            if Some(u) == parent {
                continue;
            }
            let key = (v.min(u), v.max(u));
            if self.visited[u] {
                if self.seen_edges.insert(key) {
                    self.opens[u].push(v);
                    self.closes[v].push(u);
                }
                continue;
            }
            self.seen_edges.insert(key);
            self.children[v].push(u);
            self.plan(u, Some(v));
        }
    }

    fn emit(&mut self, v: usize, parent: Option<usize>, out: &mut String) {
        if let Some(p) = parent {
            out.push_str(bond_symbol(self.g.bond(p, v)));
        }
        out.push_str(&self.atom_symbol(v));

        let mut closing = Vec::new();
        for &u in &self.closes[v] {
            let pos = self
                .ring_ids
                .iter()
                .position(|&(a, b, _)| a == u && b == v)
                .expect("ring opened before close");
            let (_, _, id) = self.ring_ids.remove(pos);
            closing.push((u, id));
        }
        for &(u, id) in &closing {
            out.push_str(bond_symbol(self.g.bond(u, v)));
            out.push_str(&ring_label(id));
        }
        let opens = self.opens[v].clone();
        for u in opens {
            let id = *self.free.iter().next().expect("fewer than 100 open rings");
            self.free.remove(&id);
            self.ring_ids.push((v, u, id));
            out.push_str(&ring_label(id));
        }
        for (_, id) in closing {
            self.free.insert(id);
        }

        let children = self.children[v].clone();
        let last = children.len().saturating_sub(1);
        for (k, &c) in children.iter().enumerate() {
            if k < last {
                out.push('(');
                self.emit(c, Some(v), out);
                out.push(')');
            } else {
                self.emit(c, Some(v), out);
            }
        }
    }

    fn atom_symbol(&self, v: usize) -> String {
        let sym = self.vocab.symbol(self.g.atom(v)).unwrap_or("*");
        if ORGANIC.contains(&sym) {
            sym.to_string()
        } else {
            format!("[{sym}]")
        }
    }
}

fn bond_symbol(class: usize) -> &'static str {
    match class {
        NO_BOND | 1 => "",
        2 => "=",
        _ => "#",
    }
}

fn ring_label(id: u32) -> String {
    if id < 10 {
        id.to_string()
    } else {
        format!("%{id:02}")
    }
}
