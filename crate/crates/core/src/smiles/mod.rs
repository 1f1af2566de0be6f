//! A SMILES subset: organic-subset and simple bracket atoms, explicit
//! bonds, branches and ring closures, with aromatic notation kekulized
//! into single/double bonds.
//!
//! Stereo, charge, isotope and atom-class syntax are rejected rather than
//! silently dropped. Bracket hydrogen counts are accepted but only used to
//! decide which aromatic atoms take part in kekulization; hydrogens are
//! always implicit in the resulting graph.

mod kekulize;
mod writer;

pub use kekulize::{kekulize, AromaticGraph, BondKind};
use kekulize::kekulize_with;
pub use writer::write;

use crate::molgraph::{AtomVocab, MolGraph, DOUBLE, SINGLE, TRIPLE};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES")]
    Empty,
    #[error("unbalanced parentheses at offset {offset}")]
    UnbalancedParentheses { offset: usize },
    #[error("unmatched ring closure {ring} at offset {offset}")]
    UnmatchedRing { ring: u32, offset: usize },
    #[error("conflicting bond symbols on ring closure {ring} at offset {offset}")]
    RingBondConflict { ring: u32, offset: usize },
    #[error("ring closure {ring} joins an atom to itself or to a bonded neighbor at offset {offset}")]
    BadRingBond { ring: u32, offset: usize },
    #[error("unknown element {symbol} at offset {offset}")]
    UnknownElement { symbol: String, offset: usize },
    #[error("unsupported syntax '{token}' at offset {offset}")]
    Unsupported { token: String, offset: usize },
    #[error("multi-fragment SMILES ('.') at offset {offset}")]
    MultiFragment { offset: usize },
    #[error("unexpected character '{ch}' at offset {offset}")]
    Unexpected { ch: char, offset: usize },
    #[error("bond symbol without a following atom at offset {offset}")]
    DanglingBond { offset: usize },
    #[error("kekulization failure for aromatic atoms {atoms:?} (offset {offset})")]
    Kekulization { atoms: Vec<usize>, offset: usize },
    #[error("bond class {class} has no SMILES symbol")]
    UnwritableBond { class: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Accept '.'-separated fragments (needed to read generated molecules
    /// back in; ingestion keeps the default of rejecting them).
    pub allow_fragments: bool,
}

/// Parses a single-fragment SMILES string.
pub fn parse(text: &str, vocab: &AtomVocab) -> Result<MolGraph, SmilesError> {
    parse_with(text, vocab, ParseOptions::default())
}

pub fn parse_with(
    text: &str,
    vocab: &AtomVocab,
    opts: ParseOptions,
) -> Result<MolGraph, SmilesError> {
    let (arom, offsets) = Parser::new(text, vocab, opts).run()?;
    kekulize_with(&arom, vocab, Some(vocab.len())).map_err(|e| match e {
        SmilesError::Kekulization { atoms, .. } => {
            let offset = atoms.first().map_or(0, |&a| offsets[a]);
            SmilesError::Kekulization { atoms, offset }
        }
        other => other,
    })
}

/// Bond symbol as written; `None` means no explicit symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSym {
    Single,
    Double,
    Triple,
    Aromatic,
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    vocab: &'a AtomVocab,
    opts: ParseOptions,
    graph: AromaticGraph,
    offsets: Vec<usize>,
    prev: Option<usize>,
    branches: Vec<(usize, usize)>,
    pending: Option<(BondSym, usize)>,
    rings: BTreeMap<u32, (usize, Option<BondSym>, usize)>,
}

const ORGANIC: [&str; 10] = ["Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I"];
const AROMATIC: [&str; 6] = ["b", "c", "n", "o", "p", "s"];

impl<'a> Parser<'a> {
    fn new(text: &str, vocab: &'a AtomVocab, opts: ParseOptions) -> Self {
        Parser {
            chars: text.chars().collect(),
            pos: 0,
            vocab,
            opts,
            graph: AromaticGraph::default(),
            offsets: Vec::new(),
            prev: None,
            branches: Vec::new(),
            pending: None,
            rings: BTreeMap::new(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        let mut k = self.pos;
        for c in s.chars() {
            if self.chars.get(k) != Some(&c) {
                return false;
            }
            k += 1;
        }
        true
    }

    fn run(mut self) -> Result<(AromaticGraph, Vec<usize>), SmilesError> {
        if self.chars.is_empty() {
            return Err(SmilesError::Empty);
        }
        while let Some(c) = self.peek() {
            let offset = self.pos;
            match c {
                '(' => {
                    let Some(prev) = self.prev else {
                        return Err(SmilesError::UnbalancedParentheses { offset });
                    };
                    if self.pending.is_some() {
                        return Err(SmilesError::DanglingBond { offset });
                    }
                    self.branches.push((prev, offset));
                    self.pos += 1;
                }
                ')' => {
                    let Some((atom, _)) = self.branches.pop() else {
                        return Err(SmilesError::UnbalancedParentheses { offset });
                    };
                    if self.pending.is_some() {
                        return Err(SmilesError::DanglingBond { offset });
                    }
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                '-' | '=' | '#' | ':' => {
                    if self.pending.is_some() || self.prev.is_none() {
                        return Err(SmilesError::DanglingBond { offset });
                    }
                    let sym = match c {
                        '-' => BondSym::Single,
                        '=' => BondSym::Double,
                        '#' => BondSym::Triple,
                        _ => BondSym::Aromatic,
                    };
                    self.pending = Some((sym, offset));
                    self.pos += 1;
                }
                '/' | '\\' | '$' | '@' | '*' => {
                    return Err(SmilesError::Unsupported {
                        token: c.to_string(),
                        offset,
                    })
                }
                '.' => {
                    if !self.opts.allow_fragments {
                        return Err(SmilesError::MultiFragment { offset });
                    }
                    if self.pending.is_some() || !self.branches.is_empty() {
                        return Err(SmilesError::DanglingBond { offset });
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                '0'..='9' | '%' => self.ring_closure()?,
                '[' => self.bracket_atom()?,
                _ => self.organic_atom()?,
            }
        }
        if let Some(&(_, offset)) = self.branches.first() {
            return Err(SmilesError::UnbalancedParentheses { offset });
        }
        if let Some((&ring, &(_, _, offset))) = self.rings.iter().min_by_key(|(_, v)| v.2) {
            return Err(SmilesError::UnmatchedRing { ring, offset });
        }
        if let Some((_, offset)) = self.pending {
            return Err(SmilesError::DanglingBond { offset });
        }
        Ok((self.graph, self.offsets))
    }

    fn ring_closure(&mut self) -> Result<(), SmilesError> {
        let offset = self.pos;
        let ring = if self.peek() == Some('%') {
            let digits: String = self.chars.iter().skip(self.pos + 1).take(2).collect();
            if digits.len() != 2 || !digits.chars().all(|c| c.is_ascii_digit()) {
                return Err(SmilesError::Unexpected { ch: '%', offset });
            }
            self.pos += 3;
            digits.parse::<u32>().expect("two digits")
        } else {
            let d = self.peek().and_then(|c| c.to_digit(10)).expect("digit");
            self.pos += 1;
            d
        };
        if ring == 0 {
            return Err(SmilesError::Unsupported {
                token: "0".into(),
                offset,
            });
        }
        let Some(atom) = self.prev else {
            return Err(SmilesError::UnmatchedRing { ring, offset });
        };
        let sym = self.pending.take().map(|(s, _)| s);
        match self.rings.remove(&ring) {
            None => {
                self.rings.insert(ring, (atom, sym, offset));
            }
            Some((other, other_sym, _)) => {
                let sym = match (sym, other_sym) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(SmilesError::RingBondConflict { ring, offset })
                    }
                    (a, b) => a.or(b),
                };
                if other == atom || self.graph.has_bond(other, atom) {
                    return Err(SmilesError::BadRingBond { ring, offset });
                }
                self.add_bond(other, atom, sym);
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<(), SmilesError> {
        let offset = self.pos;
        let (sym, aromatic) = if let Some(s) = ORGANIC.iter().find(|s| self.starts_with(s)) {
            (s.to_string(), false)
        } else if let Some(s) = AROMATIC.iter().find(|s| self.starts_with(s)) {
            (s.to_string(), true)
        } else {
            let ch = self.peek().expect("non-empty");
            return Err(SmilesError::Unexpected { ch, offset });
        };
        self.pos += sym.chars().count();
        let element = if aromatic { capitalize(&sym) } else { sym };
        self.add_atom(&element, aromatic, None, offset)
    }

    fn bracket_atom(&mut self) -> Result<(), SmilesError> {
        let offset = self.pos;
        let Some(len) = self.chars[self.pos..].iter().position(|&c| c == ']') else {
            return Err(SmilesError::Unexpected { ch: '[', offset });
        };
        let body: String = self.chars[self.pos + 1..self.pos + len].iter().collect();
        self.pos += len + 1;
        let bytes: Vec<char> = body.chars().collect();
        if bytes.first().is_some_and(|c| c.is_ascii_digit()) {
            return Err(SmilesError::Unsupported {
                token: format!("[{body}] isotope"),
                offset,
            });
        }
        let mut k;
        let (element, aromatic) = match bytes.first() {
            Some(c) if c.is_ascii_uppercase() => {
                k = 1;
                if bytes.get(1).is_some_and(|c| c.is_ascii_lowercase()) {
                    k = 2;
                }
                (bytes[..k].iter().collect::<String>(), false)
            }
            Some(c) if c.is_ascii_lowercase() => {
                k = 1;
                let one: String = bytes[..1].iter().collect();
                if !AROMATIC.contains(&one.as_str()) {
                    return Err(SmilesError::UnknownElement {
                        symbol: one,
                        offset,
                    });
                }
                (capitalize(&one), true)
            }
            _ => {
                return Err(SmilesError::Unsupported {
                    token: format!("[{body}]"),
                    offset,
                })
            }
        };
        let mut hcount = 0u8;
        if bytes.get(k) == Some(&'H') {
            k += 1;
            hcount = 1;
            if let Some(d) = bytes.get(k).and_then(|c| c.to_digit(10)) {
                hcount = d as u8;
                k += 1;
            }
        }
        if k != bytes.len() {
            let rest: String = bytes[k..].iter().collect();
            return Err(SmilesError::Unsupported {
                token: format!("[{body}] '{rest}'"),
                offset,
            });
        }
        self.add_atom(&element, aromatic, Some(hcount), offset)
    }

    fn add_atom(
        &mut self,
        element: &str,
        aromatic: bool,
        hcount: Option<u8>,
        offset: usize,
    ) -> Result<(), SmilesError> {
        let Some(class) = self.vocab.index_of(element) else {
            return Err(SmilesError::UnknownElement {
                symbol: element.to_string(),
                offset,
            });
        };
        let idx = self.graph.push_atom(class, aromatic, hcount.unwrap_or(0));
        self.offsets.push(offset);
        if let Some(prev) = self.prev {
            let sym = self.pending.take().map(|(s, _)| s);
            self.add_bond(prev, idx, sym);
        } else if let Some((_, off)) = self.pending {
            return Err(SmilesError::DanglingBond { offset: off });
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn add_bond(&mut self, a: usize, b: usize, sym: Option<BondSym>) {
        let kind = match sym {
            Some(BondSym::Single) => BondKind::Order(SINGLE),
            Some(BondSym::Double) => BondKind::Order(DOUBLE),
            Some(BondSym::Triple) => BondKind::Order(TRIPLE),
            Some(BondSym::Aromatic) => BondKind::Aromatic,
            None if self.graph.aromatic[a] && self.graph.aromatic[b] => BondKind::Aromatic,
            None => BondKind::Order(SINGLE),
        };
        self.graph.bonds.push((a, b, kind));
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

/// Reads a newline-delimited SMILES file. Blank lines and lines starting
/// with '#' are skipped; only the first whitespace-separated field is kept.
/// Returns `(line number, text)` pairs with 1-based line numbers.
pub fn read_smiles_lines(path: &Path) -> std::io::Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path)?;
    Ok(smiles_lines(&text))
}

pub fn smiles_lines(text: &str) -> Vec<(usize, String)> {
    text.lines()
        .enumerate()
        .filter_map(|(k, line)| {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                return None;
            }
            Some((k + 1, t.split_whitespace().next()?.to_string()))
        })
        .collect()
}
