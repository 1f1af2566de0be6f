//! Canonical labeling by color refinement with individualization.
//!
//! Each connected component is refined from an initial coloring of
//! (element, degree, bond-order multiset). While a color class holds more
//! than one node, every node of the smallest such class is tried as the
//! next individualized vertex, and the lexicographically smallest
//! serialization wins. Nodes that are interchangeable twins (identical bond
//! rows to every other node) lead to isomorphic subtrees, so only one
//! representative per twin group is expanded.

use super::{MolGraph, NO_BOND};
use std::cmp::Ordering;

/// Node order (position -> node) of the canonical labeling. Components are
/// concatenated in order of their certificates.
pub fn canonical_order(g: &MolGraph) -> Vec<usize> {
    let mut comps: Vec<(Vec<usize>, Vec<usize>)> = g
        .components()
        .into_iter()
        .map(|c| canonize_component(g, &c))
        .collect();
    comps.sort_by(|a, b| a.0.cmp(&b.0));
    comps.into_iter().flat_map(|(_, order)| order).collect()
}

/// Text key identical for isomorphic labeled graphs.
pub fn canonical_form(g: &MolGraph) -> String {
    let mut certs: Vec<Vec<usize>> = g
        .components()
        .into_iter()
        .map(|c| canonize_component(g, &c).0)
        .collect();
    certs.sort();
    if certs.is_empty() {
        return String::from("empty");
    }
    certs
        .iter()
        .map(|c| render(c))
        .collect::<Vec<_>>()
        .join(".")
}

fn render(cert: &[usize]) -> String {
    let n = cert[0];
    let atoms: Vec<String> = cert[1..=n].iter().map(|a| a.to_string()).collect();
    let mut bonds = Vec::new();
    let mut k = n + 1;
    for i in 0..n {
        for j in (i + 1)..n {
            if cert[k] != NO_BOND {
                bonds.push(format!("{i}-{j}:{}", cert[k]));
            }
            k += 1;
        }
    }
    format!("a{}|b{}", atoms.join(","), bonds.join(","))
}

struct Component<'a> {
    g: &'a MolGraph,
    nodes: &'a [usize],
}

impl Component<'_> {
    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn bond(&self, a: usize, b: usize) -> usize {
        self.g.bond(self.nodes[a], self.nodes[b])
    }

    fn atom(&self, a: usize) -> usize {
        self.g.atom(self.nodes[a])
    }

    fn initial_colors(&self) -> Vec<usize> {
        let sigs: Vec<(usize, usize, Vec<usize>)> = (0..self.len())
            .map(|a| {
                let mut orders: Vec<usize> = (0..self.len())
                    .map(|b| self.bond(a, b))
                    .filter(|&x| x != NO_BOND)
                    .collect();
                orders.sort_unstable();
                (self.atom(a), orders.len(), orders)
            })
            .collect();
        rank(&sigs)
    }

    /// Refines until the number of color classes stops growing. Colors are
    /// dense ranks that respect the order of the previous coloring.
    fn refine(&self, mut colors: Vec<usize>) -> Vec<usize> {
        let m = self.len();
        let mut classes = count_classes(&colors);
        loop {
            let sigs: Vec<(usize, Vec<(usize, usize)>)> = (0..m)
                .map(|a| {
                    let mut nb: Vec<(usize, usize)> = (0..m)
                        .filter(|&b| self.bond(a, b) != NO_BOND)
                        .map(|b| (self.bond(a, b), colors[b]))
                        .collect();
                    nb.sort_unstable();
                    (colors[a], nb)
                })
                .collect();
            let next = rank(&sigs);
            let next_classes = count_classes(&next);
            colors = next;
            if next_classes == classes {
                return colors;
            }
            classes = next_classes;
        }
    }

    fn twins(&self, a: usize, b: usize) -> bool {
        (0..self.len())
            .filter(|&w| w != a && w != b)
            .all(|w| self.bond(a, w) == self.bond(b, w))
    }

    fn certificate(&self, colors: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let m = self.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&a| colors[a]);
        let mut cert = Vec::with_capacity(1 + m + m * (m - 1) / 2);
        cert.push(m);
        cert.extend(order.iter().map(|&a| self.atom(a)));
        for i in 0..m {
            for j in (i + 1)..m {
                cert.push(self.bond(order[i], order[j]));
            }
        }
        (cert, order.into_iter().map(|a| self.nodes[a]).collect())
    }

    fn search(&self, colors: Vec<usize>, best: &mut Option<(Vec<usize>, Vec<usize>)>) {
        let colors = self.refine(colors);
        let m = self.len();
        let mut sizes = vec![0usize; m];
        for &c in &colors {
            sizes[c] += 1;
        }
        let Some(target) = (0..m).find(|&c| sizes[c] > 1) else {
            let cand = self.certificate(&colors);
            let better = match best {
                None => true,
                Some((b, _)) => cand.0.cmp(b) == Ordering::Less,
            };
            if better {
                *best = Some(cand);
            }
            return;
        };
        let cell: Vec<usize> = (0..m).filter(|&a| colors[a] == target).collect();
        let mut reps: Vec<usize> = Vec::new();
        for &a in &cell {
            if !reps.iter().any(|&r| self.twins(r, a)) {
                reps.push(a);
            }
        }
        for v in reps {
            let split: Vec<usize> = (0..m)
                .map(|a| {
                    let c = 2 * colors[a];
                    if colors[a] == target && a != v {
                        c + 1
                    } else {
                        c
                    }
                })
                .collect();
            self.search(split, best);
        }
    }
}

fn canonize_component(g: &MolGraph, nodes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let comp = Component { g, nodes };
    let mut best = None;
    comp.search(comp.initial_colors(), &mut best);
    best.expect("search visits at least one leaf")
}

fn rank<T: Ord + Clone>(sigs: &[T]) -> Vec<usize> {
    let mut distinct: Vec<T> = sigs.to_vec();
    distinct.sort();
    distinct.dedup();
    sigs.iter()
        .map(|s| distinct.binary_search(s).expect("present"))
        .collect()
}

fn count_classes(colors: &[usize]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}
