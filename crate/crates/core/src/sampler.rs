//! The reverse process: from limit noise back to a molecular graph.
//!
//! At every step the network's clean-graph prediction is pushed through the
//! exact posterior: `p(x_{t-1}) = sum_x q(x_{t-1} | x_t, x) p_hat(x)`, where
//! clean classes that cannot reach `x_t` carry no weight.

use crate::condition::ConditionContext;
use crate::denoiser::{predict, DenoiserError, DenoiserParams, PredictedDistributions};
use crate::diffusion::{
    limit_sample, posterior_from, sample_categorical, DiffusionError, Marginals, NoiseSchedule,
    ReverseStep, TransitionMatrix,
};
use crate::molgraph::{is_valid, AtomVocab, MolGraph, NO_BOND};
use crate::seed::stream;
use crate::smiles;
use crate::trainer::{Checkpoint, CheckpointError};
use rand::Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("node-count histogram is empty")]
    EmptyHistogram,
    #[error("invalid node-count histogram: {0}")]
    Histogram(String),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Distribution over molecule sizes seen in training.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeCountHistogram {
    weights: BTreeMap<usize, f64>,
}

impl NodeCountHistogram {
    /// Counts each size once per occurrence.
    pub fn from_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let mut weights = BTreeMap::new();
        for n in sizes {
            *weights.entry(n).or_insert(0.0) += 1.0;
        }
        NodeCountHistogram { weights }
    }

    /// Non-negative weights; zero entries are dropped.
    pub fn from_weights(weights: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, SampleError> {
        let mut out = BTreeMap::new();
        for (n, w) in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(SampleError::Histogram(format!("weight {w} for size {n}")));
            }
            if n == 0 && w > 0.0 {
                return Err(SampleError::Histogram("size 0 has positive weight".into()));
            }
            if w > 0.0 {
                *out.entry(n).or_insert(0.0) += w;
            }
        }
        Ok(NodeCountHistogram { weights: out })
    }

    /// Weights indexed by node count, from 0 up to the largest size.
    pub fn dense(&self) -> Vec<f64> {
        let len = self.weights.keys().next_back().map_or(0, |&n| n + 1);
        let mut v = vec![0.0; len];
        for (&n, &w) in &self.weights {
            v[n] = w;
        }
        v
    }

    pub fn from_dense(v: &[f64]) -> Result<Self, SampleError> {
        Self::from_weights(v.iter().copied().enumerate())
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Normalized probability of size `n`.
    pub fn probability(&self, n: usize) -> f64 {
        match self.weights.get(&n) {
            Some(w) => w / self.total(),
            None => 0.0,
        }
    }

    /// `(size, probability)` pairs in increasing size.
    pub fn probabilities(&self) -> Vec<(usize, f64)> {
        let total = self.total();
        self.weights.iter().map(|(&n, &w)| (n, w / total)).collect()
    }
}

pub fn sample_node_count<R: Rng + ?Sized>(
    h: &NodeCountHistogram,
    rng: &mut R,
) -> Result<usize, SampleError> {
    if h.is_empty() {
        return Err(SampleError::EmptyHistogram);
    }
    let sizes: Vec<usize> = h.weights.keys().copied().collect();
    let w: Vec<f64> = h.weights.values().copied().collect();
    Ok(sizes[sample_categorical(&w, rng)])
}

/// `sum_x q(. | x_t, x) p0[x]` over the clean classes `x` that can reach
/// `x_t`, renormalized over the included weight. Falls back to a point mass
/// on `x_t` when no predicted class can reach it.
pub fn mixture(step: &TransitionMatrix, cumulative_prev: &TransitionMatrix, xt: usize, p0: &[f64]) -> Vec<f64> {
    let k = step.dim();
    let mut out = vec![0.0; k];
    let mut weight = 0.0;
    for (x, &w) in p0.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        if let Some(post) = posterior_from(step, cumulative_prev, xt, x) {
            weight += w;
            for (o, p) in out.iter_mut().zip(&post) {
                *o += w * p;
            }
        }
    }
    if weight > 0.0 {
        for o in &mut out {
            *o /= weight;
        }
    } else {
        out[xt] = 1.0;
    }
    out
}

/// How the `t = 1` step turns distributions into classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Readout {
    /// Most probable class, lowest index on ties.
    #[default]
    Argmax,
    /// Sample like every other step.
    Sample,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// Reverse-step distributions for every node (`n` rows) and every unordered
/// edge `i < j` (row-major over the upper triangle).
pub fn reverse_distributions(
    pred: &PredictedDistributions,
    g_t: &MolGraph,
    rs: &ReverseStep,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = g_t.n();
    let nodes = (0..n)
        .map(|i| mixture(&rs.step.x, &rs.cumulative_prev.x, g_t.atom(i), pred.node(i)))
        .collect();
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push(mixture(
                &rs.step.e,
                &rs.cumulative_prev.e,
                g_t.bond(i, j),
                pred.edge(i, j),
            ));
        }
    }
    (nodes, edges)
}

/// One reverse step from `t` to `t - 1`, argmax readout at `t = 1`.
pub fn denoise_step<R: Rng + ?Sized>(
    params: &DenoiserParams,
    g_t: &MolGraph,
    ctx: &ConditionContext,
    t: usize,
    sched: &NoiseSchedule,
    m: &Marginals,
    rng: &mut R,
) -> Result<MolGraph, SampleError> {
    let rs = ReverseStep::new(sched, t, m)?;
    step_with(params, g_t, ctx, t, &rs, Readout::Argmax, rng)
}

fn step_with<R: Rng + ?Sized>(
    params: &DenoiserParams,
    g_t: &MolGraph,
    ctx: &ConditionContext,
    t: usize,
    rs: &ReverseStep,
    readout: Readout,
    rng: &mut R,
) -> Result<MolGraph, SampleError> {
    let pred = predict(params, g_t, ctx, t)?;
    let (nodes, edges) = reverse_distributions(&pred, g_t, rs);
    let pick = |p: &[f64], rng: &mut R| {
        if t == 1 && readout == Readout::Argmax {
            argmax(p)
        } else {
            sample_categorical(p, rng)
        }
    };
    let n = g_t.n();
    let atoms = nodes.iter().map(|p| pick(p, rng)).collect();
    let mut bonds = vec![NO_BOND; n * n];
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            bonds[i * n + j] = pick(&edges[k], rng);
            k += 1;
        }
    }
    Ok(MolGraph::from_upper(g_t.atom_types(), g_t.bond_types(), atoms, bonds))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOptions {
    pub readout: Readout,
}

/// Generates `count` molecules under `ctx`. Molecule `k` uses its own
/// stream derived from `(seed, k)`, so the output does not depend on the
/// number of worker threads.
pub fn generate(
    ckpt: &Checkpoint,
    ctx: &ConditionContext,
    count: usize,
    seed: u64,
) -> Result<Vec<MolGraph>, SampleError> {
    generate_with(ckpt, ctx, count, seed, GenerateOptions::default())
}

pub fn generate_with(
    ckpt: &Checkpoint,
    ctx: &ConditionContext,
    count: usize,
    seed: u64,
    opts: GenerateOptions,
) -> Result<Vec<MolGraph>, SampleError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if ckpt.histogram.is_empty() {
        return Err(SampleError::EmptyHistogram);
    }
    let sched = ckpt.schedule()?;
    let steps: Vec<ReverseStep> = (1..=sched.steps())
        .map(|t| ReverseStep::new(&sched, t, &ckpt.marginals))
        .collect::<Result<_, _>>()?;
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, &[k as u64]);
            let n = sample_node_count(&ckpt.histogram, &mut rng)?;
            let mut g = limit_sample(n, &ckpt.marginals, &mut rng);
            for t in (1..=sched.steps()).rev() {
                g = step_with(&ckpt.params, &g, ctx, t, &steps[t - 1], opts.readout, &mut rng)?;
            }
            Ok(g)
        })
        .collect()
}

/// One line per graph: SMILES for valid graphs, otherwise `INVALID\t`
/// followed by the edge list.
pub fn write_generated(graphs: &[MolGraph], vocab: &AtomVocab) -> String {
    let mut out = String::new();
    for g in graphs {
        let line = if is_valid(g, vocab).0 {
            smiles::write(g, vocab).ok()
        } else {
            None
        };
        match line {
            Some(s) => out.push_str(&s),
            None => {
                out.push_str("INVALID\t");
                out.push_str(&g.edge_list(vocab));
            }
        }
        out.push('\n');
    }
    out
}
