//! Categorical diffusion on graphs: noise schedules, marginal transition
//! matrices, forward noising, the exact one-step posterior, and sampling
//! from the limit distribution.
//!
//! Per step the transition is `Q_t = (1 - beta_t) I + beta_t 1 m^T`, so the
//! cumulative product has the closed form
//! `Qbar_t = alpha_bar_t I + (1 - alpha_bar_t) 1 m^T` and the chain
//! converges to the marginal `m`. Node and edge spaces share the schedule
//! but carry their own marginals.

use crate::molgraph::{MolGraph, NO_BOND};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

pub const DEFAULT_COSINE_OFFSET: f64 = 0.008;
pub const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffusionError {
    #[error("schedule needs at least one step")]
    NoSteps,
    #[error("cosine offset must be positive, got {0}")]
    Offset(f64),
    #[error("beta[{t}] = {beta} outside [0, 1]")]
    Beta { t: usize, beta: f64 },
    #[error("step {t} outside 1..={max}")]
    Step { t: usize, max: usize },
    #[error("marginal {0} is not a probability vector")]
    Marginal(&'static str),
    #[error("inconsistent posterior inputs: x_t={xt} unreachable from x_0={x0} at step {t}")]
    Unreachable { xt: usize, x0: usize, t: usize },
    #[error("graph class spaces ({f}, {b}) do not match marginals ({mf}, {mb})")]
    Space {
        f: usize,
        b: usize,
        mf: usize,
        mb: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    /// `alpha_bar[0] = 1`, `alpha_bar[t] = prod_{s<=t} (1 - beta_s)`.
    alpha_bar: Vec<f64>,
}

/// Cosine schedule: `alpha_bar(t) = f(t) / f(0)` with
/// `f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)`, betas clamped to
/// `(0, 0.999]` and `alpha_bar` recomputed as the product of `1 - beta`.
pub fn cosine_schedule(steps: usize, s: f64) -> Result<NoiseSchedule, DiffusionError> {
    if steps == 0 {
        return Err(DiffusionError::NoSteps);
    }
    if !(s > 0.0) {
        return Err(DiffusionError::Offset(s));
    }
    let f = |t: f64| {
        let c = ((t / steps as f64 + s) / (1.0 + s) * FRAC_PI_2).cos();
        c * c
    };
    let f0 = f(0.0);
    let betas = (1..=steps)
        .map(|t| {
            let prev = f((t - 1) as f64) / f0;
            let cur = f(t as f64) / f0;
            (1.0 - cur / prev).clamp(f64::MIN_POSITIVE, MAX_BETA)
        })
        .collect();
    NoiseSchedule::from_betas(betas)
}

impl NoiseSchedule {
    /// Arbitrary schedule from per-step betas in `[0, 1]`. Zero betas are
    /// allowed here (identity steps); `cosine_schedule` never produces them.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self, DiffusionError> {
        if betas.is_empty() {
            return Err(DiffusionError::NoSteps);
        }
        for (k, &b) in betas.iter().enumerate() {
            if !(0.0..=1.0).contains(&b) {
                return Err(DiffusionError::Beta { t: k + 1, beta: b });
            }
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(NoiseSchedule { betas, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `alpha_bar_t` for `0 <= t <= T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn check_step(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.steps() {
            return Err(DiffusionError::Step {
                t,
                max: self.steps(),
            });
        }
        Ok(())
    }
}

/// Class marginals of the data; also the limit distribution of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub x: Vec<f64>,
    pub e: Vec<f64>,
}

impl Marginals {
    pub fn new(x: Vec<f64>, e: Vec<f64>) -> Result<Self, DiffusionError> {
        check_prob(&x, "x")?;
        check_prob(&e, "e")?;
        Ok(Marginals { x, e })
    }

    pub fn uniform(f: usize, b: usize) -> Self {
        Marginals {
            x: vec![1.0 / f as f64; f],
            e: vec![1.0 / b as f64; b],
        }
    }

    /// Node-class frequencies over all atoms and edge-class frequencies over
    /// all unordered atom pairs (no-bond included).
    pub fn from_graphs<'a>(
        graphs: impl IntoIterator<Item = &'a MolGraph>,
        f: usize,
        b: usize,
    ) -> Self {
        let (cx, ce) = class_counts(graphs, f, b);
        Marginals {
            x: normalize_counts(&cx),
            e: normalize_counts(&ce),
        }
    }

    pub fn f(&self) -> usize {
        self.x.len()
    }

    pub fn b(&self) -> usize {
        self.e.len()
    }
}

pub(crate) fn class_counts<'a>(
    graphs: impl IntoIterator<Item = &'a MolGraph>,
    f: usize,
    b: usize,
) -> (Vec<u64>, Vec<u64>) {
    let mut cx = vec![0u64; f];
    let mut ce = vec![0u64; b];
    for g in graphs {
        for &a in g.atoms() {
            cx[a] += 1;
        }
        let n = g.n();
        for i in 0..n {
            for j in (i + 1)..n {
                ce[g.bond(i, j)] += 1;
            }
        }
    }
    (cx, ce)
}

fn normalize_counts(c: &[u64]) -> Vec<f64> {
    let total: u64 = c.iter().sum();
    if total == 0 {
        return vec![1.0 / c.len() as f64; c.len()];
    }
    c.iter().map(|&v| v as f64 / total as f64).collect()
}

fn check_prob(p: &[f64], name: &'static str) -> Result<(), DiffusionError> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(DiffusionError::Marginal(name));
    }
    Ok(())
}

/// Square row-stochastic matrix; `[i][j] = q(next = j | prev = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    k: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn identity(k: usize) -> Self {
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            data[i * k + i] = 1.0;
        }
        TransitionMatrix { k, data }
    }

    /// `keep * I + (1 - keep) * 1 m^T`
    pub fn marginal(keep: f64, m: &[f64]) -> Self {
        let k = m.len();
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                data[i * k + j] = (1.0 - keep) * m[j] + if i == j { keep } else { 0.0 };
            }
        }
        TransitionMatrix { k, data }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn product(&self, other: &TransitionMatrix) -> TransitionMatrix {
        let k = self.k;
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            for p in 0..k {
                let a = self.get(i, p);
                for j in 0..k {
                    data[i * k + j] += a * other.get(p, j);
                }
            }
        }
        TransitionMatrix { k, data }
    }

    pub fn max_abs_diff(&self, other: &TransitionMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPair {
    pub x: TransitionMatrix,
    pub e: TransitionMatrix,
}

pub fn step_transition(
    sched: &NoiseSchedule,
    t: usize,
    m: &Marginals,
) -> Result<TransitionPair, DiffusionError> {
    sched.check_step(t)?;
    let keep = 1.0 - sched.beta(t);
    Ok(TransitionPair {
        x: TransitionMatrix::marginal(keep, &m.x),
        e: TransitionMatrix::marginal(keep, &m.e),
    })
}

pub fn cumulative_transition(
    sched: &NoiseSchedule,
    t: usize,
    m: &Marginals,
) -> Result<TransitionPair, DiffusionError> {
    sched.check_step(t)?;
    Ok(cumulative_unchecked(sched, t, m))
}

/// Also defined at `t = 0`, where it is the identity.
fn cumulative_unchecked(sched: &NoiseSchedule, t: usize, m: &Marginals) -> TransitionPair {
    let keep = sched.alpha_bar(t);
    TransitionPair {
        x: TransitionMatrix::marginal(keep, &m.x),
        e: TransitionMatrix::marginal(keep, &m.e),
    }
}

/// Draws an index from a probability vector by inverse CDF.
pub fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let total: f64 = p.iter().sum();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > 0.0 {
            acc += v / total;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

fn check_space(g: &MolGraph, m: &Marginals) -> Result<(), DiffusionError> {
    if g.atom_types() != m.f() || g.bond_types() != m.b() {
        return Err(DiffusionError::Space {
            f: g.atom_types(),
            b: g.bond_types(),
            mf: m.f(),
            mb: m.b(),
        });
    }
    Ok(())
}

/// Samples `G_t ~ q(G_t | G_0)`: each node from its row of `Qbar_X`, each
/// unordered edge once from its row of `Qbar_E`, mirrored.
pub fn forward_sample<R: Rng + ?Sized>(
    g0: &MolGraph,
    t: usize,
    sched: &NoiseSchedule,
    m: &Marginals,
    rng: &mut R,
) -> Result<MolGraph, DiffusionError> {
    sched.check_step(t)?;
    check_space(g0, m)?;
    let q = cumulative_unchecked(sched, t, m);
    let n = g0.n();
    let atoms = g0
        .atoms()
        .iter()
        .map(|&a| sample_categorical(q.x.row(a), rng))
        .collect();
    let mut bonds = vec![NO_BOND; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            bonds[i * n + j] = sample_categorical(q.e.row(g0.bond(i, j)), rng);
        }
    }
    Ok(MolGraph::from_upper(m.f(), m.b(), atoms, bonds))
}

/// `q(x_{t-1} | x_t, x_0)` from explicit matrices:
/// normalized `Q_t[:, x_t] * Qbar_{t-1}[x_0, :]`. `None` when the
/// normalizer vanishes.
pub fn posterior_from(
    step: &TransitionMatrix,
    cumulative_prev: &TransitionMatrix,
    xt: usize,
    x0: usize,
) -> Option<Vec<f64>> {
    let k = step.dim();
    let mut p: Vec<f64> = (0..k)
        .map(|x| step.get(x, xt) * cumulative_prev.get(x0, x))
        .collect();
    let z: f64 = p.iter().sum();
    if !(z > 0.0) {
        return None;
    }
    for v in &mut p {
        *v /= z;
    }
    Some(p)
}

/// Exact posterior over the previous class in one categorical space whose
/// marginal is `marginal` (pass `m.x` for nodes, `m.e` for edges).
pub fn posterior(
    xt: usize,
    x0: usize,
    t: usize,
    sched: &NoiseSchedule,
    marginal: &[f64],
) -> Result<Vec<f64>, DiffusionError> {
    if t < 2 || t > sched.steps() {
        return Err(DiffusionError::Step {
            t,
            max: sched.steps(),
        });
    }
    let step = TransitionMatrix::marginal(1.0 - sched.beta(t), marginal);
    let prev = TransitionMatrix::marginal(sched.alpha_bar(t - 1), marginal);
    posterior_from(&step, &prev, xt, x0).ok_or(DiffusionError::Unreachable { xt, x0, t })
}

/// Transition matrices needed for one reverse step from `t` to `t - 1`.
#[derive(Debug, Clone)]
pub struct ReverseStep {
    pub step: TransitionPair,
    pub cumulative_prev: TransitionPair,
}

impl ReverseStep {
    /// Valid for `1 <= t <= T`; at `t = 1` the previous cumulative matrix is
    /// the identity, so the posterior collapses onto `x_0`.
    pub fn new(sched: &NoiseSchedule, t: usize, m: &Marginals) -> Result<Self, DiffusionError> {
        let step = step_transition(sched, t, m)?;
        Ok(ReverseStep {
            step,
            cumulative_prev: cumulative_unchecked(sched, t - 1, m),
        })
    }
}

/// Draws a graph with `n` nodes from the limit distribution: nodes i.i.d.
/// from `m.x`, unordered edges i.i.d. from `m.e`, mirrored.
pub fn limit_sample<R: Rng + ?Sized>(n: usize, m: &Marginals, rng: &mut R) -> MolGraph {
    let atoms = (0..n).map(|_| sample_categorical(&m.x, rng)).collect();
    let mut bonds = vec![NO_BOND; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            bonds[i * n + j] = sample_categorical(&m.e, rng);
        }
    }
    MolGraph::from_upper(m.f(), m.b(), atoms, bonds)
}
