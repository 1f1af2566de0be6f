//! Training: the cross-entropy objective, adaptive-moment updates, the
//! seeded training loop, and checkpoints.
//!
//! Every random draw comes from a stream derived from the run seed and the
//! step (and item) index, and per-item gradients are summed in batch order,
//! so a run is bit-reproducible regardless of thread scheduling.

mod checkpoint;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::condition::{pair_context, ConditionContext, ConditionError, ProteinEmbedding, Strategy};
use crate::denoiser::{backward, init_params, DenoiserConfig, DenoiserError, DenoiserParams, Gradients, PredictedDistributions};
use crate::diffusion::{forward_sample, DiffusionError, Marginals, NoiseSchedule};
use crate::ingest::TrainingTriple;
use crate::molgraph::{AtomVocab, MolGraph};
use crate::sampler::NodeCountHistogram;
use crate::seed::{derive_seed, stream};
use crate::tensor::round_to_f32;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_LAMBDA: f64 = 5.0;
pub const DEFAULT_LR: f64 = 3e-4;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_STEP: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Probability of replacing an item's context with the null context.
    pub dropout_p: f64,
    pub seed: u64,
    /// Emit an intermediate checkpoint every this many steps (0 = never).
    pub checkpoint_every: usize,
    /// Use uniform marginals instead of data frequencies.
    pub uniform_marginals: bool,
    /// Molecules with more heavy atoms are skipped.
    pub size_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: DEFAULT_LAMBDA,
            lr: DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            steps: 1000,
            dropout_p: crate::condition::DEFAULT_DROPOUT,
            seed: 0,
            checkpoint_every: 0,
            uniform_marginals: false,
            size_cap: crate::ingest::DEFAULT_SIZE_CAP,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("lr must be a finite non-negative number");
        }
        for (name, p) in [("beta1", self.beta1), ("beta2", self.beta2), ("dropout_p", self.dropout_p)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty{0}")]
    Empty(String),
    #[error("no embedding for protein {0:?}")]
    MissingProtein(String),
    #[error("step {step}: {source}")]
    Step { step: usize, source: DenoiserError },
    #[error("step {step}: non-finite loss ({detail})")]
    NonFinite { step: usize, detail: String },
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Gradients,
    pub v: Gradients,
}

impl AdamState {
    pub fn new(params: &DenoiserParams) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// Bias-corrected update; parameters and moments are rounded to `f32`
    /// afterwards.
    pub fn update(&mut self, params: &mut DenoiserParams, grads: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for (name, p) in params.tensors.iter_mut() {
            let g = &grads[name];
            let m = self.m.get_mut(name).expect("moment for every tensor");
            let v = self.v.get_mut(name).expect("moment for every tensor");
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * gk;
                v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * gk * gk;
                let mhat = m.data[k] / c1;
                let vhat = v.data[k] / c2;
                p.data[k] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
            round_to_f32(&mut p.data);
            round_to_f32(&mut m.data);
            round_to_f32(&mut v.data);
        }
    }
}

/// `sum_i CE(x_i, pX_i) + lambda * sum_{i<j} 2 CE(e_ij, pE_ij)` with natural
/// logs and probabilities floored at 1e-12.
pub fn loss(pred: &PredictedDistributions, g0: &MolGraph, lambda: f64) -> f64 {
    let n = g0.n();
    let ce = |p: f64| -p.max(1e-12).ln();
    let mut total = 0.0;
    for i in 0..n {
        total += ce(pred.node(i)[g0.atom(i)]);
    }
    if lambda != 0.0 {
        for i in 0..n {
            for j in (i + 1)..n {
                total += lambda * 2.0 * ce(pred.edge(i, j)[g0.bond(i, j)]);
            }
        }
    }
    total
}

/// Molecules plus the embeddings their protein ids refer to.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub triples: Vec<TrainingTriple>,
    pub embeddings: BTreeMap<String, ProteinEmbedding>,
}

/// Shared read-only inputs of a training step.
pub struct StepInputs<'a> {
    pub sched: &'a NoiseSchedule,
    pub marginals: &'a Marginals,
    pub embeddings: &'a BTreeMap<String, ProteinEmbedding>,
    pub strategy: Strategy,
}

/// Context for one item: the null context with probability `dropout_p`
/// (always for a null-strategy model), else the fused protein pair.
pub fn item_context<R: Rng + ?Sized>(
    item: &TrainingTriple,
    inputs: &StepInputs<'_>,
    dropout_p: f64,
    rng: &mut R,
) -> Result<ConditionContext, TrainError> {
    let drop = rng.gen::<f64>() < dropout_p;
    if drop || inputs.strategy == Strategy::Null {
        return Ok(ConditionContext::Null);
    }
    let get = |id: &str| {
        inputs
            .embeddings
            .get(id)
            .ok_or_else(|| TrainError::MissingProtein(id.to_string()))
    };
    Ok(pair_context(get(&item.protein_a)?, get(&item.protein_b)?, inputs.strategy)?)
}

fn item_loss(
    params: &DenoiserParams,
    item: &TrainingTriple,
    inputs: &StepInputs<'_>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(f64, Gradients), TrainError> {
    let mut rng = stream(seed, &[]);
    let t = rng.gen_range(1..=inputs.sched.steps());
    let g_t = forward_sample(&item.graph, t, inputs.sched, inputs.marginals, &mut rng)?;
    let ctx = item_context(item, inputs, cfg.dropout_p, &mut rng)?;
    Ok(backward(params, &g_t, &ctx, t, &item.graph, cfg.lambda)?)
}

/// One optimizer step on `batch`. Each item draws its own timestep, noisy
/// graph and context-dropout decision from a seed taken from `rng` in batch
/// order. Returns the mean item loss; gradients are averaged likewise.
pub fn train_step<R: RngCore + ?Sized>(
    params: &mut DenoiserParams,
    batch: &[&TrainingTriple],
    inputs: &StepInputs<'_>,
    opt: &mut AdamState,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Empty(" (batch)".into()));
    }
    let step = opt.step as usize + 1;
    let seeds: Vec<u64> = batch.iter().map(|_| rng.next_u64()).collect();
    let frozen: &DenoiserParams = params;
    let results: Vec<Result<(f64, Gradients), TrainError>> = batch
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(item, &seed)| item_loss(frozen, item, inputs, cfg, seed))
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for r in results {
        let (l, g) = r.map_err(|e| match e {
            TrainError::Denoiser(DenoiserError::NonFinite(detail)) => {
                TrainError::NonFinite { step, detail }
            }
            TrainError::Denoiser(source) => TrainError::Step { step, source },
            other => other,
        })?;
        total += l;
        for (name, acc) in grads.iter_mut() {
            for (a, b) in acc.data.iter_mut().zip(&g[name].data) {
                *a += b * scale;
            }
        }
    }
    let mean = total * scale;
    if !mean.is_finite() {
        return Err(TrainError::NonFinite {
            step,
            detail: "loss".into(),
        });
    }
    opt.update(params, &grads, cfg);
    Ok(mean)
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
    /// Triples dropped for exceeding the size cap or the class spaces.
    pub skipped: usize,
}

/// Runs `cfg.steps` optimizer steps over `data`, reshuffling (seeded) at
/// every pass. `on_checkpoint` receives intermediate checkpoints every
/// `cfg.checkpoint_every` steps.
pub fn train(
    data: &TrainingSet,
    model: &DenoiserConfig,
    cfg: &TrainConfig,
    vocab: &AtomVocab,
    cosine_offset: f64,
    mut on_checkpoint: impl FnMut(&Checkpoint),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    model.validate()?;
    if data.triples.is_empty() {
        return Err(TrainError::Empty(String::new()));
    }
    let sched = crate::diffusion::cosine_schedule(model.steps, cosine_offset)?;
    let kept: Vec<&TrainingTriple> = data
        .triples
        .iter()
        .filter(|t| {
            t.graph.n() <= cfg.size_cap
                && t.graph.atom_types() == model.f
                && t.graph.bond_types() == model.b
        })
        .collect();
    let skipped = data.triples.len() - kept.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} molecules over the size cap or outside the vocabulary");
    }
    if kept.is_empty() {
        return Err(TrainError::Empty(" after size filtering".into()));
    }

    let mut proteins = BTreeMap::new();
    if model.strategy != Strategy::Null {
        for t in &kept {
            for id in [&t.protein_a, &t.protein_b] {
                if !proteins.contains_key(id) {
                    let mut e = data
                        .embeddings
                        .get(id)
                        .ok_or_else(|| TrainError::MissingProtein(id.clone()))?
                        .clone();
                    if e.dim() != model.protein_dim {
                        return Err(DenoiserError::ProteinDim {
                            expected: model.protein_dim,
                            got: e.dim(),
                        }
                        .into());
                    }
                    round_to_f32(&mut e.cls);
                    round_to_f32(&mut e.tokens.data);
                    proteins.insert(id.clone(), e);
                }
            }
        }
    }

    let graphs: Vec<&MolGraph> = kept.iter().map(|t| &t.graph).collect();
    let marginals = if cfg.uniform_marginals {
        Marginals::uniform(model.f, model.b)
    } else {
        Marginals::from_graphs(graphs.iter().copied(), model.f, model.b)
    };
    let histogram = NodeCountHistogram::from_sizes(graphs.iter().map(|g| g.n()));

    let mut params = init_params(model, &mut stream(cfg.seed, &[STREAM_INIT]))?;
    let mut opt = AdamState::new(&params);
    let inputs = StepInputs {
        sched: &sched,
        marginals: &marginals,
        embeddings: &proteins,
        strategy: model.strategy,
    };

    let snapshot = |params: &DenoiserParams, opt: &AdamState| Checkpoint {
        model: model.clone(),
        train: cfg.clone(),
        vocab: vocab.clone(),
        cosine_offset,
        params: params.clone(),
        adam: opt.clone(),
        marginals: marginals.clone(),
        histogram: histogram.clone(),
        proteins: proteins.clone(),
    };

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order = shuffled(kept.len(), derive_seed(cfg.seed, &[STREAM_SHUFFLE, epoch]));
                epoch += 1;
                cursor = 0;
            }
            batch.push(kept[order[cursor]]);
            cursor += 1;
        }
        let mut rng = stream(cfg.seed, &[STREAM_STEP, step as u64]);
        let l = train_step(&mut params, &batch, &inputs, &mut opt, cfg, &mut rng)?;
        log::debug!("step {step} loss {l:.6}");
        losses.push(l);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step < cfg.steps {
            on_checkpoint(&snapshot(&params, &opt));
        }
    }
    Ok(TrainOutcome {
        checkpoint: snapshot(&params, &opt),
        losses,
        skipped,
    })
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut stream(seed, &[]));
    v
}

/// Mean loss over `items` under fixed noise: each graph is evaluated with
/// its context at `draws` (timestep, noisy graph) pairs drawn from a stream
/// derived from `seed` and the item index.
pub fn evaluate_loss(
    params: &DenoiserParams,
    items: &[(&MolGraph, ConditionContext)],
    sched: &NoiseSchedule,
    marginals: &Marginals,
    lambda: f64,
    draws: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let per_item: Vec<Result<f64, TrainError>> = items
        .par_iter()
        .enumerate()
        .map(|(k, (g, ctx))| {
            let mut rng = stream(seed, &[k as u64]);
            let mut s = 0.0;
            for _ in 0..draws {
                let t = rng.gen_range(1..=sched.steps());
                let g_t = forward_sample(g, t, sched, marginals, &mut rng)?;
                s += crate::denoiser::loss_value(params, &g_t, ctx, t, g, lambda)?;
            }
            Ok(s)
        })
        .collect();
    let mut total = 0.0;
    for r in per_item {
        total += r?;
    }
    Ok(total / (items.len() * draws).max(1) as f64)
}
