//! Run configuration read from a JSON file.

use dualgen::condition::{DEFAULT_DROPOUT, DEFAULT_KMER_DIM, DEFAULT_KMER_K};
use dualgen::diffusion::DEFAULT_COSINE_OFFSET;
use dualgen::ingest::{PairOptions, DEFAULT_PAIR_CAP, DEFAULT_SIZE_CAP};
use dualgen::molgraph::{AtomVocab, VocabEntry};
use dualgen::trainer::TrainConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub d: usize,
    pub heads: usize,
    pub fuse_layers: usize,
    pub gt_layers: usize,
    #[serde(rename = "T")]
    pub diffusion_steps: usize,
    pub lambda: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub dropout_p: f64,
    pub seed: u64,
    pub size_cap: usize,
    pub pair_cap: usize,
    pub vocab: Option<Vec<VocabEntry>>,
    pub kmer_dim: usize,
    pub kmer_k: usize,
    pub checkpoint_every: usize,
    pub uniform_marginals: bool,
    pub cosine_offset: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            d: 32,
            heads: 4,
            fuse_layers: 1,
            gt_layers: 2,
            diffusion_steps: 500,
            lambda: train.lambda,
            lr: train.lr,
            beta1: train.beta1,
            beta2: train.beta2,
            eps: train.eps,
            batch_size: train.batch_size,
            steps: train.steps,
            dropout_p: DEFAULT_DROPOUT,
            seed: 0,
            size_cap: DEFAULT_SIZE_CAP,
            pair_cap: DEFAULT_PAIR_CAP,
            vocab: None,
            kmer_dim: DEFAULT_KMER_DIM,
            kmer_k: DEFAULT_KMER_K,
            checkpoint_every: 0,
            uniform_marginals: false,
            cosine_offset: DEFAULT_COSINE_OFFSET,
        }
    }
}

impl RunConfig {
    pub fn vocab(&self) -> anyhow::Result<AtomVocab> {
        match &self.vocab {
            Some(entries) => Ok(AtomVocab::new(entries.clone())?),
            None => Ok(AtomVocab::default()),
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            batch_size: self.batch_size,
            steps: self.steps,
            dropout_p: self.dropout_p,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            uniform_marginals: self.uniform_marginals,
            size_cap: self.size_cap,
        }
    }

    pub fn pairing(&self) -> PairOptions {
        PairOptions {
            pair_cap: self.pair_cap,
            size_cap: self.size_cap,
        }
    }
}
