use crate::config::RunConfig;
use crate::Failure;
use anyhow::{anyhow, Context};
use dualgen::condition::{kmer_encode, load_embeddings, ConditionContext, ProteinEmbedding, Strategy};
use dualgen::denoiser::{DenoiserConfig, DenoiserError};
use dualgen::diffusion::cosine_schedule;
use dualgen::ingest::{build_triples, load_dataset, write_triples, TrainingTriple};
use dualgen::metrics::report_entries;
use dualgen::molgraph::{canonical_form, AtomVocab, MolGraph};
use dualgen::sampler::{generate, write_generated, SampleError};
use dualgen::smiles::{parse_with, smiles_lines, ParseOptions};
use dualgen::trainer::{train, Checkpoint, TrainError, TrainingSet};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

pub struct TrainArgs {
    pub data: PathBuf,
    pub fasta: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub kmer: bool,
    pub strategy: Strategy,
    pub config: PathBuf,
    pub out: PathBuf,
}

fn read_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::data)?;
    serde_json::from_str(&text)
        .with_context(|| format!("config {}", path.display()))
        .map_err(Failure::usage)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::data)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::NonFinite { .. }
        | TrainError::Step {
            source: DenoiserError::NonFinite(_),
            ..
        } => Failure::numeric(e.into()),
        TrainError::Config(_) | TrainError::Denoiser(DenoiserError::Config(_)) => {
            Failure::usage(e.into())
        }
        _ => Failure::data(e.into()),
    }
}

/// Triples from the raw records and sequences, logging the filter counts.
fn ingest(
    data: &Path,
    fasta: &Path,
    cfg: &RunConfig,
    vocab: &AtomVocab,
) -> Result<(Vec<TrainingTriple>, BTreeMap<String, dualgen::condition::ProteinSequence>), Failure> {
    let (records, sequences, load) = load_dataset(data, fasta).map_err(|e| Failure::data(e.into()))?;
    log::info!(
        "{} records ({} malformed rows skipped), {} sequences",
        load.records,
        load.skipped_rows,
        load.sequences
    );
    let (triples, report) = build_triples(&records, &sequences, vocab, cfg.pairing());
    log::info!("pairing: {}", serde_json::to_string(&report).expect("report serializes"));
    Ok((triples, sequences))
}

pub fn train_cmd(args: TrainArgs) -> Result<(), Failure> {
    let cfg = read_config(&args.config)?;
    let vocab = cfg.vocab().map_err(Failure::usage)?;
    let (triples, sequences) = ingest(&args.data, &args.fasta, &cfg, &vocab)?;
    if triples.is_empty() {
        return Err(Failure::data(anyhow!("no dual-target training triples in {}", args.data.display())));
    }
    let used: BTreeSet<&str> = triples
        .iter()
        .flat_map(|t| [t.protein_a.as_str(), t.protein_b.as_str()])
        .collect();
    let embeddings: BTreeMap<String, ProteinEmbedding> = match (&args.embeddings, args.kmer) {
        (Some(path), false) => load_embeddings(path)
            .with_context(|| format!("embeddings {}", path.display()))
            .map_err(Failure::data)?,
        (None, true) => used
            .iter()
            .map(|id| {
                let e = kmer_encode(&sequences[*id], cfg.kmer_dim, cfg.kmer_k)?;
                Ok((id.to_string(), e))
            })
            .collect::<Result<_, dualgen::condition::ConditionError>>()
            .map_err(|e| Failure::usage(e.into()))?,
        _ => return Err(Failure::usage(anyhow!("pass exactly one of --embeddings or --kmer"))),
    };
    let protein_dim = match used.iter().find_map(|id| embeddings.get(*id)) {
        Some(e) => e.dim(),
        None => return Err(Failure::data(anyhow!("no embedding for any training protein"))),
    };
    let model = DenoiserConfig {
        d: cfg.d,
        heads: cfg.heads,
        fuse_layers: cfg.fuse_layers,
        gt_layers: cfg.gt_layers,
        f: vocab.len(),
        b: dualgen::molgraph::DEFAULT_BOND_TYPES,
        steps: cfg.diffusion_steps,
        strategy: args.strategy,
        protein_dim,
    };
    model.validate().map_err(|e| Failure::usage(e.into()))?;
    let set = TrainingSet { triples, embeddings };
    let mut periodic: Vec<PathBuf> = Vec::new();
    let mut periodic_err = None;
    let outcome = train(&set, &model, &cfg.train(), &vocab, cfg.cosine_offset, |c| {
        let path = with_suffix(&args.out, &format!(".step{}", c.step()));
        match c.save(&path) {
            Ok(()) => periodic.push(path),
            Err(e) => periodic_err = Some(e),
        }
    })
    .map_err(train_failure)?;
    if let Some(e) = periodic_err {
        return Err(Failure::data(e.into()));
    }
    outcome.checkpoint.save(&args.out).map_err(|e| Failure::data(e.into()))?;
    let keys: BTreeSet<String> = set
        .triples
        .iter()
        .map(|t| canonical_form(&t.graph))
        .collect();
    let mut text = String::new();
    for k in &keys {
        text.push_str(k);
        text.push('\n');
    }
    let keys_path = with_suffix(&args.out, ".train_keys");
    write(&keys_path, text)?;
    let first = outcome.losses.first().copied().unwrap_or(f64::NAN);
    let last = outcome.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} steps on {} triples ({} skipped); loss {first:.4} -> {last:.4}",
        outcome.losses.len(),
        set.triples.len() - outcome.skipped,
        outcome.skipped
    );
    println!("checkpoint: {}", args.out.display());
    println!("training keys: {}", keys_path.display());
    for p in periodic {
        println!("intermediate checkpoint: {}", p.display());
    }
    Ok(())
}

pub fn ingest_cmd(data: &Path, fasta: &Path, config: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cfg = match config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    let vocab = cfg.vocab().map_err(Failure::usage)?;
    let (triples, _) = ingest(data, fasta, &cfg, &vocab)?;
    let text = write_triples(&triples, &vocab).map_err(|e| Failure::data(e.into()))?;
    write(out, text)?;
    println!("{} triples written to {}", triples.len(), out.display());
    Ok(())
}

pub struct SampleArgs {
    pub ckpt: PathBuf,
    pub protein_a: Option<String>,
    pub protein_b: Option<String>,
    pub unconditional: bool,
    pub embeddings: Option<PathBuf>,
    pub count: usize,
    pub seed: u64,
    pub out: PathBuf,
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path)
        .with_context(|| format!("checkpoint {}", path.display()))
        .map_err(Failure::data)
}

pub fn sample_cmd(args: SampleArgs) -> Result<(), Failure> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let ctx = if args.unconditional || ckpt.model.strategy == Strategy::Null {
        ConditionContext::Null
    } else {
        let (Some(a), Some(b)) = (&args.protein_a, &args.protein_b) else {
            return Err(Failure::usage(anyhow!(
                "--protein-a and --protein-b are required unless --unconditional is set"
            )));
        };
        let extra = match &args.embeddings {
            Some(p) => load_embeddings(p)
                .with_context(|| format!("embeddings {}", p.display()))
                .map_err(Failure::data)?,
            None => BTreeMap::new(),
        };
        let get = |id: &str| {
            ckpt.proteins.get(id).or_else(|| extra.get(id)).ok_or_else(|| {
                Failure::data(anyhow!(
                    "protein {id:?} is neither in the checkpoint nor in --embeddings"
                ))
            })
        };
        dualgen::condition::pair_context(get(a)?, get(b)?, ckpt.model.strategy)
            .map_err(|e| Failure::data(e.into()))?
    };
    let graphs = generate(&ckpt, &ctx, args.count, args.seed).map_err(|e| match e {
        SampleError::Denoiser(DenoiserError::NonFinite(_)) => Failure::numeric(e.into()),
        _ => Failure::data(e.into()),
    })?;
    let text = write_generated(&graphs, &ckpt.vocab);
    write(&args.out, &text)?;
    let invalid = text.lines().filter(|l| l.starts_with("INVALID\t")).count();
    println!(
        "generated {} molecules ({} invalid) -> {}",
        graphs.len(),
        invalid,
        args.out.display()
    );
    Ok(())
}

/// Reads a generated file back; `INVALID` lines and unreadable SMILES
/// become `None`.
fn read_generated(path: &Path, vocab: &AtomVocab) -> Result<Vec<Option<MolGraph>>, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::data)?;
    let opts = ParseOptions { allow_fragments: true };
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with("INVALID") {
            out.push(None);
            continue;
        }
        out.push(parse_with(line.trim(), vocab, opts).ok());
    }
    Ok(out)
}

pub fn eval_cmd(generated: &Path, train_keys: &Path, ckpt: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let vocab = match ckpt {
        Some(p) => load_checkpoint(p)?.vocab,
        None => AtomVocab::default(),
    };
    let entries = read_generated(generated, &vocab)?;
    let keys_text = fs::read_to_string(train_keys)
        .with_context(|| format!("reading {}", train_keys.display()))
        .map_err(Failure::data)?;
    let keys: BTreeSet<String> = smiles_lines(&keys_text).into_iter().map(|(_, k)| k).collect();
    let report = report_entries(&entries, &keys, &vocab).map_err(|e| Failure::data(e.into()))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if out == Path::new("-") {
        println!("{json}");
    } else {
        write(out, json + "\n")?;
        println!(
            "validity {:.4}  uniqueness {:.4}  novelty {:.4}  diversity {}",
            report.validity,
            report.uniqueness,
            report.novelty,
            report.diversity.map_or("n/a".to_string(), |d| format!("{d:.4}"))
        );
    }
    Ok(())
}

pub fn inspect_cmd(path: &Path) -> Result<(), Failure> {
    let ckpt = load_checkpoint(path)?;
    let show = |v: &serde_json::Value| serde_json::to_string_pretty(v).expect("json");
    println!("model: {}", show(&serde_json::to_value(&ckpt.model).expect("json")));
    println!("train: {}", show(&serde_json::to_value(&ckpt.train).expect("json")));
    let symbols: Vec<&str> = ckpt.vocab.entries().iter().map(|e| e.symbol.as_str()).collect();
    println!("vocab: {}", symbols.join(" "));
    println!("cosine offset: {}", ckpt.cosine_offset);
    println!("step: {}", ckpt.step());
    println!("parameters: {}", ckpt.params.count());
    println!("atom marginals:");
    for (s, p) in symbols.iter().zip(&ckpt.marginals.x) {
        println!("  {s:<3} {p:.6}");
    }
    println!("bond marginals:");
    for (k, p) in ckpt.marginals.e.iter().enumerate() {
        println!("  {k:<3} {p:.6}");
    }
    println!("node-count histogram:");
    for (n, p) in ckpt.histogram.probabilities() {
        println!("  {n:<3} {p:.6}");
    }
    let ids: Vec<&str> = ckpt.proteins.keys().map(String::as_str).collect();
    println!("proteins: {}", ids.join(" "));
    Ok(())
}

pub fn schedule_cmd(steps: usize, csv: &Path) -> Result<(), Failure> {
    let sched = cosine_schedule(steps, dualgen::diffusion::DEFAULT_COSINE_OFFSET)
        .map_err(|e| Failure::usage(e.into()))?;
    let mut text = String::from("t,beta,alpha_bar\n");
    for t in 1..=steps {
        text.push_str(&format!("{t},{},{}\n", sched.beta(t), sched.alpha_bar(t)));
    }
    write(csv, text)?;
    println!("{steps} rows written to {}", csv.display());
    Ok(())
}
