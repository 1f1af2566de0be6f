//! `dualgen`: train, sample, evaluate and inspect dual-target molecule
//! generators.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::{SampleArgs, TrainArgs};
use dualgen::condition::Strategy;
use std::path::PathBuf;
use std::process::ExitCode;

pub struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    pub fn usage(err: anyhow::Error) -> Self {
        Failure { code: 1, err }
    }

    pub fn data(err: anyhow::Error) -> Self {
        Failure { code: 2, err }
    }

    pub fn numeric(err: anyhow::Error) -> Self {
        Failure { code: 3, err }
    }
}

#[derive(Parser)]
#[command(name = "dualgen", version, about = "Dual-target conditional molecule generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StrategyArg {
    Ca,
    Cat,
    Vn,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Ca => Strategy::Ca,
            StrategyArg::Cat => Strategy::Cat,
            StrategyArg::Vn => Strategy::Vn,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a denoiser from a bioactivity table and protein sequences.
    Train {
        /// Tab-separated records with columns smiles, protein_id, measure, value_nM.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fasta: PathBuf,
        /// JSON-lines protein embeddings ({"id", "cls", "tokens"}).
        #[arg(long, conflicts_with = "kmer", required_unless_present = "kmer")]
        embeddings: Option<PathBuf>,
        /// Embed proteins with the built-in k-mer encoder instead.
        #[arg(long)]
        kmer: bool,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate molecules from a checkpoint.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, required_unless_present = "unconditional")]
        protein_a: Option<String>,
        #[arg(long, required_unless_present = "unconditional")]
        protein_b: Option<String>,
        /// Use the null context.
        #[arg(long)]
        unconditional: bool,
        /// Extra embeddings for proteins not stored in the checkpoint.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute validity, uniqueness, novelty and diversity of generated molecules.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        /// Canonical forms of the training molecules, one per line.
        #[arg(long)]
        train_keys: PathBuf,
        /// Take the atom vocabulary from this checkpoint.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Report path, or - for standard output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a checkpoint's configuration and statistics.
    Inspect {
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Write the noise schedule as CSV.
    Schedule {
        #[arg(long = "T")]
        steps: usize,
        #[arg(long)]
        plot_csv: PathBuf,
    },
    /// Run the filtering and pairing rules and write the training triples.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fasta: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train {
            data,
            fasta,
            embeddings,
            kmer,
            strategy,
            config,
            out,
        } => commands::train_cmd(TrainArgs {
            data,
            fasta,
            embeddings,
            kmer,
            strategy: strategy.into(),
            config,
            out,
        }),
        Command::Sample {
            ckpt,
            protein_a,
            protein_b,
            unconditional,
            embeddings,
            count,
            seed,
            out,
        } => commands::sample_cmd(SampleArgs {
            ckpt,
            protein_a,
            protein_b,
            unconditional,
            embeddings,
            count,
            seed,
            out,
        }),
        Command::Eval {
            generated,
            train_keys,
            ckpt,
            out,
        } => commands::eval_cmd(&generated, &train_keys, ckpt.as_deref(), &out),
        Command::Inspect { ckpt } => commands::inspect_cmd(&ckpt),
        Command::Schedule { steps, plot_csv } => commands::schedule_cmd(steps, &plot_csv),
        Command::Ingest {
            data,
            fasta,
            config,
            out,
        } => commands::ingest_cmd(&data, &fasta, config.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
