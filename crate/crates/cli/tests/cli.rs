use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dualgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualgen"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const RECORDS: &str = "smiles\tprotein_id\tmeasure\tvalue_nM
CCO\tP1\tIC50\t10
CCO\tP2\tKi\t50
CC(=O)O\tP1\tIC50\t20
CC(=O)O\tP3\tIC50\t30
c1ccccc1\tP2\tKd\t5
c1ccccc1\tP3\tKd\t5
c1ccccc1\tP1\tKd\t5
CCN\tP1\tIC50\tabc
";

const FASTA: &str = ">P1 kinase
MKTAYIAKQRQISFVKSHFSRQ
>P2
GSHMLEDPVWACDEFGHIKLMN
>P3
ACDEFGHIKLMNPQRSTVWY
";

const CONFIG: &str = r#"{"d": 8, "heads": 2, "fuse_layers": 1, "gt_layers": 1, "T": 6,
 "lambda": 5.0, "lr": 0.003, "batch_size": 4, "steps": 3, "dropout_p": 0.1,
 "seed": 11, "size_cap": 38, "kmer_dim": 8, "checkpoint_every": 2}"#;

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        fs::write(root.join("records.tsv"), RECORDS).unwrap();
        fs::write(root.join("proteins.fa"), FASTA).unwrap();
        fs::write(root.join("config.json"), CONFIG).unwrap();
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn train(&self, strategy: &str, out: &str) -> Output {
        dualgen(&[
            "train",
            "--data",
            s(&self.path("records.tsv")),
            "--fasta",
            s(&self.path("proteins.fa")),
            "--kmer",
            "--strategy",
            strategy,
            "--config",
            s(&self.path("config.json")),
            "--out",
            s(&self.path(out)),
        ])
    }
}

#[test]
fn schedule_writes_one_row_per_step() {
    let f = Fixture::new();
    let csv = f.path("sched.csv");
    let out = dualgen(&["schedule", "--T", "50", "--plot-csv", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,beta,alpha_bar"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 50);
    assert_eq!(rows[0][0], 1.0);
    assert!(rows.windows(2).all(|w| w[1][2] < w[0][2]));
    assert!(rows.iter().all(|r| r[1] > 0.0 && r[1] <= 0.999));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&dualgen(&[])), 1);
    assert_eq!(code(&dualgen(&["schedule", "--T", "10"])), 1);
    assert_eq!(code(&dualgen(&["schedule", "--T", "0", "--plot-csv", "x.csv"])), 1);
    let f = Fixture::new();
    assert_eq!(code(&f.train("xyz", "m.ckpt")), 1);
    fs::write(f.path("config.json"), r#"{"d": 8, "unknown_field": 1}"#).unwrap();
    assert_eq!(code(&f.train("cat", "m.ckpt")), 1);
    assert_eq!(code(&dualgen(&["--help"])), 0);
}

#[test]
fn data_errors_exit_with_two() {
    let f = Fixture::new();
    assert_eq!(code(&dualgen(&["inspect", "--ckpt", s(&f.path("missing.ckpt"))])), 2);
    fs::write(f.path("junk.ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(code(&dualgen(&["inspect", "--ckpt", s(&f.path("junk.ckpt"))])), 2);
    fs::write(f.path("records.tsv"), "smiles\tprotein_id\n").unwrap();
    assert_eq!(code(&f.train("cat", "m.ckpt")), 2);
}

#[test]
fn diverging_training_exits_with_three() {
    let f = Fixture::new();
    fs::write(
        f.path("config.json"),
        r#"{"d": 8, "heads": 2, "gt_layers": 1, "T": 6, "lr": 1e300, "steps": 4, "batch_size": 2, "kmer_dim": 8}"#,
    )
    .unwrap();
    let out = f.train("cat", "m.ckpt");
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ingest_train_sample_eval_inspect() {
    let f = Fixture::new();
    let triples = f.path("triples.tsv");
    let out = dualgen(&[
        "ingest",
        "--data",
        s(&f.path("records.tsv")),
        "--fasta",
        s(&f.path("proteins.fa")),
        "--out",
        s(&triples),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    // ethanol on {P1, P2}, acetic acid on {P1, P3}, benzene on {P1, P2, P3}
    assert_eq!(fs::read_to_string(&triples).unwrap().lines().count(), 5);

    for strategy in ["ca", "cat", "vn"] {
        let ckpt = format!("{strategy}.ckpt");
        let out = f.train(strategy, &ckpt);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(f.path(&format!("{ckpt}.step2")).exists());
        let keys = fs::read_to_string(f.path(&format!("{ckpt}.train_keys"))).unwrap();
        assert_eq!(keys.lines().count(), 3);

        let smi = f.path(&format!("{strategy}.smi"));
        let out = dualgen(&[
            "sample",
            "--ckpt",
            s(&f.path(&ckpt)),
            "--protein-a",
            "P1",
            "--protein-b",
            "P3",
            "--count",
            "6",
            "--seed",
            "4",
            "--out",
            s(&smi),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let first = fs::read(&smi).unwrap();
        assert_eq!(String::from_utf8_lossy(&first).lines().count(), 6);
        let again = dualgen(&[
            "sample", "--ckpt", s(&f.path(&ckpt)), "--protein-a", "P1", "--protein-b", "P3",
            "--count", "6", "--seed", "4", "--out", s(&smi),
        ]);
        assert_eq!(code(&again), 0);
        assert_eq!(fs::read(&smi).unwrap(), first);

        let report = f.path(&format!("{strategy}.json"));
        let out = dualgen(&[
            "eval",
            "--generated",
            s(&smi),
            "--train-keys",
            s(&f.path(&format!("{ckpt}.train_keys"))),
            "--ckpt",
            s(&f.path(&ckpt)),
            "--out",
            s(&report),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(json["total"], 6);
        assert!(json["valid"].as_u64().unwrap() <= 6);
        assert_eq!(json["molecules"].as_array().unwrap().len(), 6);
    }

    let uncond = f.path("uncond.smi");
    let out = dualgen(&[
        "sample", "--ckpt", s(&f.path("cat.ckpt")), "--unconditional", "--count", "3", "--seed", "1",
        "--out", s(&uncond),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = dualgen(&[
        "sample", "--ckpt", s(&f.path("cat.ckpt")), "--protein-a", "P1", "--protein-b", "NOPE",
        "--count", "3", "--seed", "1", "--out", s(&uncond),
    ]);
    assert_eq!(code(&out), 2);
    let out = dualgen(&[
        "sample", "--ckpt", s(&f.path("cat.ckpt")), "--count", "3", "--seed", "1", "--out", s(&uncond),
    ]);
    assert_eq!(code(&out), 1);

    let out = dualgen(&["inspect", "--ckpt", s(&f.path("cat.ckpt"))]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in ["model:", "step: 3", "atom marginals:", "node-count histogram:", "proteins: P1 P2 P3"] {
        assert!(text.contains(needle), "missing {needle:?} in\n{text}");
    }
}

#[test]
fn eval_to_stdout_counts_invalid_lines() {
    let f = Fixture::new();
    fs::write(f.path("gen.smi"), "CCO\nINVALID\tn=2;atoms=F,F;bonds=0-1:2\nOCC\nC(\n").unwrap();
    fs::write(f.path("keys.txt"), "").unwrap();
    let out = dualgen(&[
        "eval",
        "--generated",
        s(&f.path("gen.smi")),
        "--train-keys",
        s(&f.path("keys.txt")),
        "--out",
        "-",
    ]);
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["total"], 4);
    assert_eq!(json["valid"], 2);
    assert_eq!(json["unique"], 1);
    assert_eq!(json["validity"], 0.5);
    assert_eq!(json["uniqueness"], 0.5);
    assert_eq!(json["novelty"], 1.0);
    assert_eq!(json["diversity"], 0.0);
}
