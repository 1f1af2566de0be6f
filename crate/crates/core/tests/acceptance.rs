//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line each.
//!
//! `ACCEPTANCE_ONLY=1,7,9` restricts the run to the listed criteria.
//! `ACCEPTANCE_STRICT=1` makes any failure exit non-zero.

use dualgen::condition::{kmer_encode, pair_context, ConditionContext, ProteinEmbedding, ProteinSequence, Strategy};
use dualgen::denoiser::{backward, init_params, loss_value, predict, DenoiserConfig, DenoiserParams};
use dualgen::diffusion::{
    cosine_schedule, cumulative_transition, posterior, step_transition, Marginals, NoiseSchedule, ReverseStep,
    TransitionMatrix,
};
use dualgen::ingest::{build_triples, parse_records, write_triples, PairOptions, TrainingTriple};
use dualgen::metrics::{diversity, novelty, report, uniqueness, validity_rate};
use dualgen::molgraph::{
    canonical_form, fingerprint, tanimoto, AtomVocab, Fingerprint, MolGraph, DEFAULT_BOND_TYPES, DEFAULT_NBITS,
    DEFAULT_RADIUS, DOUBLE, NO_BOND, TRIPLE,
};
use dualgen::sampler::{generate, mixture, write_generated};
use dualgen::tensor::Mat;
use dualgen::trainer::{evaluate_loss, train, Checkpoint, TrainConfig, TrainingSet};
use dualgen::{condition, smiles};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn read_data(name: &str) -> String {
    std::fs::read_to_string(data(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn random_probs(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Like `random_probs`, but one class gets no mass when `sparse` is set.
fn random_marginal(k: usize, sparse: bool, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut p = random_probs(k, rng);
    if sparse && k > 1 {
        p[rng.gen_range(0..k)] = 0.0;
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
    }
    p
}

type Dense = Vec<Vec<f64>>;

/// `Q_t = (1 - beta) I + beta 1 m^T`, written out entry by entry.
fn oracle_step(beta: f64, m: &[f64]) -> Dense {
    let k = m.len();
    (0..k)
        .map(|i| (0..k).map(|j| beta * m[j] + if i == j { 1.0 - beta } else { 0.0 }).collect())
        .collect()
}

fn identity(k: usize) -> Dense {
    (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let k = a.len();
    (0..k)
        .map(|i| (0..k).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

fn max_diff_dense(lib: &TransitionMatrix, oracle: &Dense) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in oracle.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((lib.get(i, j) - v).abs());
        }
    }
    worst
}

fn random_schedule(rng: &mut ChaCha8Rng) -> (NoiseSchedule, Vec<f64>) {
    let steps = rng.gen_range(1..=16);
    if rng.gen_bool(0.5) {
        let s = cosine_schedule(steps, 0.008).unwrap();
        let betas = (1..=steps).map(|t| s.beta(t)).collect();
        (s, betas)
    } else {
        let betas: Vec<f64> = (0..steps).map(|_| rng.gen_range(0.01..0.95)).collect();
        (NoiseSchedule::from_betas(betas.clone()).unwrap(), betas)
    }
}

/// `P(x_{t-1} = a | x_t, x_0)` by summing the probability of every forward
/// chain `x_0 -> x_1 -> ... -> x_t` that ends in `x_t`.
fn enumerated_posterior(qs: &[Dense], x0: usize, xt: usize) -> Vec<f64> {
    let k = qs[0].len();
    let t = qs.len();
    let mut prev = vec![0.0; k];
    for code in 0..k.pow(t as u32) {
        let mut c = code;
        let path: Vec<usize> = (0..t)
            .map(|_| {
                let s = c % k;
                c /= k;
                s
            })
            .collect();
        if path[t - 1] != xt {
            continue;
        }
        let mut p = 1.0;
        let mut from = x0;
        for (s, &to) in path.iter().enumerate() {
            p *= qs[s][from][to];
            from = to;
        }
        prev[path[t - 2]] += p;
    }
    let z: f64 = prev.iter().sum();
    prev.iter().map(|v| if z > 0.0 { v / z } else { 0.0 }).collect()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut ck, mut bayes, mut total) = (0.0f64, 0.0f64, 0.0f64);
    let mut cases = 0;
    for trial in 0..200 {
        let (sched, betas) = random_schedule(&mut rng);
        let f = rng.gen_range(1..=5);
        let b = rng.gen_range(1..=5);
        let m = Marginals::new(
            random_marginal(f, trial % 3 == 0, &mut rng),
            random_marginal(b, trial % 3 == 1, &mut rng),
        )
        .unwrap();
        for (marg, pick) in [(&m.x, 0), (&m.e, 1)] {
            let k = marg.len();
            let qs: Vec<Dense> = betas.iter().map(|&beta| oracle_step(beta, marg)).collect();
            let mut product = identity(k);
            for t in 1..=betas.len() {
                let step = step_transition(&sched, t, &m).unwrap();
                let step = if pick == 0 { step.x } else { step.e };
                ck = ck.max(max_diff_dense(&step, &qs[t - 1]));
                product = matmul(&product, &qs[t - 1]);
                let cum = cumulative_transition(&sched, t, &m).unwrap();
                let cum = if pick == 0 { cum.x } else { cum.e };
                ck = ck.max(max_diff_dense(&cum, &product));
            }
            for t in 2..=betas.len().min(6) {
                for x0 in 0..k {
                    let qbar_prev = (1..t).fold(identity(k), |acc, s| matmul(&acc, &qs[s - 1]));
                    let mut mixed = vec![0.0; k];
                    let qbar_t = matmul(&qbar_prev, &qs[t - 1]);
                    for xt in 0..k {
                        let reach = qbar_t[x0][xt];
                        match posterior(xt, x0, t, &sched, marg) {
                            Ok(p) => {
                                let want = enumerated_posterior(&qs[..t], x0, xt);
                                for (a, w) in p.iter().zip(&want) {
                                    bayes = bayes.max((a - w).abs());
                                }
                                for (acc, v) in mixed.iter_mut().zip(&p) {
                                    *acc += reach * v;
                                }
                                cases += 1;
                            }
                            Err(_) => ensure(reach == 0.0, || {
                                format!("posterior refused reachable x_t={xt} from x_0={x0} at t={t}")
                            })?,
                        }
                    }
                    for (a, w) in mixed.iter().zip(&qbar_prev[x0]) {
                        total = total.max((a - w).abs());
                    }
                }
            }
        }
    }
    ensure(ck < 1e-10, || format!("Chapman-Kolmogorov diff {ck:e}"))?;
    ensure(bayes < 1e-10, || format!("posterior vs enumeration diff {bayes:e}"))?;
    ensure(total < 1e-10, || format!("total probability diff {total:e}"))?;
    Ok(format!(
        "max diffs: product {ck:.1e}, posterior {bayes:.1e} over {cases} cases, total probability {total:.1e}"
    ))
}

/// Reverse-step distribution over `x_{t-1}` by enumerating forward chains
/// for every clean class, weighted by `p0` and restricted to classes that
/// can reach `x_t`.
fn enumerated_mixture(betas: &[f64], m: &[f64], xt: usize, p0: &[f64]) -> Vec<f64> {
    let k = m.len();
    let t = betas.len();
    let qs: Vec<Dense> = betas.iter().map(|&b| oracle_step(b, m)).collect();
    let mut out = vec![0.0; k];
    let mut weight = 0.0;
    for (x0, &w) in p0.iter().enumerate() {
        let mut prev = vec![0.0; k];
        for code in 0..k.pow(t as u32) {
            let mut c = code;
            let path: Vec<usize> = (0..t)
                .map(|_| {
                    let s = c % k;
                    c /= k;
                    s
                })
                .collect();
            if path[t - 1] != xt {
                continue;
            }
            let mut p = 1.0;
            let mut from = x0;
            for (s, &to) in path.iter().enumerate() {
                p *= qs[s][from][to];
                from = to;
            }
            prev[if t >= 2 { path[t - 2] } else { x0 }] += p;
        }
        let z: f64 = prev.iter().sum();
        if w > 0.0 && z > 0.0 {
            weight += w;
            for (o, p) in out.iter_mut().zip(&prev) {
                *o += w * p / z;
            }
        }
    }
    out.iter().map(|v| v / weight).collect()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut masked = 0usize;
    for trial in 0..100 {
        let steps = rng.gen_range(1..=6);
        let betas: Vec<f64> = (0..steps).map(|_| rng.gen_range(0.01..0.9)).collect();
        let sched = NoiseSchedule::from_betas(betas.clone()).unwrap();
        let m = Marginals::new(
            random_marginal(3, trial % 4 == 0, &mut rng),
            random_marginal(3, trial % 4 == 1, &mut rng),
        )
        .unwrap();
        let t = rng.gen_range(1..=steps);
        let rs = ReverseStep::new(&sched, t, &m).unwrap();
        for (marg, step, prev) in [
            (&m.x, &rs.step.x, &rs.cumulative_prev.x),
            (&m.e, &rs.step.e, &rs.cumulative_prev.e),
        ] {
            let p0 = random_probs(3, &mut rng);
            for xt in 0..3 {
                let reachable = (0..3).any(|x| {
                    let q = enumerated_posterior_reach(&betas[..t], marg, x, xt);
                    q > 0.0
                });
                if !reachable {
                    continue;
                }
                let got = mixture(step, prev, xt, &p0);
                let want = enumerated_mixture(&betas[..t], marg, xt, &p0);
                for (a, b) in got.iter().zip(&want) {
                    worst = worst.max((a - b).abs());
                    if *b == 0.0 {
                        ensure(*a == 0.0, || format!("mass {a:e} on an unreachable class"))?;
                        masked += 1;
                    }
                }
            }
        }
    }
    ensure(worst < 1e-10, || format!("max abs diff {worst:e}"))?;
    Ok(format!("max abs diff {worst:.1e}; {masked} zero-support entries exactly zero"))
}

fn enumerated_posterior_reach(betas: &[f64], m: &[f64], x0: usize, xt: usize) -> f64 {
    let qbar = betas
        .iter()
        .fold(identity(m.len()), |acc, &b| matmul(&acc, &oracle_step(b, m)));
    qbar[x0][xt]
}

fn random_graph(n: usize, f: usize, b: usize, rng: &mut ChaCha8Rng) -> MolGraph {
    let atoms = (0..n).map(|_| rng.gen_range(0..f)).collect();
    let mut bonds = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let c = rng.gen_range(0..b);
            if c != NO_BOND {
                bonds.push((i, j, c));
            }
        }
    }
    MolGraph::new(f, b, atoms, &bonds).unwrap()
}

fn random_embedding(id: &str, p: usize, len: usize, rng: &mut ChaCha8Rng) -> ProteinEmbedding {
    ProteinEmbedding {
        id: id.into(),
        cls: (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        tokens: Mat::from_vec(len, p, (0..len * p).map(|_| rng.gen_range(-1.0..1.0)).collect()),
    }
}

fn random_context(strategy: Strategy, p: usize, rng: &mut ChaCha8Rng) -> ConditionContext {
    let la = rng.gen_range(1..5);
    let lb = rng.gen_range(1..5);
    let a = random_embedding("a", p, la, rng);
    let b = random_embedding("b", p, lb, rng);
    pair_context(&a, &b, strategy).unwrap()
}

/// Moves every parameter off its zero/one init so no tensor has a
/// structurally vanishing gradient.
fn jitter(params: &mut DenoiserParams, rng: &mut ChaCha8Rng, scale: f64) {
    for m in params.tensors.values_mut() {
        for v in &mut m.data {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let h = 1e-4;
    let mut worst: (f64, String) = (0.0, String::new());
    let mut tensors = 0;
    for strategy in [Strategy::Ca, Strategy::Cat, Strategy::Vn] {
        let cfg = DenoiserConfig {
            d: 8,
            heads: 2,
            fuse_layers: 1,
            gt_layers: 1,
            f: 4,
            b: 3,
            steps: 10,
            strategy,
            protein_dim: 6,
        };
        let mut params = init_params(&cfg, &mut rng).unwrap();
        jitter(&mut params, &mut rng, 0.2);
        let g0 = random_graph(4, 4, 3, &mut rng);
        let gt = random_graph(4, 4, 3, &mut rng);
        let ctx = random_context(strategy, 6, &mut rng);
        let t = rng.gen_range(1..=10);
        let (_, grads) = backward(&params, &gt, &ctx, t, &g0, 5.0).map_err(|e| e.to_string())?;
        for (name, m) in &params.tensors {
            let mut diff = 0.0;
            let mut norm_g = 0.0;
            let mut norm_fd = 0.0;
            for k in 0..m.len() {
                let mut p = params.clone();
                p.get_mut(name).data[k] += h;
                let up = loss_value(&p, &gt, &ctx, t, &g0, 5.0).unwrap();
                p.get_mut(name).data[k] -= 2.0 * h;
                let down = loss_value(&p, &gt, &ctx, t, &g0, 5.0).unwrap();
                let fd = (up - down) / (2.0 * h);
                let g = grads[name].data[k];
                diff += (g - fd) * (g - fd);
                norm_g += g * g;
                norm_fd += fd * fd;
            }
            let scale = norm_g.sqrt().max(norm_fd.sqrt());
            let rel = if scale == 0.0 { 0.0 } else { diff.sqrt() / scale };
            if rel >= worst.0 {
                worst = (rel, format!("{strategy} {name}"));
            }
            tensors += 1;
        }
    }
    ensure(worst.0 < 1e-4, || format!("relative error {:e} at {}", worst.0, worst.1))?;
    Ok(format!("{tensors} tensors, worst relative error {:.1e} ({})", worst.0, worst.1))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let vocab = AtomVocab::default();
    let strategies = [Strategy::Ca, Strategy::Cat, Strategy::Vn];
    let models: Vec<DenoiserParams> = strategies
        .iter()
        .map(|&strategy| {
            let cfg = DenoiserConfig {
                d: 16,
                heads: 4,
                fuse_layers: 1,
                gt_layers: 2,
                f: vocab.len(),
                b: DEFAULT_BOND_TYPES,
                steps: 50,
                strategy,
                protein_dim: 8,
            };
            let mut p = init_params(&cfg, &mut rng).unwrap();
            jitter(&mut p, &mut rng, 0.2);
            p
        })
        .collect();
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let k = trial % 3;
        let n = rng.gen_range(1..=8);
        let g = random_graph(n, vocab.len(), DEFAULT_BOND_TYPES, &mut rng);
        let ctx = if trial % 10 == 9 {
            ConditionContext::Null
        } else {
            random_context(strategies[k], 8, &mut rng)
        };
        let t = rng.gen_range(1..=50);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let base = predict(&models[k], &g, &ctx, t).map_err(|e| e.to_string())?;
        let moved = predict(&models[k], &g.permute(&perm).unwrap(), &ctx, t).map_err(|e| e.to_string())?;
        // permute(perm) sends node i to position perm[i]
        for i in 0..n {
            for (a, b) in base.node(i).iter().zip(moved.node(perm[i])) {
                worst = worst.max((a - b).abs());
            }
            for j in 0..n {
                for (a, b) in base.edge(i, j).iter().zip(moved.edge(perm[i], perm[j])) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    ensure(worst < 1e-5, || format!("max deviation {worst:e}"))?;
    Ok(format!("100 trials, max deviation {worst:.1e}"))
}

const OVERFIT_MOLECULES: &str = "overfit_molecules.txt";
const OVERFIT_T: usize = 100;
const OVERFIT_STEPS: usize = 2000;
const OVERFIT_SAMPLES: usize = 64;

fn overfit_model(strategy: Strategy, f: usize) -> DenoiserConfig {
    DenoiserConfig {
        d: 32,
        heads: 4,
        fuse_layers: 1,
        gt_layers: 2,
        f,
        b: DEFAULT_BOND_TYPES,
        steps: OVERFIT_T,
        strategy,
        protein_dim: 16,
    }
}

fn overfit_config(seed: u64) -> TrainConfig {
    TrainConfig {
        steps: OVERFIT_STEPS,
        batch_size: 32,
        lr: 1e-3,
        seed,
        ..TrainConfig::default()
    }
}

fn synthetic_embedding(id: &str, residues: &str) -> ProteinEmbedding {
    kmer_encode(&ProteinSequence::new(id, residues).unwrap(), 16, 3).unwrap()
}

fn overfit_molecules(vocab: &AtomVocab) -> Vec<MolGraph> {
    smiles::smiles_lines(&read_data(OVERFIT_MOLECULES))
        .iter()
        .map(|(_, s)| smiles::parse(s, vocab).unwrap())
        .collect()
}

struct OverfitRun {
    checkpoint: Checkpoint,
    generated: Vec<MolGraph>,
    loss_ratio: f64,
    elapsed: Duration,
}

fn overfit_run(seed: u64) -> OverfitRun {
    let start = Instant::now();
    let vocab = AtomVocab::default();
    let graphs = overfit_molecules(&vocab);
    let mut embeddings = BTreeMap::new();
    embeddings.insert("PA".to_string(), synthetic_embedding("PA", "MKTAYIAKQRQISFVKSHFSRQ"));
    embeddings.insert("PB".to_string(), synthetic_embedding("PB", "GSHMLEDPVWACDEFGHIKLMN"));
    let triples = graphs
        .iter()
        .map(|g| TrainingTriple {
            graph: g.clone(),
            protein_a: "PA".into(),
            protein_b: "PB".into(),
        })
        .collect();
    let set = TrainingSet { triples, embeddings };
    let model = overfit_model(Strategy::Cat, vocab.len());
    let cfg = overfit_config(seed);
    let out = train(&set, &model, &cfg, &vocab, 0.008, |_| {}).unwrap();
    let init = train(&set, &model, &TrainConfig { steps: 0, ..cfg.clone() }, &vocab, 0.008, |_| {})
        .unwrap()
        .checkpoint;
    let ckpt = out.checkpoint;
    let ctx = ckpt.context("PA", "PB").unwrap();
    let sched = ckpt.schedule().unwrap();
    let items: Vec<_> = graphs.iter().map(|g| (g, ctx.clone())).collect();
    let before = evaluate_loss(&init.params, &items, &sched, &ckpt.marginals, cfg.lambda, 8, seed).unwrap();
    let after = evaluate_loss(&ckpt.params, &items, &sched, &ckpt.marginals, cfg.lambda, 8, seed).unwrap();
    let generated = generate(&ckpt, &ctx, OVERFIT_SAMPLES, seed).unwrap();
    OverfitRun {
        checkpoint: ckpt,
        generated,
        loss_ratio: after / before,
        elapsed: start.elapsed(),
    }
}

fn hit_count(gs: &[MolGraph], keys: &BTreeSet<String>) -> usize {
    gs.iter().filter(|g| keys.contains(&canonical_form(g))).count()
}

fn criterion_5(run: &OverfitRun) -> Outcome {
    let vocab = AtomVocab::default();
    let keys: BTreeSet<String> = overfit_molecules(&vocab).iter().map(canonical_form).collect();
    let validity = validity_rate(&run.generated, &vocab);
    let hits = hit_count(&run.generated, &keys);
    let hit_rate = hits as f64 / run.generated.len() as f64;
    let summary = format!(
        "loss ratio {:.3}, validity {validity:.3}, training-set hits {hits}/{}, {:.0} s",
        run.loss_ratio,
        run.generated.len(),
        run.elapsed.as_secs_f64()
    );
    ensure(run.loss_ratio < 0.25 && validity >= 0.5 && hit_rate >= 0.5, || summary.clone())?;
    ensure(run.elapsed < Duration::from_secs(15 * 60), || format!("too slow: {summary}"))?;
    Ok(summary)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let vocab = AtomVocab::default();
    let graphs = overfit_molecules(&vocab);
    let (first, second) = graphs.split_at(graphs.len() / 2);
    let proteins = [
        ("PA", "MKTAYIAKQRQISFVKSHFSRQ"),
        ("PB", "GSHMLEDPVWACDEFGHIKLMN"),
        ("PC", "ACDEFGHIKLMNPQRSTVWY"),
        ("PD", "MSTNPKPQRKTKRNTNRRPQ"),
    ];
    let embeddings: BTreeMap<String, ProteinEmbedding> =
        proteins.iter().map(|(id, s)| (id.to_string(), synthetic_embedding(id, s))).collect();
    let mut triples = Vec::new();
    for (subset, a, b) in [(first, "PA", "PB"), (second, "PC", "PD")] {
        for g in subset {
            triples.push(TrainingTriple {
                graph: g.clone(),
                protein_a: a.into(),
                protein_b: b.into(),
            });
        }
    }
    let set = TrainingSet { triples, embeddings };
    let model = overfit_model(Strategy::Cat, vocab.len());
    let ckpt = train(&set, &model, &overfit_config(6), &vocab, 0.008, |_| {})
        .unwrap()
        .checkpoint;
    let keys = |s: &[MolGraph]| s.iter().map(canonical_form).collect::<BTreeSet<_>>();
    let (k1, k2) = (keys(first), keys(second));
    let mut lines = Vec::new();
    let mut ok = true;
    for (a, b, own, other) in [("PA", "PB", &k1, &k2), ("PC", "PD", &k2, &k1)] {
        let ctx = ckpt.context(a, b).unwrap();
        let gs = generate(&ckpt, &ctx, OVERFIT_SAMPLES, 60).unwrap();
        let (h_own, h_other) = (hit_count(&gs, own), hit_count(&gs, other));
        ok &= h_own > 0 && h_own >= 2 * h_other;
        lines.push(format!("{a}+{b}: own {h_own}/{OVERFIT_SAMPLES}, other {h_other}/{OVERFIT_SAMPLES}"));
    }
    let elapsed = start.elapsed();
    let summary = format!("{}; {:.0} s", lines.join("; "), elapsed.as_secs_f64());
    ensure(ok, || summary.clone())?;
    ensure(elapsed < Duration::from_secs(20 * 60), || format!("too slow: {summary}"))?;
    Ok(summary)
}

fn criterion_7() -> Outcome {
    let vocab = AtomVocab::default();
    let corpus = read_data("smiles_corpus.txt");
    let lines = smiles::smiles_lines(&corpus);
    ensure(lines.len() == 100, || format!("corpus has {} entries", lines.len()))?;
    let mut failures = Vec::new();
    for (_, s) in &lines {
        let result = smiles::parse(s, &vocab).map_err(|e| e.to_string()).and_then(|g| {
            let written = smiles::write(&g, &vocab).map_err(|e| e.to_string())?;
            let again = smiles::parse(&written, &vocab).map_err(|e| format!("{written}: {e}"))?;
            ensure(canonical_form(&g) == canonical_form(&again), || format!("{s} -> {written}"))
        });
        if let Err(e) = result {
            failures.push(format!("{s}: {e}"));
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    let benzene = smiles::parse("c1ccccc1", &vocab).map_err(|e| e.to_string())?;
    let doubles = benzene.bond_list().iter().filter(|b| b.2 == DOUBLE).count();
    let singles = benzene.bond_list().len() - doubles;
    ensure(doubles == 3 && singles == 3, || format!("benzene has {doubles} double bonds"))?;
    Ok("100/100 strings round-trip; benzene has 3 double and 3 single bonds".into())
}

fn criterion_8() -> Outcome {
    let vocab = AtomVocab::default();
    let mol = |s: &str| smiles::parse(s, &vocab).unwrap();
    let overvalent = |symbol: &str, order: usize| {
        let c = vocab.index_of(symbol).unwrap();
        MolGraph::new(vocab.len(), DEFAULT_BOND_TYPES, vec![c, c], &[(0, 1, order)]).unwrap()
    };
    let set = vec![
        mol("CC"),
        mol("CC"),
        mol("OO"),
        mol("NN"),
        mol("FF"),
        overvalent("F", DOUBLE),
        overvalent("O", TRIPLE),
        mol("ClCl"),
        mol("OO"),
        mol("BrBr"),
    ];
    let train_keys: BTreeSet<String> = [mol("CC"), mol("FF")].iter().map(canonical_form).collect();

    // Homonuclear diatomics of different elements share no fingerprint bit,
    // so every Tanimoto value in the set is 1 (same molecule) or 0.
    let valid: Vec<&MolGraph> = [0, 1, 2, 3, 4, 7, 8, 9].iter().map(|&i| &set[i]).collect();
    let fps: Vec<Fingerprint> = valid
        .iter()
        .map(|g| fingerprint(g, DEFAULT_RADIUS, DEFAULT_NBITS).unwrap())
        .collect();
    for (i, a) in fps.iter().enumerate() {
        for (j, b) in fps.iter().enumerate().skip(i + 1) {
            let same = canonical_form(valid[i]) == canonical_form(valid[j]);
            let shared = a.bits().intersection(b.bits()).count();
            ensure(same || shared == 0, || format!("molecules {i} and {j} share {shared} bits"))?;
        }
    }
    // validity 8/10; unique canonical forms {CC, OO, NN, FF, ClCl, BrBr} over
    // 8 valid; novel (not CC or FF) OO, NN, ClCl, OO, BrBr over 8 valid;
    // 28 valid pairs, 2 identical (CC/CC, OO/OO), so diversity 26/28.
    let expected = (0.8, 0.75, 0.625, 13.0 / 14.0);
    let got = (
        validity_rate(&set, &vocab),
        uniqueness(&set, &vocab),
        novelty(&set, &train_keys, &vocab),
        diversity(&set, &vocab).map_err(|e| e.to_string())?,
    );
    ensure(got == expected, || format!("got {got:?}, expected {expected:?}"))?;
    let r = report(&set, &train_keys, &vocab).map_err(|e| e.to_string())?;
    let from_report = (r.validity, r.uniqueness, r.novelty, r.diversity.unwrap_or(f64::NAN));
    ensure(from_report == expected, || format!("report {from_report:?}"))?;
    ensure((r.total, r.valid, r.unique, r.novel) == (10, 8, 6, 5), || {
        format!("counts {:?}", (r.total, r.valid, r.unique, r.novel))
    })?;

    let fp = |bits: &[usize]| Fingerprint::from_bits(8, bits.iter().copied()).unwrap();
    let cases = [
        (fp(&[1, 2, 3]), fp(&[1, 2, 3]), 1.0),
        (fp(&[1, 2]), fp(&[5, 6]), 0.0),
        (fp(&[1, 2, 3]), fp(&[2, 3, 4]), 0.5),
    ];
    for (a, b, want) in &cases {
        let t = tanimoto(a, b).map_err(|e| e.to_string())?;
        ensure(t == *want, || format!("tanimoto {t} != {want}"))?;
    }
    Ok(format!(
        "validity {}, uniqueness {}, novelty {}, diversity {:.6}; Tanimoto 1/0/0.5 exact",
        got.0, got.1, got.2, got.3
    ))
}

fn criterion_9() -> Outcome {
    let vocab = AtomVocab::default();
    let (records, skipped) = parse_records(&read_data("ingest_records.tsv")).map_err(|e| e.to_string())?;
    ensure(records.len() == 20 && skipped == 0, || format!("{} records, {skipped} skipped", records.len()))?;
    let sequences = condition::parse_fasta(&read_data("ingest_proteins.fa"))
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|s| (s.id.clone(), s))
        .collect();
    let (triples, _) = build_triples(&records, &sequences, &vocab, PairOptions::default());
    let got = write_triples(&triples, &vocab).map_err(|e| e.to_string())?;
    let want = read_data("ingest_expected.tsv");
    ensure(got == want, || format!("output differs:\n{got}"))?;
    Ok(format!("{} triples match the expectation file byte for byte", triples.len()))
}

fn criterion_10(first: &OverfitRun) -> Outcome {
    let second = overfit_run(5);
    let vocab = AtomVocab::default();
    let a = first.checkpoint.to_bytes();
    let b = second.checkpoint.to_bytes();
    ensure(a == b, || "checkpoints differ".into())?;
    let sa = write_generated(&first.generated, &vocab);
    let sb = write_generated(&second.generated, &vocab);
    ensure(sa == sb, || "generated SMILES differ".into())?;
    Ok(format!(
        "checkpoints bit-identical ({} bytes), {} generated lines identical",
        a.len(),
        sa.lines().count()
    ))
}

fn main() {
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().map_or(true, |o| o.contains(&k));

    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut run = |k: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(k) {
            return;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let tag = if outcome.is_ok() { "PASS" } else { "FAIL" };
        let detail = match &outcome {
            Ok(s) | Err(s) => s,
        };
        println!("[{tag}] {k:>2} {name} ({:.1} s): {detail}", elapsed.as_secs_f64());
        results.push((k, name, outcome, elapsed));
    };

    run(1, "diffusion math oracles", &mut criterion_1);
    run(2, "sampler mixture vs enumeration", &mut criterion_2);
    run(3, "gradient check", &mut criterion_3);
    run(4, "permutation equivariance", &mut criterion_4);
    let mut overfit = None;
    run(5, "overfit end to end", &mut || {
        let o = overfit_run(5);
        let outcome = criterion_5(&o);
        overfit = Some(o);
        outcome
    });
    run(6, "conditioning effect", &mut criterion_6);
    run(7, "SMILES round trip", &mut criterion_7);
    run(8, "metrics hand check", &mut criterion_8);
    run(9, "ingestion rules", &mut criterion_9);
    if wanted(10) {
        let first = overfit.unwrap_or_else(|| overfit_run(5));
        run(10, "determinism", &mut || criterion_10(&first));
    }

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed {:?}",
        results.len() - failed.len(),
        failed.len(),
        failed
    );
    if !failed.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
