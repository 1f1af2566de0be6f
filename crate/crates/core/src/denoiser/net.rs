//! Forward graph of the denoiser recorded on a tape.

use super::{DenoiserError, DenoiserParams};
use crate::autodiff::{Tape, Var};
use crate::condition::{ConditionContext, Strategy};
use crate::molgraph::MolGraph;
use crate::tensor::Mat;
use std::collections::HashMap;

pub(crate) const PROB_FLOOR: f64 = 1e-12;

/// Sinusoidal features of `t / steps`: pairs `(sin, cos)` of the phase
/// scaled by frequencies spread geometrically over `[1, 1000]`.
pub fn time_features(t: usize, steps: usize, d: usize) -> Vec<f64> {
    let s = t as f64 / steps as f64;
    let half = d / 2;
    let mut out = vec![0.0; d];
    for k in 0..half {
        let freq = if half > 1 {
            1000f64.powf(k as f64 / (half - 1) as f64)
        } else {
            1.0
        };
        out[2 * k] = (s * freq).sin();
        out[2 * k + 1] = (s * freq).cos();
    }
    out
}

/// `swap[i*n + j] = j*n + i`
pub(crate) fn swap_index(n: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            idx.push(j * n + i);
        }
    }
    idx
}

pub(crate) struct Net<'a> {
    pub tape: Tape,
    params: &'a DenoiserParams,
    vars: HashMap<&'a str, Var>,
}

pub(crate) struct Outputs {
    /// `n x f` node logits.
    pub x_logits: Var,
    /// `(n*n) x b` symmetric edge logits.
    pub e_logits: Var,
}

impl<'a> Net<'a> {
    pub fn new(params: &'a DenoiserParams) -> Self {
        Net {
            tape: Tape::new(),
            params,
            vars: HashMap::new(),
        }
    }

    pub fn p(&mut self, name: &str) -> Var {
        if let Some(&v) = self.vars.get(name) {
            return v;
        }
        let (key, value) = self
            .params
            .tensors
            .get_key_value(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        let v = self.tape.leaf(value.clone());
        self.vars.insert(key.as_str(), v);
        v
    }

    /// Parameter handles created so far, by name.
    pub fn param_vars(&self) -> impl Iterator<Item = (&str, Var)> + '_ {
        self.vars.iter().map(|(k, v)| (*k, *v))
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.tape.leaf(m)
    }

    fn linear(&mut self, x: Var, w: &str, b: Option<&str>) -> Var {
        let w = self.p(w);
        let y = self.tape.matmul(x, w);
        match b {
            Some(b) => {
                let b = self.p(b);
                self.tape.add_row(y, b)
            }
            None => y,
        }
    }

    /// `silu(x W1 + b1) W2 + b2`
    fn feed_forward(&mut self, x: Var, pre: &str) -> Var {
        let h = self.linear(x, &format!("{pre}1_w"), Some(&format!("{pre}1_b")));
        let h = self.tape.silu(h);
        self.linear(h, &format!("{pre}2_w"), Some(&format!("{pre}2_b")))
    }

    fn norm(&mut self, x: Var, g: &str, b: &str) -> Var {
        let (g, b) = (self.p(g), self.p(b));
        self.tape.layer_norm(x, g, b)
    }

    /// Multi-head scaled dot-product attention of the rows of `x` over the
    /// rows of `src`.
    fn mha(&mut self, x: Var, src: Var, pre: &str) -> Var {
        let heads = self.params.config.heads;
        let dk = self.params.config.head_dim();
        let q = self.linear(x, &format!("{pre}.wq"), None);
        let k = self.linear(src, &format!("{pre}.wk"), None);
        let v = self.linear(src, &format!("{pre}.wv"), None);
        let scale = 1.0 / (dk as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.tape.slice_cols(q, h * dk, dk);
            let kh = self.tape.slice_cols(k, h * dk, dk);
            let vh = self.tape.slice_cols(v, h * dk, dk);
            let kt = self.tape.transpose(kh);
            let s = self.tape.matmul(qh, kt);
            let s = self.tape.scale(s, scale);
            let a = self.tape.softmax_rows(s);
            outs.push(self.tape.matmul(a, vh));
        }
        let cat = self.tape.concat_cols(&outs);
        self.linear(cat, &format!("{pre}.wo"), None)
    }

    /// `LayerNorm(x + FF(MHA(x, src)))`
    pub fn attention_block(&mut self, x: Var, src: Var, pre: &str) -> Var {
        let a = self.mha(x, src, pre);
        let f = self.feed_forward(a, &format!("{pre}.ff"));
        let r = self.tape.add(x, f);
        self.norm(r, &format!("{pre}.ln_g"), &format!("{pre}.ln_b"))
    }

    /// Context rows with the learned separator spliced in.
    pub fn context_tokens(&mut self, tokens: &Mat, separator: usize) -> Var {
        let mut parts = Vec::new();
        if separator > 0 {
            let before = Mat::from_vec(
                separator,
                tokens.cols,
                tokens.data[..separator * tokens.cols].to_vec(),
            );
            parts.push(self.constant(before));
        }
        parts.push(self.p("sep"));
        let after_rows = tokens.rows - separator - 1;
        if after_rows > 0 {
            let after = Mat::from_vec(
                after_rows,
                tokens.cols,
                tokens.data[(separator + 1) * tokens.cols..].to_vec(),
            );
            parts.push(self.constant(after));
        }
        self.tape.concat_rows(&parts)
    }

    /// Edge-aware graph-transformer layer over `n` nodes. `h` is `n x d`,
    /// `e` is `(n*n) x d` and symmetric.
    pub fn gt_layer(&mut self, h: Var, e: Var, n: usize, l: usize) -> (Var, Var) {
        let cfg = &self.params.config;
        let (d, heads, dk) = (cfg.d, cfg.heads, cfg.head_dim());
        let pre = format!("gt{l}");
        let q = self.linear(h, &format!("{pre}.wq"), None);
        let k = self.linear(h, &format!("{pre}.wk"), None);
        let v = self.linear(h, &format!("{pre}.wv"), None);
        let ew = self.linear(e, &format!("{pre}.we"), None);
        let qk = self.tape.pair_prod(q, k);
        let qk = self.tape.scale(qk, 1.0 / (dk as f64).sqrt());
        let w_hat = self.tape.mul(qk, ew);

        let mut head_sum = Mat::zeros(d, heads);
        for c in 0..d {
            head_sum.set(c, c / dk, 1.0);
        }
        let head_sum = self.constant(head_sum);
        let logits = self.tape.matmul(w_hat, head_sum);
        let w = self.tape.softmax_groups(logits, n);

        let agg = self.tape.attn_agg(w, v);
        let h_hat = self.linear(agg, &format!("{pre}.oh_w"), Some(&format!("{pre}.oh_b")));
        let ff = self.feed_forward(h_hat, &format!("{pre}.ffh"));
        let r = self.tape.add(h, ff);
        let h_out = self.norm(r, &format!("{pre}.lnh_g"), &format!("{pre}.lnh_b"));

        let e_hat = self.linear(w_hat, &format!("{pre}.oe_w"), Some(&format!("{pre}.oe_b")));
        let e_hat = self.symmetrize(e_hat, n);
        let ff = self.feed_forward(e_hat, &format!("{pre}.ffe"));
        let r = self.tape.add(e, ff);
        let e_out = self.norm(r, &format!("{pre}.lne_g"), &format!("{pre}.lne_b"));
        (h_out, e_out)
    }

    fn symmetrize(&mut self, e: Var, n: usize) -> Var {
        let t = self.tape.gather_rows(e, swap_index(n));
        let s = self.tape.add(e, t);
        self.tape.scale(s, 0.5)
    }

    /// Full forward pass up to the head logits.
    pub fn forward(
        &mut self,
        g: &MolGraph,
        ctx: &ConditionContext,
        t: usize,
    ) -> Result<Outputs, DenoiserError> {
        let cfg = self.params.config.clone();
        let n = g.n();
        let x_in = self.constant(Mat::one_hot(g.atoms(), cfg.f));
        let e_in = self.constant(Mat::one_hot(g.bond_table(), cfg.b));
        let atom_emb = self.p("atom_emb");
        let bond_emb = self.p("bond_emb");
        let mut h = self.tape.matmul(x_in, atom_emb);
        let mut e = self.tape.matmul(e_in, bond_emb);
        let tf = self.constant(Mat::row_vector(time_features(t, cfg.steps, cfg.d)));
        let temb = self.linear(tf, "time_w", Some("time_b"));
        h = self.tape.add_row(h, temb);

        let mut size = n;
        match ctx {
            ConditionContext::Null => {
                let null = self.p("null_vec");
                let rep = self.tape.gather_rows(null, vec![0; n]);
                h = self.concat_project(h, rep);
            }
            ConditionContext::Concat { pooled } => {
                let rep = self.constant(repeat_row(pooled, n));
                h = self.concat_project(h, rep);
            }
            ConditionContext::CrossAttention { tokens, separator } => {
                let src = self.context_tokens(tokens, *separator);
                for l in 0..cfg.fuse_layers {
                    h = self.attention_block(h, h, &format!("fuse{l}.sa"));
                    h = self.attention_block(h, src, &format!("fuse{l}.ca"));
                }
            }
            ConditionContext::VirtualNode { pooled } => {
                let pv = self.constant(Mat::row_vector(pooled.clone()));
                let vnode = self.linear(pv, "vn_w", Some("vn_b"));
                h = self.tape.concat_rows(&[h, vnode]);
                let vn_edge = self.p("vn_edge");
                let pool = self.tape.concat_rows(&[e, vn_edge]);
                let m = n + 1;
                let idx = (0..m * m)
                    .map(|r| {
                        let (i, j) = (r / m, r % m);
                        if i < n && j < n {
                            i * n + j
                        } else {
                            n * n
                        }
                    })
                    .collect();
                e = self.tape.gather_rows(pool, idx);
                size = m;
            }
        }

        for l in 0..cfg.gt_layers {
            (h, e) = self.gt_layer(h, e, size, l);
        }

        if size != n {
            h = self.tape.gather_rows(h, (0..n).collect());
            let idx = (0..n * n).map(|r| (r / n) * size + r % n).collect();
            e = self.tape.gather_rows(e, idx);
        }

        let x1 = self.linear(h, "head_x.w1", Some("head_x.b1"));
        let x1 = self.tape.silu(x1);
        let x_logits = self.linear(x1, "head_x.w2", Some("head_x.b2"));
        let e1 = self.linear(e, "head_e.w1", Some("head_e.b1"));
        let e1 = self.tape.silu(e1);
        let e_logits = self.linear(e1, "head_e.w2", Some("head_e.b2"));
        let e_logits = self.symmetrize(e_logits, n);
        Ok(Outputs { x_logits, e_logits })
    }

    /// `[h, c] W_cat + b_cat`
    fn concat_project(&mut self, h: Var, c: Var) -> Var {
        let hc = self.tape.concat_cols(&[h, c]);
        self.linear(hc, "cat_w", Some("cat_b"))
    }
}

fn repeat_row(row: &[f64], n: usize) -> Mat {
    let mut data = Vec::with_capacity(row.len() * n);
    for _ in 0..n {
        data.extend_from_slice(row);
    }
    Mat::from_vec(n, row.len(), data)
}

pub(crate) fn check_context(
    params: &DenoiserParams,
    ctx: &ConditionContext,
) -> Result<(), DenoiserError> {
    let cfg = &params.config;
    let s = ctx.strategy();
    if s != Strategy::Null && s != cfg.strategy {
        return Err(DenoiserError::StrategyMismatch {
            model: cfg.strategy,
            context: s,
        });
    }
    if let Some(p) = ctx.protein_dim() {
        if p != cfg.protein_dim {
            return Err(DenoiserError::ProteinDim {
                expected: cfg.protein_dim,
                got: p,
            });
        }
    }
    match ctx {
        ConditionContext::CrossAttention { tokens, separator } => {
            if tokens.rows == 0 || *separator >= tokens.rows {
                return Err(DenoiserError::EmptyContext);
            }
        }
        ConditionContext::Concat { pooled } | ConditionContext::VirtualNode { pooled } => {
            if pooled.len() != 2 * cfg.protein_dim {
                return Err(DenoiserError::ProteinDim {
                    expected: cfg.protein_dim,
                    got: pooled.len() / 2,
                });
            }
        }
        ConditionContext::Null => {}
    }
    Ok(())
}
