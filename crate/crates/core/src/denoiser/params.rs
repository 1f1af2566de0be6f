use super::DenoiserError;
use crate::condition::Strategy;
use crate::tensor::{round_to_f32, Mat};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Model width; also the edge hidden width.
    pub d: usize,
    pub heads: usize,
    pub fuse_layers: usize,
    pub gt_layers: usize,
    /// Atom classes.
    pub f: usize,
    /// Bond classes, including no-bond.
    pub b: usize,
    /// Diffusion steps.
    pub steps: usize,
    pub strategy: Strategy,
    /// Width of one protein embedding.
    pub protein_dim: usize,
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<(), DenoiserError> {
        let counts = [
            ("d", self.d),
            ("heads", self.heads),
            ("fuse_layers", self.fuse_layers),
            ("gt_layers", self.gt_layers),
            ("f", self.f),
            ("b", self.b),
            ("steps", self.steps),
            ("protein_dim", self.protein_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(DenoiserError::Config(format!("{name} must be at least 1")));
        }
        if self.d % self.heads != 0 {
            return Err(DenoiserError::Config(format!(
                "d={} is not divisible by heads={}",
                self.d, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    /// Every parameter tensor as (name, rows, cols, init).
    pub(crate) fn layout(&self) -> Vec<(String, usize, usize, Init)> {
        let (d, p) = (self.d, self.protein_dim);
        let mut out = Vec::new();
        let mut push = |name: String, r: usize, c: usize, init: Init| out.push((name, r, c, init));
        push("atom_emb".into(), self.f, d, Init::Uniform(self.f));
        push("bond_emb".into(), self.b, d, Init::Uniform(self.b));
        push("time_w".into(), d, d, Init::Uniform(d));
        push("time_b".into(), 1, d, Init::Zero);
        push("null_vec".into(), 1, 2 * p, Init::Uniform(1));
        push("cat_w".into(), d + 2 * p, d, Init::Uniform(d + 2 * p));
        push("cat_b".into(), 1, d, Init::Zero);

        let attn = |push: &mut dyn FnMut(String, usize, usize, Init), pre: &str, src: usize| {
            push(format!("{pre}.wq"), d, d, Init::Uniform(d));
            push(format!("{pre}.wk"), src, d, Init::Uniform(src));
            push(format!("{pre}.wv"), src, d, Init::Uniform(src));
            push(format!("{pre}.wo"), d, d, Init::Uniform(d));
            ff_layout(push, pre, "ff", d);
            push(format!("{pre}.ln_g"), 1, d, Init::One);
            push(format!("{pre}.ln_b"), 1, d, Init::Zero);
        };
        match self.strategy {
            Strategy::Ca => {
                push("sep".into(), 1, p, Init::Uniform(1));
                for l in 0..self.fuse_layers {
                    attn(&mut push, &format!("fuse{l}.sa"), d);
                    attn(&mut push, &format!("fuse{l}.ca"), p);
                }
            }
            Strategy::Vn => {
                push("vn_w".into(), 2 * p, d, Init::Uniform(2 * p));
                push("vn_b".into(), 1, d, Init::Zero);
                push("vn_edge".into(), 1, d, Init::Uniform(1));
            }
            Strategy::Cat | Strategy::Null => {}
        }
        for l in 0..self.gt_layers {
            let pre = format!("gt{l}");
            for w in ["wq", "wk", "wv", "we"] {
                push(format!("{pre}.{w}"), d, d, Init::Uniform(d));
            }
            push(format!("{pre}.oh_w"), d, d, Init::Uniform(d));
            push(format!("{pre}.oh_b"), 1, d, Init::Zero);
            push(format!("{pre}.oe_w"), d, d, Init::Uniform(d));
            push(format!("{pre}.oe_b"), 1, d, Init::Zero);
            ff_layout(&mut push, &pre, "ffh", d);
            push(format!("{pre}.lnh_g"), 1, d, Init::One);
            push(format!("{pre}.lnh_b"), 1, d, Init::Zero);
            ff_layout(&mut push, &pre, "ffe", d);
            push(format!("{pre}.lne_g"), 1, d, Init::One);
            push(format!("{pre}.lne_b"), 1, d, Init::Zero);
        }
        for (head, width) in [("head_x", self.f), ("head_e", self.b)] {
            push(format!("{head}.w1"), d, d, Init::Uniform(d));
            push(format!("{head}.b1"), 1, d, Init::Zero);
            push(format!("{head}.w2"), d, width, Init::Uniform(d));
            push(format!("{head}.b2"), 1, width, Init::Zero);
        }
        out
    }
}

fn ff_layout(push: &mut dyn FnMut(String, usize, usize, Init), pre: &str, ff: &str, d: usize) {
    push(format!("{pre}.{ff}1_w"), d, 2 * d, Init::Uniform(d));
    push(format!("{pre}.{ff}1_b"), 1, 2 * d, Init::Zero);
    push(format!("{pre}.{ff}2_w"), 2 * d, d, Init::Uniform(2 * d));
    push(format!("{pre}.{ff}2_b"), 1, d, Init::Zero);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    Uniform(usize),
    Zero,
    One,
}

impl Init {
    pub(crate) fn bound(self) -> f64 {
        match self {
            Init::Uniform(fan_in) => 1.0 / (fan_in as f64).sqrt(),
            Init::Zero => 0.0,
            Init::One => 1.0,
        }
    }
}

/// Named parameter tensors. Values are kept exactly representable in `f32`
/// so checkpoints round-trip without loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub config: DenoiserConfig,
    pub tensors: BTreeMap<String, Mat>,
}

pub type Gradients = BTreeMap<String, Mat>;

pub fn init_params<R: Rng + ?Sized>(
    cfg: &DenoiserConfig,
    rng: &mut R,
) -> Result<DenoiserParams, DenoiserError> {
    cfg.validate()?;
    let mut tensors = BTreeMap::new();
    for (name, r, c, init) in cfg.layout() {
        let mut m = match init {
            Init::Uniform(_) => {
                let bound = init.bound();
                Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-bound..bound)).collect())
            }
            Init::Zero => Mat::zeros(r, c),
            Init::One => Mat::filled(r, c, 1.0),
        };
        round_to_f32(&mut m.data);
        tensors.insert(name, m);
    }
    Ok(DenoiserParams {
        config: cfg.clone(),
        tensors,
    })
}

impl DenoiserParams {
    /// Rebuilds from loaded tensors, checking names and shapes against the
    /// config layout.
    pub fn from_tensors(
        config: DenoiserConfig,
        mut tensors: BTreeMap<String, Mat>,
    ) -> Result<Self, DenoiserError> {
        config.validate()?;
        let mut out = BTreeMap::new();
        for (name, r, c, _) in config.layout() {
            let m = tensors
                .remove(&name)
                .ok_or_else(|| DenoiserError::Shape(format!("missing tensor {name}")))?;
            if m.shape() != (r, c) {
                return Err(DenoiserError::Shape(format!(
                    "tensor {name} has shape {:?}, expected ({r}, {c})",
                    m.shape()
                )));
            }
            out.insert(name, m);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(DenoiserError::Shape(format!("unexpected tensor {extra}")));
        }
        Ok(DenoiserParams {
            config,
            tensors: out,
        })
    }

    pub fn get(&self, name: &str) -> &Mat {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Mat {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Mat::len).sum()
    }

    pub fn zeros_like(&self) -> Gradients {
        self.tensors
            .iter()
            .map(|(k, m)| (k.clone(), Mat::zeros(m.rows, m.cols)))
            .collect()
    }

    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|(_, m)| !m.all_finite())
            .map(|(k, _)| k.as_str())
    }
}
