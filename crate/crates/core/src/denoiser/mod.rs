//! The denoising network: protein-context fusion, an edge-aware graph
//! transformer, and two prediction heads, with exact reverse-mode
//! gradients of the training loss.
//!
//! Pipeline: atom and bond embeddings, plus a sinusoidal timestep
//! embedding on every node; then the conditioning path for the context
//! strategy; then `gt_layers` graph-transformer layers over the dense node
//! pairs; then an MLP head per node (atom classes) and per edge (bond
//! classes). Edge logits are symmetrized and the diagonal is masked to
//! no-bond.

mod net;
mod params;

pub use net::time_features;
pub use params::{init_params, DenoiserConfig, DenoiserParams, Gradients};

use crate::autodiff::Var;
use crate::condition::{ConditionContext, Strategy};
use crate::molgraph::{MolGraph, NO_BOND};
use crate::tensor::Mat;
use net::{check_context, Net, PROB_FLOOR};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenoiserError {
    #[error("invalid denoiser config: {0}")]
    Config(String),
    #[error("timestep {t} outside 1..={max}")]
    Step { t: usize, max: usize },
    #[error("context strategy {context} does not match model strategy {model}")]
    StrategyMismatch { model: Strategy, context: Strategy },
    #[error("protein embedding width {got} does not match model ({expected})")]
    ProteinDim { expected: usize, got: usize },
    #[error("cross-attention context has no tokens")]
    EmptyContext,
    #[error("graph classes ({f}, {b}) do not match model ({mf}, {mb})")]
    GraphSpace {
        f: usize,
        b: usize,
        mf: usize,
        mb: usize,
    },
    #[error("graph is empty")]
    EmptyGraph,
    #[error("edge features are not symmetric")]
    AsymmetricEdges,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Per-node and per-edge class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedDistributions {
    pub n: usize,
    /// `n x f`
    pub px: Mat,
    /// `(n*n) x b`, row `i*n + j`; the diagonal is one-hot on no-bond.
    pub pe: Mat,
}

impl PredictedDistributions {
    pub fn node(&self, i: usize) -> &[f64] {
        self.px.row(i)
    }

    pub fn edge(&self, i: usize, j: usize) -> &[f64] {
        self.pe.row(i * self.n + j)
    }
}

fn check_inputs(
    params: &DenoiserParams,
    g: &MolGraph,
    ctx: &ConditionContext,
    t: usize,
) -> Result<(), DenoiserError> {
    let cfg = &params.config;
    if t == 0 || t > cfg.steps {
        return Err(DenoiserError::Step { t, max: cfg.steps });
    }
    if g.n() == 0 {
        return Err(DenoiserError::EmptyGraph);
    }
    if g.atom_types() != cfg.f || g.bond_types() != cfg.b {
        return Err(DenoiserError::GraphSpace {
            f: g.atom_types(),
            b: g.bond_types(),
            mf: cfg.f,
            mb: cfg.b,
        });
    }
    check_context(params, ctx)
}

pub fn predict(
    params: &DenoiserParams,
    g_t: &MolGraph,
    ctx: &ConditionContext,
    t: usize,
) -> Result<PredictedDistributions, DenoiserError> {
    check_inputs(params, g_t, ctx, t)?;
    let mut net = Net::new(params);
    let out = net.forward(g_t, ctx, t)?;
    let px = net.tape.softmax_rows(out.x_logits);
    let pe = net.tape.softmax_rows(out.e_logits);
    let px = net.tape.value(px).clone();
    let mut pe = net.tape.value(pe).clone();
    let n = g_t.n();
    for i in 0..n {
        let row = pe.row_mut(i * n + i);
        row.fill(0.0);
        row[NO_BOND] = 1.0;
    }
    if !px.all_finite() || !pe.all_finite() {
        let name = params.first_non_finite().unwrap_or("predictions");
        return Err(DenoiserError::NonFinite(name.to_string()));
    }
    Ok(PredictedDistributions { n, px, pe })
}

/// Loss against `g0` and its gradient with respect to every parameter
/// tensor (zero for tensors the forward pass did not touch).
///
/// The loss is `sum_i CE(x_i) + lambda * sum_{i<j} 2 CE(e_ij)` with natural
/// logs and each probability floored at 1e-12.
pub fn backward(
    params: &DenoiserParams,
    g_t: &MolGraph,
    ctx: &ConditionContext,
    t: usize,
    g0: &MolGraph,
    lambda: f64,
) -> Result<(f64, Gradients), DenoiserError> {
    check_inputs(params, g_t, ctx, t)?;
    if g0.n() != g_t.n() || g0.atom_types() != g_t.atom_types() || g0.bond_types() != g_t.bond_types()
    {
        return Err(DenoiserError::Shape("target graph does not match noisy graph".into()));
    }
    let mut net = Net::new(params);
    let root = loss_node(&mut net, g_t, ctx, t, g0, lambda)?;
    let loss = net.tape.value(root).get(0, 0);
    if !loss.is_finite() {
        let name = params.first_non_finite().unwrap_or("loss");
        return Err(DenoiserError::NonFinite(name.to_string()));
    }
    let adjoints = net.tape.backward(root);
    let mut grads = params.zeros_like();
    for (name, var) in net.param_vars() {
        if let Some(g) = &adjoints[var.index()] {
            grads.insert(name.to_string(), g.clone());
        }
    }
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
        return Err(DenoiserError::NonFinite(format!("gradient of {name}")));
    }
    Ok((loss, grads))
}

/// Loss only, without the reverse sweep.
pub fn loss_value(
    params: &DenoiserParams,
    g_t: &MolGraph,
    ctx: &ConditionContext,
    t: usize,
    g0: &MolGraph,
    lambda: f64,
) -> Result<f64, DenoiserError> {
    check_inputs(params, g_t, ctx, t)?;
    let mut net = Net::new(params);
    let root = loss_node(&mut net, g_t, ctx, t, g0, lambda)?;
    Ok(net.tape.value(root).get(0, 0))
}

fn loss_node(
    net: &mut Net<'_>,
    g_t: &MolGraph,
    ctx: &ConditionContext,
    t: usize,
    g0: &MolGraph,
    lambda: f64,
) -> Result<Var, DenoiserError> {
    let out = net.forward(g_t, ctx, t)?;
    let n = g0.n();
    let lx = net.tape.log_softmax_rows(out.x_logits);
    let node_picks = (0..n).map(|i| (i, g0.atom(i), 1.0)).collect();
    let node = net.tape.neg_log_likelihood(lx, node_picks, PROB_FLOOR);
    if lambda == 0.0 {
        return Ok(node);
    }
    let le = net.tape.log_softmax_rows(out.e_logits);
    let mut edge_picks = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edge_picks.push((i * n + j, g0.bond(i, j), 2.0 * lambda));
        }
    }
    let edge = net.tape.neg_log_likelihood(le, edge_picks, PROB_FLOOR);
    Ok(net.tape.add(node, edge))
}

/// One fusion self-attention block (`fuse{block}.sa`) applied to `x`.
pub fn self_attention_block(
    params: &DenoiserParams,
    block: usize,
    x: &Mat,
) -> Result<Mat, DenoiserError> {
    require_ca(params, block, x)?;
    let mut net = Net::new(params);
    let xv = net.constant(x.clone());
    let y = net.attention_block(xv, xv, &format!("fuse{block}.sa"));
    Ok(net.tape.value(y).clone())
}

/// One fusion cross-attention block (`fuse{block}.ca`): rows of `x` query
/// the context tokens.
pub fn cross_attention_block(
    params: &DenoiserParams,
    block: usize,
    x: &Mat,
    ctx: &ConditionContext,
) -> Result<Mat, DenoiserError> {
    require_ca(params, block, x)?;
    let ConditionContext::CrossAttention { tokens, separator } = ctx else {
        return Err(DenoiserError::StrategyMismatch {
            model: Strategy::Ca,
            context: ctx.strategy(),
        });
    };
    check_context(params, ctx)?;
    let mut net = Net::new(params);
    let xv = net.constant(x.clone());
    let src = net.context_tokens(tokens, *separator);
    let y = net.attention_block(xv, src, &format!("fuse{block}.ca"));
    Ok(net.tape.value(y).clone())
}

fn require_ca(params: &DenoiserParams, block: usize, x: &Mat) -> Result<(), DenoiserError> {
    let cfg = &params.config;
    if cfg.strategy != Strategy::Ca || block >= cfg.fuse_layers {
        return Err(DenoiserError::Config(format!(
            "model has no cross-attention block {block}"
        )));
    }
    if x.cols != cfg.d || x.rows == 0 {
        return Err(DenoiserError::Shape(format!("input must be n x {}", cfg.d)));
    }
    Ok(())
}

/// Graph-transformer layer `layer` on node features `h` (`n x d`) and edge
/// features `e` (`(n*n) x d`, row `i*n + j`).
pub fn graph_transformer_layer(
    params: &DenoiserParams,
    layer: usize,
    h: &Mat,
    e: &Mat,
) -> Result<(Mat, Mat), DenoiserError> {
    let cfg = &params.config;
    let n = h.rows;
    if layer >= cfg.gt_layers {
        return Err(DenoiserError::Config(format!("model has no layer {layer}")));
    }
    if n == 0 || h.cols != cfg.d || e.rows != n * n || e.cols != cfg.d {
        return Err(DenoiserError::Shape(format!(
            "expected h: n x {0}, e: n*n x {0}",
            cfg.d
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (e.row(i * n + j), e.row(j * n + i));
            if a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-12) {
                return Err(DenoiserError::AsymmetricEdges);
            }
        }
    }
    let mut net = Net::new(params);
    let hv = net.constant(h.clone());
    let ev = net.constant(e.clone());
    let (ho, eo) = net.gt_layer(hv, ev, n, layer);
    Ok((net.tape.value(ho).clone(), net.tape.value(eo).clone()))
}
