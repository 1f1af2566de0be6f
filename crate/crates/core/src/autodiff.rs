//! Tape-based reverse-mode differentiation over [`Mat`] values.
//!
//! Operations are recorded in evaluation order on a [`Tape`]; calling
//! [`Tape::backward`] on a scalar node walks the tape in reverse and
//! accumulates adjoints. The op set is exactly what the denoiser needs
//! (dense products, layer norm, softmaxes, and the pairwise attention
//! primitives of the edge-aware graph transformer).

use crate::tensor::{matmul_a_bt_acc, matmul_at_b_acc, Mat};

const LN_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Transpose(Var),
    Gather(Var, Vec<usize>),
    PairProd(Var, Var),
    SoftmaxGroups(Var, usize),
    AttnAgg(Var, Var),
    NegLogLik(Var, Vec<(usize, usize, f64)>, f64),
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows, 1, "add_row expects a single row");
        assert_eq!(r.cols, self.value(a).cols, "add_row width mismatch");
        let r = r.data.clone();
        let mut v = self.value(a).clone();
        for chunk in v.data.chunks_mut(r.len()) {
            for (x, y) in chunk.iter_mut().zip(&r) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "shape mismatch in mul");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
        let v = Mat::from_vec(x.rows, x.cols, data);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = x.data.iter().map(|&z| z * sigmoid(z)).collect();
        let v = Mat::from_vec(x.rows, x.cols, data);
        self.push(v, Op::Silu(a))
    }

    /// Row-wise layer normalization with learned `1 x c` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = &self.value(gamma).data;
        let b = &self.value(beta).data;
        assert_eq!(g.len(), cols);
        assert_eq!(b.len(), cols);
        let mut xhat = Mat::zeros(rows, cols);
        let mut out = Mat::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                xhat.set(r, c, h);
                out.set(r, c, g[c] * h + b[c]);
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        let cols = v.cols;
        for row in v.data.chunks_mut(cols) {
            softmax_in_place(row);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        let cols = v.cols;
        for row in v.data.chunks_mut(cols) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            for z in row.iter_mut() {
                *z -= lse;
            }
        }
        self.push(v, Op::LogSoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + m.cols].copy_from_slice(m.row(r));
            }
            off += m.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols);
        let mut out = Mat::zeros(m.rows, len);
        for r in 0..m.rows {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    /// Output row `r` is input row `index[r]`.
    pub fn gather_rows(&mut self, a: Var, index: Vec<usize>) -> Var {
        let m = self.value(a);
        let mut out = Mat::zeros(index.len(), m.cols);
        for (r, &src) in index.iter().enumerate() {
            out.row_mut(r).copy_from_slice(m.row(src));
        }
        self.push(out, Op::Gather(a, index))
    }

    /// Row `i*n + j` of the output is `q[i] * k[j]` elementwise.
    pub fn pair_prod(&mut self, q: Var, k: Var) -> Var {
        let (qm, km) = (self.value(q), self.value(k));
        assert_eq!(qm.shape(), km.shape());
        let (n, c) = qm.shape();
        let mut out = Mat::zeros(n * n, c);
        for i in 0..n {
            let qi = qm.row(i);
            for j in 0..n {
                let kj = km.row(j);
                let o = out.row_mut(i * n + j);
                for ch in 0..c {
                    o[ch] = qi[ch] * kj[ch];
                }
            }
        }
        self.push(out, Op::PairProd(q, k))
    }

    /// Softmax over `j` of an `(n*n) x h` logit table, independently for
    /// each source node `i` and column.
    pub fn softmax_groups(&mut self, a: Var, n: usize) -> Var {
        let m = self.value(a);
        assert_eq!(m.rows, n * n);
        let h = m.cols;
        let mut out = m.clone();
        let mut buf = vec![0.0; n];
        for i in 0..n {
            for col in 0..h {
                for j in 0..n {
                    buf[j] = m.get(i * n + j, col);
                }
                softmax_in_place(&mut buf);
                for j in 0..n {
                    out.set(i * n + j, col, buf[j]);
                }
            }
        }
        self.push(out, Op::SoftmaxGroups(a, n))
    }

    /// Per-head weighted sum: `out[i, c] = sum_j w[i*n+j, head(c)] * v[j, c]`
    /// where the `d` value channels are split evenly across the `h` columns of `w`.
    pub fn attn_agg(&mut self, w: Var, v: Var) -> Var {
        let (wm, vm) = (self.value(w), self.value(v));
        let (n, d) = vm.shape();
        let h = wm.cols;
        assert_eq!(wm.rows, n * n);
        assert_eq!(d % h, 0);
        let dk = d / h;
        let mut out = Mat::zeros(n, d);
        for i in 0..n {
            for j in 0..n {
                let wrow = wm.row(i * n + j);
                let vj = vm.row(j);
                let o = out.row_mut(i);
                for c in 0..d {
                    o[c] += wrow[c / dk] * vj[c];
                }
            }
        }
        self.push(out, Op::AttnAgg(w, v))
    }

    /// `-sum weight * max(logp[r, c], ln floor)` over the listed entries,
    /// as a `1 x 1` value.
    pub fn neg_log_likelihood(
        &mut self,
        logp: Var,
        picks: Vec<(usize, usize, f64)>,
        floor: f64,
    ) -> Var {
        let m = self.value(logp);
        let lf = floor.ln();
        let total: f64 = picks
            .iter()
            .map(|&(r, c, w)| -w * m.get(r, c).max(lf))
            .sum();
        self.push(Mat::from_vec(1, 1, vec![total]), Op::NegLogLik(logp, picks, floor))
    }

    /// Reverse sweep from a `1 x 1` node. Returns one adjoint slot per node;
    /// nodes that do not influence `root` stay `None`.
    pub fn backward(&self, root: Var) -> Vec<Option<Mat>> {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::filled(1, 1, 1.0));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        grads
    }

    fn propagate(&self, idx: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (am, bm) = (self.value(*a), self.value(*b));
                let ga = slot(grads, *a, am.rows, am.cols);
                matmul_a_bt_acc(g, bm, ga);
                let gb = slot(grads, *b, bm.rows, bm.cols);
                matmul_at_b_acc(am, g, gb);
            }
            Op::Add(a, b) => {
                slot(grads, *a, g.rows, g.cols).add_assign(g);
                slot(grads, *b, g.rows, g.cols).add_assign(g);
            }
            Op::AddRow(a, row) => {
                slot(grads, *a, g.rows, g.cols).add_assign(g);
                let gr = slot(grads, *row, 1, g.cols);
                for r in 0..g.rows {
                    for (o, v) in gr.data.iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (am, bm) = (self.value(*a), self.value(*b));
                let ga = slot(grads, *a, g.rows, g.cols);
                for ((o, gv), bv) in ga.data.iter_mut().zip(&g.data).zip(&bm.data) {
                    *o += gv * bv;
                }
                let gb = slot(grads, *b, g.rows, g.cols);
                for ((o, gv), av) in gb.data.iter_mut().zip(&g.data).zip(&am.data) {
                    *o += gv * av;
                }
            }
            Op::Scale(a, s) => {
                let ga = slot(grads, *a, g.rows, g.cols);
                for (o, gv) in ga.data.iter_mut().zip(&g.data) {
                    *o += gv * s;
                }
            }
            Op::Silu(a) => {
                let am = self.value(*a);
                let ga = slot(grads, *a, g.rows, g.cols);
                for ((o, gv), &z) in ga.data.iter_mut().zip(&g.data).zip(&am.data) {
                    let s = sigmoid(z);
                    *o += gv * (s + z * s * (1.0 - s));
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = g.shape();
                let gam = self.value(*gamma).data.clone();
                {
                    let gg = slot(grads, *gamma, 1, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            gg.data[c] += g.get(r, c) * xhat.get(r, c);
                        }
                    }
                }
                {
                    let gb = slot(grads, *beta, 1, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            gb.data[c] += g.get(r, c);
                        }
                    }
                }
                let gx = slot(grads, *x, rows, cols);
                let nf = cols as f64;
                let mut dxhat = vec![0.0; cols];
                for r in 0..rows {
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for c in 0..cols {
                        dxhat[c] = g.get(r, c) * gam[c];
                        sum_d += dxhat[c];
                        sum_dx += dxhat[c] * xhat.get(r, c);
                    }
                    let inv = inv_std[r];
                    for c in 0..cols {
                        let v = inv / nf * (nf * dxhat[c] - sum_d - xhat.get(r, c) * sum_dx);
                        gx.data[r * cols + c] += v;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let ga = slot(grads, *a, g.rows, g.cols);
                for r in 0..g.rows {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum();
                    for c in 0..g.cols {
                        ga.data[r * g.cols + c] += y.get(r, c) * (g.get(r, c) - dot);
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let ga = slot(grads, *a, g.rows, g.cols);
                for r in 0..g.rows {
                    let sum: f64 = g.row(r).iter().sum();
                    for c in 0..g.cols {
                        ga.data[r * g.cols + c] += g.get(r, c) - y.get(r, c).exp() * sum;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let pc = self.value(*p).cols;
                    let gp = slot(grads, *p, g.rows, pc);
                    for r in 0..g.rows {
                        for (o, v) in gp.row_mut(r).iter_mut().zip(&g.row(r)[off..off + pc]) {
                            *o += v;
                        }
                    }
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let pr = self.value(*p).rows;
                    let gp = slot(grads, *p, pr, g.cols);
                    let src = &g.data[off * g.cols..(off + pr) * g.cols];
                    for (o, v) in gp.data.iter_mut().zip(src) {
                        *o += v;
                    }
                    off += pr;
                }
            }
            Op::SliceCols(a, start) => {
                let ac = self.value(*a).cols;
                let ga = slot(grads, *a, g.rows, ac);
                for r in 0..g.rows {
                    for (o, v) in ga.row_mut(r)[*start..*start + g.cols].iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
            }
            Op::Transpose(a) => {
                let gt = g.transpose();
                slot(grads, *a, gt.rows, gt.cols).add_assign(&gt);
            }
            Op::Gather(a, index) => {
                let am = self.value(*a);
                let ga = slot(grads, *a, am.rows, am.cols);
                for (r, &src) in index.iter().enumerate() {
                    for (o, v) in ga.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
            }
            Op::PairProd(q, k) => {
                let (qm, km) = (self.value(*q), self.value(*k));
                let (n, c) = qm.shape();
                let mut gq = Mat::zeros(n, c);
                let mut gk = Mat::zeros(n, c);
                for i in 0..n {
                    for j in 0..n {
                        let gr = g.row(i * n + j);
                        for ch in 0..c {
                            gq.data[i * c + ch] += gr[ch] * km.get(j, ch);
                            gk.data[j * c + ch] += gr[ch] * qm.get(i, ch);
                        }
                    }
                }
                slot(grads, *q, n, c).add_assign(&gq);
                slot(grads, *k, n, c).add_assign(&gk);
            }
            Op::SoftmaxGroups(a, n) => {
                let n = *n;
                let y = &node.value;
                let h = y.cols;
                let ga = slot(grads, *a, n * n, h);
                for i in 0..n {
                    for col in 0..h {
                        let mut dot = 0.0;
                        for j in 0..n {
                            dot += g.get(i * n + j, col) * y.get(i * n + j, col);
                        }
                        for j in 0..n {
                            let r = i * n + j;
                            ga.data[r * h + col] += y.get(r, col) * (g.get(r, col) - dot);
                        }
                    }
                }
            }
            Op::AttnAgg(w, v) => {
                let (wm, vm) = (self.value(*w), self.value(*v));
                let (n, d) = vm.shape();
                let h = wm.cols;
                let dk = d / h;
                let mut gw = Mat::zeros(n * n, h);
                let mut gv = Mat::zeros(n, d);
                for i in 0..n {
                    let gi = g.row(i);
                    for j in 0..n {
                        let r = i * n + j;
                        let vj = vm.row(j);
                        let wrow = wm.row(r);
                        for c in 0..d {
                            gw.data[r * h + c / dk] += gi[c] * vj[c];
                            gv.data[j * d + c] += wrow[c / dk] * gi[c];
                        }
                    }
                }
                slot(grads, *w, n * n, h).add_assign(&gw);
                slot(grads, *v, n, d).add_assign(&gv);
            }
            Op::NegLogLik(a, picks, floor) => {
                let am = self.value(*a);
                let lf = floor.ln();
                let scale = g.data[0];
                let (rows, cols) = am.shape();
                let ga = slot(grads, *a, rows, cols);
                for &(r, c, w) in picks {
                    if am.get(r, c) > lf {
                        ga.data[r * cols + c] -= w * scale;
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Mat>], v: Var, rows: usize, cols: usize) -> &mut Mat {
    grads[v.0].get_or_insert_with(|| Mat::zeros(rows, cols))
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in row.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in row.iter_mut() {
        *z /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Mat, f: &dyn Fn(&Mat) -> f64) -> Mat {
        let h = 1e-5;
        let mut g = Mat::zeros(x.rows, x.cols);
        for k in 0..x.data.len() {
            let mut p = x.clone();
            p.data[k] += h;
            let mut m = x.clone();
            m.data[k] -= h;
            g.data[k] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    fn check(x: Mat, build: impl Fn(&mut Tape, Var) -> Var) {
        let f = |m: &Mat| {
            let mut t = Tape::new();
            let v = t.leaf(m.clone());
            let out = build(&mut t, v);
            t.value(out).data[0]
        };
        let mut t = Tape::new();
        let v = t.leaf(x.clone());
        let out = build(&mut t, v);
        let grads = t.backward(out);
        let analytic = grads[v.index()].clone().unwrap_or_else(|| Mat::zeros(x.rows, x.cols));
        let numeric = numeric_grad(&x, &f);
        let err = analytic.max_abs_diff(&numeric);
        assert!(err < 1e-7, "gradient mismatch {err}\n{analytic:?}\n{numeric:?}");
    }

    fn sample(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let data = (0..rows * cols)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Mat::from_vec(rows, cols, data)
    }

    // Reduce any matrix to a scalar through a fixed random projection so
    // every output entry contributes to the checked gradient.
    fn reduce(t: &mut Tape, v: Var, seed: u64) -> Var {
        let (r, c) = t.value(v).shape();
        let w = t.leaf(sample(r, c, seed));
        let prod = t.mul(v, w);
        let ones_r = t.leaf(Mat::filled(1, r, 1.0));
        let ones_c = t.leaf(Mat::filled(c, 1, 1.0));
        let s = t.matmul(ones_r, prod);
        t.matmul(s, ones_c)
    }

    #[test]
    fn layer_norm_gradient() {
        check(sample(3, 5, 1), |t, x| {
            let g = t.leaf(sample(1, 5, 2));
            let b = t.leaf(sample(1, 5, 3));
            let y = t.layer_norm(x, g, b);
            reduce(t, y, 4)
        });
    }

    #[test]
    fn softmax_variants_gradient() {
        check(sample(3, 4, 5), |t, x| {
            let y = t.softmax_rows(x);
            reduce(t, y, 6)
        });
        check(sample(3, 4, 7), |t, x| {
            let y = t.log_softmax_rows(x);
            reduce(t, y, 8)
        });
        check(sample(9, 2, 9), |t, x| {
            let y = t.softmax_groups(x, 3);
            reduce(t, y, 10)
        });
    }

    #[test]
    fn attention_primitives_gradient() {
        let k = sample(3, 4, 11);
        check(sample(3, 4, 12), move |t, q| {
            let kv = t.leaf(k.clone());
            let p = t.pair_prod(q, kv);
            reduce(t, p, 13)
        });
        let v = sample(3, 4, 14);
        check(sample(9, 2, 15), move |t, w| {
            let vv = t.leaf(v.clone());
            let o = t.attn_agg(w, vv);
            reduce(t, o, 16)
        });
        let w = sample(9, 2, 17);
        check(sample(3, 4, 18), move |t, v| {
            let wv = t.leaf(w.clone());
            let o = t.attn_agg(wv, v);
            reduce(t, o, 19)
        });
    }

    #[test]
    fn structural_ops_gradient() {
        check(sample(4, 3, 20), |t, x| {
            let a = t.slice_cols(x, 1, 2);
            let b = t.transpose(x);
            let c = t.gather_rows(x, vec![3, 0, 0, 2]);
            let d = t.concat_cols(&[a, c]);
            let e = t.concat_rows(&[d, d]);
            let s = t.silu(e);
            let r1 = reduce(t, s, 21);
            let r2 = reduce(t, b, 22);
            t.add(r1, r2)
        });
    }

    #[test]
    fn neg_log_likelihood_gradient() {
        check(sample(3, 4, 23), |t, x| {
            let lp = t.log_softmax_rows(x);
            t.neg_log_likelihood(lp, vec![(0, 1, 1.0), (2, 3, 2.5)], 1e-12)
        });
    }
}
