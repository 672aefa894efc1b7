//! Matrix-valued reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep is a
//! valid topological traversal. Parameters are read from a borrowed
//! [`ParamStore`]; their gradients are accumulated into [`Gradients`].

use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::gru::{gru_backward, gru_forward, split_halves, GruCache};
use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Parameters of one GRU direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruIds {
    pub wi: ParamId,
    pub bi: ParamId,
    pub wh: ParamId,
    pub bh: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiGruIds {
    pub fwd: GruIds,
    pub bwd: GruIds,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear {
        x: NodeId,
        w: ParamId,
        b: ParamId,
    },
    BiGru {
        x: NodeId,
        ids: BiGruIds,
        fwd: Box<GruCache>,
        bwd: Box<GruCache>,
    },
    Sigmoid(NodeId),
    Tanh(NodeId),
    RowSoftmax(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols {
        x: NodeId,
        start: usize,
    },
    MatMul(NodeId, NodeId),
    MatMulT(NodeId, NodeId),
    MulConst {
        x: NodeId,
        c: Array2<f64>,
    },
    LogEps {
        x: NodeId,
        eps: f64,
    },
    ColAffine {
        x: NodeId,
        inv_scale: Array1<f64>,
    },
    BlockMean {
        x: NodeId,
        blocks: Vec<(usize, usize)>,
    },
    SelectionLoss {
        w: NodeId,
        relevant: [usize; 2],
    },
    PitLoss {
        est: [NodeId; 2],
        targets: Box<[Array2<f64>; 2]>,
        swapped: bool,
    },
    WeightedSum {
        x: NodeId,
        weights: Array2<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Pairwise PIT losses recorded by [`Graph::pit_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitRecord {
    /// `pairs[u][v] = |est_u - target_v|_F^2`.
    pub pairs: [[f64; 2]; 2],
    pub swapped: bool,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    grads: Vec<Option<Array2<f64>>>,
    param_grads: Gradients,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Softmax along each row, max-shifted.
pub fn row_softmax(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    y
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            grads: Vec::new(),
            param_grads: Gradients::new(params.len()),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check_cols(&self, context: &'static str, x: NodeId, cols: usize) -> Result<()> {
        let d = self.value(x).dim();
        if d.1 != cols {
            return Err(Error::shape(context, (d.0, cols), d));
        }
        Ok(())
    }

    pub fn input(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let wv = self.params.get(w);
        self.check_cols("linear", x, wv.nrows())?;
        let y = self.value(x).dot(wv) + self.params.get(b);
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    /// Bidirectional GRU; output is `[forward states | backward states]`.
    pub fn bigru(&mut self, x: NodeId, ids: BiGruIds) -> Result<NodeId> {
        let p = self.params;
        self.check_cols("bigru", x, p.get(ids.fwd.wi).nrows())?;
        let xv = self.value(x);
        let run = |g: GruIds, reverse| {
            gru_forward(xv, p.get(g.wi), p.get(g.bi), p.get(g.wh), p.get(g.bh), reverse)
        };
        let fwd = run(ids.fwd, false);
        let bwd = run(ids.bwd, true);
        let y = concatenate(Axis(1), &[fwd.h.view(), bwd.h.view()]).expect("equal rows");
        Ok(self.push(
            y,
            Op::BiGru {
                x,
                ids,
                fwd: Box::new(fwd),
                bwd: Box::new(bwd),
            },
        ))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = self.value(x).mapv(sigmoid);
        self.push(y, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let y = self.value(x).mapv(f64::tanh);
        self.push(y, Op::Tanh(x))
    }

    pub fn row_softmax(&mut self, x: NodeId) -> NodeId {
        let y = row_softmax(self.value(x));
        self.push(y, Op::RowSoftmax(x))
    }

    pub fn concat_cols(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let views: Vec<_> = xs.iter().map(|&x| self.value(x).view()).collect();
        let y = concatenate(Axis(1), &views).map_err(|_| {
            Error::InvalidArgument("concat_cols: row counts differ".into())
        })?;
        Ok(self.push(y, Op::ConcatCols(xs.to_vec())))
    }

    pub fn concat_rows(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let views: Vec<_> = xs.iter().map(|&x| self.value(x).view()).collect();
        let y = concatenate(Axis(0), &views).map_err(|_| {
            Error::InvalidArgument("concat_rows: column counts differ".into())
        })?;
        Ok(self.push(y, Op::ConcatRows(xs.to_vec())))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let y = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(y, Op::SliceCols { x, start })
    }

    /// `a b`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.nrows() {
            return Err(Error::shape("matmul", (av.nrows(), bv.nrows()), av.dim()));
        }
        let y = av.dot(bv);
        Ok(self.push(y, Op::MatMul(a, b)))
    }

    /// `a bᵀ`.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.ncols() {
            return Err(Error::shape("matmul_t", (av.nrows(), bv.ncols()), av.dim()));
        }
        let y = av.dot(&bv.t());
        Ok(self.push(y, Op::MatMulT(a, b)))
    }

    /// Elementwise product with a constant.
    pub fn mul_const(&mut self, x: NodeId, c: Array2<f64>) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.dim() != c.dim() {
            return Err(Error::shape("mul_const", xv.dim(), c.dim()));
        }
        let y = xv * &c;
        Ok(self.push(y, Op::MulConst { x, c }))
    }

    /// `ln(x + eps)`.
    pub fn log_eps(&mut self, x: NodeId, eps: f64) -> NodeId {
        let y = self.value(x).mapv(|v| (v + eps).ln());
        self.push(y, Op::LogEps { x, eps })
    }

    /// `(x - shift) / scale` per column.
    pub fn col_affine(&mut self, x: NodeId, shift: &Array1<f64>, scale: &Array1<f64>) -> Result<NodeId> {
        self.check_cols("col_affine", x, shift.len())?;
        let inv_scale = scale.mapv(|s| 1.0 / s);
        let y = (self.value(x) - shift) * &inv_scale;
        Ok(self.push(y, Op::ColAffine { x, inv_scale }))
    }

    /// `1 x P` row of means over all rows and the given column blocks
    /// `(start, len)`.
    pub fn block_mean(&mut self, x: NodeId, blocks: Vec<(usize, usize)>) -> NodeId {
        let xv = self.value(x);
        let rows = xv.nrows() as f64;
        let y = Array2::from_shape_fn((1, blocks.len()), |(_, p)| {
            let (start, len) = blocks[p];
            xv.slice(s![.., start..start + len]).sum() / (rows * len as f64)
        });
        self.push(y, Op::BlockMean { x, blocks })
    }

    /// Profile-selection loss on a `1 x P` weight row.
    pub fn selection_loss(&mut self, w: NodeId, relevant: [usize; 2]) -> NodeId {
        let wv = self.value(w).row(0).to_vec();
        let v = crate::selection::selection_loss_value(&wv, relevant);
        self.push(Array2::from_elem((1, 1), v), Op::SelectionLoss { w, relevant })
    }

    /// Utterance-level PIT loss over two estimates; gradient flows only
    /// through the winning assignment.
    pub fn pit_loss(&mut self, est: [NodeId; 2], targets: [Array2<f64>; 2]) -> Result<(NodeId, PitRecord)> {
        for (e, t) in est.iter().zip(&targets) {
            if self.value(*e).dim() != t.dim() {
                return Err(Error::shape("pit_loss", t.dim(), self.value(*e).dim()));
            }
        }
        let pairs = crate::separation::pairwise_losses(
            [self.value(est[0]), self.value(est[1])],
            [&targets[0], &targets[1]],
        );
        let (loss, swapped) = crate::separation::pit_choice(&pairs);
        let id = self.push(
            Array2::from_elem((1, 1), loss),
            Op::PitLoss {
                est,
                targets: Box::new(targets),
                swapped,
            },
        );
        Ok((id, PitRecord { pairs, swapped }))
    }

    /// `sum(x ⊙ weights)`; a generic scalar head for gradient checks.
    pub fn weighted_sum(&mut self, x: NodeId, weights: Array2<f64>) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.dim() != weights.dim() {
            return Err(Error::shape("weighted_sum", xv.dim(), weights.dim()));
        }
        let v = (xv * &weights).sum();
        Ok(self.push(Array2::from_elem((1, 1), v), Op::WeightedSum { x, weights }))
    }

    /// Gradient of `node` after [`Graph::backward`]; `None` means exactly zero.
    pub fn grad(&self, node: NodeId) -> Option<&Array2<f64>> {
        self.grads.get(node.0).and_then(Option::as_ref)
    }

    pub fn param_grads(&self) -> &Gradients {
        &self.param_grads
    }

    pub fn into_param_grads(self) -> Gradients {
        self.param_grads
    }

    /// Reverse sweep from a scalar node, seeded with `seed`.
    pub fn backward(&mut self, loss: NodeId, seed: f64) {
        let p = self.params;
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::from_elem(self.nodes[loss.0].value.dim(), seed));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    self.param_grads.accumulate_owned(*w, xv.t().dot(&g));
                    self.param_grads
                        .accumulate_owned(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    accumulate(&mut grads[x.0], g.dot(&p.get(*w).t()));
                }
                Op::BiGru { x, ids, fwd, bwd } => {
                    let xv = &self.nodes[x.0].value;
                    let hid = fwd.h.ncols();
                    let (gf, gb) = split_halves(&g, hid);
                    let mut dx = None;
                    for (dir, cache, dh, reverse) in
                        [(ids.fwd, fwd, gf, false), (ids.bwd, bwd, gb, true)]
                    {
                        let r = gru_backward(xv, p.get(dir.wi), p.get(dir.wh), cache, dh, reverse);
                        self.param_grads.accumulate_owned(dir.wi, r.dwi);
                        self.param_grads.accumulate_owned(dir.bi, r.dbi);
                        self.param_grads.accumulate_owned(dir.wh, r.dwh);
                        self.param_grads.accumulate_owned(dir.bh, r.dbh);
                        accumulate(&mut dx, r.dx);
                    }
                    accumulate(&mut grads[x.0], dx.expect("two directions"));
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let mut d = g.clone();
                    d.zip_mut_with(y, |d, &y| *d *= y * (1.0 - y));
                    accumulate(&mut grads[x.0], d);
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let mut d = g.clone();
                    d.zip_mut_with(y, |d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut grads[x.0], d);
                }
                Op::RowSoftmax(x) => {
                    let y = &node.value;
                    let mut d = &g * y;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                        let dot = drow.sum();
                        drow.zip_mut_with(&yrow, |dv, &yv| *dv -= dot * yv);
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::ConcatCols(xs) => {
                    let mut start = 0;
                    for x in xs {
                        let c = self.nodes[x.0].value.ncols();
                        accumulate(&mut grads[x.0], g.slice(s![.., start..start + c]).to_owned());
                        start += c;
                    }
                }
                Op::ConcatRows(xs) => {
                    let mut start = 0;
                    for x in xs {
                        let r = self.nodes[x.0].value.nrows();
                        accumulate(&mut grads[x.0], g.slice(s![start..start + r, ..]).to_owned());
                        start += r;
                    }
                }
                Op::SliceCols { x, start } => {
                    let mut d = Array2::zeros(self.nodes[x.0].value.dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    accumulate(&mut grads[x.0], d);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da = g.dot(&bv.t());
                    let db = av.t().dot(&g);
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da = g.dot(bv);
                    let db = g.t().dot(av);
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::MulConst { x, c } => accumulate(&mut grads[x.0], &g * c),
                Op::LogEps { x, eps } => {
                    let mut d = g.clone();
                    d.zip_mut_with(&self.nodes[x.0].value, |d, &v| *d /= v + eps);
                    accumulate(&mut grads[x.0], d);
                }
                Op::ColAffine { x, inv_scale } => accumulate(&mut grads[x.0], &g * inv_scale),
                Op::BlockMean { x, blocks } => {
                    let xv = &self.nodes[x.0].value;
                    let rows = xv.nrows() as f64;
                    let mut d = Array2::zeros(xv.dim());
                    for (p, &(start, len)) in blocks.iter().enumerate() {
                        let v = g[[0, p]] / (rows * len as f64);
                        d.slice_mut(s![.., start..start + len]).fill(v);
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::SelectionLoss { w, relevant } => {
                    let wv = self.nodes[w.0].value.row(0).to_vec();
                    let dw = crate::selection::selection_loss_grad_value(&wv, *relevant);
                    let d = Array2::from_shape_vec((1, dw.len()), dw).expect("row")
                        * g[[0, 0]];
                    accumulate(&mut grads[w.0], d);
                }
                Op::PitLoss {
                    est,
                    targets,
                    swapped,
                } => {
                    let s = g[[0, 0]];
                    let order = if *swapped { [1, 0] } else { [0, 1] };
                    for (u, &v) in order.iter().enumerate() {
                        let e = &self.nodes[est[u].0].value;
                        let d = (e - &targets[v]) * (2.0 * s);
                        accumulate(&mut grads[est[u].0], d);
                    }
                }
                Op::WeightedSum { x, weights } => {
                    accumulate(&mut grads[x.0], weights * g[[0, 0]]);
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
    }
}
