//! Reverse-mode gradients over a recorded tape of 2-D tensor operations.
//!
//! A [`Tape`] is built for one minibatch: parameters are copied in as leaves
//! tagged with their slot, operations append nodes, and [`Tape::backward`]
//! replays the nodes in reverse to produce `∂loss/∂parameter` for every slot
//! that took part. The tape is dropped after the optimizer step.
//!
//! Only the operations the models need are provided. Shape errors are
//! programming errors and panic with the offending shapes.

use std::collections::BTreeMap;

use ndarray::{s, Array2, Axis};

use super::func::{sigmoid, softplus};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMulNT(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Sum(Var),
    SegmentSum(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ScaleRows(Var, Vec<f64>),
    SliceCols(Var, usize),
    RowDot(Var, Var, Vec<usize>),
    BernoulliLogLik(Var, Vec<f64>),
    KlStdNormal(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_panic(op: &str, a: (usize, usize), b: (usize, usize)) -> ! {
    panic!("{}", Error::ShapeMismatch { op: "tape", detail: format!("{op}: {a:?} vs {b:?}") })
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.dim(), (1, 1), "scalar() on non-scalar node");
        val[[0, 0]]
    }

    fn dim(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Constant)
    }

    /// A parameter leaf; its gradient is reported under `slot`.
    pub fn param(&mut self, slot: usize, value: &Array2<f64>) -> Var {
        self.push(value.clone(), Op::Param(slot))
    }

    /// `a · bᵀ` for `a: n×k`, `b: m×k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (da, db) = (self.dim(a), self.dim(b));
        if da.1 != db.1 {
            shape_panic("matmul_nt", da, db);
        }
        let out = self.value(a).dot(&self.value(b).t());
        self.push(out, Op::MatMulNT(a, b))
    }

    /// `a + b` with `b: 1×m` broadcast over the rows of `a`.
    pub fn add_row_bias(&mut self, a: Var, b: Var) -> Var {
        let (da, db) = (self.dim(a), self.dim(b));
        if db.0 != 1 || da.1 != db.1 {
            shape_panic("add_row_bias", da, db);
        }
        let out = self.value(a) + self.value(b);
        self.push(out, Op::AddRowBias(a, b))
    }

    /// Affine layer `x · wᵀ + b` for `x: n×in`, `w: out×in`, `b: 1×out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul_nt(x, w);
        self.add_row_bias(xw, b)
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) {
        let (da, db) = (self.dim(a), self.dim(b));
        if da != db {
            shape_panic(op, da, db);
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape("add", a, b);
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape("sub", a, b);
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape("mul", a, b);
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) + c;
        self.push(out, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(softplus);
        self.push(out, Op::Softplus(a))
    }

    /// Sum of all entries, in row-major order.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().fold(0.0, |acc, v| acc + v);
        self.push(Array2::from_elem((1, 1), total), Op::Sum(a))
    }

    /// Row `t` of `a` is added into output row `segment[t]`; rows are
    /// accumulated in increasing `t`. Groups with no rows are zero.
    pub fn segment_sum(&mut self, a: Var, segment: Vec<usize>, groups: usize) -> Var {
        let val = self.value(a);
        assert_eq!(segment.len(), val.nrows(), "segment_sum: one segment id per row");
        let mut out = Array2::zeros((groups, val.ncols()));
        for (t, &g) in segment.iter().enumerate() {
            let mut dst = out.row_mut(g);
            dst += &val.row(t);
        }
        self.push(out, Op::SegmentSum(a, segment))
    }

    pub fn gather_rows(&mut self, a: Var, index: Vec<usize>) -> Var {
        let val = self.value(a);
        let out = val.select(Axis(0), &index);
        self.push(out, Op::GatherRows(a, index))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views)
            .unwrap_or_else(|e| panic!("concat_cols: {e}"));
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Multiply row `t` of `a` by the constant `factors[t]`.
    pub fn scale_rows(&mut self, a: Var, factors: Vec<f64>) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(factors.len(), out.nrows(), "scale_rows: one factor per row");
        for (mut row, &f) in out.rows_mut().into_iter().zip(&factors) {
            row *= f;
        }
        self.push(out, Op::ScaleRows(a, factors))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(out, Op::SliceCols(a, start))
    }

    /// `out[t] = a[t] · b[group[t]]`, an `n × 1` column.
    pub fn row_dot(&mut self, a: Var, b: Var, group: Vec<usize>) -> Var {
        let (da, db) = (self.dim(a), self.dim(b));
        if da.1 != db.1 || group.len() != da.0 {
            shape_panic("row_dot", da, db);
        }
        let (av, bv) = (self.value(a), self.value(b));
        let out = Array2::from_shape_fn((da.0, 1), |(t, _)| {
            av.row(t).iter().zip(bv.row(group[t]).iter()).fold(0.0, |acc, (x, y)| acc + x * y)
        });
        self.push(out, Op::RowDot(a, b, group))
    }

    /// `Σ x·l − softplus(l)` over all entries of the logits `l`.
    pub fn bernoulli_log_lik(&mut self, logits: Var, targets: Vec<f64>) -> Var {
        let val = self.value(logits);
        assert_eq!(targets.len(), val.len(), "bernoulli_log_lik: one target per logit");
        let total = val
            .iter()
            .zip(&targets)
            .fold(0.0, |acc, (&l, &x)| acc + x * l - softplus(l));
        self.push(Array2::from_elem((1, 1), total), Op::BernoulliLogLik(logits, targets))
    }

    /// `Σ KL[N(μ, σ²) ‖ N(0, 1)]` over all entries.
    pub fn kl_std_normal(&mut self, mean: Var, std: Var) -> Var {
        self.same_shape("kl_std_normal", mean, std);
        let total = self
            .value(mean)
            .iter()
            .zip(self.value(std).iter())
            .fold(0.0, |acc, (&m, &s)| acc + 0.5 * (m * m + s * s - 1.0) - s.ln());
        self.push(Array2::from_elem((1, 1), total), Op::KlStdNormal(mean, std))
    }

    /// Gradients of the scalar `root` with respect to every leaf.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let (rows, cols) = self.dim(root);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarRoot { rows, cols });
        }
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Array2::ones((1, 1)));
        let mut grads = Gradients::default();

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {
                    grads.leaves.insert(i, g);
                }
                Op::Param(slot) => {
                    match grads.params.get_mut(slot) {
                        Some(acc) => *acc += &g,
                        None => {
                            grads.params.insert(*slot, g.clone());
                        }
                    }
                    grads.leaves.insert(i, g);
                }
                Op::MatMulNT(a, b) => {
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::AddRowBias(a, b) => {
                    let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut adj, *b, db);
                    accumulate(&mut adj, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone());
                    accumulate(&mut adj, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, -&g);
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = &g * self.value(*b);
                    let db = &g * self.value(*a);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g * *c),
                Op::AddScalar(a) => accumulate(&mut adj, *a, g),
                Op::Tanh(a) => {
                    let mut d = g;
                    d.zip_mut_with(&node.value, |d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut adj, *a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g;
                    d.zip_mut_with(&node.value, |d, &y| *d *= y * (1.0 - y));
                    accumulate(&mut adj, *a, d);
                }
                Op::Softplus(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |d, &x| *d *= sigmoid(x));
                    accumulate(&mut adj, *a, d);
                }
                Op::Sum(a) => {
                    let d = Array2::from_elem(self.dim(*a), g[[0, 0]]);
                    accumulate(&mut adj, *a, d);
                }
                Op::SegmentSum(a, segment) => {
                    let d = g.select(Axis(0), segment);
                    accumulate(&mut adj, *a, d);
                }
                Op::GatherRows(a, index) => {
                    let mut d = Array2::zeros(self.dim(*a));
                    for (t, &r) in index.iter().enumerate() {
                        let mut dst = d.row_mut(r);
                        dst += &g.row(t);
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.dim(*p).1;
                        accumulate(&mut adj, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::ScaleRows(a, factors) => {
                    let mut d = g;
                    for (mut row, &f) in d.rows_mut().into_iter().zip(factors) {
                        row *= f;
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::SliceCols(a, start) => {
                    let mut d = Array2::zeros(self.dim(*a));
                    let w = g.ncols();
                    d.slice_mut(s![.., *start..*start + w]).assign(&g);
                    accumulate(&mut adj, *a, d);
                }
                Op::RowDot(a, b, group) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut da = Array2::zeros(av.raw_dim());
                    let mut db = Array2::zeros(bv.raw_dim());
                    for (t, &grp) in group.iter().enumerate() {
                        let gt = g[[t, 0]];
                        da.row_mut(t).scaled_add(gt, &bv.row(grp));
                        db.row_mut(grp).scaled_add(gt, &av.row(t));
                    }
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::BernoulliLogLik(l, targets) => {
                    let g0 = g[[0, 0]];
                    let lv = self.value(*l);
                    let mut d = Array2::zeros(lv.raw_dim());
                    for ((d, &l), &x) in d.iter_mut().zip(lv.iter()).zip(targets) {
                        *d = g0 * (x - sigmoid(l));
                    }
                    accumulate(&mut adj, *l, d);
                }
                Op::KlStdNormal(m, sd) => {
                    let g0 = g[[0, 0]];
                    let dm = self.value(*m) * g0;
                    let ds = self.value(*sd).mapv(|s| g0 * (s - 1.0 / s));
                    accumulate(&mut adj, *m, dm);
                    accumulate(&mut adj, *sd, ds);
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut adj[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    params: BTreeMap<usize, Array2<f64>>,
    leaves: BTreeMap<usize, Array2<f64>>,
}

impl Gradients {
    /// Gradient for a parameter slot, summed over every leaf carrying it.
    pub fn param(&self, slot: usize) -> Option<&Array2<f64>> {
        self.params.get(&slot)
    }

    /// Gradient with respect to a single leaf node.
    pub fn wrt(&self, v: Var) -> Option<&Array2<f64>> {
        self.leaves.get(&v.0)
    }

    pub fn slots(&self) -> impl Iterator<Item = (usize, &Array2<f64>)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }
}
