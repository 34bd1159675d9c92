//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only tape of rank-2 tensors. Operations
//! compute their value eagerly and record which nodes they read;
//! [`Graph::backward`] walks the tape in reverse, accumulating gradients
//! into every tensor that requires them. Each training step builds a
//! fresh graph around long-lived parameter storage, so there is no state
//! to reset between steps.
//!
//! The op set is exactly what the decoders and the GraphSAGE classifier
//! need: affine layers, ReLU, two losses, codebook gather-sums, grouped
//! means, column concatenation, and an elementwise row rescale. No
//! general broadcasting.
//!
//! Training runs in `f32`; the gradient-check suite instantiates the same
//! code at `f64` (see [`check::grad_check`]).

mod check;
mod optim;

pub use check::grad_check;
pub use optim::{adamw_step, AdamWConfig, AdamWState};

use crate::error::{Error, Result};

/// Element type of a graph: `f32` for training, `f64` for checking.
pub trait Scalar:
    num_traits::Float + num_traits::NumAssignOps + Copy + std::fmt::Debug + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(self) -> f64 {
        self
    }
}

/// Handle to a tensor inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Relu { x: NodeId },
    RowScale { x: NodeId, v: NodeId },
    Concat { a: NodeId, b: NodeId },
    GroupMean { x: NodeId, group: usize },
    CodebookSum { books: Vec<NodeId>, idx: Vec<u32> },
    MseLoss { pred: NodeId, target: NodeId },
    CrossEntropy { logits: NodeId, labels: Vec<u32> },
}

/// One tape entry: a rank-2 row-major tensor plus its provenance.
#[derive(Debug)]
pub struct Tensor<T> {
    pub shape: [usize; 2],
    pub data: Vec<T>,
    pub grad: Option<Vec<T>>,
    pub requires_grad: bool,
    op: Op,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Append a leaf tensor.
    pub fn tensor_new(&mut self, shape: [usize; 2], data: Vec<T>, requires_grad: bool) -> Result<NodeId> {
        if shape[0] == 0 || shape[1] == 0 {
            return Err(Error::Shape(format!("empty tensor shape {shape:?}")));
        }
        if shape[0] * shape[1] != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {} elements, got {}",
                shape[0] * shape[1],
                data.len()
            )));
        }
        Ok(self.push(shape, data, requires_grad, Op::Leaf))
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, shape: [usize; 2], data: Vec<T>) -> Result<NodeId> {
        self.tensor_new(shape, data, false)
    }

    fn push(&mut self, shape: [usize; 2], data: Vec<T>, requires_grad: bool, op: Op) -> NodeId {
        debug_assert_eq!(shape[0] * shape[1], data.len());
        self.nodes.push(Tensor { shape, data, grad: None, requires_grad, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn node(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: NodeId) -> [usize; 2] {
        self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        &self.nodes[id.0].data
    }

    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn any_requires(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// `y = x @ w + b` with `x: [n, i]`, `w: [i, o]`, `b: [1, o]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let [n, i] = self.shape(x);
        let [wi, o] = self.shape(w);
        if wi != i || self.shape(b) != [1, o] {
            return Err(Error::Shape(format!(
                "affine: x {:?} @ w {:?} + b {:?}",
                self.shape(x),
                self.shape(w),
                self.shape(b)
            )));
        }
        let mut out = vec![T::zero(); n * o];
        {
            let xv = &self.nodes[x.0].data;
            let wv = &self.nodes[w.0].data;
            let bv = &self.nodes[b.0].data;
            for r in 0..n {
                let row = &mut out[r * o..(r + 1) * o];
                row.copy_from_slice(bv);
                for k in 0..i {
                    let xr = xv[r * i + k];
                    if xr != T::zero() {
                        let wrow = &wv[k * o..(k + 1) * o];
                        for (slot, &wkj) in row.iter_mut().zip(wrow) {
                            *slot += xr * wkj;
                        }
                    }
                }
            }
        }
        let req = self.any_requires(&[x, w, b]);
        Ok(self.push([n, o], out, req, Op::Affine { x, w, b }))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.shape(x);
        let out: Vec<T> = self.nodes[x.0].data.iter().map(|&v| v.max(T::zero())).collect();
        let req = self.any_requires(&[x]);
        Ok(self.push(shape, out, req, Op::Relu { x }))
    }

    /// Scale every row of `x: [n, d]` elementwise by `v: [1, d]`.
    pub fn row_scale(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let [n, d] = self.shape(x);
        if self.shape(v) != [1, d] {
            return Err(Error::Shape(format!(
                "row_scale: x {:?} by v {:?}",
                self.shape(x),
                self.shape(v)
            )));
        }
        let mut out = vec![T::zero(); n * d];
        {
            let xv = &self.nodes[x.0].data;
            let vv = &self.nodes[v.0].data;
            for r in 0..n {
                for j in 0..d {
                    out[r * d + j] = xv[r * d + j] * vv[j];
                }
            }
        }
        let req = self.any_requires(&[x, v]);
        Ok(self.push([n, d], out, req, Op::RowScale { x, v }))
    }

    /// `[n, d1] ++ [n, d2] -> [n, d1 + d2]` along columns.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let [n, d1] = self.shape(a);
        let [nb, d2] = self.shape(b);
        if n != nb {
            return Err(Error::Shape(format!(
                "concat: {:?} with {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = Vec::with_capacity(n * (d1 + d2));
        for r in 0..n {
            out.extend_from_slice(&self.nodes[a.0].data[r * d1..(r + 1) * d1]);
            out.extend_from_slice(&self.nodes[b.0].data[r * d2..(r + 1) * d2]);
        }
        let req = self.any_requires(&[a, b]);
        Ok(self.push([n, d1 + d2], out, req, Op::Concat { a, b }))
    }

    /// Mean over consecutive blocks of `group` rows:
    /// `[g * group, d] -> [g, d]`.
    pub fn group_mean(&mut self, x: NodeId, group: usize) -> Result<NodeId> {
        let [rows, d] = self.shape(x);
        if group == 0 || rows % group != 0 {
            return Err(Error::Shape(format!(
                "group_mean: {rows} rows do not split into blocks of {group}"
            )));
        }
        let g = rows / group;
        let inv = T::from_f64(1.0 / group as f64);
        let mut out = vec![T::zero(); g * d];
        {
            let xv = &self.nodes[x.0].data;
            for b in 0..g {
                let slot = &mut out[b * d..(b + 1) * d];
                for r in 0..group {
                    let row = &xv[(b * group + r) * d..(b * group + r + 1) * d];
                    for (s, &v) in slot.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                for s in slot.iter_mut() {
                    *s *= inv;
                }
            }
        }
        let req = self.any_requires(&[x]);
        Ok(self.push([g, d], out, req, Op::GroupMean { x, group }))
    }

    /// Sum one row from each of `m` codebooks per output row.
    ///
    /// `books` are `m` tensors of shape `[c, d]`; `idx` is row-major
    /// `[n, m]`, entry `(r, j)` selecting the row of book `j` summed into
    /// output row `r`.
    pub fn codebook_sum(&mut self, books: &[NodeId], idx: &[u32]) -> Result<NodeId> {
        if books.is_empty() {
            return Err(Error::Shape("codebook_sum needs at least one codebook".into()));
        }
        let [c, d] = self.shape(books[0]);
        for &b in books {
            if self.shape(b) != [c, d] {
                return Err(Error::Shape(format!(
                    "codebooks disagree: {:?} vs {:?}",
                    [c, d],
                    self.shape(b)
                )));
            }
        }
        let m = books.len();
        if idx.len() % m != 0 {
            return Err(Error::Shape(format!(
                "index table of {} entries does not split into rows of {m}",
                idx.len()
            )));
        }
        let n = idx.len() / m;
        if n == 0 {
            return Err(Error::Shape("codebook_sum needs at least one row".into()));
        }
        for &e in idx {
            if e as usize >= c {
                return Err(Error::Range(format!("codebook index {e} out of range for c={c}")));
            }
        }
        let mut out = vec![T::zero(); n * d];
        for r in 0..n {
            let slot_range = r * d..(r + 1) * d;
            for (j, &book) in books.iter().enumerate() {
                let row = idx[r * m + j] as usize;
                let bv = &self.nodes[book.0].data[row * d..(row + 1) * d];
                for (s, &v) in out[slot_range.clone()].iter_mut().zip(bv) {
                    *s += v;
                }
            }
        }
        let req = self.any_requires(books);
        Ok(self.push([n, d], out, req, Op::CodebookSum { books: books.to_vec(), idx: idx.to_vec() }))
    }

    /// Mean squared error over all elements; scalar output.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let shape = self.shape(pred);
        if self.shape(target) != shape {
            return Err(Error::Shape(format!(
                "mse: prediction {:?} vs target {:?}",
                shape,
                self.shape(target)
            )));
        }
        let pv = &self.nodes[pred.0].data;
        let tv = &self.nodes[target.0].data;
        let mut acc = T::zero();
        for (&p, &t) in pv.iter().zip(tv) {
            let e = p - t;
            acc += e * e;
        }
        let loss = acc * T::from_f64(1.0 / pv.len() as f64);
        let req = self.any_requires(&[pred, target]);
        Ok(self.push([1, 1], vec![loss], req, Op::MseLoss { pred, target }))
    }

    /// Mean negative log-likelihood of `labels` under softmaxed `logits`;
    /// row maxima are subtracted before exponentiation.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[u32]) -> Result<NodeId> {
        let [n, k] = self.shape(logits);
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{n} logit rows but {} labels",
                labels.len()
            )));
        }
        for &l in labels {
            if l as usize >= k {
                return Err(Error::Range(format!("label {l} out of range for {k} classes")));
            }
        }
        let lv = &self.nodes[logits.0].data;
        let mut acc = 0.0f64;
        for (r, &label) in labels.iter().enumerate() {
            let row = &lv[r * k..(r + 1) * k];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum_exp: f64 = row.iter().map(|&x| (x - max).to_f64().exp()).sum();
            acc += max.to_f64() + sum_exp.ln() - row[label as usize].to_f64();
        }
        let loss = T::from_f64(acc / n as f64);
        let req = self.any_requires(&[logits]);
        Ok(self.push([1, 1], vec![loss], req, Op::CrossEntropy { logits, labels: labels.to_vec() }))
    }

    fn add_grad(&mut self, id: NodeId, delta: &[T]) {
        let node = &mut self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        let grad = node.grad.get_or_insert_with(|| vec![T::zero(); node.data.len()]);
        for (g, &d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Reverse pass from a scalar `loss`. Afterwards every tensor with
    /// `requires_grad` reachable from `loss` holds a populated `grad`.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[id].grad.clone() else { continue };
            match self.nodes[id].op.clone() {
                Op::Leaf => {}
                Op::Affine { x, w, b } => {
                    let [n, i] = self.shape(x);
                    let o = self.shape(w)[1];
                    if self.nodes[x.0].requires_grad {
                        let wv = &self.nodes[w.0].data;
                        let mut dx = vec![T::zero(); n * i];
                        for r in 0..n {
                            for k in 0..i {
                                let mut acc = T::zero();
                                let wrow = &wv[k * o..(k + 1) * o];
                                let grow = &g[r * o..(r + 1) * o];
                                for (&wkj, &gj) in wrow.iter().zip(grow) {
                                    acc += wkj * gj;
                                }
                                dx[r * i + k] = acc;
                            }
                        }
                        self.add_grad(x, &dx);
                    }
                    if self.nodes[w.0].requires_grad {
                        let xv = &self.nodes[x.0].data;
                        let mut dw = vec![T::zero(); i * o];
                        for r in 0..n {
                            for k in 0..i {
                                let xr = xv[r * i + k];
                                if xr != T::zero() {
                                    let grow = &g[r * o..(r + 1) * o];
                                    let wrow = &mut dw[k * o..(k + 1) * o];
                                    for (slot, &gj) in wrow.iter_mut().zip(grow) {
                                        *slot += xr * gj;
                                    }
                                }
                            }
                        }
                        self.add_grad(w, &dw);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = vec![T::zero(); o];
                        for r in 0..n {
                            for (slot, &gj) in db.iter_mut().zip(&g[r * o..(r + 1) * o]) {
                                *slot += gj;
                            }
                        }
                        self.add_grad(b, &db);
                    }
                }
                Op::Relu { x } => {
                    if self.nodes[x.0].requires_grad {
                        let dx: Vec<T> = self.nodes[x.0]
                            .data
                            .iter()
                            .zip(&g)
                            .map(|(&xv, &gv)| if xv > T::zero() { gv } else { T::zero() })
                            .collect();
                        self.add_grad(x, &dx);
                    }
                }
                Op::RowScale { x, v } => {
                    let [n, d] = self.shape(x);
                    if self.nodes[x.0].requires_grad {
                        let vv = &self.nodes[v.0].data;
                        let mut dx = vec![T::zero(); n * d];
                        for r in 0..n {
                            for j in 0..d {
                                dx[r * d + j] = g[r * d + j] * vv[j];
                            }
                        }
                        self.add_grad(x, &dx);
                    }
                    if self.nodes[v.0].requires_grad {
                        let xv = &self.nodes[x.0].data;
                        let mut dv = vec![T::zero(); d];
                        for r in 0..n {
                            for j in 0..d {
                                dv[j] += g[r * d + j] * xv[r * d + j];
                            }
                        }
                        self.add_grad(v, &dv);
                    }
                }
                Op::Concat { a, b } => {
                    let [n, d1] = self.shape(a);
                    let d2 = self.shape(b)[1];
                    if self.nodes[a.0].requires_grad {
                        let mut da = vec![T::zero(); n * d1];
                        for r in 0..n {
                            da[r * d1..(r + 1) * d1]
                                .copy_from_slice(&g[r * (d1 + d2)..r * (d1 + d2) + d1]);
                        }
                        self.add_grad(a, &da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = vec![T::zero(); n * d2];
                        for r in 0..n {
                            db[r * d2..(r + 1) * d2]
                                .copy_from_slice(&g[r * (d1 + d2) + d1..(r + 1) * (d1 + d2)]);
                        }
                        self.add_grad(b, &db);
                    }
                }
                Op::GroupMean { x, group } => {
                    if self.nodes[x.0].requires_grad {
                        let [rows, d] = self.shape(x);
                        let inv = T::from_f64(1.0 / group as f64);
                        let mut dx = vec![T::zero(); rows * d];
                        for r in 0..rows {
                            let b = r / group;
                            for j in 0..d {
                                dx[r * d + j] = g[b * d + j] * inv;
                            }
                        }
                        self.add_grad(x, &dx);
                    }
                }
                Op::CodebookSum { books, idx } => {
                    let m = books.len();
                    let d = self.shape(books[0])[1];
                    let n = idx.len() / m;
                    for (j, &book) in books.iter().enumerate() {
                        if !self.nodes[book.0].requires_grad {
                            continue;
                        }
                        let mut db = vec![T::zero(); self.nodes[book.0].data.len()];
                        for r in 0..n {
                            let row = idx[r * m + j] as usize;
                            let slot = &mut db[row * d..(row + 1) * d];
                            for (s, &gv) in slot.iter_mut().zip(&g[r * d..(r + 1) * d]) {
                                *s += gv;
                            }
                        }
                        self.add_grad(book, &db);
                    }
                }
                Op::MseLoss { pred, target } => {
                    let scale = g[0] * T::from_f64(2.0 / self.nodes[pred.0].data.len() as f64);
                    if self.nodes[pred.0].requires_grad || self.nodes[target.0].requires_grad {
                        let diff: Vec<T> = self.nodes[pred.0]
                            .data
                            .iter()
                            .zip(&self.nodes[target.0].data)
                            .map(|(&p, &t)| (p - t) * scale)
                            .collect();
                        if self.nodes[pred.0].requires_grad {
                            self.add_grad(pred, &diff);
                        }
                        if self.nodes[target.0].requires_grad {
                            let neg: Vec<T> = diff.iter().map(|&v| T::zero() - v).collect();
                            self.add_grad(target, &neg);
                        }
                    }
                }
                Op::CrossEntropy { logits, labels } => {
                    if self.nodes[logits.0].requires_grad {
                        let [n, k] = self.shape(logits);
                        let scale = g[0] * T::from_f64(1.0 / n as f64);
                        let lv = &self.nodes[logits.0].data;
                        let mut dl = vec![T::zero(); n * k];
                        for (r, &label) in labels.iter().enumerate() {
                            let row = &lv[r * k..(r + 1) * k];
                            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                            let sum_exp: f64 =
                                row.iter().map(|&x| (x - max).to_f64().exp()).sum();
                            for j in 0..k {
                                let p = (row[j] - max).to_f64().exp() / sum_exp;
                                let indicator = if j == label as usize { 1.0 } else { 0.0 };
                                dl[r * k + j] = T::from_f64(p - indicator) * scale;
                            }
                        }
                        self.add_grad(logits, &dl);
                    }
                }
            }
        }
        Ok(())
    }
}
