//! Define-by-run computation graph with reverse-mode gradients.
//!
//! Values are computed eagerly when an op node is created; `backward`
//! walks the node list in reverse creation order (a valid topological
//! order because ops can only reference earlier nodes). Repeated
//! `backward` calls without rebuilding the graph accumulate gradients.

use crate::error::{Error, Result};
use crate::numerics::{Shape, Tensor};

/// Handle to a value in one graph. Ids are unique within their graph and
/// meaningless outside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ValueId(u32);

impl ValueId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    AddN(Vec<ValueId>),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    Tanh(ValueId),
    Sigmoid(ValueId),
    MatVec(ValueId, ValueId),
    Dot(ValueId, ValueId),
    Concat(Vec<ValueId>),
    Slice { src: ValueId, start: usize },
    Row { mat: ValueId, row: usize },
    Softmax(ValueId),
    CrossEntropy { probs: ValueId, target: usize },
    WeightedSum { weights: ValueId, items: Vec<ValueId> },
    Mean(Vec<ValueId>),
    Sum(ValueId),
    /// Whole LSTM cell step in one node; output is `[h; c]`, `saved`
    /// holds the gate activations `[i; f; g; o]` for the backward pass.
    LstmCell {
        x: ValueId,
        h_prev: ValueId,
        c_prev: ValueId,
        w_x: ValueId,
        w_h: ValueId,
        bias: ValueId,
        width: usize,
        saved: std::rc::Rc<Vec<f64>>,
    },
}

#[derive(Debug)]
struct Node {
    shape: Shape,
    data: Vec<f64>,
    grad: Vec<f64>,
    live: bool,
    op: Op,
}

/// Floor applied to probabilities before taking a log, keeping losses
/// finite on pathological early-training outputs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Shape, data: Vec<f64>, op: Op) -> ValueId {
        debug_assert_eq!(shape.len(), data.len());
        let grad = vec![0.0; data.len()];
        self.nodes.push(Node {
            shape,
            data,
            grad,
            live: false,
            op,
        });
        ValueId((self.nodes.len() - 1) as u32)
    }

    fn node(&self, id: ValueId) -> &Node {
        &self.nodes[id.idx()]
    }

    pub fn shape(&self, id: ValueId) -> Shape {
        self.node(id).shape
    }

    pub fn value(&self, id: ValueId) -> &[f64] {
        &self.node(id).data
    }

    pub fn grad(&self, id: ValueId) -> &[f64] {
        &self.node(id).grad
    }

    /// Value of a scalar node.
    pub fn scalar(&self, id: ValueId) -> f64 {
        debug_assert!(self.shape(id).is_scalar());
        self.node(id).data[0]
    }

    /// Leaf node holding a vector.
    pub fn vector(&mut self, data: Vec<f64>) -> ValueId {
        let shape = Shape::Vector(data.len());
        self.push(shape, data, Op::Leaf)
    }

    /// Leaf node holding a matrix (row-major).
    pub fn matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<ValueId> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} requires {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(self.push(Shape::Matrix(rows, cols), data, Op::Leaf))
    }

    /// Leaf node copied from a plain tensor.
    pub fn tensor(&mut self, t: &Tensor) -> ValueId {
        self.push(t.shape, t.data.clone(), Op::Leaf)
    }

    /// Zero vector leaf.
    pub fn zeros(&mut self, len: usize) -> ValueId {
        self.push(Shape::Vector(len), vec![0.0; len], Op::Leaf)
    }

    fn expect_vector(&self, id: ValueId, what: &str) -> Result<usize> {
        match self.shape(id) {
            Shape::Vector(n) => Ok(n),
            s => Err(Error::Shape(format!("{what}: expected vector, got {s:?}"))),
        }
    }

    /// Elementwise sum of same-shape values.
    pub fn add_n(&mut self, inputs: &[ValueId]) -> Result<ValueId> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("add_n of zero inputs".into()));
        }
        let shape = self.shape(inputs[0]);
        let mut data = self.node(inputs[0]).data.clone();
        for &id in &inputs[1..] {
            if self.shape(id) != shape {
                return Err(Error::Shape(format!(
                    "add_n: {:?} vs {:?}",
                    shape,
                    self.shape(id)
                )));
            }
            for (d, s) in data.iter_mut().zip(&self.node(id).data) {
                *d += s;
            }
        }
        Ok(self.push(shape, data, Op::AddN(inputs.to_vec())))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.add_n(&[a, b])
    }

    /// Elementwise product of two vectors.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let na = self.expect_vector(a, "mul lhs")?;
        let nb = self.expect_vector(b, "mul rhs")?;
        if na != nb {
            return Err(Error::Shape(format!("mul: {na} vs {nb}")));
        }
        let data: Vec<f64> = self
            .node(a)
            .data
            .iter()
            .zip(&self.node(b).data)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(Shape::Vector(na), data, Op::Mul(a, b)))
    }

    /// Multiply by a constant.
    pub fn scale(&mut self, x: ValueId, c: f64) -> ValueId {
        let shape = self.shape(x);
        let data: Vec<f64> = self.node(x).data.iter().map(|v| v * c).collect();
        self.push(shape, data, Op::Scale(x, c))
    }

    pub fn tanh(&mut self, x: ValueId) -> ValueId {
        let shape = self.shape(x);
        let data: Vec<f64> = self.node(x).data.iter().map(|v| v.tanh()).collect();
        self.push(shape, data, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: ValueId) -> ValueId {
        let shape = self.shape(x);
        let data: Vec<f64> = self
            .node(x)
            .data
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        self.push(shape, data, Op::Sigmoid(x))
    }

    /// Matrix(m,n) times Vector(n) -> Vector(m).
    pub fn matvec(&mut self, w: ValueId, x: ValueId) -> Result<ValueId> {
        let (m, n) = match self.shape(w) {
            Shape::Matrix(m, n) => (m, n),
            s => return Err(Error::Shape(format!("matvec: lhs must be matrix, got {s:?}"))),
        };
        let xn = self.expect_vector(x, "matvec rhs")?;
        if xn != n {
            return Err(Error::Shape(format!("matvec: {m}x{n} times vector of {xn}")));
        }
        let wd = &self.node(w).data;
        let xd = &self.node(x).data;
        let mut out = vec![0.0; m];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wd[r * n..(r + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * xd[j];
            }
            *o = acc;
        }
        Ok(self.push(Shape::Vector(m), out, Op::MatVec(w, x)))
    }

    /// Inner product of two vectors -> scalar.
    pub fn dot(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let na = self.expect_vector(a, "dot lhs")?;
        let nb = self.expect_vector(b, "dot rhs")?;
        if na != nb {
            return Err(Error::Shape(format!("dot: {na} vs {nb}")));
        }
        let v: f64 = self
            .node(a)
            .data
            .iter()
            .zip(&self.node(b).data)
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Shape::Vector(1), vec![v], Op::Dot(a, b)))
    }

    /// Concatenate vectors in order.
    pub fn concat(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero inputs".into()));
        }
        let mut data = Vec::new();
        for &id in parts {
            self.expect_vector(id, "concat part")?;
            data.extend_from_slice(&self.node(id).data);
        }
        let shape = Shape::Vector(data.len());
        Ok(self.push(shape, data, Op::Concat(parts.to_vec())))
    }

    /// Contiguous sub-range of a vector.
    pub fn slice(&mut self, src: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let n = self.expect_vector(src, "slice input")?;
        if start + len > n {
            return Err(Error::Shape(format!(
                "slice [{start}, {}) out of vector of {n}",
                start + len
            )));
        }
        let data = self.node(src).data[start..start + len].to_vec();
        Ok(self.push(Shape::Vector(len), data, Op::Slice { src, start }))
    }

    /// Row of a matrix as a vector (embedding lookup).
    pub fn row(&mut self, mat: ValueId, row: usize) -> Result<ValueId> {
        let (m, n) = match self.shape(mat) {
            Shape::Matrix(m, n) => (m, n),
            s => return Err(Error::Shape(format!("row: expected matrix, got {s:?}"))),
        };
        if row >= m {
            return Err(Error::InvalidArgument(format!(
                "row {row} out of matrix with {m} rows"
            )));
        }
        let data = self.node(mat).data[row * n..(row + 1) * n].to_vec();
        Ok(self.push(Shape::Vector(n), data, Op::Row { mat, row }))
    }

    /// Numerically stabilized softmax over a vector of logits.
    pub fn softmax(&mut self, logits: ValueId) -> Result<ValueId> {
        let n = self.expect_vector(logits, "softmax input")?;
        if n == 0 {
            return Err(Error::InvalidArgument("softmax of empty vector".into()));
        }
        let xs = &self.node(logits).data;
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("softmax logits".into()));
        }
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = xs.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = out.iter().sum();
        for o in out.iter_mut() {
            *o /= sum;
        }
        Ok(self.push(Shape::Vector(n), out, Op::Softmax(logits)))
    }

    /// Negative log-likelihood of `target` under a probability vector,
    /// with the probability floored at `PROB_FLOOR` before the log.
    pub fn cross_entropy(&mut self, probs: ValueId, target: usize) -> Result<ValueId> {
        let n = self.expect_vector(probs, "cross_entropy input")?;
        if target >= n {
            return Err(Error::InvalidArgument(format!(
                "cross_entropy target {target} out of range for {n} classes"
            )));
        }
        let p = self.node(probs).data[target].max(PROB_FLOOR);
        Ok(self.push(
            Shape::Vector(1),
            vec![-p.ln()],
            Op::CrossEntropy { probs, target },
        ))
    }

    /// Sum of `weights[i] * items[i]`; weights is a vector of the same
    /// length as `items`, items are same-shape vectors.
    pub fn weighted_sum(&mut self, weights: ValueId, items: &[ValueId]) -> Result<ValueId> {
        let k = self.expect_vector(weights, "weighted_sum weights")?;
        if k != items.len() || items.is_empty() {
            return Err(Error::Shape(format!(
                "weighted_sum: {k} weights vs {} items",
                items.len()
            )));
        }
        let n = self.expect_vector(items[0], "weighted_sum item")?;
        let mut out = vec![0.0; n];
        for (i, &item) in items.iter().enumerate() {
            if self.expect_vector(item, "weighted_sum item")? != n {
                return Err(Error::Shape("weighted_sum: ragged items".into()));
            }
            let w = self.node(weights).data[i];
            for (o, v) in out.iter_mut().zip(&self.node(item).data) {
                *o += w * v;
            }
        }
        Ok(self.push(
            Shape::Vector(n),
            out,
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
        ))
    }

    /// Arithmetic mean of same-length vectors.
    pub fn mean(&mut self, items: &[ValueId]) -> Result<ValueId> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("mean of zero inputs".into()));
        }
        let n = self.expect_vector(items[0], "mean item")?;
        let mut out = vec![0.0; n];
        for &item in items {
            if self.expect_vector(item, "mean item")? != n {
                return Err(Error::Shape("mean: ragged items".into()));
            }
            for (o, v) in out.iter_mut().zip(&self.node(item).data) {
                *o += v;
            }
        }
        let inv = 1.0 / items.len() as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
        Ok(self.push(Shape::Vector(n), out, Op::Mean(items.to_vec())))
    }

    /// Sum of a vector's components -> scalar.
    pub fn sum(&mut self, x: ValueId) -> Result<ValueId> {
        self.expect_vector(x, "sum input")?;
        let v: f64 = self.node(x).data.iter().sum();
        Ok(self.push(Shape::Vector(1), vec![v], Op::Sum(x)))
    }

    /// Fused LSTM cell step; returns a `[h'; c']` vector node. Weight
    /// layout is the fused 4-gate form with gate order input, forget,
    /// candidate, output.
    #[allow(clippy::too_many_arguments)]
    fn lstm_cell(
        &mut self,
        x: ValueId,
        h_prev: ValueId,
        c_prev: ValueId,
        w_x: ValueId,
        w_h: ValueId,
        bias: ValueId,
        width: usize,
    ) -> Result<ValueId> {
        let x_len = self.expect_vector(x, "lstm input")?;
        for (id, what, want) in [
            (h_prev, "lstm hidden state", width),
            (c_prev, "lstm cell state", width),
            (bias, "lstm bias", 4 * width),
        ] {
            if self.expect_vector(id, what)? != want {
                return Err(Error::Shape(format!(
                    "{what}: expected length {want}, got {:?}",
                    self.shape(id)
                )));
            }
        }
        for (id, what, want) in [
            (w_x, "lstm input weights", (4 * width, x_len)),
            (w_h, "lstm recurrent weights", (4 * width, width)),
        ] {
            match self.shape(id) {
                Shape::Matrix(r, c) if (r, c) == want => {}
                s => {
                    return Err(Error::Shape(format!(
                        "{what}: expected {}x{}, got {s:?}",
                        want.0, want.1
                    )))
                }
            }
        }

        let w = width;
        let mut pre = self.node(bias).data.clone();
        {
            let wx = &self.node(w_x).data;
            let xd = &self.node(x).data;
            for (r, p) in pre.iter_mut().enumerate() {
                let row = &wx[r * x_len..(r + 1) * x_len];
                let mut acc = 0.0;
                for j in 0..x_len {
                    acc += row[j] * xd[j];
                }
                *p += acc;
            }
            let wh = &self.node(w_h).data;
            let hd = &self.node(h_prev).data;
            for (r, p) in pre.iter_mut().enumerate() {
                let row = &wh[r * w..(r + 1) * w];
                let mut acc = 0.0;
                for j in 0..w {
                    acc += row[j] * hd[j];
                }
                *p += acc;
            }
        }
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut saved = vec![0.0; 4 * w];
        let mut data = vec![0.0; 2 * w];
        let c_prev_data = &self.node(c_prev).data;
        for k in 0..w {
            let i_g = sig(pre[k]);
            let f_g = sig(pre[w + k]);
            let g_g = pre[2 * w + k].tanh();
            let o_g = sig(pre[3 * w + k]);
            let c_new = f_g * c_prev_data[k] + i_g * g_g;
            saved[k] = i_g;
            saved[w + k] = f_g;
            saved[2 * w + k] = g_g;
            saved[3 * w + k] = o_g;
            data[k] = o_g * c_new.tanh();
            data[w + k] = c_new;
        }
        Ok(self.push(
            Shape::Vector(2 * w),
            data,
            Op::LstmCell {
                x,
                h_prev,
                c_prev,
                w_x,
                w_h,
                bias,
                width,
                saved: std::rc::Rc::new(saved),
            },
        ))
    }

    fn two_mut(&mut self, a: usize, b: usize) -> (&mut Node, &mut Node) {
        debug_assert_ne!(a, b);
        if a < b {
            let (l, r) = self.nodes.split_at_mut(b);
            (&mut l[a], &mut r[0])
        } else {
            let (l, r) = self.nodes.split_at_mut(a);
            (&mut r[0], &mut l[b])
        }
    }

    fn accumulate(&mut self, id: ValueId, contribution: impl Iterator<Item = f64>) {
        let node = &mut self.nodes[id.idx()];
        node.live = true;
        for (g, c) in node.grad.iter_mut().zip(contribution) {
            *g += c;
        }
    }

    /// Reverse-mode gradient propagation from a scalar loss. Gradients of
    /// all reachable nodes are accumulated into their `grad` buffers;
    /// repeated calls without rebuilding the graph keep accumulating.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if !self.shape(loss).is_scalar() {
            return Err(Error::InvalidArgument(format!(
                "backward requires a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        {
            let node = &mut self.nodes[loss.idx()];
            node.grad[0] += 1.0;
            node.live = true;
        }
        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].live {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::AddN(inputs) => {
                    let g = self.nodes[i].grad.clone();
                    for id in inputs {
                        self.accumulate(id, g.iter().copied());
                    }
                }
                Op::Mul(a, b) => {
                    let g = self.nodes[i].grad.clone();
                    if a == b {
                        let contrib: Vec<f64> = self.nodes[a.idx()]
                            .data
                            .iter()
                            .zip(&g)
                            .map(|(x, gi)| 2.0 * x * gi)
                            .collect();
                        self.accumulate(a, contrib.into_iter());
                    } else {
                        let ca: Vec<f64> = self.nodes[b.idx()]
                            .data
                            .iter()
                            .zip(&g)
                            .map(|(y, gi)| y * gi)
                            .collect();
                        let cb: Vec<f64> = self.nodes[a.idx()]
                            .data
                            .iter()
                            .zip(&g)
                            .map(|(x, gi)| x * gi)
                            .collect();
                        self.accumulate(a, ca.into_iter());
                        self.accumulate(b, cb.into_iter());
                    }
                }
                Op::Scale(x, c) => {
                    let contrib: Vec<f64> = self.nodes[i].grad.iter().map(|g| g * c).collect();
                    self.accumulate(x, contrib.into_iter());
                }
                Op::Tanh(x) => {
                    let contrib: Vec<f64> = self.nodes[i]
                        .data
                        .iter()
                        .zip(&self.nodes[i].grad)
                        .map(|(y, g)| (1.0 - y * y) * g)
                        .collect();
                    self.accumulate(x, contrib.into_iter());
                }
                Op::Sigmoid(x) => {
                    let contrib: Vec<f64> = self.nodes[i]
                        .data
                        .iter()
                        .zip(&self.nodes[i].grad)
                        .map(|(y, g)| y * (1.0 - y) * g)
                        .collect();
                    self.accumulate(x, contrib.into_iter());
                }
                Op::MatVec(w, x) => {
                    let g = self.nodes[i].grad.clone();
                    let n = match self.nodes[w.idx()].shape {
                        Shape::Matrix(_, n) => n,
                        _ => unreachable!(),
                    };
                    let (wn, xn) = self.two_mut(w.idx(), x.idx());
                    wn.live = true;
                    xn.live = true;
                    let wdata = &wn.data;
                    let wgrad = &mut wn.grad;
                    let xdata = &xn.data;
                    let xgrad = &mut xn.grad;
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &wdata[r * n..(r + 1) * n];
                        let grow = &mut wgrad[r * n..(r + 1) * n];
                        for j in 0..n {
                            grow[j] += gr * xdata[j];
                            xgrad[j] += row[j] * gr;
                        }
                    }
                }
                Op::Dot(a, b) => {
                    let g0 = self.nodes[i].grad[0];
                    if a == b {
                        let contrib: Vec<f64> = self.nodes[a.idx()]
                            .data
                            .iter()
                            .map(|x| 2.0 * x * g0)
                            .collect();
                        self.accumulate(a, contrib.into_iter());
                    } else {
                        let ca: Vec<f64> =
                            self.nodes[b.idx()].data.iter().map(|y| y * g0).collect();
                        let cb: Vec<f64> =
                            self.nodes[a.idx()].data.iter().map(|x| x * g0).collect();
                        self.accumulate(a, ca.into_iter());
                        self.accumulate(b, cb.into_iter());
                    }
                }
                Op::Concat(parts) => {
                    let g = self.nodes[i].grad.clone();
                    let mut offset = 0;
                    for id in parts {
                        let len = self.nodes[id.idx()].data.len();
                        self.accumulate(id, g[offset..offset + len].iter().copied());
                        offset += len;
                    }
                }
                Op::Slice { src, start } => {
                    let g = self.nodes[i].grad.clone();
                    let node = &mut self.nodes[src.idx()];
                    node.live = true;
                    for (j, gv) in g.iter().enumerate() {
                        node.grad[start + j] += gv;
                    }
                }
                Op::Row { mat, row } => {
                    let g = self.nodes[i].grad.clone();
                    let n = g.len();
                    let node = &mut self.nodes[mat.idx()];
                    node.live = true;
                    for (j, gv) in g.iter().enumerate() {
                        node.grad[row * n + j] += gv;
                    }
                }
                Op::Softmax(x) => {
                    let y = &self.nodes[i].data;
                    let g = &self.nodes[i].grad;
                    let inner: f64 = y.iter().zip(g).map(|(yi, gi)| yi * gi).sum();
                    let contrib: Vec<f64> =
                        y.iter().zip(g).map(|(yi, gi)| yi * (gi - inner)).collect();
                    self.accumulate(x, contrib.into_iter());
                }
                Op::CrossEntropy { probs, target } => {
                    let g0 = self.nodes[i].grad[0];
                    let p = self.nodes[probs.idx()].data[target].max(PROB_FLOOR);
                    let node = &mut self.nodes[probs.idx()];
                    node.live = true;
                    node.grad[target] -= g0 / p;
                }
                Op::WeightedSum { weights, items } => {
                    let g = self.nodes[i].grad.clone();
                    let wdata = self.nodes[weights.idx()].data.clone();
                    let mut wgrad = vec![0.0; wdata.len()];
                    for (k, &item) in items.iter().enumerate() {
                        let idata = &self.nodes[item.idx()].data;
                        wgrad[k] = idata.iter().zip(&g).map(|(v, gi)| v * gi).sum();
                    }
                    self.accumulate(weights, wgrad.into_iter());
                    for (k, item) in items.into_iter().enumerate() {
                        self.accumulate(item, g.iter().map(|gi| wdata[k] * gi));
                    }
                }
                Op::Mean(items) => {
                    let g = self.nodes[i].grad.clone();
                    let inv = 1.0 / items.len() as f64;
                    for item in items {
                        self.accumulate(item, g.iter().map(|gi| gi * inv));
                    }
                }
                Op::Sum(x) => {
                    let g0 = self.nodes[i].grad[0];
                    let len = self.nodes[x.idx()].data.len();
                    self.accumulate(x, std::iter::repeat(g0).take(len));
                }
                Op::LstmCell {
                    x,
                    h_prev,
                    c_prev,
                    w_x,
                    w_h,
                    bias,
                    width,
                    saved,
                } => {
                    let w = width;
                    let gv = self.nodes[i].grad.clone(); // [dh; dc]
                    let (i_g, rest) = saved.split_at(w);
                    let (f_g, rest) = rest.split_at(w);
                    let (g_g, o_g) = rest.split_at(w);
                    let c_prev_data = self.nodes[c_prev.idx()].data.clone();
                    let mut dpre = vec![0.0; 4 * w];
                    let mut dc_prev = vec![0.0; w];
                    {
                        let data = &self.nodes[i].data;
                        for k in 0..w {
                            let tc = data[w + k].tanh();
                            let dh = gv[k];
                            let dc_total = gv[w + k] + dh * o_g[k] * (1.0 - tc * tc);
                            let d_input = dc_total * g_g[k];
                            let d_forget = dc_total * c_prev_data[k];
                            let d_cand = dc_total * i_g[k];
                            let d_output = dh * tc;
                            dpre[k] = d_input * i_g[k] * (1.0 - i_g[k]);
                            dpre[w + k] = d_forget * f_g[k] * (1.0 - f_g[k]);
                            dpre[2 * w + k] = d_cand * (1.0 - g_g[k] * g_g[k]);
                            dpre[3 * w + k] = d_output * o_g[k] * (1.0 - o_g[k]);
                            dc_prev[k] = dc_total * f_g[k];
                        }
                    }
                    self.accumulate(bias, dpre.iter().copied());
                    self.accumulate(c_prev, dc_prev.into_iter());
                    for (mat, vec) in [(w_x, x), (w_h, h_prev)] {
                        let n = match self.nodes[mat.idx()].shape {
                            Shape::Matrix(_, n) => n,
                            _ => unreachable!(),
                        };
                        let (mn, vn) = self.two_mut(mat.idx(), vec.idx());
                        mn.live = true;
                        vn.live = true;
                        let mdata = &mn.data;
                        let mgrad = &mut mn.grad;
                        let vdata = &vn.data;
                        let vgrad = &mut vn.grad;
                        for (r, &gr) in dpre.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            let row = &mdata[r * n..(r + 1) * n];
                            let grow = &mut mgrad[r * n..(r + 1) * n];
                            for j in 0..n {
                                grow[j] += gr * vdata[j];
                                vgrad[j] += row[j] * gr;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Hidden and cell state of one LSTM layer, as graph values.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub hidden: ValueId,
    pub cell: ValueId,
    pub width: usize,
}

impl LstmState {
    /// All-zero initial state.
    pub fn zeros(g: &mut Graph, width: usize) -> Self {
        LstmState {
            hidden: g.zeros(width),
            cell: g.zeros(width),
            width,
        }
    }
}

/// Parameter handles for one LSTM cell: fused input and recurrent weight
/// matrices of shape (4*width, in_dim) and (4*width, width), plus a fused
/// bias of length 4*width. Gate order is input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmParamIds {
    pub w_x: ValueId,
    pub w_h: ValueId,
    pub bias: ValueId,
}

/// One step of a standard LSTM cell: forget/input/output gates, tanh
/// candidate, no peepholes. Computed as one fused graph node; the
/// returned hidden and cell handles are views into its `[h; c]` output.
pub fn lstm_step(
    g: &mut Graph,
    input: ValueId,
    state: &LstmState,
    params: &LstmParamIds,
) -> Result<LstmState> {
    let width = state.width;
    let hc = g.lstm_cell(
        input,
        state.hidden,
        state.cell,
        params.w_x,
        params.w_h,
        params.bias,
        width,
    )?;
    let hidden = g.slice(hc, 0, width)?;
    let cell = g.slice(hc, width, width)?;
    Ok(LstmState {
        hidden,
        cell,
        width,
    })
}
