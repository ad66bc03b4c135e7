//! Reverse-mode tape.
//!
//! Every operation appends a node holding its forward value. Node ids are
//! handed out in creation order, so inputs always precede their consumers and
//! the backward sweep is a single reverse pass over the node list.

use std::f64::consts::PI;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Relu(Var),
    Mean(Var),
    Sum(Var),
    Scale(Var, f64),
    CosineBasis(Var),
    RepeatRows(Var, usize),
    Gather(Var, Vec<usize>),
    DotConst(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape(format!("{op}: incompatible shapes {:?} and {:?}", a.shape(), b.shape()))
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

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.dims2().ok_or_else(|| shape_err("matmul", av, bv))?;
        let (k2, n) = bv.dims2().ok_or_else(|| shape_err("matmul", av, bv))?;
        if k != k2 || av.shape().len() != 2 || bv.shape().len() != 2 {
            return Err(shape_err("matmul", av, bv));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, false);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), tracked))
    }

    /// Elementwise sum. A rank-1 right operand whose length matches the column
    /// count of a rank-2 left operand is broadcast over rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let tracked = self.tracked(a) || self.tracked(b);
        if av.same_shape(bv) {
            let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
            let out = Tensor::new(av.shape().to_vec(), data)?;
            return Ok(self.push(out, Op::Add(a, b), tracked));
        }
        match (av.shape(), bv.shape()) {
            ([_, cols], [len]) if cols == len => {
                let cols = *cols;
                let bias = bv.data();
                let data = av
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + bias[i % cols])
                    .collect();
                let out = Tensor::new(av.shape().to_vec(), data)?;
                Ok(self.push(out, Op::AddRow(a, b), tracked))
            }
            _ => Err(shape_err("add", av, bv)),
        }
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(shape_err("sub", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::Sub(a, b), tracked))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(shape_err("hadamard", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::Hadamard(a, b), tracked))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same length");
        let tracked = self.tracked(a);
        self.push(out, Op::Relu(a), tracked)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(Error::Empty("mean of an empty tensor".into()));
        }
        let m = av.data().iter().sum::<f64>() / av.len() as f64;
        let tracked = self.tracked(a);
        Ok(self.push(Tensor::scalar(m), Op::Mean(a), tracked))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum::<f64>();
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(s), Op::Sum(a), tracked)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * factor).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same length");
        let tracked = self.tracked(a);
        self.push(out, Op::Scale(a, factor), tracked)
    }

    /// Maps fractions `[m]` to features `[m, n]` with entries `cos(π·i·τ)`, `i = 0..n`.
    pub fn cosine_basis(&mut self, taus: Var, n: usize) -> Result<Var> {
        let tv = self.value(taus);
        if tv.shape().len() != 1 {
            return Err(Error::Shape(format!(
                "cosine_basis expects a vector of fractions, got {:?}",
                tv.shape()
            )));
        }
        let out = cosine_features(tv.data(), n);
        let tracked = self.tracked(taus);
        Ok(self.push(out, Op::CosineBasis(taus), tracked))
    }

    /// Repeats every row of a `[m, c]` tensor `times` times, giving `[m·times, c]`.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        let av = self.value(a);
        let (m, c) = match av.shape() {
            [m, c] => (*m, *c),
            s => return Err(Error::Shape(format!("repeat_rows expects a matrix, got {s:?}"))),
        };
        let mut data = Vec::with_capacity(m * times * c);
        for r in 0..m {
            let row = &av.data()[r * c..(r + 1) * c];
            for _ in 0..times {
                data.extend_from_slice(row);
            }
        }
        let out = Tensor::matrix(m * times, c, data)?;
        let tracked = self.tracked(a);
        Ok(self.push(out, Op::RepeatRows(a, times), tracked))
    }

    /// Picks `a[r, index[r]]` from each row of a `[m, c]` tensor, giving `[m]`.
    pub fn gather(&mut self, a: Var, index: Vec<usize>) -> Result<Var> {
        let av = self.value(a);
        let (m, c) = match av.shape() {
            [m, c] => (*m, *c),
            s => return Err(Error::Shape(format!("gather expects a matrix, got {s:?}"))),
        };
        if index.len() != m {
            return Err(Error::Shape(format!(
                "gather: {} indices for {} rows",
                index.len(),
                m
            )));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= c) {
            return Err(Error::Shape(format!("gather: column {bad} out of {c}")));
        }
        let data = index
            .iter()
            .enumerate()
            .map(|(r, &i)| av.data()[r * c + i])
            .collect();
        let tracked = self.tracked(a);
        Ok(self.push(Tensor::vector(data), Op::Gather(a, index), tracked))
    }

    /// Scalar `Σ a ⊙ weights` with constant weights.
    pub fn dot_const(&mut self, a: Var, weights: Vec<f64>) -> Result<Var> {
        let av = self.value(a);
        if weights.len() != av.len() {
            return Err(Error::Shape(format!(
                "dot_const: {} weights for tensor of shape {:?}",
                weights.len(),
                av.shape()
            )));
        }
        let s = av.data().iter().zip(&weights).map(|(x, w)| x * w).sum();
        let tracked = self.tracked(a);
        Ok(self.push(Tensor::scalar(s), Op::DotConst(a, weights), tracked))
    }

    /// Runs the reverse sweep from a scalar output, consuming the tape.
    pub fn backward(self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got shape {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(out.shape(), 1.0));

        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.tracked {
                continue;
            }
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let g = upstream.data();
            let mut send = |var: Var, contribution: Tensor| {
                if !self.nodes[var.0].tracked {
                    return;
                }
                match &mut grads[var.0] {
                    Some(existing) => existing.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(upstream);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (m, k) = av.dims2().expect("checked in forward");
                    let n = bv.shape()[1];
                    if self.nodes[a.0].tracked {
                        let mut da = vec![0.0; m * k];
                        gemm(m, n, k, g, false, bv.data(), true, &mut da, false);
                        send(*a, Tensor::new(av.shape().to_vec(), da)?);
                    }
                    if self.nodes[b.0].tracked {
                        let mut db = vec![0.0; k * n];
                        gemm(k, m, n, av.data(), true, g, false, &mut db, false);
                        send(*b, Tensor::new(bv.shape().to_vec(), db)?);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, upstream.clone());
                    send(*b, upstream);
                }
                Op::AddRow(a, b) => {
                    let cols = self.nodes[b.0].value.len();
                    let mut db = vec![0.0; cols];
                    for (i, v) in g.iter().enumerate() {
                        db[i % cols] += v;
                    }
                    send(*b, Tensor::vector(db));
                    send(*a, upstream);
                }
                Op::Sub(a, b) => {
                    let neg = g.iter().map(|v| -v).collect();
                    send(*b, Tensor::new(upstream.shape().to_vec(), neg)?);
                    send(*a, upstream);
                }
                Op::Hadamard(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da = g.iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    let db = g.iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    send(*a, Tensor::new(av.shape().to_vec(), da)?);
                    send(*b, Tensor::new(bv.shape().to_vec(), db)?);
                }
                Op::Relu(a) => {
                    let av = &self.nodes[a.0].value;
                    let da = g
                        .iter()
                        .zip(av.data())
                        .map(|(x, &v)| if v > 0.0 { *x } else { 0.0 })
                        .collect();
                    send(*a, Tensor::new(av.shape().to_vec(), da)?);
                }
                Op::Mean(a) => {
                    let av = &self.nodes[a.0].value;
                    send(*a, Tensor::full(av.shape(), g[0] / av.len() as f64));
                }
                Op::Sum(a) => {
                    let av = &self.nodes[a.0].value;
                    send(*a, Tensor::full(av.shape(), g[0]));
                }
                Op::Scale(a, factor) => {
                    let da = g.iter().map(|x| x * factor).collect();
                    send(*a, Tensor::new(upstream.shape().to_vec(), da)?);
                }
                Op::CosineBasis(t) => {
                    let tv = &self.nodes[t.0].value;
                    let n = upstream.shape()[1];
                    let dt = tv
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(r, &tau)| {
                            (0..n)
                                .map(|i| {
                                    let w = PI * i as f64;
                                    -g[r * n + i] * w * (w * tau).sin()
                                })
                                .sum()
                        })
                        .collect();
                    send(*t, Tensor::vector(dt));
                }
                Op::RepeatRows(a, times) => {
                    let av = &self.nodes[a.0].value;
                    let (m, c) = (av.shape()[0], av.shape()[1]);
                    let mut da = vec![0.0; m * c];
                    for r in 0..m {
                        let dst = &mut da[r * c..(r + 1) * c];
                        for k in 0..*times {
                            let src = &g[(r * times + k) * c..(r * times + k + 1) * c];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    send(*a, Tensor::matrix(m, c, da)?);
                }
                Op::Gather(a, index) => {
                    let av = &self.nodes[a.0].value;
                    let c = av.shape()[1];
                    let mut da = vec![0.0; av.len()];
                    for (r, &i) in index.iter().enumerate() {
                        da[r * c + i] = g[r];
                    }
                    send(*a, Tensor::new(av.shape().to_vec(), da)?);
                }
                Op::DotConst(a, weights) => {
                    let av = &self.nodes[a.0].value;
                    let da = weights.iter().map(|w| w * g[0]).collect();
                    send(*a, Tensor::new(av.shape().to_vec(), da)?);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// `[m, n]` cosine features of the fractions, without recording on a tape.
pub fn cosine_features(taus: &[f64], n: usize) -> Tensor {
    let mut data = Vec::with_capacity(taus.len() * n);
    for &tau in taus {
        data.extend((0..n).map(|i| (PI * i as f64 * tau).cos()));
    }
    Tensor::matrix(taus.len(), n, data).expect("sized above")
}
