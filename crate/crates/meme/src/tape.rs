//! Reverse-mode automatic differentiation on a flat arena of `f64` arrays.
//!
//! Every objective evaluation builds a fresh [`Tape`], pushes parameter and
//! input leaves, composes operations, and calls [`Tape::backward`] on a
//! scalar root. Scalars are represented as length-1 one-dimensional arrays
//! so the node value type stays uniform.
//!
//! [`Tape::detach`] implements the stop-gradient: the detached node carries
//! the same value but no parents, so no gradient flows through it.

use ndarray::{ArrayD, IxDyn};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// y = W x, W a 2-d leaf, x 1-d.
    MatVec { w: NodeId, x: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Tanh(NodeId),
    Abs(NodeId),
    Softplus(NodeId),
    Sum(NodeId),
    /// Scalar logsumexp over a set of scalar nodes.
    LogSumExp(Vec<NodeId>),
    /// logsumexp over the entries of one 1-d node.
    LogSumExpVec(NodeId),
    /// Contiguous slice [start, start+len) of a 1-d node.
    Slice { src: NodeId, start: usize, len: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: ArrayD<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn scalar(v: f64) -> ArrayD<f64> {
    ArrayD::from_elem(IxDyn(&[1]), v)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: ArrayD<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, v: f64) -> NodeId {
        self.leaf(scalar(v))
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<f64> {
        &self.nodes[id].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id].value[0]
    }

    /// Stop-gradient: same value, no parents.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let v = self.nodes[id].value.clone();
        self.leaf(v)
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let wv = &self.nodes[w].value;
        let xv = &self.nodes[x].value;
        let (rows, cols) = (wv.shape()[0], wv.shape()[1]);
        assert_eq!(cols, xv.len(), "matvec shape mismatch");
        let mut out = vec![0.0; rows];
        let ws = wv.as_slice().expect("contiguous weight");
        let xs = xv.as_slice().expect("contiguous input");
        for r in 0..rows {
            let row = &ws[r * cols..(r + 1) * cols];
            let mut acc = 0.0;
            for c in 0..cols {
                acc += row[c] * xs[c];
            }
            out[r] = acc;
        }
        let value = ArrayD::from_shape_vec(IxDyn(&[rows]), out).unwrap();
        self.push(value, Op::MatVec { w, x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value + &self.nodes[b].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value - &self.nodes[b].value;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value * &self.nodes[b].value;
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value / &self.nodes[b].value;
        self.push(v, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x * k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x + c);
        self.push(v, Op::AddConst(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::abs);
        self.push(v, Op::Abs(a))
    }

    /// softplus(x) = ln(1 + e^x), computed in a branch that avoids overflow.
    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(softplus_stable);
        self.push(v, Op::Softplus(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = scalar(self.nodes[a].value.sum());
        self.push(v, Op::Sum(a))
    }

    pub fn logsumexp_scalars(&mut self, parts: Vec<NodeId>) -> NodeId {
        assert!(!parts.is_empty());
        let xs: Vec<f64> = parts.iter().map(|&p| self.nodes[p].value[0]).collect();
        let v = scalar(logsumexp_slice(&xs));
        self.push(v, Op::LogSumExp(parts))
    }

    pub fn logsumexp_vec(&mut self, a: NodeId) -> NodeId {
        let xs = self.nodes[a].value.as_slice().unwrap().to_vec();
        let v = scalar(logsumexp_slice(&xs));
        self.push(v, Op::LogSumExpVec(a))
    }

    pub fn slice(&mut self, src: NodeId, start: usize, len: usize) -> NodeId {
        let s = self.nodes[src].value.as_slice().unwrap();
        let v = ArrayD::from_shape_vec(IxDyn(&[len]), s[start..start + len].to_vec()).unwrap();
        self.push(v, Op::Slice { src, start, len })
    }

    /// Gradients of the scalar node `root` with respect to every node.
    pub fn backward(&self, root: NodeId) -> Vec<Option<ArrayD<f64>>> {
        assert_eq!(self.nodes[root].value.len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        grads[root] = Some(scalar(1.0));
        for id in (0..=root).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        grads
    }

    fn accumulate(&self, id: NodeId, g: &ArrayD<f64>, grads: &mut [Option<ArrayD<f64>>]) {
        let node = &self.nodes[id];
        let mut bump = |target: NodeId, delta: ArrayD<f64>| {
            match &mut grads[target] {
                Some(acc) => *acc += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatVec { w, x } => {
                let wv = &self.nodes[*w].value;
                let xv = &self.nodes[*x].value;
                let (rows, cols) = (wv.shape()[0], wv.shape()[1]);
                let gs = g.as_slice().unwrap();
                let xs = xv.as_slice().unwrap();
                let ws = wv.as_slice().unwrap();
                let mut gw = vec![0.0; rows * cols];
                let mut gx = vec![0.0; cols];
                for r in 0..rows {
                    let gr = gs[r];
                    for c in 0..cols {
                        gw[r * cols + c] += gr * xs[c];
                        gx[c] += gr * ws[r * cols + c];
                    }
                }
                bump(*w, ArrayD::from_shape_vec(IxDyn(&[rows, cols]), gw).unwrap());
                bump(*x, ArrayD::from_shape_vec(IxDyn(&[cols]), gx).unwrap());
            }
            Op::Add(a, b) => {
                bump(*a, g.clone());
                bump(*b, g.clone());
            }
            Op::Sub(a, b) => {
                bump(*a, g.clone());
                bump(*b, g.mapv(|x| -x));
            }
            Op::Mul(a, b) => {
                let ga = g * &self.nodes[*b].value;
                let gb = g * &self.nodes[*a].value;
                bump(*a, ga);
                bump(*b, gb);
            }
            Op::Div(a, b) => {
                let bv = &self.nodes[*b].value;
                let ga = g / bv;
                let gb = -(g * &self.nodes[*a].value) / (bv * bv);
                bump(*a, ga);
                bump(*b, gb);
            }
            Op::Scale(a, k) => bump(*a, g.mapv(|x| x * k)),
            Op::AddConst(a) => bump(*a, g.clone()),
            Op::Exp(a) => bump(*a, g * &node.value),
            Op::Ln(a) => bump(*a, g / &self.nodes[*a].value),
            Op::Tanh(a) => {
                let d = node.value.mapv(|y| 1.0 - y * y);
                bump(*a, g * &d);
            }
            Op::Abs(a) => {
                let d = self.nodes[*a].value.mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                bump(*a, g * &d);
            }
            Op::Softplus(a) => {
                let d = self.nodes[*a].value.mapv(sigmoid);
                bump(*a, g * &d);
            }
            Op::Sum(a) => {
                let shape = self.nodes[*a].value.raw_dim();
                bump(*a, ArrayD::from_elem(shape, g[0]));
            }
            Op::LogSumExp(parts) => {
                let lse = node.value[0];
                let g0 = g[0];
                for &p in parts {
                    let w = (self.nodes[p].value[0] - lse).exp();
                    bump(p, scalar(g0 * w));
                }
            }
            Op::LogSumExpVec(a) => {
                let lse = node.value[0];
                let d = self.nodes[*a].value.mapv(|x| (x - lse).exp() * g[0]);
                bump(*a, d);
            }
            Op::Slice { src, start, len } => {
                let shape = self.nodes[*src].value.raw_dim();
                let mut full = ArrayD::zeros(shape);
                {
                    let fs = full.as_slice_mut().unwrap();
                    let gs = g.as_slice().unwrap();
                    fs[*start..*start + *len].copy_from_slice(gs);
                }
                bump(*src, full);
            }
        }
    }
}

pub fn softplus_stable(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logsumexp_slice(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
