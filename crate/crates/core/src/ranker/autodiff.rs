//! A minimal reverse-mode tape over f64 vectors. Parameters are dense
//! matrices owned outside the tape; nodes are vectors.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// Sum of the given rows of a parameter matrix.
    Rows(usize, Vec<usize>),
    Sum(Vec<Var>),
    MatVec(usize, Var),
    AddBias(Var, usize),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Mask(Var, Vec<f64>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Forward values recorded against a borrowed parameter list.
pub struct Tape<'p> {
    params: &'p [Tensor],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn rows_sum(&mut self, param: usize, rows: Vec<usize>) -> Var {
        let p = &self.params[param];
        let mut value = vec![0.0; p.cols];
        for &r in &rows {
            for (v, w) in value.iter_mut().zip(p.row(r)) {
                *v += w;
            }
        }
        self.push(value, Op::Rows(param, rows))
    }

    pub fn sum(&mut self, parts: Vec<Var>) -> Var {
        assert!(!parts.is_empty(), "sum of no vectors");
        let mut value = self.value(parts[0]).to_vec();
        for p in &parts[1..] {
            let other = &self.nodes[p.0].value;
            assert_eq!(other.len(), value.len());
            for (v, o) in value.iter_mut().zip(other) {
                *v += o;
            }
        }
        self.push(value, Op::Sum(parts))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.sum(vec![a, b])
    }

    pub fn matvec(&mut self, param: usize, x: Var) -> Var {
        let w = &self.params[param];
        let xv = &self.nodes[x.0].value;
        assert_eq!(w.cols, xv.len(), "matvec shape");
        let value = (0..w.rows).map(|r| w.row(r).iter().zip(xv).map(|(a, b)| a * b).sum()).collect();
        self.push(value, Op::MatVec(param, x))
    }

    pub fn add_bias(&mut self, x: Var, param: usize) -> Var {
        let b = &self.params[param].data;
        let value = self.value(x).iter().zip(b).map(|(a, b)| a + b).collect();
        self.push(value, Op::AddBias(x, param))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|v| v.tanh()).collect();
        self.push(value, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|v| v.max(0.0)).collect();
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        self.push(value, Op::Sigmoid(x))
    }

    pub fn concat(&mut self, parts: Vec<Var>) -> Var {
        let value = parts.iter().flat_map(|p| self.nodes[p.0].value.iter().copied()).collect();
        self.push(value, Op::Concat(parts))
    }

    /// Element-wise product with a constant vector.
    pub fn mask(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let value = self.value(x).iter().zip(&mask).map(|(a, m)| a * m).collect();
        self.push(value, Op::Mask(x, mask))
    }

    /// Propagate the given output adjoints back to parameter gradients.
    pub fn backward(&self, seeds: &[(Var, Vec<f64>)]) -> Vec<Tensor> {
        let mut grads: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect();
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let accumulate = |adj: &mut Vec<Option<Vec<f64>>>, v: Var, g: &[f64]| match &mut adj[v.0] {
            Some(a) => a.iter_mut().zip(g).for_each(|(a, g)| *a += g),
            slot @ None => *slot = Some(g.to_vec()),
        };
        for (v, g) in seeds {
            accumulate(&mut adj, *v, g);
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Rows(param, rows) => {
                    let t = &mut grads[*param];
                    for &r in rows {
                        for (w, d) in t.data[r * t.cols..(r + 1) * t.cols].iter_mut().zip(&g) {
                            *w += d;
                        }
                    }
                }
                Op::Sum(parts) => {
                    for p in parts {
                        accumulate(&mut adj, *p, &g);
                    }
                }
                Op::MatVec(param, x) => {
                    let w = &self.params[*param];
                    let xv = &self.nodes[x.0].value;
                    let gw = &mut grads[*param];
                    let mut gx = vec![0.0; w.cols];
                    for (r, d) in g.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        let base = r * w.cols;
                        for c in 0..w.cols {
                            gw.data[base + c] += d * xv[c];
                            gx[c] += d * w.data[base + c];
                        }
                    }
                    accumulate(&mut adj, *x, &gx);
                }
                Op::AddBias(x, param) => {
                    for (b, d) in grads[*param].data.iter_mut().zip(&g) {
                        *b += d;
                    }
                    accumulate(&mut adj, *x, &g);
                }
                Op::Tanh(x) => {
                    let gx: Vec<f64> = g.iter().zip(&node.value).map(|(d, y)| d * (1.0 - y * y)).collect();
                    accumulate(&mut adj, *x, &gx);
                }
                Op::Relu(x) => {
                    let gx: Vec<f64> =
                        g.iter().zip(&node.value).map(|(d, y)| if *y > 0.0 { *d } else { 0.0 }).collect();
                    accumulate(&mut adj, *x, &gx);
                }
                Op::Sigmoid(x) => {
                    let gx: Vec<f64> = g.iter().zip(&node.value).map(|(d, y)| d * y * (1.0 - y)).collect();
                    accumulate(&mut adj, *x, &gx);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        accumulate(&mut adj, *p, &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Mask(x, mask) => {
                    let gx: Vec<f64> = g.iter().zip(mask).map(|(d, m)| d * m).collect();
                    accumulate(&mut adj, *x, &gx);
                }
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Vec<Tensor> {
        vec![
            Tensor { rows: 2, cols: 3, data: vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6] },
            Tensor { rows: 1, cols: 2, data: vec![0.05, -0.1] },
        ]
    }

    fn objective(p: &[Tensor]) -> f64 {
        let mut tape = Tape::new(p);
        let x = tape.constant(vec![1.0, 2.0, -1.0]);
        let h = tape.matvec(0, x);
        let h = tape.add_bias(h, 1);
        let a = tape.tanh(h);
        let b = tape.sigmoid(h);
        let c = tape.relu(h);
        let s = tape.sum(vec![a, b, c]);
        let e = tape.rows_sum(0, vec![0, 1, 1]);
        let cat = tape.concat(vec![s, e]);
        let m = tape.mask(cat, vec![1.0, 2.0, 0.5, 0.0, 3.0]);
        tape.value(m).iter().map(|v| v * v).sum()
    }

    #[test]
    fn matches_finite_differences() {
        let p = params();
        let mut tape = Tape::new(&p);
        let x = tape.constant(vec![1.0, 2.0, -1.0]);
        let h = tape.matvec(0, x);
        let h = tape.add_bias(h, 1);
        let a = tape.tanh(h);
        let b = tape.sigmoid(h);
        let c = tape.relu(h);
        let s = tape.sum(vec![a, b, c]);
        let e = tape.rows_sum(0, vec![0, 1, 1]);
        let cat = tape.concat(vec![s, e]);
        let m = tape.mask(cat, vec![1.0, 2.0, 0.5, 0.0, 3.0]);
        let seed: Vec<f64> = tape.value(m).iter().map(|v| 2.0 * v).collect();
        let grads = tape.backward(&[(m, seed)]);
        for (ti, t) in p.iter().enumerate() {
            for i in 0..t.len() {
                let mut plus = p.clone();
                plus[ti].data[i] += 1e-6;
                let mut minus = p.clone();
                minus[ti].data[i] -= 1e-6;
                let fd = (objective(&plus) - objective(&minus)) / 2e-6;
                assert!((fd - grads[ti].data[i]).abs() < 1e-6, "param {ti}[{i}]: {fd} vs {}", grads[ti].data[i]);
            }
        }
    }

    #[test]
    fn unseeded_tape_has_zero_gradient() {
        let p = params();
        let mut tape = Tape::new(&p);
        let x = tape.constant(vec![1.0, 1.0, 1.0]);
        tape.matvec(0, x);
        let g = tape.backward(&[]);
        assert!(g.iter().all(|t| t.data.iter().all(|v| *v == 0.0)));
    }
}
