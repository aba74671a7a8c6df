//! Tape of operations recorded in creation order.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape once in reverse and accumulates adjoints into every node
//! that depends on a trainable leaf.

use crate::error::{domain_err, shape_err, Error, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ScalarMul(Var, Var),
    Matmul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>),
    ConcatCols(Vec<Var>),
    Slice { src: Var, start: usize },
    SliceCols { src: Var, start: usize },
    GatherRows { src: Var, rows: Vec<usize> },
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Sum(Var),
    Mean(Var),
    Abs(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax { src: Var, temperature: Option<Var> },
    L2Normalize(Var),
    NormalizeRows(Var),
    LayerNormRows(Var),
    Dot(Var, Var),
    RowsDot(Var, Var),
    Cosine(Var, Var),
    CosineRows(Var, Var),
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) shape: Vec<usize>,
    pub(crate) values: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) leaf: bool,
    pub(crate) op: Op,
}

impl Node {
    pub(crate) fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => (self.shape[0], self.values.len() / self.shape[0].max(1)),
        }
    }
}

/// Computation graph for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) grads: Vec<Option<Vec<f64>>>,
    pub(crate) consumed: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears gradients so `backward` may run again on the same tape.
    pub fn reset(&mut self) {
        self.grads.clear();
        self.consumed = false;
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.nodes.push(Node {
            shape,
            values,
            requires_grad,
            leaf: matches!(op, Op::Leaf),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Adds a leaf. Gradients are tracked when `t.requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad;
        let shape = t.shape().to_vec();
        self.push(shape, t.into_values(), rg, Op::Leaf)
    }

    /// Adds a trainable leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), true, Op::Leaf)
    }

    /// Adds a constant leaf.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), false, Op::Leaf)
    }

    pub fn scalar_const(&mut self, x: f64) -> Var {
        self.push(vec![], vec![x], false, Op::Leaf)
    }

    pub fn vector_const(&mut self, values: &[f64]) -> Var {
        self.push(vec![values.len()], values.to_vec(), false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].values[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros when nothing flowed into it.
    pub fn grad_or_zeros(&self, v: Var) -> Vec<f64> {
        self.grad(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.nodes[v.0].values.len()])
    }

    /// Snapshot of a node as a tensor, gradient included when available.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        let mut t =
            Tensor::new(n.shape.clone(), n.values.clone()).expect("node shape is consistent");
        t.requires_grad = n.requires_grad;
        t.grad = self.grad(v).map(<[f64]>::to_vec);
        t
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa != sb {
            return shape_err(op, format!("{sa:?} vs {sb:?}"));
        }
        Ok(())
    }

    fn matrix(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let n = &self.nodes[v.0];
        match n.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => shape_err(op, format!("expected a matrix, got shape {s:?}")),
        }
    }

    fn zip(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        rec: Op,
    ) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, values, rg, rec))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, rec: Op) -> Var {
        let values = self.nodes[a.0].values.iter().map(|x| f(*x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(&[a]);
        self.push(shape, values, rg, rec)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x + c, Op::AddScalar(a))
    }

    /// Multiplies every element of `a` by the single-element node `s`.
    pub fn scalar_mul(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.nodes[s.0].values.len() != 1 {
            return shape_err(
                "scalar_mul",
                format!("multiplier has shape {:?}", self.nodes[s.0].shape),
            );
        }
        let c = self.nodes[s.0].values[0];
        let values = self.nodes[a.0].values.iter().map(|x| x * c).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(&[a, s]);
        Ok(self.push(shape, values, rg, Op::ScalarMul(a, s)))
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix("matmul", a)?;
        let (k2, n) = self.matrix("matmul", b)?;
        if k != k2 {
            return shape_err("matmul", format!("[{m}, {k}] x [{k2}, {n}]"));
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![m, n], out, rg, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.matrix("transpose", a)?;
        let av = &self.nodes[a.0].values;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(vec![c, r], out, rg, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.nodes[a.0].values.len() {
            return shape_err(
                "reshape",
                format!("{:?} -> {shape:?}", self.nodes[a.0].shape),
            );
        }
        let values = self.nodes[a.0].values.clone();
        let rg = self.rg(&[a]);
        Ok(self.push(shape, values, rg, Op::Reshape(a)))
    }

    /// Concatenation along the leading axis (vectors end to end, matrices stacked by rows).
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return shape_err("concat", "no operands");
        };
        let tail = self.nodes[first.0]
            .shape
            .get(1..)
            .map(<[usize]>::to_vec)
            .unwrap_or_default();
        let mut lead = 0;
        let mut values = Vec::new();
        for p in parts {
            let s = &self.nodes[p.0].shape;
            if s.is_empty() || s[1..] != tail[..] {
                return shape_err(
                    "concat",
                    format!("operand shape {s:?} incompatible with trailing dims {tail:?}"),
                );
            }
            lead += s[0];
            values.extend_from_slice(&self.nodes[p.0].values);
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let rg = self.rg(parts);
        Ok(self.push(shape, values, rg, Op::Concat(parts.to_vec())))
    }

    /// Concatenation of matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return shape_err("concat_cols", "no operands");
        };
        let (rows, _) = self.matrix("concat_cols", *first)?;
        let mut total = 0;
        for p in parts {
            let (r, c) = self.matrix("concat_cols", *p)?;
            if r != rows {
                return shape_err("concat_cols", format!("row counts {rows} vs {r}"));
            }
            total += c;
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for p in parts {
                let (_, c) = self.nodes[p.0].dims2();
                out.extend_from_slice(&self.nodes[p.0].values[i * c..(i + 1) * c]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(vec![rows, total], out, rg, Op::ConcatCols(parts.to_vec())))
    }

    /// `len` entries (vectors) or rows (matrices) starting at `start` along the leading axis.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.nodes[a.0].shape.clone();
        let Some(&lead) = s.first() else {
            return shape_err("slice", "cannot slice a scalar");
        };
        if start + len > lead || len == 0 {
            return shape_err(
                "slice",
                format!("range {start}..{} out of 0..{lead}", start + len),
            );
        }
        let stride: usize = s[1..].iter().product();
        let values = self.nodes[a.0].values[start * stride..(start + len) * stride].to_vec();
        let mut shape = s;
        shape[0] = len;
        let rg = self.rg(&[a]);
        Ok(self.push(
            shape,
            values,
            rg,
            Op::Slice {
                src: a,
                start: start * stride,
            },
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix("slice_cols", a)?;
        if start + len > c || len == 0 {
            return shape_err(
                "slice_cols",
                format!("range {start}..{} out of 0..{c}", start + len),
            );
        }
        let av = &self.nodes[a.0].values;
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&av[i * c + start..i * c + start + len]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(vec![r, len], out, rg, Op::SliceCols { src: a, start }))
    }

    /// Row lookup, e.g. embedding tables. Rows may repeat.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.matrix("gather_rows", a)?;
        if let Some(bad) = rows.iter().find(|&&i| i >= r) {
            return shape_err("gather_rows", format!("row {bad} out of 0..{r}"));
        }
        let av = &self.nodes[a.0].values;
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            out.extend_from_slice(&av[i * c..(i + 1) * c]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(
            vec![rows.len(), c],
            out,
            rg,
            Op::GatherRows {
                src: a,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Adds the vector `v` to every row of `m`.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (r, c) = self.matrix("add_row", m)?;
        if self.nodes[v.0].values.len() != c {
            return shape_err(
                "add_row",
                format!("row vector {:?} vs {c} columns", self.nodes[v.0].shape),
            );
        }
        let mv = &self.nodes[m.0].values;
        let vv = &self.nodes[v.0].values;
        let out = (0..r * c).map(|i| mv[i] + vv[i % c]).collect();
        let rg = self.rg(&[m, v]);
        Ok(self.push(vec![r, c], out, rg, Op::AddRow(m, v)))
    }

    /// Multiplies every row of `m` elementwise by the vector `v`.
    pub fn mul_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (r, c) = self.matrix("mul_row", m)?;
        if self.nodes[v.0].values.len() != c {
            return shape_err(
                "mul_row",
                format!("row vector {:?} vs {c} columns", self.nodes[v.0].shape),
            );
        }
        let mv = &self.nodes[m.0].values;
        let vv = &self.nodes[v.0].values;
        let out = (0..r * c).map(|i| mv[i] * vv[i % c]).collect();
        let rg = self.rg(&[m, v]);
        Ok(self.push(vec![r, c], out, rg, Op::MulRow(m, v)))
    }

    /// Scales row `i` of `m` by entry `i` of the column `v` (`[r]` or `[r, 1]`).
    pub fn mul_col(&mut self, m: Var, v: Var) -> Result<Var> {
        let (r, c) = self.matrix("mul_col", m)?;
        if self.nodes[v.0].values.len() != r {
            return shape_err(
                "mul_col",
                format!("column {:?} vs {r} rows", self.nodes[v.0].shape),
            );
        }
        let mv = &self.nodes[m.0].values;
        let vv = &self.nodes[v.0].values;
        let out = (0..r * c).map(|i| mv[i] * vv[i / c]).collect();
        let rg = self.rg(&[m, v]);
        Ok(self.push(vec![r, c], out, rg, Op::MulCol(m, v)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].values.iter().sum();
        let rg = self.rg(&[a]);
        self.push(vec![], vec![s], rg, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.nodes[a.0].values.len();
        if n == 0 {
            return shape_err("mean", "empty operand");
        }
        let s: f64 = self.nodes[a.0].values.iter().sum();
        let rg = self.rg(&[a]);
        Ok(self.push(vec![], vec![s / n as f64], rg, Op::Mean(a)))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, f64::abs, Op::Abs(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(x) = self.nodes[a.0]
            .values
            .iter()
            .find(|x| **x <= 0.0 || x.is_nan())
        {
            return domain_err("log", format!("non-positive input {x}"));
        }
        Ok(self.map(a, f64::ln, Op::Log(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Softmax of a vector, or of every row of a matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.softmax_impl(a, None)
    }

    /// Softmax of `a / temperature`, row-wise for matrices. `temperature` is a
    /// positive single-element node and receives gradients.
    pub fn softmax_temperature(&mut self, a: Var, temperature: Var) -> Result<Var> {
        if self.nodes[temperature.0].values.len() != 1 {
            return shape_err("softmax_temperature", "temperature must hold one value");
        }
        let t = self.nodes[temperature.0].values[0];
        if t <= 0.0 || t.is_nan() {
            return domain_err(
                "softmax_temperature",
                format!("temperature {t} is not positive"),
            );
        }
        self.softmax_impl(a, Some(temperature))
    }

    fn softmax_impl(&mut self, a: Var, temperature: Option<Var>) -> Result<Var> {
        let node = &self.nodes[a.0];
        if node.shape.is_empty() || node.shape.len() > 2 {
            return shape_err("softmax", format!("shape {:?}", node.shape));
        }
        let (r, c) = node.dims2();
        let inv_t = temperature.map_or(1.0, |t| 1.0 / self.nodes[t.0].values[0]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &node.values[i * c..(i + 1) * c];
            let mx = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x * inv_t));
            let mut z = 0.0;
            for j in 0..c {
                let e = (row[j] * inv_t - mx).exp();
                out[i * c + j] = e;
                z += e;
            }
            for o in &mut out[i * c..(i + 1) * c] {
                *o /= z;
            }
        }
        let shape = node.shape.clone();
        let mut deps = vec![a];
        deps.extend(temperature);
        let rg = self.rg(&deps);
        Ok(self.push(
            shape,
            out,
            rg,
            Op::Softmax {
                src: a,
                temperature,
            },
        ))
    }

    /// `a / ||a||_2` for a vector.
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        let n = norm(&self.nodes[a.0].values);
        if n == 0.0 || !n.is_finite() {
            return domain_err("l2_normalize", format!("norm is {n}"));
        }
        Ok(self.map(a, |x| x / n, Op::L2Normalize(a)))
    }

    /// Each row of a matrix scaled to unit L2 norm.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.matrix("normalize_rows", a)?;
        let av = &self.nodes[a.0].values;
        let mut out = av.clone();
        for i in 0..r {
            let n = norm(&av[i * c..(i + 1) * c]);
            if n == 0.0 || !n.is_finite() {
                return domain_err("normalize_rows", format!("row {i} has norm {n}"));
            }
            for x in &mut out[i * c..(i + 1) * c] {
                *x /= n;
            }
        }
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(&[a]);
        Ok(self.push(shape, out, rg, Op::NormalizeRows(a)))
    }

    /// Per-row standardization to zero mean and unit variance.
    pub fn layer_norm_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.matrix("layer_norm_rows", a)?;
        let av = &self.nodes[a.0].values;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &av[i * c..(i + 1) * c];
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for j in 0..c {
                out[i * c + j] = (row[j] - mu) * inv;
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(vec![r, c], out, rg, Op::LayerNormRows(a)))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot", a, b)?;
        let d = dot(&self.nodes[a.0].values, &self.nodes[b.0].values);
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![], vec![d], rg, Op::Dot(a, b)))
    }

    /// Dot product of corresponding rows, giving a vector.
    pub fn rows_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("rows_dot", a, b)?;
        let (r, c) = self.matrix("rows_dot", a)?;
        let (av, bv) = (&self.nodes[a.0].values, &self.nodes[b.0].values);
        let out = (0..r)
            .map(|i| dot(&av[i * c..(i + 1) * c], &bv[i * c..(i + 1) * c]))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![r], out, rg, Op::RowsDot(a, b)))
    }

    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("cosine_similarity", a, b)?;
        let (av, bv) = (&self.nodes[a.0].values, &self.nodes[b.0].values);
        let (na, nb) = (norm(av), norm(bv));
        if na == 0.0 || nb == 0.0 {
            return domain_err("cosine_similarity", "zero-norm operand");
        }
        let c = dot(av, bv) / (na * nb);
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![], vec![c], rg, Op::Cosine(a, b)))
    }

    /// Cosine similarity of corresponding rows. A row pair where either side
    /// has zero norm yields 0 and passes no gradient.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("cosine_rows", a, b)?;
        let (r, c) = self.matrix("cosine_rows", a)?;
        let (av, bv) = (&self.nodes[a.0].values, &self.nodes[b.0].values);
        let out = (0..r)
            .map(|i| {
                let (x, y) = (&av[i * c..(i + 1) * c], &bv[i * c..(i + 1) * c]);
                let (nx, ny) = (norm(x), norm(y));
                if nx == 0.0 || ny == 0.0 {
                    0.0
                } else {
                    dot(x, y) / (nx * ny)
                }
            })
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![r], out, rg, Op::CosineRows(a, b)))
    }

    pub(crate) fn check_backward_target(&self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::Contract(
                "backward already ran on this graph; call reset first".into(),
            ));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract(
                "loss handle does not belong to this graph".into(),
            ));
        }
        if self.nodes[loss.0].values.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) const LN_EPS: f64 = LAYER_NORM_EPS;
