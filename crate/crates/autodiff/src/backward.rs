use crate::error::Result;
use crate::graph::{dot, norm, Graph, Op, Var, LN_EPS};

struct Adjoints<'a> {
    grads: &'a mut [Option<Vec<f64>>],
    graph: &'a Graph,
}

impl Adjoints<'_> {
    fn slot(&mut self, v: Var) -> Option<&mut Vec<f64>> {
        let node = self.graph.node(v);
        if !node.requires_grad {
            return None;
        }
        let n = node.values.len();
        Some(self.grads[v.index()].get_or_insert_with(|| vec![0.0; n]))
    }

    /// `grad[v][i] += f(i)` for every element.
    fn add_with(&mut self, v: Var, f: impl Fn(usize) -> f64) {
        if let Some(g) = self.slot(v) {
            for (i, x) in g.iter_mut().enumerate() {
                *x += f(i);
            }
        }
    }
}

impl Graph {
    /// Accumulates d(loss)/d(node) into every node that depends on a trainable leaf.
    ///
    /// Nodes are visited once, in reverse creation order. The graph must be
    /// `reset` before another backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check_backward_target(loss)?;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.index()].requires_grad {
            grads[loss.index()] = Some(vec![1.0]);
        }
        for i in (0..=loss.index()).rev() {
            let node = &self.nodes[i];
            if node.leaf || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            {
                let mut adj = Adjoints {
                    grads: &mut grads,
                    graph: self,
                };
                propagate(&mut adj, self, Var(i), &g);
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        self.consumed = true;
        Ok(())
    }
}

fn propagate(adj: &mut Adjoints<'_>, graph: &Graph, out: Var, g: &[f64]) {
    let node = graph.node(out);
    let y = &node.values;
    let val = |v: Var| graph.value(v);
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            adj.add_with(*a, |i| g[i]);
            adj.add_with(*b, |i| g[i]);
        }
        Op::Sub(a, b) => {
            adj.add_with(*a, |i| g[i]);
            adj.add_with(*b, |i| -g[i]);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            adj.add_with(*a, |i| g[i] * bv[i]);
            adj.add_with(*b, |i| g[i] * av[i]);
        }
        Op::Scale(a, c) => adj.add_with(*a, |i| c * g[i]),
        Op::AddScalar(a) | Op::Reshape(a) => adj.add_with(*a, |i| g[i]),
        Op::ScalarMul(a, s) => {
            let c = val(*s)[0];
            let av = val(*a);
            adj.add_with(*a, |i| g[i] * c);
            let ds = dot(g, av);
            adj.add_with(*s, |_| ds);
        }
        Op::Matmul(a, b) => {
            let (m, k) = graph.node(*a).dims2();
            let (_, n) = graph.node(*b).dims2();
            let (av, bv) = (val(*a), val(*b));
            if let Some(ga) = adj.slot(*a) {
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        ga[i * k + p] += dot(grow, &bv[p * n..(p + 1) * n]);
                    }
                }
            }
            if let Some(gb) = adj.slot(*b) {
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let x = av[i * k + p];
                        if x == 0.0 {
                            continue;
                        }
                        for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *o += x * gv;
                        }
                    }
                }
            }
        }
        Op::Transpose(a) => {
            let (r, c) = graph.node(*a).dims2();
            // g has shape [c, r]
            adj.add_with(*a, |idx| {
                let (i, j) = (idx / c, idx % c);
                g[j * r + i]
            });
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for p in parts {
                let n = graph.node(*p).values.len();
                let off = offset;
                adj.add_with(*p, |i| g[off + i]);
                offset += n;
            }
        }
        Op::ConcatCols(parts) => {
            let (_, total) = node.dims2();
            let mut col = 0;
            for p in parts {
                let (_, c) = graph.node(*p).dims2();
                let start = col;
                adj.add_with(*p, |idx| g[(idx / c) * total + start + idx % c]);
                col += c;
            }
        }
        Op::Slice { src, start } => {
            if let Some(gs) = adj.slot(*src) {
                for (o, x) in gs[*start..*start + g.len()].iter_mut().zip(g) {
                    *o += x;
                }
            }
        }
        Op::SliceCols { src, start } => {
            let (_, c) = graph.node(*src).dims2();
            let (r, len) = node.dims2();
            if let Some(gs) = adj.slot(*src) {
                for i in 0..r {
                    for j in 0..len {
                        gs[i * c + start + j] += g[i * len + j];
                    }
                }
            }
        }
        Op::GatherRows { src, rows } => {
            let (_, c) = graph.node(*src).dims2();
            if let Some(gs) = adj.slot(*src) {
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..c {
                        gs[r * c + j] += g[k * c + j];
                    }
                }
            }
        }
        Op::AddRow(m, v) => {
            let (r, c) = node.dims2();
            adj.add_with(*m, |i| g[i]);
            adj.add_with(*v, |j| (0..r).map(|i| g[i * c + j]).sum());
        }
        Op::MulRow(m, v) => {
            let (r, c) = node.dims2();
            let (mv, vv) = (val(*m), val(*v));
            adj.add_with(*m, |i| g[i] * vv[i % c]);
            adj.add_with(*v, |j| (0..r).map(|i| g[i * c + j] * mv[i * c + j]).sum());
        }
        Op::MulCol(m, v) => {
            let (_, c) = node.dims2();
            let (mv, vv) = (val(*m), val(*v));
            adj.add_with(*m, |i| g[i] * vv[i / c]);
            adj.add_with(*v, |i| (0..c).map(|j| g[i * c + j] * mv[i * c + j]).sum());
        }
        Op::Sum(a) => adj.add_with(*a, |_| g[0]),
        Op::Mean(a) => {
            let n = graph.node(*a).values.len() as f64;
            adj.add_with(*a, |_| g[0] / n);
        }
        Op::Abs(a) => {
            let av = val(*a);
            // subgradient 0 at the kink
            adj.add_with(*a, |i| {
                let x = av[i];
                if x > 0.0 {
                    g[i]
                } else if x < 0.0 {
                    -g[i]
                } else {
                    0.0
                }
            });
        }
        Op::Exp(a) => adj.add_with(*a, |i| g[i] * y[i]),
        Op::Log(a) => {
            let av = val(*a);
            adj.add_with(*a, |i| g[i] / av[i]);
        }
        Op::Tanh(a) => adj.add_with(*a, |i| g[i] * (1.0 - y[i] * y[i])),
        Op::Sigmoid(a) => adj.add_with(*a, |i| g[i] * y[i] * (1.0 - y[i])),
        Op::Relu(a) => {
            let av = val(*a);
            adj.add_with(*a, |i| if av[i] > 0.0 { g[i] } else { 0.0 });
        }
        Op::Softmax { src, temperature } => {
            let (r, c) = node.dims2();
            let inv_t = temperature.map_or(1.0, |t| 1.0 / val(t)[0]);
            // gradient w.r.t. the scaled logits u = z / T
            let mut du = vec![0.0; r * c];
            for i in 0..r {
                let row = i * c..(i + 1) * c;
                let gy = dot(&g[row.clone()], &y[row.clone()]);
                for j in row {
                    du[j] = y[j] * (g[j] - gy);
                }
            }
            adj.add_with(*src, |i| du[i] * inv_t);
            if let Some(t) = temperature {
                let zv = val(*src);
                let dt: f64 = -(0..r * c).map(|i| du[i] * zv[i]).sum::<f64>() * inv_t * inv_t;
                adj.add_with(*t, |_| dt);
            }
        }
        Op::L2Normalize(a) => {
            let n = norm(val(*a));
            let yg = dot(y, g);
            adj.add_with(*a, |i| (g[i] - y[i] * yg) / n);
        }
        Op::NormalizeRows(a) => {
            let (r, c) = node.dims2();
            let av = val(*a);
            let mut dx = vec![0.0; r * c];
            for i in 0..r {
                let row = i * c..(i + 1) * c;
                let n = norm(&av[row.clone()]);
                let yg = dot(&y[row.clone()], &g[row.clone()]);
                for j in row {
                    dx[j] = (g[j] - y[j] * yg) / n;
                }
            }
            adj.add_with(*a, |i| dx[i]);
        }
        Op::LayerNormRows(a) => {
            let (r, c) = node.dims2();
            let av = val(*a);
            let mut dx = vec![0.0; r * c];
            for i in 0..r {
                let row = &av[i * c..(i + 1) * c];
                let mu = row.iter().sum::<f64>() / c as f64;
                let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / c as f64;
                let inv = 1.0 / (var + LN_EPS).sqrt();
                let gr = &g[i * c..(i + 1) * c];
                let yr = &y[i * c..(i + 1) * c];
                let mg = gr.iter().sum::<f64>() / c as f64;
                let mgy = dot(gr, yr) / c as f64;
                for j in 0..c {
                    dx[i * c + j] = inv * (gr[j] - mg - yr[j] * mgy);
                }
            }
            adj.add_with(*a, |i| dx[i]);
        }
        Op::Dot(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            adj.add_with(*a, |i| g[0] * bv[i]);
            adj.add_with(*b, |i| g[0] * av[i]);
        }
        Op::RowsDot(a, b) => {
            let c = graph.node(*a).dims2().1;
            let (av, bv) = (val(*a), val(*b));
            adj.add_with(*a, |i| g[i / c] * bv[i]);
            adj.add_with(*b, |i| g[i / c] * av[i]);
        }
        Op::Cosine(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (na, nb) = (norm(av), norm(bv));
            let cs = y[0];
            adj.add_with(*a, |i| g[0] * (bv[i] / (na * nb) - cs * av[i] / (na * na)));
            adj.add_with(*b, |i| g[0] * (av[i] / (na * nb) - cs * bv[i] / (nb * nb)));
        }
        Op::CosineRows(a, b) => {
            let (r, c) = graph.node(*a).dims2();
            let (av, bv) = (val(*a), val(*b));
            let mut da = vec![0.0; r * c];
            let mut db = vec![0.0; r * c];
            for i in 0..r {
                let row = i * c..(i + 1) * c;
                let (x, z) = (&av[row.clone()], &bv[row.clone()]);
                let (nx, nz) = (norm(x), norm(z));
                if nx == 0.0 || nz == 0.0 {
                    continue;
                }
                let cs = y[i];
                for j in 0..c {
                    da[i * c + j] = g[i] * (z[j] / (nx * nz) - cs * x[j] / (nx * nx));
                    db[i * c + j] = g[i] * (x[j] / (nx * nz) - cs * z[j] / (nz * nz));
                }
            }
            adj.add_with(*a, |i| da[i]);
            adj.add_with(*b, |i| db[i]);
        }
    }
}
