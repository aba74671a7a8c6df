//! One scalar test function per built-in operation, for finite-difference
//! checking with [`crate::check_gradients`].

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Region the random inputs of a case must be drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Any,
    /// Every component has magnitude at least 0.1 (kinks of `abs`/`relu`).
    AwayFromZero,
    /// Every component in `[0.2, 2]`.
    Positive,
}

pub struct OpCase {
    pub name: &'static str,
    pub input_len: usize,
    pub domain: Domain,
    pub f: fn(&mut Graph, Var) -> Result<Var>,
}

/// Weighted sum with fixed, non-uniform weights so every output element matters.
pub fn readout(g: &mut Graph, v: Var) -> Result<Var> {
    let n = g.value(v).len();
    let shape = g.shape(v).to_vec();
    let w: Vec<f64> = (0..n)
        .map(|i| 0.3 + ((i * 7 + 3) % 11) as f64 / 7.0 - 0.8)
        .collect();
    let w = g.constant(&Tensor::new(shape, w)?);
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

fn part(g: &mut Graph, x: Var, start: usize, shape: &[usize]) -> Result<Var> {
    let n: usize = shape.iter().product();
    let s = g.slice(x, start, n)?;
    g.reshape(s, shape.to_vec())
}

pub fn all() -> Vec<OpCase> {
    vec![
        OpCase {
            name: "add",
            input_len: 8,
            domain: Domain::Any,
            f: |g, x| {
                let (a, b) = (part(g, x, 0, &[4])?, part(g, x, 4, &[4])?);
                let y = g.add(a, b)?;
                let y = g.mul(y, a)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "sub",
            input_len: 8,
            domain: Domain::Any,
            f: |g, x| {
                let (a, b) = (part(g, x, 0, &[4])?, part(g, x, 4, &[4])?);
                let y = g.sub(a, b)?;
                let y = g.mul(y, b)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "mul",
            input_len: 8,
            domain: Domain::Any,
            f: |g, x| {
                let (a, b) = (part(g, x, 0, &[4])?, part(g, x, 4, &[4])?);
                let y = g.mul(a, b)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "scale_add_scalar",
            input_len: 4,
            domain: Domain::Any,
            f: |g, x| {
                let y = g.scale(x, -1.7);
                let y = g.add_scalar(y, 0.4);
                let y = g.mul(y, x)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "scalar_mul",
            input_len: 5,
            domain: Domain::Any,
            f: |g, x| {
                let a = part(g, x, 0, &[4])?;
                let s = part(g, x, 4, &[])?;
                let y = g.scalar_mul(a, s)?;
                let y = g.mul(y, a)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "matmul",
            input_len: 20,
            domain: Domain::Any,
            f: |g, x| {
                let a = part(g, x, 0, &[3, 4])?;
                let b = part(g, x, 12, &[4, 2])?;
                let y = g.matmul(a, b)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "transpose",
            input_len: 6,
            domain: Domain::Any,
            f: |g, x| {
                let a = part(g, x, 0, &[2, 3])?;
                let t = g.transpose(a)?;
                let y = g.matmul(t, a)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "concat",
            input_len: 7,
            domain: Domain::Any,
            f: |g, x| {
                let a = part(g, x, 0, &[3])?;
                let b = part(g, x, 3, &[4])?;
                let y = g.concat(&[b, a, b])?;
                let y = g.mul(y, y)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "concat_cols",
            input_len: 10,
            domain: Domain::Any,
            f: |g, x| {
                let a = part(g, x, 0, &[2, 3])?;
                let b = part(g, x, 6, &[2, 2])?;
                let y = g.concat_cols(&[a, b, a])?;
                let y = g.mul(y, y)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "slice",
            input_len: 12,
            domain: Domain::Any,
            f: |g, x| {
                let m = part(g, x, 0, &[4, 3])?;
                let r = g.slice(m, 1, 2)?;
                let y = g.mul(r, r)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "slice_cols",
            input_len: 12,
            domain: Domain::Any,
            f: |g, x| {
                let m = part(g, x, 0, &[3, 4])?;
                let c = g.slice_cols(m, 1, 2)?;
                let y = g.mul(c, c)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "gather_rows",
            input_len: 9,
            domain: Domain::Any,
            f: |g, x| {
                let m = part(g, x, 0, &[3, 3])?;
                let r = g.gather_rows(m, &[2, 0, 2, 1])?;
                let y = g.mul(r, r)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "add_row",
            input_len: 9,
            domain: Domain::Any,
            f: |g, x| {
                let m = part(g, x, 0, &[2, 3])?;
                let v = part(g, x, 6, &[3])?;
                let y = g.add_row(m, v)?;
                let y = g.mul(y, y)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "mul_row",
            input_len: 9,
            domain: Domain::Any,
            f: |g, x| {
                let m = part(g, x, 0, &[2, 3])?;
                let v = part(g, x, 6, &[3])?;
                let y = g.mul_row(m, v)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "mul_col",
            input_len: 8,
            domain: Domain::Any,
            f: |g, x| {
                let m = part(g, x, 0, &[2, 3])?;
                let v = part(g, x, 6, &[2, 1])?;
                let y = g.mul_col(m, v)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "sum",
            input_len: 5,
            domain: Domain::Any,
            f: |g, x| {
                let y = g.mul(x, x)?;
                let s = g.sum(y);
                let s = g.scale(s, 0.1);
                let t = g.tanh(s);
                Ok(g.sum(t))
            },
        },
        OpCase {
            name: "mean",
            input_len: 5,
            domain: Domain::Any,
            f: |g, x| {
                let y = g.mul(x, x)?;
                let s = g.mean(y)?;
                let t = g.sigmoid(s);
                Ok(g.sum(t))
            },
        },
        OpCase {
            name: "abs",
            input_len: 5,
            domain: Domain::AwayFromZero,
            f: |g, x| {
                let y = g.abs(x);
                readout(g, y)
            },
        },
        OpCase {
            name: "exp",
            input_len: 5,
            domain: Domain::Any,
            f: |g, x| {
                let y = g.exp(x);
                readout(g, y)
            },
        },
        OpCase {
            name: "log",
            input_len: 5,
            domain: Domain::Positive,
            f: |g, x| {
                let y = g.log(x)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "tanh",
            input_len: 5,
            domain: Domain::Any,
            f: |g, x| {
                let y = g.tanh(x);
                readout(g, y)
            },
        },
        OpCase {
            name: "sigmoid",
            input_len: 5,
            domain: Domain::Any,
            f: |g, x| {
                let y = g.sigmoid(x);
                readout(g, y)
            },
        },
        OpCase {
            name: "relu",
            input_len: 5,
            domain: Domain::AwayFromZero,
            f: |g, x| {
                let y = g.relu(x);
                let y = g.mul(y, x)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "softmax",
            input_len: 6,
            domain: Domain::Any,
            f: |g, x| {
                let m = part(g, x, 0, &[2, 3])?;
                let y = g.softmax(m)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "softmax_temperature",
            input_len: 6,
            domain: Domain::Any,
            f: |g, x| {
                let z = part(g, x, 0, &[5])?;
                let t = part(g, x, 5, &[])?;
                let t = g.scale(t, 0.5);
                let t = g.exp(t);
                let y = g.softmax_temperature(z, t)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "l2_normalize",
            input_len: 5,
            domain: Domain::AwayFromZero,
            f: |g, x| {
                let y = g.l2_normalize(x)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "normalize_rows",
            input_len: 6,
            domain: Domain::AwayFromZero,
            f: |g, x| {
                let m = part(g, x, 0, &[2, 3])?;
                let y = g.normalize_rows(m)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "layer_norm_rows",
            input_len: 8,
            domain: Domain::Any,
            f: |g, x| {
                let m = part(g, x, 0, &[2, 4])?;
                let y = g.layer_norm_rows(m)?;
                readout(g, y)
            },
        },
        OpCase {
            name: "dot",
            input_len: 8,
            domain: Domain::Any,
            f: |g, x| {
                let (a, b) = (part(g, x, 0, &[4])?, part(g, x, 4, &[4])?);
                let d = g.dot(a, b)?;
                let d = g.mul(d, d)?;
                Ok(g.sum(d))
            },
        },
        OpCase {
            name: "rows_dot",
            input_len: 12,
            domain: Domain::Any,
            f: |g, x| {
                let (a, b) = (part(g, x, 0, &[2, 3])?, part(g, x, 6, &[2, 3])?);
                let d = g.rows_dot(a, b)?;
                let d = g.mul(d, d)?;
                readout(g, d)
            },
        },
        OpCase {
            name: "cosine_similarity",
            input_len: 8,
            domain: Domain::AwayFromZero,
            f: |g, x| {
                let (a, b) = (part(g, x, 0, &[4])?, part(g, x, 4, &[4])?);
                let c = g.cosine_similarity(a, b)?;
                Ok(g.sum(c))
            },
        },
        OpCase {
            name: "cosine_rows",
            input_len: 12,
            domain: Domain::AwayFromZero,
            f: |g, x| {
                let (a, b) = (part(g, x, 0, &[2, 3])?, part(g, x, 6, &[2, 3])?);
                let c = g.cosine_rows(a, b)?;
                readout(g, c)
            },
        },
    ]
}
