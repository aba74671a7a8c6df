use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Compares reverse-mode gradients of a scalar function with central finite
/// differences.
///
/// `f` builds the function on a fresh graph from the input node. Returns the
/// maximum over components of `|autodiff - fd| / (|fd| + 1e-8)`.
pub fn check_gradients<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new();
        let xv = g.param(x);
        let y = f(&mut g, xv)?;
        g.backward(y)?;
        g.grad_or_zeros(xv)
    };
    let eval = |values: Vec<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let t = Tensor::new(x.shape().to_vec(), values)?;
        let xv = g.constant(&t);
        let y = f(&mut g, xv)?;
        if g.value(y).len() != 1 {
            return Err(Error::Contract(
                "check_gradients needs a scalar function".into(),
            ));
        }
        Ok(g.scalar(y))
    };
    let mut worst: f64 = 0.0;
    for (i, ad) in analytic.iter().enumerate() {
        let mut plus = x.values().to_vec();
        let mut minus = plus.clone();
        plus[i] += step;
        minus[i] -= step;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * step);
        worst = worst.max((ad - fd).abs() / (fd.abs() + 1e-8));
    }
    Ok(worst)
}
