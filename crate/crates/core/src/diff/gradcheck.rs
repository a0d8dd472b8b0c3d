use super::graph::{Graph, Var};
use super::tensor::DenseArray;
use crate::error::{Error, Result};

/// Compare the reverse-mode gradient of a scalar function against central differences.
///
/// `f` builds the function on a fresh graph given the node holding `x`.
/// Returns `max_i |g_ad - g_fd| / max(1, |g_ad|, |g_fd|)`.
pub fn grad_check<F>(f: F, x: &DenseArray, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Config(format!("grad_check eps must be positive, got {eps}")));
    }
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let out = f(&mut g, xv)?;
    check_finite(g.value(out), "function value")?;
    let grads = g.backward(out)?;
    let analytic = grads.get(xv).cloned().unwrap_or_else(|| DenseArray::zeros(x.shape()));
    check_finite(&analytic, "reverse-mode gradient")?;

    let eval = |point: DenseArray| -> Result<f64> {
        let mut g = Graph::new();
        let xv = g.constant(point);
        let out = f(&mut g, xv)?;
        let v = g.value(out);
        if v.len() != 1 {
            return Err(Error::NonScalarOutput(v.shape().to_vec()));
        }
        check_finite(v, "perturbed function value")?;
        Ok(v.item())
    };

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let ad = analytic.data()[i];
        let err = (ad - fd).abs() / 1f64.max(ad.abs()).max(fd.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

fn check_finite(a: &DenseArray, what: &str) -> Result<()> {
    if a.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteValue(what.to_string()))
    }
}
