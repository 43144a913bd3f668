//! Central finite-difference gradient verification.
//!
//! The checker never touches the tape: it re-evaluates a caller-supplied
//! scalar function with perturbed inputs, so it stays an independent
//! oracle for whatever analytic gradients the tape produced.

use super::tensor::Tensor;
use crate::error::Result;

/// Numeric gradient of `f` w.r.t. every entry of every tensor in `params`,
/// by central differences with the given step.
pub fn central_difference_gradients<F>(
    mut f: F,
    params: &[Tensor],
    step: f64,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let n = params[pi].values().len();
        let mut g = vec![0.0; n];
        for i in 0..n {
            let orig = work[pi].values()[i];
            work[pi].values_mut()[i] = orig + step;
            let plus = f(&work)?;
            work[pi].values_mut()[i] = orig - step;
            let minus = f(&work)?;
            work[pi].values_mut()[i] = orig;
            g[i] = (plus - minus) / (2.0 * step);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Worst relative disagreement between analytic and numeric gradients.
///
/// The denominator is floored so that the intrinsic noise of central
/// differences (machine epsilon times the loss magnitude over the step)
/// does not register as error on entries whose true gradient is zero.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Convenience: check a scalar function of a single flat parameter vector.
pub fn check_gradient<F>(
    f: F,
    params: &[Tensor],
    analytic: &[Vec<f64>],
    step: f64,
    floor: f64,
) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let numeric = central_difference_gradients(f, params, step)?;
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(&numeric) {
        worst = worst.max(max_relative_error(a, n, floor));
    }
    Ok(worst)
}
