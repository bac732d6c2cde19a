//! Finite-difference gradient verification helpers.
//!
//! Used by tests throughout the workspace and by the `gradcheck` command.
//! Always runs in 64-bit with central differences.

use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-4;

/// Central finite differences of a scalar function at `x0`, coordinate by
/// coordinate.
pub fn finite_diff(f: impl Fn(&Tensor<f64>) -> f64, x0: &Tensor<f64>, step: f64) -> Tensor<f64> {
    let n = x0.len();
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let xp = bump(x0, i, step);
        let xm = bump(x0, i, -step);
        grad[i] = (f(&xp) - f(&xm)) / (2.0 * step);
    }
    Tensor::new(x0.shape().to_vec(), grad).unwrap()
}

fn bump(x: &Tensor<f64>, i: usize, delta: f64) -> Tensor<f64> {
    let mut data = x.data().to_vec();
    data[i] += delta;
    Tensor::new(x.shape().to_vec(), data).unwrap()
}

/// Max relative error between analytic and numeric gradients. Small values
/// are compared against a floor so finite-difference noise on negligible
/// coordinates does not dominate.
pub fn max_rel_err(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data().iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-5))
        .fold(0.0, f64::max)
}
