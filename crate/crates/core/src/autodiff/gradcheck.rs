//! Central finite differences, used to audit backpropagated gradients.

use super::Matrix;

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Numerical gradient of `f` with respect to every entry of every matrix in
/// `inputs`, by central differences with step `h`. `f` only ever sees
/// forward values, so it is independent of any adjoint code.
pub fn numerical_gradient<F>(mut f: F, inputs: &[Matrix], h: f64) -> Vec<Matrix>
where
    F: FnMut(&[Matrix]) -> f64,
{
    let mut work: Vec<Matrix> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Matrix::zeros(inputs[i].raw_dim());
        let dims = inputs[i].dim();
        for r in 0..dims.0 {
            for c in 0..dims.1 {
                let orig = work[i][[r, c]];
                work[i][[r, c]] = orig + h;
                let plus = f(&work);
                work[i][[r, c]] = orig - h;
                let minus = f(&work);
                work[i][[r, c]] = orig;
                g[[r, c]] = (plus - minus) / (2.0 * h);
            }
        }
        grads.push(g);
    }
    grads
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, 1e-12)` taken over all matrices jointly.
pub fn relative_error(analytic: &[Matrix], numeric: &[Matrix]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.dim(), n.dim());
        for (x, y) in a.iter().zip(n) {
            diff += (x - y) * (x - y);
            na += x * x;
            nn += y * y;
        }
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-12)
}
