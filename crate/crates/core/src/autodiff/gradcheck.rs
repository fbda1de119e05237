//! Central finite-difference oracle for gradient verification.
//!
//! Independent of the tape: it only evaluates a black-box scalar function.
//! Test code compares its output against analytic gradients.

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], step: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + step;
        let hi = f(&xs);
        xs[i] = orig - step;
        let lo = f(&xs);
        xs[i] = orig;
        out.push((hi - lo) / (2.0 * step));
    }
    out
}

/// Max relative error between analytic and finite-difference gradients.
/// Entries where both are below `floor` count as exact.
pub fn max_rel_err(analytic: &[f64], fd: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), fd.len());
    analytic
        .iter()
        .zip(fd)
        .map(|(&a, &b)| {
            let mag = a.abs().max(b.abs());
            if mag < floor {
                0.0
            } else {
                (a - b).abs() / mag
            }
        })
        .fold(0.0, f64::max)
}

/// Convenience: check `analytic` against central differences of `f` at `x`.
pub fn check_gradient<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x: &[f64],
    analytic: &[f64],
    step: f64,
) -> f64 {
    let fd = finite_difference(f, x, step);
    max_rel_err(analytic, &fd, 1e-7)
}
