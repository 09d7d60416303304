//! Central finite differences for checking analytic gradients.

use crate::nn::Parameterized;

/// Perturbation used by every check.
pub const FD_STEP: f64 = 1e-6;

/// Gradients smaller than this are compared on an absolute scale: at a step
/// of 1e-6 the difference quotient carries roughly 1e-10 of round-off, which
/// would swamp a relative comparison of near-zero entries.
pub const GRADIENT_FLOOR: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, GRADIENT_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

/// `(f(x + h) − f(x − h)) / 2h` for coordinate `i`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + FD_STEP;
    let up = f(&p);
    p[i] = x[i] - FD_STEP;
    let down = f(&p);
    (up - down) / (2.0 * FD_STEP)
}

/// Worst relative error between `analytic` and the numerical gradient of `f`
/// at `x`.
pub fn check_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    assert_eq!(x.len(), analytic.len(), "one analytic entry per coordinate");
    (0..x.len())
        .map(|i| relative_error(analytic[i], central_difference(&mut f, x, i)))
        .fold(0.0, f64::max)
}

/// All trainable values of `net`, in visiting order.
pub fn flat_params<P: Parameterized + ?Sized>(net: &mut P) -> Vec<f64> {
    let mut out = Vec::new();
    net.visit_params(&mut |_, _, v, _| out.extend_from_slice(v));
    out
}

/// All accumulated gradients of `net`, in visiting order.
pub fn flat_grads<P: Parameterized + ?Sized>(net: &mut P) -> Vec<f64> {
    let mut out = Vec::new();
    net.visit_params(&mut |_, _, _, g| out.extend_from_slice(g));
    out
}

/// Adds `delta` to the `index`-th trainable value.
pub fn nudge_param<P: Parameterized + ?Sized>(net: &mut P, index: usize, delta: f64) {
    let mut offset = 0;
    net.visit_params(&mut |_, _, v, _| {
        if (offset..offset + v.len()).contains(&index) {
            v[index - offset] += delta;
        }
        offset += v.len();
    });
}

/// Worst relative error over parameter indices `which`, with `analytic`
/// holding the gradient of every parameter and `loss` evaluating the
/// objective at the current parameters.
pub fn check_params<P: Parameterized + ?Sized>(
    net: &mut P,
    analytic: &[f64],
    which: &[usize],
    mut loss: impl FnMut(&mut P) -> f64,
) -> f64 {
    which
        .iter()
        .map(|&i| {
            nudge_param(net, i, FD_STEP);
            let up = loss(net);
            nudge_param(net, i, -2.0 * FD_STEP);
            let down = loss(net);
            nudge_param(net, i, FD_STEP);
            relative_error(analytic[i], (up - down) / (2.0 * FD_STEP))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_a_cubic() {
        let x = [0.3, -1.2, 2.0];
        let analytic: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        let err = check_gradient(|p| p.iter().map(|v| v * v * v).sum(), &x, &analytic);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn catches_a_wrong_gradient() {
        let err = check_gradient(|p| p[0] * p[0], &[1.0], &[2.1]);
        assert!(err > 0.04);
    }

    #[test]
    fn floor_applies_near_zero() {
        assert_eq!(relative_error(0.0, 1e-9), 1e-9 / GRADIENT_FLOOR);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
