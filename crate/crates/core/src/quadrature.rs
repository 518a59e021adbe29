//! One-dimensional quadrature helpers.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is pre-split into `pieces` panels so narrow features far from
/// the midpoint are not missed by the first Simpson estimate.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, pieces: usize) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(Error::Parameter(format!("bad integration interval [{a}, {b}]")));
    }
    let pieces = pieces.max(1);
    let width = (b - a) / pieces as f64;
    let panel_tol = tol / pieces as f64;
    let mut total = 0.0;
    for i in 0..pieces {
        let lo = a + i as f64 * width;
        let hi = if i + 1 == pieces { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += simpson_step(f, lo, hi, flo, fmid, fhi, whole, panel_tol, MAX_DEPTH);
    }
    if !total.is_finite() {
        return Err(Error::Numeric("integrand produced a non-finite value".into()));
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return f64::NAN;
    }
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Trapezoid rule on `points` equally spaced nodes covering `[a, b]`.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> f64 {
    let n = points.max(2);
    let dx = (b - a) / (n - 1) as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n - 1 {
        s += f(a + i as f64 * dx);
    }
    s * dx
}

/// Trapezoid rule over pre-tabulated values with spacing `dx`.
pub fn trapezoid_values(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])) * dx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_gaussian() {
        let f = |x: f64| (-0.5 * x * x).exp();
        let v = adaptive_simpson(&f, -12.0, 12.0, 1e-12, 8).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn simpson_kink() {
        let v = adaptive_simpson(&|x: f64| x.abs(), -1.0, 2.0, 1e-10, 1).unwrap();
        assert!((v - 2.5).abs() < 1e-9);
    }

    #[test]
    fn simpson_rejects_bad_interval() {
        assert!(adaptive_simpson(&|x: f64| x, 1.0, 1.0, 1e-6, 1).is_err());
        assert!(adaptive_simpson(&|_| f64::NAN, 0.0, 1.0, 1e-6, 1).is_err());
    }

    #[test]
    fn trapezoid_polynomials() {
        assert!((trapezoid(|x| 3.0 * x + 1.0, 0.0, 2.0, 3) - 8.0).abs() < 1e-14);
        let vals: Vec<f64> = (0..5).map(|i| i as f64).collect();
        assert!((trapezoid_values(&vals, 0.5) - 4.0).abs() < 1e-14);
        assert_eq!(trapezoid_values(&[1.0], 1.0), 0.0);
    }
}
