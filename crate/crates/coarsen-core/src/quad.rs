//! Adaptive Simpson quadrature for smooth real and complex integrands.

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 60;

fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Numerics(format!(
            "adaptive Simpson did not converge on [{a}, {b}]"
        )));
    }
    let l = simpson_step(f, a, fa, m, fm, left, flm, 0.5 * tol, depth + 1)?;
    let r = simpson_step(f, m, fm, b, fb, right, frm, 0.5 * tol, depth + 1)?;
    Ok(l + r)
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, fa, b, fb, whole, fm, tol, 0)
}

/// Integrate a complex-valued function along the straight segment from
/// `z0` to `z1`.
pub fn adaptive_simpson_segment<F: Fn(Complex64) -> Complex64>(
    f: F,
    z0: Complex64,
    z1: Complex64,
    tol: f64,
) -> Result<Complex64> {
    let dir = z1 - z0;
    let re = adaptive_simpson(|t| (f(z0 + dir * t) * dir).re, 0.0, 1.0, tol)?;
    let im = adaptive_simpson(|t| (f(z0 + dir * t) * dir).im, 0.0, 1.0, tol)?;
    Ok(Complex64::new(re, im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive_simpson(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn integrates_oscillatory() {
        let v = adaptive_simpson(|x| (10.0 * x).sin(), 0.0, 1.0, 1e-12).unwrap();
        let exact = (1.0 - (10.0f64).cos()) / 10.0;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn segment_integral_of_identity() {
        let z1 = Complex64::new(0.0, 0.9);
        let v = adaptive_simpson_segment(|z| z, Complex64::new(0.0, 0.0), z1, 1e-13).unwrap();
        assert!((v - z1 * z1 * 0.5).norm() < 1e-12);
    }
}
