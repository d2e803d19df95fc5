//! Special functions on the closed lower half-plane: the exponential
//! integral E1, its entire part Ein, the Gamma function, and the
//! verification functions x(ξ), y(ξ), K(ξ) used to bound |1 - e^{-θ ŵ*}|.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Euler-Mascheroni constant γ_E = -Γ'(1).
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Series/continued-fraction switch radius for E1. The two branches agree
/// to ~1e-13 on the annulus 3.5 <= |z| <= 4.5 (checked in tests).
const E1_SWITCH_RADIUS: f64 = 4.0;

const E1_CF_MAX_ITERS: usize = 2000;

/// A frequency ξ in the closed lower half-plane 𝕃⁻ (Im ξ <= 0), the
/// domain on which Fourier transforms of densities supported in [1, ∞)
/// extend analytically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPoint(Complex64);

impl FrequencyPoint {
    pub fn new(xi: Complex64) -> Result<Self> {
        if xi.im > 0.0 {
            return Err(Error::Domain(format!(
                "frequency {xi} lies in the open upper half-plane"
            )));
        }
        Ok(FrequencyPoint(xi))
    }

    pub fn real(xi: f64) -> Self {
        FrequencyPoint(Complex64::new(xi, 0.0))
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }
}

/// Entire part of the exponential integral:
/// Ein(z) = Σ_{k>=1} (-1)^{k+1} z^k / (k k!), so that
/// E1(z) = -ln z - γ_E + Ein(z).
pub fn ein(z: Complex64) -> Complex64 {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 1..=200 {
        let kf = k as f64;
        // term_k = (-1)^{k+1} z^k / k!
        term *= -z / kf;
        let contrib = -term / kf;
        sum += contrib;
        if contrib.norm() <= 1e-18 * (1.0 + sum.norm()) {
            break;
        }
    }
    sum
}

/// Exponential integral E1(z) = ∫_1^∞ e^{-z y} / y dy for |arg z| < π.
///
/// Power series for |z| <= 4, modified-Lentz continued fraction beyond.
/// Relative error is ~1e-13 away from the branch cut (the negative real
/// axis, where a domain error is returned).
pub fn exp_integral_e1(z: Complex64) -> Result<Complex64> {
    if z.norm() == 0.0 {
        return Err(Error::Domain("E1 is singular at z = 0".into()));
    }
    if z.im == 0.0 && z.re < 0.0 {
        return Err(Error::Domain(
            "E1 is not defined on the branch cut (negative real axis)".into(),
        ));
    }
    if z.norm() <= E1_SWITCH_RADIUS {
        Ok(-z.ln() - EULER_GAMMA + ein(z))
    } else {
        e1_continued_fraction(z)
    }
}

/// A&S 5.1.22: E1(z) = e^{-z} [1/(z+ 1/(1+ 1/(z+ 2/(1+ 2/(z+ ...)))))],
/// evaluated with the modified Lentz algorithm.
fn e1_continued_fraction(z: Complex64) -> Result<Complex64> {
    let tiny = Complex64::new(1e-300, 0.0);
    let mut f = tiny;
    let mut c = f;
    let mut d = Complex64::new(0.0, 0.0);
    for j in 1..=E1_CF_MAX_ITERS {
        // numerators 1,1,1,2,2,3,3,...; denominators z,1,z,1,...
        let a = Complex64::new((j / 2).max(1) as f64, 0.0);
        let b = if j % 2 == 1 {
            z
        } else {
            Complex64::new(1.0, 0.0)
        };
        d = b + a * d;
        if d.norm() == 0.0 {
            d = tiny;
        }
        c = b + a / c;
        if c.norm() == 0.0 {
            c = tiny;
        }
        d = d.inv();
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).norm() < 1e-16 {
            return Ok((-z).exp() * f);
        }
    }
    Err(Error::Numerics(format!(
        "E1 continued fraction did not converge at z = {z}"
    )))
}

/// ŵ*(ξ) = ∫_1^∞ e^{-i ξ y} / y dy = E1(i ξ), the Fourier transform of
/// w*(y) = 1/y on [1, ∞). Defined on 𝕃⁻ \ {0}.
pub fn w_star_hat(xi: FrequencyPoint) -> Result<Complex64> {
    let v = xi.value();
    if v.norm() == 0.0 {
        return Err(Error::Domain(
            "w*^ has a logarithmic singularity at xi = 0".into(),
        ));
    }
    exp_integral_e1(Complex64::new(0.0, 1.0) * v)
}

/// For real ξ > 0, ŵ*(ξ) = x(ξ) - i y(ξ) with
/// x(ξ) = ∫_ξ^∞ cos t / t dt and y(ξ) = ∫_ξ^∞ sin t / t dt.
pub fn cos_sin_tails(xi: f64) -> Result<(f64, f64)> {
    if xi <= 0.0 {
        return Err(Error::Domain("x(ξ), y(ξ) require ξ > 0".into()));
    }
    let w = w_star_hat(FrequencyPoint::real(xi))?;
    Ok((w.re, -w.im))
}

/// Diagnostics for the disk bound |1 - e^{-θ ŵ*(ξ)}| < 1 (θ <= 1).
#[derive(Debug, Clone, Copy)]
pub struct MarginReport {
    /// min over the grid of 1 - |1 - e^{-θ ŵ*(ξ)}|; positive means the
    /// curve stays inside the unit disk on the sampled frequencies.
    pub margin: f64,
    /// min over the grid of K(ξ) = x(ξ) + log(2 cos y(ξ)); positive means
    /// θ ŵ*(ξ) stays inside the region D = {x + log(2 cos y) > 0}.
    pub k_min: f64,
}

/// Evaluate the disk margin and the K diagnostic on a grid of positive
/// frequencies.
pub fn appendix_margin(theta: f64, xi_grid: &[f64]) -> Result<MarginReport> {
    if xi_grid.is_empty() {
        return Err(Error::Config("empty frequency grid".into()));
    }
    if theta <= 0.0 {
        return Err(Error::Domain("margin requires theta > 0".into()));
    }
    let mut margin = f64::INFINITY;
    let mut k_min = f64::INFINITY;
    for &xi in xi_grid {
        let (x, y) = cos_sin_tails(xi)?;
        let w = Complex64::new(x, -y);
        let dist = (Complex64::new(1.0, 0.0) - (-theta * w).exp()).norm();
        margin = margin.min(1.0 - dist);
        let c = 2.0 * y.cos();
        let k = if c > 0.0 { x + c.ln() } else { f64::NEG_INFINITY };
        k_min = k_min.min(k);
    }
    Ok(MarginReport { margin, k_min })
}

/// Logarithmically spaced grid on [lo, hi], endpoints included.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

// Lanczos coefficients (Godfrey's 15-term set, g = 607/128); relative
// error below 1e-13 across the range used here.
const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS_C: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_746,
    -0.491_913_816_097_620_2,
    3.399_464_998_481_189e-5,
    4.652_362_892_704_858e-5,
    -9.837_447_530_487_956e-5,
    1.580_887_032_249_125e-4,
    -2.102_644_417_241_049e-4,
    2.174_396_181_152_126e-4,
    -1.643_181_065_367_639e-4,
    8.441_822_398_385_274e-5,
    -2.619_083_840_158_141e-5,
    3.689_918_265_953_162e-6,
];

/// Gamma function for real x (not a non-positive integer). Lanczos
/// approximation with reflection for x < 0.5.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x) Γ(1-x) = π / sin(π x)
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x));
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_C[0];
    for (k, c) in LANCZOS_C.iter().enumerate().skip(1) {
        acc += c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;

    /// Quadrature oracle for E1 on the positive real axis:
    /// E1(x) = ∫_1^∞ e^{-x y} / y dy, split at y = 40/x with an analytic
    /// tail bound below 1e-16.
    fn e1_real_oracle(x: f64) -> f64 {
        let cut = (40.0 / x).max(2.0);
        adaptive_simpson(|y| (-x * y).exp() / y, 1.0, cut, 1e-14).unwrap()
    }

    #[test]
    fn e1_matches_quadrature_at_one() {
        let v = exp_integral_e1(Complex64::new(1.0, 0.0)).unwrap();
        assert!((v.re - e1_real_oracle(1.0)).abs() < 1e-10);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn e1_matches_quadrature_on_real_axis() {
        for &x in &[0.1, 0.5, 2.0, 3.9, 4.1, 7.0, 15.0] {
            let v = exp_integral_e1(Complex64::new(x, 0.0)).unwrap();
            assert!(
                (v.re - e1_real_oracle(x)).abs() <= 1e-12 * (1.0 + v.re.abs()),
                "x = {x}"
            );
        }
    }

    #[test]
    fn e1_branches_agree_on_overlap_annulus() {
        // Series and continued fraction on 3.5 <= |z| <= 4.5, away from
        // the negative real axis.
        for &r in &[3.5, 3.8, 4.0, 4.2, 4.5] {
            for k in 0..24 {
                let arg = -0.95 * std::f64::consts::PI
                    + 1.9 * std::f64::consts::PI * k as f64 / 23.0;
                let z = Complex64::from_polar(r, arg);
                let series = -z.ln() - EULER_GAMMA + ein(z);
                let cf = e1_continued_fraction(z).unwrap();
                assert!(
                    (series - cf).norm() <= 1e-10 * (1.0 + series.norm()),
                    "disagreement at z = {z}: {series} vs {cf}"
                );
            }
        }
    }

    #[test]
    fn e1_rejects_cut_and_origin() {
        assert!(exp_integral_e1(Complex64::new(0.0, 0.0)).is_err());
        assert!(exp_integral_e1(Complex64::new(-1.0, 0.0)).is_err());
    }

    #[test]
    fn ein_vanishes_at_zero_limit() {
        // E1(iξ) + log(iξ) + γ_E -> 0 as ξ -> 0+ (χ(0) = 0).
        for &xi in &[1e-2, 1e-4, 1e-6] {
            let z = Complex64::new(0.0, xi);
            let v = exp_integral_e1(z).unwrap() + z.ln() + EULER_GAMMA;
            assert!(v.norm() < 2.0 * xi);
        }
    }

    #[test]
    fn w_star_matches_appendix_values() {
        // x̄ = -x(π/2) ≈ 0.472 and ȳ = -y(π) ≈ 0.281.
        let (x, _) = cos_sin_tails(std::f64::consts::FRAC_PI_2).unwrap();
        assert!((x + 0.472).abs() < 1e-3);
        let (_, y) = cos_sin_tails(std::f64::consts::PI).unwrap();
        assert!((y + 0.281).abs() < 1e-3);
    }

    #[test]
    fn w_star_laplace_case_is_real() {
        // xi = -i p gives the real Laplace value E1(p).
        let p = 0.7;
        let xi = FrequencyPoint::new(Complex64::new(0.0, -p)).unwrap();
        let v = w_star_hat(xi).unwrap();
        let direct = exp_integral_e1(Complex64::new(p, 0.0)).unwrap();
        assert!((v - direct).norm() < 1e-14);
        assert!(v.im.abs() < 1e-14);
    }

    #[test]
    fn w_star_conjugate_symmetry() {
        for &xi in &[0.3, 1.7, 12.0] {
            let plus = w_star_hat(FrequencyPoint::real(xi)).unwrap();
            let minus = w_star_hat(FrequencyPoint::real(-xi)).unwrap();
            assert!((plus.conj() - minus).norm() < 1e-13);
        }
    }

    #[test]
    fn w_star_decays_down_the_half_plane() {
        // |ŵ*(ξ)| <= E1(-ξ₂) -> 0 as ξ₂ -> -∞.
        let mut prev = f64::INFINITY;
        for &im in &[-1.0, -5.0, -20.0] {
            let v = w_star_hat(FrequencyPoint::new(Complex64::new(3.0, im)).unwrap())
                .unwrap()
                .norm();
            let bound = exp_integral_e1(Complex64::new(-im, 0.0)).unwrap().re;
            assert!(v <= bound + 1e-14);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn appendix_bounds_beyond_pi_half() {
        // |x(ξ)| <= x̄ and |y(ξ)| <= ȳ for ξ >= π/2.
        for xi in log_grid(std::f64::consts::FRAC_PI_2, 500.0, 400) {
            let (x, y) = cos_sin_tails(xi).unwrap();
            assert!(x.abs() <= 0.472 + 1e-3, "x({xi}) = {x}");
            assert!(y.abs() <= 0.281 + 1e-3, "y({xi}) = {y}");
            assert!(y.abs() < std::f64::consts::FRAC_PI_2);
        }
    }

    #[test]
    fn real_part_lower_bound_on_half_plane() {
        // Re ŵ*(ξ) >= -0.473 on a sample of the closed lower half-plane.
        for &im in &[0.0, -0.1, -1.0, -4.0] {
            for &re in &[-30.0, -2.0, -0.5, 0.01, 0.5, 2.0, 30.0] {
                let xi = FrequencyPoint::new(Complex64::new(re, im)).unwrap();
                let v = w_star_hat(xi).unwrap();
                assert!(v.re >= -0.473, "Re w*^({re}+{im}i) = {}", v.re);
            }
        }
    }

    #[test]
    fn margin_positive_for_theta_one() {
        let grid = log_grid(1e-3, 100.0, 2000);
        let rep = appendix_margin(1.0, &grid).unwrap();
        assert!(rep.margin > 0.0);
        assert!(rep.k_min > 0.0);
    }

    #[test]
    fn k_limit_at_small_xi() {
        // K(ξ) -> log 2 - γ_E ≈ 0.11594 as ξ -> 0+.
        let rep = appendix_margin(1.0, &[1e-3]).unwrap();
        let limit = (2.0f64).ln() - EULER_GAMMA;
        assert!((rep.k_min - limit).abs() < 1e-3);
    }

    #[test]
    fn smaller_theta_has_no_smaller_margin() {
        // θ ŵ* ∈ D for θ <= 1 by convexity of D; on the grid the margin
        // at θ = 0.5 dominates the margin at θ = 1.
        let grid = log_grid(1e-3, 100.0, 500);
        let m1 = appendix_margin(1.0, &grid).unwrap().margin;
        let m05 = appendix_margin(0.5, &grid).unwrap().margin;
        assert!(m05 >= m1 - 1e-12);
    }

    #[test]
    fn gamma_reference_values() {
        assert!((gamma(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        assert!((gamma(1.0) - 1.0).abs() < 1e-14);
        assert!((gamma(5.0) - 24.0).abs() < 1e-11);
        // On (0,1): Γ(x) Γ(1-x) sin(πx) = π.
        for &x in &[0.1, 0.25, 0.5, 0.75, 0.9] {
            let lhs = gamma(x) * gamma(1.0 - x) * (std::f64::consts::PI * x).sin();
            assert!((lhs - std::f64::consts::PI).abs() < 1e-12 * std::f64::consts::PI);
        }
    }
}
