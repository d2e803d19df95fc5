//! The merge polynomial Q(z) = Σ p_j z^j and every analytic object derived
//! from it: the linearizing maps φ and ψ = φ⁻¹, the compensated maps
//! Φ(z) = 1 - e^{-q φ(z)} and Ψ = Φ⁻¹, and the constants q = Q'(1),
//! κ = Φ'(1), the radius R of Ψ's disk of analyticity, the exponential
//! decay rate λ of the finite-mean steady state, and the critical
//! parameter θ* past which generalized profiles leave L¹.

use std::sync::OnceLock;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, adaptive_simpson_segment};
use crate::special::{ein, exp_integral_e1, log_grid, EULER_GAMMA};

/// Default truncation order of the Ψ Taylor series.
pub const DEFAULT_SERIES_ORDER: usize = 128;

/// Relative guard band kept between series arguments and the convergence
/// radius R: evaluation is refused for |u| > (1 - PSI_GUARD) R.
pub const PSI_GUARD: f64 = 0.02;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const ROOT_SEPARATION_TOL: f64 = 1e-8;
const PSI_TAIL_TOL: f64 = 1e-9;
/// Taylor patch half-width around the removable singularity at z = 1 in
/// the κ and R integrands.
const KAPPA_PATCH_DELTA: f64 = 1e-3;

/// Truncated Taylor series with a nominal convergence radius.
#[derive(Debug, Clone)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
    radius: f64,
}

impl PowerSeries {
    pub fn new(coeffs: Vec<f64>, radius: f64) -> Self {
        PowerSeries { coeffs, radius }
    }

    /// Coefficients c_0 ... c_K.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Horner evaluation without domain checks.
    pub fn eval(&self, u: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * u + c;
        }
        acc
    }

    /// Geometric estimate of the truncation tail at |u|, using the ratio
    /// |u| / radius.
    pub fn tail_estimate(&self, u_abs: f64) -> f64 {
        let last = match self.coeffs.last() {
            Some(&c) => c.abs(),
            None => return 0.0,
        };
        if !self.radius.is_finite() {
            return 0.0;
        }
        let ratio = u_abs / self.radius;
        if ratio >= 1.0 {
            return f64::INFINITY;
        }
        let k = self.coeffs.len() as i32 - 1;
        last * u_abs.powi(k) * ratio / (1.0 - ratio)
    }
}

/// Report of the kernel constants, serializable for CLI artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub weights: Vec<f64>,
    pub q: f64,
    pub kappa: f64,
    pub radius_r: f64,
    pub n_min: usize,
    pub lambda_decay: f64,
    pub psi_coeffs: Vec<f64>,
}

/// Immutable kernel: the merge polynomial and its derived constants.
/// Safe to share across threads; everything except θ* is computed at
/// construction, θ* is computed on first access and cached.
#[derive(Debug)]
pub struct Kernel {
    weights: Vec<f64>,
    q: f64,
    kappa: f64,
    radius: f64,
    n_min: usize,
    psi: PowerSeries,
    lambda: Option<f64>,
    /// All roots of 1 - Q(z): the simple root 1 plus the roots of
    /// G(z) = (1 - Q(z))/(1 - z). Empty when the closed form is unusable.
    roots: Vec<Complex64>,
    closed_form_phi: bool,
    theta_star_cache: OnceLock<std::result::Result<f64, String>>,
}

impl Kernel {
    /// Build a kernel from merge probabilities p_1..p_N.
    pub fn new(weights: &[f64], series_order: usize) -> Result<Self> {
        if series_order < 2 {
            return Err(Error::Config(format!(
                "series order {series_order} < 2"
            )));
        }
        if weights.is_empty() {
            return Err(Error::Config("empty weight list".into()));
        }
        if weights.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Config("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config(format!(
                "weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL:e}"
            )));
        }
        let mut weights = weights.to_vec();
        while weights.last() == Some(&0.0) {
            weights.pop();
        }
        if weights.is_empty() {
            return Err(Error::Config("all weights are zero".into()));
        }
        let n_min = match weights.iter().position(|&p| p > 0.0) {
            Some(i) => i + 1,
            None => return Err(Error::Config("all weights are zero".into())),
        };

        let q: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, &p)| (i + 1) as f64 * p)
            .sum();

        let degree = weights.len();
        let (roots, closed_form_phi) = match polynomial_roots(&weights) {
            Ok(roots) => {
                let sep = min_pairwise_distance(&roots);
                (roots.clone(), sep >= ROOT_SEPARATION_TOL)
            }
            Err(_) => (Vec::new(), false),
        };

        let kappa = kappa_quadrature(&weights, q)?;
        let radius = if degree == 1 {
            f64::INFINITY
        } else {
            radius_quadrature(&weights, q)?
        };

        let psi = compute_psi_series(&weights, q, radius, series_order)?;

        let lambda = if degree == 1 {
            None
        } else {
            Some(lambda_root(radius)?)
        };

        Ok(Kernel {
            weights,
            q,
            kappa,
            radius,
            n_min,
            psi,
            lambda,
            roots,
            closed_form_phi,
            theta_star_cache: OnceLock::new(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// q = Q'(1), the mean number of merge partners plus ... the mean of j.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// κ = Φ'(1) ∈ (0, 1]; κ = 1 iff Q(z) = z.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Radius R of the disk on which Ψ is analytic; ∞ iff Q(z) = z.
    pub fn radius_r(&self) -> f64 {
        self.radius
    }

    /// Smallest j with p_j > 0.
    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn degree(&self) -> usize {
        self.weights.len()
    }

    /// Cached Ψ series at the construction order.
    pub fn psi(&self) -> &PowerSeries {
        &self.psi
    }

    pub fn report(&self) -> KernelReport {
        KernelReport {
            weights: self.weights.clone(),
            q: self.q,
            kappa: self.kappa,
            radius_r: self.radius,
            n_min: self.n_min,
            lambda_decay: self.lambda_decay(),
            psi_coeffs: self.psi.coeffs().to_vec(),
        }
    }

    /// Q(z).
    pub fn q_at(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &p in self.weights.iter().rev() {
            acc = (acc + p) * z;
        }
        acc
    }

    /// Q'(z).
    pub fn q_prime_at(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &p) in self.weights.iter().enumerate().rev() {
            let jf = (j + 1) as f64;
            acc = acc * z + jf * p;
        }
        acc
    }

    /// φ(z), the solution of φ'(z) = 1/(1 - Q(z)), φ(0) = 0, on |z| < 1.
    pub fn phi(&self, z: Complex64) -> Result<Complex64> {
        if z.norm() >= 1.0 {
            return Err(Error::Domain(format!(
                "phi requires |z| < 1, got |z| = {}",
                z.norm()
            )));
        }
        if self.closed_form_phi {
            // φ(z) = -Σ_ρ ln(1 - z/ρ) / Q'(ρ) over the roots of 1 - Q.
            let mut acc = Complex64::new(0.0, 0.0);
            for &r in &self.roots {
                acc -= (Complex64::new(1.0, 0.0) - z / r).ln() / self.q_prime_at(r);
            }
            Ok(acc)
        } else {
            adaptive_simpson_segment(
                |t| (Complex64::new(1.0, 0.0) - self.q_at(t)).inv(),
                Complex64::new(0.0, 0.0),
                z,
                1e-13,
            )
        }
    }

    /// χ(z) = e^{-q φ(z)} / (1 - z) = Π_{ρ≠1} (1 - z/ρ)^{q/Q'(ρ)},
    /// analytic across z = 1. Used to evaluate 1 - Φ(z) without
    /// cancellation near z = 1.
    pub fn chi_phi(&self, z: Complex64) -> Result<Complex64> {
        if self.closed_form_phi {
            let mut acc = Complex64::new(0.0, 0.0);
            for &r in &self.roots {
                if (r - 1.0).norm() < 1e-9 {
                    continue;
                }
                acc += (Complex64::new(1.0, 0.0) - z / r).ln() * (self.q / self.q_prime_at(r));
            }
            Ok(acc.exp())
        } else {
            // Fallback: integrate the regularized integrand from 0 to z.
            let v = adaptive_simpson_segment(
                |t| {
                    (Complex64::new(1.0, 0.0) - t).inv()
                        - self.q * (Complex64::new(1.0, 0.0) - self.q_at(t)).inv()
                },
                Complex64::new(0.0, 0.0),
                z,
                1e-13,
            )?;
            Ok(v.exp())
        }
    }

    /// Φ(z) = 1 - e^{-q φ(z)} = 1 - (1 - z) χ(z), analytic on a
    /// neighborhood of the positive real axis.
    pub fn phi_big(&self, z: Complex64) -> Result<Complex64> {
        Ok(Complex64::new(1.0, 0.0) - (Complex64::new(1.0, 0.0) - z) * self.chi_phi(z)?)
    }

    /// Recompute the Ψ series at a different truncation order.
    pub fn psi_series(&self, order: usize) -> Result<PowerSeries> {
        if order < 2 {
            return Err(Error::Config(format!("series order {order} < 2")));
        }
        compute_psi_series(&self.weights, self.q, self.radius, order)
    }

    /// Ψ(u) by the truncated series, with a radius guard and a tail-bound
    /// check.
    pub fn psi_eval(&self, u: Complex64) -> Result<Complex64> {
        let r = self.radius;
        if r.is_finite() && u.norm() >= (1.0 - PSI_GUARD) * r {
            return Err(Error::Domain(format!(
                "|u| = {} too close to the series radius R = {r}",
                u.norm()
            )));
        }
        let tail = self.psi.tail_estimate(u.norm());
        if tail > PSI_TAIL_TOL {
            return Err(Error::Numerics(format!(
                "Psi series tail estimate {tail:e} exceeds {PSI_TAIL_TOL:e} at |u| = {}",
                u.norm()
            )));
        }
        Ok(self.psi.eval(u))
    }

    /// λ of the exponential tail e^{-λ y} of the finite-mean steady state:
    /// the unique root of λ e^{γ_E - Ein(-λ)} = R - 1. Infinite for
    /// Q(z) = z.
    pub fn lambda_decay(&self) -> f64 {
        self.lambda.unwrap_or(f64::INFINITY)
    }

    /// Critical θ*: the smallest θ for which the curve
    /// {1 - e^{-θ ŵ*(ξ)} : ξ ∈ ℝ} captures the singular point u = R of Ψ,
    /// detected by the winding number of the curve around R. Infinite for
    /// Q(z) = z; ≈ 3.24826 for Q(z) = z².
    pub fn theta_star(&self) -> Result<f64> {
        if self.degree() == 1 {
            return Ok(f64::INFINITY);
        }
        let computed = self
            .theta_star_cache
            .get_or_init(|| theta_star_bisection(self.radius).map_err(|e| e.to_string()));
        computed.clone().map_err(Error::Numerics)
    }
}

/// Q^{(m)}(1) = Σ_j p_j j (j-1) ... (j-m+1).
fn q_derivative_at_one(weights: &[f64], m: usize) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let j = i + 1;
            if j < m {
                0.0
            } else {
                p * (j - m + 1..=j).map(|v| v as f64).product::<f64>()
            }
        })
        .sum()
}

/// Taylor coefficients of f(1-t) = 1/(1-z) - q/(1-Q(z)) at t = 0:
/// f(1-t) = -(A + B t + C t²) + O(t³).
fn singular_patch_coeffs(weights: &[f64], q: f64) -> (f64, f64, f64) {
    let a = q_derivative_at_one(weights, 2) / 2.0;
    let b = q_derivative_at_one(weights, 3) / 6.0;
    let c = q_derivative_at_one(weights, 4) / 24.0;
    let aq = a / q;
    let big_a = aq;
    let big_b = aq * aq - b / q;
    let big_c = aq * aq * aq - 2.0 * a * b / (q * q) + c / q;
    (big_a, big_b, big_c)
}

fn regular_integrand(weights: &[f64], q: f64, z: f64) -> f64 {
    let mut qz = 0.0;
    for &p in weights.iter().rev() {
        qz = (qz + p) * z;
    }
    1.0 / (1.0 - z) - q / (1.0 - qz)
}

/// κ = exp ∫_0^1 (1/(1-z) - q/(1-Q(z))) dz, with a 3-term Taylor patch on
/// [1-δ, 1] where the integrand has a removable singularity.
fn kappa_quadrature(weights: &[f64], q: f64) -> Result<f64> {
    if weights.len() == 1 {
        return Ok(1.0);
    }
    let d = KAPPA_PATCH_DELTA;
    let body = adaptive_simpson(|z| regular_integrand(weights, q, z), 0.0, 1.0 - d, 1e-13)?;
    let (a, b, c) = singular_patch_coeffs(weights, q);
    let patch = -(a * d + b * d * d / 2.0 + c * d * d * d / 3.0);
    Ok((body + patch).exp())
}

/// R = 1 + exp( ∫_0^2 (1/(1-z) - q/(1-Q(z))) dz - ∫_2^∞ q/(1-Q(z)) dz ),
/// finite exactly when deg Q > 1.
fn radius_quadrature(weights: &[f64], q: f64) -> Result<f64> {
    let d = KAPPA_PATCH_DELTA;
    let left = adaptive_simpson(|z| regular_integrand(weights, q, z), 0.0, 1.0 - d, 1e-13)?;
    let right = adaptive_simpson(|z| regular_integrand(weights, q, z), 1.0 + d, 2.0, 1e-13)?;
    let (a, _b, c) = singular_patch_coeffs(weights, q);
    // Odd Taylor terms cancel on the symmetric patch [1-δ, 1+δ].
    let patch = -(2.0 * a * d + 2.0 * c * d * d * d / 3.0);

    // Tail ∫_2^∞ q/(1-Q(z)) dz under z = 2/u; the transformed integrand
    // extends continuously to u = 0.
    let n = weights.len();
    let p_top = weights[n - 1];
    let tail = adaptive_simpson(
        |u| {
            if u < 1e-9 {
                if n == 2 {
                    -q / (2.0 * p_top)
                } else {
                    0.0
                }
            } else {
                let z = 2.0 / u;
                let mut qz = 0.0;
                for &p in weights.iter().rev() {
                    qz = (qz + p) * z;
                }
                q / (1.0 - qz) * 2.0 / (u * u)
            }
        },
        0.0,
        1.0,
        1e-13,
    )?;

    Ok(1.0 + (left + patch + right - tail).exp())
}

/// Coefficients Ψ_1..Ψ_K from the defining ODE
/// q (1-u) Ψ'(u) = 1 - Q(Ψ(u)), Ψ(0) = 0, extracted order by order.
/// All coefficients are nonnegative; a negative coefficient beyond -1e-14
/// signals an implementation bug and is reported as an error.
fn compute_psi_series(weights: &[f64], q: f64, radius: f64, order: usize) -> Result<PowerSeries> {
    let n = weights.len();
    let k_max = order;
    let mut c = vec![0.0; k_max + 1];
    c[1] = 1.0 / q;
    // powers[j][m] = [u^m] Ψ(u)^{j+1}
    let mut powers = vec![vec![0.0; k_max + 1]; n];
    powers[0][1] = c[1];
    for j in 1..n {
        // Ψ^{j+1} starts at u^{j+1}; filled as coefficients arrive.
        powers[j][1] = 0.0;
    }
    for m in 1..k_max {
        // Extend powers[j][m] now that c[m] is known.
        for j in 1..n {
            let mut s = 0.0;
            for i in j..m {
                s += powers[j - 1][i] * c[m - i];
            }
            powers[j][m] = s;
        }
        let mut q_of_psi_m = 0.0;
        for (j, &p) in weights.iter().enumerate() {
            q_of_psi_m += p * powers[j][m];
        }
        let next = (q * m as f64 * c[m] - q_of_psi_m) / (q * (m + 1) as f64);
        if next < -1e-14 {
            return Err(Error::Numerics(format!(
                "Psi coefficient {} is negative ({next:e}); absolute monotonicity violated",
                m + 1
            )));
        }
        c[m + 1] = next.max(0.0);
        for j in 1..n {
            let mut s = 0.0;
            for i in j..=m {
                s += powers[j - 1][i] * c[m + 1 - i];
            }
            powers[j][m + 1] = s;
        }
    }
    // The loop above fills powers[.][m+1] pessimistically; only c matters.
    Ok(PowerSeries::new(c, radius))
}

/// Root of λ e^{γ_E - Ein(-λ)} = R - 1 by bisection on the log form.
fn lambda_root(radius: f64) -> Result<f64> {
    let target = (radius - 1.0).ln();
    let g = |lam: f64| lam.ln() + EULER_GAMMA - ein(Complex64::new(-lam, 0.0)).re - target;
    let mut lo = 1e-8;
    if g(lo) > 0.0 {
        return Err(Error::Numerics(
            "lambda bracket failure: no sign change on [1e-8, hi]".into(),
        ));
    }
    let mut hi = 1.0;
    let mut expand = 0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 12 {
            return Err(Error::Numerics(
                "lambda bracket failure: no sign change up to 4096".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Roots of 1 - Q(z): the exact root z = 1 plus the roots of the deflated
/// polynomial G(z) = (1 - Q(z))/(1 - z), found by Durand-Kerner iteration.
fn polynomial_roots(weights: &[f64]) -> Result<Vec<Complex64>> {
    let n = weights.len();
    let mut roots = vec![Complex64::new(1.0, 0.0)];
    if n == 1 {
        return Ok(roots);
    }
    // g_k = 1 - Σ_{j<=k} p_j, k = 0..n-1 (all nonnegative, g_{n-1} = p_n).
    let mut g = Vec::with_capacity(n);
    let mut cum = 0.0;
    g.push(1.0);
    for &p in &weights[..n - 1] {
        cum += p;
        g.push(1.0 - cum);
    }
    let lead = weights[n - 1];
    let monic: Vec<f64> = g.iter().map(|&v| v / lead).collect();

    let deg = n - 1;
    let eval = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        for k in (0..deg).rev() {
            acc = acc * z + monic[k];
        }
        acc
    };
    let scale = 1.0 + monic.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut r: Vec<Complex64> = (0..deg).map(|i| seed.powu(i as u32 + 1) * scale).collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..deg {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if j != i {
                    denom *= r[i] - r[j];
                }
            }
            if denom.norm() == 0.0 {
                return Err(Error::Numerics("Durand-Kerner: coincident iterates".into()));
            }
            let step = eval(r[i]) / denom;
            r[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-14 * scale {
            break;
        }
    }
    for &root in &r {
        if eval(root).norm() > 1e-8 {
            return Err(Error::Numerics(format!(
                "Durand-Kerner residual {:e} too large",
                eval(root).norm()
            )));
        }
    }
    roots.extend(r);
    Ok(roots)
}

fn min_pairwise_distance(roots: &[Complex64]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            min = min.min((roots[i] - roots[j]).norm());
        }
    }
    min
}

/// Winding number of the closed curve {F_θ(ξ) - R : ξ ∈ ℝ ∪ {∞}} around 0,
/// where F_θ(ξ) = 1 - e^{-θ ŵ*(ξ)}. By the argument principle this counts
/// the solutions of F_θ = R in the open lower half-plane, so it flips from
/// zero exactly when the singularity of Ψ∘F reaches the real axis.
fn curve_winding(theta: f64, radius: f64, xi_grid: &[f64]) -> Result<i32> {
    let f_at = |xi: f64| -> Result<Complex64> {
        let w = exp_integral_e1(Complex64::new(0.0, xi))?;
        Ok(Complex64::new(1.0, 0.0) - (-theta * w).exp())
    };
    // Sample positive frequencies; close the curve through ξ = 0 (F = 1)
    // and ξ = ±∞ (F = 0) and mirror by conjugate symmetry.
    let mut pts: Vec<Complex64> = Vec::with_capacity(xi_grid.len() + 2);
    pts.push(Complex64::new(1.0, 0.0));
    for &xi in xi_grid {
        pts.push(f_at(xi)?);
    }
    pts.push(Complex64::new(0.0, 0.0));

    let target = Complex64::new(radius, 0.0);
    let mut phase = 0.0f64;
    // Positive-ξ sweep, adaptively refined where the curve moves fast
    // relative to its distance from the target.
    for i in 0..pts.len() - 1 {
        let (xi_a, xi_b) = segment_bounds(xi_grid, i, pts.len());
        phase += segment_phase(&f_at, pts[i], pts[i + 1], xi_a, xi_b, target, 0)?;
    }
    // Conjugate half contributes the same signed phase.
    let total = 2.0 * phase;
    let winding = total / (2.0 * std::f64::consts::PI);
    let rounded = winding.round();
    if (winding - rounded).abs() > 1e-3 {
        return Err(Error::Numerics(format!(
            "winding number {winding} did not stabilize"
        )));
    }
    Ok(rounded as i32)
}

fn segment_bounds(xi_grid: &[f64], i: usize, n_pts: usize) -> (Option<f64>, Option<f64>) {
    // Point 0 is ξ=0, points 1..=len are the grid, the last point is ξ=∞.
    let a = if i == 0 { None } else { Some(xi_grid[i - 1]) };
    let b = if i + 1 >= n_pts - 1 {
        None
    } else {
        Some(xi_grid[i])
    };
    (a, b)
}

fn segment_phase<F: Fn(f64) -> Result<Complex64>>(
    f: &F,
    fa: Complex64,
    fb: Complex64,
    xi_a: Option<f64>,
    xi_b: Option<f64>,
    target: Complex64,
    depth: u32,
) -> Result<f64> {
    let da = fa - target;
    let db = fb - target;
    let near = da.norm().min(db.norm());
    if near == 0.0 {
        return Err(Error::Numerics("curve passes через the target point".into()));
    }
    if (fb - fa).norm() <= 0.5 * near || depth >= 48 {
        if depth >= 48 && (fb - fa).norm() > near {
            return Err(Error::Numerics(
                "winding refinement depth exhausted near the target".into(),
            ));
        }
        return Ok((db / da).arg());
    }
    // Subdivide in ξ; endpoints at ξ=0 / ξ=∞ subdivide toward the grid end.
    let xm = match (xi_a, xi_b) {
        (Some(a), Some(b)) => (a * b).sqrt(),
        (None, Some(b)) => b * 0.5,
        (Some(a), None) => a * 2.0,
        (None, None) => return Ok((db / da).arg()),
    };
    let fm = f(xm)?;
    Ok(segment_phase(f, fa, fm, xi_a, Some(xm), target, depth + 1)?
        + segment_phase(f, fm, fb, Some(xm), xi_b, target, depth + 1)?)
}

fn theta_star_with_grid(radius: f64, n_grid: usize) -> Result<f64> {
    let xi_grid = log_grid(1e-4, 1e3, n_grid);
    let mut lo = 1.0;
    if curve_winding(lo, radius, &xi_grid)? != 0 {
        return Err(Error::Numerics(
            "winding already nonzero at theta = 1; contradicts the disk bound".into(),
        ));
    }
    let mut hi = 2.0;
    let mut found = false;
    for _ in 0..16 {
        if curve_winding(hi, radius, &xi_grid)? != 0 {
            found = true;
            break;
        }
        hi *= 2.0;
    }
    if !found {
        return Err(Error::Numerics(
            "no winding transition found below theta = 2^17".into(),
        ));
    }
    while hi - lo > 1e-7 * hi {
        let mid = 0.5 * (lo + hi);
        if curve_winding(mid, radius, &xi_grid)? != 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn theta_star_bisection(radius: f64) -> Result<f64> {
    let coarse = theta_star_with_grid(radius, 4096)?;
    let fine = theta_star_with_grid(radius, 8192)?;
    if (coarse - fine).abs() > 1e-4 * fine {
        return Err(Error::Numerics(format!(
            "theta* did not stabilize under grid refinement: {coarse} vs {fine}"
        )));
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson_segment;

    fn kernel(weights: &[f64]) -> Kernel {
        Kernel::new(weights, DEFAULT_SERIES_ORDER).unwrap()
    }

    #[test]
    fn constants_for_pure_pair_merging() {
        // Q = z²: q = 2, κ = 1/2, R = 2 (closed forms q = 1+a = 1/κ,
        // R = 1 + 1/a at a = 1).
        let k = kernel(&[0.0, 1.0]);
        assert_eq!(k.q(), 2.0);
        assert!((k.kappa() - 0.5).abs() < 1e-10);
        assert!((k.radius_r() - 2.0).abs() < 1e-10);
        assert_eq!(k.n_min(), 2);
    }

    #[test]
    fn constants_for_identity_kernel() {
        let k = kernel(&[1.0]);
        assert_eq!(k.q(), 1.0);
        assert_eq!(k.kappa(), 1.0);
        assert!(k.radius_r().is_infinite());
        assert_eq!(k.n_min(), 1);
        assert!(k.lambda_decay().is_infinite());
        assert!(k.theta_star().unwrap().is_infinite());
    }

    #[test]
    fn constants_for_mixed_family() {
        // Q = (1-a) z + a z²: q = 1 + a, κ = 1/(1+a), R = 1 + 1/a.
        for &a in &[0.25, 0.5, 1.0] {
            let k = kernel(&[1.0 - a, a]);
            assert!((k.q() - (1.0 + a)).abs() < 1e-14, "a = {a}");
            assert!((k.kappa() - 1.0 / (1.0 + a)).abs() < 1e-10, "a = {a}");
            assert!((k.radius_r() - (1.0 + 1.0 / a)).abs() < 2e-10, "a = {a}");
        }
    }

    #[test]
    fn rejects_bad_weights_and_order() {
        assert!(Kernel::new(&[0.5, 0.4], 128).is_err());
        assert!(Kernel::new(&[-0.1, 1.1], 128).is_err());
        assert!(Kernel::new(&[], 128).is_err());
        assert!(Kernel::new(&[1.0], 1).is_err());
    }

    #[test]
    fn phi_closed_form_pair_merging() {
        // φ(z) = (1/2) log((1+z)/(1-z)) for Q = z².
        let k = kernel(&[0.0, 1.0]);
        let v = k.phi(Complex64::new(0.5, 0.0)).unwrap();
        assert!((v.re - 0.5 * 3.0f64.ln()).abs() < 1e-13);
        assert!(v.im.abs() < 1e-15);
        assert_eq!(k.phi(Complex64::new(0.0, 0.0)).unwrap().norm(), 0.0);
    }

    #[test]
    fn phi_matches_quadrature_off_axis() {
        let k = kernel(&[0.0, 1.0]);
        let z = Complex64::new(0.0, 0.9);
        let oracle = adaptive_simpson_segment(
            |t| (Complex64::new(1.0, 0.0) - t * t).inv(),
            Complex64::new(0.0, 0.0),
            z,
            1e-13,
        )
        .unwrap();
        let v = k.phi(z).unwrap();
        assert!((v - oracle).norm() < 1e-10);
    }

    #[test]
    fn phi_rejects_unit_circle() {
        let k = kernel(&[0.0, 1.0]);
        assert!(k.phi(Complex64::new(1.0, 0.0)).is_err());
        assert!(k.phi(Complex64::new(0.8, 0.8)).is_err());
    }

    #[test]
    fn psi_coefficients_closed_form() {
        // Ψ(u) = u/(2-u) for Q = z², i.e. Ψ_k = 2^{-k}.
        let k = kernel(&[0.0, 1.0]);
        let c = k.psi().coeffs();
        for m in 1..=50 {
            assert!(
                (c[m] - 0.5f64.powi(m as i32)).abs() < 1e-12,
                "Psi_{m} = {} vs 2^-{m}",
                c[m]
            );
        }
    }

    #[test]
    fn psi_is_identity_for_identity_kernel() {
        let k = kernel(&[1.0]);
        let c = k.psi().coeffs();
        assert_eq!(c[1], 1.0);
        assert!(c[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn psi_first_coefficient_is_inverse_q() {
        for weights in [vec![0.5, 0.5], vec![0.3, 0.0, 0.7], vec![0.2, 0.3, 0.5]] {
            let k = kernel(&weights);
            assert!((k.psi().coeffs()[1] - 1.0 / k.q()).abs() < 1e-15);
        }
    }

    #[test]
    fn psi_eval_matches_tanh_composition() {
        // Ψ(1 - e^{-q w}) = ψ(w) = tanh(w) for Q = z².
        let k = kernel(&[0.0, 1.0]);
        for &w in &[0.05f64, 0.3, 1.0, 2.5] {
            let u = 1.0 - (-2.0 * w).exp();
            let v = k.psi_eval(Complex64::new(u, 0.0)).unwrap();
            assert!((v.re - w.tanh()).abs() < 1e-12, "w = {w}");
        }
    }

    #[test]
    fn psi_eval_half_weights() {
        // Ψ(u) = u/(1.5 - 0.5 u) at u = 1/2 gives 0.4.
        let k = kernel(&[0.5, 0.5]);
        let v = k.psi_eval(Complex64::new(0.5, 0.0)).unwrap();
        assert!((v.re - 0.4).abs() < 1e-12);
    }

    #[test]
    fn psi_eval_guards_radius() {
        let k = kernel(&[0.0, 1.0]);
        assert!(k.psi_eval(Complex64::new(1.97, 0.0)).is_err());
    }

    #[test]
    fn phi_big_boundary_values_and_slope() {
        for weights in [vec![0.0, 1.0], vec![0.5, 0.5], vec![0.3, 0.0, 0.7]] {
            let k = kernel(&weights);
            let at0 = k.phi_big(Complex64::new(0.0, 0.0)).unwrap();
            assert!(at0.norm() < 1e-14);
            let at1 = k.phi_big(Complex64::new(1.0, 0.0)).unwrap();
            assert!((at1.re - 1.0).abs() < 1e-12);
            // Φ(1-h) ≈ 1 - κ h + o(h)
            for &h in &[1e-3, 1e-4] {
                let v = k.phi_big(Complex64::new(1.0 - h, 0.0)).unwrap().re;
                let slope = (1.0 - v) / h;
                assert!(
                    (slope - k.kappa()).abs() < 20.0 * h,
                    "slope {} vs kappa {}",
                    slope,
                    k.kappa()
                );
            }
        }
    }

    #[test]
    fn psi_inverts_phi_big_on_unit_interval() {
        for weights in [vec![0.0, 1.0], vec![0.5, 0.5], vec![0.3, 0.0, 0.7]] {
            let k = kernel(&weights);
            let mut x = 0.0;
            while x <= 0.99 {
                let u = k.phi_big(Complex64::new(x, 0.0)).unwrap();
                let back = k.psi_eval(u).unwrap();
                assert!(
                    (back.re - x).abs() < 1e-8,
                    "Psi(Phi({x})) = {} for {weights:?}",
                    back.re
                );
                x += 0.03;
            }
        }
    }

    #[test]
    fn psi_of_phi_is_identity_pair_merging() {
        // ψ(φ(x)) = tanh(φ(x)) = x to 1e-10 on [0, 0.99].
        let k = kernel(&[0.0, 1.0]);
        let mut x = 0.0f64;
        while x <= 0.99 {
            let phi = k.phi(Complex64::new(x, 0.0)).unwrap().re;
            assert!((phi.tanh() - x).abs() < 1e-10);
            x += 0.01;
        }
    }

    #[test]
    fn lambda_satisfies_defining_equation() {
        for weights in [vec![0.0, 1.0], vec![0.5, 0.5]] {
            let k = kernel(&weights);
            let lam = k.lambda_decay();
            let lhs = lam * (EULER_GAMMA - ein(Complex64::new(-lam, 0.0)).re).exp();
            assert!(
                (lhs - (k.radius_r() - 1.0)).abs() < 1e-10,
                "residual for {weights:?}"
            );
        }
    }

    #[test]
    fn theta_star_pair_merging() {
        let k = kernel(&[0.0, 1.0]);
        let ts = k.theta_star().unwrap();
        assert!((ts - 3.24826).abs() < 1e-3, "theta* = {ts}");
    }

    #[test]
    fn theta_star_exceeds_one() {
        for weights in [vec![0.5, 0.5], vec![0.3, 0.0, 0.7]] {
            let k = kernel(&weights);
            let ts = k.theta_star().unwrap();
            assert!(ts > 1.0, "theta* = {ts} for {weights:?}");
        }
    }
}
