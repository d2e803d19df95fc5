//! Self-similar steady states η*_θ computed by two independent routes —
//! Fourier inversion of the closed-form transform and interval-by-interval
//! integration of the stationary delay ODE — plus the convolution operator
//! 𝔔, the unit shift T₁, the heavy-tail constant, and the lower bound of
//! the tail lemma.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft_in_place, ifft_in_place};
use crate::grid::{interp_clamped_cubic, trapezoid_mass, GridDensity, GridSpec};
use crate::kernel::Kernel;
use crate::special::{exp_integral_e1, gamma, EULER_GAMMA};

/// Negativity tolerance for spectral ringing in profile reconstruction.
pub const SPECTRAL_NEG_TOL: f64 = 1e-9;
/// Mass drift below which a spectral profile is renormalized to 1; larger
/// drift means genuine tail mass beyond the grid (heavy-tailed θ < 1) and
/// is left untouched.
pub const MASS_RENORM_TOL: f64 = 1e-4;
/// Derivative-matching order of the jump template at y = 1.
const TEMPLATE_ORDER: usize = 8;
/// Decay rate of the jump template.
const TEMPLATE_DECAY: f64 = 1.0;

/// Grid for the spectral route: the y grid plus the zero-padding factor
/// that sets the period of the discrete transform (aliasing control).
#[derive(Debug, Clone, Copy)]
pub struct SpectralGridSpec {
    pub grid: GridSpec,
    pub pad: usize,
}

impl SpectralGridSpec {
    pub fn new(grid: GridSpec, pad: usize) -> Result<Self> {
        if pad < 4 {
            return Err(Error::Config(format!("padding factor {pad} < 4")));
        }
        Ok(SpectralGridSpec { grid, pad })
    }

    /// DFT size: power of two covering pad × y_max at step h.
    pub fn fft_len(&self) -> usize {
        let target = self.pad as f64 * self.grid.y_max / self.grid.h;
        (target.ceil() as usize).next_power_of_two()
    }
}

impl Default for SpectralGridSpec {
    fn default() -> Self {
        SpectralGridSpec {
            grid: GridSpec::default(),
            pad: 4,
        }
    }
}

/// Exponential-polynomial template β P(t) e^{-st} (t = y - 1) whose first
/// `order` derivatives at y = 1 match those of β/y. Subtracting its exact
/// transform from the sampled η̂ leaves a residual that is C^order at the
/// support edge, so the inverse DFT converges fast there.
#[derive(Debug, Clone)]
pub(crate) struct JumpTemplate {
    s: f64,
    coeffs: Vec<f64>,
}

impl JumpTemplate {
    /// Match the Taylor data a_j = β (-1)^j of β/(1+t) at t = 0.
    pub(crate) fn for_edge_of_inverse_law(beta: f64, order: usize, s: f64) -> Self {
        let taylor: Vec<f64> = (0..=order)
            .map(|j| if j % 2 == 0 { beta } else { -beta })
            .collect();
        Self::from_taylor(&taylor, s)
    }

    /// Build Σ c_k t^k e^{-st} with prescribed Taylor coefficients at 0.
    pub(crate) fn from_taylor(taylor: &[f64], s: f64) -> Self {
        let order = taylor.len() - 1;
        let mut coeffs = vec![0.0; order + 1];
        // Σ_{k<=j} c_k (-s)^{j-k} / (j-k)! = taylor[j]
        for j in 0..=order {
            let mut acc = taylor[j];
            for (k, &c) in coeffs.iter().enumerate().take(j) {
                let mut term = c;
                for i in 1..=(j - k) {
                    term *= -s / i as f64;
                }
                acc -= term;
            }
            coeffs[j] = acc;
        }
        JumpTemplate { s, coeffs }
    }

    pub(crate) fn value(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let mut poly = 0.0;
        for &c in self.coeffs.iter().rev() {
            poly = poly * t + c;
        }
        poly * (-self.s * t).exp()
    }

    /// Exact transform ∫_1^∞ e^{-iξy} Σ c_k (y-1)^k e^{-s(y-1)} dy
    /// = e^{-iξ} Σ c_k k! / (s + iξ)^{k+1}.
    pub(crate) fn fourier(&self, xi: f64) -> Complex64 {
        let z = Complex64::new(self.s, xi);
        let zinv = z.inv();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut factor = zinv;
        let mut k_fact = 1.0;
        for (k, &c) in self.coeffs.iter().enumerate() {
            if k > 0 {
                k_fact *= k as f64;
                factor *= zinv;
            }
            acc += c * k_fact * factor;
        }
        acc * Complex64::new(0.0, -xi).exp()
    }

    pub(crate) fn mass(&self) -> f64 {
        self.fourier(0.0).re
    }
}

/// Sample η̂*_θ(ξ) = Ψ(1 - e^{-θ E1(iξ)}) and invert. Fails when the
/// argument of Ψ leaves the guarded disk of radius R (θ beyond the valid
/// range for this kernel).
fn sample_and_invert(
    kernel: &Kernel,
    theta: f64,
    spec: &SpectralGridSpec,
) -> Result<Vec<f64>> {
    let h = spec.grid.h;
    let m = spec.grid.len();
    let cells = spec.grid.cells_per_unit()?;
    let k_len = spec.fft_len();
    let dxi = 2.0 * std::f64::consts::PI / (k_len as f64 * h);

    let beta = theta / kernel.q();
    let template = JumpTemplate::for_edge_of_inverse_law(beta, TEMPLATE_ORDER, TEMPLATE_DECAY);

    let mut buf = vec![Complex64::new(0.0, 0.0); k_len];
    buf[0] = Complex64::new(1.0 - template.mass(), 0.0);
    for k in 1..=k_len / 2 {
        let xi = k as f64 * dxi;
        let w = exp_integral_e1(Complex64::new(0.0, xi))?;
        let u = Complex64::new(1.0, 0.0) - (-theta * w).exp();
        let eta_hat = kernel.psi_eval(u).map_err(|e| {
            Error::Domain(format!(
                "theta = {theta} leaves the disk of Psi at xi = {xi}: {e}"
            ))
        })?;
        let res = eta_hat - template.fourier(xi);
        buf[k] = res;
        if k < k_len / 2 {
            buf[k_len - k] = res.conj();
        }
    }
    ifft_in_place(&mut buf);
    let scale = 1.0 / (k_len as f64 * h);
    let mut values = Vec::with_capacity(m);
    for i in 0..m {
        let y = 1.0 + i as f64 * h;
        values.push(buf[cells + i].re * scale + template.value(y - 1.0));
    }
    Ok(values)
}

/// Steady state η*_θ (θ ∈ (0, 1]) by Fourier inversion of
/// η̂*_θ = Ψ(1 - e^{-θ ŵ*}). Ringing within `SPECTRAL_NEG_TOL` is clamped
/// and small mass drift renormalized.
pub fn steady_state_spectral(
    kernel: &Kernel,
    theta: f64,
    spec: &SpectralGridSpec,
) -> Result<GridDensity> {
    if !(0.0..=1.0).contains(&theta) || theta == 0.0 {
        return Err(Error::Domain(format!(
            "steady states lie in the probability class only for theta in (0,1], got {theta}"
        )));
    }
    let values = sample_and_invert(kernel, theta, spec)?;
    let d = GridDensity::density(spec.grid.h, values, 1.0, SPECTRAL_NEG_TOL)?;
    if (d.mass() - 1.0).abs() < MASS_RENORM_TOL {
        d.renormalized()
    } else {
        Ok(d)
    }
}

/// Generalized profile for θ > 1 (diagnostics of θ*): same inversion,
/// no positivity or mass normalization, returned as a signed function.
pub fn generalized_profile(
    kernel: &Kernel,
    theta: f64,
    spec: &SpectralGridSpec,
) -> Result<GridDensity> {
    if theta <= 0.0 {
        return Err(Error::Domain("theta must be positive".into()));
    }
    let values = sample_and_invert(kernel, theta, spec)?;
    Ok(GridDensity::signed(spec.grid.h, values, 1.0))
}

/// Steady state by direct integration of the stationary equation
/// (yη)' + β (T₁𝔔[η])(y) = 0, η = β/y on the first interval [1, n+1],
/// marched interval by interval (the delay makes the right side depend on
/// already-computed history only).
pub fn steady_state_ode(kernel: &Kernel, beta: f64, grid: &GridSpec) -> Result<GridDensity> {
    if beta <= 0.0 {
        return Err(Error::Domain("beta must be positive".into()));
    }
    let cells = grid.cells_per_unit()?;
    if cells < 8 {
        return Err(Error::Config(format!(
            "ODE march needs at least 8 cells per unit, got {cells}"
        )));
    }
    let h = grid.h;
    let m = grid.len();
    let n = kernel.n_min();
    if grid.y_max <= (n + 1) as f64 {
        return Err(Error::Config(format!(
            "y_max = {} must exceed n + 1 = {}",
            grid.y_max,
            n + 1
        )));
    }

    let mut eta = vec![0.0; m];
    let first_interval_end = (n * cells).min(m - 1);
    for (i, v) in eta.iter_mut().enumerate().take(first_interval_end + 1) {
        *v = beta / (1.0 + i as f64 * h);
    }

    let mut machine = ConvMachine::new(kernel, h, cells, m);
    let mut g = (1.0 + first_interval_end as f64 * h) * eta[first_interval_end];
    for i in first_interval_end..m - 1 {
        machine.extend(&eta, i + 1);
        let y0 = 1.0 + i as f64 * h;
        let source = |y: f64| -> f64 { -beta * machine.source_at(y - 1.0) };
        let coarse = march_cell(&source, y0, h, 4);
        let fine = march_cell(&source, y0, h, 8);
        if (fine - coarse).abs() > 1e-7 * (1.0 + g.abs()) {
            let finer = march_cell(&source, y0, h, 32);
            if (finer - fine).abs() > 1e-7 * (1.0 + g.abs()) {
                return Err(Error::Numerics(format!(
                    "ODE march local error did not settle at y = {y0}"
                )));
            }
            g += finer;
        } else {
            g += fine;
        }
        eta[i + 1] = g / (y0 + h);
    }
    GridDensity::density(h, eta, 1.0, 1e-12)
}

/// Integral of the source over one cell by composite Simpson on
/// `substeps` RK4-equivalent quarter steps.
fn march_cell<F: Fn(f64) -> f64>(source: &F, y0: f64, h: f64, substeps: usize) -> f64 {
    let delta = h / substeps as f64;
    let mut acc = 0.0;
    for s in 0..substeps {
        let a = y0 + s as f64 * delta;
        let k1 = source(a);
        let k2 = source(a + 0.5 * delta);
        let k4 = source(a + delta);
        acc += delta / 6.0 * (k1 + 4.0 * k2 + k4);
    }
    acc
}

/// Incrementally extended trapezoid convolution powers: pow[j][idx] holds
/// η^{*(j+1)}(1 + idx h) computed from history. The unit delay guarantees
/// every needed value depends on η at least one unit behind the march.
struct ConvMachine<'a> {
    kernel: &'a Kernel,
    h: f64,
    cells: usize,
    len: usize,
    halved: Vec<f64>,
    pow: Vec<Vec<f64>>,
    source: Vec<f64>,
    filled: usize,
}

impl<'a> ConvMachine<'a> {
    fn new(kernel: &'a Kernel, h: f64, cells: usize, len: usize) -> Self {
        let degree = kernel.degree();
        ConvMachine {
            kernel,
            h,
            cells,
            len,
            halved: Vec::new(),
            pow: vec![vec![0.0; len]; degree],
            source: vec![0.0; len],
            filled: 0,
        }
    }

    /// Extend cached arrays so `source_at` covers x - 1 for x up to the
    /// grid point `upto` (η is known on [0, upto-1] at call time).
    fn extend(&mut self, eta: &[f64], upto: usize) {
        let need = (upto + 3).min(self.len).saturating_sub(self.cells);
        while self.halved.len() < upto {
            let i = self.halved.len();
            let v = if i == 0 { 0.5 * eta[0] } else { eta[i] };
            self.halved.push(v);
        }
        let degree = self.kernel.degree();
        while self.filled < need {
            let idx = self.filled;
            self.pow[0][idx] = eta[idx];
            for j in 1..degree {
                // η^{*(j+1)}(x) = h Σ_a halved[a] · η^{*j}(x - 1 - a h)
                let base = idx as isize - self.cells as isize;
                let mut s = 0.0;
                if base >= 0 {
                    let base = base as usize;
                    for a in 0..=base {
                        s += self.halved[a] * self.pow[j - 1][base - a];
                    }
                }
                self.pow[j][idx] = s * self.h;
            }
            let weights = self.kernel.weights();
            let mut total = 0.0;
            for (j, &p) in weights.iter().enumerate() {
                total += p * self.pow[j][idx];
            }
            self.source[idx] = total;
            self.filled += 1;
        }
    }

    /// 𝔔[η](x) by cubic interpolation of the cached grid values.
    fn source_at(&self, x: f64) -> f64 {
        interp_clamped_cubic(&self.source[..self.filled], self.h, x)
    }
}

/// 𝔔[η] = Σ p_j η^{*j} by zero-padded FFT convolution on the input grid.
/// Errors if the convolution carries mass beyond the grid (caller must
/// size grids for the expanded support).
pub fn apply_q(kernel: &Kernel, eta: &GridDensity) -> Result<GridDensity> {
    let h = eta.h();
    let m = eta.len();
    let degree = kernel.degree();
    let cells = (1.0 / h).round() as usize;
    // Samples are placed on the absolute grid y = i h so that every
    // convolution power shares one origin; η^{*deg} then reaches the slot
    // deg (m - 1 + cells).
    let full = degree * (m - 1 + cells) + 1;
    let k_len = full.next_power_of_two();

    let support_idx = (((eta.support_min() - 1.0) / h).round() as usize).min(m - 1);
    let mut u = vec![Complex64::new(0.0, 0.0); k_len];
    for (i, &v) in eta.values().iter().enumerate() {
        u[cells + i] = Complex64::new(v, 0.0);
    }
    u[cells + support_idx] *= 0.5;
    u[cells + m - 1] *= 0.5;
    fft_in_place(&mut u);

    let weights = kernel.weights();
    let mut acc = vec![Complex64::new(0.0, 0.0); k_len];
    for k in 0..k_len {
        let base = u[k];
        let mut pow = base;
        let mut total = Complex64::new(0.0, 0.0);
        for (j, &p) in weights.iter().enumerate() {
            if j >= 1 {
                pow *= base;
            }
            if p != 0.0 && j >= 1 {
                total += p * h.powi(j as i32) * pow;
            }
        }
        acc[k] = total;
    }
    ifft_in_place(&mut acc);
    let scale = 1.0 / k_len as f64;

    // j = 1 contributes the identity exactly.
    let p1 = weights[0];
    let mut out = vec![0.0; m];
    let mut idx = 0usize;
    while idx < m {
        let conv = acc[idx + cells].re * scale;
        out[idx] = p1 * eta.values()[idx] + conv;
        idx += 1;
    }
    // Everything beyond the grid is overflow; tolerate only negligible mass.
    let mut overflow = 0.0;
    for slot in acc.iter().take(full.min(k_len)).skip(cells + m) {
        overflow += slot.re.abs() * scale;
    }
    let overflow_mass = overflow * h;
    if overflow_mass > 1e-9 {
        return Err(Error::Grid(format!(
            "convolution support exceeds the grid: dropped mass {overflow_mass:e}"
        )));
    }
    GridDensity::density(
        h,
        out,
        kernel.n_min() as f64 * eta.support_min(),
        SPECTRAL_NEG_TOL,
    )
}

/// Exact unit shift (T₁ f)(y) = f(y - 1): an index shift by 1/h cells.
pub fn shift_t1(eta: &GridDensity) -> Result<GridDensity> {
    let h = eta.h();
    let inv = 1.0 / h;
    if (inv - inv.round()).abs() > 1e-9 {
        return Err(Error::Config(format!("grid step {h} does not divide 1")));
    }
    let cells = inv.round() as usize;
    let m = eta.len();
    let dropped: f64 = trapezoid_mass(&eta.values()[m.saturating_sub(cells)..], h);
    if dropped.abs() > 1e-12 {
        return Err(Error::Grid(format!(
            "shift would push mass {dropped:e} past the grid"
        )));
    }
    let mut out = vec![0.0; m];
    for i in 0..m - cells {
        out[i + cells] = eta.values()[i];
    }
    Ok(GridDensity::signed(h, out, eta.support_min() + 1.0))
}

/// Heavy-tail constant lim y^{1+θ} η*_θ(y) = θ e^{θ γ_E} / (κ Γ(1-θ)) for
/// 0 < θ < 1.
pub fn tail_constant(kernel: &Kernel, theta: f64) -> Result<f64> {
    if theta <= 0.0 || theta >= 1.0 {
        return Err(Error::Domain(format!(
            "tail law holds for 0 < theta < 1, got {theta} (theta = 1 decays exponentially)"
        )));
    }
    Ok(theta * (theta * EULER_GAMMA).exp() / (kernel.kappa() * gamma(1.0 - theta)))
}

/// Result of the tail-lemma lower-bound check
/// 𝔔[η](y) >= η(y) Q'(∫_1^{y/N} η) for nonnegative non-increasing η.
#[derive(Debug, Clone, Copy)]
pub struct LowerBoundReport {
    pub min_slack: f64,
    pub argmin_y: f64,
}

pub fn check_lower_bound(kernel: &Kernel, eta: &GridDensity) -> Result<LowerBoundReport> {
    let vals = eta.values();
    for i in 1..vals.len() {
        if vals[i] > vals[i - 1] + 1e-9 {
            return Err(Error::Domain(format!(
                "density increases at y = {}; the bound requires non-increasing input",
                eta.y(i)
            )));
        }
    }
    let q_of = apply_q(kernel, eta)?;
    let h = eta.h();
    let m = eta.len();
    let big_n = kernel.degree() as f64;

    // Cumulative trapezoid of η for ∫_1^{y/N}.
    let mut cum = vec![0.0; m];
    for i in 1..m {
        cum[i] = cum[i - 1] + 0.5 * h * (vals[i - 1] + vals[i]);
    }
    let cum_at = |y: f64| -> f64 {
        if y <= 1.0 {
            return 0.0;
        }
        let t = ((y - 1.0) / h).min((m - 1) as f64);
        let i = t.floor() as usize;
        let frac = t - i as f64;
        if i + 1 < m {
            cum[i] * (1.0 - frac) + cum[i + 1] * frac
        } else {
            cum[m - 1]
        }
    };

    let mut min_slack = f64::INFINITY;
    let mut argmin_y = big_n;
    for i in 0..m {
        let y = eta.y(i);
        if y < big_n {
            continue;
        }
        let rhs = vals[i] * kernel.q_prime_at(Complex64::new(cum_at(y / big_n), 0.0)).re;
        let slack = q_of.values()[i] - rhs;
        if slack < min_slack {
            min_slack = slack;
            argmin_y = y;
        }
    }
    Ok(LowerBoundReport { min_slack, argmin_y })
}
