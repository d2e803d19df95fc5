//! The acceptance suite: one runner per quantitative criterion, shared by
//! the `verify` CLI command and the integration tests. Every tolerance is
//! pinned here.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{self, IntegrateOptions, DEFAULT_DTAU};
use crate::grid::{GridDensity, GridSpec};
use crate::kernel::{Kernel, DEFAULT_SERIES_ORDER};
use crate::linearize::{self, weighted_norm, WeightedNormSpec, TRANSFORM_PAD};
use crate::mc::{ks_distance, McEnsemble, McVariant, SamplerSpec};
use crate::profiles::{self, SpectralGridSpec};
use crate::special::{self, EULER_GAMMA};

/// Outcome of one criterion with the measured quantities.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub pass: bool,
    pub measured: Vec<(String, f64)>,
}

impl CriterionResult {
    fn new(id: usize, name: &str) -> Self {
        CriterionResult {
            id,
            name: name.to_string(),
            pass: true,
            measured: Vec::new(),
        }
    }

    fn check(&mut self, label: &str, value: f64, ok: bool) {
        self.measured.push((label.to_string(), value));
        self.pass &= ok;
    }

    /// One pass/fail line for terminal output.
    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let details: Vec<String> = self
            .measured
            .iter()
            .map(|(k, v)| format!("{k}={v:.6e}"))
            .collect();
        format!("[{status}] {:2}. {} ({})", self.id, self.name, details.join(", "))
    }
}

pub const CRITERIA_COUNT: usize = 15;

fn kernel_z2() -> Result<Kernel> {
    Kernel::new(&[0.0, 1.0], DEFAULT_SERIES_ORDER)
}

fn steady_default(kernel: &Kernel, theta: f64) -> Result<GridDensity> {
    profiles::steady_state_spectral(
        kernel,
        theta,
        &SpectralGridSpec {
            grid: GridSpec::default(),
            pad: TRANSFORM_PAD,
        },
    )
}

/// 1. Kernel constants for pure pair merging: q exactly 2, κ and R within
/// 1e-10 of their closed forms 1/2 and 2.
fn c01_kernel_constants() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(1, "kernel constants q, kappa, R");
    let k = kernel_z2()?;
    r.check("q", k.q(), k.q() == 2.0);
    r.check("kappa_err", (k.kappa() - 0.5).abs(), (k.kappa() - 0.5).abs() < 1e-10);
    r.check(
        "radius_err",
        (k.radius_r() - 2.0).abs(),
        (k.radius_r() - 2.0).abs() < 1e-10,
    );
    Ok(r)
}

/// 2. Ψ series: 2^{-k} coefficients for pair merging and nonnegativity
/// across a family of kernels.
fn c02_psi_series() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(2, "Psi series coefficients");
    let k = kernel_z2()?;
    let mut worst = 0.0f64;
    for m in 1..=50 {
        worst = worst.max((k.psi().coeffs()[m] - 0.5f64.powi(m as i32)).abs());
    }
    r.check("max_coeff_err", worst, worst < 1e-12);
    let families: [&[f64]; 4] = [&[1.0], &[0.0, 1.0], &[0.5, 0.5], &[0.3, 0.0, 0.7]];
    let mut min_coeff = f64::INFINITY;
    for weights in families {
        let kf = Kernel::new(weights, 128)?;
        for &c in &kf.psi().coeffs()[1..] {
            min_coeff = min_coeff.min(c);
        }
    }
    r.check("min_coeff", min_coeff, min_coeff >= 0.0);
    Ok(r)
}

/// 3. Spectral and ODE steady states agree to 1e-4 sup-norm on [1, 12]
/// in under ten seconds.
fn c03_cross_validation() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(3, "steady-state cross-validation");
    let start = std::time::Instant::now();
    let k = kernel_z2()?;
    let grid = GridSpec {
        h: 1.0 / 64.0,
        y_max: 16.0,
    };
    let spectral = profiles::steady_state_spectral(&k, 1.0, &SpectralGridSpec { grid, pad: 16 })?;
    let ode = profiles::steady_state_ode(&k, 0.5, &grid)?;
    let mut sup = 0.0f64;
    for i in 0..spectral.len() {
        if spectral.y(i) > 12.0 {
            break;
        }
        sup = sup.max((spectral.values()[i] - ode.values()[i]).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    r.check("sup_diff", sup, sup <= 1e-4);
    r.check("runtime_s", secs, secs < 10.0);
    Ok(r)
}

/// 4. Moment identity ∫ y η*_1 dy = 2 e^{γ_E} within 1e-3 relative.
fn c04_moment_identity() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(4, "first moment of the steady state");
    let k = kernel_z2()?;
    let profile = steady_default(&k, 1.0)?;
    let moment = profile.first_moment();
    let exact = 2.0 * EULER_GAMMA.exp();
    let rel = (moment - exact).abs() / exact;
    r.check("moment", moment, true);
    r.check("rel_err", rel, rel <= 1e-3);
    Ok(r)
}

/// 5. Tail law at θ = 0.5: y^{1.5} η(y) at y = 300 within 3% of
/// θ e^{θγ_E} / (κ Γ(1-θ)).
fn c05_tail_law() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(5, "heavy-tail law at theta = 1/2");
    let k = kernel_z2()?;
    let grid = GridSpec {
        h: 1.0 / 64.0,
        y_max: 320.0,
    };
    let profile = profiles::steady_state_spectral(&k, 0.5, &SpectralGridSpec { grid, pad: 32 })?;
    let idx = ((300.0 - 1.0) / grid.h).round() as usize;
    let lhs = 300.0f64.powf(1.5) * profile.values()[idx];
    let constant = profiles::tail_constant(&k, 0.5)?;
    let rel = (lhs - constant).abs() / constant;
    r.check("y32_eta", lhs, true);
    r.check("tail_constant", constant, true);
    r.check("rel_err", rel, rel <= 0.03);
    Ok(r)
}

/// 6. Pure one-partner kernel: 3 η*_1(3) = 1 - log 2 within 1e-6
/// (the profile is the shifted Dickmann function over y).
fn c06_dickmann() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(6, "one-partner profile value at y = 3");
    let k = Kernel::new(&[1.0], DEFAULT_SERIES_ORDER)?;
    let grid = GridSpec {
        h: 1.0 / 64.0,
        y_max: 8.0,
    };
    let profile = profiles::steady_state_ode(&k, 1.0, &grid)?;
    let idx = 2 * 64;
    let val = 3.0 * profile.values()[idx];
    let exact = 1.0 - (2.0f64).ln();
    r.check("three_eta_three", val, true);
    r.check("abs_err", (val - exact).abs(), (val - exact).abs() <= 1e-6);
    Ok(r)
}

/// 7. Disk bound diagnostics: positive margin and positive K on the log
/// grid, with K(1e-3) within 1e-3 of log 2 - γ_E.
fn c07_disk_bound() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(7, "disk bound margin and K function");
    let grid = special::log_grid(1e-3, 100.0, 4096);
    let rep = special::appendix_margin(1.0, &grid)?;
    r.check("margin", rep.margin, rep.margin > 0.0);
    r.check("k_min", rep.k_min, rep.k_min > 0.0);
    let at_small = special::appendix_margin(1.0, &[1e-3])?;
    let limit = (2.0f64).ln() - EULER_GAMMA;
    r.check(
        "k_limit_err",
        (at_small.k_min - limit).abs(),
        (at_small.k_min - limit).abs() <= 1e-3,
    );
    Ok(r)
}

/// 8. Critical θ* for pair merging within 1e-3 of 3.24826.
fn c08_theta_star() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(8, "critical theta*");
    let k = kernel_z2()?;
    let ts = k.theta_star()?;
    r.check("theta_star", ts, (ts - 3.24826).abs() <= 1e-3);
    Ok(r)
}

/// 9. Conjugacy: direct integrator and exact evolution agree to 1e-3 in
/// L¹ at τ = 1 from the uniform initial density.
fn c09_conjugacy() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(9, "direct integrator vs exact formula");
    let k = kernel_z2()?;
    let eta0 = GridDensity::uniform(&GridSpec::default(), 1.0, 2.0)?;
    let trace = evolve::integrate(&k, &eta0, 1.0, DEFAULT_DTAU, &IntegrateOptions::default())?;
    let exact = linearize::evolve_exact(&k, &eta0, 1.0, 1.0)?;
    let direct = trace.final_state();
    let diff = GridDensity::signed(
        eta0.h(),
        direct
            .values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| a - b)
            .collect(),
        1.0,
    );
    let l1 = weighted_norm(&diff, WeightedNormSpec { p: 1, gamma: 0.0 });
    r.check("l1_diff", l1, l1 <= 1e-3);
    Ok(r)
}

/// 10. Convergence rate for finite-mean data: fitted decay of
/// ‖η(τ) - η*_1‖_{2,γ-1}, γ = 3, within 15% of γ - 3/2 = 1.5.
fn c10_convergence_rate() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(10, "finite-mean convergence rate");
    let k = kernel_z2()?;
    let eta0 = GridDensity::uniform(&GridSpec::default(), 1.0, 2.0)?;
    let fit = evolve::convergence_rate(&k, &eta0, 1.0, 3.0, (1.0, 3.0))?;
    let rel = (fit.rate - 1.5).abs() / 1.5;
    r.check("rate", fit.rate, rel <= 0.15);
    Ok(r)
}

/// 11. Heavy-tail stability: θ = 0.5 mixture initial data, γ = 1.2,
/// fitted rate of ‖η(τ) - η*_θ‖_{2,γ-θ} within 25% of γ-θ-1/2 = 0.2.
fn c11_heavy_tail_rate() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(11, "heavy-tail stability rate");
    let k = kernel_z2()?;
    let grid = GridSpec::default();
    let star = steady_default(&k, 0.5)?;
    let uniform = GridDensity::uniform(&grid, 1.0, 2.0)?;
    let mix: Vec<f64> = star
        .values()
        .iter()
        .zip(uniform.values())
        .map(|(s, u)| 0.9 * s + 0.1 * u)
        .collect();
    // The grid truncates the heavy tail; renormalize the mix so the
    // transform sees unit mass.
    let eta0 = GridDensity::density(grid.h, mix, 1.0, 1e-9)?.renormalized()?;
    let fit = evolve::convergence_rate(&k, &eta0, 0.5, 1.2, (1.0, 3.0))?;
    let rel = (fit.rate - 0.2).abs() / 0.2;
    r.check("rate", fit.rate, rel <= 0.25);
    Ok(r)
}

/// 12. Monte Carlo attractor: 2·10^5 intervals, mean-field pair merging,
/// cutoff grown by 8: KS distance to the steady CDF <= 0.02, length
/// conserved to 1e-9 relative, identical rerun under the same seed.
fn c12_monte_carlo() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(12, "mean-field simulation attractor");
    let k = kernel_z2()?;
    let run = || -> Result<(McEnsemble, f64)> {
        let mut ens = McEnsemble::init(
            200_000,
            SamplerSpec::Uniform(1.0, 2.0),
            20260809,
            McVariant::MeanField,
        )?;
        let t0 = ens.total_length();
        let target = ens.cutoff().max(1.0) * 8.0;
        ens.run_until(&k, target)?;
        Ok((ens, t0))
    };
    let (ens, t0) = run()?;
    let drift = ((ens.total_length() - t0) / t0).abs();
    let reference = steady_default(&k, 1.0)?;
    let d = ks_distance(&ens.empirical_rescaled(), &reference)?;
    r.check("ks_distance", d, d <= 0.02);
    r.check("length_drift", drift, drift <= 1e-9);
    let (ens2, _) = run()?;
    let identical = ens.lengths().len() == ens2.lengths().len()
        && ens
            .lengths()
            .iter()
            .zip(ens2.lengths())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    r.check("rerun_identical", identical as u8 as f64, identical);
    Ok(r)
}

/// 13. Complete monotonicity spot check: alternating finite differences
/// of the Laplace transform of η*_θ for θ ∈ {0.5, 1}.
fn c13_complete_monotonicity() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(13, "complete monotonicity of the transform");
    let k = kernel_z2()?;
    let mut worst = f64::INFINITY;
    for &theta in &[0.5, 1.0] {
        let profile = steady_default(&k, theta)?;
        let hp = 0.05;
        let laplace = |p: f64| -> f64 {
            let vals: Vec<f64> = profile
                .values()
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (-p * profile.y(i)).exp())
                .collect();
            crate::grid::trapezoid_mass(&vals, profile.h())
        };
        let mut p = 0.1;
        while p <= 2.0 + 1e-9 {
            let table: Vec<f64> = (0..=6).map(|j| laplace(p + j as f64 * hp)).collect();
            for order in 1..=6usize {
                let mut diff = 0.0;
                for j in 0..=order {
                    let sign = if (order - j) % 2 == 0 { 1.0 } else { -1.0 };
                    diff += sign * binomial(order, j) * table[j];
                }
                let alt = if order % 2 == 0 { diff } else { -diff };
                worst = worst.min(alt);
            }
            p += 0.1;
        }
    }
    r.check("min_alternating_diff", worst, worst >= -1e-8);
    Ok(r)
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// 14. Integrator mass/positivity over τ ∈ [0, 3] for three distinct
/// probability initial conditions.
fn c14_integrator_bounds() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(14, "integrator mass and positivity");
    let k = kernel_z2()?;
    let grid = GridSpec::default();
    let mut inits = vec![
        GridDensity::uniform(&grid, 1.0, 2.0)?,
        GridDensity::uniform(&grid, 1.5, 3.0)?,
    ];
    // Normalized triangle on [2, 4].
    let tri: Vec<f64> = (0..grid.len())
        .map(|i| {
            let y = 1.0 + i as f64 * grid.h;
            if (2.0..=4.0).contains(&y) {
                1.0 - (y - 3.0).abs()
            } else {
                0.0
            }
        })
        .collect();
    inits.push(GridDensity::density(grid.h, tri, 2.0, 0.0)?);

    let mut worst_mass = 0.0f64;
    let mut worst_min = f64::INFINITY;
    for eta0 in &inits {
        let trace = evolve::integrate(&k, eta0, 3.0, DEFAULT_DTAU, &IntegrateOptions::default())?;
        for (i, &mass) in trace.masses().iter().enumerate() {
            let tau = trace.taus()[i];
            worst_mass = worst_mass.max((mass - 1.0).abs() / (1.0 + tau));
        }
        for (_, snap) in trace.snapshots() {
            let min = snap.values().iter().cloned().fold(f64::INFINITY, f64::min);
            worst_min = worst_min.min(min);
        }
    }
    r.check("mass_drift_over_1ptau", worst_mass, worst_mass <= 1e-6);
    r.check("min_value", worst_min, worst_min >= -1e-6);
    Ok(r)
}

/// 15. Moment identities of the decomposition: d̂(0) matches
/// (1/q)(γ_E - log(κ μ)) against extrapolated samples within 1e-4, and
/// the round trip reproduces ∫ y η = (1/κ) e^{γ_E - q d₀} within 1e-3.
fn c15_moment_identities() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(15, "decomposition moment identities");
    let k = kernel_z2()?;
    let eta0 = GridDensity::uniform(&GridSpec::default(), 1.0, 2.0)?;
    let dec = linearize::forward_transform(&k, &eta0, 1.0)?;
    let formula = (EULER_GAMMA - (k.kappa() * 1.5f64).ln()) / k.q();
    let extrap = (2.0 * dec.d_hat().samples()[1] - dec.d_hat().samples()[2]).re;
    r.check("d0", dec.d0(), (dec.d0() - formula).abs() < 1e-12);
    r.check(
        "d0_extrap_err",
        (extrap - formula).abs(),
        (extrap - formula).abs() <= 1e-4,
    );
    let (back, _) = linearize::inverse_transform(&k, &dec)?;
    let lhs = back.first_moment();
    let rhs = (EULER_GAMMA - k.q() * dec.d0()).exp() / k.kappa();
    let rel = (lhs - rhs).abs() / rhs;
    r.check("moment_rel_err", rel, rel <= 1e-3);
    Ok(r)
}

/// Run one criterion by id.
pub fn run(id: usize) -> Result<CriterionResult> {
    match id {
        1 => c01_kernel_constants(),
        2 => c02_psi_series(),
        3 => c03_cross_validation(),
        4 => c04_moment_identity(),
        5 => c05_tail_law(),
        6 => c06_dickmann(),
        7 => c07_disk_bound(),
        8 => c08_theta_star(),
        9 => c09_conjugacy(),
        10 => c10_convergence_rate(),
        11 => c11_heavy_tail_rate(),
        12 => c12_monte_carlo(),
        13 => c13_complete_monotonicity(),
        14 => c14_integrator_bounds(),
        15 => c15_moment_identities(),
        _ => Err(Error::Config(format!("no criterion {id}"))),
    }
}

/// Run a subset (or all) of the criteria.
pub fn run_all(subset: Option<&[usize]>) -> Result<Vec<CriterionResult>> {
    let ids: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (1..=CRITERIA_COUNT).collect(),
    };
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        out.push(run(id)?);
    }
    Ok(out)
}
