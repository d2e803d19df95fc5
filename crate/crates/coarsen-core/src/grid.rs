//! Grid-sampled densities on [1, y_max] and sampled Fourier transforms.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Magic bytes of the binary snapshot format.
const SNAPSHOT_MAGIC: &[u8; 4] = b"CGD1";

/// Uniform grid specification: step h (which must divide 1 exactly so that
/// the unit delay is an integer number of cells) and right endpoint y_max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub h: f64,
    pub y_max: f64,
}

impl GridSpec {
    pub fn new(h: f64, y_max: f64) -> Result<Self> {
        let spec = GridSpec { h, y_max };
        spec.cells_per_unit()?;
        if y_max <= 1.0 {
            return Err(Error::Config(format!("y_max = {y_max} must exceed 1")));
        }
        Ok(spec)
    }

    /// Number of cells per unit length; errors unless h divides 1 exactly.
    pub fn cells_per_unit(&self) -> Result<usize> {
        let inv = 1.0 / self.h;
        if (inv - inv.round()).abs() > 1e-9 || inv < 1.0 {
            return Err(Error::Config(format!(
                "grid step h = {} does not divide 1",
                self.h
            )));
        }
        Ok(inv.round() as usize)
    }

    /// Number of grid points on [1, y_max].
    pub fn len(&self) -> usize {
        ((self.y_max - 1.0) / self.h).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Default grid: h = 1/64, y_max = 64, so the unit delay is an exact
/// 64-cell shift and M = 4033.
impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            h: 1.0 / 64.0,
            y_max: 64.0,
        }
    }
}

/// A function sampled on the uniform grid y_i = 1 + i h.
///
/// Probability densities and signed functions (the counter-term d) share
/// this type; positivity is enforced only by the `density` constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    h: f64,
    values: Vec<f64>,
    support_min: f64,
    mass: f64,
}

impl GridDensity {
    /// Build a nonnegative density. Values in [-neg_tol, 0) are clamped to
    /// zero (discretization ringing); anything more negative is an error.
    pub fn density(h: f64, mut values: Vec<f64>, support_min: f64, neg_tol: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config("density needs at least two samples".into()));
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -neg_tol {
            return Err(Error::Numerics(format!(
                "negative density value {min:e} exceeds tolerance {neg_tol:e}"
            )));
        }
        for v in &mut values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mass = trapezoid_mass(&values, h);
        Ok(GridDensity {
            h,
            values,
            support_min,
            mass,
        })
    }

    /// Build a signed grid function (no positivity invariant).
    pub fn signed(h: f64, values: Vec<f64>, support_min: f64) -> Self {
        let mass = trapezoid_mass(&values, h);
        GridDensity {
            h,
            values,
            support_min,
            mass,
        }
    }

    /// Uniform probability density on [a, b] sampled on [1, y_max]; the
    /// boundary samples take the half value (trapezoid-consistent), so the
    /// recorded mass is exactly 1.
    pub fn uniform(spec: &GridSpec, a: f64, b: f64) -> Result<Self> {
        if a < 1.0 || b <= a || b > spec.y_max {
            return Err(Error::Config(format!(
                "uniform support [{a}, {b}] not inside [1, {}]",
                spec.y_max
            )));
        }
        let height = 1.0 / (b - a);
        let m = spec.len();
        let mut values = vec![0.0; m];
        for (i, v) in values.iter_mut().enumerate() {
            let y = 1.0 + i as f64 * spec.h;
            if y > a + 1e-12 && y < b - 1e-12 {
                *v = height;
            } else if (y - a).abs() <= 1e-12 || (y - b).abs() <= 1e-12 {
                *v = 0.5 * height;
            }
        }
        GridDensity::density(spec.h, values, a, 0.0)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn y_max(&self) -> f64 {
        1.0 + (self.values.len() - 1) as f64 * self.h
    }

    pub fn y(&self, i: usize) -> f64 {
        1.0 + i as f64 * self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support_min(&self) -> f64 {
        self.support_min
    }

    /// Trapezoidal mass recorded at construction.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Whether the recorded mass qualifies as a probability density.
    pub fn is_probability(&self) -> bool {
        (self.mass - 1.0).abs() <= 1e-6
    }

    /// First moment ∫ y f(y) dy by the trapezoid rule.
    pub fn first_moment(&self) -> f64 {
        let weighted: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.y(i) * v)
            .collect();
        trapezoid_mass(&weighted, self.h)
    }

    /// Interpolated value at y (clamped cubic; zero outside [1, y_max]).
    pub fn value_at(&self, y: f64) -> f64 {
        interp_clamped_cubic(&self.values, self.h, y)
    }

    /// Divide by the recorded mass so the result has mass exactly one.
    pub fn renormalized(&self) -> Result<Self> {
        if self.mass <= 0.0 {
            return Err(Error::Numerics("cannot renormalize zero mass".into()));
        }
        let values: Vec<f64> = self.values.iter().map(|v| v / self.mass).collect();
        Ok(GridDensity::signed_with_support(
            self.h,
            values,
            self.support_min,
        ))
    }

    fn signed_with_support(h: f64, values: Vec<f64>, support_min: f64) -> Self {
        let mass = trapezoid_mass(&values, h);
        GridDensity {
            h,
            values,
            support_min,
            mass,
        }
    }

    /// Write `y,value` rows preceded by `#`-prefixed header lines.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "y,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.17e},{:.17e}", self.y(i), v)?;
        }
        Ok(())
    }

    pub fn to_csv_file(&self, path: &Path, header: &[String]) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f), header)
    }

    /// Read a two-column CSV written by `write_csv` (comment lines and the
    /// column header are skipped). The grid step is inferred and checked
    /// for uniformity.
    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let mut content = String::new();
        let mut reader = std::io::BufReader::new(r);
        reader.read_to_string(&mut content)?;
        let mut ys = Vec::new();
        let mut vs = Vec::new();
        for line in content.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('y') {
                continue;
            }
            let mut parts = line.split(',');
            let y: f64 = parts
                .next()
                .ok_or_else(|| Error::Config("missing y column".into()))?
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad y value: {e}")))?;
            let v: f64 = parts
                .next()
                .ok_or_else(|| Error::Config("missing value column".into()))?
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad value: {e}")))?;
            ys.push(y);
            vs.push(v);
        }
        if ys.len() < 2 {
            return Err(Error::Config("csv holds fewer than two samples".into()));
        }
        if (ys[0] - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("grid must start at y = 1, got {}", ys[0])));
        }
        let h = ys[1] - ys[0];
        for i in 1..ys.len() {
            if (ys[i] - ys[i - 1] - h).abs() > 1e-9 {
                return Err(Error::Config("non-uniform grid in csv".into()));
            }
        }
        Ok(GridDensity::signed(h, vs, 1.0))
    }

    /// Binary snapshot: magic, h, M, support_min, then the raw values.
    /// Round trips bit-exactly.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&self.h.to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        w.write_all(&self.support_min.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Config("bad snapshot magic".into()));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let h = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let m = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let support_min = f64::from_le_bytes(b8);
        let mut values = Vec::with_capacity(m);
        for _ in 0..m {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Ok(GridDensity::signed_with_support(h, values, support_min))
    }
}

/// Trapezoid rule on uniformly spaced samples.
pub fn trapezoid_mass(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let sum: f64 = values.iter().sum();
    h * (sum - 0.5 * (values[0] + values[values.len() - 1]))
}

/// Four-point Lagrange interpolation on the uniform grid starting at y = 1,
/// clamped to the range of the two bracketing samples so that jumps do not
/// produce over- or undershoot. Zero outside [1, y_max].
pub fn interp_clamped_cubic(values: &[f64], h: f64, y: f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let y_max = 1.0 + (n - 1) as f64 * h;
    if y < 1.0 - 1e-12 || y > y_max + 1e-12 {
        return 0.0;
    }
    let t = ((y - 1.0) / h).clamp(0.0, (n - 1) as f64);
    let i = (t.floor() as usize).min(n - 2);
    let frac = t - i as f64;
    if frac.abs() < 1e-12 {
        return values[i];
    }
    let lo = values[i].min(values[i + 1]);
    let hi = values[i].max(values[i + 1]);
    if n < 4 {
        return values[i] + frac * (values[i + 1] - values[i]);
    }
    let base = i.saturating_sub(1).min(n - 4);
    let s = t - base as f64;
    let mut acc = 0.0;
    for (k, &v) in values[base..base + 4].iter().enumerate() {
        let mut w = 1.0;
        for j in 0..4 {
            if j != k {
                w *= (s - j as f64) / (k as f64 - j as f64);
            }
        }
        acc += w * v;
    }
    acc.clamp(lo, hi)
}

/// Complex samples of a Fourier transform on the symmetric DFT grid
/// ξ_k = k Δξ (FFT storage order: k = 0, 1, ..., -1).
#[derive(Debug, Clone)]
pub struct SpectralFunction {
    xi_step: f64,
    samples: Vec<Complex64>,
}

impl SpectralFunction {
    pub fn new(xi_step: f64, samples: Vec<Complex64>) -> Self {
        SpectralFunction { xi_step, samples }
    }

    pub fn xi_step(&self) -> f64 {
        self.xi_step
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Signed frequency of storage slot k.
    pub fn xi(&self, k: usize) -> f64 {
        let n = self.samples.len();
        let signed = if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        signed * self.xi_step
    }

    /// Value at ξ = 0, which equals the mass of the represented function.
    pub fn at_zero(&self) -> Complex64 {
        self.samples[0]
    }

    /// max_k |f(-ξ_k) - conj f(ξ_k)|; zero for transforms of real
    /// functions.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let n = self.samples.len();
        let mut err = 0.0f64;
        for k in 1..n / 2 {
            err = err.max((self.samples[n - k] - self.samples[k].conj()).norm());
        }
        err
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_density_has_unit_mass() {
        let spec = GridSpec::default();
        let d = GridDensity::uniform(&spec, 1.0, 2.0).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert!(d.is_probability());
        assert_eq!(d.len(), 4033);
    }

    #[test]
    fn grid_spec_rejects_non_divisor_step() {
        assert!(GridSpec::new(0.3, 10.0).is_err());
        assert!(GridSpec::new(1.0 / 64.0, 64.0).is_ok());
    }

    #[test]
    fn density_rejects_deep_negatives_and_clamps_small() {
        let vals = vec![1.0, -5e-10, 1.0, 1.0];
        let d = GridDensity::density(0.25, vals, 1.0, 1e-9).unwrap();
        assert_eq!(d.values()[1], 0.0);
        let bad = vec![1.0, -1e-6, 1.0, 1.0];
        assert!(GridDensity::density(0.25, bad, 1.0, 1e-9).is_err());
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let spec = GridSpec::default();
        let d = GridDensity::uniform(&spec, 1.25, 2.625).unwrap();
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        let back = GridDensity::read_binary(buf.as_slice()).unwrap();
        assert_eq!(d.values(), back.values());
        assert_eq!(d.h().to_bits(), back.h().to_bits());
        assert_eq!(d.support_min().to_bits(), back.support_min().to_bits());
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let spec = GridSpec { h: 0.25, y_max: 3.0 };
        let d = GridDensity::uniform(&spec, 1.0, 2.0).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, &["test".into()]).unwrap();
        let back = GridDensity::from_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), d.len());
        for (a, b) in d.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let h = 0.125;
        let n = 33;
        let f = |y: f64| 2.0 + y - 0.5 * y * y + 0.25 * y * y * y;
        let values: Vec<f64> = (0..n).map(|i| f(1.0 + i as f64 * h)).collect();
        for &y in &[1.3, 2.0411, 3.77, 4.9] {
            let v = interp_clamped_cubic(&values, h, y);
            // Clamping limits exactness to monotone stretches; this cubic is
            // monotone on the test points' neighborhoods.
            assert!((v - f(y)).abs() < 1e-3, "y = {y}: {v} vs {}", f(y));
        }
    }

    #[test]
    fn interpolation_never_overshoots_jumps() {
        let values = vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let h = 0.5;
        let mut y = 1.0;
        while y < 3.5 {
            let v = interp_clamped_cubic(&values, h, y);
            assert!((-1e-15..=1.0 + 1e-15).contains(&v), "overshoot at {y}: {v}");
            y += 0.01;
        }
    }

    #[test]
    fn interpolation_vanishes_outside_grid() {
        let values = vec![1.0, 1.0];
        assert_eq!(interp_clamped_cubic(&values, 0.5, 0.2), 0.0);
        assert_eq!(interp_clamped_cubic(&values, 0.5, 2.7), 0.0);
    }

    #[test]
    fn spectral_function_indexing() {
        let s = SpectralFunction::new(
            0.5,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, -1.0),
            ],
        );
        assert_eq!(s.xi(0), 0.0);
        assert_eq!(s.xi(1), 0.5);
        assert_eq!(s.xi(3), -0.5);
        assert_eq!(s.conjugate_symmetry_error(), 0.0);
    }
}
