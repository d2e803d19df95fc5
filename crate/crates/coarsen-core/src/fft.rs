//! Thin wrappers around rustfft for in-place transforms.

use num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn fft_in_place(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(buf.len());
    fft.process(buf);
}

/// Unnormalized inverse transform: Σ_k X_k e^{+2πikm/K}.
pub(crate) fn ifft_in_place(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(buf.len());
    fft.process(buf);
}
