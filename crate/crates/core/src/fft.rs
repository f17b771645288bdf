//! Thin wrappers over `rustfft` for real periodic sample sequences.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::f64::consts::TAU;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT `S_m = Σ_j s_j e^{-2πi mj/N}`.
pub fn forward(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(&mut buf));
    buf
}

/// Inverse of [`forward`], returning the real part.
pub fn inverse_real(mut spectrum: Vec<Complex64>) -> Vec<f64> {
    let n = spectrum.len();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut spectrum));
    spectrum.iter().map(|c| c.re / n as f64).collect()
}

/// Signed wavenumber of DFT bin `m` for length `n`.
pub fn wavenumber(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Spectral derivative of order `order` of 1-periodic samples.
///
/// The Nyquist bin of even-length sequences is dropped, so the first
/// derivative operator is skew-symmetric.
pub fn derivative(samples: &[f64], order: u32) -> Vec<f64> {
    let n = samples.len();
    let mut spec = forward(samples);
    for (m, c) in spec.iter_mut().enumerate() {
        if n.is_multiple_of(2) && m == n / 2 {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let ik = Complex64::new(0.0, TAU * wavenumber(m, n) as f64);
        *c *= ik.powu(order);
    }
    inverse_real(spec)
}

/// Evaluates the trigonometric interpolant of the samples at `theta + shift_j`
/// for every sample point, i.e. a rotation of the loop parameter by `shift`.
pub fn shift(samples: &[f64], shift: f64) -> Vec<f64> {
    let n = samples.len();
    let mut spec = forward(samples);
    for (m, c) in spec.iter_mut().enumerate() {
        if n.is_multiple_of(2) && m == n / 2 {
            // Keep the Nyquist bin real: cos(πN(θ+s)) sampled on the grid.
            *c *= (TAU * (n / 2) as f64 * shift).cos();
            continue;
        }
        let phase = TAU * wavenumber(m, n) as f64 * shift;
        *c *= Complex64::new(phase.cos(), phase.sin());
    }
    inverse_real(spec)
}
