use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::jet::{Vec3, MAX_DIM};
use crate::fft;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMode {
    pub k: u32,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

/// Vector-valued 1-periodic trigonometric series in the loop parameter θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSeries {
    pub mean: Vec<f64>,
    pub modes: Vec<SeriesMode>,
}

impl PeriodicSeries {
    pub fn constant(value: Vec<f64>) -> Self {
        PeriodicSeries {
            mean: value,
            modes: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Trigonometric interpolant of `samples[j]` at θ_j = j/N, dropping modes
    /// whose amplitude is below `rel_cut` times the largest sample magnitude.
    pub fn from_samples(samples: &[Vec<f64>], rel_cut: f64) -> Self {
        let n = samples.len();
        let dim = samples[0].len();
        let scale = samples
            .iter()
            .flat_map(|s| s.iter().map(|v| v.abs()))
            .fold(1e-300_f64, f64::max);
        let spectra: Vec<_> = (0..dim)
            .map(|c| fft::forward(&samples.iter().map(|s| s[c]).collect::<Vec<_>>()))
            .collect();
        let mean = spectra.iter().map(|s| s[0].re / n as f64).collect();
        let mut modes = Vec::new();
        for m in 1..=n / 2 {
            let nyquist = n.is_multiple_of(2) && m == n / 2;
            let factor = if nyquist { 1.0 } else { 2.0 } / n as f64;
            let cos: Vec<f64> = spectra.iter().map(|s| factor * s[m].re).collect();
            let sin: Vec<f64> = spectra
                .iter()
                .map(|s| if nyquist { 0.0 } else { -factor * s[m].im })
                .collect();
            let amp = cos.iter().chain(&sin).fold(0.0_f64, |a, v| a.max(v.abs()));
            if amp > rel_cut * scale {
                modes.push(SeriesMode {
                    k: m as u32,
                    cos,
                    sin,
                });
            }
        }
        PeriodicSeries { mean, modes }
    }

    pub fn max_mode(&self) -> u32 {
        self.modes.iter().map(|m| m.k).max().unwrap_or(0)
    }

    /// Value and the first three θ-derivatives.
    pub fn eval(&self, theta: f64) -> [Vec3; 4] {
        let mut out = [[0.0; MAX_DIM]; 4];
        out[0][..self.dim()].copy_from_slice(&self.mean);
        for mode in &self.modes {
            let w = TAU * mode.k as f64;
            let (s, c) = (w * theta).sin_cos();
            for i in 0..self.dim() {
                let (a, b) = (mode.cos[i], mode.sin[i]);
                let v = a * c + b * s;
                let dv = w * (b * c - a * s);
                out[0][i] += v;
                out[1][i] += dv;
                out[2][i] -= w * w * v;
                out[3][i] -= w * w * dv;
            }
        }
        out
    }

    pub fn value(&self, theta: f64) -> Vec3 {
        self.eval(theta)[0]
    }
}
