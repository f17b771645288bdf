//! Sampled closed curves in the universal cover and the discrete action.
//!
//! A loop is stored as samples `y_k = y(k/N)` together with its winding `w`;
//! `p(θ) = y(θ) − θw` is 1-periodic and differentiated spectrally with the
//! Nyquist bin removed, so the discrete derivative matrix is skew-symmetric
//! and the discrete gradient below is the exact derivative of the discrete
//! action.

mod index_form;

pub use index_form::{index_form, IndexFormMatrix, GEODESIC_TOL, KERNEL_TOL_FACTOR};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::geometry::jet::{to_vec3, Vec3, MAX_DIM};
use crate::geometry::metric::MetricJet;
use crate::geometry::series::PeriodicSeries;
use crate::geometry::{AuxRiemannianMetric, CenterCurve, TorusMetric};

pub const DEFAULT_SAMPLES: usize = 256;
pub const LOOP_CAPACITY: usize = 4096;
pub const ENERGY_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LoopFile", into = "LoopFile")]
pub struct Loop {
    winding: Vec<i64>,
    points: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LoopFile {
    n_samples: usize,
    winding: Vec<i64>,
    points: Vec<Vec<f64>>,
}

impl From<Loop> for LoopFile {
    fn from(l: Loop) -> Self {
        LoopFile {
            n_samples: l.points.len(),
            winding: l.winding,
            points: l.points,
        }
    }
}

impl TryFrom<LoopFile> for Loop {
    type Error = Error;
    fn try_from(f: LoopFile) -> Result<Self> {
        if f.n_samples != f.points.len() {
            return Err(invalid("n_samples does not match the point list"));
        }
        Loop::new(f.points, f.winding)
    }
}

impl Loop {
    /// Loop through the given samples; `n_samples` must be even and at least 8.
    pub fn new(points: Vec<Vec<f64>>, winding: Vec<i64>) -> Result<Self> {
        let n = points.len();
        if n < 8 || !n.is_multiple_of(2) {
            return Err(invalid("loops need an even number (≥ 8) of samples"));
        }
        let dim = winding.len();
        if !(1..=MAX_DIM).contains(&dim) || points.iter().any(|p| p.len() != dim) {
            return Err(invalid(
                "loop points and winding must share a dimension ≤ 3",
            ));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("loop has non-finite samples"));
        }
        Ok(Loop { winding, points })
    }

    /// Samples `f(θ_k)`; `f` must satisfy `f(θ + 1) = f(θ) + winding`.
    pub fn from_fn(n: usize, winding: Vec<i64>, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        Loop::new((0..n).map(|k| f(k as f64 / n as f64)).collect(), winding)
    }

    /// Straight loop `θ ↦ base + θ·winding`.
    pub fn line(n: usize, base: &[f64], winding: Vec<i64>) -> Self {
        let w = winding.clone();
        Loop::from_fn(n, winding, |t| {
            base.iter()
                .zip(&w)
                .map(|(b, w)| b + t * *w as f64)
                .collect()
        })
        .expect("valid line")
    }

    pub fn dim(&self) -> usize {
        self.winding.len()
    }

    pub fn n_samples(&self) -> usize {
        self.points.len()
    }

    pub fn winding(&self) -> &[i64] {
        &self.winding
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn theta(&self, k: usize) -> f64 {
        k as f64 / self.n_samples() as f64
    }

    /// Component `c` of the periodic part `y_k − θ_k w`.
    pub fn periodic_component(&self, c: usize) -> Vec<f64> {
        let w = self.winding[c] as f64;
        (0..self.n_samples())
            .map(|k| self.points[k][c] - self.theta(k) * w)
            .collect()
    }

    fn from_periodic(periodic: &[Vec<f64>], winding: &[i64]) -> Self {
        let n = periodic[0].len();
        let points = (0..n)
            .map(|k| {
                let t = k as f64 / n as f64;
                (0..winding.len())
                    .map(|c| periodic[c][k] + t * winding[c] as f64)
                    .collect()
            })
            .collect();
        Loop {
            winding: winding.to_vec(),
            points,
        }
    }

    /// `ẏ_k`.
    pub fn velocities(&self) -> Vec<Vec3> {
        self.derivatives(1)
    }

    /// `ÿ_k`.
    pub fn accelerations(&self) -> Vec<Vec3> {
        self.derivatives(2)
    }

    fn derivatives(&self, order: u32) -> Vec<Vec3> {
        let n = self.n_samples();
        let mut out = vec![[0.0; MAX_DIM]; n];
        for c in 0..self.dim() {
            let d = fft::derivative(&self.periodic_component(c), order);
            let w = if order == 1 {
                self.winding[c] as f64
            } else {
                0.0
            };
            for k in 0..n {
                out[k][c] = d[k] + w;
            }
        }
        out
    }

    /// Trigonometric interpolant of the periodic part, plus the winding.
    pub fn center_curve(&self) -> CenterCurve {
        let n = self.n_samples();
        let periodic: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                (0..self.dim())
                    .map(|c| self.points[k][c] - self.theta(k) * self.winding[c] as f64)
                    .collect()
            })
            .collect();
        let mut series = PeriodicSeries::from_samples(&periodic, 1e-14);
        // The Nyquist mode is not differentiated by the loop calculus either.
        series.modes.retain(|m| 2 * m.k as usize != n);
        CenterCurve::new(self.winding.clone(), series)
    }

    /// Largest distance between two samples in the universal cover.
    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for a in &self.points {
            for b in &self.points {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
                best = best.max(d);
            }
        }
        best.sqrt()
    }

    /// `θ ↦ y(θ + s)`.
    pub fn rotate(&self, s: f64) -> Loop {
        let periodic: Vec<Vec<f64>> = (0..self.dim())
            .map(|c| fft::shift(&self.periodic_component(c), s))
            .collect();
        let mut out = Loop::from_periodic(&periodic, &self.winding);
        for p in out.points.iter_mut() {
            for (c, v) in p.iter_mut().enumerate() {
                *v += s * self.winding[c] as f64;
            }
        }
        out
    }

    /// Adds a periodic displacement `v_k` to every sample.
    pub fn displaced(&self, v: &[Vec<f64>], scale: f64) -> Loop {
        let mut out = self.clone();
        for (p, d) in out.points.iter_mut().zip(v) {
            for (x, dx) in p.iter_mut().zip(d) {
                *x += scale * dx;
            }
        }
        out
    }

    /// Shifts by a lattice vector so that the first sample lies in `[0,1)^n`.
    pub fn normalized(&self) -> Loop {
        let mut out = self.clone();
        let shift: Vec<f64> = self.points[0].iter().map(|v| v.floor()).collect();
        for p in out.points.iter_mut() {
            for (x, s) in p.iter_mut().zip(&shift) {
                *x -= s;
            }
        }
        out
    }

    /// Resamples the trigonometric interpolant onto `n` points.
    pub fn resampled(&self, n: usize) -> Result<Loop> {
        let curve = self.center_curve();
        let dim = self.dim();
        Loop::from_fn(n, self.winding.clone(), |t| {
            curve.eval(t)[0][..dim].to_vec()
        })
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["theta".to_string()];
        h.extend((1..=self.dim()).map(|i| format!("y{i}")));
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let mut r = vec![self.theta(k)];
                r.extend(p);
                r
            })
            .collect()
    }
}

/// Discrete action `f(y) = (1/2N) Σ g(y_k)(ẏ_k, ẏ_k)`.
pub fn action(metric: &TorusMetric, l: &Loop) -> f64 {
    let v = l.velocities();
    let n = l.n_samples();
    let sum: f64 = (0..n)
        .map(|k| metric.inner(&l.points[k], &v[k][..l.dim()], &v[k][..l.dim()]))
        .sum();
    0.5 * sum / n as f64
}

/// `E = (1/2N) Σ g_R(ẏ_k, ẏ_k)`.
pub fn riem_energy(l: &Loop, g_r: &AuxRiemannianMetric) -> f64 {
    action(&g_r.metric, l)
}

/// Euler–Lagrange residual `r_k = −d/dθ(g ẏ)_k + ½ ∂g(y_k)(ẏ_k, ẏ_k)`, which
/// equals `−g(∇_θ ẏ)` at each sample. The directional derivative of
/// [`action`] along a periodic variation `V` is `(1/N) Σ ⟨r_k, V_k⟩`.
pub fn action_gradient(metric: &TorusMetric, l: &Loop) -> Vec<Vec<f64>> {
    let n = l.n_samples();
    let dim = l.dim();
    let v = l.velocities();
    let jets: Vec<MetricJet> = l.points.iter().map(|p| metric.jet(p, 1)).collect();
    let mut out = vec![vec![0.0; dim]; n];
    for i in 0..dim {
        let momentum: Vec<f64> = (0..n)
            .map(|k| (0..dim).map(|j| jets[k].g[i][j] * v[k][j]).sum())
            .collect();
        let dm = fft::derivative(&momentum, 1);
        for k in 0..n {
            let mut half = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    half += jets[k].dg[a][b][i] * v[k][a] * v[k][b];
                }
            }
            out[k][i] = -dm[k] + 0.5 * half;
        }
    }
    out
}

/// Discrete L² norm `sqrt((1/N) Σ |r_k|²)` of the gradient.
pub fn gradient_norm(residual: &[Vec<f64>]) -> f64 {
    let n = residual.len() as f64;
    (residual.iter().flatten().map(|v| v * v).sum::<f64>() / n).sqrt()
}

pub fn geodesic_residual(metric: &TorusMetric, l: &Loop) -> f64 {
    gradient_norm(&action_gradient(metric, l))
}

/// Dense spectral first-derivative matrix for `n` (even) samples of a
/// 1-periodic function, Nyquist mode removed.
pub fn derivative_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |k, j| {
        if k == j {
            0.0
        } else {
            let d = k as i64 - j as i64;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            sign * PI / (PI * d as f64 / n as f64).tan()
        }
    })
}

/// Exact Hessian of [`action`] with respect to periodic displacements,
/// ordered sample-major (`index = k·dim + i`).
pub fn action_hessian(metric: &TorusMetric, l: &Loop) -> DMatrix<f64> {
    let n = l.n_samples();
    let dim = l.dim();
    let m = n * dim;
    let v = l.velocities();
    let jets: Vec<MetricJet> = l.points.iter().map(|p| metric.jet(p, 2)).collect();
    let d1 = derivative_matrix(n);
    // Full derivative operator acting on sample-major vectors.
    let mut dfull = DMatrix::zeros(m, m);
    for k in 0..n {
        for j in 0..n {
            let val = d1[(k, j)];
            if val != 0.0 {
                for i in 0..dim {
                    dfull[(k * dim + i, j * dim + i)] = val;
                }
            }
        }
    }
    let mut gblock = DMatrix::zeros(m, m);
    let mut cblock = DMatrix::zeros(m, m);
    let mut yblock = DMatrix::zeros(m, m);
    for k in 0..n {
        let jet = &jets[k];
        for i in 0..dim {
            for l2 in 0..dim {
                gblock[(k * dim + i, k * dim + l2)] = jet.g[i][l2];
                cblock[(k * dim + i, k * dim + l2)] =
                    (0..dim).map(|j| jet.dg[i][j][l2] * v[k][j]).sum::<f64>();
                let mut y = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        y += jet.ddg[a][b][i][l2] * v[k][a] * v[k][b];
                    }
                }
                yblock[(k * dim + i, k * dim + l2)] = 0.5 * y;
            }
        }
    }
    let dt = dfull.transpose();
    let gd = &gblock * &dfull;
    let cross = &dt * &cblock;
    let mut h = &dt * gd + &cross + cross.transpose() + yblock;
    h /= n as f64;
    (&h + h.transpose()) * 0.5
}

/// Order of the stabilizer of the loop under rotations, testing divisors of
/// the winding up to `n_samples / 8`.
pub fn stabilizer_order(l: &Loop, tol: f64) -> Result<usize> {
    let diam = l.diameter();
    if diam < 1e-12 {
        return Err(Error::ConstantLoop);
    }
    let g = l
        .winding
        .iter()
        .fold(0u64, |acc, w| gcd(acc, w.unsigned_abs()));
    let cap = l.n_samples() / 8;
    let periodic: Vec<Vec<f64>> = (0..l.dim()).map(|c| l.periodic_component(c)).collect();
    let mut best = 1;
    for m in 2..=cap {
        if g != 0 && g % m as u64 != 0 {
            continue;
        }
        let mut sup: f64 = 0.0;
        let shifted: Vec<Vec<f64>> = periodic
            .iter()
            .map(|p| fft::shift(p, 1.0 / m as f64))
            .collect();
        for k in 0..l.n_samples() {
            let d: f64 = (0..l.dim())
                .map(|c| (shifted[c][k] - periodic[c][k]).powi(2))
                .sum();
            sup = sup.max(d.sqrt());
        }
        if sup <= tol * diam {
            best = m;
        }
    }
    Ok(best)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `y⁽ʳ⁾(θ) = y(rθ)`, sampled with `r·N` points so no information is lost.
pub fn iterate_loop(l: &Loop, r: usize) -> Result<Loop> {
    iterate_loop_with_capacity(l, r, LOOP_CAPACITY)
}

pub fn iterate_loop_with_capacity(l: &Loop, r: usize, capacity: usize) -> Result<Loop> {
    if r == 0 {
        return Err(invalid("iterate order must be at least 1"));
    }
    let n = l.n_samples();
    let requested = r * n;
    if requested > capacity {
        return Err(Error::CapacityExceeded {
            requested,
            capacity,
        });
    }
    let points = (0..requested)
        .map(|j| {
            let lap = (j / n) as f64;
            l.points[j % n]
                .iter()
                .zip(&l.winding)
                .map(|(y, w)| y + lap * *w as f64)
                .collect()
        })
        .collect();
    Ok(Loop {
        winding: l.winding.iter().map(|w| w * r as i64).collect(),
        points,
    })
}

/// `E_min = E / m`.
pub fn min_energy(energy: f64, stab: usize) -> f64 {
    energy / stab as f64
}

/// Initial velocity and position of the loop as 3-vectors.
pub fn initial_state(l: &Loop) -> (Vec3, Vec3) {
    (to_vec3(&l.points[0]), l.velocities()[0])
}
