use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::jet::{Mat3, MAX_DIM};
use super::metric::{to_dmatrix, AuxRiemannianMetric, TorusMetric, ValidationGrid};
use super::trig::TrigPoly;
use crate::error::{invalid, Error, Result};

/// Rank-`rank` distribution spanned by trigonometric frame fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub dim: usize,
    pub rank: usize,
    /// `frames[a][i]` is the i-th component of the a-th frame vector.
    pub frames: Vec<Vec<TrigPoly>>,
}

impl Distribution {
    pub fn new(dim: usize, frames: Vec<Vec<TrigPoly>>, grid: &ValidationGrid) -> Result<Self> {
        if frames.len() > dim || frames.iter().any(|f| f.len() != dim) {
            return Err(invalid(
                "frame fields must have `dim` components and rank ≤ dim",
            ));
        }
        let d = Distribution {
            dim,
            rank: frames.len(),
            frames,
        };
        for x in grid.points(dim) {
            if d.rank == 0 {
                break;
            }
            let f = d.frame_matrix(&x);
            let smallest = f.singular_values().min();
            if smallest < 1e-8 {
                return Err(Error::RankDeficient { point: x });
            }
        }
        Ok(d)
    }

    /// Constant distribution spanned by the given vectors.
    pub fn constant(vectors: &[Vec<f64>], grid: &ValidationGrid) -> Result<Self> {
        let dim = vectors.first().map_or(0, |v| v.len());
        let frames = vectors
            .iter()
            .map(|v| v.iter().map(|&c| TrigPoly::constant(dim, c)).collect())
            .collect();
        Distribution::new(dim, frames, grid)
    }

    fn is_constant(&self) -> bool {
        self.frames.iter().flatten().all(|p| p.is_constant())
    }

    /// `dim × rank` matrix of frame vectors at `x`.
    pub fn frame_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.rank, |i, a| self.frames[a][i].eval(x))
    }
}

/// `g = g_R − 2·g_R F (Fᵀ g_R F)⁻¹ Fᵀ g_R`: equals `−g_R` on Δ and `g_R` on its
/// `g_R`-orthogonal complement.
fn reflected(g_r: &Mat3, f: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let r = to_dmatrix(g_r, dim);
    if f.ncols() == 0 {
        return r;
    }
    let rf = &r * f;
    let gram = f.transpose() * &rf;
    let gram_inv = gram.try_inverse().expect("frames checked independent");
    let g = &r - (&rf * gram_inv * rf.transpose()) * 2.0;
    (&g + g.transpose()) * 0.5
}

/// Index-`rank` metric built from an auxiliary Riemannian metric and a distribution.
///
/// Constant inputs give an exact constant metric; otherwise the pointwise
/// formula is sampled on a 32-point-per-axis grid and re-expanded in
/// trigonometric polynomials.
pub fn build_index_metric(
    g_r: &AuxRiemannianMetric,
    delta: &Distribution,
    grid: &ValidationGrid,
) -> Result<TorusMetric> {
    let dim = g_r.dim();
    if delta.dim != dim {
        return Err(invalid("distribution and metric dimensions differ"));
    }
    let id = format!("index-{}-from-distribution", delta.rank);
    let metric = if g_r.metric.is_constant() && delta.is_constant() {
        let x = vec![0.0; dim];
        let g = reflected(&g_r.eval(&x), &delta.frame_matrix(&x), dim);
        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| g[(i, j)]).collect())
            .collect();
        TorusMetric::constant(id, &rows, delta.rank)
    } else {
        fit_on_grid(id, dim, delta.rank, 32, |x| {
            reflected(&g_r.eval(x), &delta.frame_matrix(x), dim)
        })
    };
    metric.validated(grid)
}

fn fit_on_grid(
    id: String,
    dim: usize,
    index: usize,
    n: usize,
    f: impl Fn(&[f64]) -> DMatrix<f64>,
) -> TorusMetric {
    let total = n.pow(dim as u32);
    let points: Vec<Vec<f64>> = ValidationGrid {
        points_per_axis: n,
        ..Default::default()
    }
    .points(dim)
    .collect();
    let values: Vec<DMatrix<f64>> = points.iter().map(|x| f(x)).collect();
    let mut metric = TorusMetric::zero(id, dim, index);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    for i in 0..dim {
        for j in i..dim {
            let mut data: Vec<Complex64> = values
                .iter()
                .map(|m| Complex64::new(m[(i, j)], 0.0))
                .collect();
            // Axis 0 varies fastest.
            for axis in 0..dim {
                let stride = n.pow(axis as u32);
                let mut line = vec![Complex64::new(0.0, 0.0); n];
                for start in 0..total {
                    if !(start / stride).is_multiple_of(n) {
                        continue;
                    }
                    for (t, l) in line.iter_mut().enumerate() {
                        *l = data[start + t * stride];
                    }
                    fft.process(&mut line);
                    for (t, l) in line.iter().enumerate() {
                        data[start + t * stride] = *l;
                    }
                }
            }
            let scale = values
                .iter()
                .map(|m| m[(i, j)].abs())
                .fold(1.0_f64, f64::max);
            for (idx, c) in data.iter().enumerate() {
                let mut freq = [0i32; MAX_DIM];
                let mut rem = idx;
                let mut nyquist = false;
                for f in freq.iter_mut().take(dim) {
                    let m = rem % n;
                    rem /= n;
                    nyquist |= m == n / 2;
                    *f = crate::fft::wavenumber(m, n) as i32;
                }
                let first = freq[..dim].iter().find(|k| **k != 0);
                if nyquist || first.is_some_and(|k| *k < 0) {
                    continue;
                }
                let c = *c / total as f64;
                let (cos, sin) = if first.is_none() {
                    (c.re, 0.0)
                } else {
                    (2.0 * c.re, -2.0 * c.im)
                };
                if cos.abs().max(sin.abs()) > 1e-13 * scale {
                    metric.add_term(i, j, freq[..dim].to_vec(), cos, sin);
                }
            }
        }
    }
    metric
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::metric::metric_index;

    fn grid() -> ValidationGrid {
        ValidationGrid {
            points_per_axis: 16,
            ..Default::default()
        }
    }

    #[test]
    fn coordinate_distribution_gives_lorentz() {
        let gr = AuxRiemannianMetric::euclidean(2);
        let d = Distribution::constant(&[vec![0.0, 1.0]], &grid()).unwrap();
        let g = build_index_metric(&gr, &d, &grid()).unwrap();
        assert_eq!(g.eval(&[0.3, 0.4])[0][..2], [1.0, 0.0]);
        assert_eq!(g.eval(&[0.3, 0.4])[1][..2], [0.0, -1.0]);
        assert_eq!(g.declared_index, 1);
    }

    #[test]
    fn diagonal_distribution_reflects() {
        let gr = AuxRiemannianMetric::euclidean(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = Distribution::constant(&[vec![s, s]], &grid()).unwrap();
        let g = build_index_metric(&gr, &d, &grid()).unwrap();
        let m = g.eval(&[0.0, 0.0]);
        // g(v, v) = −1 for v = (1,1)/√2 and +1 on its complement.
        let gv = (m[0][0] + 2.0 * m[0][1] + m[1][1]) / 2.0;
        let gw = (m[0][0] - 2.0 * m[0][1] + m[1][1]) / 2.0;
        assert!((gv + 1.0).abs() < 1e-14 && (gw - 1.0).abs() < 1e-14);
        assert!((m[0][0] - m[1][1]).abs() < 1e-15);
    }

    #[test]
    fn full_rank_gives_negative_reference() {
        let gr = AuxRiemannianMetric::euclidean(2);
        let d = Distribution::constant(&[vec![1.0, 0.0], vec![1.0, 1.0]], &grid()).unwrap();
        let g = build_index_metric(&gr, &d, &grid()).unwrap();
        let m = g.eval(&[0.5, 0.5]);
        assert!((m[0][0] + 1.0).abs() < 1e-14 && (m[1][1] + 1.0).abs() < 1e-14);
        assert!(m[0][1].abs() < 1e-14);
    }

    #[test]
    fn varying_distribution_has_declared_index() {
        let gr = AuxRiemannianMetric::euclidean(2);
        let mut fx = TrigPoly::constant(2, 1.0);
        fx.add_term(vec![0, 1], 0.3, 0.0);
        let mut fy = TrigPoly::zero();
        fy.add_term(vec![1, 0], 0.0, 0.4);
        let d = Distribution::new(2, vec![vec![fx, fy]], &grid()).unwrap();
        let g = build_index_metric(&gr, &d, &grid()).unwrap();
        for x in grid().points(2) {
            assert_eq!(metric_index(&g, &gr, &x).unwrap(), 1);
        }
        // Δ stays g-orthogonal to its Euclidean complement up to the fit error.
        let x = [0.37, 0.81];
        let f = d.frame_matrix(&x);
        let v = [f[(0, 0)], f[(1, 0)]];
        let w = [-v[1], v[0]];
        assert!(g.inner(&x, &v, &w).abs() < 1e-6);
    }

    #[test]
    fn dependent_frames_rejected() {
        assert!(matches!(
            Distribution::constant(&[vec![1.0, 1.0], vec![2.0, 2.0]], &grid()),
            Err(Error::RankDeficient { .. })
        ));
    }
}
