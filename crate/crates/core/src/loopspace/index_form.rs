use nalgebra::DMatrix;
use std::f64::consts::{SQRT_2, TAU};

use super::{geodesic_residual, Loop};
use crate::error::{invalid, Error, Result};
use crate::geometry::connection::christoffel_with_derivative;
use crate::geometry::TorusMetric;

/// Residual above which a loop is not accepted as a closed geodesic by the
/// linearization routines.
pub const GEODESIC_TOL: f64 = 1e-6;
pub const KERNEL_TOL_FACTOR: f64 = 1e-5;

/// Galerkin matrix of the index form
/// `I(V,W) = ∫ g(V',W') + g(R(γ̇,V)γ̇, W) dθ` on vector Fourier modes.
///
/// Basis function `c·(2K+1) + m` is the unit vector `e_c` times `1`,
/// `√2 cos(2πkθ)` (`m = 2k − 1`) or `√2 sin(2πkθ)` (`m = 2k`).
#[derive(Clone, Debug)]
pub struct IndexFormMatrix {
    pub modes: usize,
    pub dim: usize,
    pub matrix: DMatrix<f64>,
    /// `∫ g(V̇, Ẇ)`: the leading part.
    pub derivative_part: DMatrix<f64>,
    pub kernel_tol: f64,
    /// Ascending.
    pub singular_values: Vec<f64>,
}

impl IndexFormMatrix {
    pub fn kernel_dim(&self) -> usize {
        self.singular_values
            .iter()
            .filter(|s| **s < self.kernel_tol)
            .count()
    }

    /// Everything except the leading part; bounded independently of `K`.
    pub fn zero_order_part(&self) -> DMatrix<f64> {
        &self.matrix - &self.derivative_part
    }

    pub fn basis_description(&self) -> String {
        format!(
            "vector Fourier modes up to frequency {} per component: 1, sqrt2 cos(2 pi k t), sqrt2 sin(2 pi k t)",
            self.modes
        )
    }

    /// Frequency of basis function `b`.
    pub fn frequency(&self, b: usize) -> usize {
        (b % (2 * self.modes + 1)).div_ceil(2)
    }
}

fn basis_value(mode: usize, theta: f64) -> (f64, f64) {
    if mode == 0 {
        return (1.0, 0.0);
    }
    let k = mode.div_ceil(2) as f64;
    let (s, c) = (TAU * k * theta).sin_cos();
    if mode % 2 == 1 {
        (SQRT_2 * c, -SQRT_2 * TAU * k * s)
    } else {
        (SQRT_2 * s, SQRT_2 * TAU * k * c)
    }
}

pub fn index_form(metric: &TorusMetric, l: &Loop, modes: usize) -> Result<IndexFormMatrix> {
    if modes < 8 {
        return Err(invalid("index form needs at least 8 modes"));
    }
    let n = l.n_samples();
    if n <= 2 * modes {
        return Err(invalid("loop has too few samples for the requested modes"));
    }
    let residual = geodesic_residual(metric, l);
    if residual > GEODESIC_TOL {
        return Err(Error::NotAGeodesic {
            residual,
            tol: GEODESIC_TOL,
        });
    }
    let dim = l.dim();
    let per = 2 * modes + 1;
    let nb = per * dim;
    let vel = l.velocities();
    let mut full = DMatrix::zeros(nb, nb);
    let mut lead = DMatrix::zeros(nb, nb);
    let mut vals = vec![0.0; per];
    let mut ders = vec![0.0; per];
    for k in 0..n {
        let theta = l.theta(k);
        let chr = christoffel_with_derivative(metric, &l.points()[k])?;
        let curv = chr.curvature();
        let v = &vel[k];
        let g = chr.g;
        // a[p][j] = Γ^p_ij v^i ; rm[p][j] = R^p_ijk v^i v^k.
        let mut a = [[0.0; 3]; 3];
        let mut rm = [[0.0; 3]; 3];
        for p in 0..dim {
            for j in 0..dim {
                for i in 0..dim {
                    a[p][j] += chr.gamma[p][i][j] * v[i];
                    for q in 0..dim {
                        rm[p][j] += curv.r[p][i][j][q] * v[i] * v[q];
                    }
                }
            }
        }
        for m in 0..per {
            let (f, df) = basis_value(m, theta);
            vals[m] = f;
            ders[m] = df;
        }
        // For basis function (c, m): V = vals[m] e_c, V' = ders[m] e_c + vals[m] a[:,c].
        let cov = |c: usize, m: usize| {
            let mut out = [0.0; 3];
            for p in 0..dim {
                out[p] = vals[m] * a[p][c];
            }
            out[c] += ders[m];
            out
        };
        // gr[c][d] = g(R(v, e_c)v, e_d)
        let mut gr = [[0.0; 3]; 3];
        for c in 0..dim {
            for d in 0..dim {
                gr[c][d] = (0..dim).map(|p| rm[p][c] * g[p][d]).sum();
            }
        }
        let covs: Vec<[f64; 3]> = (0..nb).map(|b| cov(b / per, b % per)).collect();
        let gcovs: Vec<[f64; 3]> = covs
            .iter()
            .map(|u| {
                let mut o = [0.0; 3];
                for p in 0..dim {
                    o[p] = (0..dim).map(|q| g[p][q] * u[q]).sum();
                }
                o
            })
            .collect();
        for b1 in 0..nb {
            let (c1, m1) = (b1 / per, b1 % per);
            for b2 in b1..nb {
                let (c2, m2) = (b2 / per, b2 % per);
                let kinetic: f64 = (0..dim).map(|p| covs[b1][p] * gcovs[b2][p]).sum();
                let zero = vals[m1] * vals[m2] * gr[c1][c2];
                full[(b1, b2)] += kinetic + zero;
                lead[(b1, b2)] += ders[m1] * ders[m2] * g[c1][c2];
            }
        }
    }
    for b1 in 0..nb {
        for b2 in 0..b1 {
            full[(b1, b2)] = full[(b2, b1)];
            lead[(b1, b2)] = lead[(b2, b1)];
        }
    }
    full /= n as f64;
    lead /= n as f64;
    // The curvature term is symmetric only up to rounding.
    let full = (&full + full.transpose()) * 0.5;
    let mut sv: Vec<f64> = full.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let norm = sv.last().copied().unwrap_or(0.0);
    Ok(IndexFormMatrix {
        modes,
        dim,
        matrix: full,
        derivative_part: lead,
        kernel_tol: KERNEL_TOL_FACTOR * norm,
        singular_values: sv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_line_kernel_is_constants() {
        let flat = TorusMetric::euclidean(2);
        let l = Loop::line(64, &[0.0, 0.0], vec![1, 0]);
        let f = index_form(&flat, &l, 16).unwrap();
        assert_eq!(f.kernel_dim(), 2);
        assert_eq!(f.matrix, f.matrix.transpose());
    }

    #[test]
    fn rejects_non_geodesics_and_few_modes() {
        let flat = TorusMetric::euclidean(2);
        let l = Loop::line(64, &[0.0, 0.0], vec![1, 0]);
        assert!(index_form(&flat, &l, 4).is_err());
        let wavy = Loop::from_fn(64, vec![1, 0], |t| vec![t, 0.1 * (TAU * t).sin()]).unwrap();
        assert!(matches!(
            index_form(&flat, &wavy, 16),
            Err(Error::NotAGeodesic { .. })
        ));
    }
}
