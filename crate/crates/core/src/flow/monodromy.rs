use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::rk::{integrate, Options, Solution};
use crate::error::{Error, Result};
use crate::geometry::connection::christoffel_with_derivative;
use crate::geometry::jet::{Vec3, MAX_DIM};
use crate::geometry::TorusMetric;
use crate::linalg::{self, rows};
use crate::loopspace::{geodesic_residual, initial_state, Loop, GEODESIC_TOL};

pub const MONO_TOL: f64 = 1e-7;

/// Linear map `(J(0), J'(0)) ↦ (J(1), J'(1))` for Jacobi fields along a closed
/// geodesic, with `J'` the covariant derivative.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Monodromy {
    pub dim: usize,
    #[serde(with = "rows")]
    pub matrix: DMatrix<f64>,
    /// `‖PᵀΩP − Ω‖` in (position, g-momentum) coordinates.
    pub symplectic_defect: f64,
    /// `|M(γ̇(0),0) − (γ̇(0),0)|`.
    pub tangent_residual: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
}

impl Monodromy {
    pub fn metric_at_start(&self, metric: &TorusMetric) -> DMatrix<f64> {
        let g = metric.eval(&self.x0);
        DMatrix::from_fn(self.dim, self.dim, |i, j| g[i][j])
    }

    /// Singular values of `M − I`, ascending.
    pub fn fixed_space_singular_values(&self) -> Vec<f64> {
        let id = DMatrix::identity(2 * self.dim, 2 * self.dim);
        linalg::singular_values_ascending(&(&self.matrix - id))
    }

    /// Dimension of the eigenvalue-1 eigenspace, counted by singular values.
    pub fn fixed_dim(&self, eigen_tol: f64) -> usize {
        self.fixed_space_singular_values()
            .iter()
            .filter(|s| **s < eigen_tol)
            .count()
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn eigenvalues(&self) -> Vec<num_complex::Complex64> {
        linalg::eigenvalues(&self.matrix)
    }
}

/// Base geodesic plus the full Jacobi flow, with dense output in θ ∈ [0, 1].
///
/// State layout: `x, v`, then for each of the `2n` columns `J_c, J'_c`.
pub struct JacobiFlow {
    pub dim: usize,
    pub solution: Solution,
}

impl JacobiFlow {
    fn column(state: &[f64], n: usize, c: usize) -> (&[f64], &[f64]) {
        let base = 2 * n + 2 * n * c;
        (&state[base..base + n], &state[base + n..base + 2 * n])
    }

    pub fn matrix_at(&self, state: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let (j, v) = JacobiFlow::column(state, n, c);
            if r < n {
                j[r]
            } else {
                v[r - n]
            }
        })
    }

    /// Position, velocity, `J` and `J'` at `theta` for initial data `init = (J(0), J'(0))`.
    pub fn field_at(&self, theta: f64, init: &[f64]) -> (Vec3, Vec3, Vec3, Vec3) {
        let n = self.dim;
        let state = self.solution.eval(theta);
        let mut out = (
            [0.0; MAX_DIM],
            [0.0; MAX_DIM],
            [0.0; MAX_DIM],
            [0.0; MAX_DIM],
        );
        out.0[..n].copy_from_slice(&state[..n]);
        out.1[..n].copy_from_slice(&state[n..2 * n]);
        for (c, a) in init.iter().enumerate() {
            let (j, v) = JacobiFlow::column(&state, n, c);
            for i in 0..n {
                out.2[i] += a * j[i];
                out.3[i] += a * v[i];
            }
        }
        out
    }
}

fn jacobi_rhs(metric: &TorusMetric, n: usize, y: &[f64], dy: &mut [f64]) -> Result<()> {
    let x = &y[..n];
    let v = &y[n..2 * n];
    let chr = christoffel_with_derivative(metric, x)?;
    let curv = chr.curvature();
    let acc = chr.apply(v, v);
    dy[..n].copy_from_slice(v);
    for k in 0..n {
        dy[n + k] = -acc[k];
    }
    for c in 0..2 * n {
        let base = 2 * n + 2 * n * c;
        let j = &y[base..base + n];
        let jp = &y[base + n..base + 2 * n];
        let gj = chr.apply(v, j);
        let gjp = chr.apply(v, jp);
        let rj = curv.apply(v, j, v);
        for k in 0..n {
            dy[base + k] = jp[k] - gj[k];
            dy[base + n + k] = rj[k] - gjp[k];
        }
    }
    Ok(())
}

/// Integrates the geodesic from `(x0, v0)` together with the Jacobi flow over `[0, 1]`.
pub fn jacobi_flow(metric: &TorusMetric, x0: &[f64], v0: &[f64], rtol: f64) -> Result<JacobiFlow> {
    let n = metric.dim;
    let mut y0 = vec![0.0; 2 * n + 4 * n * n];
    y0[..n].copy_from_slice(&x0[..n]);
    y0[n..2 * n].copy_from_slice(&v0[..n]);
    for c in 0..2 * n {
        y0[2 * n + 2 * n * c + c] = 1.0;
    }
    let mut opts = Options::new(rtol).with_dense();
    opts.atol = rtol * 1e-1;
    let solution = integrate(
        |_t, y, dy| jacobi_rhs(metric, n, y, dy),
        0.0,
        1.0,
        &y0,
        &opts,
    )?;
    Ok(JacobiFlow { dim: n, solution })
}

pub fn monodromy_from_state(
    metric: &TorusMetric,
    x0: &[f64],
    v0: &[f64],
    rtol: f64,
) -> Result<Monodromy> {
    let n = metric.dim;
    let flow = jacobi_flow(metric, x0, v0, rtol)?;
    let matrix = flow.matrix_at(&flow.solution.y_end);
    // (J, J') ↦ (J, g J') at both ends; the ends coincide on a closed geodesic.
    let as_matrix = |x: &[f64]| {
        let g = metric.eval(x);
        DMatrix::from_fn(n, n, |i, j| g[i][j])
    };
    let g_start = as_matrix(x0);
    let g_end = as_matrix(&flow.solution.y_end[..n]);
    let gi = g_start.try_inverse().ok_or(Error::DegenerateMetric {
        point: x0.to_vec(),
        magnitude: 0.0,
    })?;
    let mut scale = DMatrix::identity(2 * n, 2 * n);
    let mut unscale = DMatrix::identity(2 * n, 2 * n);
    scale.view_mut((n, n), (n, n)).copy_from(&g_end);
    unscale.view_mut((n, n), (n, n)).copy_from(&gi);
    let p = &scale * &matrix * &unscale;
    let mut t = nalgebra::DVector::zeros(2 * n);
    for i in 0..n {
        t[i] = v0[i];
    }
    let tangent_residual = (&matrix * &t - &t).norm();
    Ok(Monodromy {
        dim: n,
        symplectic_defect: linalg::symplectic_defect(&p),
        tangent_residual,
        matrix,
        x0: x0[..n].to_vec(),
        v0: v0[..n].to_vec(),
    })
}

/// Monodromy of a closed geodesic loop, started at its first sample.
pub fn monodromy(metric: &TorusMetric, l: &Loop, rtol: f64) -> Result<Monodromy> {
    let residual = geodesic_residual(metric, l);
    if residual > GEODESIC_TOL {
        return Err(Error::NotAGeodesic {
            residual,
            tol: GEODESIC_TOL,
        });
    }
    let (x0, v0) = initial_state(l);
    let n = metric.dim;
    monodromy_from_state(metric, &x0[..n], &v0[..n], rtol)
}

/// Monodromy from the coordinate variational equations of `(x, ẋ)`,
/// converted to `(J, J')` by `J' = δẋ + Γ(ẋ, J)`. Independent of the
/// curvature-based route above.
pub fn variational_monodromy(
    metric: &TorusMetric,
    x0: &[f64],
    v0: &[f64],
    rtol: f64,
) -> Result<DMatrix<f64>> {
    let n = metric.dim;
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let x = &y[..n];
        let v = &y[n..2 * n];
        let chr = christoffel_with_derivative(metric, x)?;
        let acc = chr.apply(v, v);
        dy[..n].copy_from_slice(v);
        for k in 0..n {
            dy[n + k] = -acc[k];
        }
        for c in 0..2 * n {
            let base = 2 * n + 2 * n * c;
            let dx = &y[base..base + n];
            let dv = &y[base + n..base + 2 * n];
            for k in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let dgam: f64 = (0..n).map(|a| chr.dgamma[k][i][j][a] * dx[a]).sum();
                        s += dgam * v[i] * v[j] + 2.0 * chr.gamma[k][i][j] * v[i] * dv[j];
                    }
                }
                dy[base + k] = dv[k];
                dy[base + n + k] = -s;
            }
        }
        Ok(())
    };
    let mut y0 = vec![0.0; 2 * n + 4 * n * n];
    y0[..n].copy_from_slice(&x0[..n]);
    y0[n..2 * n].copy_from_slice(&v0[..n]);
    for c in 0..2 * n {
        y0[2 * n + 2 * n * c + c] = 1.0;
    }
    let mut opts = Options::new(rtol);
    opts.atol = rtol * 1e-1;
    let sol = integrate(rhs, 0.0, 1.0, &y0, &opts)?;
    let phi = DMatrix::from_fn(2 * n, 2 * n, |r, c| sol.y_end[2 * n + 2 * n * c + r]);
    // (J, J') = C (δx, δẋ) with C = [[I, 0], [Γ(v, ·), I]].
    let conv = |x: &[f64], v: &[f64]| -> Result<DMatrix<f64>> {
        let chr = christoffel_with_derivative(metric, x)?;
        let mut c = DMatrix::identity(2 * n, 2 * n);
        for k in 0..n {
            for j in 0..n {
                c[(n + k, j)] = (0..n).map(|i| chr.gamma[k][i][j] * v[i]).sum();
            }
        }
        Ok(c)
    };
    let c0 = conv(&x0[..n], &v0[..n])?;
    let c1 = conv(&sol.y_end[..n], &sol.y_end[n..2 * n])?;
    let c0_inv = c0.try_inverse().expect("unipotent");
    Ok(c1 * phi * c0_inv)
}
