use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::monodromy::Monodromy;
use crate::error::{Error, Result};
use crate::geometry::connection::classify_causal;
use crate::geometry::{AuxRiemannianMetric, CausalLabel, TorusMetric};
use crate::linalg::{self, rows};

/// Monodromy restricted to the symplectic complement of
/// `span{(γ̇,0), (0,γ̇)}`, i.e. to `{(J, J') : g(γ̇,J) = g(γ̇,J') = 0}`.
///
/// Coordinates: `q_a = g(f_a, J)`, `p_a = g(e_a, J')`, where `e_a` is a
/// Euclidean-orthonormal basis of the `g`-orthogonal complement of `γ̇` and
/// `f_a` its `g`-dual basis inside the same complement. The symplectic form
/// is canonical in `(q, p)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoincareLinearization {
    #[serde(with = "rows")]
    pub matrix: DMatrix<f64>,
    pub basis: Vec<Vec<f64>>,
    pub dual_basis: Vec<Vec<f64>>,
    pub symplectic_defect: f64,
}

impl PoincareLinearization {
    pub fn eigenvalues(&self) -> Vec<num_complex::Complex64> {
        linalg::eigenvalues(&self.matrix)
    }

    /// Some eigenvalue lies within `eigen_tol` of 1. Eigenvalues are used
    /// rather than singular values of `P − I`, which depend on the scaling of
    /// the coordinates and degrade near the light cone.
    pub fn has_unit_eigenvalue(&self, eigen_tol: f64) -> bool {
        self.eigenvalues()
            .iter()
            .any(|l| (l - 1.0).norm() < eigen_tol)
    }
}

pub fn linearized_poincare(
    metric: &TorusMetric,
    g_r: &AuxRiemannianMetric,
    mono: &Monodromy,
    causal_tol: f64,
) -> Result<PoincareLinearization> {
    let n = mono.dim;
    let x0 = &mono.x0;
    let v = DVector::from_column_slice(&mono.v0);
    let c = metric.inner(x0, &mono.v0, &mono.v0);
    let reference = g_r.inner(x0, &mono.v0, &mono.v0);
    if classify_causal(c, reference, causal_tol) == CausalLabel::Lightlike {
        return Err(Error::LightlikeGeodesic);
    }
    let g = mono.metric_at_start(metric);
    // e_a: orthonormal complement of u = g v.
    let u = &g * &v;
    let mut frame = DMatrix::zeros(n, n);
    frame.set_column(0, &(u.clone() / u.norm()));
    for i in 1..n {
        frame[(i, i)] = 1.0;
    }
    let qr = frame.qr();
    let q = qr.q();
    let e = q.columns(1, n - 1).into_owned();
    let h = e.transpose() * &g * &e;
    let h_inv = h.try_inverse().ok_or(Error::LightlikeGeodesic)?;
    let f = &e * h_inv;

    let m = &mono.matrix;
    let k = n - 1;
    let mut p = DMatrix::zeros(2 * k, 2 * k);
    for col in 0..2 * k {
        let mut x = DVector::zeros(2 * n);
        if col < k {
            x.rows_mut(0, n).copy_from(&e.column(col));
        } else {
            x.rows_mut(n, n).copy_from(&f.column(col - k));
        }
        let y = m * x;
        let j = y.rows(0, n).into_owned();
        let jp = y.rows(n, n).into_owned();
        let gj = &g * j;
        let gjp = &g * jp;
        for a in 0..k {
            p[(a, col)] = f.column(a).dot(&gj);
            p[(k + a, col)] = e.column(a).dot(&gjp);
        }
    }
    let to_vecs = |m: &DMatrix<f64>| {
        (0..m.ncols())
            .map(|c| m.column(c).iter().copied().collect())
            .collect()
    };
    Ok(PoincareLinearization {
        symplectic_defect: linalg::symplectic_defect(&p),
        matrix: p,
        basis: to_vecs(&e),
        dual_basis: to_vecs(&f),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::monodromy::monodromy;
    use crate::loopspace::Loop;

    #[test]
    fn flat_quotient_is_a_shear() {
        let flat = TorusMetric::euclidean(2);
        let gr = AuxRiemannianMetric::euclidean(2);
        let l = Loop::line(64, &[0.0, 0.0], vec![1, 0]);
        let m = monodromy(&flat, &l, 1e-10).unwrap();
        let p = linearized_poincare(&flat, &gr, &m, 1e-9).unwrap();
        assert!((p.matrix[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((p.matrix[(0, 1)] - 1.0).abs() < 1e-12);
        assert!(p.matrix[(1, 0)].abs() < 1e-12);
        assert!((p.matrix[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lightlike_is_refused() {
        let g = TorusMetric::constant("l", &[vec![1.0, 0.0], vec![0.0, -1.0]], 1);
        let gr = AuxRiemannianMetric::euclidean(2);
        let l = Loop::line(64, &[0.0, 0.0], vec![1, 1]);
        let m = monodromy(&g, &l, 1e-10).unwrap();
        assert!(matches!(
            linearized_poincare(&g, &gr, &m, 1e-9),
            Err(Error::LightlikeGeodesic)
        ));
    }
}
