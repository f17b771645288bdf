//! Reference metrics with known closed geodesics.

use crate::geometry::TorusMetric;

/// Euclidean metric on the unit torus.
pub fn flat(dim: usize) -> TorusMetric {
    TorusMetric::euclidean(dim).with_id(format!("flat-{dim}"))
}

/// `dx² − dy²`.
pub fn flat_lorentz() -> TorusMetric {
    TorusMetric::constant("flat-lorentz", &[vec![1.0, 0.0], vec![0.0, -1.0]], 1)
}

/// `(1 + ε cos 2πy) dx² + dy²`. The lines `y = 0` and `y = 1/2` are closed
/// geodesics with transverse Jacobi equation `J'' = ∓2π²ε J`.
pub fn hill(eps: f64) -> TorusMetric {
    let mut g = TorusMetric::euclidean(2).with_id(format!("hill-{eps}"));
    g.add_term(0, 0, vec![0, 1], eps, 0.0);
    g
}

/// `(1 + ε(1 − cos 2π(x − y))) dx² − dy²`: agrees with the flat Lorentz
/// metric to first order along the diagonal, which stays a lightlike closed
/// geodesic but is no longer degenerate.
pub fn hill_lorentz(eps: f64) -> TorusMetric {
    let mut g = flat_lorentz().with_id(format!("hill-lorentz-{eps}"));
    g.add_term(0, 0, vec![0, 0], eps, 0.0);
    g.add_term(0, 0, vec![1, -1], -eps, 0.0);
    g
}

/// Rate `k` of the transverse Jacobi equation `J₂'' = −k J₂` along the
/// [`hill`] axis geodesic `θ ↦ (θ, y0)`, `y0 ∈ {0, 1/2}`: `k = 2π²ε cos 2πy0`.
pub fn hill_axis_rate(eps: f64, y0: f64) -> f64 {
    2.0 * std::f64::consts::PI.powi(2) * eps * (std::f64::consts::TAU * y0).cos()
}
