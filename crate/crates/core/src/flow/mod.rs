//! Geodesic flow, Jacobi fields and their monodromy.

pub mod geodesic;
pub mod monodromy;
pub mod poincare;
pub mod rk;
