//! Levi-Civita connection and curvature from exact metric jets.

use serde::{Deserialize, Serialize};

use super::jet::{inverse, Mat3, Vec3, MAX_DIM};
use super::metric::{AuxRiemannianMetric, MetricJet, TorusMetric, DET_FLOOR};
use crate::error::{Error, Result};

pub type Rank3 = [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM];
pub type Rank4 = [[[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM]; MAX_DIM];

/// Christoffel symbols `gamma[k][i][j] = Γ^k_ij` and, when requested,
/// `dgamma[k][i][j][a] = ∂_a Γ^k_ij`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Christoffel {
    pub dim: usize,
    pub g: Mat3,
    pub ginv: Mat3,
    pub gamma: Rank3,
    pub dgamma: Rank4,
}

impl Christoffel {
    /// `Γ(u, v)^k = Γ^k_ij u^i v^j`.
    pub fn apply(&self, u: &[f64], v: &[f64]) -> Vec3 {
        let mut out = [0.0; MAX_DIM];
        for k in 0..self.dim {
            let mut s = 0.0;
            for i in 0..self.dim {
                for j in 0..self.dim {
                    s += self.gamma[k][i][j] * u[i] * v[j];
                }
            }
            out[k] = s;
        }
        out
    }

    pub fn curvature(&self) -> Curvature {
        let n = self.dim;
        let mut r = [[[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut s = self.dgamma[l][j][k][i] - self.dgamma[l][i][k][j];
                        for m in 0..n {
                            s += self.gamma[l][i][m] * self.gamma[m][j][k]
                                - self.gamma[l][j][m] * self.gamma[m][i][k];
                        }
                        r[l][i][j][k] = s;
                    }
                }
            }
        }
        Curvature { dim: n, r }
    }
}

/// `r[l][i][j][k] = R^l_ijk`, with `R(X,Y)Z = X^i Y^j Z^k R^l_ijk ∂_l` and
/// `R(X,Y) = [∇_X, ∇_Y] − ∇_[X,Y]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Curvature {
    pub dim: usize,
    pub r: Rank4,
}

impl Curvature {
    pub fn apply(&self, x: &[f64], y: &[f64], z: &[f64]) -> Vec3 {
        let n = self.dim;
        let mut out = [0.0; MAX_DIM];
        for l in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        s += self.r[l][i][j][k] * x[i] * y[j] * z[k];
                    }
                }
            }
            out[l] = s;
        }
        out
    }
}

fn check_nondegenerate(jet: &MetricJet, x: &[f64]) -> Result<(Mat3, f64)> {
    let (ginv, det) = inverse(&jet.g, jet.dim);
    if !(det.abs() >= DET_FLOOR) {
        return Err(Error::DegenerateMetric {
            point: x.to_vec(),
            magnitude: det.abs(),
        });
    }
    Ok((ginv, det))
}

/// Christoffel symbols from a metric jet; derivatives need a second-order jet.
pub fn christoffel_from_jet(
    jet: &MetricJet,
    x: &[f64],
    with_derivative: bool,
) -> Result<Christoffel> {
    let n = jet.dim;
    let (ginv, _) = check_nondegenerate(jet, x)?;
    // First kind: first[l][i][j] = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij).
    let mut first = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                first[l][i][j] = 0.5 * (jet.dg[j][l][i] + jet.dg[i][l][j] - jet.dg[i][j][l]);
            }
        }
    }
    let mut out = Christoffel {
        dim: n,
        g: jet.g,
        ginv,
        ..Default::default()
    };
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                out.gamma[k][i][j] = (0..n).map(|l| ginv[k][l] * first[l][i][j]).sum();
            }
        }
    }
    if !with_derivative {
        return Ok(out);
    }
    for a in 0..n {
        // ∂_a g^{kl} = −g^{km} ∂_a g_mp g^{pl}
        let mut dginv = [[0.0; MAX_DIM]; MAX_DIM];
        for k in 0..n {
            for l in 0..n {
                let mut s = 0.0;
                for m in 0..n {
                    for p in 0..n {
                        s -= ginv[k][m] * jet.dg[m][p][a] * ginv[p][l];
                    }
                }
                dginv[k][l] = s;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        let dfirst =
                            0.5 * (jet.ddg[j][l][i][a] + jet.ddg[i][l][j][a] - jet.ddg[i][j][l][a]);
                        s += dginv[k][l] * first[l][i][j] + ginv[k][l] * dfirst;
                    }
                    out.dgamma[k][i][j][a] = s;
                }
            }
        }
    }
    Ok(out)
}

pub fn christoffel(metric: &TorusMetric, x: &[f64]) -> Result<Christoffel> {
    christoffel_from_jet(&metric.jet(x, 1), x, false)
}

/// Christoffel symbols together with their first derivatives.
pub fn christoffel_with_derivative(metric: &TorusMetric, x: &[f64]) -> Result<Christoffel> {
    christoffel_from_jet(&metric.jet(x, 2), x, true)
}

pub fn curvature(metric: &TorusMetric, x: &[f64]) -> Result<Curvature> {
    Ok(christoffel_with_derivative(metric, x)?.curvature())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CausalLabel {
    Spacelike,
    Timelike,
    Lightlike,
}

pub const CAUSAL_TOL: f64 = 1e-9;

/// Causal character of `v` at `x`, with `c = g(v,v)` and a lightlike band
/// `|c| ≤ causal_tol·g_R(v,v)`.
pub fn causal_character(
    metric: &TorusMetric,
    g_r: &AuxRiemannianMetric,
    x: &[f64],
    v: &[f64],
    causal_tol: f64,
) -> Result<(CausalLabel, f64)> {
    let norm = g_r.inner(x, v, v);
    if !(norm > 0.0) {
        return Err(Error::ZeroVelocity);
    }
    let c = metric.inner(x, v, v);
    Ok((classify_causal(c, norm, causal_tol), c))
}

pub fn classify_causal(c: f64, reference: f64, causal_tol: f64) -> CausalLabel {
    if c.abs() <= causal_tol * reference {
        CausalLabel::Lightlike
    } else if c > 0.0 {
        CausalLabel::Spacelike
    } else {
        CausalLabel::Timelike
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn hill(eps: f64) -> TorusMetric {
        let mut g = TorusMetric::euclidean(2);
        g.add_term(0, 0, vec![0, 1], eps, 0.0);
        g
    }

    fn wavy3() -> TorusMetric {
        let mut g = TorusMetric::euclidean(3);
        g.add_term(0, 0, vec![0, 1, 0], 0.1, 0.05);
        g.add_term(0, 1, vec![1, 0, 1], 0.07, 0.0);
        g.add_term(1, 2, vec![0, 1, -1], 0.0, 0.06);
        g.add_term(2, 2, vec![1, 1, 0], 0.1, 0.0);
        g.add_term(1, 1, vec![0, 0, 0], -2.0, 0.0);
        g.declared_index = 1;
        g
    }

    #[test]
    fn hill_christoffel_examples() {
        let eps = 0.1;
        let g = hill(eps);
        let c = christoffel(&g, &[0.3, 0.0]).unwrap();
        assert!(c.gamma[0][0][1].abs() < 1e-15);
        let c = christoffel(&g, &[0.3, 0.25]).unwrap();
        assert!((c.gamma[1][0][0] - PI * eps).abs() < 1e-12);
        let flat = TorusMetric::euclidean(2);
        let c = christoffel_with_derivative(&flat, &[0.1, 0.2]).unwrap();
        assert!(c.gamma.iter().flatten().flatten().all(|v| *v == 0.0));
        assert!(c
            .curvature()
            .r
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn curvature_matches_finite_differences_of_christoffel() {
        let g = wavy3();
        let x = [0.21, 0.67, 0.4];
        let exact = curvature(&g, &x).unwrap();
        let h = 1e-5;
        // R^l_ijk from centrally differenced Γ.
        let gam = |x: &[f64]| christoffel(&g, x).unwrap().gamma;
        let g0 = gam(&x);
        let mut dg = [[[[0.0; 3]; 3]; 3]; 3];
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let (gp, gm) = (gam(&xp), gam(&xm));
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        dg[k][i][j][a] = (gp[k][i][j] - gm[k][i][j]) / (2.0 * h);
                    }
                }
            }
        }
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        let mut s = dg[l][j][k][i] - dg[l][i][k][j];
                        for m in 0..3 {
                            s += g0[l][i][m] * g0[m][j][k] - g0[l][j][m] * g0[m][i][k];
                        }
                        assert!((s - exact.r[l][i][j][k]).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn causal_examples() {
        let g = TorusMetric::constant("l", &[vec![1.0, 0.0], vec![0.0, -1.0]], 1);
        let gr = AuxRiemannianMetric::euclidean(2);
        let x = [0.0, 0.0];
        assert_eq!(
            causal_character(&g, &gr, &x, &[1.0, 0.0], CAUSAL_TOL).unwrap(),
            (CausalLabel::Spacelike, 1.0)
        );
        assert_eq!(
            causal_character(&g, &gr, &x, &[1.0, 1.0], CAUSAL_TOL).unwrap(),
            (CausalLabel::Lightlike, 0.0)
        );
        assert_eq!(
            causal_character(&g, &gr, &x, &[0.0, 1.0], CAUSAL_TOL).unwrap(),
            (CausalLabel::Timelike, -1.0)
        );
        assert!(matches!(
            causal_character(&g, &gr, &x, &[0.0, 0.0], CAUSAL_TOL),
            Err(Error::ZeroVelocity)
        ));
    }
}
