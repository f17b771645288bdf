//! Closed geodesics as zeros of the discrete action gradient.

mod continuation;
mod search;

pub use continuation::continue_geodesic;
pub use search::{
    dedup_by_orbit, job_seed, orbit_distance, same_image, search_closed_geodesics, ClassFailure,
    SearchReport, WindingRange, DEDUP_TOL,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::monodromy::{monodromy, Monodromy};
use crate::flow::poincare::linearized_poincare;
use crate::geometry::connection::{classify_causal, CAUSAL_TOL};
use crate::geometry::{AuxRiemannianMetric, CausalLabel, TorusMetric};
use crate::loopspace::{
    action_gradient, action_hessian, gradient_norm, min_energy, riem_energy, stabilizer_order,
    Loop, ENERGY_FLOOR,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub newton_tol: f64,
    pub max_iterations: usize,
    pub energy_floor: f64,
    pub eigen_tol: f64,
    pub causal_tol: f64,
    pub stab_tol: f64,
    /// Relative tolerance of the monodromy integration.
    pub rtol: f64,
    /// Auxiliary Riemannian metric; Euclidean when absent.
    pub g_r: Option<AuxRiemannianMetric>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            newton_tol: 1e-10,
            max_iterations: 40,
            energy_floor: ENERGY_FLOOR,
            eigen_tol: 1e-6,
            causal_tol: CAUSAL_TOL,
            stab_tol: 1e-8,
            rtol: 1e-11,
            g_r: None,
        }
    }
}

impl SolverOptions {
    pub fn reference(&self, dim: usize) -> AuxRiemannianMetric {
        self.g_r
            .clone()
            .unwrap_or_else(|| AuxRiemannianMetric::euclidean(dim))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Nondegenerate,
    Degenerate,
    Marginal,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicRecord {
    #[serde(rename = "loop")]
    pub geodesic: Loop,
    pub metric_id: String,
    pub winding: Vec<i64>,
    pub energy: f64,
    pub min_energy: f64,
    pub stab: usize,
    pub causal_label: CausalLabel,
    pub causal_value: f64,
    pub residual: f64,
    pub monodromy: Monodromy,
    pub degeneracy: Verdict,
    pub kernel_dim: usize,
    /// Singular values of `M − I`, ascending.
    pub fixed_singular_values: Vec<f64>,
    /// Whether the linearized Poincaré map has an eigenvalue 1; absent for
    /// lightlike geodesics.
    pub poincare_unit_eigenvalue: Option<bool>,
    pub newton_history: Vec<f64>,
}

impl GeodesicRecord {
    pub fn is_nondegenerate(&self) -> bool {
        self.degeneracy == Verdict::Nondegenerate
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certification {
    pub verdict: Verdict,
    pub kernel_dim: usize,
    pub singular_values: Vec<f64>,
    pub poincare_unit_eigenvalue: Option<bool>,
}

/// Nondegeneracy verdict from the singular values of `M − I`, cross-checked
/// against the linearized Poincaré map for non-lightlike geodesics.
pub fn certify_monodromy(
    metric: &TorusMetric,
    mono: &Monodromy,
    eigen_tol: f64,
    opts: &SolverOptions,
) -> Certification {
    let sv = mono.fixed_space_singular_values();
    let kernel_dim = sv.iter().filter(|s| **s < eigen_tol).count();
    let g_r = opts.reference(metric.dim);
    let poincare = linearized_poincare(metric, &g_r, mono, opts.causal_tol)
        .ok()
        .map(|p| p.has_unit_eigenvalue(eigen_tol));
    let second = sv.get(1).copied().unwrap_or(f64::INFINITY);
    let verdict = if kernel_dim >= 2 {
        Verdict::Degenerate
    } else if kernel_dim == 1 && second >= 10.0 * eigen_tol && poincare != Some(true) {
        Verdict::Nondegenerate
    } else {
        Verdict::Marginal
    };
    Certification {
        verdict,
        kernel_dim,
        singular_values: sv,
        poincare_unit_eigenvalue: poincare,
    }
}

pub fn certify(
    metric: &TorusMetric,
    record: &GeodesicRecord,
    eigen_tol: f64,
    opts: &SolverOptions,
) -> Verdict {
    certify_monodromy(metric, &record.monodromy, eigen_tol, opts).verdict
}

/// Builds and certifies a record for a loop already known to be a closed geodesic.
pub fn build_record(
    metric: &TorusMetric,
    l: Loop,
    newton_history: Vec<f64>,
    opts: &SolverOptions,
) -> Result<GeodesicRecord> {
    let residual = gradient_norm(&action_gradient(metric, &l));
    let g_r = opts.reference(metric.dim);
    let energy = riem_energy(&l, &g_r);
    if energy < opts.energy_floor {
        return Err(Error::CollapsedToConstant {
            energy,
            floor: opts.energy_floor,
        });
    }
    let stab = stabilizer_order(&l, opts.stab_tol)?;
    let vel = l.velocities();
    let n = l.n_samples() as f64;
    let dim = l.dim();
    let c = l
        .points()
        .iter()
        .zip(&vel)
        .map(|(p, v)| metric.inner(p, &v[..dim], &v[..dim]))
        .sum::<f64>()
        / n;
    let causal_label = classify_causal(c, 2.0 * energy, opts.causal_tol);
    let mono = monodromy(metric, &l, opts.rtol)?;
    let cert = certify_monodromy(metric, &mono, opts.eigen_tol, opts);
    Ok(GeodesicRecord {
        metric_id: metric.id.clone(),
        winding: l.winding().to_vec(),
        energy,
        min_energy: min_energy(energy, stab),
        stab,
        causal_label,
        causal_value: c,
        residual,
        monodromy: mono,
        degeneracy: cert.verdict,
        kernel_dim: cert.kernel_dim,
        fixed_singular_values: cert.singular_values,
        poincare_unit_eigenvalue: cert.poincare_unit_eigenvalue,
        newton_history,
        geodesic: l,
    })
}

/// Solves `[H t; tᵀ 0] [δ; λ] = [−∇f; 0]` with `t = ẏ/N`.
fn newton_direction(metric: &TorusMetric, l: &Loop, residual: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = l.n_samples();
    let dim = l.dim();
    let m = n * dim;
    let h = action_hessian(metric, l);
    let vel = l.velocities();
    let mut a = DMatrix::zeros(m + 1, m + 1);
    a.view_mut((0, 0), (m, m)).copy_from(&h);
    let mut rhs = DVector::zeros(m + 1);
    for k in 0..n {
        for i in 0..dim {
            let t = vel[k][i] / n as f64;
            a[(k * dim + i, m)] = t;
            a[(m, k * dim + i)] = t;
            rhs[k * dim + i] = -residual[k][i] / n as f64;
        }
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..=m).map(|i| u[(i, i)].abs()).collect();
    let big = diag.iter().cloned().fold(0.0, f64::max);
    let small = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let sol = if small > 1e-11 * big {
        lu.solve(&rhs)
    } else {
        // Kernel beyond the phase direction (degenerate target): least norm step.
        let svd = a.svd(true, true);
        let cut = 1e-9 * svd.singular_values.max();
        svd.solve(&rhs, cut).ok()
    }?;
    let out: Vec<f64> = sol.rows(0, m).iter().copied().collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Gauss–Newton step on `½‖r‖²` with Levenberg damping `mu`.
fn damped_direction(
    metric: &TorusMetric,
    l: &Loop,
    residual: &[Vec<f64>],
    mu: f64,
) -> Option<Vec<f64>> {
    let n = l.n_samples();
    let dim = l.dim();
    let jac = action_hessian(metric, l) * n as f64;
    let r = DVector::from_iterator(n * dim, residual.iter().flatten().copied());
    let jt = jac.transpose();
    let mut normal = &jt * &jac;
    let scale = normal.diagonal().max();
    for i in 0..n * dim {
        normal[(i, i)] += mu * scale;
    }
    let sol = normal.cholesky()?.solve(&(-(&jt * r)));
    Some(sol.iter().copied().collect())
}

fn apply_step(l: &Loop, step: &[f64], alpha: f64) -> Loop {
    let dim = l.dim();
    let v: Vec<Vec<f64>> = step.chunks(dim).map(|c| c.to_vec()).collect();
    l.displaced(&v, alpha)
}

/// Newton iteration on the action gradient with the phase condition
/// `⟨δ, ẏ⟩_{L²} = 0` re-anchored at every step.
pub fn find_closed_geodesic(
    metric: &TorusMetric,
    seed: &Loop,
    opts: &SolverOptions,
) -> Result<GeodesicRecord> {
    let (l, history) = newton_solve(metric, seed, opts)?;
    build_record(metric, l, history, opts)
}

/// The Newton loop alone; returns the converged loop and the residual history.
pub fn newton_solve(
    metric: &TorusMetric,
    seed: &Loop,
    opts: &SolverOptions,
) -> Result<(Loop, Vec<f64>)> {
    let g_r = opts.reference(metric.dim);
    let mut l = seed.clone();
    let mut r = action_gradient(metric, &l);
    let mut res = gradient_norm(&r);
    let mut history = vec![res];
    for _ in 0..opts.max_iterations {
        if res <= opts.newton_tol {
            return Ok((l, history));
        }
        let energy = riem_energy(&l, &g_r);
        if energy < opts.energy_floor {
            return Err(Error::CollapsedToConstant {
                energy,
                floor: opts.energy_floor,
            });
        }
        let mut accepted = None;
        if let Some(step) = newton_direction(metric, &l, &r) {
            let biggest = step.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let mut alpha = if biggest > 0.1 { 0.1 / biggest } else { 1.0 };
            for _ in 0..12 {
                let trial = apply_step(&l, &step, alpha);
                let tr = action_gradient(metric, &trial);
                let tres = gradient_norm(&tr);
                if tres < res {
                    accepted = Some((trial, tr, tres));
                    break;
                }
                alpha *= 0.5;
            }
        }
        if accepted.is_none() {
            let mut mu = 1e-8;
            for _ in 0..10 {
                if let Some(step) = damped_direction(metric, &l, &r, mu) {
                    let trial = apply_step(&l, &step, 1.0);
                    let tr = action_gradient(metric, &trial);
                    let tres = gradient_norm(&tr);
                    if tres < res {
                        accepted = Some((trial, tr, tres));
                        break;
                    }
                }
                mu *= 10.0;
            }
        }
        match accepted {
            Some((nl, nr, nres)) => {
                l = nl;
                r = nr;
                res = nres;
                history.push(res);
            }
            None => break,
        }
    }
    if res <= opts.newton_tol {
        return Ok((l, history));
    }
    let energy = riem_energy(&l, &g_r);
    if energy < opts.energy_floor {
        return Err(Error::CollapsedToConstant {
            energy,
            floor: opts.energy_floor,
        });
    }
    Err(Error::NoConvergence {
        iterations: history.len() - 1,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::f64::consts::TAU;

    #[test]
    fn flat_seed_converges_to_line() {
        let flat = fixtures::flat(2);
        let seed =
            Loop::from_fn(64, vec![1, 0], |t| vec![t, 0.2 + 0.01 * (TAU * t).sin()]).unwrap();
        let rec = find_closed_geodesic(&flat, &seed, &SolverOptions::default()).unwrap();
        assert!(rec.residual <= 1e-10);
        assert!((rec.energy - 0.5).abs() < 1e-9);
        assert_eq!(rec.degeneracy, Verdict::Degenerate);
        assert_eq!(rec.kernel_dim, 2);
    }

    #[test]
    fn hill_axis_is_found_and_nondegenerate() {
        let g = fixtures::hill(0.1);
        let seed = Loop::from_fn(64, vec![1, 0], |t| vec![t, 0.05 * (TAU * t).sin()]).unwrap();
        let rec = find_closed_geodesic(&g, &seed, &SolverOptions::default()).unwrap();
        assert!(rec.geodesic.points().iter().all(|p| p[1].abs() < 1e-9));
        assert_eq!(rec.degeneracy, Verdict::Nondegenerate);
        assert_eq!(rec.stab, 1);
    }
}
