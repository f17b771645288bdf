//! Metric perturbations with controlled effect on a given closed geodesic.

mod causal;
mod random;

pub use causal::{causal_perturbation, CausalOutcome, Sign};
pub use random::{
    break_degeneracy, random_tube_perturbation, sample_random_perturbation, BreakOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::flow::monodromy::jacobi_flow;
use crate::geometry::christoffel;
use crate::geometry::jet::MAX_DIM;
use crate::geometry::tube::window_bump;
use crate::geometry::{
    CenterCurve, DirectionField, OffsetWeight, PeriodicSeries, ThetaProfile, TorusMetric, TubeTerm,
};
use crate::linalg::singular_values_ascending;
use crate::loopspace::{initial_state, Loop};
use crate::solver::GeodesicRecord;

/// Residual above which a Jacobi field is not treated as periodic.
pub const JACOBI_PERIODIC_TOL: f64 = 1e-6;
/// Smallest normalized sine between `γ̇` and `J` accepted on a bump interval.
pub const TRANSVERSAL_TOL: f64 = 1e-6;
const MAX_TUBE_RADIUS: f64 = 0.1;
const MIN_TUBE_RADIUS: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    Global,
    Tube {
        radius: f64,
        /// Parameter interval carrying the profile, when localized in θ.
        interval: Option<[f64; 2]>,
    },
}

/// Symmetric (0,2)-tensor `h`, stored in metric form (tube terms and/or
/// trigonometric coefficients) so it can be added to a metric exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTensor {
    pub field: TorusMetric,
    pub support: Support,
    pub amplitude: f64,
    pub c2_norm: f64,
}

impl PerturbationTensor {
    pub fn zero(dim: usize) -> Self {
        PerturbationTensor {
            field: TorusMetric::zero("h", dim, 0),
            support: Support::Global,
            amplitude: 0.0,
            c2_norm: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.field.dim
    }

    pub fn eval(&self, x: &[f64]) -> [[f64; MAX_DIM]; MAX_DIM] {
        self.field.eval(x)
    }

    /// `g + h`, keeping the id and declared index of `g`.
    pub fn apply(&self, metric: &TorusMetric) -> TorusMetric {
        metric.combine(1.0, &self.field, 1.0)
    }
}

fn c2_estimate(field: &TorusMetric, l: &Loop, radius: f64) -> f64 {
    let dim = field.dim;
    let mut best: f64 = 0.0;
    let offsets = [-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75];
    for p in l.points() {
        for axis in 0..dim {
            for o in offsets {
                let mut x = p.clone();
                x[axis] += o * radius;
                let j = field.jet(&x, 2);
                for i in 0..dim {
                    for k in 0..dim {
                        best = best.max(j.g[i][k].abs());
                        for a in 0..dim {
                            best = best.max(j.dg[i][k][a].abs());
                            for b in 0..dim {
                                best = best.max(j.ddg[i][k][a][b].abs());
                            }
                        }
                    }
                }
            }
        }
    }
    best
}

/// Largest radius in `MAX_TUBE_RADIUS · 2^-k` for which the tube around the
/// curve is embedded.
pub fn admissible_radius(center: &CenterCurve) -> Result<f64> {
    let mut r = MAX_TUBE_RADIUS;
    while r >= MIN_TUBE_RADIUS {
        if center.check_tube(r).is_ok() {
            return Ok(r);
        }
        r *= 0.5;
    }
    Err(invalid("curve admits no embedded tube"))
}

/// Jacobi field along a closed geodesic sampled at the loop parameters.
/// `derivatives` holds the covariant derivative `J'`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JacobiSamples {
    pub init: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    /// `|(M − I)(J(0), J'(0))| / |(J(0), J'(0))|`.
    pub periodicity_residual: f64,
}

/// Samples the Jacobi field with initial data `init = (J(0), J'(0))`.
pub fn jacobi_field(
    metric: &TorusMetric,
    record: &GeodesicRecord,
    init: &[f64],
    rtol: f64,
) -> Result<JacobiSamples> {
    let l = &record.geodesic;
    let dim = l.dim();
    if init.len() != 2 * dim {
        return Err(invalid("Jacobi initial data has wrong length"));
    }
    let (x0, v0) = initial_state(l);
    let flow = jacobi_flow(metric, &x0[..dim], &v0[..dim], rtol)?;
    let mut values = Vec::with_capacity(l.n_samples());
    let mut derivatives = Vec::with_capacity(l.n_samples());
    for k in 0..l.n_samples() {
        let (_, _, j, jp) = flow.field_at(l.theta(k), init);
        values.push(j[..dim].to_vec());
        derivatives.push(jp[..dim].to_vec());
    }
    let m = &record.monodromy.matrix;
    let norm = init.iter().map(|v| v * v).sum::<f64>().sqrt();
    let defect = (0..2 * dim)
        .map(|i| {
            let row: f64 = (0..2 * dim).map(|j| m[(i, j)] * init[j]).sum();
            (row - init[i]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok(JacobiSamples {
        init: init.to_vec(),
        values,
        derivatives,
        periodicity_residual: if norm > 0.0 { defect / norm } else { 0.0 },
    })
}

/// Periodic Jacobi fields that are not multiples of the tangent field: a
/// basis of the fixed space of the monodromy with the direction `(γ̇(0), 0)`
/// projected out.
pub fn periodic_jacobi_fields(
    metric: &TorusMetric,
    record: &GeodesicRecord,
    eigen_tol: f64,
    rtol: f64,
) -> Result<Vec<JacobiSamples>> {
    let dim = record.geodesic.dim();
    let m = &record.monodromy.matrix;
    let shifted = m - nalgebra::DMatrix::<f64>::identity(2 * dim, 2 * dim);
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let (_, v0) = initial_state(&record.geodesic);
    let vnorm = v0[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
    let tangent: Vec<f64> = (0..2 * dim)
        .map(|i| if i < dim { v0[i] / vnorm } else { 0.0 })
        .collect();
    let mut basis: Vec<Vec<f64>> = vec![tangent];
    let mut out = Vec::new();
    for (idx, s) in svd.singular_values.iter().enumerate() {
        if *s >= eigen_tol {
            continue;
        }
        let mut u: Vec<f64> = v_t.row(idx).iter().copied().collect();
        for b in &basis {
            let dot: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in u.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        u.iter_mut().for_each(|v| *v /= norm);
        basis.push(u.clone());
        out.push(jacobi_field(metric, record, &u, rtol)?);
    }
    Ok(out)
}

/// Euclidean component of `j` orthogonal to `v`.
fn transverse(v: &[f64], j: &[f64]) -> Vec<f64> {
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let jv: f64 = v.iter().zip(j).map(|(a, b)| a * b).sum();
    j.iter().zip(v).map(|(a, b)| a - jv / vv * b).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_jacobi(record: &GeodesicRecord, jacobi: &JacobiSamples) -> Result<()> {
    if jacobi.values.len() != record.geodesic.n_samples() {
        return Err(invalid("Jacobi samples do not match the loop"));
    }
    if jacobi.periodicity_residual > JACOBI_PERIODIC_TOL {
        return Err(Error::NotPeriodicJacobiField {
            residual: jacobi.periodicity_residual,
        });
    }
    let vel = record.geodesic.velocities();
    let dim = record.geodesic.dim();
    let scale = jacobi.values.iter().map(|j| norm(j)).fold(0.0, f64::max);
    let off = jacobi
        .values
        .iter()
        .zip(&vel)
        .map(|(j, v)| norm(&transverse(&v[..dim], j)))
        .fold(0.0, f64::max);
    if scale == 0.0 || off <= 1e-8 * scale {
        return Err(Error::TangentJacobiField);
    }
    Ok(())
}

/// `∫ h(γ̇, J') + ½ (∇_J h)(γ̇, γ̇) dθ` with the Levi-Civita connection of `metric`.
pub fn transversality_integral(
    metric: &TorusMetric,
    record: &GeodesicRecord,
    jacobi: &JacobiSamples,
    h: &PerturbationTensor,
) -> Result<f64> {
    check_jacobi(record, jacobi)?;
    let l = &record.geodesic;
    let dim = l.dim();
    let vel = l.velocities();
    let mut total = 0.0;
    for k in 0..l.n_samples() {
        let x = &l.points()[k];
        let v = &vel[k][..dim];
        let j = &jacobi.values[k];
        let jp = &jacobi.derivatives[k];
        let hj = h.field.jet(x, 1);
        let chr = christoffel(metric, x)?;
        // Γ(J, γ̇)
        let gjv = chr.apply(j, v);
        let mut term = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                term += hj.g[a][b] * v[a] * jp[b];
                let mut cov = 0.0;
                for c in 0..dim {
                    cov += j[c] * hj.dg[a][b][c];
                }
                term += 0.5 * cov * v[a] * v[b];
                // −h(∇_J γ̇, γ̇) twice, halved.
                term -= hj.g[a][b] * gjv[a] * v[b];
            }
        }
        total += term;
    }
    Ok(total / l.n_samples() as f64)
}

/// Same integral with the flat coordinate connection: `h(γ̇, J̇) + ½ ∂_J h(γ̇, γ̇)`,
/// `J̇` by spectral differentiation of the samples.
pub fn transversality_integral_flat(
    record: &GeodesicRecord,
    jacobi: &JacobiSamples,
    h: &PerturbationTensor,
) -> Result<f64> {
    check_jacobi(record, jacobi)?;
    let l = &record.geodesic;
    let dim = l.dim();
    let n = l.n_samples();
    let vel = l.velocities();
    let jdot: Vec<Vec<f64>> = (0..dim)
        .map(|c| fft::derivative(&jacobi.values.iter().map(|j| j[c]).collect::<Vec<_>>(), 1))
        .collect();
    let mut total = 0.0;
    for k in 0..n {
        let x = &l.points()[k];
        let v = &vel[k][..dim];
        let j = &jacobi.values[k];
        let hj = h.field.jet(x, 1);
        for a in 0..dim {
            for b in 0..dim {
                total += hj.g[a][b] * v[a] * jdot[b][k];
                let d: f64 = (0..dim).map(|c| j[c] * hj.dg[a][b][c]).sum();
                total += 0.5 * d * v[a] * v[b];
            }
        }
    }
    Ok(total / n as f64)
}

/// Prescribed derivative `K(θ) = k(θ)·form` of the bump tensor along `J`,
/// with `k` a window on the subinterval scaled so that
/// `∫_{I₀} K(γ̇, γ̇) dθ = integral`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpTarget {
    /// Row-major symmetric matrix.
    pub form: Vec<f64>,
    pub integral: f64,
}

fn in_interval(theta: f64, [a, b]: [f64; 2]) -> bool {
    let t = a + (theta - a).rem_euclid(1.0);
    t >= a && t <= b
}

/// Longest run of consecutive `true` samples among `candidates` (cyclic).
fn longest_run(mask: &[bool]) -> Option<(usize, usize)> {
    let n = mask.len();
    if mask.iter().all(|m| *m) {
        return Some((0, n));
    }
    let start = mask.iter().position(|m| !*m)?;
    let mut best: Option<(usize, usize)> = None;
    let mut run_start = None;
    for step in 1..=n {
        let k = (start + step) % n;
        if mask[k] {
            if run_start.is_none() {
                run_start = Some(step);
            }
        } else if let Some(s) = run_start.take() {
            let len = step - s;
            if best.is_none_or(|(_, l)| len > l) {
                best = Some(((start + s) % n, len));
            }
        }
    }
    best
}

/// Interval inside `requested` (or elsewhere on the loop when `requested`
/// has no admissible sample) on which `γ̇` and `J` are independent.
fn valid_interval(l: &Loop, jacobi: &JacobiSamples, requested: [f64; 2]) -> Result<[f64; 2]> {
    let n = l.n_samples();
    let dim = l.dim();
    let vel = l.velocities();
    let independent: Vec<bool> = (0..n)
        .map(|k| {
            let v = &vel[k][..dim];
            let j = &jacobi.values[k];
            let (nv, nj) = (norm(v), norm(j));
            nv > 0.0 && nj > 0.0 && norm(&transverse(v, j)) / nj >= TRANSVERSAL_TOL
        })
        .collect();
    let inside: Vec<bool> = (0..n)
        .map(|k| independent[k] && in_interval(l.theta(k), requested))
        .collect();
    let h = 1.0 / n as f64;
    let width = (requested[1] - requested[0]).clamp(h, 1.0);
    let (start, len) = match longest_run(&inside).filter(|(_, len)| *len >= 3) {
        Some(run) => run,
        None => {
            let (s, len) = longest_run(&independent)
                .filter(|(_, len)| *len >= 3)
                .ok_or(Error::NoValidSubinterval)?;
            (s, len.min(((width / h).round() as usize).max(3)))
        }
    };
    if len == n {
        return Ok(requested);
    }
    // Window endpoints sit on the first and last admissible samples, so the
    // window vanishes at every sample outside the run.
    let a = l.theta(start);
    let b = a + (len - 1) as f64 * h;
    if len < 3 {
        return Err(Error::NoValidSubinterval);
    }
    Ok([a, b])
}

/// Tensor vanishing on the geodesic whose derivative along `J` equals the
/// target on the subinterval: `h = ⟨x − c(θ*), J⊥(θ*)⟩·(k/|J⊥|²)(θ*)·φ·form`.
pub fn build_bump_tensor(
    record: &GeodesicRecord,
    jacobi: &JacobiSamples,
    interval: [f64; 2],
    target: &BumpTarget,
) -> Result<PerturbationTensor> {
    check_jacobi(record, jacobi)?;
    let l = &record.geodesic;
    let dim = l.dim();
    let n = l.n_samples();
    if target.form.len() != dim * dim {
        return Err(invalid("target form has wrong size"));
    }
    if !(interval[1] > interval[0] && interval[1] - interval[0] <= 1.0) {
        return Err(invalid("subinterval must satisfy a < b ≤ a + 1"));
    }
    let window = valid_interval(l, jacobi, interval)?;
    let vel = l.velocities();
    let kvv: Vec<f64> = vel
        .iter()
        .map(|v| {
            let mut s = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    s += target.form[a * dim + b] * v[a] * v[b];
                }
            }
            s
        })
        .collect();
    let w: Vec<f64> = (0..n).map(|k| window_bump(l.theta(k), window).v).collect();
    let weighted: f64 = w.iter().zip(&kvv).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    if weighted.abs() < 1e-14 {
        return Err(invalid(
            "target form vanishes on the velocity over the subinterval",
        ));
    }
    let c = target.integral / weighted;
    let profile_samples: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            if w[k] == 0.0 {
                return vec![0.0];
            }
            let jt = transverse(&vel[k][..dim], &jacobi.values[k]);
            vec![c * w[k] / jt.iter().map(|x| x * x).sum::<f64>()]
        })
        .collect();
    let center = l.center_curve();
    let radius = admissible_radius(&center)?;
    let field = DirectionField {
        base: PeriodicSeries::from_samples(&jacobi.values, 0.0),
        normalize: false,
    };
    let term = TubeTerm::new(
        center,
        radius,
        OffsetWeight::Linear { field },
        ThetaProfile {
            series: PeriodicSeries::from_samples(&profile_samples, 0.0),
            window: None,
        },
        target.form.clone(),
        1.0,
    )?;
    let mut h = TorusMetric::zero("bump", dim, 0);
    h.add_tube(term);
    let c2 = c2_estimate(&h, l, radius);
    Ok(PerturbationTensor {
        field: h,
        support: Support::Tube {
            radius,
            interval: Some(window),
        },
        amplitude: c.abs(),
        c2_norm: c2,
    })
}

/// Smallest singular value of `[γ̇ J]` after normalizing both columns, per sample.
pub fn transversality_profile(record: &GeodesicRecord, jacobi: &JacobiSamples) -> Vec<f64> {
    let dim = record.geodesic.dim();
    record
        .geodesic
        .velocities()
        .iter()
        .zip(&jacobi.values)
        .map(|(v, j)| {
            let (nv, nj) = (norm(&v[..dim]), norm(j));
            let m = nalgebra::DMatrix::from_fn(
                dim,
                2,
                |r, c| if c == 0 { v[r] / nv } else { j[r] / nj },
            );
            singular_values_ascending(&m)[0]
        })
        .collect()
}
