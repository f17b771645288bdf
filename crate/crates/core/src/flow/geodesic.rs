use serde::{Deserialize, Serialize};

use super::rk::{integrate, Options};
use crate::error::{invalid, Result};
use crate::geometry::connection::christoffel;
use crate::geometry::TorusMetric;

pub const CONS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub causal: Vec<f64>,
    pub c0: f64,
    /// Largest `|g(γ̇,γ̇) − c0|` over samples and integrator nodes.
    pub max_drift: f64,
}

impl Trajectory {
    pub fn end_point(&self) -> &[f64] {
        self.points.last().unwrap()
    }

    pub fn end_velocity(&self) -> &[f64] {
        self.velocities.last().unwrap()
    }

    pub fn conserves(&self, cons_tol: f64) -> bool {
        self.max_drift <= cons_tol * (1.0 + self.c0.abs())
    }

    pub fn csv_header(&self) -> Vec<String> {
        let n = self.points[0].len();
        let mut h = vec!["t".to_string()];
        h.extend((1..=n).map(|i| format!("x{i}")));
        h.extend((1..=n).map(|i| format!("v{i}")));
        h.push("c".into());
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        (0..self.times.len())
            .map(|k| {
                let mut r = vec![self.times[k]];
                r.extend(&self.points[k]);
                r.extend(&self.velocities[k]);
                r.push(self.causal[k]);
                r
            })
            .collect()
    }
}

/// Right-hand side of `ẍ = −Γ(ẋ, ẋ)` on the state `(x, v)`.
pub fn geodesic_rhs(metric: &TorusMetric, y: &[f64], dy: &mut [f64]) -> Result<()> {
    let n = metric.dim;
    let (x, v) = y.split_at(n);
    let acc = christoffel(metric, x)?.apply(v, v);
    dy[..n].copy_from_slice(v);
    for k in 0..n {
        dy[n + k] = -acc[k];
    }
    Ok(())
}

/// Integrates the geodesic through `(p0, v0)` over `[0, t_end]`, sampled at
/// `n_out + 1` equally spaced times.
pub fn integrate_geodesic(
    metric: &TorusMetric,
    p0: &[f64],
    v0: &[f64],
    t_end: f64,
    rtol: f64,
) -> Result<Trajectory> {
    integrate_geodesic_sampled(metric, p0, v0, t_end, rtol, 256)
}

pub fn integrate_geodesic_sampled(
    metric: &TorusMetric,
    p0: &[f64],
    v0: &[f64],
    t_end: f64,
    rtol: f64,
    n_out: usize,
) -> Result<Trajectory> {
    let n = metric.dim;
    if p0.len() != n || v0.len() != n {
        return Err(invalid("initial data has wrong dimension"));
    }
    if !(1e-12..=1e-3).contains(&rtol) {
        return Err(invalid("rtol must lie in [1e-12, 1e-3]"));
    }
    if !(t_end > 0.0) || v0.iter().chain(p0).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite initial data or non-positive horizon"));
    }
    let y0: Vec<f64> = p0.iter().chain(v0).copied().collect();
    let c0 = metric.inner(p0, v0, v0);
    let drift_tol = CONS_TOL * (1.0 + c0.abs());

    let mut opts = Options::new(rtol).with_dense();
    opts.atol = rtol * 1e-2;
    let mut attempt = 0;
    loop {
        let sol = integrate(
            |_t, y, dy| geodesic_rhs(metric, y, dy),
            0.0,
            t_end,
            &y0,
            &opts,
        )?;
        let mut traj = Trajectory {
            times: Vec::with_capacity(n_out + 1),
            points: Vec::with_capacity(n_out + 1),
            velocities: Vec::with_capacity(n_out + 1),
            causal: Vec::with_capacity(n_out + 1),
            c0,
            max_drift: 0.0,
        };
        for k in 0..=n_out {
            let t = t_end * k as f64 / n_out as f64;
            let y = if k == n_out {
                sol.y_end.clone()
            } else {
                sol.eval(t)
            };
            let c = metric.inner(&y[..n], &y[n..], &y[n..]);
            traj.max_drift = traj.max_drift.max((c - c0).abs());
            traj.times.push(t);
            traj.points.push(y[..n].to_vec());
            traj.velocities.push(y[n..].to_vec());
            traj.causal.push(c);
        }
        for (_, y) in &sol.nodes {
            let c = metric.inner(&y[..n], &y[n..], &y[n..]);
            traj.max_drift = traj.max_drift.max((c - c0).abs());
        }
        // Tighten once if the requested tolerance was too loose for conservation.
        if traj.max_drift <= drift_tol || attempt == 2 || rtol > 1e-8 {
            return Ok(traj);
        }
        attempt += 1;
        opts.rtol = (opts.rtol * 0.1).max(1e-13);
        opts.atol = opts.rtol * 1e-2;
        opts.max_norm = true;
    }
}
