use super::{build_record, newton_solve, GeodesicRecord, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::geometry::{TorusMetric, ValidationGrid};
use crate::loopspace::Loop;

const MAX_BISECTIONS: usize = 8;
/// Grid resolution used to check every interpolated metric.
const PATH_GRID_POINTS: usize = 32;
/// Metric checks per continuation step.
const PATH_CHECKS_PER_STEP: usize = 4;

fn check_path(m0: &TorusMetric, m1: &TorusMetric, n_steps: usize) -> Result<()> {
    let grid = ValidationGrid {
        points_per_axis: PATH_GRID_POINTS,
        ..ValidationGrid::default()
    };
    let total = n_steps * PATH_CHECKS_PER_STEP;
    for k in 0..=total {
        let t = k as f64 / total as f64;
        m0.lerp(m1, t)
            .validate(&grid)
            .map_err(|_| Error::MetricPathDegenerate { t })?;
    }
    Ok(())
}

fn extrapolate(cur: &Loop, prev: Option<&(Loop, f64)>, t: f64, t_next: f64) -> Loop {
    match prev {
        Some((p, tp)) if (t - tp).abs() > 0.0 => {
            let ratio = (t_next - t) / (t - tp);
            let diff: Vec<Vec<f64>> = cur
                .points()
                .iter()
                .zip(p.points())
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect();
            cur.displaced(&diff, ratio)
        }
        _ => cur.clone(),
    }
}

/// Follows a nondegenerate closed geodesic along `g_t = (1−t) g₀ + t g₁`.
///
/// Each step is a secant prediction followed by a Newton correction; a
/// correction that fails or loses nondegeneracy halves the step, at most
/// eight times in a row.
pub fn continue_geodesic(
    m0: &TorusMetric,
    m1: &TorusMetric,
    record0: &GeodesicRecord,
    n_steps: usize,
    opts: &SolverOptions,
) -> Result<GeodesicRecord> {
    if n_steps == 0 {
        return Err(invalid("continuation needs at least one step"));
    }
    if m0.dim != m1.dim || m0.declared_index != m1.declared_index {
        return Err(invalid("endpoint metrics differ in dimension or index"));
    }
    if !record0.is_nondegenerate() {
        return Err(Error::DegenerateRecord);
    }
    if m0 == m1 {
        return Ok(record0.clone());
    }
    check_path(m0, m1, n_steps)?;
    let base_dt = 1.0 / n_steps as f64;
    let mut t = 0.0;
    let mut cur = record0.geodesic.clone();
    let mut prev: Option<(Loop, f64)> = None;
    let mut dt = base_dt;
    let mut depth = 0;
    let mut last: Option<GeodesicRecord> = None;
    while t < 1.0 {
        let t_next = (t + dt).min(1.0);
        let metric = if t_next >= 1.0 {
            m1.clone()
        } else {
            m0.lerp(m1, t_next)
        };
        let seed = extrapolate(&cur, prev.as_ref(), t, t_next);
        let corrected = newton_solve(&metric, &seed, opts)
            .and_then(|(l, hist)| build_record(&metric, l, hist, opts))
            .ok()
            .filter(|r| r.is_nondegenerate());
        match corrected {
            Some(rec) => {
                prev = Some((cur, t));
                cur = rec.geodesic.clone();
                t = t_next;
                last = Some(rec);
                depth = 0;
                dt = (dt * 2.0).min(base_dt);
            }
            None => {
                depth += 1;
                if depth > MAX_BISECTIONS {
                    return Err(Error::DegeneracyOnPath { t: t_next });
                }
                dt *= 0.5;
            }
        }
    }
    let mut rec = last.expect("at least one step taken");
    rec.metric_id = m1.id.clone();
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::solver::{find_closed_geodesic, orbit_distance};

    fn axis_record(eps: f64) -> GeodesicRecord {
        let g = fixtures::hill(eps);
        find_closed_geodesic(
            &g,
            &Loop::line(64, &[0.0, 0.0], vec![1, 0]),
            &SolverOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn identity_path_returns_record() {
        let rec = axis_record(0.1);
        let g = fixtures::hill(0.1);
        let out = continue_geodesic(&g, &g, &rec, 4, &SolverOptions::default()).unwrap();
        assert_eq!(out.geodesic, rec.geodesic);
    }

    #[test]
    fn degenerate_start_is_refused() {
        let flat = fixtures::flat(2);
        let rec = find_closed_geodesic(
            &flat,
            &Loop::line(64, &[0.0, 0.0], vec![1, 0]),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            continue_geodesic(
                &flat,
                &fixtures::hill(0.1),
                &rec,
                4,
                &SolverOptions::default()
            ),
            Err(Error::DegenerateRecord)
        ));
    }

    #[test]
    fn axis_persists_and_path_reverses() {
        let opts = SolverOptions::default();
        let (a, b) = (fixtures::hill(0.1), fixtures::hill(0.2));
        let rec = axis_record(0.1);
        let there = continue_geodesic(&a, &b, &rec, 4, &opts).unwrap();
        assert!(there.geodesic.points().iter().all(|p| p[1].abs() < 1e-8));
        let back = continue_geodesic(&b, &a, &there, 4, &opts).unwrap();
        assert!(orbit_distance(&back.geodesic, &rec.geodesic) < 1e-7);
    }

    #[test]
    fn degenerate_path_is_rejected() {
        let rec = axis_record(0.1);
        let a = fixtures::hill(0.1);
        let mut b = TorusMetric::zero("neg", 2, 0);
        b.add_term(0, 0, vec![0, 0], -1.0, 0.0);
        b.add_term(1, 1, vec![0, 0], 1.0, 0.0);
        assert!(matches!(
            continue_geodesic(&a, &b, &rec, 4, &SolverOptions::default()),
            Err(Error::MetricPathDegenerate { .. })
        ));
    }
}
