use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::{find_closed_geodesic, GeodesicRecord, SolverOptions};
use crate::error::{invalid, Result};
use crate::geometry::metric::sym_eigenvalues;
use crate::geometry::{AuxRiemannianMetric, TorusMetric, ValidationGrid};
use crate::loopspace::Loop;

/// Relative tolerance for identifying two records.
pub const DEDUP_TOL: f64 = 1e-5;
/// Amplitude of the random periodic part of a seed.
const SEED_AMPLITUDE: f64 = 0.05;
const SEED_MODES: usize = 3;

/// Free homotopy classes to search, as winding vectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindingRange {
    pub classes: Vec<Vec<i64>>,
}

impl WindingRange {
    pub fn explicit(classes: Vec<Vec<i64>>) -> Result<Self> {
        if classes.is_empty() {
            return Err(invalid("winding range is empty"));
        }
        let dim = classes[0].len();
        if classes
            .iter()
            .any(|w| w.len() != dim || w.iter().all(|c| *c == 0))
        {
            return Err(invalid(
                "winding vectors must be nonzero and of equal length",
            ));
        }
        Ok(WindingRange { classes })
    }

    /// Every nonzero `w` with `|w_i| ≤ max_abs`.
    pub fn cube(dim: usize, max_abs: i64) -> Result<Self> {
        let side = (2 * max_abs + 1) as usize;
        let mut classes = Vec::new();
        for mut idx in 0..side.pow(dim as u32) {
            let mut w = vec![0; dim];
            for c in w.iter_mut() {
                *c = (idx % side) as i64 - max_abs;
                idx /= side;
            }
            if w.iter().any(|c| *c != 0) {
                classes.push(w);
            }
        }
        WindingRange::explicit(classes)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassFailure {
    pub winding: Vec<i64>,
    pub seed: usize,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchReport {
    /// Sorted by energy, then winding, one per rotation orbit.
    pub records: Vec<GeodesicRecord>,
    /// Indices into `records` sharing a geometric image.
    pub image_groups: Vec<Vec<usize>>,
    /// Classes that survived the energy filter.
    pub classes: Vec<Vec<i64>>,
    pub failures: Vec<ClassFailure>,
}

/// Lower bound of the smallest eigenvalue of the auxiliary metric.
fn min_eigenvalue(g_r: &AuxRiemannianMetric) -> f64 {
    let dim = g_r.dim();
    if g_r.metric.is_constant() {
        return sym_eigenvalues(&g_r.eval(&vec![0.0; dim]), dim)[0];
    }
    let grid = ValidationGrid {
        points_per_axis: 32,
        ..ValidationGrid::default()
    };
    // Grid minimum with a safety margin for values between grid points.
    0.9 * grid
        .points(dim)
        .map(|x| sym_eigenvalues(&g_r.eval(&x), dim)[0])
        .fold(f64::INFINITY, f64::min)
}

fn seed_loop(winding: &[i64], n: usize, rng: &mut ChaCha8Rng) -> Result<Loop> {
    let dim = winding.len();
    let base: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    let mut coeffs = vec![[0.0; 2]; dim * SEED_MODES];
    for (j, c) in coeffs.iter_mut().enumerate() {
        let k = (j % SEED_MODES + 1) as f64;
        c[0] = SEED_AMPLITUDE * rng.gen_range(-1.0..1.0) / (k * k);
        c[1] = SEED_AMPLITUDE * rng.gen_range(-1.0..1.0) / (k * k);
    }
    Loop::from_fn(n, winding.to_vec(), |t| {
        (0..dim)
            .map(|i| {
                let wave: f64 = (0..SEED_MODES)
                    .map(|m| {
                        let [a, b] = coeffs[i * SEED_MODES + m];
                        let (s, c) = (TAU * (m + 1) as f64 * t).sin_cos();
                        a * c + b * s
                    })
                    .sum();
                base[i] + winding[i] as f64 * t + wave
            })
            .collect()
    })
}

/// Seed of the `seed`-th random start in class number `class`.
pub fn job_seed(rng_seed: u64, class: usize, seed: usize) -> u64 {
    rng_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((class as u64) << 32)
        .wrapping_add(seed as u64)
}

fn periodic_gap(a: &Loop, b: &Loop, s_index: usize) -> f64 {
    let n = a.n_samples();
    let dim = a.dim();
    let mut diffs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let j = k + s_index;
        let lap = (j / n) as f64;
        diffs.push(
            (0..dim)
                .map(|c| a.points()[j % n][c] + lap * a.winding()[c] as f64 - b.points()[k][c])
                .collect(),
        );
    }
    lattice_l2(&diffs)
}

/// L² norm of a difference after removing the nearest lattice translation.
fn lattice_l2(diffs: &[Vec<f64>]) -> f64 {
    let n = diffs.len() as f64;
    let dim = diffs[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|c| diffs.iter().map(|d| d[c]).sum::<f64>() / n)
        .collect();
    let sum: f64 = diffs
        .iter()
        .map(|d| {
            (0..dim)
                .map(|c| (d[c] - mean[c].round()).powi(2))
                .sum::<f64>()
        })
        .sum();
    (sum / n).sqrt()
}

fn continuous_gap(a: &Loop, b: &Loop, s: f64) -> f64 {
    let rot = a.rotate(s);
    let diffs: Vec<Vec<f64>> = rot
        .points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| p.iter().zip(q).map(|(x, y)| x - y).collect())
        .collect();
    lattice_l2(&diffs)
}

/// `min_s ‖y_a(· + s) − y_b − L‖_{L²}` over phase shifts `s` and lattice
/// vectors `L`; infinite when windings or sample counts differ.
pub fn orbit_distance(a: &Loop, b: &Loop) -> f64 {
    if a.winding() != b.winding() || a.n_samples() != b.n_samples() {
        return f64::INFINITY;
    }
    let n = a.n_samples();
    let (best_j, best) =
        (0..n)
            .map(|j| (j, periodic_gap(a, b, j)))
            .fold(
                (0, f64::INFINITY),
                |acc, x| if x.1 < acc.1 { x } else { acc },
            );
    // Golden-section refinement between the neighbouring grid shifts.
    let h = 1.0 / n as f64;
    let centre = best_j as f64 * h;
    let (mut lo, mut hi) = (centre - h, centre + h);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = continuous_gap(a, b, x1);
    let mut f2 = continuous_gap(a, b, x2);
    for _ in 0..40 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = continuous_gap(a, b, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = continuous_gap(a, b, x2);
        }
    }
    best.min(f1).min(f2)
}

fn wrapped_dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            (d - d.round()).powi(2)
        })
        .sum()
}

/// One-sided Hausdorff test: every sample of `a` lies within `tol` of the image of `b`.
fn image_within(a: &Loop, b: &Loop, tol: f64) -> bool {
    let curve = b.center_curve();
    let dim = a.dim();
    let reach = b
        .points()
        .iter()
        .map(|p| p[..dim].to_vec())
        .collect::<Vec<_>>();
    a.points().iter().all(|x| {
        // Fast accept on a nearby sample, otherwise project onto the interpolant.
        if reach.iter().any(|p| wrapped_dist2(x, p) <= tol * tol) {
            return true;
        }
        curve
            .foot(x, 10.0 * tol)
            .is_some_and(|f| f.dist2 <= tol * tol)
    })
}

/// Whether two loops trace the same subset of the torus, at Hausdorff
/// tolerance `DEDUP_TOL·diam`.
pub fn same_image(a: &Loop, b: &Loop) -> bool {
    let (wa, wb) = (a.winding(), b.winding());
    // Equal images force parallel windings.
    let parallel = (0..wa.len()).all(|i| (0..wa.len()).all(|j| wa[i] * wb[j] == wa[j] * wb[i]));
    if !parallel {
        return false;
    }
    let tol = DEDUP_TOL * a.diameter().max(b.diameter());
    image_within(a, b, tol) && image_within(b, a, tol)
}

fn same_family(a: &GeodesicRecord, b: &GeodesicRecord) -> bool {
    // Translates of one degenerate loop form a single family; keep one.
    if a.is_nondegenerate() || b.is_nondegenerate() || a.winding != b.winding {
        return false;
    }
    if (a.energy - b.energy).abs() > 1e-8 * a.energy.max(b.energy) {
        return false;
    }
    let (pa, pb) = (&a.geodesic, &b.geodesic);
    if pa.n_samples() != pb.n_samples() {
        return false;
    }
    let dim = pa.dim();
    let n = pa.n_samples() as f64;
    let mean = |l: &Loop| -> Vec<f64> {
        (0..dim)
            .map(|c| l.points().iter().map(|p| p[c]).sum::<f64>() / n)
            .collect()
    };
    let (ma, mb) = (mean(pa), mean(pb));
    let recentred = |l: &Loop, m: &[f64]| -> Loop {
        let v: Vec<Vec<f64>> = vec![m.iter().map(|x| -x).collect(); l.n_samples()];
        l.displaced(&v, 1.0)
    };
    let (ca, cb) = (recentred(pa, &ma), recentred(pb, &mb));
    let diam = pa.diameter();
    orbit_distance(&ca, &cb) <= DEDUP_TOL * diam
}

fn sort_key(a: &GeodesicRecord, b: &GeodesicRecord) -> std::cmp::Ordering {
    a.energy
        .partial_cmp(&b.energy)
        .unwrap()
        .then_with(|| a.winding.cmp(&b.winding))
        .then_with(|| {
            let (pa, pb) = (&a.geodesic.points()[0], &b.geodesic.points()[0]);
            pa.partial_cmp(pb).unwrap_or(std::cmp::Ordering::Equal)
        })
}

/// Drops records on the same rotation orbit as an earlier one, and
/// translates within a degenerate family.
pub fn dedup_by_orbit(records: Vec<GeodesicRecord>) -> Vec<GeodesicRecord> {
    let mut kept: Vec<GeodesicRecord> = Vec::new();
    for r in records {
        let dup = kept.iter().any(|k| {
            k.winding == r.winding
                && (orbit_distance(&k.geodesic, &r.geodesic) <= DEDUP_TOL * k.geodesic.diameter()
                    || same_family(k, &r))
        });
        if !dup {
            kept.push(r);
        }
    }
    kept
}

fn image_groups(records: &[GeodesicRecord]) -> Vec<Vec<usize>> {
    let mut group_of: Vec<Option<usize>> = vec![None; records.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..records.len() {
        if group_of[i].is_some() {
            continue;
        }
        let g = groups.len();
        group_of[i] = Some(g);
        let mut members = vec![i];
        for j in i + 1..records.len() {
            if group_of[j].is_none() && same_image(&records[i].geodesic, &records[j].geodesic) {
                group_of[j] = Some(g);
                members.push(j);
            }
        }
        groups.push(members);
    }
    groups
}

/// Multi-start Newton over every class with `½ λ_min(g_R) |w|² ≤ e_max`.
///
/// Jobs are independent and seeded from `(rng_seed, class, seed)`, so the
/// report does not depend on scheduling.
pub fn search_closed_geodesics(
    metric: &TorusMetric,
    e_max: f64,
    range: &WindingRange,
    seeds_per_class: usize,
    rng_seed: u64,
    n_samples: usize,
    opts: &SolverOptions,
) -> Result<SearchReport> {
    if e_max <= 0.0 {
        return Err(invalid("energy bound must be positive"));
    }
    if range.classes.iter().any(|w| w.len() != metric.dim) {
        return Err(invalid(
            "winding length does not match the metric dimension",
        ));
    }
    let g_r = opts.reference(metric.dim);
    let lambda = min_eigenvalue(&g_r);
    let classes: Vec<Vec<i64>> = range
        .classes
        .iter()
        .filter(|w| 0.5 * lambda * w.iter().map(|c| (c * c) as f64).sum::<f64>() <= e_max)
        .cloned()
        .collect();
    let jobs: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|c| (0..seeds_per_class).map(move |s| (c, s)))
        .collect();
    let outcomes: Vec<(usize, usize, Result<GeodesicRecord>)> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(job_seed(rng_seed, c, s));
            let out = seed_loop(&classes[c], n_samples, &mut rng)
                .and_then(|seed| find_closed_geodesic(metric, &seed, opts));
            (c, s, out)
        })
        .collect();
    let mut found = Vec::new();
    let mut failures = Vec::new();
    for (c, s, out) in outcomes {
        match out {
            Ok(r) if r.energy <= e_max * (1.0 + 1e-12) => found.push(r),
            Ok(_) => {}
            Err(e) => failures.push(ClassFailure {
                winding: classes[c].clone(),
                seed: s,
                error: e.to_string(),
            }),
        }
    }
    found.sort_by(sort_key);
    let records = dedup_by_orbit(found);
    let groups = image_groups(&records);
    Ok(SearchReport {
        records,
        image_groups: groups,
        classes,
        failures,
    })
}
