use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::causal::{causal_perturbation, check_index, Sign};
use super::{admissible_radius, c2_estimate, PerturbationTensor, Support};
use crate::error::{invalid, Error, Result};
use crate::geometry::series::SeriesMode;
use crate::geometry::{
    CausalLabel, DirectionField, OffsetWeight, PeriodicSeries, ThetaProfile, TorusMetric, TubeTerm,
};
use crate::loopspace::{iterate_loop, Loop};
use crate::solver::{build_record, newton_solve, GeodesicRecord, SolverOptions, Verdict};

/// Adds independent uniform coefficients in `[−magnitude, magnitude]` for
/// every frequency with `‖k‖_∞ ≤ freq_cap` to every component.
pub fn sample_random_perturbation(
    metric: &TorusMetric,
    magnitude: f64,
    freq_cap: i32,
    rng_seed: u64,
) -> Result<TorusMetric> {
    if magnitude < 0.0 || freq_cap < 0 {
        return Err(invalid("magnitude and frequency cap must be non-negative"));
    }
    if magnitude == 0.0 {
        return Ok(metric.clone());
    }
    let dim = metric.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let side = (2 * freq_cap + 1) as usize;
    // One representative of each pair ±k: the first nonzero entry is positive.
    let freqs: Vec<Vec<i32>> = (0..side.pow(dim as u32))
        .map(|mut idx| {
            (0..dim)
                .map(|_| {
                    let k = (idx % side) as i32 - freq_cap;
                    idx /= side;
                    k
                })
                .collect::<Vec<i32>>()
        })
        .filter(|k| k.iter().find(|c| **c != 0).is_none_or(|c| *c > 0))
        .collect();
    let mut out = metric
        .clone()
        .with_id(format!("{}+rand{rng_seed}", metric.id));
    for i in 0..dim {
        for j in i..dim {
            for k in &freqs {
                let a = rng.gen_range(-magnitude..=magnitude);
                let b = if k.iter().all(|c| *c == 0) {
                    0.0
                } else {
                    rng.gen_range(-magnitude..=magnitude)
                };
                out.add_term(i, j, k.clone(), a, b);
            }
        }
    }
    check_index(&out)?;
    Ok(out)
}

/// Sum of tube terms `δ·form·⟨x − c(θ*), a⟩²·f(θ*)·φ` with random forms,
/// directions and low-frequency profiles. The tensor and its first
/// derivatives vanish along the center curve, so the curve keeps being a
/// geodesic with unchanged causal value; only the curvature along it moves.
pub fn random_tube_perturbation(
    l: &Loop,
    magnitude: f64,
    rng_seed: u64,
) -> Result<PerturbationTensor> {
    let dim = l.dim();
    let center = l.center_curve();
    let radius = admissible_radius(&center)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut h = TorusMetric::zero("tube-random", dim, 0);
    for _ in 0..dim {
        let direction: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut form = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = rng.gen_range(-1.0..1.0);
                form[i * dim + j] = v;
                form[j * dim + i] = v;
            }
        }
        let modes = (1..=2)
            .map(|k| SeriesMode {
                k,
                cos: vec![rng.gen_range(-0.5..0.5)],
                sin: vec![rng.gen_range(-0.5..0.5)],
            })
            .collect();
        let profile = ThetaProfile {
            series: PeriodicSeries {
                mean: vec![rng.gen_range(-1.0..1.0)],
                modes,
            },
            window: None,
        };
        // The weight is O(ρ²); rescale so second derivatives are O(magnitude).
        let field = DirectionField {
            base: PeriodicSeries::constant(direction),
            normalize: false,
        };
        h.add_tube(TubeTerm::new(
            center.clone(),
            radius,
            OffsetWeight::Quadratic { field },
            profile,
            form,
            magnitude,
        )?);
    }
    let c2 = c2_estimate(&h, l, radius);
    Ok(PerturbationTensor {
        field: h,
        support: Support::Tube {
            radius,
            interval: None,
        },
        amplitude: magnitude,
        c2_norm: c2,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BreakOutcome {
    pub metric: TorusMetric,
    pub record: GeodesicRecord,
    pub iterate_verdict: Verdict,
    /// Perturbations composed into the returned metric.
    pub perturbations: usize,
    /// Random trials drawn.
    pub attempts: usize,
    /// Trials after which both verdicts were nondegenerate.
    pub successes: usize,
}

fn iterate_verdict(
    metric: &TorusMetric,
    rec: &GeodesicRecord,
    opts: &SolverOptions,
) -> Result<Verdict> {
    let twice = iterate_loop(&rec.geodesic, 2)?;
    Ok(build_record(metric, twice, Vec::new(), opts)?.degeneracy)
}

fn bumpy_pair(
    metric: &TorusMetric,
    rec: &GeodesicRecord,
    opts: &SolverOptions,
) -> Result<(bool, Verdict)> {
    if !rec.is_nondegenerate() {
        return Ok((false, Verdict::Degenerate));
    }
    let it = iterate_verdict(metric, rec, opts)?;
    Ok((it == Verdict::Nondegenerate, it))
}

/// Perturbs the metric inside a tube around the geodesic until both the
/// geodesic and its double cover are nondegenerate. Lightlike input is then
/// pushed off the light cone with [`causal_perturbation`].
pub fn break_degeneracy(
    metric: &TorusMetric,
    record: &GeodesicRecord,
    rng_seed: u64,
    budget: usize,
    magnitude: f64,
    opts: &SolverOptions,
) -> Result<BreakOutcome> {
    if record.stab != 1 {
        return Err(invalid("break_degeneracy needs a prime geodesic"));
    }
    let lightlike = record.causal_label == CausalLabel::Lightlike;
    let (ok, it) = bumpy_pair(metric, record, opts)?;
    if ok && !lightlike {
        return Ok(BreakOutcome {
            metric: metric.clone(),
            record: record.clone(),
            iterate_verdict: it,
            perturbations: 0,
            attempts: 0,
            successes: 0,
        });
    }
    let mut best = String::from("no trial completed");
    let mut best_sigma = -1.0;
    let mut note = |rec: &GeodesicRecord, what: &str| {
        let s = rec.fixed_singular_values.get(1).copied().unwrap_or(0.0);
        if s > best_sigma {
            best_sigma = s;
            best = format!(
                "{what}: second singular value of M - I {s:e}, verdict {:?}",
                rec.degeneracy
            );
        }
    };
    let mut successes = 0;
    for attempt in 0..budget {
        // Trial 0 reuses an already nondegenerate pair.
        let (g1, r1, n1) = if ok && attempt == 0 {
            (metric.clone(), record.clone(), 0)
        } else {
            let trial_seed = rng_seed
                .wrapping_mul(0x2545_F491_4F6C_DD1D)
                .wrapping_add(attempt as u64);
            let h = random_tube_perturbation(&record.geodesic, magnitude, trial_seed)?;
            let g = h
                .apply(metric)
                .with_id(format!("{}+tube{attempt}", metric.id));
            if check_index(&g).is_err() {
                continue;
            }
            let Ok((l, hist)) = newton_solve(&g, &record.geodesic, opts) else {
                continue;
            };
            let Ok(r) = build_record(&g, l, hist, opts) else {
                continue;
            };
            (g, r, 1)
        };
        note(&r1, "tube trial");
        let Ok((pair_ok, _)) = bumpy_pair(&g1, &r1, opts) else {
            continue;
        };
        if !pair_ok {
            continue;
        }
        successes += 1;
        if !lightlike {
            let it = iterate_verdict(&g1, &r1, opts)?;
            return Ok(BreakOutcome {
                metric: g1,
                record: r1,
                iterate_verdict: it,
                perturbations: n1,
                attempts: attempt + 1,
                successes,
            });
        }
        let delta = (0.1 * magnitude).max(1e-4);
        let Ok(out) = causal_perturbation(&g1, &r1, Sign::Plus, delta, None, opts) else {
            continue;
        };
        note(&out.record, "causal stage");
        let Ok((pair_ok, it)) = bumpy_pair(&out.metric, &out.record, opts) else {
            continue;
        };
        if pair_ok && out.record.causal_label != CausalLabel::Lightlike {
            return Ok(BreakOutcome {
                metric: out.metric,
                record: out.record,
                iterate_verdict: it,
                perturbations: n1 + 1,
                attempts: attempt + 1,
                successes,
            });
        }
    }
    Err(Error::BudgetExhausted {
        attempts: budget,
        diagnostics: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::metric::metric_index;
    use crate::geometry::AuxRiemannianMetric;
    use crate::solver::find_closed_geodesic;

    #[test]
    fn zero_magnitude_is_identity() {
        let g = fixtures::hill(0.1);
        assert_eq!(sample_random_perturbation(&g, 0.0, 2, 1).unwrap(), g);
    }

    #[test]
    fn small_random_perturbations_keep_index() {
        let a = sample_random_perturbation(&fixtures::flat(2), 1e-2, 2, 5).unwrap();
        let b = sample_random_perturbation(&fixtures::flat(2), 1e-2, 2, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.c2_seminorm() <= 1e-2 * (1.0 + std::f64::consts::TAU * 2.0).powi(2) * 4.0 + 1.0);
        let l = sample_random_perturbation(&fixtures::flat_lorentz(), 1e-2, 2, 5).unwrap();
        assert_eq!(
            metric_index(&l, &AuxRiemannianMetric::euclidean(2), &[0.3, 0.7]).unwrap(),
            1
        );
    }

    #[test]
    fn bumpy_input_is_returned_unchanged() {
        let g = fixtures::hill(0.1);
        let rec = find_closed_geodesic(
            &g,
            &Loop::line(64, &[0.0, 0.0], vec![1, 0]),
            &SolverOptions::default(),
        )
        .unwrap();
        let out = break_degeneracy(&g, &rec, 0, 5, 1e-2, &SolverOptions::default()).unwrap();
        assert_eq!(out.perturbations, 0);
        assert_eq!(out.metric, g);
    }

    #[test]
    fn flat_line_becomes_bumpy_locally() {
        let g = fixtures::flat(2);
        let rec = find_closed_geodesic(
            &g,
            &Loop::line(64, &[0.0, 0.3], vec![1, 0]),
            &SolverOptions::default(),
        )
        .unwrap();
        let out = break_degeneracy(&g, &rec, 9, 50, 1e-2, &SolverOptions::default()).unwrap();
        assert!(out.record.is_nondegenerate());
        assert_eq!(out.iterate_verdict, Verdict::Nondegenerate);
        // Far from the line the metric is untouched.
        assert_eq!(out.metric.eval(&[0.4, 0.8]), g.eval(&[0.4, 0.8]));
    }
}
