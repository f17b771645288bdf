//! Classification of metrics by the closed geodesics found below an energy
//! bound, and randomized perturbation experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::error::{invalid, Result};
use crate::geometry::{CausalLabel, TorusMetric};
use crate::loopspace::iterate_loop;
use crate::perturbation::sample_random_perturbation;
use crate::solver::{
    build_record, job_seed, orbit_distance, search_closed_geodesics, ClassFailure, GeodesicRecord,
    SolverOptions, Verdict, WindingRange, DEDUP_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Mab,
    La,
    BumpyExperiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub newton_tol: f64,
    pub eigen_tol: f64,
    /// Relative kernel threshold of index form matrices.
    pub kernel_tol: f64,
    pub causal_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let s = SolverOptions::default();
        Tolerances {
            newton_tol: s.newton_tol,
            eigen_tol: s.eigen_tol,
            kernel_tol: crate::loopspace::KERNEL_TOL_FACTOR,
            causal_tol: s.causal_tol,
        }
    }
}

impl Tolerances {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            newton_tol: self.newton_tol,
            eigen_tol: self.eigen_tol,
            causal_tol: self.causal_tol,
            ..SolverOptions::default()
        }
    }
}

/// Homotopy classes to search: explicit windings or the cube `|w_i| ≤ max_abs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindingSpec {
    Cube { max_abs: i64 },
    Explicit { classes: Vec<Vec<i64>> },
}

impl WindingSpec {
    pub fn range(&self, dim: usize) -> Result<WindingRange> {
        match self {
            WindingSpec::Cube { max_abs } => WindingRange::cube(dim, *max_abs),
            WindingSpec::Explicit { classes } => WindingRange::explicit(classes.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Metric file; only read by the command line front end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<PathBuf>,
    pub kind: ExperimentKind,
    pub a: f64,
    /// Defaults to `a`.
    #[serde(default)]
    pub b: Option<f64>,
    pub winding_range: WindingSpec,
    pub seeds_per_class: usize,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub n_trials: Option<usize>,
    #[serde(default)]
    pub magnitude: Option<f64>,
    #[serde(default = "default_freq_cap")]
    pub freq_cap: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_samples() -> usize {
    64
}

fn default_freq_cap() -> i32 {
    2
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, a: f64, b: f64, winding_range: WindingSpec) -> Self {
        ExperimentConfig {
            metric: None,
            kind,
            a,
            b: Some(b),
            winding_range,
            seeds_per_class: 4,
            n_samples: default_samples(),
            rng_seed: 0,
            tolerances: Tolerances::default(),
            n_trials: None,
            magnitude: None,
            freq_cap: default_freq_cap(),
            output: None,
        }
    }

    pub fn upper(&self) -> f64 {
        self.b.unwrap_or(self.a)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        if [t.newton_tol, t.eigen_tol, t.kernel_tol, t.causal_tol]
            .iter()
            .any(|v| !(*v > 0.0))
        {
            return Err(invalid("tolerances must be positive"));
        }
        if !(self.a > 0.0) || self.upper() < self.a {
            return Err(invalid("need 0 < a ≤ b"));
        }
        if self.seeds_per_class == 0 {
            return Err(invalid("seeds_per_class must be positive"));
        }
        if self.n_samples < 8 || !self.n_samples.is_multiple_of(2) {
            return Err(invalid("n_samples must be even and at least 8"));
        }
        if self.kind == ExperimentKind::BumpyExperiment {
            if self.n_trials.unwrap_or(0) == 0 {
                return Err(invalid("n_trials must be at least 1"));
            }
            if !(self.magnitude.unwrap_or(-1.0) >= 0.0) {
                return Err(invalid("magnitude must be given and non-negative"));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipVerdict {
    MemberWithinBudget,
    NotMember,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Budget {
    pub classes: Vec<Vec<i64>>,
    pub seeds_per_class: usize,
    pub n_samples: usize,
    pub rng_seed: u64,
    pub search_energy: f64,
}

/// Why a candidate record did or did not enter the verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterDecision {
    pub winding: Vec<i64>,
    /// Iterate order relative to the prime it was generated from; 1 for
    /// records found directly.
    pub iterate: usize,
    pub energy: f64,
    pub min_energy: f64,
    pub included: bool,
    pub reason: String,
    pub verdict: Verdict,
    pub causal: CausalLabel,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Params {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MabReport {
    pub kind: ExperimentKind,
    pub metric_id: String,
    pub params: Params,
    /// Records entering the verdict, sorted by energy.
    pub records: Vec<GeodesicRecord>,
    pub decisions: Vec<FilterDecision>,
    pub verdict: MembershipVerdict,
    /// Index into `records` of the record refuting membership.
    pub witness: Option<usize>,
    pub budget: Budget,
    /// Random-start seeds per winding class.
    pub seeds: Vec<ClassSeeds>,
    pub failures: Vec<ClassFailure>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassSeeds {
    pub winding: Vec<i64>,
    pub seeds: Vec<u64>,
}

impl MabReport {
    pub fn witness_record(&self) -> Option<&GeodesicRecord> {
        self.witness.map(|i| &self.records[i])
    }

    /// Deterministic JSON body.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Candidate records: every record found by the search plus the iterates of
/// the primes up to energy `e_max`.
fn candidates(
    metric: &TorusMetric,
    cfg: &ExperimentConfig,
    e_max: f64,
) -> Result<(Vec<(GeodesicRecord, usize)>, Budget, Vec<ClassFailure>)> {
    let opts = cfg.tolerances.solver_options();
    let range = cfg.winding_range.range(metric.dim)?;
    let report = search_closed_geodesics(
        metric,
        e_max,
        &range,
        cfg.seeds_per_class,
        cfg.rng_seed,
        cfg.n_samples,
        &opts,
    )?;
    let found = report.records;
    let primes: Vec<&GeodesicRecord> = found.iter().filter(|r| r.stab == 1).collect();
    let jobs: Vec<(usize, usize)> = primes
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            let max_r = (e_max / p.energy).sqrt().floor() as usize;
            (2..=max_r).map(move |r| (i, r))
        })
        .collect();
    let iterates: Vec<Result<(GeodesicRecord, usize)>> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let l = iterate_loop(&primes[i].geodesic, r)?;
            Ok((build_record(metric, l, Vec::new(), &opts)?, r))
        })
        .collect();
    let mut out: Vec<(GeodesicRecord, usize)> = found.iter().cloned().map(|r| (r, 1)).collect();
    for it in iterates {
        let (rec, r) = it?;
        // Skip iterates the search already returned as a class of its own.
        let known = found.iter().any(|f| {
            f.winding == rec.winding
                && f.geodesic.n_samples() == rec.geodesic.n_samples()
                && orbit_distance(&f.geodesic, &rec.geodesic) <= DEDUP_TOL * rec.geodesic.diameter()
        });
        if !known {
            out.push((rec, r));
        }
    }
    out.sort_by(|a, b| {
        a.0.energy
            .partial_cmp(&b.0.energy)
            .unwrap()
            .then_with(|| a.0.winding.cmp(&b.0.winding))
            .then_with(|| a.1.cmp(&b.1))
    });
    let budget = Budget {
        classes: report.classes,
        seeds_per_class: cfg.seeds_per_class,
        n_samples: cfg.n_samples,
        rng_seed: cfg.rng_seed,
        search_energy: e_max,
    };
    Ok((out, budget, report.failures))
}

fn finish(
    kind: ExperimentKind,
    metric: &TorusMetric,
    params: Params,
    decided: Vec<(GeodesicRecord, FilterDecision)>,
    budget: Budget,
    failures: Vec<ClassFailure>,
    refutes: impl Fn(&GeodesicRecord) -> u8,
) -> MabReport {
    let decisions: Vec<FilterDecision> = decided.iter().map(|(_, d)| d.clone()).collect();
    let records: Vec<GeodesicRecord> = decided
        .into_iter()
        .filter(|(_, d)| d.included)
        .map(|(r, _)| r)
        .collect();
    // Lower rank wins; 0 means the record does not refute membership.
    let witness = records
        .iter()
        .enumerate()
        .filter(|(_, r)| refutes(r) > 0)
        .min_by_key(|(i, r)| (refutes(r), *i))
        .map(|(i, _)| i);
    let verdict = if witness.is_some() {
        MembershipVerdict::NotMember
    } else if records
        .iter()
        .any(|r| r.degeneracy != Verdict::Nondegenerate)
    {
        MembershipVerdict::Inconclusive
    } else {
        MembershipVerdict::MemberWithinBudget
    };
    let seeds = budget
        .classes
        .iter()
        .enumerate()
        .map(|(c, w)| ClassSeeds {
            winding: w.clone(),
            seeds: (0..budget.seeds_per_class)
                .map(|s| job_seed(budget.rng_seed, c, s))
                .collect(),
        })
        .collect();
    MabReport {
        kind,
        metric_id: metric.id.clone(),
        params,
        records,
        decisions,
        verdict,
        witness,
        budget,
        seeds,
        failures,
    }
}

/// Membership in `M(a, b)`: every closed geodesic with `E_min ≤ a` and
/// `E ≤ b` is nondegenerate, relative to the search budget.
pub fn classify_mab(metric: &TorusMetric, cfg: &ExperimentConfig) -> Result<MabReport> {
    cfg.validate()?;
    let (a, b) = (cfg.a, cfg.upper());
    let (cands, budget, failures) = candidates(metric, cfg, b)?;
    let decided = cands
        .into_iter()
        .map(|(rec, r)| {
            let (included, reason) = if rec.energy > b {
                (false, format!("E = {} > b", rec.energy))
            } else if rec.min_energy > a {
                (false, format!("E_min = {} > a", rec.min_energy))
            } else {
                (true, "E_min ≤ a and E ≤ b".to_string())
            };
            let d = FilterDecision {
                winding: rec.winding.clone(),
                iterate: r,
                energy: rec.energy,
                min_energy: rec.min_energy,
                included,
                reason,
                verdict: rec.degeneracy,
                causal: rec.causal_label,
            };
            (rec, d)
        })
        .collect();
    Ok(finish(
        ExperimentKind::Mab,
        metric,
        Params { a, b },
        decided,
        budget,
        failures,
        |r| u8::from(r.degeneracy == Verdict::Degenerate),
    ))
}

/// Membership in `L(a)`: every closed geodesic with `E < a` is nondegenerate
/// and not lightlike.
pub fn classify_la(metric: &TorusMetric, cfg: &ExperimentConfig) -> Result<MabReport> {
    cfg.validate()?;
    let a = cfg.a;
    let (cands, budget, failures) = candidates(metric, cfg, a)?;
    let decided = cands
        .into_iter()
        .map(|(rec, r)| {
            let included = rec.energy < a;
            let reason = if included {
                "E < a".to_string()
            } else {
                format!("E = {} ≥ a", rec.energy)
            };
            let d = FilterDecision {
                winding: rec.winding.clone(),
                iterate: r,
                energy: rec.energy,
                min_energy: rec.min_energy,
                included,
                reason,
                verdict: rec.degeneracy,
                causal: rec.causal_label,
            };
            (rec, d)
        })
        .collect();
    Ok(finish(
        ExperimentKind::La,
        metric,
        Params { a, b: a },
        decided,
        budget,
        failures,
        |r| {
            if r.causal_label == CausalLabel::Lightlike {
                1
            } else if r.degeneracy == Verdict::Degenerate {
                2
            } else {
                0
            }
        },
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub metric_id: String,
    pub verdict: Option<MembershipVerdict>,
    pub records: usize,
    pub marginal: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BumpyReport {
    pub metric_id: String,
    pub a: f64,
    pub magnitude: f64,
    pub freq_cap: i32,
    pub n_trials: usize,
    pub members: usize,
    pub fraction_member: f64,
    pub marginal_records: usize,
    pub failures: usize,
    pub trials: Vec<TrialOutcome>,
}

impl BumpyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn trial_seed(rng_seed: u64, trial: usize) -> u64 {
    rng_seed.wrapping_add(0x9E37_79B9 * (trial as u64 + 1))
}

/// Random perturbations of `metric`, each classified for `M(a, a)`.
pub fn bumpy_experiment(metric: &TorusMetric, cfg: &ExperimentConfig) -> Result<BumpyReport> {
    cfg.validate()?;
    let n_trials = cfg.n_trials.unwrap_or(0);
    if n_trials == 0 {
        return Err(invalid("n_trials must be at least 1"));
    }
    let magnitude = cfg.magnitude.unwrap_or(0.0);
    let mut inner = cfg.clone();
    inner.kind = ExperimentKind::Mab;
    inner.b = Some(cfg.a);
    let trials: Vec<TrialOutcome> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.rng_seed, t);
            let run =
                sample_random_perturbation(metric, magnitude, cfg.freq_cap, seed).and_then(|g| {
                    let mut c = inner.clone();
                    c.rng_seed = seed;
                    classify_mab(&g, &c).map(|r| (g.id.clone(), r))
                });
            match run {
                Ok((id, r)) => TrialOutcome {
                    trial: t,
                    seed,
                    metric_id: id,
                    verdict: Some(r.verdict),
                    records: r.records.len(),
                    marginal: r
                        .records
                        .iter()
                        .filter(|x| x.degeneracy == Verdict::Marginal)
                        .count(),
                    error: None,
                },
                Err(e) => TrialOutcome {
                    trial: t,
                    seed,
                    metric_id: metric.id.clone(),
                    verdict: None,
                    records: 0,
                    marginal: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let members = trials
        .iter()
        .filter(|t| t.verdict == Some(MembershipVerdict::MemberWithinBudget))
        .count();
    Ok(BumpyReport {
        metric_id: metric.id.clone(),
        a: cfg.a,
        magnitude,
        freq_cap: cfg.freq_cap,
        n_trials,
        members,
        fraction_member: members as f64 / n_trials as f64,
        marginal_records: trials.iter().map(|t| t.marginal).sum(),
        failures: trials.iter().filter(|t| t.error.is_some()).count(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn hill_cfg(a: f64, b: f64) -> ExperimentConfig {
        ExperimentConfig::new(
            ExperimentKind::Mab,
            a,
            b,
            WindingSpec::Explicit {
                classes: vec![vec![1, 0], vec![-1, 0]],
            },
        )
    }

    #[test]
    fn hill_is_member_and_iterates_are_filtered() {
        let g = fixtures::hill(0.1);
        let r = classify_mab(&g, &hill_cfg(0.6, 0.6)).unwrap();
        assert_eq!(r.verdict, MembershipVerdict::MemberWithinBudget);
        assert_eq!(r.records.len(), 4);
        let r = classify_mab(&g, &hill_cfg(0.6, 2.5)).unwrap();
        let doubles: Vec<&FilterDecision> = r.decisions.iter().filter(|d| d.iterate == 2).collect();
        assert_eq!(doubles.len(), 4);
        for d in doubles {
            assert!(!d.included);
            assert!((d.energy - 2.0).abs() < 1e-9);
            assert!((d.min_energy - 1.0).abs() < 1e-9);
        }
        assert_eq!(r.verdict, MembershipVerdict::MemberWithinBudget);
    }

    #[test]
    fn flat_has_degenerate_witness() {
        let mut cfg = hill_cfg(1.0, 1.0);
        cfg.winding_range = WindingSpec::Cube { max_abs: 1 };
        let r = classify_mab(&fixtures::flat(2), &cfg).unwrap();
        assert_eq!(r.verdict, MembershipVerdict::NotMember);
        let w = r.witness_record().unwrap();
        assert_eq!(w.degeneracy, Verdict::Degenerate);
        assert!((w.energy - 0.5).abs() < 1e-9);
    }

    #[test]
    fn la_examples() {
        let mut cfg = hill_cfg(1.1, 1.1);
        cfg.kind = ExperimentKind::La;
        cfg.winding_range = WindingSpec::Cube { max_abs: 1 };
        let r = classify_la(&fixtures::flat_lorentz(), &cfg).unwrap();
        assert_eq!(r.verdict, MembershipVerdict::NotMember);
        assert_eq!(
            r.witness_record().unwrap().causal_label,
            CausalLabel::Lightlike
        );
        let r = classify_la(&fixtures::flat(2), &cfg).unwrap();
        assert_eq!(r.verdict, MembershipVerdict::NotMember);
        assert_eq!(
            r.witness_record().unwrap().causal_label,
            CausalLabel::Spacelike
        );
        let mut cfg = hill_cfg(0.6, 0.6);
        cfg.kind = ExperimentKind::La;
        assert_eq!(
            classify_la(&fixtures::hill(0.1), &cfg).unwrap().verdict,
            MembershipVerdict::MemberWithinBudget
        );
    }

    #[test]
    fn zero_trials_rejected() {
        let mut cfg = hill_cfg(0.6, 0.6);
        cfg.kind = ExperimentKind::BumpyExperiment;
        cfg.n_trials = Some(0);
        cfg.magnitude = Some(1e-3);
        assert!(bumpy_experiment(&fixtures::hill(0.1), &cfg).is_err());
    }
}
