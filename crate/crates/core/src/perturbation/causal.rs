use serde::{Deserialize, Serialize};

use super::{admissible_radius, c2_estimate, PerturbationTensor, Support};
use crate::error::{invalid, Error, Result};
use crate::geometry::{
    CausalLabel, OffsetWeight, ThetaProfile, TorusMetric, TubeTerm, ValidationGrid,
};
use crate::solver::{continue_geodesic, GeodesicRecord, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CausalOutcome {
    pub metric: TorusMetric,
    pub record: GeodesicRecord,
    pub tensor: PerturbationTensor,
    /// First-order prediction `±δ ∮ g_R(γ̇, γ̇) φ dθ` of the new causal value.
    pub predicted: f64,
}

/// Continuation steps used to follow the geodesic onto the perturbed metric.
const CAUSAL_STEPS: usize = 4;

/// Pushes a nondegenerate lightlike closed geodesic into the spacelike
/// (`Plus`) or timelike (`Minus`) region with `h = ±δ·g_R·φ`, `φ` the tube cutoff.
pub fn causal_perturbation(
    metric: &TorusMetric,
    record: &GeodesicRecord,
    sign: Sign,
    delta: f64,
    radius: Option<f64>,
    opts: &SolverOptions,
) -> Result<CausalOutcome> {
    if record.causal_label != CausalLabel::Lightlike {
        return Err(Error::NotLightlike);
    }
    if !record.is_nondegenerate() {
        return Err(Error::DegenerateRecord);
    }
    if !(delta > 0.0) {
        return Err(invalid("delta must be positive"));
    }
    let l = &record.geodesic;
    let dim = l.dim();
    let g_r = opts.reference(dim);
    // A positive-definite constant form; the reference metric at the start point.
    let gr = g_r.eval(&l.points()[0]);
    let form: Vec<f64> = (0..dim * dim).map(|k| gr[k / dim][k % dim]).collect();
    let center = l.center_curve();
    let radius = match radius {
        Some(r) => r,
        None => admissible_radius(&center)?,
    };
    let scale = sign.value() * delta;
    let term = TubeTerm::new(
        center,
        radius,
        OffsetWeight::Unit,
        ThetaProfile::constant(1.0),
        form,
        scale,
    )?;
    let mut h = TorusMetric::zero("causal", dim, 0);
    h.add_tube(term);
    let c2 = c2_estimate(&h, l, radius);
    let tensor = PerturbationTensor {
        field: h,
        support: Support::Tube {
            radius,
            interval: None,
        },
        amplitude: delta,
        c2_norm: c2,
    };
    let perturbed = tensor.apply(metric).with_id(format!(
        "{}+causal{}{delta}",
        metric.id,
        if scale > 0.0 { "+" } else { "-" }
    ));
    check_index(&perturbed)?;
    let vel = l.velocities();
    let predicted = l
        .points()
        .iter()
        .zip(&vel)
        .map(|(p, v)| tensor.field.inner(p, &v[..dim], &v[..dim]))
        .sum::<f64>()
        / l.n_samples() as f64;
    let continued = continue_geodesic(metric, &perturbed, record, CAUSAL_STEPS, opts)?;
    Ok(CausalOutcome {
        metric: perturbed,
        record: continued,
        tensor,
        predicted,
    })
}

pub(super) fn check_index(metric: &TorusMetric) -> Result<()> {
    match metric.validate(&ValidationGrid::default()) {
        Err(Error::IndexMismatch {
            declared, found, ..
        }) => Err(Error::IndexChanged {
            expected: declared,
            found,
        }),
        other => other,
    }
}
