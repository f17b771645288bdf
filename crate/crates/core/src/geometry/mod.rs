//! Metric tensors on flat tori and their Levi-Civita geometry.

pub mod connection;
pub mod distribution;
pub mod jet;
pub mod metric;
pub mod series;
pub mod trig;
pub mod tube;

pub use connection::{
    causal_character, christoffel, christoffel_with_derivative, curvature, CausalLabel,
    Christoffel, Curvature,
};
pub use distribution::{build_index_metric, Distribution};
pub use metric::{metric_index, AuxRiemannianMetric, TorusMetric, ValidationGrid};
pub use series::PeriodicSeries;
pub use trig::TrigPoly;
pub use tube::{CenterCurve, DirectionField, OffsetWeight, ThetaProfile, TubeTerm};
