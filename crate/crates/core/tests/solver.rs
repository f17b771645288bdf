use bumpy_core::fixtures;
use bumpy_core::geometry::CausalLabel;
use bumpy_core::loopspace::Loop;
use bumpy_core::solver::{
    find_closed_geodesic, search_closed_geodesics, SolverOptions, Verdict, WindingRange,
};
use std::f64::consts::TAU;

#[test]
fn flat_search_finds_one_record_per_short_class() {
    let range = WindingRange::cube(2, 2).unwrap();
    let rep = search_closed_geodesics(
        &fixtures::flat(2),
        1.1,
        &range,
        3,
        11,
        32,
        &SolverOptions::default(),
    )
    .unwrap();
    assert_eq!(rep.classes.len(), 8);
    assert_eq!(
        rep.records.len(),
        8,
        "{:?}",
        rep.records.iter().map(|r| &r.winding).collect::<Vec<_>>()
    );
    for r in &rep.records {
        let w2: i64 = r.winding.iter().map(|c| c * c).sum();
        assert!((r.energy - 0.5 * w2 as f64).abs() < 1e-9);
        assert_eq!(r.degeneracy, Verdict::Degenerate);
        assert!(r.residual <= 1e-10);
    }
    assert!(rep.records.windows(2).all(|p| p[0].energy <= p[1].energy));
    // Each line is its own image unless a reversed class landed on the same height.
    assert!((4..=8).contains(&rep.image_groups.len()));
}

#[test]
fn hill_search_finds_both_axes() {
    let range = WindingRange::explicit(vec![vec![1, 0], vec![-1, 0]]).unwrap();
    let rep = search_closed_geodesics(
        &fixtures::hill(0.1),
        0.6,
        &range,
        6,
        3,
        64,
        &SolverOptions::default(),
    )
    .unwrap();
    let mut heights: Vec<f64> = rep
        .records
        .iter()
        .map(|r| {
            let y = r.geodesic.points()[0][1];
            y - y.floor()
        })
        .collect();
    heights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(rep.image_groups.len(), 2, "{heights:?}");
    assert_eq!(rep.records.len(), 4);
    for r in &rep.records {
        assert!((r.energy - 0.5).abs() < 1e-9);
        assert_eq!(r.degeneracy, Verdict::Nondegenerate);
        let y = r.geodesic.points()[0][1];
        let frac = y - y.round();
        let half = y - y.floor() - 0.5;
        assert!(frac.abs() < 1e-8 || half.abs() < 1e-8);
    }
}

#[test]
fn search_is_reproducible() {
    let range = WindingRange::explicit(vec![vec![1, 0]]).unwrap();
    let run = || {
        search_closed_geodesics(
            &fixtures::hill(0.1),
            0.6,
            &range,
            4,
            42,
            32,
            &SolverOptions::default(),
        )
        .unwrap()
        .records
        .iter()
        .map(|r| r.geodesic.points().to_vec())
        .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn lorentz_diagonal_is_lightlike_and_degenerate() {
    let g = fixtures::flat_lorentz();
    let seed = Loop::from_fn(64, vec![1, 1], |t| vec![t + 0.02 * (TAU * t).sin(), t]).unwrap();
    let rec = find_closed_geodesic(&g, &seed, &SolverOptions::default()).unwrap();
    assert_eq!(rec.causal_label, CausalLabel::Lightlike);
    assert!(rec.causal_value.abs() < 1e-9);
    assert!((rec.energy - 1.0).abs() < 1e-9);
    assert_eq!(rec.degeneracy, Verdict::Degenerate);
}

#[test]
fn newton_tail_is_quadratic_on_hill_axis() {
    let g = fixtures::hill(0.1);
    let seed = Loop::from_fn(64, vec![1, 0], |t| vec![t, 0.05 * (TAU * t).sin()]).unwrap();
    let rec = find_closed_geodesic(&g, &seed, &SolverOptions::default()).unwrap();
    // Steps that end below the tolerance are dominated by rounding.
    let h: Vec<f64> = rec
        .newton_history
        .iter()
        .copied()
        .filter(|r| *r > 1e-10)
        .collect();
    assert!(h.len() >= 3, "{h:?}");
    let n = h.len();
    let order = (h[n - 1] / h[n - 2]).ln() / (h[n - 2] / h[n - 3]).ln();
    assert!(order >= 1.8, "history {h:?} order {order}");
}

#[test]
fn resolving_a_converged_record_is_idempotent() {
    let g = fixtures::hill(0.1);
    let seed = Loop::from_fn(64, vec![1, 0], |t| vec![t, 0.5 + 0.05 * (TAU * t).cos()]).unwrap();
    let opts = SolverOptions::default();
    let rec = find_closed_geodesic(&g, &seed, &opts).unwrap();
    let again = find_closed_geodesic(&g, &rec.geodesic, &opts).unwrap();
    for (a, b) in rec.geodesic.points().iter().zip(again.geodesic.points()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-10);
        }
    }
}
