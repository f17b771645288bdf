use bumpy_core::fixtures;
use bumpy_core::flow::geodesic::integrate_geodesic;
use bumpy_core::flow::monodromy::monodromy;
use bumpy_core::flow::poincare::linearized_poincare;
use bumpy_core::geometry::metric::metric_index;
use bumpy_core::geometry::{
    build_index_metric, AuxRiemannianMetric, Distribution, TrigPoly, ValidationGrid,
};
use bumpy_core::loopspace::{index_form, iterate_loop, Loop};
use bumpy_core::perturbation::sample_random_perturbation;
use bumpy_core::solver::{find_closed_geodesic, SolverOptions};

#[test]
fn zero_order_part_stays_bounded_as_modes_grow() {
    let g = fixtures::hill(0.1);
    let rec = find_closed_geodesic(
        &g,
        &Loop::line(256, &[0.0, 0.0], vec![1, 0]),
        &SolverOptions::default(),
    )
    .unwrap();
    let mut ratios = Vec::new();
    let mut zero = Vec::new();
    for k in [8, 16, 32, 64] {
        let f = index_form(&g, &rec.geodesic, k).unwrap();
        let z = f.zero_order_part().norm();
        let lead = f.derivative_part.symmetric_eigen().eigenvalues.amax();
        zero.push(z);
        ratios.push(z / lead);
    }
    for w in zero.windows(2) {
        assert!(w[1] <= 1.5 * w[0], "{zero:?}");
    }
    for w in ratios.windows(2) {
        assert!(w[1] < 0.6 * w[0], "{ratios:?}");
    }
}

#[test]
fn kernel_agrees_with_monodromy_as_modes_grow() {
    for (g, base) in [
        (fixtures::hill(0.1), [0.0, 0.5]),
        (fixtures::flat(2), [0.0, 0.2]),
    ] {
        let rec = find_closed_geodesic(
            &g,
            &Loop::line(256, &base, vec![1, 0]),
            &SolverOptions::default(),
        )
        .unwrap();
        for k in [32, 48] {
            let f = index_form(&g, &rec.geodesic, k).unwrap();
            assert_eq!(
                f.kernel_dim(),
                rec.monodromy.fixed_dim(1e-6),
                "{} K={k}",
                g.id
            );
        }
    }
}

#[test]
fn iterate_monodromy_is_a_power_integrated_both_ways() {
    let g = sample_random_perturbation(&fixtures::hill(0.1), 1e-3, 1, 12).unwrap();
    let rec = find_closed_geodesic(
        &g,
        &Loop::line(64, &[0.0, 0.0], vec![1, 0]),
        &SolverOptions::default(),
    )
    .unwrap();
    let m = &rec.monodromy.matrix;
    let twice = monodromy(&g, &iterate_loop(&rec.geodesic, 2).unwrap(), 1e-11).unwrap();
    // The doubled loop runs twice as fast, so covariant derivatives double.
    let mut d = nalgebra::DMatrix::identity(4, 4);
    d[(2, 2)] = 2.0;
    d[(3, 3)] = 2.0;
    let expected = &d * (m * m) * d.try_inverse().unwrap();
    assert!((twice.matrix - expected).amax() < 1e-6);
}

#[test]
fn hill_poincare_map_is_symplectic_and_elliptic() {
    let g = fixtures::hill(0.1);
    let rec = find_closed_geodesic(
        &g,
        &Loop::line(64, &[0.0, 0.0], vec![1, 0]),
        &SolverOptions::default(),
    )
    .unwrap();
    let p =
        linearized_poincare(&g, &AuxRiemannianMetric::euclidean(2), &rec.monodromy, 1e-9).unwrap();
    assert!((p.matrix.determinant() - 1.0).abs() < 1e-8);
    assert!((p.matrix.trace() - 2.0).abs() > 1e-3);
    assert!(!p.has_unit_eigenvalue(1e-6));
}

#[test]
fn trajectories_conserve_and_export() {
    let g = fixtures::hill_lorentz(0.1);
    let t = integrate_geodesic(&g, &[0.0, 0.0], &[1.0, 1.0], 1.0, 1e-10).unwrap();
    assert!(t.conserves(1e-9));
    let end = t.end_point();
    assert!((end[0] - 1.0).abs() < 1e-9 && (end[1] - 1.0).abs() < 1e-9);
    assert_eq!(t.csv_header(), ["t", "x1", "x2", "v1", "v2", "c"]);
    assert!(t
        .csv_rows()
        .iter()
        .all(|r| r.len() == 6 && r[5].abs() < 1e-9));
}

#[test]
fn index_is_constant_on_the_validation_grid() {
    let gr = AuxRiemannianMetric::euclidean(2);
    let grid = ValidationGrid::default();
    let mut y = TrigPoly::constant(2, 1.0);
    y.add_term(vec![1, 0], 0.3, 0.0);
    let frames = vec![vec![TrigPoly::constant(2, 0.4), y]];
    let delta = Distribution::new(2, frames, &grid).unwrap();
    let built = build_index_metric(&gr, &delta, &grid).unwrap();
    let noisy = sample_random_perturbation(&fixtures::flat_lorentz(), 1e-2, 2, 3).unwrap();
    for g in [built, noisy] {
        for x in grid.points(2) {
            assert_eq!(metric_index(&g, &gr, &x).unwrap(), 1, "{} at {x:?}", g.id);
        }
    }
}
