use bumpy_core::fixtures;
use bumpy_core::geometry::CausalLabel;
use bumpy_core::loopspace::{action, Loop};
use bumpy_core::perturbation::{
    break_degeneracy, build_bump_tensor, periodic_jacobi_fields, transversality_integral,
    BumpTarget, PerturbationTensor,
};
use bumpy_core::solver::{find_closed_geodesic, SolverOptions, Verdict};

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn action_response_is_first_order_in_h() {
    // Richardson extrapolation of (f(g + s h) − f(g)) / s towards s = 0.
    let g = fixtures::hill(0.1);
    let rec = find_closed_geodesic(&g, &Loop::line(64, &[0.0, 0.5], vec![1, 0]), &opts()).unwrap();
    let mut h = PerturbationTensor::zero(2);
    h.field.add_term(0, 0, vec![0, 1], 0.7, 0.2);
    h.field.add_term(0, 1, vec![1, 1], -0.3, 0.4);
    h.field.add_term(1, 1, vec![2, 0], 0.5, 0.0);
    let l = &rec.geodesic;
    let f0 = action(&g, l);
    let q = |s: f64| (action(&g.combine(1.0, &h.field, s), l) - f0) / s;
    let s = 1e-3;
    let extrapolated = 2.0 * q(s / 2.0) - q(s);
    let vel = l.velocities();
    let half: f64 = l
        .points()
        .iter()
        .zip(&vel)
        .map(|(p, v)| 0.5 * h.field.inner(p, &v[..2], &v[..2]))
        .sum::<f64>()
        / l.n_samples() as f64;
    assert!(
        ((extrapolated - half) / half).abs() < 1e-4,
        "{extrapolated} vs {half}"
    );
}

#[test]
fn zero_tensor_has_zero_transversality() {
    let g = fixtures::flat(2);
    let rec = find_closed_geodesic(&g, &Loop::line(64, &[0.0, 0.3], vec![1, 0]), &opts()).unwrap();
    let fields = periodic_jacobi_fields(&g, &rec, 1e-6, 1e-12).unwrap();
    assert_eq!(fields.len(), 1);
    let t = transversality_integral(&g, &rec, &fields[0], &PerturbationTensor::zero(2)).unwrap();
    assert_eq!(t, 0.0);
}

#[test]
fn bump_integral_tracks_the_target() {
    let g = fixtures::flat(2);
    let rec = find_closed_geodesic(&g, &Loop::line(64, &[0.0, 0.3], vec![1, 0]), &opts()).unwrap();
    let jac = &periodic_jacobi_fields(&g, &rec, 1e-6, 1e-12).unwrap()[0];
    for integral in [-2.0, 0.25, 1.0, 3.0] {
        let target = BumpTarget {
            form: vec![1.0, 0.0, 0.0, 0.0],
            integral,
        };
        let h = build_bump_tensor(&rec, jac, [0.2, 0.4], &target).unwrap();
        let t = transversality_integral(&g, &rec, jac, &h).unwrap();
        assert!((t - 0.5 * integral).abs() < 1e-8, "{t}");
    }
}

#[test]
fn lightlike_flat_diagonal_is_pushed_off_the_cone() {
    let g = fixtures::flat_lorentz();
    let rec = find_closed_geodesic(&g, &Loop::line(64, &[0.0, 0.0], vec![1, 1]), &opts()).unwrap();
    assert_eq!(rec.causal_label, CausalLabel::Lightlike);
    assert_eq!(rec.degeneracy, Verdict::Degenerate);
    let out = break_degeneracy(&g, &rec, 3, 50, 1e-2, &opts()).unwrap();
    assert_ne!(out.record.causal_label, CausalLabel::Lightlike);
    assert!(out.record.is_nondegenerate());
    assert_eq!(out.iterate_verdict, Verdict::Nondegenerate);
    assert!(out.perturbations >= 2);
}
