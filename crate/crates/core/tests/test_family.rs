use tm_extremal::bounds::{build_test_function, test_function_mesh, verify_exceeds, BoundOptions};
use tm_extremal::green::solve_green;
use tm_extremal::mesh::DomainSpec;
use tm_extremal::spectral::FeSpace;

const LADDER: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[test]
fn norm_deviation_shrinks_along_ladder() {
    let r = verify_exceeds(&DomainSpec::unit_disk(), &BoundOptions::default(), 0.5, 0.0, None, &LADDER).unwrap();
    let dev: Vec<f64> = r.rows.iter().map(|row| (row.norm - 1.0).abs()).collect();
    assert!(dev.windows(2).all(|w| w[1] <= w[0]), "{dev:?}");
    assert!(dev.iter().all(|&d| d < 5e-3), "{dev:?}");
    assert!(r.rows.iter().all(|row| row.continuity_mismatch < 1e-12));
}

#[test]
fn order_term_stays_bounded() {
    let spec = DomainSpec::unit_disk();
    let opts = BoundOptions::default();
    let mut ratios = Vec::new();
    for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
        let space = FeSpace::new(test_function_mesh(&spec, &opts, eps, 0.5).unwrap());
        let g = solve_green(&space, 0.0, None).unwrap();
        let tf = build_test_function(&space, &g, 0.5, eps).unwrap();
        assert!(tf.c2 > 0.0 && tf.c2_leading > 0.0);
        ratios.push(tf.order_term_ratio);
    }
    let first = ratios[0].abs().max(1.0);
    assert!(ratios.iter().all(|r| r.is_finite() && r.abs() <= 10.0 * first), "{ratios:?}");
}

#[test]
fn excess_is_stable_under_refinement() {
    let spec = DomainSpec::unit_disk();
    let coarse = verify_exceeds(&spec, &BoundOptions::default(), 0.5, 0.0, None, &LADDER).unwrap();
    let fine = verify_exceeds(&spec, &BoundOptions { h: 1.0 / 48.0, ..Default::default() }, 0.5, 0.0, None, &LADDER).unwrap();
    for (a, b) in coarse.rows.iter().zip(&fine.rows) {
        assert!(a.excess > 0.0 && b.excess > 0.0);
        assert!((a.excess - b.excess).abs() <= a.error_bar + b.error_bar, "eps {}: {} vs {}", a.eps, a.excess, b.excess);
    }
}

#[test]
fn evaluated_member_has_unit_norm() {
    let spec = DomainSpec::unit_disk();
    let space = FeSpace::new(test_function_mesh(&spec, &BoundOptions::default(), 1e-3, 0.5).unwrap());
    let g = solve_green(&space, 0.0, None).unwrap();
    let tf = build_test_function(&space, &g, 0.5, 1e-3).unwrap();
    let u: Vec<f64> = space.mesh.restrict(&tf.nodal).iter().map(|v| v / tf.norm).collect();
    assert!((space.norm_1alpha(&u, 0.0).unwrap() - 1.0).abs() < 1e-12);
}
