use geoflow::dynamics::{interface_shift, redistance, transport_step, VelocitySpec};
use geoflow::fields::trace_cofactor;
use geoflow::functionals::{
    density_partials_error, matrix_gradient, matrix_gradient_fd, tension_homogeneity, Bipolynomial,
    CurvatureDensity, MetricTension, Tension,
};
use geoflow::geometry::default_band_width;
use geoflow::quadrature::surface_integral;
use geoflow::shapes::sample;
use geoflow::{AnalyticShape, GridSpec, LevelSet, Mat3, ScalarField3, SmearKernel, Vec3, VectorField3};
use proptest::prelude::*;

fn small_sphere() -> LevelSet {
    let g = GridSpec::centered_cube(0.75, 1.0 / 16.0).unwrap();
    sample(&AnalyticShape::sphere(0.4), g).unwrap()
}

fn unit_vectors() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-2)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_cumulative_is_monotone_and_normalized(eps in 0.01..0.5f64, a in -1.5..1.5f64, b in -1.5..1.5f64) {
        let k = SmearKernel::cosine(eps);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(k.cumulative(lo) <= k.cumulative(hi) + 1e-15);
        prop_assert!((k.cumulative(a) + k.cumulative(-a) - 1.0).abs() < 1e-14);
        prop_assert_eq!(k.cumulative(-1.0), 0.0);
        prop_assert_eq!(k.cumulative(1.0), 1.0);
        // delta is the phi-derivative of the cumulative at scale eps.
        let phi = 0.5 * a * eps;
        let d = 1e-6 * eps;
        let fd = (k.cumulative((phi + d) / eps) - k.cumulative((phi - d) / eps)) / (2.0 * d);
        prop_assert!((fd - k.delta(phi)).abs() < 1e-5 / eps);
    }

    #[test]
    fn smeared_integral_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let ls = small_sphere();
        let g = *ls.grid();
        let k = SmearKernel::default_for(&g);
        let f = ScalarField3::from_fn(g, |p| p.x * p.y + 1.0);
        let q = ScalarField3::from_fn(g, |p| p.z.sin());
        let lhs = surface_integral(&ls, &f.scaled(a).add(&q.scaled(b)), &k).unwrap();
        let rhs = a * surface_integral(&ls, &f, &k).unwrap() + b * surface_integral(&ls, &q, &k).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn metric_tension_is_one_homogeneous(m1 in 0.2..5.0f64, m2 in 0.2..5.0f64, m3 in 0.2..5.0f64, n in unit_vectors()) {
        let t = MetricTension::diagonal(m1, m2, m3).unwrap();
        let (homog, euler) = tension_homogeneity(&t, &[n]);
        prop_assert!(homog < 1e-12 && euler < 1e-12);
        prop_assert!((t.value(&(n * 2.5)) - 2.5 * t.value(&n)).abs() < 1e-12);
        prop_assert!(t.value(&n) > 0.0);
    }

    #[test]
    fn density_partials_match_differences(c in prop::collection::vec(-2.0..2.0f64, 3), h in -5.0..5.0f64, g in -5.0..5.0f64) {
        let f = Bipolynomial::new(vec![(c[0], 2, 0), (c[1], 1, 1), (c[2], 0, 2)]);
        prop_assert!(density_partials_error(&f, &[(h, g)]) < 1e-5);
    }

    #[test]
    fn matrix_gradient_matches_differences(v in prop::collection::vec(-1.0..1.0f64, 9)) {
        let a = Mat3::from_row_slice(&v);
        let f = Bipolynomial::new(vec![(1.0, 2, 0), (0.5, 0, 1), (0.25, 1, 1)]);
        let exact = matrix_gradient(&f, &a);
        let fd = matrix_gradient_fd(&f, &a, 1e-6);
        prop_assert!((exact - fd).amax() < 1e-6, "{exact} vs {fd}");
        // Trace and cofactor trace are the invariants that F sees.
        prop_assert!((f.value(a.trace(), trace_cofactor(&a)) - f.value(a.transpose().trace(), trace_cofactor(&a.transpose()))).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn constant_vector_translates_a_plane(dir in unit_vectors(), speed in 0.1..1.0f64) {
        let h = 1.0 / 16.0;
        let g = GridSpec::centered_cube(0.5, h).unwrap();
        let normal = Vec3::new(0.3, 0.4, 0.866).normalize();
        let phi = ScalarField3::from_fn(g, |p| p.dot(&normal) - 0.05);
        let ls = LevelSet::new(phi, default_band_width(h)).unwrap();
        let u = dir * speed;
        let vel = VelocitySpec::FullVector(VectorField3::from_fn(g, |_| u));
        let dt = 0.5 * h / (u.x.abs() + u.y.abs() + u.z.abs());
        let moved = transport_step(&ls, &vel, dt).unwrap();
        let expected = ScalarField3::from_fn(g, |p| (p - u * dt).dot(&normal) - 0.05);
        // First-order upwinding is exact on linear data.
        prop_assert!(moved.phi().sub(&expected).max_abs() < 1e-12);
    }

    #[test]
    fn redistance_ignores_positive_rescaling(scale in 0.5..4.0f64) {
        let h = 1.0 / 24.0;
        let g = GridSpec::centered_cube(0.75, h).unwrap();
        let phi = ScalarField3::from_fn(g, |p| scale * (p.norm() - 0.45));
        let ls = LevelSet::new(phi, default_band_width(h)).unwrap();
        let r = redistance(&ls).unwrap();
        prop_assert!(r.is_distance());
        prop_assert!(interface_shift(ls.phi(), r.phi()) < 0.05 * h);
        let exact = ScalarField3::from_fn(g, |p| p.norm() - 0.45);
        prop_assert!(r.phi().sub(&exact).max_abs_where(r.band()) < 1e-2 * h);
    }
}

#[test]
fn interface_shift_of_identical_fields_is_zero() {
    let ls = small_sphere();
    assert_eq!(interface_shift(ls.phi(), ls.phi()), 0.0);
}
