//! Smeared-delta surface quadrature.
//!
//! A surface integral over `{phi = 0}` is approximated by the volume integral
//! `sum f |grad phi| zeta(phi/eps)/eps h^3` over the grid (co-area formula).
//! The same weights also give the integration-by-parts residual checks.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{GeoError, Result};
use crate::fields::{divergence, GridSpec, ScalarField3, VectorField3};
use crate::geometry::{
    geometry_bundle, laplace_beltrami, project_tangent, tangential_divergence,
    tangential_gradient, GeometryBundle, LevelSet,
};

/// Minimum smear width in grid spacings.
pub const MIN_EPS_CELLS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelProfile {
    /// `zeta(r) = (1 + cos(pi r)) / 2` on `[-1, 1]`.
    Cosine,
}

/// Cut-off `zeta` and width `eps` of the smeared delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmearKernel {
    pub epsilon: f64,
    pub profile: KernelProfile,
}

impl SmearKernel {
    pub fn cosine(epsilon: f64) -> Self {
        Self { epsilon, profile: KernelProfile::Cosine }
    }

    /// Width `ratio * h` for the given grid.
    pub fn cells(grid: &GridSpec, ratio: f64) -> Self {
        Self::cosine(ratio * grid.spacing())
    }

    /// The default `eps = 3h`.
    pub fn default_for(grid: &GridSpec) -> Self {
        Self::cells(grid, crate::geometry::DEFAULT_EPS_CELLS)
    }

    #[inline]
    pub fn zeta(&self, r: f64) -> f64 {
        match self.profile {
            KernelProfile::Cosine => {
                if r.abs() >= 1.0 {
                    0.0
                } else {
                    0.5 * (1.0 + (PI * r).cos())
                }
            }
        }
    }

    /// Antiderivative of `zeta` normalised to run from 0 to 1.
    #[inline]
    pub fn cumulative(&self, r: f64) -> f64 {
        match self.profile {
            KernelProfile::Cosine => {
                if r <= -1.0 {
                    0.0
                } else if r >= 1.0 {
                    1.0
                } else {
                    0.5 * (r + 1.0 + (PI * r).sin() / PI)
                }
            }
        }
    }

    /// `zeta(phi/eps)/eps`.
    #[inline]
    pub fn delta(&self, phi: f64) -> f64 {
        self.zeta(phi / self.epsilon) / self.epsilon
    }

    /// `int t (1 - H(t) - [t < 0]) dt` over the real line, divided by
    /// `eps^2`, where `H` is [`SmearKernel::cumulative`].
    pub fn heaviside_moment(&self) -> f64 {
        match self.profile {
            KernelProfile::Cosine => 2.0 * (1.0 / 12.0 - 0.5 / (PI * PI)),
        }
    }

    fn check(&self, grid: &GridSpec) -> Result<()> {
        let min = MIN_EPS_CELLS * grid.spacing() * (1.0 - 1e-12);
        if !(self.epsilon >= min) {
            return Err(GeoError::KernelTooNarrow { epsilon: self.epsilon, min });
        }
        Ok(())
    }
}

/// Quadrature weights `|grad phi| delta_eps(phi) h^3` of one level set.
#[derive(Debug, Clone)]
pub struct SurfaceMeasure {
    weights: Vec<f64>,
    support: Vec<bool>,
}

impl SurfaceMeasure {
    pub fn new(ls: &LevelSet, kernel: &SmearKernel) -> Result<Self> {
        let grid = *ls.grid();
        kernel.check(&grid)?;
        let phi = ls.phi().data();
        if let Some(index) = (0..grid.len())
            .find(|&i| grid.on_boundary(i) && phi[i].abs() < kernel.epsilon)
        {
            return Err(GeoError::InterfaceTooCloseToBoundary { index });
        }
        let dv = grid.cell_volume();
        let weights: Vec<f64> = phi
            .par_iter()
            .zip(ls.grad_norm().data().par_iter())
            .map(|(&p, &g)| g * kernel.delta(p) * dv)
            .collect();
        let support = weights.iter().map(|&w| w != 0.0).collect();
        Ok(Self { weights, support })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Grid points where the smeared delta is nonzero.
    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn integrate(&self, density: &ScalarField3) -> f64 {
        let d = density.data();
        assert_eq!(d.len(), self.weights.len(), "density lives on a different grid");
        compensated_sum(&self.weights, |i| d[i] * self.weights[i])
    }

    /// Integral of `|density|`.
    pub fn integrate_abs(&self, density: &ScalarField3) -> f64 {
        let d = density.data();
        compensated_sum(&self.weights, |i| d[i].abs() * self.weights[i])
    }

    /// Total smeared area.
    pub fn area(&self) -> f64 {
        compensated_sum(&self.weights, |i| self.weights[i])
    }
}

const SUM_CHUNK: usize = 4096;

/// Neumaier summation over fixed-size chunks; the result does not depend on
/// the number of worker threads.
fn compensated_sum<F>(index_space: &[f64], term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let n = index_space.len();
    let partials: Vec<(f64, f64)> = (0..n.div_ceil(SUM_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Neumaier::default();
            for i in c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(n) {
                acc.add(term(i));
            }
            (acc.sum, acc.comp)
        })
        .collect();
    let mut total = Neumaier::default();
    for (s, c) in partials {
        total.add(s);
        total.add(c);
    }
    total.value()
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Plain compensated sum of a slice (used for volume integrals).
pub fn volume_sum(values: &[f64], cell_volume: f64) -> f64 {
    compensated_sum(values, |i| values[i]) * cell_volume
}

/// Smeared approximation of `int_{phi=0} density dsigma`.
pub fn surface_integral(ls: &LevelSet, density: &ScalarField3, kernel: &SmearKernel) -> Result<f64> {
    Ok(SurfaceMeasure::new(ls, kernel)?.integrate(density))
}

/// Volume of `{phi < 0}` using the smoothed Heaviside of the same kernel.
pub fn enclosed_volume(ls: &LevelSet, kernel: &SmearKernel) -> f64 {
    let inside: Vec<f64> = ls
        .phi()
        .data()
        .par_iter()
        .map(|&p| 1.0 - kernel.cumulative(p / kernel.epsilon))
        .collect();
    volume_sum(&inside, ls.grid().cell_volume())
}

/// Radius of the sphere whose smeared volume is `volume`, inverting
/// `V_eps = 4/3 pi R^3 + 8 pi m eps^2 R` with `m` the kernel moment.
pub fn sphere_radius_from_volume(volume: f64, kernel: &SmearKernel) -> f64 {
    let b = 8.0 * PI * kernel.heaviside_moment() * kernel.epsilon.powi(2);
    let f = |r: f64| 4.0 / 3.0 * PI * r.powi(3) + b * r - volume;
    let mut r = (3.0 * volume.max(0.0) / (4.0 * PI)).cbrt();
    for _ in 0..50 {
        let d = 4.0 * PI * r * r + b;
        let next = (r - f(r) / d).max(0.0);
        if (next - r).abs() < 1e-15 {
            break;
        }
        r = next;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub exact: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Empirical orders `log(e_i / e_{i+1}) / log(eps_i / eps_{i+1})` between
    /// consecutive rows; `None` where an error vanishes.
    pub fn orders(&self) -> Vec<Option<f64>> {
        self.rows
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                if a.error > 0.0 && b.error > 0.0 && a.epsilon != b.epsilon {
                    Some((a.error / b.error).ln() / (a.epsilon / b.epsilon).ln())
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Smeared integral for each width in `eps_list` against a known exact value.
pub fn convergence_study(
    ls: &LevelSet,
    density: &ScalarField3,
    eps_list: &[f64],
    exact: f64,
) -> Result<ConvergenceTable> {
    let rows = eps_list
        .iter()
        .map(|&eps| {
            let value = surface_integral(ls, density, &SmearKernel::cosine(eps))?;
            Ok(ConvergenceRow { epsilon: eps, value, error: (value - exact).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable { exact, rows })
}

/// Terms of an integration-by-parts identity and its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct IbpReport {
    pub terms: Vec<(&'static str, f64)>,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl IbpReport {
    fn new(terms: Vec<(&'static str, f64)>, lhs: f64, rhs: f64) -> Self {
        Self { terms, lhs, rhs, residual: (lhs - rhs).abs() }
    }

    /// Largest magnitude among the individual terms.
    pub fn dominant(&self) -> f64 {
        self.terms.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    /// Residual relative to [`IbpReport::dominant`], or the raw residual when
    /// every term vanishes.
    pub fn relative(&self) -> f64 {
        let d = self.dominant();
        if d > 0.0 {
            self.residual / d
        } else {
            self.residual
        }
    }
}

/// `int grad_s f . v = -int f div_s v + int H f v.n` on the smeared surface.
pub fn ibp_surface_residual(
    ls: &LevelSet,
    f: &ScalarField3,
    v: &VectorField3,
    kernel: &SmearKernel,
) -> Result<IbpReport> {
    let measure = SurfaceMeasure::new(ls, kernel)?;
    let b = geometry_bundle(ls)?;
    let grad_term = tangential_gradient(f, &b.n).dot(v);
    let div_term = f.mul(&tangential_divergence(v, &b));
    let curv_term = b.mean.mul(f).mul(&v.dot(&b.n));
    let t1 = measure.integrate(&grad_term);
    let t2 = measure.integrate(&div_term);
    let t3 = measure.integrate(&curv_term);
    Ok(IbpReport::new(
        vec![("grad_s f . v", t1), ("f div_s v", t2), ("H f v.n", t3)],
        t1,
        -t2 + t3,
    ))
}

/// `int f Delta_s g = int g Delta_s f` on the smeared surface.
pub fn ibp_laplacian_symmetry(
    ls: &LevelSet,
    f: &ScalarField3,
    g: &ScalarField3,
    kernel: &SmearKernel,
) -> Result<IbpReport> {
    let measure = SurfaceMeasure::new(ls, kernel)?;
    let b = geometry_bundle(ls)?;
    let a = measure.integrate(&f.mul(&laplace_beltrami(g, &b)));
    let c = measure.integrate(&g.mul(&laplace_beltrami(f, &b)));
    Ok(IbpReport::new(vec![("f Delta_s g", a), ("g Delta_s f", c)], a, c))
}

/// `div(n (x) n)`, the vector with components `sum_j d_j (n_i n_j)`.
pub fn div_normal_tensor(n: &VectorField3) -> VectorField3 {
    let comps: Vec<ScalarField3> = (0..3)
        .map(|i| divergence(&n.map(|v| v * v[i])))
        .collect();
    VectorField3::from_components(&comps[0], &comps[1], &comps[2])
}

/// Volume identity
/// `int_Q f div_s v = -int_Q grad_s f . v + int_Q div(n (x) n) . v f`
/// for fields vanishing on the box boundary.
pub fn ibp_volume_residual(f: &ScalarField3, v: &VectorField3, bundle: &GeometryBundle) -> IbpReport {
    let dv = f.grid().cell_volume();
    let n = &bundle.n;
    let t1 = f.mul(&tangential_divergence(v, bundle));
    let t2 = project_tangent(&crate::fields::gradient(f), n).dot(v);
    let t3 = div_normal_tensor(n).dot(v).mul(f);
    let (a, b, c) = (
        volume_sum(t1.data(), dv),
        volume_sum(t2.data(), dv),
        volume_sum(t3.data(), dv),
    );
    IbpReport::new(
        vec![("f div_s v", a), ("grad_s f . v", b), ("div(n n) . v f", c)],
        a,
        -b + c,
    )
}

/// `prod_a (1 - s_a^2)^3` with `s_a` mapping the box onto `[-1, 1]`; vanishes
/// with two derivatives on every face.
pub fn box_bump(grid: &GridSpec) -> ScalarField3 {
    let (lo, hi) = (grid.origin(), grid.upper());
    ScalarField3::from_fn(*grid, |p| {
        (0..3)
            .map(|a| {
                let c = 0.5 * (lo[a] + hi[a]);
                let half = 0.5 * (hi[a] - lo[a]);
                let s = (p[a] - c) / half;
                (1.0 - s * s).max(0.0).powi(3)
            })
            .product()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;
    use crate::shapes::{sample, AnalyticShape};

    #[test]
    fn cosine_kernel_is_normalised() {
        let k = SmearKernel::cosine(1.0);
        assert!((k.cumulative(1.0) - k.cumulative(-1.0) - 1.0).abs() < 1e-12);
        assert_eq!(k.zeta(1.0), 0.0);
        assert_eq!(k.zeta(-1.5), 0.0);
        // Midpoint rule on a fine grid agrees with the antiderivative.
        let n = 20000;
        let s: f64 = (0..n)
            .map(|i| k.zeta(-1.0 + (i as f64 + 0.5) * 2.0 / n as f64) * 2.0 / n as f64)
            .sum();
        assert!((s - 1.0).abs() < 1e-8);
        assert!((0..100).all(|i| k.zeta(-1.0 + i as f64 * 0.02) >= 0.0));
    }

    #[test]
    fn zero_density_integrates_to_zero() {
        let g = GridSpec::centered_cube(0.7, 1.0 / 32.0).unwrap();
        let ls = sample(&AnalyticShape::sphere(0.5), g).unwrap();
        let z = ScalarField3::zeros(g);
        assert_eq!(surface_integral(&ls, &z, &SmearKernel::default_for(&g)).unwrap(), 0.0);
        let t = convergence_study(&ls, &z, &[4.0 / 32.0, 3.0 / 32.0], 0.0).unwrap();
        assert!(t.rows.iter().all(|r| r.error == 0.0));
    }

    #[test]
    fn narrow_kernel_and_boundary_contact_are_rejected() {
        let g = GridSpec::centered_cube(0.6, 1.0 / 32.0).unwrap();
        let ls = sample(&AnalyticShape::sphere(0.4), g).unwrap();
        let one = ScalarField3::constant(g, 1.0);
        assert!(matches!(
            surface_integral(&ls, &one, &SmearKernel::cells(&g, 1.5)),
            Err(GeoError::KernelTooNarrow { .. })
        ));
        assert!(matches!(
            surface_integral(&ls, &one, &SmearKernel::cells(&g, 8.0)),
            Err(GeoError::InterfaceTooCloseToBoundary { .. })
        ));
    }

    #[test]
    fn integral_is_linear_in_density() {
        let g = GridSpec::centered_cube(0.75, 1.0 / 24.0).unwrap();
        let ls = sample(&AnalyticShape::sphere(0.5), g).unwrap();
        let k = SmearKernel::default_for(&g);
        let f = ScalarField3::from_fn(g, |p| p.x * p.x + p.y);
        let q = ScalarField3::from_fn(g, |p| (2.0 * p.z).cos());
        let lhs = surface_integral(&ls, &f.scaled(2.0).add(&q.scaled(-3.0)), &k).unwrap();
        let rhs = 2.0 * surface_integral(&ls, &f, &k).unwrap() - 3.0 * surface_integral(&ls, &q, &k).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn integral_is_invariant_under_joint_rescaling() {
        let g = GridSpec::centered_cube(0.75, 1.0 / 24.0).unwrap();
        let ls = sample(&AnalyticShape::sphere(0.5), g).unwrap();
        let one = ScalarField3::constant(g, 1.0);
        let k = SmearKernel::default_for(&g);
        let base = surface_integral(&ls, &one, &k).unwrap();
        for lambda in [1.5, 2.5] {
            let scaled = LevelSet::new(ls.phi().scaled(lambda), ls.band_width() * lambda).unwrap();
            let v = surface_integral(&scaled, &one, &SmearKernel::cosine(lambda * k.epsilon)).unwrap();
            assert!((v - base).abs() < 1e-10 * base);
        }
    }

    #[test]
    fn volume_of_sphere() {
        let g = GridSpec::centered_cube(0.7, 1.0 / 32.0).unwrap();
        let ls = sample(&AnalyticShape::sphere(0.5), g).unwrap();
        let v = enclosed_volume(&ls, &SmearKernel::default_for(&g));
        // The smoothed Heaviside biases the volume by 8 pi R m eps^2 with
        // m = 2 (1/12 - 1/(2 pi^2)).
        let k = SmearKernel::default_for(&g);
        let eps = 3.0 / 32.0;
        let exact = 4.0 / 3.0 * PI * 0.125;
        let bias = 8.0 * PI * 0.5 * 2.0 * (1.0 / 12.0 - 0.5 / (PI * PI)) * eps * eps;
        assert!((v - exact - bias).abs() < 5e-3 * exact, "{v} vs {exact} + {bias}");
        assert!((sphere_radius_from_volume(v, &k) - 0.5).abs() < 1e-3);
        // Moment against midpoint quadrature.
        let n = 200000;
        let m: f64 = (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) / n as f64;
                2.0 * t * (1.0 - k.cumulative(t)) / n as f64
            })
            .sum();
        assert!((m - k.heaviside_moment()).abs() < 1e-9);
    }

    #[test]
    fn ibp_with_zero_field_vanishes() {
        let g = GridSpec::centered_cube(0.75, 1.0 / 24.0).unwrap();
        let ls = sample(&AnalyticShape::sphere(0.5), g).unwrap();
        let f = ScalarField3::from_fn(g, |p| p.x);
        let zero = VectorField3::zeros(g);
        let k = SmearKernel::default_for(&g);
        assert_eq!(ibp_surface_residual(&ls, &f, &zero, &k).unwrap().residual, 0.0);
        let r = ibp_laplacian_symmetry(&ls, &f, &f, &k).unwrap();
        assert_eq!(r.residual, 0.0);
        let b = geometry_bundle(&ls).unwrap();
        assert_eq!(ibp_volume_residual(&f, &zero, &b).residual, 0.0);
    }

    #[test]
    fn box_bump_vanishes_on_faces() {
        let g = GridSpec::centered_cube(0.5, 0.05).unwrap();
        let b = box_bump(&g);
        for i in 0..g.len() {
            if g.on_boundary(i) {
                assert!(b.data()[i].abs() < 1e-14);
            }
        }
        let c = g.dims()[0] / 2;
        assert!((b.at(c, c, c) - 1.0).abs() < 1e-12);
    }
}
