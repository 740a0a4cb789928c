//! Surface energies and their shape gradients.
//!
//! A shape gradient is the density `d` with `dJ = int d (u.n) dsigma` for a
//! surface moved by the velocity `u`. Densities are evaluated on the whole
//! band so that the smeared quadrature can consume them directly.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{GeoError, Result};
use crate::fields::{gradient, trace_cofactor, Mat3, MatrixField3, ScalarField3, Vec3, VectorField3};
use crate::geometry::{
    geometry_bundle, laplace_beltrami, project_tangent, tangential_divergence,
    tangential_gradient, tangential_vector_gradient, GeometryBundle, LevelSet,
};
use crate::quadrature::{SmearKernel, SurfaceMeasure};

/// Positively 1-homogeneous surface tension `f(m)` with its gradient.
pub trait Tension: fmt::Debug + Send + Sync {
    fn value(&self, m: &Vec3) -> f64;
    fn gradient(&self, m: &Vec3) -> Vec3;
}

/// `f(m) = sqrt(m . M m)` for a symmetric positive definite `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTension {
    pub metric: Mat3,
}

impl MetricTension {
    pub fn euclidean() -> Self {
        Self { metric: Mat3::identity() }
    }

    pub fn diagonal(m1: f64, m2: f64, m3: f64) -> Result<Self> {
        if !(m1 > 0.0 && m2 > 0.0 && m3 > 0.0) || ![m1, m2, m3].iter().all(|v| v.is_finite()) {
            return Err(GeoError::InvalidParameter(format!(
                "diagonal tension needs positive finite entries, got ({m1}, {m2}, {m3})"
            )));
        }
        Ok(Self { metric: Mat3::from_diagonal(&Vec3::new(m1, m2, m3)) })
    }
}

impl Tension for MetricTension {
    fn value(&self, m: &Vec3) -> f64 {
        m.dot(&(self.metric * m)).max(0.0).sqrt()
    }

    fn gradient(&self, m: &Vec3) -> Vec3 {
        let f = self.value(m);
        if f == 0.0 {
            Vec3::zeros()
        } else {
            self.metric * m / f
        }
    }
}

/// `f(m) = a . m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTension {
    pub a: Vec3,
}

impl Tension for LinearTension {
    fn value(&self, m: &Vec3) -> f64 {
        self.a.dot(m)
    }

    fn gradient(&self, _m: &Vec3) -> Vec3 {
        self.a
    }
}

/// Energy density `A(H)` of the mean curvature.
pub trait CurvatureProfile: fmt::Debug + Send + Sync {
    fn value(&self, h: f64) -> f64;
    fn derivative(&self, h: f64) -> f64;
    fn second_derivative(&self, h: f64) -> f64;
}

/// `A(H) = sum c_k H^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    fn eval_derivative(&self, x: f64, order: u32) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(k, _)| *k as u32 >= order)
            .map(|(k, &c)| {
                let k = k as u32;
                let falling: f64 = (0..order).map(|j| (k - j) as f64).product();
                c * falling * x.powi((k - order) as i32)
            })
            .sum()
    }
}

impl CurvatureProfile for Polynomial {
    fn value(&self, h: f64) -> f64 {
        self.eval_derivative(h, 0)
    }

    fn derivative(&self, h: f64) -> f64 {
        self.eval_derivative(h, 1)
    }

    fn second_derivative(&self, h: f64) -> f64 {
        self.eval_derivative(h, 2)
    }
}

/// Energy density `F(H, G)` with its partial derivatives.
pub trait CurvatureDensity: fmt::Debug + Send + Sync {
    fn value(&self, h: f64, g: f64) -> f64;
    fn d_h(&self, h: f64, g: f64) -> f64;
    fn d_g(&self, h: f64, g: f64) -> f64;
    fn d_hh(&self, h: f64, g: f64) -> f64;
    fn d_hg(&self, h: f64, g: f64) -> f64;
    fn d_gg(&self, h: f64, g: f64) -> f64;
}

/// `F(H, G) = sum c H^i G^j` over the listed terms `(c, i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bipolynomial {
    pub terms: Vec<(f64, u32, u32)>,
}

impl Bipolynomial {
    pub fn new(terms: Vec<(f64, u32, u32)>) -> Self {
        Self { terms }
    }

    fn eval(&self, h: f64, g: f64, dh: u32, dg: u32) -> f64 {
        self.terms
            .iter()
            .filter(|&&(_, i, j)| i >= dh && j >= dg)
            .map(|&(c, i, j)| {
                let fh: f64 = (0..dh).map(|k| (i - k) as f64).product();
                let fg: f64 = (0..dg).map(|k| (j - k) as f64).product();
                c * fh * fg * h.powi((i - dh) as i32) * g.powi((j - dg) as i32)
            })
            .sum()
    }
}

impl CurvatureDensity for Bipolynomial {
    fn value(&self, h: f64, g: f64) -> f64 {
        self.eval(h, g, 0, 0)
    }
    fn d_h(&self, h: f64, g: f64) -> f64 {
        self.eval(h, g, 1, 0)
    }
    fn d_g(&self, h: f64, g: f64) -> f64 {
        self.eval(h, g, 0, 1)
    }
    fn d_hh(&self, h: f64, g: f64) -> f64 {
        self.eval(h, g, 2, 0)
    }
    fn d_hg(&self, h: f64, g: f64) -> f64 {
        self.eval(h, g, 1, 1)
    }
    fn d_gg(&self, h: f64, g: f64) -> f64 {
        self.eval(h, g, 0, 2)
    }
}

#[derive(Debug, Clone)]
pub enum FunctionalSpec {
    Area,
    Anisotropic(Arc<dyn Tension>),
    MeanCurv(Arc<dyn CurvatureProfile>),
    GaussMean(Arc<dyn CurvatureDensity>),
}

impl FunctionalSpec {
    pub fn area() -> Self {
        FunctionalSpec::Area
    }

    /// `int H^2`.
    pub fn willmore() -> Self {
        Self::mean_polynomial(vec![0.0, 0.0, 1.0])
    }

    /// `int (H - c0)^2`.
    pub fn helfrich(c0: f64) -> Self {
        Self::mean_polynomial(vec![c0 * c0, -2.0 * c0, 1.0])
    }

    pub fn mean_polynomial(coeffs: Vec<f64>) -> Self {
        FunctionalSpec::MeanCurv(Arc::new(Polynomial::new(coeffs)))
    }

    /// `int G`, a topological invariant.
    pub fn gauss() -> Self {
        Self::gauss_mean_polynomial(vec![(1.0, 0, 1)])
    }

    pub fn gauss_mean_polynomial(terms: Vec<(f64, u32, u32)>) -> Self {
        FunctionalSpec::GaussMean(Arc::new(Bipolynomial::new(terms)))
    }

    /// `int sqrt(n . diag(m) n)`.
    pub fn aniso_diag(m1: f64, m2: f64, m3: f64) -> Result<Self> {
        Ok(FunctionalSpec::Anisotropic(Arc::new(MetricTension::diagonal(m1, m2, m3)?)))
    }

    pub fn family(&self) -> &'static str {
        match self {
            FunctionalSpec::Area => "area",
            FunctionalSpec::Anisotropic(_) => "anisotropic",
            FunctionalSpec::MeanCurv(_) => "mean-curvature",
            FunctionalSpec::GaussMean(_) => "gauss-mean",
        }
    }

    /// Highest spatial derivative order of the gradient density (2 or 4) and a
    /// bound on its leading coefficient over the given curvature values.
    pub fn stiffness(&self, bundle: &GeometryBundle) -> (u32, f64) {
        let band = &bundle.trusted;
        let over = |f: &(dyn Fn(f64, f64) -> f64 + Sync)| -> f64 {
            bundle
                .mean
                .data()
                .par_iter()
                .zip(bundle.gauss.data().par_iter())
                .zip(band.par_iter())
                .filter(|(_, &t)| t)
                .map(|((&h, &g), _)| f(h, g).abs())
                .reduce(|| 0.0, f64::max)
        };
        match self {
            FunctionalSpec::Area => (2, 1.0),
            FunctionalSpec::Anisotropic(t) => {
                // Frobenius bound on the Hessian of f, by differences of its gradient.
                let step = 1e-5;
                let s = bundle
                    .n
                    .data()
                    .iter()
                    .zip(band)
                    .filter(|(_, &b)| b)
                    .map(|(n, _)| {
                        let mut hess = Mat3::zeros();
                        for j in 0..3 {
                            let mut e = Vec3::zeros();
                            e[j] = step;
                            let col = (t.gradient(&(n + e)) - t.gradient(&(n - e))) / (2.0 * step);
                            hess.set_column(j, &col);
                        }
                        hess.norm()
                    })
                    .fold(1e-12, f64::max);
                (2, s)
            }
            FunctionalSpec::MeanCurv(a) => {
                let c = over(&|h, _| a.second_derivative(h));
                if c > 0.0 {
                    (4, c)
                } else {
                    (2, over(&|h, _| a.value(h)).max(over(&|h, _| a.derivative(h) * h)).max(1e-12))
                }
            }
            FunctionalSpec::GaussMean(f) => {
                let c = over(&|h, g| f.d_hh(h, g).abs() + 2.0 * h.abs() * f.d_hg(h, g).abs() + h * h * f.d_gg(h, g).abs());
                if c > 0.0 {
                    (4, c)
                } else {
                    (2, over(&|h, g| f.value(h, g)).max(over(&|h, g| f.d_h(h, g) * h)).max(1e-12))
                }
            }
        }
    }
}

/// Pointwise energy density `1`, `f(n)`, `A(H)` or `F(H, G)`.
pub fn energy_density(bundle: &GeometryBundle, spec: &FunctionalSpec) -> ScalarField3 {
    let grid = *bundle.grid();
    match spec {
        FunctionalSpec::Area => ScalarField3::constant(grid, 1.0),
        FunctionalSpec::Anisotropic(t) => scalar_of_vectors(&bundle.n, |n| t.value(n)),
        FunctionalSpec::MeanCurv(a) => bundle.mean.map(|h| a.value(h)),
        FunctionalSpec::GaussMean(f) => bundle.mean.zip_map(&bundle.gauss, |h, g| f.value(h, g)),
    }
}

fn scalar_of_vectors<F>(v: &VectorField3, f: F) -> ScalarField3
where
    F: Fn(&Vec3) -> f64 + Sync,
{
    let comps: Vec<f64> = v.data().par_iter().map(&f).collect();
    ScalarField3::new(*v.grid(), comps).expect("finite density")
}

/// Smeared energy `J_eps(phi)`.
pub fn energy(ls: &LevelSet, spec: &FunctionalSpec, kernel: &SmearKernel) -> Result<f64> {
    let measure = SurfaceMeasure::new(ls, kernel)?;
    let bundle = geometry_bundle(ls)?;
    Ok(measure.integrate(&energy_density(&bundle, spec)))
}

/// A shape-gradient density with an optional equivalent form of the same
/// quantity.
#[derive(Debug, Clone)]
pub struct ShapeGradient {
    pub field: ScalarField3,
    pub requires_distance: bool,
    pub trusted: Vec<bool>,
    /// Anisotropic: the `f(n) H + div_s(P grad f(n))` form.
    /// Gauss-mean: the form carrying `+F_G grad G . n`.
    pub alternate: Option<ScalarField3>,
}

impl ShapeGradient {
    /// Max band discrepancy between the two forms, if both exist.
    pub fn equivalence_gap(&self) -> Option<f64> {
        self.alternate
            .as_ref()
            .map(|alt| self.field.sub(alt).max_abs_where(&self.trusted))
    }

    pub fn max_abs(&self) -> f64 {
        self.field.max_abs_where(&self.trusted)
    }
}

/// Density `H`.
pub fn grad_area(bundle: &GeometryBundle) -> ShapeGradient {
    ShapeGradient {
        field: bundle.mean.clone(),
        requires_distance: false,
        trusted: bundle.trusted.clone(),
        alternate: None,
    }
}

/// Density `div_s(grad f(n))`, with `f(n) H + div_s(P grad f(n))` as the
/// alternate form.
pub fn grad_anisotropic(bundle: &GeometryBundle, spec: &FunctionalSpec) -> Result<ShapeGradient> {
    let FunctionalSpec::Anisotropic(t) = spec else {
        return Err(GeoError::WrongFunctional { expected: "anisotropic" });
    };
    let w = bundle.n.map(|n| t.gradient(n));
    let field = tangential_divergence(&w, bundle);
    let fn_ = scalar_of_vectors(&bundle.n, |n| t.value(n));
    let alt = fn_
        .mul(&bundle.mean)
        .add(&tangential_divergence(&project_tangent(&w, &bundle.n), bundle));
    Ok(ShapeGradient {
        field,
        requires_distance: false,
        trusted: bundle.trusted.clone(),
        alternate: Some(alt),
    })
}

/// Density `A(H) H - Delta_s A'(H) - A'(H)(H^2 - 2G)`.
pub fn grad_mean_curvature(bundle: &GeometryBundle, spec: &FunctionalSpec) -> Result<ShapeGradient> {
    let FunctionalSpec::MeanCurv(a) = spec else {
        return Err(GeoError::WrongFunctional { expected: "mean-curvature" });
    };
    let h = &bundle.mean;
    let ap = h.map(|x| a.derivative(x));
    let lap = laplace_beltrami(&ap, bundle);
    let data: Vec<f64> = (0..h.data().len())
        .into_par_iter()
        .map(|i| {
            let (hv, gv) = (h.data()[i], bundle.gauss.data()[i]);
            a.value(hv) * hv - lap.data()[i] - ap.data()[i] * (hv * hv - 2.0 * gv)
        })
        .collect();
    Ok(ShapeGradient {
        field: ScalarField3::new(*h.grid(), data)?,
        requires_distance: false,
        trusted: bundle.trusted.clone(),
        alternate: None,
    })
}

/// `alpha = F_H + H F_G` and `beta = -F_G`, the coefficients of
/// `[grad g](A) = alpha I + beta A^T` for `g(A) = F(Tr A, Tr Cof A)`.
#[derive(Debug, Clone)]
pub struct GaussMeanCoefficients {
    pub alpha: ScalarField3,
    pub beta: ScalarField3,
}

pub fn gauss_mean_coefficients(bundle: &GeometryBundle, f: &dyn CurvatureDensity) -> GaussMeanCoefficients {
    let (h, g) = (&bundle.mean, &bundle.gauss);
    GaussMeanCoefficients {
        alpha: h.zip_map(g, |h, g| f.d_h(h, g) + h * f.d_g(h, g)),
        beta: h.zip_map(g, |h, g| -f.d_g(h, g)),
    }
}

/// `alpha I + beta A^T` at a single matrix.
pub fn matrix_gradient(f: &dyn CurvatureDensity, a: &Mat3) -> Mat3 {
    let (h, g) = (a.trace(), trace_cofactor(a));
    let alpha = f.d_h(h, g) + h * f.d_g(h, g);
    Mat3::identity() * alpha - a.transpose() * f.d_g(h, g)
}

/// Central differences of `g(A) = F(Tr A, Tr Cof A)` in every entry of `A`.
pub fn matrix_gradient_fd(f: &dyn CurvatureDensity, a: &Mat3, step: f64) -> Mat3 {
    let g = |m: &Mat3| f.value(m.trace(), trace_cofactor(m));
    let mut out = Mat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut p = *a;
            let mut q = *a;
            p[(i, j)] += step;
            q[(i, j)] -= step;
            out[(i, j)] = (g(&p) - g(&q)) / (2.0 * step);
        }
    }
    out
}

/// Density of a curvature energy `F(H, G)` on a distance level set.
///
/// Main form:
/// `F H - F_H (H^2 - 2G) - Delta_s F_H - F_G G H - H Delta_s F_G
///  + [grad_s n] : grad_s(grad_s F_G)`.
/// The alternate form replaces `-F_G G H` by `+F_G grad G . n`.
pub fn grad_gauss_mean(
    bundle: &GeometryBundle,
    spec: &FunctionalSpec,
    ls: &LevelSet,
) -> Result<ShapeGradient> {
    let FunctionalSpec::GaussMean(f) = spec else {
        return Err(GeoError::WrongFunctional { expected: "gauss-mean" });
    };
    ls.require_distance()?;
    let (h, g) = (&bundle.mean, &bundle.gauss);
    let n = &bundle.n;
    let fh = h.zip_map(g, |h, g| f.d_h(h, g));
    let fg = h.zip_map(g, |h, g| f.d_g(h, g));
    let lap_fh = laplace_beltrami(&fh, bundle);
    let lap_fg = laplace_beltrami(&fg, bundle);
    let hess_fg = tangential_vector_gradient(&tangential_gradient(&fg, n), n);
    let contraction = contract(&bundle.tangential_shape_operator(), &hess_fg);
    let dg_n = gradient(g).dot(n);

    let len = h.data().len();
    let (field, alt): (Vec<f64>, Vec<f64>) = (0..len)
        .into_par_iter()
        .map(|i| {
            let (hv, gv) = (h.data()[i], g.data()[i]);
            let fgv = fg.data()[i];
            let common = f.value(hv, gv) * hv
                - fh.data()[i] * (hv * hv - 2.0 * gv)
                - lap_fh.data()[i]
                - hv * lap_fg.data()[i]
                + contraction.data()[i];
            (common - fgv * gv * hv, common + fgv * dg_n.data()[i])
        })
        .unzip();
    let grid = *h.grid();
    Ok(ShapeGradient {
        field: ScalarField3::new(grid, field)?,
        requires_distance: true,
        trusted: bundle.trusted.clone(),
        alternate: Some(ScalarField3::new(grid, alt)?),
    })
}

/// Frobenius contraction `A : B` per point.
fn contract(a: &MatrixField3, b: &MatrixField3) -> ScalarField3 {
    let data: Vec<f64> = a
        .data()
        .par_iter()
        .zip(b.data().par_iter())
        .map(|(x, y)| x.component_mul(y).sum())
        .collect();
    ScalarField3::new(*a.grid(), data).expect("finite contraction")
}

/// Shape gradient of any catalog functional.
pub fn shape_gradient(ls: &LevelSet, spec: &FunctionalSpec) -> Result<ShapeGradient> {
    let bundle = geometry_bundle(ls)?;
    shape_gradient_with(ls, &bundle, spec)
}

pub fn shape_gradient_with(
    ls: &LevelSet,
    bundle: &GeometryBundle,
    spec: &FunctionalSpec,
) -> Result<ShapeGradient> {
    match spec {
        FunctionalSpec::Area => Ok(grad_area(bundle)),
        FunctionalSpec::Anisotropic(_) => grad_anisotropic(bundle, spec),
        FunctionalSpec::MeanCurv(_) => grad_mean_curvature(bundle, spec),
        FunctionalSpec::GaussMean(_) => grad_gauss_mean(bundle, spec, ls),
    }
}

/// `int |grad G . n + G H| / int (|G H| + 1)` on a distance level set.
pub fn gauss_bonnet_normal_derivative_check(ls: &LevelSet, kernel: &SmearKernel) -> Result<f64> {
    ls.require_distance()?;
    let measure = SurfaceMeasure::new(ls, kernel)?;
    let b = geometry_bundle(ls)?;
    let gh = b.gauss.mul(&b.mean);
    let residual = gradient(&b.gauss).dot(&b.n).add(&gh);
    let scale = measure.integrate(&gh.map(|v| v.abs() + 1.0));
    Ok(measure.integrate_abs(&residual) / scale)
}

/// Worst homogeneity `|f(t m) - t f(m)|` and Euler `|grad f(m) . m - f(m)|`
/// errors over unit vectors `m` and `t` in `{0.5, 2}`.
pub fn tension_homogeneity(t: &dyn Tension, samples: &[Vec3]) -> (f64, f64) {
    let mut homog = 0.0_f64;
    let mut euler = 0.0_f64;
    for m in samples {
        let m = m.normalize();
        for s in [0.5, 2.0] {
            homog = homog.max((t.value(&(m * s)) - s * t.value(&m)).abs());
        }
        euler = euler.max((t.gradient(&m).dot(&m) - t.value(&m)).abs());
    }
    (homog, euler)
}

/// Worst relative error of `F_H`, `F_G` against central differences of `F`.
pub fn density_partials_error(f: &dyn CurvatureDensity, samples: &[(f64, f64)]) -> f64 {
    let mut worst = 0.0_f64;
    for &(h, g) in samples {
        let sh = 1e-5 * h.abs().max(1.0);
        let sg = 1e-5 * g.abs().max(1.0);
        let fd_h = (f.value(h + sh, g) - f.value(h - sh, g)) / (2.0 * sh);
        let fd_g = (f.value(h, g + sg) - f.value(h, g - sg)) / (2.0 * sg);
        let rel = |exact: f64, fd: f64| (exact - fd).abs() / exact.abs().max(1.0);
        worst = worst.max(rel(f.d_h(h, g), fd_h)).max(rel(f.d_g(h, g), fd_g));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;
    use crate::shapes::{sample, AnalyticShape};
    use std::f64::consts::PI;

    fn sphere(h: f64) -> LevelSet {
        let g = GridSpec::centered_cube(0.75, h).unwrap();
        sample(&AnalyticShape::sphere(0.5), g).unwrap()
    }

    fn unit_samples() -> Vec<Vec3> {
        AnalyticShape::sphere(1.0).surface_samples(50).iter().map(|s| s.point).collect()
    }

    #[test]
    fn polynomial_derivatives() {
        let p = Polynomial::new(vec![1.0, -2.0, 3.0, 0.5]);
        let x = 1.7;
        let fd = (p.value(x + 1e-6) - p.value(x - 1e-6)) / 2e-6;
        assert!((p.derivative(x) - fd).abs() < 1e-6);
        let fd2 = (p.derivative(x + 1e-6) - p.derivative(x - 1e-6)) / 2e-6;
        assert!((p.second_derivative(x) - fd2).abs() < 1e-6);
        assert_eq!(Polynomial::new(vec![]).value(3.0), 0.0);
    }

    #[test]
    fn tensions_are_homogeneous() {
        let s = unit_samples();
        let tensions: Vec<Box<dyn Tension>> = vec![
            Box::new(MetricTension::euclidean()),
            Box::new(MetricTension::diagonal(1.0, 1.0, 4.0).unwrap()),
            Box::new(LinearTension { a: Vec3::new(0.3, -1.0, 2.0) }),
        ];
        for t in &tensions {
            let (homog, euler) = tension_homogeneity(t.as_ref(), &s);
            assert!(homog < 1e-10 && euler < 1e-8);
        }
        assert!(MetricTension::diagonal(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn density_partials_match_differences() {
        let samples = [(4.0, 4.0), (-1.3, 0.2), (6.4, 7.1), (0.0, -2.0)];
        for f in [
            Bipolynomial::new(vec![(1.0, 2, 0), (1.0, 0, 1)]),
            Bipolynomial::new(vec![(0.5, 3, 1), (-2.0, 1, 2), (1.0, 0, 0)]),
        ] {
            assert!(density_partials_error(&f, &samples) < 1e-6);
        }
    }

    #[test]
    fn matrix_gradient_identity() {
        let f = Bipolynomial::new(vec![(1.0, 2, 0), (0.7, 1, 1), (-0.4, 0, 2), (1.0, 0, 1)]);
        let a = Mat3::new(1.0, 0.3, -0.2, 0.1, 2.0, 0.5, -0.7, 0.4, 0.8);
        let fd = matrix_gradient_fd(&f, &a, 1e-5);
        assert!((matrix_gradient(&f, &a) - fd).amax() < 1e-6);
    }

    #[test]
    fn wrong_family_is_rejected() {
        let ls = sphere(1.0 / 24.0);
        let b = geometry_bundle(&ls).unwrap();
        assert!(matches!(
            grad_mean_curvature(&b, &FunctionalSpec::Area),
            Err(GeoError::WrongFunctional { .. })
        ));
        assert!(matches!(
            grad_anisotropic(&b, &FunctionalSpec::willmore()),
            Err(GeoError::WrongFunctional { .. })
        ));
    }

    #[test]
    fn gauss_mean_requires_distance() {
        let g = GridSpec::centered_cube(0.75, 1.0 / 24.0).unwrap();
        let ls = sample(&AnalyticShape::ellipsoid(0.5, 0.5, 0.4), g).unwrap();
        assert!(matches!(
            shape_gradient(&ls, &FunctionalSpec::gauss()),
            Err(GeoError::NotDistanceFunction { .. })
        ));
    }

    #[test]
    fn sphere_energies() {
        let ls = sphere(1.0 / 32.0);
        let k = SmearKernel::default_for(ls.grid());
        let area = energy(&ls, &FunctionalSpec::area(), &k).unwrap();
        assert!((area - PI).abs() < 0.01 * PI);
        let iso = energy(&ls, &FunctionalSpec::aniso_diag(1.0, 1.0, 1.0).unwrap(), &k).unwrap();
        assert!((iso - area).abs() < 1e-12);
        let w = energy(&ls, &FunctionalSpec::willmore(), &k).unwrap();
        assert!((w - 16.0 * PI).abs() < 0.05 * 16.0 * PI, "{w}");
    }

    #[test]
    fn reductions_on_sphere() {
        let h = 1.0 / 32.0;
        let ls = sphere(h);
        let b = geometry_bundle(&ls).unwrap();
        let area = grad_area(&b);
        // A = 1 reduces to the area gradient.
        let one = grad_mean_curvature(&b, &FunctionalSpec::mean_polynomial(vec![1.0])).unwrap();
        assert!(one.field.sub(&area.field).max_abs() < 1e-12);
        // F(H, G) = H against A(H) = H.
        let fa = grad_mean_curvature(&b, &FunctionalSpec::mean_polynomial(vec![0.0, 1.0])).unwrap();
        let fg = grad_gauss_mean(&b, &FunctionalSpec::gauss_mean_polynomial(vec![(1.0, 1, 0)]), &ls).unwrap();
        assert!(fa.field.sub(&fg.field).max_abs_where(&b.trusted) < 1e-9);
        // Tension |m| gives H exactly up to the div_s(n) vs Tr(grad n) gap.
        let iso = grad_anisotropic(&b, &FunctionalSpec::aniso_diag(1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(iso.field.sub(&area.field).max_abs_where(&b.trusted) < 60.0 * h * h);
        // Linear tension has zero density.
        let lin = FunctionalSpec::Anisotropic(Arc::new(LinearTension { a: Vec3::new(1.0, 2.0, -1.0) }));
        assert!(grad_anisotropic(&b, &lin).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn gradients_are_linear_in_the_density() {
        let ls = sphere(1.0 / 24.0);
        let b = geometry_bundle(&ls).unwrap();
        let f1 = vec![(1.0, 2, 0), (0.5, 1, 1)];
        let f2 = vec![(-2.0, 0, 1), (0.25, 3, 0)];
        let both: Vec<_> = f1.iter().chain(&f2).copied().collect();
        let g = |t: Vec<(f64, u32, u32)>| {
            grad_gauss_mean(&b, &FunctionalSpec::gauss_mean_polynomial(t), &ls).unwrap().field
        };
        let lhs = g(both);
        let rhs = g(f1).add(&g(f2));
        let scale = lhs.max_abs_where(&b.trusted);
        assert!(lhs.sub(&rhs).max_abs_where(&b.trusted) < 1e-10 * scale.max(1.0));
    }

    #[test]
    fn alpha_beta_fields() {
        let ls = sphere(1.0 / 24.0);
        let b = geometry_bundle(&ls).unwrap();
        let f = Bipolynomial::new(vec![(1.0, 2, 0), (1.0, 0, 1)]);
        let c = gauss_mean_coefficients(&b, &f);
        for i in 0..b.mean.data().len() {
            let h = b.mean.data()[i];
            assert!((c.alpha.data()[i] - (2.0 * h + h)).abs() < 1e-12);
            assert!((c.beta.data()[i] + 1.0).abs() < 1e-12);
        }
    }
}
