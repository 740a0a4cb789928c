//! Analytic shapes with exact level functions and curvatures, used as ground
//! truth throughout the test suites.

use std::f64::consts::PI;

use crate::error::{GeoError, Result};
use crate::fields::{GridSpec, ScalarField3, Vec3};
use crate::geometry::{default_band_width, LevelSet};

/// Spatially varying factor applied to a base level function. The zero set is
/// unchanged but the result is no longer a distance function.
#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    /// `c + g . x`
    Affine { constant: f64, slope: Vec3 },
    /// `exp(g . x)`
    Exponential { rate: Vec3 },
}

impl Multiplier {
    pub fn eval(&self, p: Vec3) -> f64 {
        match self {
            Multiplier::Affine { constant, slope } => constant + slope.dot(&p),
            Multiplier::Exponential { rate } => rate.dot(&p).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticShape {
    Sphere { center: Vec3, radius: f64 },
    /// Axis-aligned ellipsoid described by the algebraic level function
    /// `(s/2) (sum (x_i / a_i)^2 - 1)` with `s` the mean semi-axis, so that
    /// `|grad phi|` stays of order one near the surface.
    Ellipsoid { center: Vec3, semi_axes: [f64; 3] },
    /// Torus around the z axis.
    Torus { center: Vec3, major: f64, minor: f64 },
    Perturbed { base: Box<AnalyticShape>, multiplier: Multiplier },
}

/// A point on the exact surface with its analytic normal and curvatures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub normal: Vec3,
    pub mean: f64,
    pub gauss: f64,
}

impl AnalyticShape {
    pub fn sphere(radius: f64) -> Self {
        AnalyticShape::Sphere { center: Vec3::zeros(), radius }
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Self {
        AnalyticShape::Ellipsoid { center: Vec3::zeros(), semi_axes: [a, b, c] }
    }

    pub fn torus(major: f64, minor: f64) -> Self {
        AnalyticShape::Torus { center: Vec3::zeros(), major, minor }
    }

    pub fn perturbed(self, multiplier: Multiplier) -> Self {
        AnalyticShape::Perturbed { base: Box::new(self), multiplier }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            AnalyticShape::Sphere { radius, .. } => *radius > 0.0,
            AnalyticShape::Ellipsoid { semi_axes, .. } => semi_axes.iter().all(|&a| a > 0.0),
            AnalyticShape::Torus { major, minor, .. } => *minor > 0.0 && major > minor,
            AnalyticShape::Perturbed { base, .. } => return base.validate(),
        };
        if ok {
            Ok(())
        } else {
            Err(GeoError::InvalidParameter(format!("invalid shape parameters: {self:?}")))
        }
    }

    /// Signed distance for spheres and tori, algebraic level function for
    /// ellipsoids.
    pub fn exact_phi(&self, p: Vec3) -> f64 {
        match self {
            AnalyticShape::Sphere { center, radius } => (p - center).norm() - radius,
            AnalyticShape::Ellipsoid { center, semi_axes } => {
                let q = p - center;
                let s: f64 = (0..3).map(|i| (q[i] / semi_axes[i]).powi(2)).sum();
                0.5 * mean_axis(semi_axes) * (s - 1.0)
            }
            AnalyticShape::Torus { center, major, minor } => {
                let q = p - center;
                let rho = (q.x * q.x + q.y * q.y).sqrt();
                ((rho - major).powi(2) + q.z * q.z).sqrt() - minor
            }
            AnalyticShape::Perturbed { base, multiplier } => base.exact_phi(p) * multiplier.eval(p),
        }
    }

    /// Whether `exact_phi` is a signed distance function.
    pub fn is_distance(&self) -> bool {
        matches!(self, AnalyticShape::Sphere { .. } | AnalyticShape::Torus { .. })
    }

    /// Outward unit normal at a surface point.
    pub fn exact_normal(&self, p: Vec3) -> Vec3 {
        match self {
            AnalyticShape::Sphere { center, .. } => (p - center).normalize(),
            AnalyticShape::Ellipsoid { center, semi_axes } => {
                let q = p - center;
                Vec3::new(
                    q.x / semi_axes[0].powi(2),
                    q.y / semi_axes[1].powi(2),
                    q.z / semi_axes[2].powi(2),
                )
                .normalize()
            }
            AnalyticShape::Torus { center, major, .. } => {
                let q = p - center;
                let rho = (q.x * q.x + q.y * q.y).sqrt();
                let axis = Vec3::new(q.x / rho * major, q.y / rho * major, 0.0);
                (q - axis).normalize()
            }
            AnalyticShape::Perturbed { base, .. } => base.exact_normal(p),
        }
    }

    /// Mean curvature `k1 + k2` at a surface point.
    pub fn exact_mean(&self, p: Vec3) -> f64 {
        self.exact_curvatures(p).0
    }

    /// Gaussian curvature `k1 k2` at a surface point.
    pub fn exact_gauss(&self, p: Vec3) -> f64 {
        self.exact_curvatures(p).1
    }

    fn exact_curvatures(&self, p: Vec3) -> (f64, f64) {
        match self {
            AnalyticShape::Sphere { radius, .. } => (2.0 / radius, 1.0 / (radius * radius)),
            AnalyticShape::Ellipsoid { center, semi_axes } => {
                let q = p - center;
                // Implicit F = sum x_i^2 / a_i^2 - 1 with diagonal Hessian D.
                let d: [f64; 3] = semi_axes.map(|a| 2.0 / (a * a));
                let g = Vec3::new(d[0] * q.x, d[1] * q.y, d[2] * q.z);
                let g2 = g.norm_squared();
                let gn = g2.sqrt();
                let tr: f64 = d.iter().sum();
                let ghg: f64 = (0..3).map(|i| d[i] * g[i] * g[i]).sum();
                let mean = (g2 * tr - ghg) / (gn * g2);
                // Adjugate of a diagonal matrix.
                let adj = [d[1] * d[2], d[0] * d[2], d[0] * d[1]];
                let gag: f64 = (0..3).map(|i| adj[i] * g[i] * g[i]).sum();
                (mean, gag / (g2 * g2))
            }
            AnalyticShape::Torus { center, major, minor } => {
                let q = p - center;
                let rho = (q.x * q.x + q.y * q.y).sqrt();
                let cos_t = ((rho - major) / minor).clamp(-1.0, 1.0);
                let k1 = 1.0 / minor;
                let k2 = cos_t / (major + minor * cos_t);
                (k1 + k2, k1 * k2)
            }
            AnalyticShape::Perturbed { base, .. } => base.exact_curvatures(p),
        }
    }

    /// Surface area when a closed form exists.
    pub fn exact_area(&self) -> Option<f64> {
        match self {
            AnalyticShape::Sphere { radius, .. } => Some(4.0 * PI * radius * radius),
            AnalyticShape::Torus { major, minor, .. } => Some(4.0 * PI * PI * major * minor),
            AnalyticShape::Ellipsoid { .. } => None,
            AnalyticShape::Perturbed { base, .. } => base.exact_area(),
        }
    }

    /// Total Gaussian curvature, `2 pi chi`.
    pub fn exact_total_gauss(&self) -> Option<f64> {
        match self {
            AnalyticShape::Sphere { .. } | AnalyticShape::Ellipsoid { .. } => Some(4.0 * PI),
            AnalyticShape::Torus { .. } => Some(0.0),
            AnalyticShape::Perturbed { base, .. } => base.exact_total_gauss(),
        }
    }

    /// Axis-aligned bounding box of the surface.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        match self {
            AnalyticShape::Sphere { center, radius } => {
                let r = Vec3::repeat(*radius);
                (center - r, center + r)
            }
            AnalyticShape::Ellipsoid { center, semi_axes } => {
                let r = Vec3::from(*semi_axes);
                (center - r, center + r)
            }
            AnalyticShape::Torus { center, major, minor } => {
                let r = Vec3::new(major + minor, major + minor, *minor);
                (center - r, center + r)
            }
            AnalyticShape::Perturbed { base, .. } => base.bounding_box(),
        }
    }

    /// Smallest centred grid with spacing `h` that keeps `margin` between the
    /// surface and every box face.
    pub fn fitted_grid(&self, h: f64, margin: f64) -> Result<GridSpec> {
        let (lo, hi) = self.bounding_box();
        let half = [0, 1, 2].map(|a| lo[a].abs().max(hi[a].abs()) + margin);
        GridSpec::centered_box(half, h)
    }

    /// Deterministic quasi-uniform points on the surface with exact normal
    /// and curvatures.
    pub fn surface_samples(&self, count: usize) -> Vec<SurfaceSample> {
        let points: Vec<Vec3> = match self {
            AnalyticShape::Sphere { center, radius } => {
                fibonacci_sphere(count).into_iter().map(|u| center + u * *radius).collect()
            }
            AnalyticShape::Ellipsoid { center, semi_axes } => fibonacci_sphere(count)
                .into_iter()
                .map(|u| center + Vec3::new(u.x * semi_axes[0], u.y * semi_axes[1], u.z * semi_axes[2]))
                .collect(),
            AnalyticShape::Torus { center, major, minor } => {
                let golden = (5f64.sqrt() - 1.0) / 2.0;
                (0..count)
                    .map(|i| {
                        let theta = 2.0 * PI * i as f64 / count as f64;
                        let psi = 2.0 * PI * (i as f64 * golden).fract();
                        let rho = major + minor * theta.cos();
                        center + Vec3::new(rho * psi.cos(), rho * psi.sin(), minor * theta.sin())
                    })
                    .collect()
            }
            AnalyticShape::Perturbed { base, .. } => {
                return base.surface_samples(count);
            }
        };
        points
            .into_iter()
            .map(|p| {
                let (mean, gauss) = self.exact_curvatures(p);
                SurfaceSample { point: p, normal: self.exact_normal(p), mean, gauss }
            })
            .collect()
    }
}

fn mean_axis(a: &[f64; 3]) -> f64 {
    (a[0] + a[1] + a[2]) / 3.0
}

fn fibonacci_sphere(count: usize) -> Vec<Vec3> {
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let t = golden_angle * i as f64;
            Vec3::new(r * t.cos(), r * t.sin(), z)
        })
        .collect()
}

/// Samples the shape with the default band `eps + 2h`.
pub fn sample(shape: &AnalyticShape, grid: GridSpec) -> Result<LevelSet> {
    sample_with_band(shape, grid, default_band_width(grid.spacing()))
}

/// Samples the shape on `grid`. The surface must keep at least `band_width`
/// of clearance from every box face.
pub fn sample_with_band(shape: &AnalyticShape, grid: GridSpec, band_width: f64) -> Result<LevelSet> {
    shape.validate()?;
    let (lo, hi) = shape.bounding_box();
    let (glo, ghi) = (grid.origin(), grid.upper());
    let clearance = (0..3)
        .map(|a| (lo[a] - glo[a]).min(ghi[a] - hi[a]))
        .fold(f64::INFINITY, f64::min);
    if clearance < band_width {
        return Err(GeoError::ShapeTouchesBoundary { margin: clearance });
    }
    let phi = ScalarField3::from_fn(grid, |p| shape.exact_phi(p));
    let ls = LevelSet::new(phi, band_width)?;
    if shape.is_distance() {
        ls.certify_distance()
    } else {
        Ok(ls)
    }
}
