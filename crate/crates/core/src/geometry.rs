//! Differential geometry of level sets: unit normal, shape operator,
//! curvatures, tangential calculus, and pointwise residuals of the identities
//! that tie them together.
//!
//! Sign convention: `phi < 0` inside, `phi > 0` outside, so `n = grad phi / |grad phi|`
//! points outward and a sphere of radius `R` has `H = 2/R`, `G = 1/R^2`.

use rayon::prelude::*;

use crate::error::{GeoError, Result};
use crate::fields::{
    gradient, tangent_projector, trace_cofactor, vector_gradient, GridSpec, MatrixField3,
    ScalarField3, Vec3, VectorField3,
};

/// Floor on `|grad phi|` inside the band.
pub const GRADIENT_FLOOR: f64 = 1e-6;
/// Maximum `||grad phi| - 1|` over the band for a certified distance function.
pub const DISTANCE_TOLERANCE: f64 = 0.05;
/// Default smear width in grid spacings.
pub const DEFAULT_EPS_CELLS: f64 = 3.0;

/// A level-set function together with its cached gradient and the band of
/// grid points where geometric quantities are trusted.
#[derive(Debug, Clone)]
pub struct LevelSet {
    phi: ScalarField3,
    grad: VectorField3,
    grad_norm: ScalarField3,
    is_distance: bool,
    band_width: f64,
    band: Vec<bool>,
}

impl LevelSet {
    /// Wraps `phi` with the given band width (length units). Fails if the
    /// gradient degenerates anywhere inside the band.
    pub fn new(phi: ScalarField3, band_width: f64) -> Result<Self> {
        if !(band_width > 0.0) {
            return Err(GeoError::InvalidParameter(format!(
                "band width must be positive, got {band_width}"
            )));
        }
        let grad = gradient(&phi);
        let grad_norm = grad.norm();
        let band: Vec<bool> = phi
            .data()
            .par_iter()
            .zip(grad_norm.data().par_iter())
            .map(|(&p, &g)| p.abs() <= band_width * g.max(GRADIENT_FLOOR))
            .collect();
        if let Some((index, &norm)) = grad_norm
            .data()
            .iter()
            .enumerate()
            .find(|&(i, &g)| band[i] && g < GRADIENT_FLOOR)
        {
            return Err(GeoError::DegenerateGradient { index, norm });
        }
        Ok(Self { phi, grad, grad_norm, is_distance: false, band_width, band })
    }

    /// Uses the default band `eps + 2h` with `eps = 3h`.
    pub fn with_default_band(phi: ScalarField3) -> Result<Self> {
        let h = phi.grid().spacing();
        Self::new(phi, default_band_width(h))
    }

    /// Marks the level set as a distance function after checking
    /// `||grad phi| - 1| <= DISTANCE_TOLERANCE` over the band.
    pub fn certify_distance(mut self) -> Result<Self> {
        let deviation = self.distance_deviation();
        if deviation > DISTANCE_TOLERANCE {
            return Err(GeoError::NotDistanceFunction { deviation });
        }
        self.is_distance = true;
        Ok(self)
    }

    /// Largest `||grad phi| - 1|` over the band.
    pub fn distance_deviation(&self) -> f64 {
        self.grad_norm
            .data()
            .iter()
            .zip(&self.band)
            .filter(|(_, &b)| b)
            .fold(0.0, |m, (g, _)| m.max((g - 1.0).abs()))
    }

    /// Same level set with a different band width.
    pub fn rebanded(&self, band_width: f64) -> Result<Self> {
        let ls = Self::new(self.phi.clone(), band_width)?;
        if self.is_distance {
            ls.certify_distance()
        } else {
            Ok(ls)
        }
    }

    pub fn phi(&self) -> &ScalarField3 {
        &self.phi
    }

    pub fn grid(&self) -> &GridSpec {
        self.phi.grid()
    }

    /// Central-difference gradient of `phi`.
    pub fn grad(&self) -> &VectorField3 {
        &self.grad
    }

    pub fn grad_norm(&self) -> &ScalarField3 {
        &self.grad_norm
    }

    pub fn is_distance(&self) -> bool {
        self.is_distance
    }

    pub fn band_width(&self) -> f64 {
        self.band_width
    }

    /// Trusted band: `|phi| <= band_width * |grad phi|`.
    pub fn band(&self) -> &[bool] {
        &self.band
    }

    pub fn require_distance(&self) -> Result<()> {
        if self.is_distance {
            Ok(())
        } else {
            Err(GeoError::NotDistanceFunction { deviation: self.distance_deviation() })
        }
    }

    /// True if `phi` changes sign somewhere on the grid.
    pub fn has_interface(&self) -> bool {
        let d = self.phi.data();
        d.iter().any(|&v| v < 0.0) && d.iter().any(|&v| v >= 0.0)
    }
}

pub fn default_band_width(h: f64) -> f64 {
    (DEFAULT_EPS_CELLS + 2.0) * h
}

/// Normal, shape operator and curvatures of a level set.
#[derive(Debug, Clone)]
pub struct GeometryBundle {
    pub n: VectorField3,
    /// `[grad n]`, entry `(i, j)` is `d n_i / d x_j`.
    pub grad_n: MatrixField3,
    /// Mean curvature `k1 + k2 = Tr([grad n])`.
    pub mean: ScalarField3,
    /// Gaussian curvature `k1 k2 = Tr(Cof([grad n]))`.
    pub gauss: ScalarField3,
    pub norm_grad_phi: ScalarField3,
    pub trusted: Vec<bool>,
}

impl GeometryBundle {
    pub fn grid(&self) -> &GridSpec {
        self.n.grid()
    }

    /// `[grad n] n`, the normal derivative of the normal.
    pub fn normal_derivative_of_normal(&self) -> VectorField3 {
        self.grad_n.apply(&self.n)
    }

    /// Tangential shape operator `[grad n](I - n (x) n)`.
    pub fn tangential_shape_operator(&self) -> MatrixField3 {
        let data = self
            .grad_n
            .data()
            .par_iter()
            .zip(self.n.data().par_iter())
            .map(|(m, n)| m * tangent_projector(n))
            .collect();
        MatrixField3::from_vec(*self.grid(), data)
    }

    /// Curvatures from the tangential shape operator,
    /// `H = Tr([grad_s n])`, `G = Tr(Cof([grad_s n]))`.
    pub fn tangential_curvatures(&self) -> (ScalarField3, ScalarField3) {
        let s = self.tangential_shape_operator();
        (s.trace(), s.map_scalar(trace_cofactor))
    }

    /// `H^2 - 4G`, nonnegative when the principal curvatures are real.
    pub fn discriminant(&self) -> ScalarField3 {
        self.mean.zip_map(&self.gauss, |h, g| h * h - 4.0 * g)
    }

    /// Largest `|[grad n] - [grad n]^T|` over the trusted band.
    pub fn max_band_asymmetry(&self) -> f64 {
        self.grad_n
            .data()
            .iter()
            .zip(&self.trusted)
            .filter(|(_, &t)| t)
            .map(|(m, _)| (m - m.transpose()).amax())
            .fold(0.0, f64::max)
    }
}

/// `grad phi / |grad phi|`. Outside the band, points with a vanishing gradient
/// get a zero vector.
pub fn normal(ls: &LevelSet) -> Result<VectorField3> {
    check_band_gradient(ls)?;
    Ok(normal_unchecked(ls))
}

fn normal_unchecked(ls: &LevelSet) -> VectorField3 {
    let data = ls
        .grad()
        .data()
        .par_iter()
        .map(|g| {
            let nrm = g.norm();
            if nrm >= GRADIENT_FLOOR {
                g / nrm
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    VectorField3::from_vec(*ls.grid(), data)
}

fn check_band_gradient(ls: &LevelSet) -> Result<()> {
    let bad = ls
        .grad_norm()
        .data()
        .iter()
        .enumerate()
        .find(|&(i, &g)| ls.band()[i] && g < GRADIENT_FLOOR);
    match bad {
        Some((index, &norm)) => Err(GeoError::DegenerateGradient { index, norm }),
        None => Ok(()),
    }
}

/// Normal, shape operator and curvatures from nested first-derivative
/// stencils.
pub fn geometry_bundle(ls: &LevelSet) -> Result<GeometryBundle> {
    let n = normal(ls)?;
    let grad_n = vector_gradient(&n);
    let mean = grad_n.trace();
    let gauss = grad_n.map_scalar(trace_cofactor);
    Ok(GeometryBundle {
        n,
        grad_n,
        mean,
        gauss,
        norm_grad_phi: ls.grad_norm().clone(),
        trusted: ls.band().to_vec(),
    })
}

/// `(I - n (x) n) grad f`.
pub fn tangential_gradient(f: &ScalarField3, n: &VectorField3) -> VectorField3 {
    project_tangent(&gradient(f), n)
}

/// Pointwise projection of `v` onto the plane orthogonal to `n`.
pub fn project_tangent(v: &VectorField3, n: &VectorField3) -> VectorField3 {
    let data = v
        .data()
        .par_iter()
        .zip(n.data().par_iter())
        .map(|(g, n)| g - n * g.dot(n))
        .collect();
    VectorField3::from_vec(*v.grid(), data)
}

/// `div v - ([grad v] n) . n`.
pub fn tangential_divergence(v: &VectorField3, bundle: &GeometryBundle) -> ScalarField3 {
    let grad_v = vector_gradient(v);
    tangential_divergence_from_gradient(&grad_v, &bundle.n)
}

pub(crate) fn tangential_divergence_from_gradient(
    grad_v: &MatrixField3,
    n: &VectorField3,
) -> ScalarField3 {
    let data = grad_v
        .data()
        .par_iter()
        .zip(n.data().par_iter())
        .map(|(m, n)| m.trace() - n.dot(&(m * n)))
        .collect();
    ScalarField3::from_vec(*n.grid(), data)
}

/// Tangential gradient of a vector field, `[grad v](I - n (x) n)`.
pub fn tangential_vector_gradient(v: &VectorField3, n: &VectorField3) -> MatrixField3 {
    let grad_v = vector_gradient(v);
    let data = grad_v
        .data()
        .par_iter()
        .zip(n.data().par_iter())
        .map(|(m, n)| m * tangent_projector(n))
        .collect();
    MatrixField3::from_vec(*v.grid(), data)
}

/// Laplace-Beltrami operator, the tangential divergence of the tangential
/// gradient.
pub fn laplace_beltrami(f: &ScalarField3, bundle: &GeometryBundle) -> ScalarField3 {
    tangential_divergence(&tangential_gradient(f, &bundle.n), bundle)
}

/// Max and mean of a residual over the band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
}

impl ResidualStats {
    pub fn over(field: &ScalarField3, band: &[bool]) -> Self {
        Self { max: field.max_abs_where(band), mean: field.mean_abs_where(band) }
    }
}

/// Pointwise residuals of the normal-field identities.
#[derive(Debug, Clone)]
pub struct LemmaResiduals {
    /// `div([grad n] n) - (grad H . n + H^2 - 2G)`.
    pub flux_divergence: ScalarField3,
    /// `([grad(grad_s f)] n) . n + grad f . ([grad n] n)`.
    pub gradient_second_derivative: ScalarField3,
    /// `([grad([grad n] n)] n) . n + |[grad n] n|^2`.
    pub flux_second_derivative: ScalarField3,
    /// `|[grad n]^T n|`.
    pub transpose_normal: ScalarField3,
    /// `([grad n] n) . n`.
    pub flux_normal: ScalarField3,
    band: Vec<bool>,
}

impl LemmaResiduals {
    pub fn band(&self) -> &[bool] {
        &self.band
    }

    /// Named statistics in a fixed order.
    pub fn stats(&self) -> [(&'static str, ResidualStats); 5] {
        let b = &self.band;
        [
            ("flux_divergence", ResidualStats::over(&self.flux_divergence, b)),
            ("gradient_second_derivative", ResidualStats::over(&self.gradient_second_derivative, b)),
            ("flux_second_derivative", ResidualStats::over(&self.flux_second_derivative, b)),
            ("transpose_normal", ResidualStats::over(&self.transpose_normal, b)),
            ("flux_normal", ResidualStats::over(&self.flux_normal, b)),
        ]
    }
}

/// Default smooth test scalar for the second lemma.
pub fn lemma_test_scalar(p: Vec3) -> f64 {
    p.x.sin() * p.y.cos() + p.z
}

pub fn lemma_residuals(ls: &LevelSet) -> Result<LemmaResiduals> {
    let f = ScalarField3::from_fn(*ls.grid(), lemma_test_scalar);
    lemma_residuals_with(ls, &f)
}

/// Residuals with a caller-supplied test scalar for the second lemma.
pub fn lemma_residuals_with(ls: &LevelSet, f: &ScalarField3) -> Result<LemmaResiduals> {
    let b = geometry_bundle(ls)?;
    let grid = *ls.grid();
    let n = b.n.data();
    let nn = b.normal_derivative_of_normal();

    let div_nn = crate::fields::divergence(&nn);
    let grad_h = gradient(&b.mean);
    let flux_divergence = ScalarField3::from_vec(
        grid,
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let h = b.mean.data()[i];
                let g = b.gauss.data()[i];
                div_nn.data()[i] - (grad_h.data()[i].dot(&n[i]) + h * h - 2.0 * g)
            })
            .collect(),
    );

    let grad_f = gradient(f);
    let grad_tf = vector_gradient(&project_tangent(&grad_f, &b.n));
    let gradient_second_derivative = ScalarField3::from_vec(
        grid,
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let lhs = (grad_tf.data()[i] * n[i]).dot(&n[i]);
                lhs + grad_f.data()[i].dot(&nn.data()[i])
            })
            .collect(),
    );

    let grad_nn = vector_gradient(&nn);
    let flux_second_derivative = ScalarField3::from_vec(
        grid,
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let m = nn.data()[i];
                (grad_nn.data()[i] * n[i]).dot(&n[i]) + m.dot(&m)
            })
            .collect(),
    );

    let transpose_normal = b.grad_n.apply_transpose(&b.n).norm();
    let flux_normal = nn.dot(&b.n);

    Ok(LemmaResiduals {
        flux_divergence,
        gradient_second_derivative,
        flux_second_derivative,
        transpose_normal,
        flux_normal,
        band: ls.band().to_vec(),
    })
}

/// Check of `[grad n] n = grad_s |grad phi| / |grad phi|`.
#[derive(Debug, Clone)]
pub struct NsnuReport {
    /// `|[grad n] n - grad_s|grad phi| / |grad phi||`.
    pub residual: ScalarField3,
    /// `|[grad n] n|`, which vanishes for a distance function.
    pub normal_derivative: ScalarField3,
    pub is_distance: bool,
    band: Vec<bool>,
}

impl NsnuReport {
    pub fn residual_stats(&self) -> ResidualStats {
        ResidualStats::over(&self.residual, &self.band)
    }

    pub fn normal_derivative_stats(&self) -> ResidualStats {
        ResidualStats::over(&self.normal_derivative, &self.band)
    }
}

pub fn nsnu_check(ls: &LevelSet) -> Result<NsnuReport> {
    let b = geometry_bundle(ls)?;
    let nn = b.normal_derivative_of_normal();
    let tg = tangential_gradient(ls.grad_norm(), &b.n);
    let grid = *ls.grid();
    let residual = ScalarField3::from_vec(
        grid,
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let g = ls.grad_norm().data()[i].max(GRADIENT_FLOOR);
                (nn.data()[i] - tg.data()[i] / g).norm()
            })
            .collect(),
    );
    Ok(NsnuReport {
        residual,
        normal_derivative: nn.norm(),
        is_distance: ls.is_distance(),
        band: ls.band().to_vec(),
    })
}
