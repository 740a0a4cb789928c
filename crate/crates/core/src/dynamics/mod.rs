//! Level-set transport, redistancing, the finite-difference derivative
//! oracle and gradient flows.

mod flow;
mod redistance;

pub use flow::{gradient_flow, gradient_flow_with, FlowConfig, FlowRecord, FlowResult, FlowState, StopReason};
pub use redistance::{interface_shift, redistance};

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{GeoError, Result};
use crate::fields::{GridSpec, ScalarField3, Vec3, VectorField3};
use crate::functionals::{energy, shape_gradient, FunctionalSpec};
use crate::geometry::{normal, LevelSet};
use crate::quadrature::{SmearKernel, SurfaceMeasure};

/// Velocity of the surface.
#[derive(Debug, Clone)]
pub enum VelocitySpec {
    /// Speed along the outward normal.
    NormalSpeed(ScalarField3),
    FullVector(VectorField3),
}

/// Analytic velocity presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NamedVelocity {
    /// `s = 1`.
    UnitNormal,
    /// `u = (x + 0.3 y, -y, 0.5 z)`.
    Linear,
    /// `s = sin(pi x) cos(pi y) + 0.5 cos(pi z)`.
    Trigonometric,
    /// `u = (-y, x, 0)`, tangent to every surface of revolution about z.
    Rotation,
}

impl NamedVelocity {
    pub const ALL: [NamedVelocity; 4] = [
        NamedVelocity::UnitNormal,
        NamedVelocity::Linear,
        NamedVelocity::Trigonometric,
        NamedVelocity::Rotation,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            NamedVelocity::UnitNormal => "unit_normal",
            NamedVelocity::Linear => "linear",
            NamedVelocity::Trigonometric => "trig",
            NamedVelocity::Rotation => "rotation",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    pub fn sample(&self, grid: GridSpec) -> VelocitySpec {
        match self {
            NamedVelocity::UnitNormal => VelocitySpec::NormalSpeed(ScalarField3::constant(grid, 1.0)),
            NamedVelocity::Linear => VelocitySpec::FullVector(VectorField3::from_fn(grid, |p| {
                Vec3::new(p.x + 0.3 * p.y, -p.y, 0.5 * p.z)
            })),
            NamedVelocity::Trigonometric => VelocitySpec::NormalSpeed(ScalarField3::from_fn(grid, |p| {
                (PI * p.x).sin() * (PI * p.y).cos() + 0.5 * (PI * p.z).cos()
            })),
            NamedVelocity::Rotation => {
                VelocitySpec::FullVector(VectorField3::from_fn(grid, |p| Vec3::new(-p.y, p.x, 0.0)))
            }
        }
    }
}

impl VelocitySpec {
    pub fn grid(&self) -> &GridSpec {
        match self {
            VelocitySpec::NormalSpeed(s) => s.grid(),
            VelocitySpec::FullVector(u) => u.grid(),
        }
    }

    /// Largest speed magnitude over the whole grid.
    pub fn max_speed(&self) -> f64 {
        match self {
            VelocitySpec::NormalSpeed(s) => s.max_abs(),
            VelocitySpec::FullVector(u) => u.data().iter().map(|v| v.abs().sum()).fold(0.0, f64::max),
        }
    }

    /// `u . n` (or the normal speed itself).
    pub fn normal_component(&self, n: &VectorField3) -> ScalarField3 {
        match self {
            VelocitySpec::NormalSpeed(s) => s.clone(),
            VelocitySpec::FullVector(u) => u.dot(n),
        }
    }

    fn check(&self, ls: &LevelSet) -> Result<()> {
        if self.grid() != ls.grid() {
            return Err(GeoError::InvalidParameter("velocity lives on a different grid".into()));
        }
        Ok(())
    }
}

/// The largest stable step for [`transport_step`].
pub fn transport_limit(vel: &VelocitySpec) -> f64 {
    let h = vel.grid().spacing();
    let s = vel.max_speed();
    match vel {
        VelocitySpec::NormalSpeed(_) => h / (3f64.sqrt() * s),
        VelocitySpec::FullVector(_) => h / s,
    }
}

/// One explicit Euler step of `phi_t + u . grad phi = 0` with first-order
/// upwinding, or `phi_t + s |grad phi| = 0` with the Godunov gradient norm.
pub fn transport_step(ls: &LevelSet, vel: &VelocitySpec, dt: f64) -> Result<LevelSet> {
    vel.check(ls)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(GeoError::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let limit = transport_limit(vel);
    if dt > limit {
        return Err(GeoError::CflViolation { dt, limit });
    }
    let grid = *ls.grid();
    let phi = ls.phi().data();
    let h = grid.spacing();
    let dims = grid.dims();
    let data: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let c = grid.coords(idx);
            let mut minus = [0.0; 3];
            let mut plus = [0.0; 3];
            for a in 0..3 {
                let s = grid.stride(a);
                let fwd = if c[a] + 1 < dims[a] { Some((phi[idx + s] - phi[idx]) / h) } else { None };
                let bwd = if c[a] > 0 { Some((phi[idx] - phi[idx - s]) / h) } else { None };
                minus[a] = bwd.or(fwd).unwrap_or(0.0);
                plus[a] = fwd.or(bwd).unwrap_or(0.0);
            }
            let rate = match vel {
                VelocitySpec::FullVector(u) => {
                    let u = u.data()[idx];
                    (0..3)
                        .map(|a| if u[a] > 0.0 { u[a] * minus[a] } else { u[a] * plus[a] })
                        .sum::<f64>()
                }
                VelocitySpec::NormalSpeed(s) => {
                    let s = s.data()[idx];
                    let norm2: f64 = if s > 0.0 {
                        (0..3).map(|a| minus[a].max(0.0).powi(2) + plus[a].min(0.0).powi(2)).sum()
                    } else {
                        (0..3).map(|a| minus[a].min(0.0).powi(2) + plus[a].max(0.0).powi(2)).sum()
                    };
                    s * norm2.sqrt()
                }
            };
            phi[idx] - dt * rate
        })
        .collect();
    LevelSet::new(ScalarField3::new(grid, data)?, ls.band_width())
}

/// Perturbation `psi` with `phi_t = psi`: `-s |grad phi|` or `-u . grad phi`,
/// with central gradients.
fn perturbation(ls: &LevelSet, vel: &VelocitySpec) -> ScalarField3 {
    match vel {
        VelocitySpec::NormalSpeed(s) => s.mul(ls.grad_norm()).scaled(-1.0),
        VelocitySpec::FullVector(u) => u.dot(ls.grad()).scaled(-1.0),
    }
}

/// Default oracle step: `0.1 h^2 / max |psi|` over the band.
pub fn default_fd_step(ls: &LevelSet, vel: &VelocitySpec) -> f64 {
    let psi = perturbation(ls, vel).max_abs_where(ls.band());
    let h = ls.grid().spacing();
    if psi > 0.0 {
        0.1 * h * h / psi
    } else {
        0.1 * h * h
    }
}

/// Central difference `[J(phi + d psi) - J(phi - d psi)] / 2d` of the smeared
/// energy along the transport perturbation.
pub fn fd_energy_derivative(
    ls: &LevelSet,
    spec: &FunctionalSpec,
    vel: &VelocitySpec,
    kernel: &SmearKernel,
    delta: f64,
) -> Result<f64> {
    vel.check(ls)?;
    if !(delta > 0.0) {
        return Err(GeoError::InvalidParameter(format!("oracle step must be positive, got {delta}")));
    }
    let psi = perturbation(ls, vel);
    let side = |sign: f64| -> Result<f64> {
        let phi = ls.phi().zip_map(&psi, |p, q| p + sign * delta * q);
        energy(&LevelSet::new(phi, ls.band_width())?, spec, kernel)
    };
    Ok((side(1.0)? - side(-1.0)?) / (2.0 * delta))
}

/// Oracle values at steps `delta` and `delta / 2` with their Richardson
/// extrapolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEstimate {
    pub delta: f64,
    pub coarse: f64,
    pub fine: f64,
}

impl FdEstimate {
    pub fn extrapolated(&self) -> f64 {
        (4.0 * self.fine - self.coarse) / 3.0
    }

    /// `|coarse - fine|`, which bounds the step error of [`Self::fine`].
    pub fn consistency(&self) -> f64 {
        (self.coarse - self.fine).abs()
    }
}

pub fn fd_energy_derivative_checked(
    ls: &LevelSet,
    spec: &FunctionalSpec,
    vel: &VelocitySpec,
    kernel: &SmearKernel,
) -> Result<FdEstimate> {
    let delta = default_fd_step(ls, vel);
    Ok(FdEstimate {
        delta,
        coarse: fd_energy_derivative(ls, spec, vel, kernel, delta)?,
        fine: fd_energy_derivative(ls, spec, vel, kernel, 0.5 * delta)?,
    })
}

/// `int density (u . n) dsigma` from the closed-form shape gradient.
pub fn predicted_energy_derivative(
    ls: &LevelSet,
    spec: &FunctionalSpec,
    vel: &VelocitySpec,
    kernel: &SmearKernel,
) -> Result<f64> {
    vel.check(ls)?;
    let measure = SurfaceMeasure::new(ls, kernel)?;
    let grad = shape_gradient(ls, spec)?;
    let un = vel.normal_component(&normal(ls)?);
    Ok(measure.integrate(&grad.field.mul(&un)))
}
