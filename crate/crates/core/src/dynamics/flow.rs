//! Gradient-descent flows `u . n = -density`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{GeoError, Result};
use crate::fields::ScalarField3;
use crate::functionals::{energy_density, shape_gradient_with, FunctionalSpec, ShapeGradient};
use crate::geometry::{geometry_bundle, LevelSet};
use crate::quadrature::{enclosed_volume, sphere_radius_from_volume, SmearKernel, SurfaceMeasure};

use super::redistance::reinitialize;
use super::{redistance, transport_step, VelocitySpec};

/// Consecutive energy increases tolerated before the flow aborts.
const MAX_INCREASES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Fraction of the stability bound used as time step, in `(0, 1]`.
    pub dt_safety: f64,
    pub redistance_every: usize,
    pub max_steps: usize,
    pub stop_grad_norm: f64,
    /// Stop once this much time has elapsed.
    pub max_time: Option<f64>,
    /// Stop once the volume-equivalent radius drops below this.
    pub min_radius: Option<f64>,
    /// Allowed energy increase per step relative to the initial energy.
    pub mono_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt_safety: 0.9,
            redistance_every: 1,
            max_steps: 100,
            stop_grad_norm: 0.0,
            max_time: None,
            min_radius: None,
            mono_tol: 1e-3,
        }
    }
}

impl FlowConfig {
    fn validate(&self, spec: &FunctionalSpec) -> Result<()> {
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(GeoError::InvalidParameter(format!(
                "dt_safety must lie in (0, 1], got {}",
                self.dt_safety
            )));
        }
        if self.redistance_every == 0 {
            return Err(GeoError::InvalidParameter("redistance_every must be positive".into()));
        }
        if matches!(spec, FunctionalSpec::GaussMean(_)) && self.redistance_every != 1 {
            return Err(GeoError::InvalidParameter(
                "gauss-mean flows need redistance_every = 1".into(),
            ));
        }
        if !(self.mono_tol >= 0.0) || !(self.stop_grad_norm >= 0.0) {
            return Err(GeoError::InvalidParameter("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One row of the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecord {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    /// `sqrt(int density^2 dsigma)`.
    pub grad_norm: f64,
    /// Radius of the sphere with the same smeared enclosed volume.
    pub radius: f64,
    pub total_gauss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    GradientSmall,
    MaxTime,
    RadiusSmall,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub records: Vec<FlowRecord>,
    pub final_state: LevelSet,
    pub stop: StopReason,
}

/// State handed to the observer after every recorded step.
pub struct FlowState<'a> {
    pub record: &'a FlowRecord,
    pub level_set: &'a LevelSet,
    pub gradient: &'a ShapeGradient,
}

pub fn gradient_flow(
    ls: &LevelSet,
    spec: &FunctionalSpec,
    kernel: &SmearKernel,
    cfg: &FlowConfig,
) -> Result<FlowResult> {
    gradient_flow_with(ls, spec, kernel, cfg, |_| Ok(()))
}

struct Evaluation {
    record: FlowRecord,
    gradient: ShapeGradient,
    dt: f64,
}

fn evaluate(ls: &LevelSet, spec: &FunctionalSpec, kernel: &SmearKernel, step: usize, time: f64, safety: f64) -> Result<Evaluation> {
    let measure = SurfaceMeasure::new(ls, kernel)?;
    let bundle = geometry_bundle(ls)?;
    let gradient = shape_gradient_with(ls, &bundle, spec)?;
    let energy = measure.integrate(&energy_density(&bundle, spec));
    let grad_norm = measure.integrate(&gradient.field.map(|d| d * d)).max(0.0).sqrt();
    let total_gauss = measure.integrate(&bundle.gauss);
    let radius = sphere_radius_from_volume(enclosed_volume(ls, kernel), kernel);

    let h = ls.grid().spacing();
    let (order, coefficient) = spec.stiffness(&bundle);
    let dt = match order {
        4 => safety * h.powi(4) / (8.0 * coefficient),
        _ => safety * h * h / (4.0 * coefficient),
    };
    Ok(Evaluation {
        record: FlowRecord { step, time, energy, grad_norm, radius, total_gauss },
        gradient,
        dt,
    })
}

/// Normal speed `-density`, cut off smoothly between the smear support and
/// the band edge.
fn descent_speed(ls: &LevelSet, gradient: &ShapeGradient, kernel: &SmearKernel) -> ScalarField3 {
    let inner = kernel.epsilon + ls.grid().spacing();
    let outer = ls.band_width().max(inner * (1.0 + 1e-9));
    let data: Vec<f64> = ls
        .phi()
        .data()
        .par_iter()
        .zip(ls.grad_norm().data().par_iter())
        .zip(gradient.field.data().par_iter())
        .map(|((&p, &g), &d)| {
            let dist = p.abs() / g.max(1e-12);
            let w = if dist <= inner {
                1.0
            } else if dist >= outer {
                0.0
            } else {
                0.5 * (1.0 + (PI * (dist - inner) / (outer - inner)).cos())
            };
            -d * w
        })
        .collect();
    ScalarField3::new(*ls.grid(), data).expect("finite speed")
}

/// Runs the flow, calling `observer` after every recorded state (including
/// the initial one).
pub fn gradient_flow_with<O>(
    ls: &LevelSet,
    spec: &FunctionalSpec,
    kernel: &SmearKernel,
    cfg: &FlowConfig,
    mut observer: O,
) -> Result<FlowResult>
where
    O: FnMut(&FlowState) -> Result<()>,
{
    cfg.validate(spec)?;
    let needs_distance = matches!(spec, FunctionalSpec::GaussMean(_));
    let mut current = if needs_distance && !ls.is_distance() {
        redistance(ls)?
    } else {
        ls.clone()
    };
    let mut eval = evaluate(&current, spec, kernel, 0, 0.0, cfg.dt_safety)?;
    observer(&FlowState { record: &eval.record, level_set: &current, gradient: &eval.gradient })?;
    let e0 = eval.record.energy;
    let tol = cfg.mono_tol * e0.abs();
    let mut records = vec![eval.record];
    let mut increases = 0;

    let stop = loop {
        let last = eval.record;
        if let Some(min) = cfg.min_radius {
            if last.radius < min {
                break StopReason::RadiusSmall;
            }
        }
        if last.grad_norm < cfg.stop_grad_norm {
            break StopReason::GradientSmall;
        }
        if last.step >= cfg.max_steps {
            break StopReason::MaxSteps;
        }
        if let Some(t) = cfg.max_time {
            if last.time >= t * (1.0 - 1e-12) {
                break StopReason::MaxTime;
            }
        }
        let mut dt = eval.dt;
        if let Some(t) = cfg.max_time {
            dt = dt.min(t - last.time);
        }
        let speed = VelocitySpec::NormalSpeed(descent_speed(&current, &eval.gradient, kernel));
        let moved = if speed.max_speed() == 0.0 {
            current.clone()
        } else {
            transport_step(&current, &speed, dt)?
        };
        let step = last.step + 1;
        current = if step % cfg.redistance_every != 0 {
            moved
        } else if needs_distance {
            redistance(&moved)?
        } else {
            reinitialize(&moved)?
        };
        eval = evaluate(&current, spec, kernel, step, last.time + dt, cfg.dt_safety)?;
        observer(&FlowState { record: &eval.record, level_set: &current, gradient: &eval.gradient })?;
        records.push(eval.record);

        if eval.record.energy > last.energy + tol {
            increases += 1;
            if increases >= MAX_INCREASES {
                return Err(GeoError::NonMonotoneEnergy {
                    step,
                    consecutive: increases,
                    before: last.energy,
                    after: eval.record.energy,
                });
            }
        } else {
            increases = 0;
        }
    };
    Ok(FlowResult { records, final_state: current, stop })
}
