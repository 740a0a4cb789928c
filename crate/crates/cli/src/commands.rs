use std::io::{self, Write};

use geoflow::dynamics::{
    fd_energy_derivative_checked, gradient_flow_with, predicted_energy_derivative, redistance, FlowRecord,
};
use geoflow::functionals::{energy, grad_anisotropic, grad_gauss_mean, shape_gradient, FunctionalSpec};
use geoflow::geometry::{geometry_bundle, lemma_residuals, nsnu_check};
use geoflow::quadrature::{box_bump, ibp_laplacian_symmetry, ibp_surface_residual, ibp_volume_residual, SurfaceMeasure};
use geoflow::{AnalyticShape, GeoError, LevelSet, ScalarField3, Vec3, VectorField3};
use thiserror::Error;

use crate::config::{FunctionalPreset, Geometry, RunConfig};
use crate::output::{write_vtk_file, CsvTrajectory};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("output: {0}")]
    Io(#[from] io::Error),
}

type Result<T> = std::result::Result<T, CommandError>;

/// One measured quantity against its threshold.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value >= threshold }
    }
}

pub fn print_checks<W: Write>(out: &mut W, checks: &[Check]) -> io::Result<()> {
    writeln!(out, "{:<34} {:>12} {:>12}  status", "check", "value", "threshold")?;
    for c in checks {
        writeln!(
            out,
            "{:<34} {:>12.4e} {:>12.4e}  {}",
            c.name,
            c.value,
            c.threshold,
            if c.pass { "PASS" } else { "FAIL" }
        )?;
    }
    Ok(())
}

fn prepared(cfg: &RunConfig, ls: LevelSet, spec: &FunctionalSpec) -> Result<LevelSet> {
    let wanted = cfg.redistance.unwrap_or(matches!(spec, FunctionalSpec::GaussMean(_)) && !ls.is_distance());
    Ok(if wanted { redistance(&ls)? } else { ls })
}

pub fn integrate<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<Vec<Check>> {
    let spec = cfg.functional.spec()?;
    let ls = cfg.level_set(cfg.h)?;
    let ls = if cfg.redistance == Some(true) { redistance(&ls)? } else { ls };
    let kernel = cfg.kernel(ls.grid());
    let j = energy(&ls, &spec, &kernel)?;
    let mut checks = Vec::new();
    match cfg.functional.exact_energy(&cfg.geometry) {
        Some(exact) if exact != 0.0 => {
            let rel = (j - exact).abs() / exact.abs();
            writeln!(out, "J={j:.6} exact={exact:.6} rel={rel:.3e}")?;
            checks.push(Check::at_most("relative error", rel, cfg.thresholds.integrate_tol));
        }
        Some(exact) => {
            writeln!(out, "J={j:.6} exact={exact:.6} abs={:.3e}", j.abs())?;
            checks.push(Check::at_most("absolute error", j.abs(), cfg.thresholds.integrate_abs_tol));
        }
        None => writeln!(out, "J={j:.6}")?,
    }
    Ok(checks)
}

fn h_scale(ls: &LevelSet, measure: &SurfaceMeasure) -> Result<f64> {
    Ok(measure.integrate_abs(&geometry_bundle(ls)?.mean))
}

pub fn gradient<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<Vec<Check>> {
    let spec = cfg.functional.spec()?;
    let ls = prepared(cfg, cfg.level_set(cfg.h)?, &spec)?;
    let kernel = cfg.kernel(ls.grid());
    let measure = SurfaceMeasure::new(&ls, &kernel)?;
    let grad = shape_gradient(&ls, &spec)?;
    let mut checks = Vec::new();

    let max_density = grad.field.max_abs_where(measure.support());
    writeln!(out, "functional={} max|density|={max_density:.6e}", spec.family())?;
    if let Some(limit) = cfg.thresholds.max_density {
        checks.push(Check::at_most("max |density| on support", max_density, limit));
    }
    if let Some(gap) = grad.equivalence_gap() {
        writeln!(out, "alternate form gap={gap:.6e}")?;
    }

    let scale = h_scale(&ls, &measure)?;
    for v in &cfg.velocities {
        let vel = v.sample(*ls.grid());
        let p = predicted_energy_derivative(&ls, &spec, &vel, &kernel)?;
        let fd = fd_energy_derivative_checked(&ls, &spec, &vel, &kernel)?;
        let rel = (p - fd.fine).abs() / (fd.fine.abs() + scale);
        writeln!(
            out,
            "velocity={} predicted={p:.6e} fd={:.6e} fd_consistency={:.3e} rel={rel:.3e}",
            v.name(),
            fd.fine,
            fd.consistency()
        )?;
        checks.push(Check::at_most(format!("oracle agreement {}", v.name()), rel, cfg.thresholds.gradient_tol));
    }

    if let Some(dir) = &cfg.outputs.vtk {
        write_vtk_file(dir, &cfg.run, "density", 0, &grad.field)?;
        write_vtk_file(dir, &cfg.run, "phi", 0, ls.phi())?;
    }
    Ok(checks)
}

/// Measured quantities of the validation suite at one resolution.
struct Measurements {
    h: f64,
    /// Band maxima of the pointwise identity residuals.
    residuals: Vec<(&'static str, f64)>,
    /// Relative IBP residuals, absent when the smear support meets the box.
    ibp: Option<[f64; 3]>,
    /// Max gaps between the two forms of the anisotropic and Gauss-mean densities.
    equivalence: (f64, f64),
}

const IBP_NAMES: [&str; 3] = ["ibp surface", "ibp laplacian", "ibp volume"];

fn measure_suite(cfg: &RunConfig, h: f64) -> Result<Measurements> {
    let ls = cfg.level_set(h)?;
    let grid = *ls.grid();
    let kernel = cfg.kernel(&grid);

    let mut residuals: Vec<(&'static str, f64)> =
        lemma_residuals(&ls)?.stats().iter().map(|(n, s)| (*n, s.max)).collect();
    let ns = nsnu_check(&ls)?;
    residuals.push(("normal_flux_identity", ns.residual_stats().max));
    if ls.is_distance() {
        residuals.push(("n_grad_n", ns.normal_derivative_stats().max));
    }

    let measure = match SurfaceMeasure::new(&ls, &kernel) {
        Ok(m) => Some(m),
        Err(GeoError::InterfaceTooCloseToBoundary { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let ibp = match &measure {
        None => None,
        Some(_) => {
            let f = ScalarField3::from_fn(grid, |p| 1.0 + p.x + p.y * p.y);
            let v = VectorField3::from_fn(grid, |p| Vec3::new(p.x + p.y, p.y * p.z, p.z + p.x * p.x));
            let a = ScalarField3::from_fn(grid, |p| (2.0 * p.x).exp() + p.y * p.z);
            let c = ScalarField3::from_fn(grid, |p| p.z.powi(3) + p.x);
            let bump = box_bump(&grid);
            Some([
                ibp_surface_residual(&ls, &f, &v, &kernel)?.relative(),
                ibp_laplacian_symmetry(&ls, &a, &c, &kernel)?.relative(),
                ibp_volume_residual(&f.mul(&bump), &v.scale_by(&bump), &geometry_bundle(&ls)?).relative(),
            ])
        }
    };

    let dist = if ls.is_distance() { ls.clone() } else { redistance(&ls)? };
    let b = geometry_bundle(&ls)?;
    let bd = geometry_bundle(&dist)?;
    let mask = match &measure {
        Some(m) => m.support().to_vec(),
        None => b.trusted.clone(),
    };
    let gap = |g: &geoflow::functionals::ShapeGradient| match &g.alternate {
        Some(alt) => g.field.sub(alt).max_abs_where(&mask),
        None => 0.0,
    };
    let an = grad_anisotropic(&b, &FunctionalSpec::aniso_diag(1.0, 1.0, 4.0)?)?;
    let gm = grad_gauss_mean(&bd, &FunctionalPreset::MeanSquaredPlusGauss.spec()?, &dist)?;
    Ok(Measurements { h, residuals, ibp, equivalence: (gap(&an), gap(&gm)) })
}

/// Values below this are treated as exact zeros in order estimates.
const ZERO_FLOOR: f64 = 1e-10;

pub fn validate<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<Vec<Check>> {
    let t = &cfg.thresholds;
    let coarse = measure_suite(cfg, cfg.h)?;
    let mut checks = Vec::new();
    if !cfg.refine {
        let h = coarse.h;
        for (name, v) in &coarse.residuals {
            checks.push(Check::at_most(format!("residual {name}"), *v, t.residual_c * h));
        }
        match coarse.ibp {
            Some(r) => {
                for (name, v) in IBP_NAMES.iter().zip(r) {
                    checks.push(Check::at_most(*name, v, t.ibp_tol));
                }
            }
            None => writeln!(out, "ibp checks skipped: smear support reaches the box")?,
        }
        checks.push(Check::at_most("equivalence anisotropic forms", coarse.equivalence.0, t.equiv_c_aniso * h));
        checks.push(Check::at_most("equivalence gauss-mean forms", coarse.equivalence.1, t.equiv_c_gauss * h));
    } else {
        let fine = measure_suite(cfg, 0.5 * cfg.h)?;
        writeln!(out, "refinement h={:.6e} -> {:.6e}", coarse.h, fine.h)?;
        let order = |name: String, a: f64, b: f64| -> Check {
            if a < ZERO_FLOOR && b < ZERO_FLOOR {
                Check { name, value: f64::INFINITY, threshold: 1.0, pass: true }
            } else {
                Check::at_least(name, (a / b).log2(), 1.0)
            }
        };
        for ((name, a), (_, b)) in coarse.residuals.iter().zip(&fine.residuals) {
            checks.push(order(format!("order residual {name}"), *a, *b));
        }
        match (coarse.ibp, fine.ibp) {
            (Some(a), Some(b)) => {
                for i in 0..3 {
                    checks.push(order(format!("order {}", IBP_NAMES[i]), a[i], b[i]));
                    checks.push(Check::at_most(IBP_NAMES[i], b[i], t.ibp_tol));
                }
            }
            _ => writeln!(out, "ibp checks skipped: smear support reaches the box")?,
        }
        for m in [&coarse, &fine] {
            checks.push(Check::at_most(format!("anisotropic gap/h at h={:.4e}", m.h), m.equivalence.0 / m.h, t.equiv_c_aniso));
            checks.push(Check::at_most(format!("gauss-mean gap/h at h={:.4e}", m.h), m.equivalence.1 / m.h, t.equiv_c_gauss));
        }
    }
    Ok(checks)
}

fn radius_law(records: &[FlowRecord], r0: f64, h: f64) -> f64 {
    records
        .iter()
        .filter(|r| r.radius >= 5.0 * h)
        .map(|r| (r.radius - (r0 * r0 - 4.0 * r.time).max(0.0).sqrt()).abs())
        .fold(0.0, f64::max)
}

pub fn flow<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<Vec<Check>> {
    let spec = cfg.functional.spec()?;
    let ls = cfg.level_set(cfg.h)?;
    let ls = if cfg.redistance == Some(true) { redistance(&ls)? } else { ls };
    let kernel = cfg.kernel(ls.grid());
    let use_radius = cfg.geometry.is_sphere();
    let mut csv = cfg.outputs.csv.as_deref().map(CsvTrajectory::create).transpose()?;
    let mut io_error: Option<io::Error> = None;

    let result = gradient_flow_with(&ls, &spec, &kernel, &cfg.flow, |state| {
        let r = state.record;
        if io_error.is_some() {
            return Ok(());
        }
        let mut write = || -> io::Result<()> {
            if let Some(w) = csv.as_mut() {
                let aux = if use_radius { r.radius } else { r.total_gauss };
                w.row(r.step, r.time, r.energy, r.grad_norm, aux)?;
            }
            if let Some(dir) = &cfg.outputs.vtk {
                if r.step % cfg.outputs.vtk_stride == 0 {
                    let needs_bundle = cfg.outputs.vtk_fields.iter().any(|f| f == "mean" || f == "gauss");
                    let bundle = if needs_bundle { geometry_bundle(state.level_set).ok() } else { None };
                    for name in &cfg.outputs.vtk_fields {
                        let field = match (name.as_str(), &bundle) {
                            ("phi", _) => state.level_set.phi(),
                            ("density", _) => &state.gradient.field,
                            ("mean", Some(b)) => &b.mean,
                            ("gauss", Some(b)) => &b.gauss,
                            _ => continue,
                        };
                        write_vtk_file(dir, &cfg.run, name, r.step, field)?;
                    }
                }
            }
            Ok(())
        };
        if let Err(e) = write() {
            io_error = Some(e);
        }
        Ok(())
    });
    if let Some(e) = io_error {
        return Err(e.into());
    }
    if let Some(w) = csv {
        w.finish()?;
    }

    let mut checks = Vec::new();
    let res = match result {
        Ok(r) => r,
        Err(GeoError::NonMonotoneEnergy { step, consecutive, before, after }) => {
            writeln!(out, "energy increased for {consecutive} consecutive steps at step {step}: {before:.6e} -> {after:.6e}")?;
            checks.push(Check { name: "energy monotone".into(), value: after - before, threshold: cfg.flow.mono_tol, pass: false });
            return Ok(checks);
        }
        Err(e) => return Err(e.into()),
    };
    let last = res.records.last().expect("initial record");
    writeln!(
        out,
        "steps={} time={:.6e} energy={:.6e} grad_norm={:.6e} stop={:?}",
        last.step, last.time, last.energy, last.grad_norm, res.stop
    )?;
    if let (FunctionalPreset::Area, Geometry::Shape(AnalyticShape::Sphere { radius, .. })) = (&cfg.functional, &cfg.geometry) {
        let dev = radius_law(&res.records, *radius, cfg.h);
        checks.push(Check::at_most("radius law deviation / h", dev / cfg.h, cfg.thresholds.radius_law_cells));
    }
    if let Some(target) = cfg.thresholds.expect_energy {
        let rel = (last.energy - target).abs() / target.abs().max(f64::MIN_POSITIVE);
        checks.push(Check::at_most("final energy relative error", rel, cfg.thresholds.energy_tol));
    }
    Ok(checks)
}
