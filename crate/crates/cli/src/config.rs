//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use geoflow::dynamics::{FlowConfig, NamedVelocity};
use geoflow::functionals::FunctionalSpec;
use geoflow::geometry::default_band_width;
use geoflow::shapes::{sample_with_band, Multiplier};
use geoflow::{AnalyticShape, GridSpec, LevelSet, ScalarField3, SmearKernel, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {message}")]
    Value { key: String, message: String },
}

type Result<T> = std::result::Result<T, ConfigError>;

const KNOWN_KEYS: &[&str] = &[
    "run", "shape", "radius", "axes", "major", "minor", "perturb", "plane_normal", "plane_offset",
    "h", "margin", "box", "eps_cells", "functional", "redistance", "velocities", "gradient_tol",
    "max_density", "integrate_tol", "integrate_abs_tol", "dt_safety", "steps", "redistance_every",
    "stop_grad_norm", "max_time", "min_radius", "mono_tol", "csv", "vtk", "vtk_stride", "vtk_fields",
    "refine", "residual_c", "ibp_tol", "equiv_c_aniso", "equiv_c_gauss", "expect_energy", "energy_tol",
    "radius_law_cells",
];

/// Raw key-value pairs, file first and then command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(c) => &line[..c],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, text: line.to_string() })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, text: line.to_string() });
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        let cfg = Self { entries };
        cfg.check_keys()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn apply_override(&mut self, raw: &str) -> Result<()> {
        let (k, v) = raw.split_once('=').ok_or_else(|| ConfigError::Override(raw.to_string()))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Override(raw.to_string()));
        }
        self.entries.insert(k.to_string(), v.trim().to_string());
        self.check_keys()
    }

    fn check_keys(&self) -> Result<()> {
        match self.entries.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            Some(k) => Err(ConfigError::UnknownKey(k.clone())),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn value_error(key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Value { key: key.to_string(), message: message.into() }
    }

    fn string(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    fn real_opt(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_real(v).map_err(|m| Self::value_error(key, m))).transpose()
    }

    fn real(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.real_opt(key)?.unwrap_or(default))
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Self::value_error(key, format!("expected a nonnegative integer, got `{v}`"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(Self::value_error(key, format!("expected true or false, got `{v}`"))),
        }
    }

    fn reals(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => split_list(v).map(|s| parse_real(s).map_err(|m| Self::value_error(key, m))).collect(),
        }
    }
}

/// Accepts plain decimals and fractions such as `1/64`.
pub fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad number `{s}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad number `{s}`"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("bad number `{s}`"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

/// `name` or `name(a, b, ...)`.
fn parse_call(s: &str) -> std::result::Result<(String, Vec<f64>), String> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s.to_string(), Vec::new())),
        Some(open) => {
            let inner = s[open + 1..].strip_suffix(')').ok_or_else(|| format!("missing `)` in `{s}`"))?;
            let args = split_list(inner).map(parse_real).collect::<std::result::Result<Vec<_>, _>>()?;
            Ok((s[..open].trim().to_string(), args))
        }
    }
}

#[derive(Debug, Clone)]
pub enum Geometry {
    Shape(AnalyticShape),
    /// Half-space `n . x <= offset`.
    Plane { normal: Vec3, offset: f64 },
}

impl Geometry {
    pub fn analytic(&self) -> Option<&AnalyticShape> {
        match self {
            Geometry::Shape(s) => Some(s),
            Geometry::Plane { .. } => None,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Geometry::Shape(AnalyticShape::Sphere { .. }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalPreset {
    Area,
    Willmore,
    Helfrich(f64),
    Gauss,
    AnisoDiag(f64, f64, f64),
    /// `A(H) = H`.
    Mean,
    /// `F(H, G) = H^2 + G`.
    MeanSquaredPlusGauss,
    Zero,
}

impl FunctionalPreset {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        let (name, args) = parse_call(s)?;
        let arity = |n: usize| -> std::result::Result<(), String> {
            if args.len() == n {
                Ok(())
            } else {
                Err(format!("`{name}` takes {n} argument(s), got {}", args.len()))
            }
        };
        let preset = match name.as_str() {
            "area" => FunctionalPreset::Area,
            "willmore" => FunctionalPreset::Willmore,
            "helfrich" => {
                arity(1)?;
                FunctionalPreset::Helfrich(args[0])
            }
            "gauss" => FunctionalPreset::Gauss,
            "aniso_diag" => {
                arity(3)?;
                FunctionalPreset::AnisoDiag(args[0], args[1], args[2])
            }
            "mean" => FunctionalPreset::Mean,
            "h2_plus_g" => FunctionalPreset::MeanSquaredPlusGauss,
            "zero" => FunctionalPreset::Zero,
            other => return Err(format!("unknown functional `{other}`")),
        };
        if name != "helfrich" && name != "aniso_diag" {
            arity(0)?;
        }
        Ok(preset)
    }

    pub fn spec(&self) -> geoflow::Result<FunctionalSpec> {
        Ok(match *self {
            FunctionalPreset::Area => FunctionalSpec::area(),
            FunctionalPreset::Willmore => FunctionalSpec::willmore(),
            FunctionalPreset::Helfrich(c0) => FunctionalSpec::helfrich(c0),
            FunctionalPreset::Gauss => FunctionalSpec::gauss(),
            FunctionalPreset::AnisoDiag(a, b, c) => FunctionalSpec::aniso_diag(a, b, c)?,
            FunctionalPreset::Mean => FunctionalSpec::mean_polynomial(vec![0.0, 1.0]),
            FunctionalPreset::MeanSquaredPlusGauss => FunctionalSpec::gauss_mean_polynomial(vec![(1.0, 2, 0), (1.0, 0, 1)]),
            FunctionalPreset::Zero => FunctionalSpec::mean_polynomial(vec![]),
        })
    }

    /// Closed-form value of the energy, when one is known.
    pub fn exact_energy(&self, geometry: &Geometry) -> Option<f64> {
        use std::f64::consts::PI;
        let shape = geometry.analytic()?;
        match (self, shape) {
            (FunctionalPreset::Zero, _) => Some(0.0),
            (FunctionalPreset::Area, s) => s.exact_area(),
            (FunctionalPreset::Gauss, s) => s.exact_total_gauss(),
            (FunctionalPreset::Willmore, AnalyticShape::Sphere { .. }) => Some(16.0 * PI),
            (FunctionalPreset::Mean, AnalyticShape::Sphere { radius, .. }) => Some(8.0 * PI * radius),
            (FunctionalPreset::Helfrich(c0), AnalyticShape::Sphere { radius, .. }) => {
                Some((2.0 / radius - c0).powi(2) * 4.0 * PI * radius * radius)
            }
            (FunctionalPreset::MeanSquaredPlusGauss, AnalyticShape::Sphere { .. }) => Some(20.0 * PI),
            (FunctionalPreset::AnisoDiag(a, b, c), AnalyticShape::Sphere { .. }) if a == b && b == c => {
                shape.exact_area().map(|area| a.sqrt() * area)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outputs {
    pub csv: Option<PathBuf>,
    pub vtk: Option<PathBuf>,
    pub vtk_stride: usize,
    pub vtk_fields: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Thresholds {
    pub gradient_tol: f64,
    pub max_density: Option<f64>,
    pub integrate_tol: f64,
    pub integrate_abs_tol: f64,
    pub residual_c: f64,
    pub ibp_tol: f64,
    pub equiv_c_aniso: f64,
    pub equiv_c_gauss: f64,
    pub expect_energy: Option<f64>,
    pub energy_tol: f64,
    pub radius_law_cells: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub run: String,
    pub geometry: Geometry,
    pub h: f64,
    pub margin_cells: f64,
    pub half_box: Option<f64>,
    pub eps_cells: f64,
    pub functional: FunctionalPreset,
    pub redistance: Option<bool>,
    pub velocities: Vec<NamedVelocity>,
    pub flow: FlowConfig,
    pub refine: bool,
    pub outputs: Outputs,
    pub thresholds: Thresholds,
}

/// Default `C` in the `C h` bounds of `validate`: (residuals, anisotropic gap,
/// Gauss-mean gap). Measured at h = 1/64 (sphere, ellipsoid) and 1/80 (torus)
/// with about 50% headroom; coarser grids need larger values.
fn validation_constants(geometry: &Geometry) -> (f64, f64, f64) {
    fn of(shape: &AnalyticShape) -> (f64, f64, f64) {
        match shape {
            AnalyticShape::Sphere { .. } => (5.0, 1.0, 7.0),
            AnalyticShape::Ellipsoid { .. } => (20.0, 3.0, 100.0),
            AnalyticShape::Torus { .. } => (100.0, 20.0, 1400.0),
            AnalyticShape::Perturbed { base, .. } => of(base),
        }
    }
    match geometry {
        Geometry::Shape(s) => of(s),
        Geometry::Plane { .. } => (5.0, 1.0, 7.0),
    }
}

pub const VTK_FIELDS: &[&str] = &["phi", "density", "mean", "gauss"];

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        fn err(key: &str, message: impl Into<String>) -> ConfigError {
            RawConfig::value_error(key, message)
        }
        let run = raw.string("run", "geoflow");
        if run.is_empty() || run.contains(['/', '\\']) {
            return Err(err("run", "must be a non-empty file-name stem"));
        }

        let shape_name = raw.string("shape", "sphere");
        let mut geometry = match shape_name.as_str() {
            "sphere" => Geometry::Shape(AnalyticShape::sphere(raw.real("radius", 0.5)?)),
            "ellipsoid" => {
                let a = raw.reals("axes", &[0.4, 0.4, 0.6])?;
                if a.len() != 3 {
                    return Err(err("axes", "expected three semi-axes"));
                }
                Geometry::Shape(AnalyticShape::ellipsoid(a[0], a[1], a[2]))
            }
            "torus" => Geometry::Shape(AnalyticShape::torus(raw.real("major", 0.5)?, raw.real("minor", 0.2)?)),
            "plane" => {
                let n = raw.reals("plane_normal", &[0.0, 0.0, 1.0])?;
                if n.len() != 3 {
                    return Err(err("plane_normal", "expected three components"));
                }
                let n = Vec3::new(n[0], n[1], n[2]);
                if n.norm() == 0.0 {
                    return Err(err("plane_normal", "must be nonzero"));
                }
                Geometry::Plane { normal: n.normalize(), offset: raw.real("plane_offset", 0.0)? }
            }
            other => return Err(err("shape", format!("unknown shape `{other}`"))),
        };
        if let Geometry::Shape(s) = &geometry {
            s.validate().map_err(|e| err("shape", e.to_string()))?;
        }
        match raw.string("perturb", "none").as_str() {
            "none" => {}
            p @ ("affine" | "exp") => {
                let Geometry::Shape(s) = geometry else {
                    return Err(err("perturb", "only analytic shapes can be perturbed"));
                };
                let m = if p == "affine" {
                    Multiplier::Affine { constant: 2.0, slope: Vec3::new(1.0, 0.0, 0.0) }
                } else {
                    Multiplier::Exponential { rate: Vec3::new(1.0, 0.0, 0.0) }
                };
                geometry = Geometry::Shape(s.perturbed(m));
            }
            other => return Err(err("perturb", format!("expected none, affine or exp, got `{other}`"))),
        }

        let h = raw.real("h", 1.0 / 32.0)?;
        if !(h > 0.0) {
            return Err(err("h", "must be positive"));
        }
        let half_box = raw.real_opt("box")?;
        if matches!(geometry, Geometry::Plane { .. }) && half_box.is_none() {
            return Err(err("box", "a plane needs an explicit box half-width"));
        }
        let functional = FunctionalPreset::parse(&raw.string("functional", "area")).map_err(|m| err("functional", m))?;
        let redistance = match raw.string("redistance", "auto").as_str() {
            "auto" => None,
            "true" => Some(true),
            "false" => Some(false),
            other => return Err(err("redistance", format!("expected auto, true or false, got `{other}`"))),
        };
        let velocities = split_list(&raw.string("velocities", "unit_normal,linear,trig"))
            .map(|v| NamedVelocity::parse(v).ok_or_else(|| err("velocities", format!("unknown velocity `{v}`"))))
            .collect::<Result<Vec<_>>>()?;

        let flow = FlowConfig {
            dt_safety: raw.real("dt_safety", 0.9)?,
            redistance_every: raw.count("redistance_every", 1)?,
            max_steps: raw.count("steps", 100)?,
            stop_grad_norm: raw.real("stop_grad_norm", 0.0)?,
            max_time: raw.real_opt("max_time")?,
            min_radius: raw.real_opt("min_radius")?,
            mono_tol: raw.real("mono_tol", 1e-3)?,
        };

        let vtk_fields: Vec<String> = split_list(&raw.string("vtk_fields", "phi")).map(str::to_string).collect();
        if let Some(f) = vtk_fields.iter().find(|f| !VTK_FIELDS.contains(&f.as_str())) {
            return Err(err("vtk_fields", format!("unknown field `{f}`, expected one of {VTK_FIELDS:?}")));
        }
        let vtk_stride = raw.count("vtk_stride", 10)?;
        if vtk_stride == 0 {
            return Err(err("vtk_stride", "must be positive"));
        }
        let outputs = Outputs {
            csv: raw.get("csv").map(PathBuf::from),
            vtk: raw.get("vtk").map(PathBuf::from),
            vtk_stride,
            vtk_fields,
        };

        let (residual_c, equiv_c_aniso, equiv_c_gauss) = validation_constants(&geometry);
        let thresholds = Thresholds {
            gradient_tol: raw.real("gradient_tol", 0.06)?,
            max_density: raw.real_opt("max_density")?,
            integrate_tol: raw.real("integrate_tol", 0.02)?,
            integrate_abs_tol: raw.real("integrate_abs_tol", 0.15)?,
            residual_c: raw.real("residual_c", residual_c)?,
            ibp_tol: raw.real("ibp_tol", 0.03)?,
            equiv_c_aniso: raw.real("equiv_c_aniso", equiv_c_aniso)?,
            equiv_c_gauss: raw.real("equiv_c_gauss", equiv_c_gauss)?,
            expect_energy: raw.real_opt("expect_energy")?,
            energy_tol: raw.real("energy_tol", 0.05)?,
            radius_law_cells: raw.real("radius_law_cells", 2.0)?,
        };

        Ok(Self {
            run,
            geometry,
            h,
            margin_cells: raw.real("margin", 6.0)?,
            half_box,
            eps_cells: raw.real("eps_cells", 3.0)?,
            functional,
            redistance,
            velocities,
            flow,
            refine: raw.flag("refine", false)?,
            outputs,
            thresholds,
        })
    }

    pub fn grid(&self, h: f64) -> geoflow::Result<GridSpec> {
        match (&self.geometry, self.half_box) {
            (_, Some(half)) => GridSpec::centered_cube(half, h),
            (Geometry::Shape(s), None) => s.fitted_grid(h, self.margin_cells * h),
            (Geometry::Plane { .. }, None) => unreachable!("checked when parsing"),
        }
    }

    pub fn band_width(&self, h: f64) -> f64 {
        default_band_width(h).max((self.eps_cells + 2.0) * h)
    }

    pub fn level_set(&self, h: f64) -> geoflow::Result<LevelSet> {
        let grid = self.grid(h)?;
        match &self.geometry {
            Geometry::Shape(s) => sample_with_band(s, grid, self.band_width(h)),
            Geometry::Plane { normal, offset } => {
                let (n, c) = (*normal, *offset);
                let phi = ScalarField3::from_fn(grid, |p| p.dot(&n) - c);
                LevelSet::new(phi, self.band_width(h))?.certify_distance()
            }
        }
    }

    pub fn kernel(&self, grid: &GridSpec) -> SmearKernel {
        SmearKernel::cells(grid, self.eps_cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let mut raw = RawConfig::parse("# header\nshape = torus  # inline\nh = 1/48\n\nfunctional = aniso_diag(1, 1, 4)\n").unwrap();
        raw.apply_override("h=1/32").unwrap();
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert!((cfg.h - 1.0 / 32.0).abs() < 1e-15);
        assert_eq!(cfg.functional, FunctionalPreset::AnisoDiag(1.0, 1.0, 4.0));
        assert!(matches!(cfg.geometry, Geometry::Shape(AnalyticShape::Torus { .. })));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RawConfig::parse("shape sphere"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RawConfig::parse("colour = red"), Err(ConfigError::UnknownKey(_))));
        let raw = RawConfig::parse("functional = helfrich").unwrap();
        assert!(RunConfig::from_raw(&raw).is_err());
        let raw = RawConfig::parse("h = -1").unwrap();
        assert!(RunConfig::from_raw(&raw).is_err());
        let raw = RawConfig::parse("shape = plane").unwrap();
        assert!(RunConfig::from_raw(&raw).is_err());
        let mut raw = RawConfig::default();
        assert!(raw.apply_override("novalue").is_err());
    }

    #[test]
    fn fractions_and_decimals() {
        assert_eq!(parse_real("1/4").unwrap(), 0.25);
        assert_eq!(parse_real(" 2.5 ").unwrap(), 2.5);
        assert!(parse_real("1/0").is_err());
        assert!(parse_real("abc").is_err());
    }

    #[test]
    fn exact_energies() {
        use std::f64::consts::PI;
        let sphere = Geometry::Shape(AnalyticShape::sphere(0.5));
        assert!((FunctionalPreset::Area.exact_energy(&sphere).unwrap() - PI).abs() < 1e-12);
        assert!((FunctionalPreset::Helfrich(0.0).exact_energy(&sphere).unwrap() - 16.0 * PI).abs() < 1e-12);
        let torus = Geometry::Shape(AnalyticShape::torus(0.5, 0.2));
        assert_eq!(FunctionalPreset::Gauss.exact_energy(&torus), Some(0.0));
        assert_eq!(FunctionalPreset::Willmore.exact_energy(&torus), None);
    }
}
