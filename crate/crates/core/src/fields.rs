//! Uniform-grid scalar, vector and matrix fields with second-order
//! finite-difference stencils.
//!
//! Every field lives on a [`GridSpec`]: a box of `dims` points per axis with a
//! single spacing `h`. Data is stored x-fastest, so the linear index of
//! `(i, j, k)` is `i + nx * (j + ny * k)`.
//!
//! Interior derivatives use central differences, boundary rows use second
//! order one-sided stencils. All operators are pure and evaluate z-slabs in
//! parallel.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{GeoError, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Smallest number of points allowed along any axis.
pub const MIN_POINTS_PER_AXIS: usize = 8;

/// Uniform box grid shared by every field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dims: [usize; 3],
    origin: [f64; 3],
    h: f64,
}

impl GridSpec {
    pub fn new(dims: [usize; 3], origin: [f64; 3], h: f64) -> Result<Self> {
        if dims.iter().any(|&d| d < MIN_POINTS_PER_AXIS) {
            return Err(GeoError::InvalidGrid(format!(
                "every axis needs at least {MIN_POINTS_PER_AXIS} points, got {dims:?}"
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(GeoError::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(GeoError::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self { dims, origin, h })
    }

    /// Grid covering the box `[lo, hi]` with spacing `h`. The upper corner is
    /// rounded outward to the nearest grid line.
    pub fn from_box(lo: [f64; 3], hi: [f64; 3], h: f64) -> Result<Self> {
        let mut dims = [0usize; 3];
        for a in 0..3 {
            if hi[a] <= lo[a] {
                return Err(GeoError::InvalidGrid(format!("empty box along axis {a}")));
            }
            dims[a] = ((hi[a] - lo[a]) / h - 1e-9).ceil() as usize + 1;
        }
        Self::new(dims, lo, h)
    }

    /// Cube `[-half, half]^3` with spacing `h`, centred so that the origin is
    /// a grid point.
    pub fn centered_cube(half: f64, h: f64) -> Result<Self> {
        Self::centered_box([half; 3], h)
    }

    /// Box `[-half_x, half_x] x [-half_y, half_y] x [-half_z, half_z]`
    /// rounded outward so that the origin is a grid point.
    pub fn centered_box(half: [f64; 3], h: f64) -> Result<Self> {
        let mut dims = [0usize; 3];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            let m = (half[a] / h - 1e-9).ceil() as usize;
            dims[a] = 2 * m + 1;
            origin[a] = -(m as f64) * h;
        }
        Self::new(dims, origin, h)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    /// Upper corner of the box.
    pub fn upper(&self) -> [f64; 3] {
        let mut u = self.origin;
        for a in 0..3 {
            u[a] += (self.dims[a] - 1) as f64 * self.h;
        }
        u
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
            self.origin[2] + k as f64 * self.h,
        )
    }

    #[inline]
    pub fn point_at(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.point(i, j, k)
    }

    /// True if the point lies on one of the six box faces.
    #[inline]
    pub fn on_boundary(&self, idx: usize) -> bool {
        let c = self.coords(idx);
        (0..3).any(|a| c[a] == 0 || c[a] + 1 == self.dims[a])
    }

    /// Number of grid points between `idx` and the nearest box face.
    #[inline]
    pub fn boundary_distance(&self, idx: usize) -> usize {
        let c = self.coords(idx);
        (0..3)
            .map(|a| c[a].min(self.dims[a] - 1 - c[a]))
            .min()
            .unwrap_or(0)
    }

    /// Stride of the linear index along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    /// Same box with the spacing halved (points per axis `2n - 1`).
    pub fn refined(&self) -> Result<Self> {
        let dims = self.dims.map(|d| 2 * d - 1);
        Self::new(dims, self.origin, self.h / 2.0)
    }

    fn slab(&self) -> usize {
        self.dims[0] * self.dims[1]
    }
}

/// Scalar values sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3 {
    grid: GridSpec,
    data: Vec<f64>,
}

impl ScalarField3 {
    pub fn new(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        check_len(&grid, data.len())?;
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(GeoError::NonFinite(format!("scalar field value at index {p}")));
        }
        Ok(Self { grid, data })
    }

    pub(crate) fn from_vec(grid: GridSpec, data: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        Self { grid, data }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self { grid, data: vec![value; grid.len()] }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every grid point.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(Vec3) -> f64 + Sync,
    {
        let data = (0..grid.len()).into_par_iter().map(|idx| f(grid.point_at(idx))).collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.index(i, j, k)]
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Sync,
    {
        Self::from_vec(self.grid, self.data.par_iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map<F>(&self, other: &ScalarField3, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let data = self.data.par_iter().zip(other.data.par_iter()).map(|(&a, &b)| f(a, b)).collect();
        Self::from_vec(self.grid, data)
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &ScalarField3) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField3) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField3) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest magnitude over the points where `mask` is set.
    pub fn max_abs_where(&self, mask: &[bool]) -> f64 {
        self.data
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .fold(0.0_f64, |m, (v, _)| m.max(v.abs()))
    }

    /// Mean magnitude over the points where `mask` is set.
    pub fn mean_abs_where(&self, mask: &[bool]) -> f64 {
        let (s, c) = self
            .data
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v.abs(), c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    }

    /// Trilinear interpolation at an arbitrary point inside the box.
    pub fn interpolate(&self, p: Vec3) -> f64 {
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let s = (p[a] - g.origin[a]) / g.h;
            let max_cell = (g.dims[a] - 2) as f64;
            let c = s.floor().clamp(0.0, max_cell);
            base[a] = c as usize;
            t[a] = (s - c).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for dk in 0..2 {
            let wz = if dk == 0 { 1.0 - t[2] } else { t[2] };
            for dj in 0..2 {
                let wy = if dj == 0 { 1.0 - t[1] } else { t[1] };
                for di in 0..2 {
                    let wx = if di == 0 { 1.0 - t[0] } else { t[0] };
                    acc += wx * wy * wz * self.at(base[0] + di, base[1] + dj, base[2] + dk);
                }
            }
        }
        acc
    }
}

/// One 3-vector per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField3 {
    grid: GridSpec,
    data: Vec<Vec3>,
}

impl VectorField3 {
    pub fn new(grid: GridSpec, data: Vec<Vec3>) -> Result<Self> {
        check_len(&grid, data.len())?;
        if let Some(p) = data.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeoError::NonFinite(format!("vector field value at index {p}")));
        }
        Ok(Self { grid, data })
    }

    pub(crate) fn from_vec(grid: GridSpec, data: Vec<Vec3>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        Self { grid, data }
    }

    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(Vec3) -> Vec3 + Sync,
    {
        let data = (0..grid.len()).into_par_iter().map(|idx| f(grid.point_at(idx))).collect();
        Self { grid, data }
    }

    pub fn from_components(x: &ScalarField3, y: &ScalarField3, z: &ScalarField3) -> Self {
        assert!(x.grid == y.grid && y.grid == z.grid, "fields live on different grids");
        let data = (0..x.data.len())
            .into_par_iter()
            .map(|i| Vec3::new(x.data[i], y.data[i], z.data[i]))
            .collect();
        Self::from_vec(x.grid, data)
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, data: vec![Vec3::zeros(); grid.len()] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[Vec3] {
        &self.data
    }

    pub fn component(&self, c: usize) -> ScalarField3 {
        ScalarField3::from_vec(self.grid, self.data.par_iter().map(|v| v[c]).collect())
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(&Vec3) -> Vec3 + Sync,
    {
        Self::from_vec(self.grid, self.data.par_iter().map(&f).collect())
    }

    /// Pointwise scalar product with another vector field.
    pub fn dot(&self, other: &VectorField3) -> ScalarField3 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let data = self.data.par_iter().zip(other.data.par_iter()).map(|(a, b)| a.dot(b)).collect();
        ScalarField3::from_vec(self.grid, data)
    }

    /// Pointwise product with a scalar field.
    pub fn scale_by(&self, s: &ScalarField3) -> Self {
        assert_eq!(self.grid, s.grid, "fields live on different grids");
        let data = self.data.par_iter().zip(s.data.par_iter()).map(|(v, &a)| v * a).collect();
        Self::from_vec(self.grid, data)
    }

    pub fn add(&self, other: &VectorField3) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let data = self.data.par_iter().zip(other.data.par_iter()).map(|(a, b)| a + b).collect();
        Self::from_vec(self.grid, data)
    }

    pub fn sub(&self, other: &VectorField3) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let data = self.data.par_iter().zip(other.data.par_iter()).map(|(a, b)| a - b).collect();
        Self::from_vec(self.grid, data)
    }

    pub fn norm(&self) -> ScalarField3 {
        ScalarField3::from_vec(self.grid, self.data.par_iter().map(|v| v.norm()).collect())
    }
}

/// One 3x3 matrix per grid point. Entry `(i, j)` of a gradient field holds
/// `d v_i / d x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField3 {
    grid: GridSpec,
    data: Vec<Mat3>,
}

impl MatrixField3 {
    pub fn new(grid: GridSpec, data: Vec<Mat3>) -> Result<Self> {
        check_len(&grid, data.len())?;
        if let Some(p) = data.iter().position(|m| !m.iter().all(|c| c.is_finite())) {
            return Err(GeoError::NonFinite(format!("matrix field value at index {p}")));
        }
        Ok(Self { grid, data })
    }

    pub(crate) fn from_vec(grid: GridSpec, data: Vec<Mat3>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[Mat3] {
        &self.data
    }

    pub fn map_scalar<F>(&self, f: F) -> ScalarField3
    where
        F: Fn(&Mat3) -> f64 + Sync,
    {
        ScalarField3::from_vec(self.grid, self.data.par_iter().map(&f).collect())
    }

    pub fn trace(&self) -> ScalarField3 {
        self.map_scalar(|m| m.trace())
    }

    /// Applies each matrix to the vector of `v` at the same point.
    pub fn apply(&self, v: &VectorField3) -> VectorField3 {
        assert_eq!(self.grid, v.grid, "fields live on different grids");
        let data = self.data.par_iter().zip(v.data.par_iter()).map(|(m, x)| m * x).collect();
        VectorField3::from_vec(self.grid, data)
    }

    /// Applies each transposed matrix to the vector of `v` at the same point.
    pub fn apply_transpose(&self, v: &VectorField3) -> VectorField3 {
        assert_eq!(self.grid, v.grid, "fields live on different grids");
        let data = self
            .data
            .par_iter()
            .zip(v.data.par_iter())
            .map(|(m, x)| m.tr_mul(x))
            .collect();
        VectorField3::from_vec(self.grid, data)
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.data
            .iter()
            .map(|m| (m - m.transpose()).amax())
            .fold(0.0, f64::max)
    }
}

/// `Tr(Cof(A)) = (Tr(A)^2 - Tr(A^2)) / 2`, the second invariant of `A`.
#[inline]
pub fn trace_cofactor(a: &Mat3) -> f64 {
    let t = a.trace();
    0.5 * (t * t - (a * a).trace())
}

/// Projector onto the plane orthogonal to `n`.
#[inline]
pub fn tangent_projector(n: &Vec3) -> Mat3 {
    Mat3::identity() - n * n.transpose()
}

fn check_len(grid: &GridSpec, len: usize) -> Result<()> {
    if grid.len() != len {
        return Err(GeoError::InvalidGrid(format!(
            "data length {len} does not match grid of {} points",
            grid.len()
        )));
    }
    Ok(())
}

/// First derivative along `axis` of raw grid data.
pub(crate) fn partial(grid: &GridSpec, data: &[f64], axis: usize) -> Vec<f64> {
    let stride = grid.stride(axis);
    let n = grid.dims[axis];
    let inv2h = 0.5 / grid.h;
    let mut out = vec![0.0; grid.len()];
    out.par_chunks_mut(grid.slab()).enumerate().for_each(|(k, slab)| {
        let base = k * grid.slab();
        for (local, o) in slab.iter_mut().enumerate() {
            let idx = base + local;
            let c = grid.coords(idx)[axis];
            *o = if c == 0 {
                (-3.0 * data[idx] + 4.0 * data[idx + stride] - data[idx + 2 * stride]) * inv2h
            } else if c + 1 == n {
                (3.0 * data[idx] - 4.0 * data[idx - stride] + data[idx - 2 * stride]) * inv2h
            } else {
                (data[idx + stride] - data[idx - stride]) * inv2h
            };
        }
    });
    out
}

/// Second derivative along `axis` of raw grid data.
fn partial2(grid: &GridSpec, data: &[f64], axis: usize) -> Vec<f64> {
    let s = grid.stride(axis);
    let n = grid.dims[axis];
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let mut out = vec![0.0; grid.len()];
    out.par_chunks_mut(grid.slab()).enumerate().for_each(|(k, slab)| {
        let base = k * grid.slab();
        for (local, o) in slab.iter_mut().enumerate() {
            let idx = base + local;
            let c = grid.coords(idx)[axis];
            *o = if c == 0 {
                (2.0 * data[idx] - 5.0 * data[idx + s] + 4.0 * data[idx + 2 * s] - data[idx + 3 * s])
                    * inv_h2
            } else if c + 1 == n {
                (2.0 * data[idx] - 5.0 * data[idx - s] + 4.0 * data[idx - 2 * s] - data[idx - 3 * s])
                    * inv_h2
            } else {
                (data[idx + s] - 2.0 * data[idx] + data[idx - s]) * inv_h2
            };
        }
    });
    out
}

pub fn gradient(f: &ScalarField3) -> VectorField3 {
    let g = &f.grid;
    let dx = partial(g, &f.data, 0);
    let dy = partial(g, &f.data, 1);
    let dz = partial(g, &f.data, 2);
    let data = (0..g.len()).into_par_iter().map(|i| Vec3::new(dx[i], dy[i], dz[i])).collect();
    VectorField3::from_vec(*g, data)
}

/// Hessian with 3-point second differences on the diagonal and the 4-point
/// cross stencil off the diagonal. The result is exactly symmetric.
pub fn hessian(f: &ScalarField3) -> MatrixField3 {
    let g = &f.grid;
    let diag: Vec<Vec<f64>> = (0..3).map(|a| partial2(g, &f.data, a)).collect();
    let first: Vec<Vec<f64>> = (0..3).map(|a| partial(g, &f.data, a)).collect();
    let dxy = partial(g, &first[0], 1);
    let dxz = partial(g, &first[0], 2);
    let dyz = partial(g, &first[1], 2);
    let data = (0..g.len())
        .into_par_iter()
        .map(|i| {
            Mat3::new(
                diag[0][i], dxy[i], dxz[i], //
                dxy[i], diag[1][i], dyz[i], //
                dxz[i], dyz[i], diag[2][i],
            )
        })
        .collect();
    MatrixField3::from_vec(*g, data)
}

pub fn divergence(v: &VectorField3) -> ScalarField3 {
    let g = &v.grid;
    let mut acc = vec![0.0; g.len()];
    for a in 0..3 {
        let comp: Vec<f64> = v.data.par_iter().map(|x| x[a]).collect();
        let d = partial(g, &comp, a);
        acc.par_iter_mut().zip(d.par_iter()).for_each(|(s, x)| *s += x);
    }
    ScalarField3::from_vec(*g, acc)
}

/// Full gradient `[grad v]` of a vector field: row `i` is the gradient of
/// component `i`.
pub fn vector_gradient(v: &VectorField3) -> MatrixField3 {
    let g = &v.grid;
    let mut rows: Vec<[Vec<f64>; 3]> = Vec::with_capacity(3);
    for c in 0..3 {
        let comp: Vec<f64> = v.data.par_iter().map(|x| x[c]).collect();
        rows.push([partial(g, &comp, 0), partial(g, &comp, 1), partial(g, &comp, 2)]);
    }
    let data = (0..g.len())
        .into_par_iter()
        .map(|i| {
            Mat3::new(
                rows[0][0][i], rows[0][1][i], rows[0][2][i], //
                rows[1][0][i], rows[1][1][i], rows[1][2][i], //
                rows[2][0][i], rows[2][1][i], rows[2][2][i],
            )
        })
        .collect();
    MatrixField3::from_vec(*g, data)
}
