//! Reconstruction of a signed distance function from a zero level set.
//!
//! Near the interface the distance is computed exactly for the tricubic
//! interpolant of `phi`, by a closest-point Newton iteration. The remaining
//! grid is filled by fast sweeping on `|grad d| = 1` with the tube frozen.

use rayon::prelude::*;

use crate::error::{GeoError, Result};
use nalgebra::{Matrix4, Vector4};

use crate::fields::{GridSpec, Mat3, ScalarField3, Vec3};
use crate::geometry::{LevelSet, GRADIENT_FLOOR};

/// Extra cells of exact distance beyond the trusted band.
const TUBE_HALO_CELLS: f64 = 3.0;
const NEWTON_ITERATIONS: usize = 60;
const NEWTON_ITERATIONS_KKT: usize = 12;
const SWEEP_ROUNDS: usize = 4;

/// Tricubic Lagrange interpolation on the 4x4x4 points around a location.
pub(crate) struct Tricubic<'a> {
    grid: &'a GridSpec,
    data: &'a [f64],
}

impl<'a> Tricubic<'a> {
    pub(crate) fn new(field: &'a ScalarField3) -> Self {
        Self { grid: field.grid(), data: field.data() }
    }

    /// Weights and their first and second derivatives at offset `t`.
    fn weights(t: f64) -> [[f64; 4]; 3] {
        let (a, b, c, d) = (t + 1.0, t, t - 1.0, t - 2.0);
        [
            [-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0],
            [
                -(c * d + b * d + b * c) / 6.0,
                (c * d + a * d + a * c) / 2.0,
                -(b * d + a * d + a * b) / 2.0,
                (b * c + a * c + a * b) / 6.0,
            ],
            [-(b + c + d) / 3.0, a + c + d, -(a + b + d), (a + b + c) / 3.0],
        ]
    }

    fn stencil(&self, p: Vec3) -> (usize, [[[f64; 4]; 3]; 3]) {
        let dims = self.grid.dims();
        let o = self.grid.origin();
        let h = self.grid.spacing();
        let mut base = [0usize; 3];
        let mut w = [[[0.0; 4]; 3]; 3];
        for a in 0..3 {
            let s = (p[a] - o[a]) / h;
            let i0 = (s.floor() as isize).clamp(1, dims[a] as isize - 3);
            base[a] = (i0 - 1) as usize;
            w[a] = Self::weights(s - i0 as f64);
        }
        (self.grid.index(base[0], base[1], base[2]), w)
    }

    /// Value and gradient at `p`.
    pub(crate) fn eval(&self, p: Vec3) -> (f64, Vec3) {
        let (v, g, _) = self.eval_full(p, false);
        (v, g)
    }

    /// Value, gradient and (optionally) Hessian at `p`.
    fn eval_full(&self, p: Vec3, hessian: bool) -> (f64, Vec3, Mat3) {
        let (start, w) = self.stencil(p);
        let h = self.grid.spacing();
        let (sy, sz) = (self.grid.stride(1), self.grid.stride(2));
        let mut v = 0.0;
        let mut g = Vec3::zeros();
        let mut m = [0.0; 6];
        let (x, y, z) = (w[0], w[1], w[2]);
        for k in 0..4 {
            for j in 0..4 {
                let row = &self.data[start + j * sy + k * sz..][..4];
                let mut a = [0.0; 3];
                for (i, &f) in row.iter().enumerate() {
                    a[0] += f * x[0][i];
                    a[1] += f * x[1][i];
                    a[2] += f * x[2][i];
                }
                let (y0z0, y1z0, y0z1) = (y[0][j] * z[0][k], y[1][j] * z[0][k], y[0][j] * z[1][k]);
                v += a[0] * y0z0;
                g.x += a[1] * y0z0;
                g.y += a[0] * y1z0;
                g.z += a[0] * y0z1;
                if hessian {
                    m[0] += a[2] * y0z0;
                    m[1] += a[0] * y[2][j] * z[0][k];
                    m[2] += a[0] * y[0][j] * z[2][k];
                    m[3] += a[1] * y1z0;
                    m[4] += a[1] * y0z1;
                    m[5] += a[0] * y[1][j] * z[1][k];
                }
            }
        }
        let hess = Mat3::new(m[0], m[3], m[4], m[3], m[1], m[5], m[4], m[5], m[2]) / (h * h);
        (v, g / h, hess)
    }
}

/// Unsigned distance from `x` to the zero set of the interpolant, or `None`
/// if no iteration lands on the surface. Newton on the optimality system
/// comes first; the projection iteration with damped tangential steps
/// handles the points Newton misses.
fn closest_distance(interp: &Tricubic, x: Vec3, h: f64) -> Option<f64> {
    closest_point_newton(interp, x, h).or_else(|| {
        [1.0, 0.5, 0.25].into_iter().find_map(|damping| closest_point_iteration(interp, x, h, damping))
    })
}

/// Accepts `y` as the foot of `x` if it lies on the surface with `x - y`
/// nearly parallel to the normal. The interpolant is only continuous across
/// cell faces, so iterates can oscillate there; a tangential offset `t`
/// changes the distance by `O(t^2)`.
fn accept(interp: &Tricubic, x: Vec3, y: Vec3, h: f64) -> Option<f64> {
    let (p, g) = interp.eval(y);
    let r = x - y;
    let tangential = (r - g * (r.dot(&g) / g.norm_squared().max(1e-300))).norm();
    (p.abs() < 1e-6 * h * g.norm() && tangential < 1e-2 * h).then(|| r.norm())
}

/// Newton on `y - x + lambda grad phi(y) = 0`, `phi(y) = 0`.
fn closest_point_newton(interp: &Tricubic, x: Vec3, h: f64) -> Option<f64> {
    let (p0, g0) = interp.eval(x);
    let g2 = g0.norm_squared();
    if g2 < GRADIENT_FLOOR * GRADIENT_FLOOR {
        return None;
    }
    let mut y = x - g0 * (p0 / g2);
    let mut lambda = p0 / g2;
    for _ in 0..NEWTON_ITERATIONS_KKT {
        let (p, g, hess) = interp.eval_full(y, true);
        let res = y - x + g * lambda;
        if p.abs() < 1e-10 * h * g.norm() && res.norm() < 1e-8 * h {
            break;
        }
        let mut jac = Matrix4::zeros();
        jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Mat3::identity() + hess * lambda));
        jac.fixed_view_mut::<3, 1>(0, 3).copy_from(&g);
        jac.fixed_view_mut::<1, 3>(3, 0).copy_from(&g.transpose());
        let rhs = -Vector4::new(res.x, res.y, res.z, p);
        let delta = jac.lu().solve(&rhs)?;
        let mut dy = Vec3::new(delta[0], delta[1], delta[2]);
        let mut dl = delta[3];
        let len = dy.norm();
        if len > h {
            dy *= h / len;
            dl *= h / len;
        }
        y += dy;
        lambda += dl;
    }
    // The foot must be a local minimum of the distance on the surface.
    let (_, g, hess) = interp.eval_full(y, true);
    let nn = g * g.transpose() / g.norm_squared().max(1e-300);
    let proj = Mat3::identity() - nn;
    let reduced = proj * (Mat3::identity() + hess * lambda) * proj + nn;
    if reduced.symmetric_eigenvalues().min() <= 0.0 {
        return None;
    }
    accept(interp, x, y, h)
}

fn closest_point_iteration(interp: &Tricubic, x: Vec3, h: f64, damping: f64) -> Option<f64> {
    let (p0, g0) = interp.eval(x);
    let g2 = g0.norm_squared();
    if g2 < GRADIENT_FLOOR * GRADIENT_FLOOR {
        return None;
    }
    let mut y = x - g0 * (p0 / g2);
    for _ in 0..NEWTON_ITERATIONS {
        let (p, g) = interp.eval(y);
        let g2 = g.norm_squared();
        if g2 < GRADIENT_FLOOR * GRADIENT_FLOOR {
            return None;
        }
        let half = y - g * (p / g2);
        let r = x - half;
        let step = (half - y) + (r - g * (r.dot(&g) / g2)) * damping;
        let len = step.norm();
        y += if len > h { step * (h / len) } else { step };
        if len < 1e-10 * h {
            break;
        }
    }
    accept(interp, x, y, h)
}

/// Godunov update of the eikonal equation from the smallest neighbour values
/// along each axis.
#[inline]
fn eikonal_update(mut a: [f64; 3], h: f64) -> f64 {
    a.sort_by(|x, y| x.total_cmp(y));
    let mut d = a[0] + h;
    if d > a[1] {
        let s = a[0] + a[1];
        d = 0.5 * (s + (2.0 * h * h - (a[0] - a[1]).powi(2)).max(0.0).sqrt());
        if d > a[2] {
            let s = a[0] + a[1] + a[2];
            let q = a[0] * a[0] + a[1] * a[1] + a[2] * a[2] - h * h;
            d = (s + (s * s - 3.0 * q).max(0.0).sqrt()) / 3.0;
        }
    }
    d
}

fn fast_sweep(grid: &GridSpec, dist: &mut [f64], frozen: &[bool]) {
    let [nx, ny, nz] = grid.dims();
    let h = grid.spacing();
    let (sy, sz) = (grid.stride(1), grid.stride(2));
    let axis_min = |d: &[f64], idx: usize, i: usize, n: usize, s: usize| -> f64 {
        let lo = if i > 0 { d[idx - s] } else { f64::INFINITY };
        let hi = if i + 1 < n { d[idx + s] } else { f64::INFINITY };
        lo.min(hi)
    };
    for _ in 0..SWEEP_ROUNDS {
        let mut changed = false;
        for dir in 0..8 {
            let xs: Vec<usize> = if dir & 1 == 0 { (0..nx).collect() } else { (0..nx).rev().collect() };
            let ys: Vec<usize> = if dir & 2 == 0 { (0..ny).collect() } else { (0..ny).rev().collect() };
            let zs: Vec<usize> = if dir & 4 == 0 { (0..nz).collect() } else { (0..nz).rev().collect() };
            for &k in &zs {
                for &j in &ys {
                    for &i in &xs {
                        let idx = grid.index(i, j, k);
                        if frozen[idx] {
                            continue;
                        }
                        let a = [
                            axis_min(dist, idx, i, nx, 1),
                            axis_min(dist, idx, j, ny, sy),
                            axis_min(dist, idx, k, nz, sz),
                        ];
                        if a.iter().all(|v| v.is_infinite()) {
                            continue;
                        }
                        let d = eikonal_update(a, h);
                        if d < dist[idx] {
                            dist[idx] = d;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Rebuilds a signed distance function with the same zero level set.
pub fn redistance(ls: &LevelSet) -> Result<LevelSet> {
    reinitialize(ls)?.certify_distance()
}

/// Same as [`redistance`] without the final distance check, for flows that
/// do not rely on it (a shrinking sphere's band eventually reaches its
/// centre).
pub(crate) fn reinitialize(ls: &LevelSet) -> Result<LevelSet> {
    LevelSet::new(redistanced_field(ls)?, ls.band_width())
}

fn redistanced_field(ls: &LevelSet) -> Result<ScalarField3> {
    if !ls.has_interface() {
        return Err(GeoError::NoInterface);
    }
    let grid = *ls.grid();
    let h = grid.spacing();
    let phi = ls.phi();
    let tube_width = ls.band_width() + TUBE_HALO_CELLS * h;
    let interp = Tricubic::new(phi);
    let grad_norm = ls.grad_norm().data();

    let tube: Vec<Option<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let p = phi.data()[idx];
            let est = p.abs() / grad_norm[idx].max(GRADIENT_FLOOR);
            if est > tube_width {
                return None;
            }
            closest_distance(&interp, grid.point_at(idx), h)
        })
        .collect();

    let frozen: Vec<bool> = tube.iter().map(Option::is_some).collect();
    if !frozen.iter().any(|&f| f) {
        return Err(GeoError::NoInterface);
    }
    let mut dist: Vec<f64> = tube.iter().map(|d| d.unwrap_or(f64::INFINITY)).collect();
    fast_sweep(&grid, &mut dist, &frozen);

    let signed: Vec<f64> = dist
        .iter()
        .zip(phi.data())
        .map(|(&d, &p)| if p < 0.0 { -d } else { d })
        .collect();
    ScalarField3::new(grid, signed)
}

/// Largest displacement of the zero crossing along grid edges where the
/// original field changes sign. An edge that loses its crossing counts as
/// at least one cell.
pub fn interface_shift(before: &ScalarField3, after: &ScalarField3) -> f64 {
    let grid = before.grid();
    let [nx, ny, nz] = grid.dims();
    let h = grid.spacing();
    let (a, b) = (before.data(), after.data());
    let mut worst = 0.0_f64;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.index(i, j, k);
                let here = [i, j, k];
                for axis in 0..3 {
                    if here[axis] + 1 >= grid.dims()[axis] {
                        continue;
                    }
                    let nb = idx + grid.stride(axis);
                    let (p, q) = (a[idx], a[nb]);
                    if (p < 0.0) == (q < 0.0) {
                        continue;
                    }
                    let t = p / (p - q);
                    let (r, s) = (b[idx], b[nb]);
                    let shift = if (r < 0.0) != (s < 0.0) {
                        (t - r / (r - s)).abs() * h
                    } else {
                        h + r.abs().min(s.abs())
                    };
                    worst = worst.max(shift);
                }
            }
        }
    }
    worst
}
