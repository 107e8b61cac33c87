//! Uniform Cartesian grids, scalar fields with ghost layers, and the finite
//! difference stencils used by the level set stages.
//!
//! Storage is a flat vector in x-fastest order over the padded box
//! `[-ghost, dims + ghost)^3`. Stencils address neighbours by flat offset, so
//! every read stays within `ghost` cells of an interior node.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::molecule::Cube;
use crate::scalar::Real;
use crate::vec3::Vec3;

/// Ghost width required by the 7-point WENO5 line stencil.
pub const WENO_GHOST: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid<T> {
    /// Position of interior node `(0, 0, 0)`.
    pub origin: Vec3<T>,
    pub h: T,
    pub dims: [usize; 3],
    pub ghost: usize,
}

impl<T: Real> Grid<T> {
    pub fn new(origin: Vec3<T>, h: T, dims: [usize; 3], ghost: usize) -> Result<Self> {
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::Config(format!("grid spacing must be positive, got {h}")));
        }
        if dims.iter().any(|&d| d < 8) {
            return Err(Error::Config(format!("grid needs at least 8 nodes per axis, got {dims:?}")));
        }
        if ghost < WENO_GHOST {
            return Err(Error::Config(format!("ghost width {ghost} < {WENO_GHOST}")));
        }
        Ok(Self {
            origin,
            h,
            dims,
            ghost,
        })
    }

    /// `n^3` cell-centered nodes covering `cube`: `h = 2 * half_width / n` and
    /// the nodes sit at the cell midpoints, symmetric about the cube center.
    pub fn cell_centered(cube: &Cube<T>, n: usize) -> Result<Self> {
        let h = T::of(2.0) * cube.half_width / T::of_usize(n);
        let origin = cube.lower() + Vec3::splat(h * T::of(0.5));
        Self::new(origin, h, [n; 3], WENO_GHOST)
    }

    #[inline(always)]
    pub fn padded_dims(&self) -> [usize; 3] {
        let g2 = 2 * self.ghost;
        [self.dims[0] + g2, self.dims[1] + g2, self.dims[2] + g2]
    }

    pub fn padded_len(&self) -> usize {
        let p = self.padded_dims();
        p[0] * p[1] * p[2]
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Flat offset between neighbours along `axis`.
    #[inline(always)]
    pub fn stride(&self, axis: usize) -> usize {
        let p = self.padded_dims();
        match axis {
            0 => 1,
            1 => p[0],
            2 => p[0] * p[1],
            _ => panic!("axis {axis} out of range"),
        }
    }

    /// Flat index of a possibly-ghost node.
    #[inline(always)]
    pub fn index(&self, i: isize, j: isize, k: isize) -> usize {
        let g = self.ghost as isize;
        let p = self.padded_dims();
        debug_assert!(
            i >= -g && i < self.dims[0] as isize + g,
            "x index {i} outside padded grid"
        );
        debug_assert!(
            j >= -g && j < self.dims[1] as isize + g,
            "y index {j} outside padded grid"
        );
        debug_assert!(
            k >= -g && k < self.dims[2] as isize + g,
            "z index {k} outside padded grid"
        );
        (i + g) as usize + p[0] * ((j + g) as usize + p[1] * (k + g) as usize)
    }

    #[inline(always)]
    pub fn flat(&self, node: [usize; 3]) -> usize {
        self.index(node[0] as isize, node[1] as isize, node[2] as isize)
    }

    #[inline(always)]
    pub fn position(&self, node: [usize; 3]) -> Vec3<T> {
        self.position_signed(node[0] as isize, node[1] as isize, node[2] as isize)
    }

    #[inline(always)]
    pub fn position_signed(&self, i: isize, j: isize, k: isize) -> Vec3<T> {
        let h = self.h;
        self.origin
            + Vec3::new(
                T::of(i as f64) * h,
                T::of(j as f64) * h,
                T::of(k as f64) * h,
            )
    }

    /// Interior node containing flat index `c`, or `None` for ghosts.
    pub fn node_of(&self, c: usize) -> Option<[usize; 3]> {
        let p = self.padded_dims();
        let g = self.ghost;
        let i = c % p[0];
        let j = (c / p[0]) % p[1];
        let k = c / (p[0] * p[1]);
        let inside = |v: usize, d: usize| v >= g && v < d + g;
        (inside(i, self.dims[0]) && inside(j, self.dims[1]) && inside(k, self.dims[2]))
            .then(|| [i - g, j - g, k - g])
    }

    /// Distance from an interior node to the nearest grid face, in cells.
    pub fn boundary_distance(&self, node: [usize; 3]) -> usize {
        (0..3)
            .map(|a| node[a].min(self.dims[a] - 1 - node[a]))
            .min()
            .unwrap()
    }

    /// Interior nodes in flat (x-fastest) order.
    pub fn interior_nodes(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, nz] = self.dims;
        (0..nz).flat_map(move |k| (0..ny).flat_map(move |j| (0..nx).map(move |i| [i, j, k])))
    }
}

/// Scalar values on every node of a [`Grid`], ghost layer included.
#[derive(Clone, Debug)]
pub struct GridField<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> GridField<T> {
    pub fn new(grid: Grid<T>, value: T) -> Self {
        Self {
            values: vec![value; grid.padded_len()],
            grid,
        }
    }

    /// Evaluates `f` at every interior node, then fills ghosts by copy
    /// extension.
    pub fn from_fn(grid: Grid<T>, f: impl Fn(Vec3<T>) -> T + Sync) -> Self {
        let mut field = Self::new(grid, T::zero());
        field.par_fill_interior(|node, _| f(grid.position(node)));
        field.fill_ghost_neumann();
        field
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    #[inline(always)]
    pub fn get(&self, i: isize, j: isize, k: isize) -> T {
        self.values[self.grid.index(i, j, k)]
    }

    #[inline(always)]
    pub fn at(&self, node: [usize; 3]) -> T {
        self.values[self.grid.flat(node)]
    }

    #[inline(always)]
    pub fn set(&mut self, node: [usize; 3], v: T) {
        let c = self.grid.flat(node);
        self.values[c] = v;
    }

    /// Overwrites every interior node with `f(node, flat_index)`; z-slabs are
    /// processed in parallel. Ghost values are left untouched.
    pub fn par_fill_interior(&mut self, f: impl Fn([usize; 3], usize) -> T + Sync) {
        let grid = self.grid;
        let g = grid.ghost;
        let slab = grid.stride(2);
        let [nx, ny, nz] = grid.dims;
        self.values
            .par_chunks_mut(slab)
            .enumerate()
            .filter(|(kp, _)| *kp >= g && *kp < nz + g)
            .for_each(|(kp, plane)| {
                let k = kp - g;
                for j in 0..ny {
                    for i in 0..nx {
                        let c = grid.index(i as isize, j as isize, k as isize);
                        plane[c - kp * slab] = f([i, j, k], c);
                    }
                }
            });
    }

    /// Zero-Neumann ghost fill: every ghost value copies the nearest interior
    /// value along each axis in turn, so edges and corners copy the nearest
    /// interior corner.
    pub fn fill_ghost_neumann(&mut self) {
        let grid = self.grid;
        let g = grid.ghost as isize;
        let [nx, ny, nz] = grid.dims.map(|d| d as isize);
        let v = &mut self.values;
        // x faces over interior (j, k)
        for k in 0..nz {
            for j in 0..ny {
                let lo = v[grid.index(0, j, k)];
                let hi = v[grid.index(nx - 1, j, k)];
                for m in 1..=g {
                    v[grid.index(-m, j, k)] = lo;
                    v[grid.index(nx - 1 + m, j, k)] = hi;
                }
            }
        }
        // y faces over padded i, interior k
        for k in 0..nz {
            for i in -g..nx + g {
                let lo = v[grid.index(i, 0, k)];
                let hi = v[grid.index(i, ny - 1, k)];
                for m in 1..=g {
                    v[grid.index(i, -m, k)] = lo;
                    v[grid.index(i, ny - 1 + m, k)] = hi;
                }
            }
        }
        // z faces over padded i, j
        let slab = grid.stride(2);
        let first = grid.index(-g, -g, 0);
        let last = grid.index(-g, -g, nz - 1);
        let (lo_plane, hi_plane) = (v[first..first + slab].to_vec(), v[last..last + slab].to_vec());
        for m in 1..=g {
            let below = grid.index(-g, -g, -m);
            v[below..below + slab].copy_from_slice(&lo_plane);
            let above = grid.index(-g, -g, nz - 1 + m);
            v[above..above + slab].copy_from_slice(&hi_plane);
        }
    }

    /// Fifth-order WENO left- and right-biased approximations of the
    /// derivative along `axis` at an interior node.
    pub fn weno5_derivative_pair(&self, node: [usize; 3], axis: usize) -> (T, T) {
        let c = self.grid.flat(node);
        weno5_pair(&self.values, c, self.grid.stride(axis), T::one() / self.grid.h)
    }

    /// Second-order central difference gradient.
    pub fn central_gradient(&self, node: [usize; 3]) -> Vec3<T> {
        let c = self.grid.flat(node);
        central_gradient_at(&self.values, c, &self.grid)
    }

    /// WENO-average gradient `(p_- + p_+) / 2` per axis.
    pub fn weno_gradient(&self, node: [usize; 3]) -> Vec3<T> {
        let c = self.grid.flat(node);
        let inv_h = T::one() / self.grid.h;
        let half = T::of(0.5);
        let mut g = Vec3::zero();
        for a in 0..3 {
            let (m, p) = weno5_pair(&self.values, c, self.grid.stride(a), inv_h);
            g[a] = (m + p) * half;
        }
        g
    }

    /// Godunov upwind `|grad f|` for a front moving with normal speed of sign
    /// `sign` (positive: outward, i.e. `f_t + |grad f| = 0`).
    pub fn godunov_eikonal_hamiltonian(&self, node: [usize; 3], sign: T) -> T {
        let c = self.grid.flat(node);
        let inv_h = T::one() / self.grid.h;
        let mut pairs = [(T::zero(), T::zero()); 3];
        for (a, p) in pairs.iter_mut().enumerate() {
            *p = weno5_pair(&self.values, c, self.grid.stride(a), inv_h);
        }
        godunov_norm(pairs, sign)
    }

    /// Trilinear interpolation over the interior nodes; `None` outside their
    /// hull.
    pub fn trilinear(&self, p: Vec3<T>) -> Option<T> {
        let grid = &self.grid;
        let local = (p - grid.origin).scale(T::one() / grid.h);
        let mut base = [0isize; 3];
        let mut frac = [T::zero(); 3];
        for a in 0..3 {
            let x = local[a];
            let max = T::of_usize(grid.dims[a] - 1);
            if !(x >= T::zero() && x <= max) {
                return None;
            }
            let b = x.floor().min(max - T::one());
            base[a] = b.to_isize().unwrap();
            frac[a] = x - b;
        }
        let mut acc = T::zero();
        for corner in 0..8 {
            let mut w = T::one();
            let mut idx = base;
            for a in 0..3 {
                if corner >> a & 1 == 1 {
                    idx[a] += 1;
                    w *= frac[a];
                } else {
                    w *= T::one() - frac[a];
                }
            }
            acc += w * self.get(idx[0], idx[1], idx[2]);
        }
        Some(acc)
    }

    /// Largest absolute interior value.
    pub fn max_abs_interior(&self) -> T {
        self.grid
            .interior_nodes()
            .map(|n| self.at(n).abs())
            .fold(T::zero(), T::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Legacy VTK structured-points text dump of the interior values.
    pub fn write_vtk<W: Write>(&self, mut w: W, name: &str) -> Result<()> {
        let g = &self.grid;
        let [nx, ny, nz] = g.dims;
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "{name}")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET STRUCTURED_POINTS")?;
        writeln!(w, "DIMENSIONS {nx} {ny} {nz}")?;
        writeln!(w, "ORIGIN {} {} {}", g.origin.x, g.origin.y, g.origin.z)?;
        writeln!(w, "SPACING {} {} {}", g.h, g.h, g.h)?;
        writeln!(w, "POINT_DATA {}", g.node_count())?;
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for node in g.interior_nodes() {
            writeln!(w, "{:e}", self.at(node))?;
        }
        Ok(())
    }
}

/// WENO5 smoothness-weighted combination of five consecutive one-sided
/// differences.
#[inline(always)]
fn weno5<T: Real>(v: [T; 5]) -> T {
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    // The weights are invariant under v -> v / scale (the regularization
    // constant is proportional to the squared data scale), so working on the
    // normalized differences keeps everything O(1) in any precision.
    let inv = T::one() / scale;
    let [v1, v2, v3, v4, v5] = v.map(|x| x * inv);

    let c = |x: f64| T::of(x);
    let phi1 = v1 * c(1.0 / 3.0) - v2 * c(7.0 / 6.0) + v3 * c(11.0 / 6.0);
    let phi2 = -v2 * c(1.0 / 6.0) + v3 * c(5.0 / 6.0) + v4 * c(1.0 / 3.0);
    let phi3 = v3 * c(1.0 / 3.0) + v4 * c(5.0 / 6.0) - v5 * c(1.0 / 6.0);

    let sq = |x: T| x * x;
    let k = c(13.0 / 12.0);
    let q = c(0.25);
    let s1 = k * sq(v1 - c(2.0) * v2 + v3) + q * sq(v1 - c(4.0) * v2 + c(3.0) * v3);
    let s2 = k * sq(v2 - c(2.0) * v3 + v4) + q * sq(v2 - v4);
    let s3 = k * sq(v3 - c(2.0) * v4 + v5) + q * sq(c(3.0) * v3 - c(4.0) * v4 + v5);

    // 1e-6 times the (normalized) squared data scale
    let eps = c(1e-6);
    let a1 = c(0.1) / sq(s1 + eps);
    let a2 = c(0.6) / sq(s2 + eps);
    let a3 = c(0.3) / sq(s3 + eps);
    let sum = a1 + a2 + a3;
    (a1 * phi1 + a2 * phi2 + a3 * phi3) / sum * scale
}

/// `(p_-, p_+)` at flat index `c` along the line with the given stride.
#[inline(always)]
pub(crate) fn weno5_pair<T: Real>(f: &[T], c: usize, stride: usize, inv_h: T) -> (T, T) {
    let at = |m: isize| f[(c as isize + m * stride as isize) as usize];
    // d[k + 2] = (f_k - f_{k-1}) / h for k = -2..=3
    let mut d = [T::zero(); 6];
    let mut prev = at(-3);
    for (slot, m) in d.iter_mut().zip(-2isize..=3) {
        let cur = at(m);
        *slot = (cur - prev) * inv_h;
        prev = cur;
    }
    let minus = weno5([d[0], d[1], d[2], d[3], d[4]]);
    let plus = weno5([d[5], d[4], d[3], d[2], d[1]]);
    (minus, plus)
}

#[inline(always)]
pub(crate) fn central_gradient_at<T: Real>(f: &[T], c: usize, grid: &Grid<T>) -> Vec3<T> {
    let half_inv_h = T::of(0.5) / grid.h;
    let mut g = Vec3::zero();
    for a in 0..3 {
        let s = grid.stride(a);
        g[a] = (f[c + s] - f[c - s]) * half_inv_h;
    }
    g
}

/// First-order one-sided differences `(D_-, D_+)`.
#[inline(always)]
pub(crate) fn upwind_pair<T: Real>(f: &[T], c: usize, stride: usize, inv_h: T) -> (T, T) {
    let mid = f[c];
    ((mid - f[c - stride]) * inv_h, (f[c + stride] - mid) * inv_h)
}

/// Godunov combination of per-axis one-sided derivatives into `|grad f|`.
///
/// For outward motion (`sign > 0`) each axis contributes
/// `max(max(p_-, 0)^2, min(p_+, 0)^2)`, for inward motion
/// `max(min(p_-, 0)^2, max(p_+, 0)^2)`.
#[inline(always)]
pub fn godunov_norm<T: Real>(pairs: [(T, T); 3], sign: T) -> T {
    let zero = T::zero();
    let mut sum = zero;
    for (m, p) in pairs {
        let (a, b) = if sign > zero {
            (m.max(zero), p.min(zero))
        } else {
            (m.min(zero), p.max(zero))
        };
        sum += (a * a).max(b * b);
    }
    sum.sqrt()
}
