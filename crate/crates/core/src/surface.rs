//! Solvent excluded surface as the zero level of a signed distance field.
//!
//! The pipeline is: van der Waals distance `F`, solvent accessible level set
//! `F - probe`, inward unit-speed eikonal flow for a time equal to the probe
//! radius, cavity removal, and PDE reinitialization. Fields are negative
//! inside the molecule.

use std::collections::VecDeque;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{godunov_norm, upwind_pair, weno5_pair, Grid, GridField};
use crate::molecule::Molecule;
use crate::scalar::Real;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CavityMode {
    /// Flood fill `{phi > -eps}` from the grid boundary; unreached nodes of
    /// that set are cavity nodes.
    FloodFill,
    /// Unreached components of `{phi > 0}` plus their inner layer down to
    /// `-eps`.
    PositiveComponents,
    Off,
}

impl std::str::FromStr for CavityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flood-fill" => Ok(Self::FloodFill),
            "positive-components" => Ok(Self::PositiveComponents),
            "off" => Ok(Self::Off),
            _ => Err(Error::Config(format!("unknown cavity mode '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig<T> {
    /// Probe radius.
    pub probe: T,
    /// CFL number, `dt = cfl * h`.
    pub cfl: T,
    /// Band half-width in grid cells, `eps = band_factor * h`.
    pub band_factor: T,
    pub reinit_steps: usize,
    pub cavity_mode: CavityMode,
    /// During the eikonal flow WENO5 is used where `|phi| < weno_tube * h`
    /// and first-order upwinding elsewhere; `None` uses WENO5 everywhere.
    pub weno_tube: Option<T>,
    /// Reinitialization only updates nodes with `|phi| < reinit_tube * h`.
    pub reinit_tube: T,
    /// Clamp the van der Waals field at `2 * probe + clamp_margin * h`,
    /// which bounds the atom search per node. `None` evaluates it exactly.
    pub clamp_margin: Option<T>,
}

/// Smallest step count that carries distance information across the band.
pub fn min_reinit_steps<T: Real>(cfl: T, band_factor: T) -> usize {
    let x = ((band_factor + T::of(4.0)) / cfl).to_f64_lossy();
    (x - 1e-9).ceil().max(0.0) as usize
}

impl<T: Real> Default for SurfaceConfig<T> {
    fn default() -> Self {
        let cfl = T::of(0.3);
        let band_factor = T::of(2.0);
        Self {
            probe: T::of(1.4),
            cfl,
            band_factor,
            reinit_steps: min_reinit_steps(cfl, band_factor),
            cavity_mode: CavityMode::FloodFill,
            weno_tube: Some(T::of(8.0)),
            reinit_tube: band_factor + T::of(7.0),
            clamp_margin: Some(T::of(12.0)),
        }
    }
}

impl<T: Real> SurfaceConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.probe > T::zero()) || !self.probe.is_finite() {
            return bad(format!("probe radius must be positive, got {}", self.probe));
        }
        if !(self.cfl > T::zero() && self.cfl <= T::of(0.5)) {
            return bad(format!("cfl must lie in (0, 0.5], got {}", self.cfl));
        }
        if !(self.band_factor >= T::one()) || !self.band_factor.is_finite() {
            return bad(format!("band factor must be >= 1, got {}", self.band_factor));
        }
        let min = min_reinit_steps(self.cfl, self.band_factor);
        if self.reinit_steps < min {
            return bad(format!("reinit_steps {} below minimum {min}", self.reinit_steps));
        }
        if let Some(w) = self.weno_tube {
            if !(w >= T::of(3.0)) {
                return bad(format!("weno tube must be at least 3 cells, got {w}"));
            }
        }
        if !(self.reinit_tube >= self.band_factor + T::of(3.0)) {
            return bad(format!(
                "reinit tube {} must exceed the band by 3 cells",
                self.reinit_tube
            ));
        }
        if let Some(m) = self.clamp_margin {
            if !(m >= T::of(6.0)) {
                return bad(format!("clamp margin must be at least 6 cells, got {m}"));
            }
        }
        Ok(())
    }

    pub fn band_half_width(&self, h: T) -> T {
        self.band_factor * h
    }
}

/// Level set whose values approximate the signed distance to its zero level
/// within `eps`.
#[derive(Clone, Debug)]
pub struct SignedDistanceField<T> {
    pub field: GridField<T>,
    pub eps: T,
}

/// `F(x) = min_k (|x - z_k| - r_k)` on every node, optionally clamped from
/// above at `clamp`. Clamping lets a cell list bound the atoms inspected per
/// node; values below the clamp are exact.
pub fn vdw_levelset<T: Real>(mol: &Molecule<T>, grid: &Grid<T>, clamp: Option<T>) -> GridField<T> {
    let atoms = mol.atoms();
    let mut field = GridField::new(*grid, T::zero());
    match clamp {
        None => field.par_fill_interior(|node, _| {
            let x = grid.position(node);
            atoms
                .iter()
                .map(|a| (x - a.center).norm() - a.radius)
                .fold(T::infinity(), T::min)
        }),
        Some(c) => {
            let r_max = atoms.iter().map(|a| a.radius).fold(T::zero(), T::max);
            let list = CellList::new(atoms.iter().map(|a| a.center), c + r_max);
            field.par_fill_interior(|node, _| {
                let x = grid.position(node);
                let mut best = c;
                list.for_each_near(x, |k| {
                    let a = &atoms[k];
                    best = best.min((x - a.center).norm() - a.radius);
                });
                best
            });
        }
    }
    field.fill_ghost_neumann();
    field
}

/// Uniform binning of points with cell width equal to the search radius, so
/// the 27 cells around a query contain every point within that radius.
struct CellList<T> {
    lower: Vec3<T>,
    width: T,
    dims: [usize; 3],
    start: Vec<usize>,
    items: Vec<usize>,
}

impl<T: Real> CellList<T> {
    fn new(points: impl Iterator<Item = Vec3<T>> + Clone, width: T) -> Self {
        let mut lower = Vec3::splat(T::infinity());
        let mut upper = Vec3::splat(T::neg_infinity());
        for p in points.clone() {
            lower = lower.zip(p, T::min);
            upper = upper.zip(p, T::max);
        }
        let mut dims = [1usize; 3];
        for a in 0..3 {
            let n = ((upper[a] - lower[a]) / width).floor().to_usize().unwrap_or(0) + 1;
            dims[a] = n;
        }
        let cell_of = |p: Vec3<T>| -> usize {
            let mut c = [0usize; 3];
            for a in 0..3 {
                c[a] = ((p[a] - lower[a]) / width)
                    .floor()
                    .to_usize()
                    .unwrap_or(0)
                    .min(dims[a] - 1);
            }
            c[0] + dims[0] * (c[1] + dims[1] * c[2])
        };
        let ncell = dims[0] * dims[1] * dims[2];
        let mut count = vec![0usize; ncell + 1];
        let cells: Vec<usize> = points.map(cell_of).collect();
        for &c in &cells {
            count[c + 1] += 1;
        }
        for i in 0..ncell {
            count[i + 1] += count[i];
        }
        let start = count.clone();
        let mut fill = count;
        let mut items = vec![0usize; cells.len()];
        for (k, &c) in cells.iter().enumerate() {
            items[fill[c]] = k;
            fill[c] += 1;
        }
        Self {
            lower,
            width,
            dims,
            start,
            items,
        }
    }

    #[inline]
    fn for_each_near(&self, x: Vec3<T>, mut f: impl FnMut(usize)) {
        let mut lo = [0isize; 3];
        for a in 0..3 {
            let c = ((x[a] - self.lower[a]) / self.width).floor();
            lo[a] = c.to_isize().unwrap_or(isize::MIN / 2) - 1;
        }
        for dz in 0..3 {
            let k = lo[2] + dz;
            if k < 0 || k >= self.dims[2] as isize {
                continue;
            }
            for dy in 0..3 {
                let j = lo[1] + dy;
                if j < 0 || j >= self.dims[1] as isize {
                    continue;
                }
                for dx in 0..3 {
                    let i = lo[0] + dx;
                    if i < 0 || i >= self.dims[0] as isize {
                        continue;
                    }
                    let c = i as usize + self.dims[0] * (j as usize + self.dims[1] * k as usize);
                    for &item in &self.items[self.start[c]..self.start[c + 1]] {
                        f(item);
                    }
                }
            }
        }
    }
}

/// `F - probe`, pointwise.
pub fn sas_levelset<T: Real>(vdw: &GridField<T>, probe: T) -> GridField<T> {
    let mut out = vdw.clone();
    for v in out.values_mut() {
        *v -= probe;
    }
    out
}

/// Scratch buffers for TVD-RK3 stepping.
struct Rk3<T> {
    s1: GridField<T>,
    s2: GridField<T>,
}

impl<T: Real> Rk3<T> {
    fn new(grid: Grid<T>) -> Self {
        Self {
            s1: GridField::new(grid, T::zero()),
            s2: GridField::new(grid, T::zero()),
        }
    }

    /// One step of `phi_t = L(phi)`. `rate` returns `None` for frozen nodes.
    fn step(
        &mut self,
        phi: &mut GridField<T>,
        dt: T,
        rate: &(impl Fn(&[T], usize) -> Option<T> + Sync),
    ) {
        let q = |x: f64| T::of(x);
        stage(&mut self.s1, phi.values(), phi.values(), T::zero(), T::one(), dt, rate);
        stage(&mut self.s2, phi.values(), self.s1.values(), q(0.75), q(0.25), dt, rate);
        stage(&mut self.s1, phi.values(), self.s2.values(), q(1.0 / 3.0), q(2.0 / 3.0), dt, rate);
        std::mem::swap(phi, &mut self.s1);
    }
}

/// `out = a * base + b * (src + dt * L(src))`, frozen nodes copy `base`.
fn stage<T: Real>(
    out: &mut GridField<T>,
    base: &[T],
    src: &[T],
    a: T,
    b: T,
    dt: T,
    rate: &(impl Fn(&[T], usize) -> Option<T> + Sync),
) {
    out.par_fill_interior(|_, c| match rate(src, c) {
        Some(l) => a * base[c] + b * (src[c] + dt * l),
        None => base[c],
    });
    out.fill_ghost_neumann();
}

/// Integrates `phi_t - |grad phi| = 0` to `t = duration`, moving every level
/// set inward at unit speed. The last step is shortened to land on
/// `duration` exactly.
pub fn inward_eikonal_flow<T: Real>(
    phi_sas: &GridField<T>,
    duration: T,
    cfl: T,
    weno_tube: Option<T>,
) -> GridField<T> {
    let grid = *phi_sas.grid();
    let h = grid.h;
    let inv_h = T::one() / h;
    let strides = [grid.stride(0), grid.stride(1), grid.stride(2)];
    let tube = weno_tube.map(|w| w * h);
    let rate = move |v: &[T], c: usize| -> Option<T> {
        let high = tube.map_or(true, |w| v[c].abs() < w);
        let pairs = strides.map(|s| {
            if high {
                weno5_pair(v, c, s, inv_h)
            } else {
                upwind_pair(v, c, s, inv_h)
            }
        });
        Some(godunov_norm(pairs, -T::one()))
    };

    let dt = cfl * h;
    let steps = ((duration / dt).to_f64_lossy() - 1e-9).ceil().max(0.0) as usize;
    let mut phi = phi_sas.clone();
    let mut rk = Rk3::new(grid);
    for n in 0..steps {
        let step = if n + 1 == steps {
            duration - dt * T::of_usize(n)
        } else {
            dt
        };
        rk.step(&mut phi, step, &rate);
    }
    debug!("eikonal flow: {steps} steps of {dt} to t = {duration}");
    phi
}

/// Relaxes `phi` toward a signed distance function with
/// `phi_t + S(phi0) (|grad phi| - 1) = 0`, `S(p) = p / sqrt(p^2 + h^2)`.
/// Only nodes with `|phi0| < tube` are updated.
pub fn reinitialize<T: Real>(
    phi: &GridField<T>,
    steps: usize,
    cfl: T,
    eps: T,
    tube: T,
) -> SignedDistanceField<T> {
    let grid = *phi.grid();
    let h = grid.h;
    let inv_h = T::one() / h;
    let strides = [grid.stride(0), grid.stride(1), grid.stride(2)];
    let h2 = h * h;
    // Speed tapers smoothly to zero over the outer three cells of the tube so
    // that frozen nodes do not leave a jump for WENO to amplify.
    let inner = (tube - T::of(3.0) * h).max(tube * T::of(0.5));
    let taper = |a: T| -> T {
        if a <= inner {
            T::one()
        } else {
            let w = tube - inner;
            let x = (tube - a) / w;
            x * x * (T::of(3.0) - T::of(2.0) * x)
        }
    };
    let speed: Vec<Option<(T, T)>> = phi
        .values()
        .iter()
        .map(|&p| (p.abs() < tube).then(|| (p / (p * p + h2).sqrt(), taper(p.abs()))))
        .collect();
    let rate = |v: &[T], c: usize| -> Option<T> {
        let (s, w) = speed[c]?;
        let pairs = strides.map(|st| weno5_pair(v, c, st, inv_h));
        Some(-s * w * (godunov_norm(pairs, s) - T::one()))
    };
    let mut out = phi.clone();
    let mut rk = Rk3::new(grid);
    let dt = cfl * h;
    for _ in 0..steps {
        rk.step(&mut out, dt, &rate);
    }
    SignedDistanceField { field: out, eps }
}

fn interior_dims<T: Real>(grid: &Grid<T>) -> ([usize; 3], usize) {
    (grid.dims, grid.node_count())
}

#[inline]
fn compact(dims: [usize; 3], n: [usize; 3]) -> usize {
    n[0] + dims[0] * (n[1] + dims[1] * n[2])
}

#[inline]
fn expand(dims: [usize; 3], c: usize) -> [usize; 3] {
    [c % dims[0], (c / dims[0]) % dims[1], c / (dims[0] * dims[1])]
}

/// Face neighbours of an interior node.
fn face_neighbors(dims: [usize; 3], n: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    (0..6).filter_map(move |d| {
        let a = d / 2;
        let mut m = n;
        if d % 2 == 0 {
            m[a] = m[a].checked_sub(1)?;
        } else {
            m[a] += 1;
            if m[a] >= dims[a] {
                return None;
            }
        }
        Some(m)
    })
}

fn boundary_nodes(dims: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    let [nx, ny, nz] = dims;
    (0..nz).flat_map(move |k| {
        (0..ny).flat_map(move |j| {
            (0..nx).filter_map(move |i| {
                let on = i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
                on.then_some([i, j, k])
            })
        })
    })
}

/// Breadth-first search over face neighbours starting from `seeds`, entering
/// only nodes accepted by `pass`.
fn flood(
    dims: [usize; 3],
    seeds: impl Iterator<Item = [usize; 3]>,
    pass: impl Fn([usize; 3]) -> bool,
) -> Vec<bool> {
    let mut mark = vec![false; dims[0] * dims[1] * dims[2]];
    let mut queue = VecDeque::new();
    for s in seeds {
        let c = compact(dims, s);
        if !mark[c] && pass(s) {
            mark[c] = true;
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        for m in face_neighbors(dims, expand(dims, c)) {
            let cm = compact(dims, m);
            if !mark[cm] && pass(m) {
                mark[cm] = true;
                queue.push_back(cm);
            }
        }
    }
    mark
}

/// Replaces enclosed interior voids by the constant `-eps`. Returns the new
/// field and the number of nodes modified.
pub fn remove_cavities<T: Real>(
    phi: &GridField<T>,
    eps: T,
    mode: CavityMode,
) -> Result<(GridField<T>, usize)> {
    let grid = *phi.grid();
    let (dims, _) = interior_dims(&grid);
    if let Some(n) = boundary_nodes(dims).find(|&n| !(phi.at(n) > T::zero())) {
        return Err(Error::DomainTooSmall {
            index: n,
            value: phi.at(n).to_f64_lossy(),
        });
    }
    let cavity: Vec<bool> = match mode {
        CavityMode::Off => return Ok((phi.clone(), 0)),
        CavityMode::FloodFill => {
            let reached = flood(dims, boundary_nodes(dims), |n| phi.at(n) > -eps);
            grid.interior_nodes()
                .map(|n| !reached[compact(dims, n)] && phi.at(n) > -eps)
                .collect()
        }
        CavityMode::PositiveComponents => {
            let reached = flood(dims, boundary_nodes(dims), |n| phi.at(n) > T::zero());
            let touches_outside = |n: [usize; 3]| {
                face_neighbors(dims, n).any(|m| reached[compact(dims, m)])
            };
            let seeds: Vec<[usize; 3]> = grid
                .interior_nodes()
                .filter(|&n| !reached[compact(dims, n)] && phi.at(n) > T::zero())
                .collect();
            flood(dims, seeds.into_iter(), |n| {
                let v = phi.at(n);
                v > T::zero() && !reached[compact(dims, n)] || v > -eps && v <= T::zero() && !touches_outside(n)
            })
        }
    };
    let mut out = phi.clone();
    let mut count = 0;
    for n in grid.interior_nodes() {
        if cavity[compact(dims, n)] {
            out.set(n, -eps);
            count += 1;
        }
    }
    out.fill_ghost_neumann();
    Ok((out, count))
}

/// Number of connected pieces of the zero level set, counted as
/// 26-connected components of the inner surface layer (negative nodes with
/// a non-negative face neighbour).
pub fn zero_level_components<T: Real>(phi: &GridField<T>) -> usize {
    let grid = phi.grid();
    let dims = grid.dims;
    let layer: Vec<bool> = grid
        .interior_nodes()
        .map(|n| phi.at(n) < T::zero() && face_neighbors(dims, n).any(|m| phi.at(m) >= T::zero()))
        .collect();
    let mut seen = vec![false; layer.len()];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..layer.len() {
        if !layer[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            let n = expand(dims, c);
            for dz in -1isize..=1 {
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let m = [n[0] as isize + dx, n[1] as isize + dy, n[2] as isize + dz];
                        if (0..3).any(|a| m[a] < 0 || m[a] >= dims[a] as isize) {
                            continue;
                        }
                        let cm = compact(dims, m.map(|v| v as usize));
                        if layer[cm] && !seen[cm] {
                            seen[cm] = true;
                            queue.push_back(cm);
                        }
                    }
                }
            }
        }
    }
    components
}

/// Mean and max of `||grad phi| - 1|` over nodes with `|phi| < eps`, using
/// the WENO-average gradient.
pub fn eikonal_residual<T: Real>(sdf: &SignedDistanceField<T>) -> (T, T) {
    let f = &sdf.field;
    let mut sum = T::zero();
    let mut max = T::zero();
    let mut count = 0usize;
    for n in f.grid().interior_nodes() {
        if f.at(n).abs() < sdf.eps {
            let r = (f.weno_gradient(n).norm() - T::one()).abs();
            sum += r;
            max = max.max(r);
            count += 1;
        }
    }
    if count == 0 {
        return (T::zero(), T::zero());
    }
    (sum / T::of_usize(count), max)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SurfaceStats {
    pub flow_steps: usize,
    pub reinit_steps: usize,
    pub cavity_nodes: usize,
    pub components: usize,
    pub eikonal_mean: f64,
    pub eikonal_max: f64,
}

#[derive(Clone, Debug)]
pub struct SurfaceBuild<T> {
    pub sdf: SignedDistanceField<T>,
    pub stats: SurfaceStats,
    /// Named intermediate fields, kept only on request.
    pub stages: Vec<(&'static str, GridField<T>)>,
}

/// Full surface construction from atoms.
pub fn build_ses<T: Real>(
    mol: &Molecule<T>,
    grid: &Grid<T>,
    cfg: &SurfaceConfig<T>,
    keep_stages: bool,
) -> Result<SurfaceBuild<T>> {
    cfg.validate()?;
    let h = grid.h;
    let eps = cfg.band_half_width(h);
    let clamp = cfg.clamp_margin.map(|m| T::of(2.0) * cfg.probe + m * h);
    let vdw = vdw_levelset(mol, grid, clamp);
    let sas = sas_levelset(&vdw, cfg.probe);
    let dims = grid.dims;
    if let Some(n) = boundary_nodes(dims).find(|&n| !(sas.at(n) > T::zero())) {
        return Err(Error::DomainTooSmall {
            index: n,
            value: sas.at(n).to_f64_lossy(),
        });
    }
    let mut stages = Vec::new();
    if keep_stages {
        stages.push(("vdw", vdw));
        stages.push(("sas", sas.clone()));
    } else {
        drop(vdw);
    }
    let flowed = inward_eikonal_flow(&sas, cfg.probe, cfg.cfl, cfg.weno_tube);
    drop(sas);
    let (cleaned, cavity_nodes) = remove_cavities(&flowed, eps, cfg.cavity_mode)?;
    if keep_stages {
        stages.push(("flow", flowed));
    } else {
        drop(flowed);
    }
    let sdf = reinitialize(&cleaned, cfg.reinit_steps, cfg.cfl, eps, cfg.reinit_tube * h);
    let (mean, max) = eikonal_residual(&sdf);
    let stats = SurfaceStats {
        flow_steps: ((cfg.probe / (cfg.cfl * h)).to_f64_lossy() - 1e-9).ceil() as usize,
        reinit_steps: cfg.reinit_steps,
        cavity_nodes,
        components: zero_level_components(&sdf.field),
        eikonal_mean: mean.to_f64_lossy(),
        eikonal_max: max.to_f64_lossy(),
    };
    info!(
        "surface: {} cavity nodes removed, {} zero-level component(s), eikonal residual mean {:.3e} max {:.3e}",
        stats.cavity_nodes, stats.components, stats.eikonal_mean, stats.eikonal_max
    );
    if keep_stages {
        stages.push(("ses", sdf.field.clone()));
    }
    Ok(SurfaceBuild { sdf, stats, stages })
}

/// Radius of the zero crossing along the +x axis through `center`, found by
/// linear interpolation between nodes. Used for sphere diagnostics.
pub fn zero_crossing_radius<T: Real>(phi: &GridField<T>, center: Vec3<T>) -> Option<T> {
    let grid = phi.grid();
    let h = grid.h;
    let mut r = T::zero();
    let mut prev = phi.trilinear(center)?;
    loop {
        let r_next = r + h * T::of(0.25);
        let next = phi.trilinear(center + Vec3::new(r_next, T::zero(), T::zero()))?;
        if prev < T::zero() && next >= T::zero() {
            return Some(r + (r_next - r) * (-prev) / (next - prev));
        }
        r = r_next;
        prev = next;
    }
}
