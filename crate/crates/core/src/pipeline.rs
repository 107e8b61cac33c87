//! End-to-end driver: surface, narrow band, solve, post-processing.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use crate::config::{Padding, RunConfig};
use crate::energy::{
    benchmark_errors, internal_to_kcal, polarization_energy, reaction_potentials, surface_area, BenchmarkErrors,
    EnergyReport, Kirkwood,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::molecule::{bounding_box, Cube, Molecule};
use crate::narrowband::{extract, Narrowband};
use crate::scalar::Real;
use crate::solver::{check_charges_inside, BiSystem, SolveResult};
use crate::surface::{build_ses, SignedDistanceField, SurfaceStats};
use crate::vec3::Vec3;

/// Cube and node count for `mol` under `cfg`. The padding may depend on
/// `h`, which in turn depends on the box when the node count is fixed, so
/// the half-width solves `hw = extent + a + b h` with `h = 2 hw / n`.
pub fn resolve_grid<T: Real>(mol: &Molecule<T>, cfg: &RunConfig) -> Result<Grid<T>> {
    let base = bounding_box(mol, T::of(cfg.probe), T::zero());
    let extent = base.half_width.to_f64_lossy();
    let (a, b) = match cfg.pad {
        Padding::Auto => (cfg.probe, 2.0 * cfg.band_factor + 4.0),
        Padding::Length(p) => (p, 0.0),
        Padding::Cells(c) => (0.0, c as f64),
    };
    let (n, hw) = match (cfg.grid, cfg.h) {
        (Some(n), None) => {
            let shrink = 1.0 - 2.0 * b / n as f64;
            if shrink < 0.1 {
                return Err(Error::Config(format!("grid {n} is too coarse for the requested padding")));
            }
            (n, (extent + a) / shrink)
        }
        (None, Some(h)) => {
            let n = ((2.0 * (extent + a + b * h) / h) - 1e-9).ceil() as usize;
            (n, 0.5 * n as f64 * h)
        }
        _ => return Err(Error::Config("exactly one of grid and h must be set".into())),
    };
    let cube = Cube {
        center: base.center,
        half_width: T::of(hw),
    };
    Grid::cell_centered(&cube, n)
}

/// Shortest inward chord: from sampled projected points march along `-n`
/// until the level set turns positive again. `None` if no chord closes
/// inside the grid.
pub fn feature_size<T: Real>(sdf: &SignedDistanceField<T>, band: &Narrowband<T>, max_samples: usize) -> Option<T> {
    let h = sdf.field.grid().h;
    let step = h * T::of(0.5);
    let stride = (band.len() / max_samples.max(1)).max(1);
    let mut best: Option<T> = None;
    for node in band.nodes.iter().step_by(stride) {
        let x0 = node.projection;
        let dir = -node.normal;
        let mut t = step;
        let mut prev = match sdf.field.trilinear(x0 + dir.scale(t)) {
            Some(v) => v,
            None => continue,
        };
        let mut inside = prev < T::zero();
        loop {
            let tn = t + step;
            let Some(v) = sdf.field.trilinear(x0 + dir.scale(tn)) else { break };
            if v < T::zero() {
                inside = true;
            } else if inside {
                // linear crossing between t and tn
                let chord = t + step * (-prev) / (v - prev);
                best = Some(best.map_or(chord, |b: T| b.min(chord)));
                break;
            }
            prev = v;
            t = tn;
        }
    }
    best
}

#[derive(Clone, Debug, Serialize)]
pub struct GridReport {
    pub nodes_per_axis: usize,
    pub h: f64,
    pub half_width: f64,
    pub center: [f64; 3],
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub molecule: String,
    pub atoms: usize,
    pub total_charge: f64,
    pub grid: GridReport,
    pub surface: SurfaceStats,
    pub band_points: usize,
    pub dof: usize,
    pub tau: f64,
    pub gmres_iterations: usize,
    pub gmres_residuals: Vec<f64>,
    pub energy: EnergyReport,
    pub feature_size: Option<f64>,
    pub warnings: Vec<String>,
}

/// Wall-clock seconds per stage. Kept out of [`RunReport`] so reports are
/// reproducible byte for byte.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub surface: f64,
    pub band: f64,
    pub setup: f64,
    pub solve: f64,
    pub post: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.surface + self.band + self.setup + self.solve + self.post
    }
}

pub struct RunOutput<T> {
    pub report: RunReport,
    pub timings: Timings,
    pub sdf: SignedDistanceField<T>,
    pub band: Narrowband<T>,
    pub system: BiSystem<T>,
    pub solution: SolveResult<T>,
}

impl<T: Real> RunOutput<T> {
    /// `grid, h, tau/h, DOF, GMRES, G_pol (kcal/mol), CPU s, area` row.
    pub fn table_row(&self) -> String {
        let r = &self.report;
        format!(
            "{:>5} {:>9.5} {:>5} {:>9} {:>5} {:>14.6} {:>9.2} {:>11.5}",
            format!("{}^3", r.grid.nodes_per_axis),
            r.grid.h,
            r.config.tau_ratio,
            r.dof,
            r.gmres_iterations,
            r.energy.g_pol_kcal,
            self.timings.total(),
            r.energy.area
        )
    }
}

pub const TABLE_HEADER: &str = " grid         h   t/h       DOF GMRES   G_pol kcal/mol     CPU s        area";

/// Surface and band for one molecule; independent of the solver settings,
/// so one stage can serve several `tau/h` ratios.
pub struct SurfaceStage<T> {
    pub grid: Grid<T>,
    pub sdf: SignedDistanceField<T>,
    pub stats: SurfaceStats,
    pub band: Narrowband<T>,
    pub feature_size: Option<T>,
    pub warnings: Vec<String>,
    pub surface_seconds: f64,
    pub band_seconds: f64,
}

pub fn surface_stage<T: Real>(cfg: &RunConfig, mol: &Molecule<T>) -> Result<SurfaceStage<T>> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let grid = resolve_grid(mol, cfg)?;
    let h = grid.h;
    info!(
        "grid {}^3, h = {:.5}, half-width {:.4}",
        grid.dims[0],
        h.to_f64_lossy(),
        (h * T::of_usize(grid.dims[0]) * T::of(0.5)).to_f64_lossy()
    );

    let t = Instant::now();
    let surf_cfg = cfg.surface::<T>();
    let built = build_ses(mol, &grid, &surf_cfg, false)?;
    let surface_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let band = extract(&built.sdf, &cfg.band_options())?;
    let band_seconds = t.elapsed().as_secs_f64();
    check_charges_inside(mol, &built.sdf.field, surf_cfg.band_half_width(h))?;

    let delta = feature_size(&built.sdf, &band, 4000);
    if let Some(d) = delta {
        if h >= d / T::of(7.0) {
            let msg = format!(
                "grid spacing {:.4} is not below feature size / 7 = {:.4}; the surface may be under-resolved",
                h.to_f64_lossy(),
                (d / T::of(7.0)).to_f64_lossy()
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(SurfaceStage {
        grid,
        sdf: built.sdf,
        stats: built.stats,
        band,
        feature_size: delta,
        warnings,
        surface_seconds,
        band_seconds,
    })
}

/// The whole pipeline for one molecule. With `reference` the benchmark
/// errors against the analytic sphere are included.
pub fn run_full<T: Real>(cfg: &RunConfig, mol: &Molecule<T>, reference: Option<&Kirkwood<T>>) -> Result<RunOutput<T>> {
    let stage = surface_stage(cfg, mol)?;
    solve_stage(cfg, mol, &stage, reference).map(|(report, timings, system, solution)| RunOutput {
        report,
        timings,
        sdf: stage.sdf,
        band: stage.band,
        system,
        solution,
    })
}

/// Solve and post-process on a prepared surface. `cfg` must agree with the
/// one that built `stage` in everything but the solver settings.
pub fn solve_stage<T: Real>(
    cfg: &RunConfig,
    mol: &Molecule<T>,
    stage: &SurfaceStage<T>,
    reference: Option<&Kirkwood<T>>,
) -> Result<(RunReport, Timings, BiSystem<T>, SolveResult<T>)> {
    cfg.validate()?;
    let (grid, band) = (&stage.grid, &stage.band);
    let h = grid.h;
    let mut timings = Timings {
        surface: stage.surface_seconds,
        band: stage.band_seconds,
        ..Timings::default()
    };
    let eps = cfg.surface::<T>().band_half_width(h);

    let t = Instant::now();
    let tau = T::of(cfg.tau_ratio) * h;
    let system = BiSystem::new(band, mol, cfg.dielectrics(), tau, &cfg.summation_config())?;
    timings.setup = t.elapsed().as_secs_f64();
    info!("band: {} points, {} unknowns", band.len(), system.dof());

    let t = Instant::now();
    let solution = system.solve(&cfg.gmres())?;
    timings.solve = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let area = surface_area(band);
    let pots = reaction_potentials(mol, &system.op, &solution.psi, &solution.psin, eps);
    let g_pol = polarization_energy(mol, &pots);
    let errors: Option<BenchmarkErrors> = match reference {
        Some(k) => Some(benchmark_errors(band, &solution.psi, &solution.psin, area, g_pol, k)?),
        None => None,
    };
    timings.post = t.elapsed().as_secs_f64();

    let g = g_pol.to_f64_lossy();
    let energy = EnergyReport {
        area: area.to_f64_lossy(),
        g_pol_internal: g,
        g_pol_kcal: internal_to_kcal(g, cfg.coulomb_kcal),
        reaction_potentials: pots.iter().map(|p| p.to_f64_lossy()).collect(),
        errors,
    };
    let half_width = h * T::of_usize(grid.dims[0]) * T::of(0.5);
    let center = grid.origin + Vec3::splat(half_width - h * T::of(0.5));
    let report = RunReport {
        config: cfg.clone(),
        molecule: mol.label.clone(),
        atoms: mol.len(),
        total_charge: mol.total_charge().to_f64_lossy(),
        grid: GridReport {
            nodes_per_axis: grid.dims[0],
            h: h.to_f64_lossy(),
            half_width: half_width.to_f64_lossy(),
            center: center.to_f64(),
        },
        surface: stage.stats.clone(),
        band_points: band.len(),
        dof: system.dof(),
        tau: tau.to_f64_lossy(),
        gmres_iterations: solution.iterations,
        gmres_residuals: solution.residuals.clone(),
        energy,
        feature_size: stage.feature_size.map(|d| d.to_f64_lossy()),
        warnings: stage.warnings.clone(),
    };
    Ok((report, timings, system, solution))
}

/// Writes `report.json`, `timings.json` and the requested dumps into `dir`.
pub fn write_artifacts<T: Real>(out: &RunOutput<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = &out.report.config;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("report.json"))?), &out.report)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("timings.json"))?), &out.timings)?;
    if cfg.dump_band {
        out.band.write_csv(BufWriter::new(File::create(dir.join("band.csv"))?))?;
    }
    if cfg.dump_solution {
        out.system
            .write_solution_csv(&out.solution, BufWriter::new(File::create(dir.join("solution.csv"))?))?;
    }
    if cfg.dump_vtk {
        out.sdf
            .field
            .write_vtk(BufWriter::new(File::create(dir.join("ses.vtk"))?), "phi")?;
    }
    Ok(())
}

/// Single-ion benchmark configuration: the box is the probe-inflated ion
/// plus four cells, the smallest box in which the solvent-accessible
/// surface keeps clear of the boundary stencils.
pub fn bench_ion_config(grid: usize, tau_ratio: f64) -> RunConfig {
    RunConfig {
        grid: Some(grid),
        tau_ratio,
        pad: Padding::Cells(4),
        ..RunConfig::default()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub grid: usize,
    pub h: f64,
    pub tau_ratio: f64,
    pub dof: usize,
    pub iterations: usize,
    pub g_pol_kcal: f64,
    pub seconds: f64,
    pub area: f64,
    pub errors: BenchmarkErrors,
}

/// Runs the unit single ion (`r = 1`, `q = 1`) for every grid and ratio.
/// `base` supplies everything except grid, ratio and, if left automatic,
/// the padding. The surface is built once per grid. Rows come out grouped
/// by ratio, in the order given.
pub fn bench_ion(base: &RunConfig, grids: &[usize], tau_ratios: &[f64]) -> Result<Vec<BenchRow>> {
    let mol = Molecule::<f64>::single_ion(1.0, 1.0)?;
    let mut rows = Vec::new();
    for &n in grids {
        let mut cfg = base.clone();
        cfg.grid = Some(n);
        cfg.h = None;
        if cfg.pad == Padding::Auto {
            cfg.pad = bench_ion_config(n, 1.0).pad;
        }
        let stage = surface_stage(&cfg, &mol)?;
        for (k, &tr) in tau_ratios.iter().enumerate() {
            cfg.tau_ratio = tr;
            let reference = Kirkwood::new(1.0, 1.0, cfg.dielectrics());
            let (r, timings, _, _) = solve_stage(&cfg, &mol, &stage, Some(&reference))?;
            info!(
                "{}^3 t/h {tr}: {} iterations, G_pol {:.6} kcal/mol",
                n, r.gmres_iterations, r.energy.g_pol_kcal
            );
            rows.push((
                k,
                BenchRow {
                    grid: n,
                    h: r.grid.h,
                    tau_ratio: tr,
                    dof: r.dof,
                    iterations: r.gmres_iterations,
                    g_pol_kcal: r.energy.g_pol_kcal,
                    // the shared surface is charged to the first ratio only
                    seconds: if k == 0 { timings.total() } else { timings.total() - timings.surface - timings.band },
                    area: r.energy.area,
                    errors: r.energy.errors.expect("reference given"),
                },
            ));
        }
    }
    rows.sort_by_key(|(k, _)| *k);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}
