//! Acceptance suite. Prints one PASS / FAIL / SKIP line per criterion.
//!
//! Runs the single-ion pipeline at 64^3, 128^3 and 256^3, which takes tens
//! of minutes on one core. Environment:
//!
//! - `IBIM_ACCEPTANCE_GRIDS`: comma-separated grid list for quick runs; a
//!   reduced list marks the affected criteria PARTIAL instead of PASS.
//! - `IBIM_ACCEPTANCE_STRICT=1`: exit non-zero when a criterion fails.
//! - `IBIM_1A63_PQR`: PQR file enabling the protein criterion.

use std::f64::consts::PI;
use std::time::Instant;

use ibim_core::energy::Kirkwood;
use ibim_core::kernels::{g0, gk, near_field_test, BlockKernels, Dielectrics, KernelPoint};
use ibim_core::pipeline::{bench_ion_config, solve_stage, surface_stage, SurfaceStage};
use ibim_core::summation::{Coeffs, PointCloudOperator, TreeCode, TreeParams};
use ibim_core::surface::{remove_cavities, zero_crossing_radius, zero_level_components, CavityMode};
use ibim_core::{read_pqr, Atom, Cube, Grid, GridField, Molecule, RunConfig, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Partial,
    Fail,
    Skip,
}

struct Outcome {
    id: usize,
    name: &'static str,
    status: Status,
    detail: String,
}

fn verdict(ok: bool, complete: bool) -> Status {
    match (ok, complete) {
        (false, _) => Status::Fail,
        (true, true) => Status::Pass,
        (true, false) => Status::Partial,
    }
}

fn report(out: &mut Vec<Outcome>, id: usize, name: &'static str, status: Status, detail: String) {
    let tag = match status {
        Status::Pass => "PASS",
        Status::Partial => "PARTIAL",
        Status::Fail => "FAIL",
        Status::Skip => "SKIP",
    };
    println!("[{tag:>7}] {id:>2}. {name}: {detail}");
    out.push(Outcome {
        id,
        name,
        status,
        detail,
    });
}

const FULL_GRIDS: [usize; 3] = [64, 128, 256];
const TAUS: [f64; 2] = [1.0, 0.5];

/// Published single-ion errors at tau/h = 1: solution, area, energy.
fn reference_errors(grid: usize) -> Option<[f64; 3]> {
    match grid {
        64 => Some([1.11e-2, 1.24e-3, 1.21e-2]),
        128 => Some([6.90e-3, 2.88e-4, 5.68e-3]),
        256 => Some([3.57e-3, 5.01e-5, 2.90e-3]),
        _ => None,
    }
}

struct IonRun {
    grid: usize,
    h: f64,
    tau_ratio: f64,
    iterations: usize,
    errors: [f64; 3],
}

struct IonGrid {
    grid: usize,
    h: f64,
    eikonal_mean: f64,
    radius: Option<f64>,
    components: usize,
}

fn main() {
    let strict = std::env::var("IBIM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let grids: Vec<usize> = match std::env::var("IBIM_ACCEPTANCE_GRIDS") {
        Ok(s) => s.split(',').map(|g| g.trim().parse().expect("grid list")).collect(),
        Err(_) => FULL_GRIDS.to_vec(),
    };
    let complete = FULL_GRIDS.iter().all(|g| grids.contains(g));
    let mut out = Vec::new();
    let start = Instant::now();

    kernel_checks(&mut out);
    cavity_checks(&mut out);
    matched_media(&mut out);
    linearity(&mut out);

    // single-ion sweep, one surface per grid
    let mol = Molecule::<f64>::single_ion(1.0, 1.0).unwrap();
    let mut runs = Vec::new();
    let mut surfaces = Vec::new();
    let mut stage128: Option<(RunConfig, SurfaceStage<f64>)> = None;
    for &n in &grids {
        let t = Instant::now();
        let cfg = bench_ion_config(n, 1.0);
        let stage = surface_stage(&cfg, &mol).expect("single-ion surface");
        surfaces.push(IonGrid {
            grid: n,
            h: stage.grid.h,
            eikonal_mean: stage.stats.eikonal_mean,
            radius: zero_crossing_radius(&stage.sdf.field, Vec3::zero()),
            components: stage.stats.components,
        });
        for &tr in &TAUS {
            let mut c = cfg.clone();
            c.tau_ratio = tr;
            let reference = Kirkwood::new(1.0, 1.0, c.dielectrics());
            let (r, _, _, _) = solve_stage(&c, &mol, &stage, Some(&reference)).expect("single-ion solve");
            let e = r.energy.errors.expect("reference given");
            println!(
                "  single ion {n}^3 t/h {tr}: h {:.5} DOF {} GMRES {} errors solution {:.3e} area {:.3e} energy {:.3e}",
                r.grid.h, r.dof, r.gmres_iterations, e.solution, e.area, e.energy
            );
            runs.push(IonRun {
                grid: n,
                h: r.grid.h,
                tau_ratio: tr,
                iterations: r.gmres_iterations,
                errors: [e.solution, e.area, e.energy],
            });
        }
        println!("  ({n}^3 done in {:.0} s)", t.elapsed().as_secs_f64());
        if n == 128 {
            stage128 = Some((cfg, stage));
        }
    }

    single_ion_errors(&mut out, &runs, complete);
    iteration_counts(&mut out, &runs, complete);
    area_convergence(&mut out, &runs, complete);
    match &stage128 {
        Some((cfg, stage)) => backend_equivalence(&mut out, cfg, stage),
        None => report(
            &mut out,
            5,
            "tree vs dense on the 128^3 operator",
            Status::Skip,
            "128^3 not in the grid list".into(),
        ),
    }
    let protein = protein(&mut out);
    surface_quality(&mut out, &surfaces, protein, complete);

    out.sort_by_key(|o| o.id);
    println!();
    println!("acceptance summary ({:.0} s):", start.elapsed().as_secs_f64());
    for o in &out {
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Partial => "PARTIAL",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!("{tag:>7}  {:>2}. {}: {}", o.id, o.name, o.detail);
    }
    let failed = out.iter().filter(|o| o.status == Status::Fail).count();
    println!("{failed} criterion/criteria failed");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

fn single_ion_errors(out: &mut Vec<Outcome>, runs: &[IonRun], complete: bool) {
    let rows: Vec<&IonRun> = runs.iter().filter(|r| r.tau_ratio == 1.0).collect();
    let mut ok = !rows.is_empty();
    let mut parts = Vec::new();
    for r in &rows {
        let Some(want) = reference_errors(r.grid) else { continue };
        let names = ["solution", "area", "energy"];
        for k in 0..3 {
            let ratio = r.errors[k] / want[k];
            let good = (0.5..=2.0).contains(&ratio);
            ok &= good;
            if !good {
                parts.push(format!("{}^3 {} {:.2e} is {:.2}x the reference {:.2e}", r.grid, names[k], r.errors[k], ratio, want[k]));
            }
        }
    }
    for w in rows.windows(2) {
        for (k, name) in [(1, "area"), (2, "energy")] {
            if w[1].errors[k] >= w[0].errors[k] {
                ok = false;
                parts.push(format!("{name} error does not decrease {}^3 -> {}^3", w[0].grid, w[1].grid));
            }
        }
    }
    let detail = if parts.is_empty() {
        "all errors within a factor 2 of the reference, area and energy errors decreasing".to_string()
    } else {
        parts.join("; ")
    };
    report(out, 1, "single-ion errors at tau/h = 1", verdict(ok, complete), detail);
}

fn iteration_counts(out: &mut Vec<Outcome>, runs: &[IonRun], complete: bool) {
    let worst = runs.iter().map(|r| r.iterations).max().unwrap_or(0);
    let list: Vec<String> = runs
        .iter()
        .map(|r| format!("{}^3 t/h {}: {}", r.grid, r.tau_ratio, r.iterations))
        .collect();
    report(
        out,
        2,
        "GMRES operator applications <= 6",
        verdict(!runs.is_empty() && worst <= 6, complete),
        list.join(", "),
    );
}

fn area_convergence(out: &mut Vec<Outcome>, runs: &[IonRun], complete: bool) {
    let rows: Vec<&IonRun> = runs.iter().filter(|r| r.tau_ratio == 1.0).collect();
    let mut ok = rows.len() >= 2;
    let mut parts = Vec::new();
    for w in rows.windows(2) {
        // only halving steps count
        if (w[0].h / w[1].h - 2.0).abs() > 0.2 {
            continue;
        }
        let ratio = w[0].errors[1] / w[1].errors[1];
        ok &= (3.0..=5.0).contains(&ratio);
        parts.push(format!("{}^3 -> {}^3: {ratio:.2}", w[0].grid, w[1].grid));
    }
    if parts.is_empty() {
        ok = false;
        parts.push("fewer than two grids".into());
    }
    report(out, 3, "area error ratio per refinement in [3, 5]", verdict(ok, complete), parts.join(", "));
}

fn kernel_checks(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let unit = |rng: &mut ChaCha8Rng| loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() < 1.0 {
            break v.normalized().unwrap();
        }
    };
    let step = 1e-5;
    let step2 = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let diel = Dielectrics {
            eps_in: rng.gen_range(1.0..4.0),
            eps_out: rng.gen_range(2.0..100.0),
            kappa: rng.gen_range(0.05..1.5),
        };
        let (t1, t2, k) = (diel.theta1(), diel.theta2(), diel.kappa);
        let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let nx = unit(&mut rng);
        let y = x + unit(&mut rng).scale(rng.gen_range(0.2..3.0));
        let ny = unit(&mut rng);
        let blocks = BlockKernels::new(diel, 0.0).far(x, nx, y, ny);
        let g0f = |a: Vec3<f64>, b: Vec3<f64>| g0(a, b).unwrap();
        let gkf = |a: Vec3<f64>, b: Vec3<f64>| gk(a, b, k).unwrap();
        let dy = |f: &dyn Fn(Vec3<f64>, Vec3<f64>) -> f64, a: Vec3<f64>, s: f64| {
            (f(a, y + ny.scale(s)) - f(a, y - ny.scale(s))) / (2.0 * s)
        };
        let dx = |f: &dyn Fn(Vec3<f64>) -> f64, s: f64| (f(x + nx.scale(s)) - f(x - nx.scale(s))) / (2.0 * s);
        // each block from differences of the Green's functions separately,
        // compared relative to the size of its terms
        let terms = [
            (dy(&g0f, x, step), t1 * dy(&gkf, x, step)),
            (g0f(x, y), gkf(x, y)),
            (
                dx(&|p| dy(&g0f, p, step2), step2),
                dx(&|p| dy(&gkf, p, step2), step2),
            ),
            (dx(&|p| g0f(p, y), step), t2 * dx(&|p| gkf(p, y), step)),
        ];
        for (i, (a, b)) in terms.iter().enumerate() {
            let err = (blocks[i] - (a - b)).abs() / (a.abs() + b.abs());
            worst = worst.max(err);
        }
    }
    let fd_ok = worst <= 1e-5;

    // near-field constant of K12 against the tangent-disc mean
    let mut disc_worst: f64 = 0.0;
    for &(kappa, tau) in &[(0.1257, 0.04), (0.1257, 0.0857), (1.0, 0.2), (5.0, 0.3)] {
        let k = BlockKernels::new(
            Dielectrics {
                eps_in: 1.0,
                eps_out: 80.0,
                kappa,
            },
            tau,
        );
        let n = 4000;
        let ez = Vec3::new(0.0, 0.0, 1.0);
        let mut acc = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) * tau / n as f64;
            acc += k.far(Vec3::zero(), ez, Vec3::new(s, 0.0, 0.0), ez)[1] * 2.0 * PI * s * tau / n as f64;
        }
        let avg = acc / (PI * tau * tau);
        // inside the disc the regularized block returns the constant
        let a = KernelPoint {
            position: Vec3::zero(),
            normal: ez,
        };
        let b = KernelPoint {
            position: Vec3::new(0.5 * tau, 0.0, 0.0),
            normal: ez,
        };
        assert!(near_field_test(&a, &b, tau));
        let near = k.eval(a.position, a.normal, b.position, b.normal)[1];
        disc_worst = disc_worst.max((near - avg).abs() / avg.abs());
    }
    let disc_ok = disc_worst <= 0.01;

    // K21 growth exponent along a tangent line, r in [1e-3, 1]
    let k = BlockKernels::new(Dielectrics::default(), 0.0);
    let ez = Vec3::new(0.0, 0.0, 1.0);
    let m = 61;
    let pts: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let r = 10f64.powf(-3.0 + 3.0 * i as f64 / (m - 1) as f64);
            (r.ln(), k.far(Vec3::zero(), ez, Vec3::new(r, 0.0, 0.0), ez)[2].abs().ln())
        })
        .collect();
    let mf = m as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 * p.0, b + p.0 * p.1));
    let slope = (mf * sxy - sx * sy) / (mf * sxx - sx * sx);
    let slope_ok = slope >= -1.2;

    report(
        out,
        4,
        "kernel blocks",
        verdict(fd_ok && disc_ok && slope_ok, true),
        format!(
            "finite differences worst {worst:.1e} (<= 1e-5), K12 disc mean worst {disc_worst:.1e} (<= 1e-2), K21 exponent {slope:.3} (>= -1.2)"
        ),
    );
}

fn cavity_checks(out: &mut Vec<Outcome>) {
    let grid = Grid::cell_centered(
        &Cube {
            center: Vec3::zero(),
            half_width: 4.0,
        },
        48,
    )
    .unwrap();
    let eps = 2.0 * grid.h;
    let shell = GridField::from_fn(grid, |p: Vec3<f64>| (p.norm() - 3.0).max(1.0 - p.norm()));
    let before = zero_level_components(&shell);
    let mut ok = before == 2;
    let mut parts = vec![format!("shell has {before} components")];
    for mode in [CavityMode::FloodFill, CavityMode::PositiveComponents] {
        let (once, removed) = remove_cavities(&shell, eps, mode).unwrap();
        let (twice, again) = remove_cavities(&once, eps, mode).unwrap();
        let comps = zero_level_components(&once);
        let idem = again == 0 && twice.values() == once.values();
        ok &= comps == 1 && idem && removed > 0;
        parts.push(format!("{mode:?}: {comps} after removal, idempotent {idem}"));
    }
    report(out, 6, "cavity removal", verdict(ok, true), parts.join(", "));
}

fn matched_media(out: &mut Vec<Outcome>) {
    let mol = Molecule::<f64>::single_ion(1.0, 1.0).unwrap();
    let mut cfg = bench_ion_config(64, 1.0);
    cfg.eps_in = 2.0;
    cfg.eps_out = 2.0;
    cfg.kappa = 0.0;
    let stage = surface_stage(&cfg, &mol).unwrap();
    let (r, _, system, sol) = solve_stage(&cfg, &mol, &stage, None).unwrap();
    let p0 = system.initial_guess();
    let n = system.points();
    let same = sol.psi[..] == p0[..n] && sol.psin[..] == p0[n..];
    let scale = 1.0 / (4.0 * PI * cfg.eps_in * 1.0);
    let rel = r.energy.g_pol_internal.abs() / scale;
    report(
        out,
        7,
        "matched media null test",
        verdict(r.gmres_iterations == 1 && same && rel <= 1e-10, true),
        format!(
            "{} iteration(s), solution equals the diagonal guess: {same}, |G_pol| / self scale {rel:.1e}",
            r.gmres_iterations
        ),
    );
}

fn linearity(out: &mut Vec<Outcome>) {
    let atoms = vec![
        Atom::new(Vec3::new(-0.8, 0.0, 0.0), 1.2, 0.6),
        Atom::new(Vec3::new(0.7, 0.3, 0.0), 1.0, -0.35),
        Atom::new(Vec3::new(0.0, -0.5, 0.6), 1.1, 0.2),
    ];
    let mol = Molecule::new(atoms, "triad").unwrap();
    let cfg = RunConfig {
        grid: Some(64),
        ..RunConfig::default()
    };
    let stage = surface_stage(&cfg, &mol).unwrap();
    let g = |m: &Molecule<f64>| solve_stage(&cfg, m, &stage, None).unwrap().0.energy.g_pol_internal;
    let base = g(&mol);
    let mut worst: f64 = 0.0;
    for s in [-2.5, 3.0] {
        let gs = g(&mol.with_scaled_charges(s));
        worst = worst.max((gs - s * s * base).abs() / (s * s * base).abs());
    }
    report(
        out,
        8,
        "charge scaling gives s^2 energies",
        verdict(worst <= 1e-8, true),
        format!("worst relative deviation {worst:.1e} for s = -2.5, 3"),
    );
}

fn backend_equivalence(out: &mut Vec<Outcome>, cfg: &RunConfig, stage: &SurfaceStage<f64>) {
    let h = stage.grid.h;
    let op = PointCloudOperator::from_band(&stage.band, BlockKernels::new(cfg.dielectrics(), cfg.tau_ratio * h));
    let n = op.len();
    let c = Coeffs::system();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let inputs: Vec<(Vec<f64>, Vec<f64>)> = (0..10)
        .map(|_| {
            (
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
        })
        .collect();
    let t = Instant::now();
    let dense = op.apply_dense_batch(&c, &inputs);
    let t_dense = t.elapsed().as_secs_f64();
    let tree = TreeCode::new(&op, &TreeParams::default());
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for ((psi, psin), (d1, d2)) in inputs.iter().zip(&dense) {
        let (a1, a2) = tree.apply(&op, &c, psi, psin);
        let num: f64 = a1.iter().zip(d1).chain(a2.iter().zip(d2)).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = d1.iter().chain(d2).map(|b| b * b).sum();
        worst = worst.max((num / den).sqrt());
    }
    let t_tree = t.elapsed().as_secs_f64();

    let exact = TreeCode::new(
        &op,
        &TreeParams {
            theta: 0.0,
            ..TreeParams::default()
        },
    );
    let (psi, psin) = &inputs[0];
    let (e1, e2) = exact.apply(&op, &c, psi, psin);
    let bitwise = e1 == dense[0].0 && e2 == dense[0].1;
    report(
        out,
        5,
        "tree vs dense on the 128^3 operator",
        verdict(worst <= 1e-4 && bitwise, true),
        format!(
            "{n} points, worst relative 2-norm {worst:.2e} over 10 vectors (<= 1e-4), theta = 0 bitwise equal: {bitwise} (dense {t_dense:.0} s, tree {t_tree:.0} s)"
        ),
    );
}

/// Returns the eikonal residual of the protein surface when one was built.
fn protein(out: &mut Vec<Outcome>) -> Option<f64> {
    let Ok(path) = std::env::var("IBIM_1A63_PQR") else {
        report(out, 9, "protein area and energy at 128^3", Status::Skip, "IBIM_1A63_PQR not set".into());
        return None;
    };
    let mol = match read_pqr::<f64>(path.as_ref()) {
        Ok(m) => m,
        Err(e) => {
            report(out, 9, "protein area and energy at 128^3", Status::Fail, format!("cannot read {path}: {e}"));
            return None;
        }
    };
    let cfg = RunConfig {
        grid: Some(128),
        ..RunConfig::default()
    };
    let stage = match surface_stage(&cfg, &mol) {
        Ok(s) => s,
        Err(e) => {
            report(out, 9, "protein area and energy at 128^3", Status::Fail, e.to_string());
            return None;
        }
    };
    let eik = stage.stats.eikonal_mean;
    match solve_stage(&cfg, &mol, &stage, None) {
        Ok((r, ..)) => {
            let (area, g) = (r.energy.area, r.energy.g_pol_kcal);
            let (area_ref, g_ref) = (6583.0, -2366.0);
            let da = (area - area_ref).abs() / area_ref;
            let dg = (g - g_ref).abs() / g_ref.abs();
            report(
                out,
                9,
                "protein area and energy at 128^3",
                verdict(da <= 0.05 && dg <= 0.05, true),
                format!("area {area:.1} ({:.1}% off), G_pol {g:.1} kcal/mol ({:.1}% off)", 100.0 * da, 100.0 * dg),
            );
        }
        Err(e) => report(out, 9, "protein area and energy at 128^3", Status::Fail, e.to_string()),
    }
    Some(eik)
}

fn surface_quality(out: &mut Vec<Outcome>, surfaces: &[IonGrid], protein: Option<f64>, complete: bool) {
    let mut ok = !surfaces.is_empty();
    let mut parts = Vec::new();
    for s in surfaces {
        let r_ok = s.radius.is_some_and(|r| (r - 1.0).abs() <= 2.0 * s.h);
        ok &= s.eikonal_mean <= 0.02 && r_ok && s.components == 1;
        parts.push(format!(
            "{}^3 eikonal {:.2e} radius {}",
            s.grid,
            s.eikonal_mean,
            s.radius.map_or("n/a".into(), |r| format!("{r:.4}"))
        ));
    }
    if let Some(e) = protein {
        ok &= e <= 0.02;
        parts.push(format!("protein eikonal {e:.2e}"));
    }
    report(out, 10, "eikonal residual and sphere radius", verdict(ok, complete), parts.join(", "));
}
