use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ibim_core::energy::surface_area;
use ibim_core::narrowband::extract;
use ibim_core::pipeline::{bench_ion_config, feature_size, resolve_grid, write_artifacts, BenchRow, TABLE_HEADER};
use ibim_core::surface::{build_ses, SurfaceStats};
use ibim_core::{bench_ion, read_pqr, run_full, Atom, Error, Kirkwood, Molecule, RunConfig, Vec3};
use log::info;
use serde_json::json;

#[derive(Parser)]
#[command(name = "ibim", version, about = "Linearized Poisson-Boltzmann solver on level set molecular surfaces")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Surface, solve and energy for one molecule.
    Run(Common),
    /// Build the molecular surface only and dump it.
    Surface(Common),
    /// Print the surface area.
    Area(Common),
    /// Single-ion benchmark table against the analytic solution.
    BenchIon(Bench),
}

#[derive(Args)]
struct Common {
    /// PQR file.
    input: Option<PathBuf>,
    /// Built-in sphere instead of a file, e.g. "r=1 q=1".
    #[arg(long)]
    sphere: Option<String>,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Nodes per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Grid spacing in A (instead of --grid).
    #[arg(long)]
    h: Option<f64>,
    /// Override a configuration key, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides IBIM_OUTPUT_DIR and the config file).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Bench {
    /// Comma-separated node counts.
    #[arg(long, default_value = "64,128,256", value_delimiter = ',')]
    grids: Vec<usize>,
    /// Comma-separated tau/h ratios.
    #[arg(long = "tau", default_value = "1,0.5", value_delimiter = ',')]
    taus: Vec<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_sphere(spec: &str) -> Result<(Molecule<f64>, Kirkwood<f64>), Error> {
    let (mut r, mut q) = (1.0, 1.0);
    let mut c = [0.0; 3];
    for tok in spec.split(|ch: char| ch.is_whitespace() || ch == ',').filter(|t| !t.is_empty()) {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sphere: expected key=value, got '{tok}'")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::Config(format!("sphere: cannot parse '{v}'")))?;
        match k {
            "r" => r = v,
            "q" => q = v,
            "x" => c[0] = v,
            "y" => c[1] = v,
            "z" => c[2] = v,
            _ => return Err(Error::Config(format!("sphere: unknown key '{k}'"))),
        }
    }
    let mol = Molecule::new(vec![Atom::new(Vec3::from_f64(c), r, q)], "sphere")?;
    Ok((mol, Kirkwood::new(q, r, Default::default())))
}

fn load_config(path: Option<&Path>, base: RunConfig) -> Result<RunConfig, Error> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let mut cfg = base;
            for (n, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                cfg.set_pair(line)
                    .map_err(|e| Error::Config(format!("{}:{}: {e}", p.display(), n + 1)))?;
            }
            Ok(cfg)
        }
        None => Ok(base),
    }
}

fn output_dir(flag: Option<&PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.cloned()
        .or_else(|| std::env::var_os("IBIM_OUTPUT_DIR").map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("ibim-output"))
}

struct Prepared {
    cfg: RunConfig,
    mol: Molecule<f64>,
    reference: Option<Kirkwood<f64>>,
    out: PathBuf,
}

fn prepare(c: &Common) -> Result<Prepared, Error> {
    let mut cfg = load_config(c.config.as_deref(), RunConfig::default())?;
    if let Some(n) = c.grid {
        cfg.set("grid", &n.to_string())?;
    }
    if let Some(h) = c.h {
        cfg.set("h", &h.to_string())?;
    }
    for pair in &c.set {
        cfg.set_pair(pair)?;
    }
    if let Some(p) = &c.input {
        cfg.input = Some(p.clone());
    }
    let (mol, reference) = match (&c.sphere, &cfg.input) {
        (Some(_), Some(_)) => return Err(Error::Config("give either an input file or --sphere".into())),
        (Some(s), None) => {
            let (m, k) = parse_sphere(s)?;
            (m, Some(Kirkwood::new(k.charge, k.radius, cfg.dielectrics())))
        }
        (None, Some(p)) => (read_pqr(p)?, None),
        (None, None) => return Err(Error::Config("no input: give a PQR file or --sphere".into())),
    };
    cfg.validate()?;
    let out = output_dir(c.out.as_ref(), &cfg);
    cfg.output_dir = Some(out.clone());
    Ok(Prepared {
        cfg,
        mol,
        reference,
        out,
    })
}

fn cmd_run(c: &Common) -> Result<(), Error> {
    let p = prepare(c)?;
    let out = run_full(&p.cfg, &p.mol, p.reference.as_ref())?;
    write_artifacts(&out, &p.out)?;
    println!("{TABLE_HEADER}");
    println!("{}", out.table_row());
    if let Some(e) = &out.report.energy.errors {
        println!(
            "relative errors: solution {:.3e}  area {:.3e}  energy {:.3e}",
            e.solution, e.area, e.energy
        );
    }
    info!("wrote {}", p.out.display());
    Ok(())
}

fn surface_only(c: &Common, dump: bool) -> Result<(), Error> {
    let p = prepare(c)?;
    let grid = resolve_grid(&p.mol, &p.cfg)?;
    let built = build_ses(&p.mol, &grid, &p.cfg.surface(), false)?;
    let band = extract(&built.sdf, &p.cfg.band_options())?;
    let area = surface_area(&band);
    if !dump {
        println!("{area:.6}");
        return Ok(());
    }
    let delta = feature_size(&built.sdf, &band, 4000);
    fs::create_dir_all(&p.out)?;
    let stats: &SurfaceStats = &built.stats;
    let summary = json!({
        "config": p.cfg,
        "h": grid.h,
        "nodes_per_axis": grid.dims[0],
        "surface": stats,
        "band_points": band.len(),
        "area": area,
        "feature_size": delta,
    });
    serde_json::to_writer_pretty(BufWriter::new(File::create(p.out.join("surface.json"))?), &summary)?;
    band.write_csv(BufWriter::new(File::create(p.out.join("band.csv"))?))?;
    built
        .sdf
        .field
        .write_vtk(BufWriter::new(File::create(p.out.join("ses.vtk"))?), "phi")?;
    println!(
        "area {area:.6}  band points {}  components {}  feature size {}",
        band.len(),
        stats.components,
        delta.map_or("n/a".to_string(), |d| format!("{d:.4}"))
    );
    Ok(())
}

fn cmd_bench(b: &Bench) -> Result<(), Error> {
    let mut base = load_config(b.config.as_deref(), RunConfig::default())?;
    base.pad = bench_ion_config(64, 1.0).pad;
    for pair in &b.set {
        base.set_pair(pair)?;
    }
    if b.grids.is_empty() || b.taus.is_empty() {
        return Err(Error::Config("bench-ion needs at least one grid and one tau/h".into()));
    }
    let rows = bench_ion(&base, &b.grids, &b.taus)?;
    println!(
        "{:>5} {:>9} {:>5} {:>9} {:>5} {:>12} {:>12} {:>12} {:>12} {:>9}",
        "grid", "h", "t/h", "DOF", "GMRES", "G_pol", "sol err", "area err", "energy err", "CPU s"
    );
    for r in &rows {
        println!(
            "{:>5} {:>9.5} {:>5} {:>9} {:>5} {:>12.5} {:>12.3e} {:>12.3e} {:>12.3e} {:>9.2}",
            format!("{}^3", r.grid),
            r.h,
            r.tau_ratio,
            r.dof,
            r.iterations,
            r.g_pol_kcal,
            r.errors.solution,
            r.errors.area,
            r.errors.energy,
            r.seconds
        );
    }
    let ratios = convergence_ratios(&rows);
    for (tau, grid, s, a, e) in &ratios {
        println!("t/h {tau}: {grid}  ratios solution {s:.2}  area {a:.2}  energy {e:.2}");
    }
    let out = output_dir(b.out.as_ref(), &base);
    fs::create_dir_all(&out)?;
    let rows_json: Vec<_> = rows
        .iter()
        .map(|r| {
            json!({
                "grid": r.grid, "h": r.h, "tau_ratio": r.tau_ratio, "dof": r.dof,
                "iterations": r.iterations, "g_pol_kcal": r.g_pol_kcal, "area": r.area, "errors": r.errors,
            })
        })
        .collect();
    let doc = json!({ "config": base, "rows": rows_json });
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("bench-ion.json"))?), &doc)?;
    Ok(())
}

/// Error ratios between consecutive grids at equal tau/h.
fn convergence_ratios(rows: &[BenchRow]) -> Vec<(f64, String, f64, f64, f64)> {
    let mut out = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.tau_ratio != b.tau_ratio {
            continue;
        }
        out.push((
            a.tau_ratio,
            format!("{}->{}", a.grid, b.grid),
            a.errors.solution / b.errors.solution,
            a.errors.area / b.errors.area,
            a.errors.energy / b.errors.energy,
        ));
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Surface(c) => surface_only(c, true),
        Command::Area(c) => surface_only(c, false),
        Command::BenchIon(b) => cmd_bench(b),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
