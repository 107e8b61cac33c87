//! Run configuration: line-based `key = value` text with defaults.

use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::Dielectrics;
use crate::narrowband::{BandOptions, JacobianMode};
use crate::scalar::Real;
use crate::solver::GmresParams;
use crate::summation::{SummationConfig, SummationKind, TreeParams};
use crate::surface::{min_reinit_steps, CavityMode, SurfaceConfig};

/// How far the box extends beyond the probe-inflated atoms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Padding {
    /// `probe + 2 eps + 4 h`.
    Auto,
    /// Fixed distance in A.
    Length(f64),
    /// Whole grid cells.
    Cells(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    /// Nodes per axis; exactly one of `grid` and `h` is set.
    pub grid: Option<usize>,
    pub h: Option<f64>,
    pub pad: Padding,
    pub probe: f64,
    /// `k0`: time step over grid spacing.
    pub cfl: f64,
    /// `k1`: band half-width in cells.
    pub band_factor: f64,
    pub reinit_steps: Option<usize>,
    pub cavity: CavityMode,
    pub jacobian: JacobianMode,
    pub tau_ratio: f64,
    pub eps_in: f64,
    pub eps_out: f64,
    pub kappa: f64,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_matvecs: usize,
    pub summation: SummationKind,
    pub leaf_capacity: usize,
    pub order: usize,
    pub theta: f64,
    pub max_depth: usize,
    pub tree_tol: f64,
    pub coulomb_kcal: f64,
    pub output_dir: Option<PathBuf>,
    pub dump_band: bool,
    pub dump_solution: bool,
    pub dump_vtk: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tree = TreeParams::<f64>::default();
        let gm = GmresParams::<f64>::default();
        Self {
            input: None,
            grid: None,
            h: None,
            pad: Padding::Auto,
            probe: 1.4,
            cfl: 0.3,
            band_factor: 2.0,
            reinit_steps: None,
            cavity: CavityMode::FloodFill,
            jacobian: JacobianMode::Unit,
            tau_ratio: 1.0,
            eps_in: 1.0,
            eps_out: 80.0,
            kappa: 0.1257,
            gmres_tol: gm.tol,
            gmres_restart: gm.restart,
            gmres_max_matvecs: gm.max_matvecs,
            summation: SummationKind::Tree,
            leaf_capacity: tree.leaf_capacity,
            order: tree.order,
            theta: tree.theta,
            max_depth: tree.max_depth,
            tree_tol: tree.tol,
            coulomb_kcal: crate::energy::COULOMB_KCAL,
            output_dir: None,
            dump_band: false,
            dump_solution: false,
            dump_vtk: false,
        }
    }
}

fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "grid" => {
                self.grid = Some(num(key, value)?);
                self.h = None;
            }
            "h" => {
                self.h = Some(num(key, value)?);
                self.grid = None;
            }
            "pad" => {
                self.pad = if value == "auto" {
                    Padding::Auto
                } else {
                    Padding::Length(num(key, value)?)
                }
            }
            "pad_cells" => self.pad = Padding::Cells(num(key, value)?),
            "probe" => self.probe = num(key, value)?,
            "cfl" | "k0" => self.cfl = num(key, value)?,
            "band_factor" | "k1" => self.band_factor = num(key, value)?,
            "reinit_steps" => self.reinit_steps = Some(num(key, value)?),
            "cavity" => self.cavity = value.parse()?,
            "jacobian" => {
                self.jacobian = match value {
                    "unit" => JacobianMode::Unit,
                    "full" => JacobianMode::Full,
                    _ => return Err(Error::Config(format!("jacobian: expected unit or full, got '{value}'"))),
                }
            }
            "tau_ratio" | "tau/h" => self.tau_ratio = num(key, value)?,
            "eps_in" => self.eps_in = num(key, value)?,
            "eps_out" => self.eps_out = num(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "gmres_tol" => self.gmres_tol = num(key, value)?,
            "gmres_restart" => self.gmres_restart = num(key, value)?,
            "gmres_max_matvecs" => self.gmres_max_matvecs = num(key, value)?,
            "summation" => self.summation = value.parse()?,
            "leaf_capacity" => self.leaf_capacity = num(key, value)?,
            "order" => self.order = num(key, value)?,
            "theta" => self.theta = num(key, value)?,
            "max_depth" => self.max_depth = num(key, value)?,
            "tree_tol" => self.tree_tol = num(key, value)?,
            "coulomb_kcal" => self.coulomb_kcal = num(key, value)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "dump_band" => self.dump_band = boolean(key, value)?,
            "dump_solution" => self.dump_solution = boolean(key, value)?,
            "dump_vtk" => self.dump_vtk = boolean(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{pair}'")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (self.grid, self.h) {
            (Some(_), Some(_)) => return bad("set only one of grid and h".into()),
            (None, None) => return bad("one of grid or h is required".into()),
            (Some(n), None) if n < 16 => return bad(format!("grid must be at least 16, got {n}")),
            (None, Some(h)) if !(h > 0.0 && h.is_finite()) => return bad(format!("h must be positive, got {h}")),
            _ => {}
        }
        if !(self.tau_ratio > 0.0 && self.tau_ratio <= 2.0) {
            return bad(format!("tau/h must lie in (0, 2], got {}", self.tau_ratio));
        }
        match self.pad {
            Padding::Length(p) if !(p >= 0.0 && p.is_finite()) => return bad(format!("pad must be nonnegative, got {p}")),
            _ => {}
        }
        if !(self.gmres_tol > 0.0 && self.gmres_tol < 1.0) {
            return bad(format!("gmres_tol must lie in (0, 1), got {}", self.gmres_tol));
        }
        if self.gmres_restart == 0 || self.gmres_max_matvecs == 0 {
            return bad("gmres restart and max_matvecs must be positive".into());
        }
        if !(self.coulomb_kcal > 0.0) {
            return bad(format!("coulomb_kcal must be positive, got {}", self.coulomb_kcal));
        }
        self.dielectrics::<f64>().validate()?;
        self.surface::<f64>().validate()?;
        if self.summation == SummationKind::Tree {
            self.summation_config::<f64>().tree.validate()?;
        }
        Ok(())
    }

    pub fn dielectrics<T: Real>(&self) -> Dielectrics<T> {
        Dielectrics {
            eps_in: T::of(self.eps_in),
            eps_out: T::of(self.eps_out),
            kappa: T::of(self.kappa),
        }
    }

    pub fn surface<T: Real>(&self) -> SurfaceConfig<T> {
        let base = SurfaceConfig::<T>::default();
        let (cfl, k1) = (T::of(self.cfl), T::of(self.band_factor));
        SurfaceConfig {
            probe: T::of(self.probe),
            cfl,
            band_factor: k1,
            reinit_steps: self.reinit_steps.unwrap_or_else(|| min_reinit_steps(cfl, k1)),
            cavity_mode: self.cavity,
            reinit_tube: k1 + T::of(7.0),
            ..base
        }
    }

    pub fn band_options(&self) -> BandOptions {
        BandOptions {
            jacobian: self.jacobian,
            ..BandOptions::default()
        }
    }

    pub fn gmres<T: Real>(&self) -> GmresParams<T> {
        GmresParams {
            tol: T::of(self.gmres_tol),
            restart: self.gmres_restart,
            max_matvecs: self.gmres_max_matvecs,
        }
    }

    pub fn summation_config<T: Real>(&self) -> SummationConfig<T> {
        SummationConfig {
            kind: self.summation,
            tree: TreeParams {
                leaf_capacity: self.leaf_capacity,
                order: self.order,
                theta: T::of(self.theta),
                max_depth: self.max_depth,
                tol: T::of(self.tree_tol),
            },
        }
    }

    /// `key = value` text that parses back to this configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        if let Some(p) = &self.input {
            line("input", p.display().to_string());
        }
        if let Some(n) = self.grid {
            line("grid", n.to_string());
        }
        if let Some(h) = self.h {
            line("h", h.to_string());
        }
        match self.pad {
            Padding::Auto => line("pad", "auto".into()),
            Padding::Length(p) => line("pad", p.to_string()),
            Padding::Cells(c) => line("pad_cells", c.to_string()),
        }
        line("probe", self.probe.to_string());
        line("cfl", self.cfl.to_string());
        line("band_factor", self.band_factor.to_string());
        if let Some(r) = self.reinit_steps {
            line("reinit_steps", r.to_string());
        }
        let cavity = match self.cavity {
            CavityMode::FloodFill => "flood-fill",
            CavityMode::PositiveComponents => "positive-components",
            CavityMode::Off => "off",
        };
        line("cavity", cavity.into());
        let jac = match self.jacobian {
            JacobianMode::Unit => "unit",
            JacobianMode::Full => "full",
        };
        line("jacobian", jac.into());
        line("tau_ratio", self.tau_ratio.to_string());
        line("eps_in", self.eps_in.to_string());
        line("eps_out", self.eps_out.to_string());
        line("kappa", self.kappa.to_string());
        line("gmres_tol", self.gmres_tol.to_string());
        line("gmres_restart", self.gmres_restart.to_string());
        line("gmres_max_matvecs", self.gmres_max_matvecs.to_string());
        let sum = match self.summation {
            SummationKind::Dense => "dense",
            SummationKind::Tree => "tree",
        };
        line("summation", sum.into());
        line("leaf_capacity", self.leaf_capacity.to_string());
        line("order", self.order.to_string());
        line("theta", self.theta.to_string());
        line("max_depth", self.max_depth.to_string());
        line("tree_tol", self.tree_tol.to_string());
        line("coulomb_kcal", self.coulomb_kcal.to_string());
        if let Some(p) = &self.output_dir {
            line("output_dir", p.display().to_string());
        }
        line("dump_band", self.dump_band.to_string());
        line("dump_solution", self.dump_solution.to_string());
        line("dump_vtk", self.dump_vtk.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let text = "# single ion\ngrid = 64\ntau_ratio = 0.5   # half\nsummation = dense\n\nkappa=0\n";
        let mut cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.grid, Some(64));
        assert_eq!(cfg.tau_ratio, 0.5);
        assert_eq!(cfg.summation, SummationKind::Dense);
        assert_eq!(cfg.kappa, 0.0);
        assert_eq!(cfg.eps_out, 80.0);
        cfg.validate().unwrap();
        cfg.set_pair("h=0.1").unwrap();
        assert_eq!((cfg.grid, cfg.h), (None, Some(0.1)));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("grid 64").is_err());
        assert!(RunConfig::parse("nonsense = 1").is_err());
        assert!(RunConfig::parse("grid = x").is_err());
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_err());
        cfg.grid = Some(64);
        cfg.validate().unwrap();
        for (k, v) in [("tau_ratio", "0"), ("tau_ratio", "2.5"), ("eps_in", "-1"), ("cfl", "0.9"), ("order", "1"), ("gmres_tol", "0")] {
            let mut c = cfg.clone();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k} = {v} accepted");
        }
        let mut c = cfg.clone();
        c.h = Some(0.1);
        assert!(c.validate().is_err());
    }

    #[test]
    fn defaults_mirror_reference_setup() {
        let cfg = RunConfig::default();
        let d = cfg.dielectrics::<f64>();
        assert_eq!((d.eps_in, d.eps_out, d.kappa), (1.0, 80.0, 0.1257));
        assert_eq!(cfg.gmres_tol, 1e-5);
        assert_eq!(cfg.surface::<f64>().band_half_width(0.1), 0.2);
        assert_eq!(cfg.surface::<f64>().reinit_steps, 20);
    }
}
