//! Molecule input: PQR parsing and the cubic simulation box.
//!
//! A PQR file is PDB-like text in which every `ATOM`/`HETATM` record carries
//! coordinates, a partial charge and a radius. Force-field generators align
//! the columns with whitespace but do not agree on fixed column positions, so
//! the parser reads the last five whitespace-separated fields of a record as
//! `x y z q r` and ignores everything in between.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec3::Vec3;

/// One charged sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Atom<T> {
    /// Center in Å.
    pub center: Vec3<T>,
    /// Radius in Å, strictly positive.
    pub radius: T,
    /// Partial charge in units of the elementary charge.
    pub charge: T,
}

impl<T: Real> Atom<T> {
    pub fn new(center: Vec3<T>, radius: T, charge: T) -> Self {
        Self {
            center,
            radius,
            charge,
        }
    }

    fn validate(&self, line: usize) -> Result<()> {
        if !self.center.is_finite() {
            return Err(Error::InvalidAtom {
                line,
                message: "non-finite coordinate".into(),
            });
        }
        if !self.charge.is_finite() {
            return Err(Error::InvalidAtom {
                line,
                message: "non-finite charge".into(),
            });
        }
        if !(self.radius > T::zero()) || !self.radius.is_finite() {
            return Err(Error::InvalidAtom {
                line,
                message: format!("radius must be positive, got {}", self.radius),
            });
        }
        Ok(())
    }
}

/// Ordered, nonempty list of atoms.
///
/// Atom order is the input order; per-atom outputs index into it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Molecule<T> {
    atoms: Vec<Atom<T>>,
    pub label: String,
}

impl<T: Real> Molecule<T> {
    pub fn new(atoms: Vec<Atom<T>>, label: impl Into<String>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyMolecule);
        }
        for (i, a) in atoms.iter().enumerate() {
            a.validate(i + 1)?;
        }
        Ok(Self {
            atoms,
            label: label.into(),
        })
    }

    /// A single ion of the given radius and charge centered at the origin.
    pub fn single_ion(radius: T, charge: T) -> Result<Self> {
        Self::new(vec![Atom::new(Vec3::zero(), radius, charge)], "single-ion")
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_charge(&self) -> T {
        self.atoms.iter().map(|a| a.charge).sum()
    }

    pub fn min_radius(&self) -> T {
        self.atoms
            .iter()
            .map(|a| a.radius)
            .fold(T::infinity(), T::min)
    }

    /// Copy with every charge multiplied by `s`.
    pub fn with_scaled_charges(&self, s: T) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom::new(a.center, a.radius, a.charge * s))
            .collect();
        Self {
            atoms,
            label: self.label.clone(),
        }
    }

    /// Copy with every center shifted by `offset`.
    pub fn translated(&self, offset: Vec3<T>) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom::new(a.center + offset, a.radius, a.charge))
            .collect();
        Self {
            atoms,
            label: self.label.clone(),
        }
    }

    /// Serializes to PQR text that [`parse_pqr`] reads back exactly.
    pub fn to_pqr(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "REMARK   {}", self.label);
        for (i, a) in self.atoms.iter().enumerate() {
            let _ = writeln!(
                out,
                "ATOM  {:>5}  X   MOL     1    {} {} {} {} {}",
                i + 1,
                a.center.x,
                a.center.y,
                a.center.z,
                a.charge,
                a.radius
            );
        }
        out.push_str("END\n");
        out
    }
}

fn is_atom_record(token: &str) -> bool {
    // Wide serial numbers can run into the record name ("HETATM12345").
    let name = token.trim_end_matches(|c: char| c.is_ascii_digit());
    name == "ATOM" || name == "HETATM"
}

/// Parses PQR text. Non-atom records are ignored.
pub fn parse_pqr<T: Real>(text: &str, label: impl Into<String>) -> Result<Molecule<T>> {
    let mut atoms = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(first) if is_atom_record(first) => {}
            _ => continue,
        }
        let rest: Vec<&str> = tokens.collect();
        if rest.len() < 5 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected at least five numeric fields, found {}", rest.len()),
            });
        }
        let mut vals = [0.0f64; 5];
        for (v, tok) in vals.iter_mut().zip(&rest[rest.len() - 5..]) {
            *v = tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("malformed numeric field {tok:?}"),
            })?;
        }
        let atom = Atom::new(
            Vec3::new(T::of(vals[0]), T::of(vals[1]), T::of(vals[2])),
            T::of(vals[4]),
            T::of(vals[3]),
        );
        atom.validate(lineno)?;
        atoms.push(atom);
    }
    if atoms.is_empty() {
        return Err(Error::EmptyMolecule);
    }
    Ok(Molecule {
        atoms,
        label: label.into(),
    })
}

/// Reads and parses a PQR file; the label is the file stem.
pub fn read_pqr<T: Real>(path: &Path) -> Result<Molecule<T>> {
    let text = std::fs::read_to_string(path)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_pqr(&text, label)
}

/// Axis-aligned cube `[center - half_width, center + half_width]^3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cube<T> {
    pub center: Vec3<T>,
    pub half_width: T,
}

impl<T: Real> Cube<T> {
    pub fn lower(&self) -> Vec3<T> {
        self.center - Vec3::splat(self.half_width)
    }

    pub fn upper(&self) -> Vec3<T> {
        self.center + Vec3::splat(self.half_width)
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        (0..3).all(|a| (p[a] - self.center[a]).abs() <= self.half_width)
    }
}

/// Smallest cube (centered on the atoms' extent) containing every ball
/// `B(z_k, r_k + probe + pad)`.
pub fn bounding_box<T: Real>(mol: &Molecule<T>, probe: T, pad: T) -> Cube<T> {
    assert!(probe >= T::zero() && pad >= T::zero(), "probe and pad must be nonnegative");
    let mut lo = Vec3::splat(T::infinity());
    let mut hi = Vec3::splat(T::neg_infinity());
    for a in mol.atoms() {
        let r = a.radius + probe + pad;
        lo = lo.zip(a.center - Vec3::splat(r), T::min);
        hi = hi.zip(a.center + Vec3::splat(r), T::max);
    }
    let half = T::of(0.5);
    let center = (lo + hi).scale(half);
    let half_width = (hi - lo).scale(half).max_component();
    Cube { center, half_width }
}
