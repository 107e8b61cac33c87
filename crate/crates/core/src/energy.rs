//! Surface area, reaction potential, polarization energy and the error
//! metrics against the analytic single-ion solution.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::Dielectrics;
use crate::molecule::Molecule;
use crate::narrowband::{surface_integral, Narrowband};
use crate::scalar::Real;
use crate::summation::PointCloudOperator;
use crate::vec3::Vec3;

/// kcal/mol per `e^2 / (4 pi eps0 A)`.
pub const COULOMB_KCAL: f64 = 332.0637;

/// Converts an energy in internal units (`e^2 / (eps0 A)`, potentials
/// `q / (4 pi eps r)`) to kcal/mol.
pub fn internal_to_kcal(e: f64, coulomb: f64) -> f64 {
    e * 4.0 * std::f64::consts::PI * coulomb
}

pub fn surface_area<T: Real>(band: &Narrowband<T>) -> T {
    surface_integral(band, |_| T::one())
}

/// Integrand weights of the reaction potential at `z` for the source at
/// `(y, n_y)`: `(theta1 dGk/dn_y - dG0/dn_y, G0 - Gk)`.
#[inline]
fn rxn_kernel<T: Real>(z: Vec3<T>, y: Vec3<T>, ny: Vec3<T>, diel: &Dielectrics<T>) -> (T, T) {
    let u = y - z;
    let r = u.norm();
    let c = T::one() / (T::of(4.0) * T::PI() * r);
    let cos = ny.dot(u) / r;
    let kr = diel.kappa * r;
    let ek = (-kr).exp();
    // radial derivatives of G0 and Gk
    let d0 = -c / r;
    let dk = -c / r * ek * (T::one() + kr);
    let dipole = (diel.theta1() * dk - d0) * cos;
    let single = -c * (-kr).exp_m1();
    (dipole, single)
}

/// `psi_rxn(z) = h^3 sum_j [(theta1 dGk/dn_y - dG0/dn_y) psi_j + (G0 - Gk) psi_n,j] w_j`.
///
/// No regularization is applied; `z` must be well inside the surface. A
/// warning is logged when it is closer than `eps` to a quadrature point.
pub fn reaction_potential<T: Real>(z: Vec3<T>, op: &PointCloudOperator<T>, psi: &[T], psin: &[T], eps: T) -> T {
    let diel = op.kernels.diel;
    let mut acc = T::zero();
    let mut closest = T::infinity();
    for j in 0..op.len() {
        let y = op.points[j];
        closest = closest.min((y - z).norm());
        let (a, b) = rxn_kernel(z, y, op.normals[j], &diel);
        acc += (a * psi[j] + b * psin[j]) * op.weights[j];
    }
    if closest < eps {
        warn!(
            "reaction potential evaluated {:.3e} from the surface, inside the band half-width {:.3e}",
            closest.to_f64_lossy(),
            eps.to_f64_lossy()
        );
    }
    acc * op.cell_volume
}

/// `psi_rxn` at every atom center, in atom order.
pub fn reaction_potentials<T: Real>(mol: &Molecule<T>, op: &PointCloudOperator<T>, psi: &[T], psin: &[T], eps: T) -> Vec<T> {
    mol.atoms()
        .par_iter()
        .map(|a| reaction_potential(a.center, op, psi, psin, eps))
        .collect()
}

/// `G_pol = 1/2 sum_k q_k psi_rxn(z_k)`.
pub fn polarization_energy<T: Real>(mol: &Molecule<T>, potentials: &[T]) -> T {
    let half = T::of(0.5);
    mol.atoms()
        .iter()
        .zip(potentials)
        .fold(T::zero(), |s, (a, &p)| s + a.charge * p)
        * half
}

/// The same energy with the quadrature loop outermost.
pub fn polarization_energy_fused<T: Real>(mol: &Molecule<T>, op: &PointCloudOperator<T>, psi: &[T], psin: &[T]) -> T {
    let diel = op.kernels.diel;
    let mut acc = T::zero();
    for j in 0..op.len() {
        let mut s = T::zero();
        for a in mol.atoms() {
            let (k1, k2) = rxn_kernel(a.center, op.points[j], op.normals[j], &diel);
            s += a.charge * (k1 * psi[j] + k2 * psin[j]);
        }
        acc += s * op.weights[j];
    }
    acc * op.cell_volume * T::of(0.5)
}

/// Analytic solution for one charge `q` at the center of a sphere of
/// radius `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Kirkwood<T> {
    pub charge: T,
    pub radius: T,
    pub diel: Dielectrics<T>,
}

impl<T: Real> Kirkwood<T> {
    pub fn new(charge: T, radius: T, diel: Dielectrics<T>) -> Self {
        assert!(radius > T::zero(), "sphere radius must be positive");
        Self { charge, radius, diel }
    }

    fn four_pi() -> T {
        T::of(4.0) * T::PI()
    }

    /// Outside potential at distance `rho >= r` from the center.
    pub fn exterior(&self, rho: T) -> T {
        let (q, r, d) = (self.charge, self.radius, &self.diel);
        q * (-d.kappa * (rho - r)).exp() / (Self::four_pi() * d.eps_out * (T::one() + d.kappa * r) * rho)
    }

    /// Surface trace of the potential.
    pub fn psi(&self) -> T {
        self.exterior(self.radius)
    }

    /// Normal derivative on the molecular side, `-q / (4 pi eps_in r^2)`.
    pub fn psin(&self) -> T {
        -self.charge / (Self::four_pi() * self.diel.eps_in * self.radius * self.radius)
    }

    /// Normal derivative on the solvent side.
    pub fn psin_exterior(&self) -> T {
        -self.charge / (Self::four_pi() * self.diel.eps_out * self.radius * self.radius)
    }

    /// Reaction potential inside the sphere (constant).
    pub fn reaction_potential(&self) -> T {
        let (q, r, d) = (self.charge, self.radius, &self.diel);
        q / (Self::four_pi() * r) * (T::one() / (d.eps_out * (T::one() + d.kappa * r)) - T::one() / d.eps_in)
    }

    pub fn energy(&self) -> T {
        self.reaction_potential() * self.charge * T::of(0.5)
    }

    pub fn area(&self) -> T {
        Self::four_pi() * self.radius * self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenchmarkErrors {
    pub solution: f64,
    pub area: f64,
    pub energy: f64,
}

/// Relative errors against the analytic sphere: the combined surface L2
/// error of `(psi, psi_n)`, the area error and the energy error.
pub fn benchmark_errors<T: Real>(
    band: &Narrowband<T>,
    psi: &[T],
    psin: &[T],
    area: T,
    energy: T,
    reference: &Kirkwood<T>,
) -> Result<BenchmarkErrors> {
    let (ps, pn) = (reference.psi(), reference.psin());
    let mut num = T::zero();
    let mut den = T::zero();
    for (k, node) in band.nodes.iter().enumerate() {
        let e1 = psi[k] - ps;
        let e2 = psin[k] - pn;
        num += (e1 * e1 + e2 * e2) * node.weight;
        den += (ps * ps + pn * pn) * node.weight;
    }
    if !(den > T::zero()) {
        return Err(Error::ZeroReference("solution"));
    }
    let (a_ref, e_ref) = (reference.area(), reference.energy());
    if e_ref == T::zero() {
        return Err(Error::ZeroReference("energy"));
    }
    Ok(BenchmarkErrors {
        solution: (num / den).sqrt().to_f64_lossy(),
        area: ((area - a_ref) / a_ref).abs().to_f64_lossy(),
        energy: ((energy - e_ref) / e_ref).abs().to_f64_lossy(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    /// A^2.
    pub area: f64,
    pub g_pol_internal: f64,
    pub g_pol_kcal: f64,
    /// Per atom, internal units.
    pub reaction_potentials: Vec<f64>,
    pub errors: Option<BenchmarkErrors>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BlockKernels, Dielectrics};
    use crate::molecule::Atom;

    fn sphere_quadrature(n: usize, radius: f64, offset: Vec3<f64>) -> PointCloudOperator<f64> {
        // midpoint rule in (cos theta, phi): equal area cells
        let (nt, np) = (n, 2 * n);
        let mut points = Vec::new();
        let mut normals = Vec::new();
        for i in 0..nt {
            let z = -1.0 + (2.0 * i as f64 + 1.0) / nt as f64;
            let s = (1.0 - z * z).sqrt();
            for j in 0..np {
                let ph = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / np as f64;
                let nrm = Vec3::new(s * ph.cos(), s * ph.sin(), z);
                points.push(offset + nrm.scale(radius));
                normals.push(nrm);
            }
        }
        let m = points.len();
        let cell = 4.0 * std::f64::consts::PI * radius * radius / m as f64;
        PointCloudOperator {
            points,
            normals,
            weights: vec![1.0; m],
            kernels: BlockKernels::new(Dielectrics::default(), 0.1),
            cell_volume: cell,
        }
    }

    #[test]
    fn kirkwood_values() {
        let k = Kirkwood::<f64>::new(1.0, 1.0, Dielectrics::default());
        assert!((k.psi() - 8.83644305165094e-4).abs() < 1e-15);
        assert!((k.psin() + 0.0795774715459477).abs() < 1e-15);
        assert!((k.energy() + 0.0393469136203913).abs() < 1e-14);
        assert!((k.reaction_potential() + 0.0786938272407826).abs() < 1e-14);
        assert!((k.area() - 4.0 * std::f64::consts::PI).abs() < 1e-14);
        let d = 1e-6;
        let fd = (k.exterior(1.0 + d) - k.exterior(1.0 - d)) / (2.0 * d);
        assert!(((fd - k.psin_exterior()) / k.psin_exterior()).abs() < 1e-6);
        let matched = Kirkwood::new(
            1.0,
            1.0,
            Dielectrics {
                eps_in: 1.0,
                eps_out: 1.0,
                kappa: 0.0,
            },
        );
        assert_eq!(matched.energy(), 0.0);
    }

    #[test]
    fn analytic_densities_recover_reaction_potential() {
        // the Kirkwood surface data fed through the quadrature reproduce the
        // interior reaction potential at the center and off center
        let k = Kirkwood::new(1.0, 1.0, Dielectrics::default());
        let op = sphere_quadrature(200, 1.0, Vec3::zero());
        let psi = vec![k.psi(); op.len()];
        let psin = vec![k.psin(); op.len()];
        for z in [Vec3::zero(), Vec3::new(0.2, -0.1, 0.3)] {
            let v = reaction_potential(z, &op, &psi, &psin, 0.1);
            assert!(((v - k.reaction_potential()) / k.reaction_potential()).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn zero_densities_and_translation() {
        let op = sphere_quadrature(20, 1.0, Vec3::zero());
        let zero = vec![0.0; op.len()];
        assert_eq!(reaction_potential(Vec3::zero(), &op, &zero, &zero, 0.1), 0.0);
        let psi: Vec<f64> = (0..op.len()).map(|i| (i as f64 * 0.1).sin()).collect();
        let psin: Vec<f64> = (0..op.len()).map(|i| (i as f64 * 0.3).cos()).collect();
        let shift = Vec3::new(3.0, -2.0, 1.5);
        let moved = sphere_quadrature(20, 1.0, shift);
        let z = Vec3::new(0.1, 0.2, -0.3);
        let a = reaction_potential(z, &op, &psi, &psin, 0.1);
        let b = reaction_potential(z + shift, &moved, &psi, &psin, 0.1);
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn fused_energy_agrees() {
        let op = sphere_quadrature(30, 2.0, Vec3::zero());
        let mol = Molecule::new(
            vec![
                Atom::new(Vec3::new(0.3, 0.0, 0.0), 1.0, 0.7),
                Atom::new(Vec3::new(-0.5, 0.2, 0.1), 1.2, -0.4),
                Atom::new(Vec3::new(0.0, 0.6, -0.4), 0.8, 0.25),
            ],
            "t",
        )
        .unwrap();
        let psi: Vec<f64> = (0..op.len()).map(|i| 1e-3 * (i as f64 * 0.1).sin()).collect();
        let psin: Vec<f64> = (0..op.len()).map(|i| -0.05 + 1e-3 * (i as f64 * 0.3).cos()).collect();
        let pots = reaction_potentials(&mol, &op, &psi, &psin, 0.1);
        let e1 = polarization_energy(&mol, &pots);
        let e2 = polarization_energy_fused(&mol, &op, &psi, &psin);
        assert!(((e1 - e2) / e1).abs() < 1e-12);
        let neutral = mol.with_scaled_charges(0.0);
        assert_eq!(polarization_energy_fused(&neutral, &op, &psi, &psin), 0.0);
    }

    #[test]
    fn exact_densities_have_zero_error() {
        use crate::narrowband::NarrowbandNode;
        let k = Kirkwood::new(1.0, 1.0, Dielectrics::default());
        let band = Narrowband {
            nodes: (0..10)
                .map(|i| NarrowbandNode {
                    index: [i, 0, 0],
                    position: Vec3::zero(),
                    distance: 0.0,
                    projection: Vec3::zero(),
                    normal: Vec3::new(1.0, 0.0, 0.0),
                    weight: 0.5,
                })
                .collect(),
            eps: 0.2,
            h: 0.1,
        };
        let psi = vec![k.psi(); 10];
        let psin = vec![k.psin(); 10];
        let e = benchmark_errors(&band, &psi, &psin, k.area(), k.energy(), &k).unwrap();
        assert_eq!(
            e,
            BenchmarkErrors {
                solution: 0.0,
                area: 0.0,
                energy: 0.0
            }
        );
        let zero_q = Kirkwood::new(0.0, 1.0, Dielectrics::default());
        assert!(matches!(
            benchmark_errors(&band, &psi, &psin, 1.0, 1.0, &zero_q),
            Err(Error::ZeroReference(_))
        ));
    }

    #[test]
    fn kcal_conversion() {
        let k = Kirkwood::new(1.0, 1.0, Dielectrics::default());
        // Born energy q^2/(2r) (1/eps_out - 1/eps_in) in kcal/mol for kappa = 0
        let born = Kirkwood::new(
            1.0,
            1.0,
            Dielectrics {
                kappa: 0.0,
                ..Dielectrics::default()
            },
        );
        let expect = 0.5 * COULOMB_KCAL * (1.0 / 80.0 - 1.0);
        assert!((internal_to_kcal(born.energy(), COULOMB_KCAL) - expect).abs() < 1e-10);
        assert!(internal_to_kcal(k.energy(), COULOMB_KCAL) < 0.0);
    }
}
