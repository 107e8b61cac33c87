//! The coupled boundary integral system and its GMRES solution.
//!
//! Unknowns are stacked as all `psi` values followed by all `psi_n`
//! values, where `psi_n` is the normal derivative of the potential on the
//! molecular side.

use std::io::Write;

use log::{debug, info};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::kernels::{BlockKernels, Dielectrics};
use crate::molecule::Molecule;
use crate::narrowband::Narrowband;
use crate::scalar::Real;
use crate::summation::{Coeffs, PointCloudOperator, Summation, SummationConfig};
use crate::vec3::Vec3;

/// `g1 = sum_k q_k/eps_in G0(x*, z_k)` and `g2 = sum_k q_k/eps_in dG0/dn_x`
/// at every projected band point, stacked.
pub fn assemble_rhs<T: Real>(
    points: &[Vec3<T>],
    normals: &[Vec3<T>],
    mol: &Molecule<T>,
    diel: &Dielectrics<T>,
) -> Vec<T> {
    let n = points.len();
    let c = T::one() / (T::of(4.0) * T::PI());
    let mut g = vec![T::zero(); 2 * n];
    for i in 0..n {
        let (x, nx) = (points[i], normals[i]);
        let mut g1 = T::zero();
        let mut g2 = T::zero();
        for a in mol.atoms() {
            let u = x - a.center;
            let r = u.norm();
            let s = a.charge / diel.eps_in * c / r;
            g1 += s;
            g2 -= s * nx.dot(u) / (r * r);
        }
        g[i] = g1;
        g[n + i] = g2;
    }
    g
}

/// Every charge must lie strictly inside the surface and outside the band.
pub fn check_charges_inside<T: Real>(mol: &Molecule<T>, phi: &GridField<T>, eps: T) -> Result<()> {
    for (k, a) in mol.atoms().iter().enumerate() {
        match phi.trilinear(a.center) {
            Some(v) if v < -eps => {}
            Some(v) => {
                return Err(Error::Geometry(format!(
                    "atom {} at {:?} has level set value {:.4} >= -eps = {:.4}; the charge is not inside the surface",
                    k + 1,
                    a.center.to_f64(),
                    v.to_f64_lossy(),
                    (-eps).to_f64_lossy()
                )))
            }
            None => {
                return Err(Error::Geometry(format!(
                    "atom {} at {:?} lies outside the grid",
                    k + 1,
                    a.center.to_f64()
                )))
            }
        }
    }
    Ok(())
}

/// `Lambda p + h^3 K W p = g` on one narrow band.
#[derive(Clone, Debug)]
pub struct BiSystem<T> {
    pub op: PointCloudOperator<T>,
    pub backend: Summation<T>,
    pub diel: Dielectrics<T>,
    pub lambda1: T,
    pub lambda2: T,
    pub rhs: Vec<T>,
}

impl<T: Real> BiSystem<T> {
    pub fn new(
        band: &Narrowband<T>,
        mol: &Molecule<T>,
        diel: Dielectrics<T>,
        tau: T,
        summation: &SummationConfig<T>,
    ) -> Result<Self> {
        diel.validate()?;
        if band.is_empty() {
            return Err(Error::Geometry("empty narrow band".into()));
        }
        let op = PointCloudOperator::from_band(band, BlockKernels::new(diel, tau));
        let backend = Summation::new(&op, summation)?;
        let rhs = assemble_rhs(&op.points, &op.normals, mol, &diel);
        Ok(Self {
            op,
            backend,
            diel,
            lambda1: diel.lambda1(),
            lambda2: diel.lambda2(),
            rhs,
        })
    }

    /// Number of band points; the system has twice as many unknowns.
    pub fn points(&self) -> usize {
        self.op.len()
    }

    pub fn dof(&self) -> usize {
        2 * self.op.len()
    }

    /// `(l1 psi + K11 psi - K12 psi_n, l2 psi_n + K21 psi - K22 psi_n)`.
    pub fn apply(&self, p: &[T]) -> Vec<T> {
        let n = self.points();
        assert_eq!(p.len(), 2 * n, "stacked vector has wrong length");
        let (psi, psin) = p.split_at(n);
        let (o1, o2) = self.backend.apply(&self.op, &Coeffs::system(), psi, psin);
        let mut out = Vec::with_capacity(2 * n);
        out.extend(o1.iter().zip(psi).map(|(&k, &v)| self.lambda1 * v + k));
        out.extend(o2.iter().zip(psin).map(|(&k, &v)| self.lambda2 * v + k));
        out
    }

    /// `Lambda^-1 g`; the regularized kernels contribute nothing to the
    /// block diagonal.
    pub fn initial_guess(&self) -> Vec<T> {
        let n = self.points();
        self.rhs
            .iter()
            .enumerate()
            .map(|(i, &g)| if i < n { g / self.lambda1 } else { g / self.lambda2 })
            .collect()
    }

    pub fn solve(&self, params: &GmresParams<T>) -> Result<SolveResult<T>> {
        let out = gmres(|p| self.apply(p), &self.rhs, self.initial_guess(), params)?;
        let n = self.points();
        let mut x = out.x;
        let psin = x.split_off(n);
        Ok(SolveResult {
            psi: x,
            psin,
            iterations: out.matvecs,
            residuals: out.residuals,
        })
    }

    /// Per-node `x*, n, psi, psi_n` as CSV.
    pub fn write_solution_csv<W: Write>(&self, sol: &SolveResult<T>, mut w: W) -> Result<()> {
        writeln!(w, "x,y,z,nx,ny,nz,psi,psi_n")?;
        for i in 0..self.points() {
            let (p, n) = (self.op.points[i].to_f64(), self.op.normals[i].to_f64());
            writeln!(
                w,
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                p[0],
                p[1],
                p[2],
                n[0],
                n[1],
                n[2],
                sol.psi[i].to_f64_lossy(),
                sol.psin[i].to_f64_lossy()
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GmresParams<T> {
    /// Relative residual `|g - A p| / |g|` at which to stop.
    pub tol: T,
    pub restart: usize,
    /// Cap on operator applications.
    pub max_matvecs: usize,
}

impl<T: Real> Default for GmresParams<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-5),
            restart: 60,
            max_matvecs: 500,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveResult<T> {
    pub psi: Vec<T>,
    pub psin: Vec<T>,
    /// Operator applications, including the one for the initial residual.
    pub iterations: usize,
    /// Relative residual after each operator application.
    pub residuals: Vec<f64>,
}

impl<T: Real> SolveResult<T> {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutput<T> {
    pub x: Vec<T>,
    pub matvecs: usize,
    pub residuals: Vec<f64>,
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
///
/// Every operator application counts, including the residual of each
/// restart; a zero right-hand side returns zero without applying `apply`.
pub fn gmres<T: Real>(
    apply: impl Fn(&[T]) -> Vec<T>,
    b: &[T],
    x0: Vec<T>,
    params: &GmresParams<T>,
) -> Result<GmresOutput<T>> {
    let n = b.len();
    assert_eq!(x0.len(), n);
    let bnorm = norm(b);
    if bnorm == T::zero() {
        return Ok(GmresOutput {
            x: vec![T::zero(); n],
            matvecs: 0,
            residuals: vec![0.0],
        });
    }
    let tol = params.tol;
    let m = params.restart.max(1);
    let mut x = x0;
    let mut matvecs = 0;
    let mut residuals = Vec::new();
    loop {
        let ax = apply(&x);
        matvecs += 1;
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let beta = norm(&r);
        let rel = beta / bnorm;
        residuals.push(rel.to_f64_lossy());
        debug!("gmres: restart residual {:.3e} after {matvecs} applications", rel.to_f64_lossy());
        if rel <= tol {
            break;
        }
        if matvecs >= params.max_matvecs {
            return Err(Error::NotConverged {
                iterations: matvecs,
                final_residual: rel.to_f64_lossy(),
                residuals,
            });
        }
        let mut basis: Vec<Vec<T>> = vec![r.iter().map(|&v| v / beta).collect()];
        let mut hess: Vec<Vec<T>> = Vec::new();
        let mut cs: Vec<T> = Vec::new();
        let mut sn: Vec<T> = Vec::new();
        let mut g = vec![beta];
        let mut res = beta;
        for j in 0..m {
            let mut w = apply(&basis[j]);
            matvecs += 1;
            let mut col = vec![T::zero(); j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                w.iter_mut().zip(v).for_each(|(wk, &vk)| *wk -= hij * vk);
            }
            let hnext = norm(&w);
            col[j + 1] = hnext;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[j].hypot(col[j + 1]);
            let (c, s) = if denom == T::zero() {
                (T::one(), T::zero())
            } else {
                (col[j] / denom, col[j + 1] / denom)
            };
            col[j] = c * col[j] + s * col[j + 1];
            col[j + 1] = T::zero();
            cs.push(c);
            sn.push(s);
            g.push(-s * g[j]);
            g[j] = c * g[j];
            hess.push(col);
            res = g[j + 1].abs();
            residuals.push((res / bnorm).to_f64_lossy());
            let done = res / bnorm <= tol || hnext == T::zero() || matvecs >= params.max_matvecs;
            if done {
                break;
            }
            basis.push(w.iter().map(|&v| v / hnext).collect());
        }
        // back substitution on the rotated Hessenberg matrix
        let k = hess.len();
        let mut y = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                s -= hess[jj][i] * *yj;
            }
            y[i] = s / hess[i][i];
        }
        for (v, &yi) in basis.iter().zip(&y) {
            x.iter_mut().zip(v).for_each(|(xk, &vk)| *xk += yi * vk);
        }
        if res / bnorm <= tol {
            break;
        }
        if matvecs >= params.max_matvecs {
            return Err(Error::NotConverged {
                iterations: matvecs,
                final_residual: (res / bnorm).to_f64_lossy(),
                residuals,
            });
        }
    }
    info!(
        "gmres: converged after {matvecs} operator applications, relative residual {:.3e}",
        residuals.last().copied().unwrap_or(0.0)
    );
    Ok(GmresOutput { x, matvecs, residuals })
}
