//! Grid nodes near the surface, their closest-point projections, normals,
//! and quadrature weights for surface integrals written as volume sums.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::scalar::Real;
use crate::surface::SignedDistanceField;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NarrowbandNode<T> {
    pub index: [usize; 3],
    pub position: Vec3<T>,
    /// Signed distance read from the grid.
    pub distance: T,
    /// Closest point on the zero level.
    pub projection: Vec3<T>,
    /// Unit outward normal.
    pub normal: Vec3<T>,
    /// `delta_eps(distance) * J`.
    pub weight: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    /// `J = 1`.
    Unit,
    /// Curvature-corrected area factor from second differences.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandOptions {
    /// Normalize the gradient before projecting.
    pub normalize_gradient: bool,
    pub jacobian: JacobianMode,
}

impl Default for BandOptions {
    fn default() -> Self {
        Self {
            normalize_gradient: true,
            jacobian: JacobianMode::Unit,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Narrowband<T> {
    pub nodes: Vec<NarrowbandNode<T>>,
    pub eps: T,
    pub h: T,
}

/// Cosine kernel `(1 + cos(pi eta / eps)) / (2 eps)` on `|eta| < eps`.
#[inline]
pub fn delta_eps<T: Real>(eta: T, eps: T) -> T {
    if eta.abs() >= eps {
        return T::zero();
    }
    (T::one() + (T::PI() * eta / eps).cos()) / (T::of(2.0) * eps)
}

/// Area factor between the level surface through `node` and the zero level:
/// `1 - d lap(d) + d^2 <grad d, adj(Hess d) grad d>`, all by central
/// differences. For a sphere of radius `R` it equals `(R / (R + d))^2`.
pub fn jacobian_full<T: Real>(field: &GridField<T>, node: [usize; 3]) -> T {
    let grid = field.grid();
    let v = field.values();
    let c = grid.flat(node);
    let s = [grid.stride(0), grid.stride(1), grid.stride(2)];
    let h = grid.h;
    let d = v[c];
    let g = field.central_gradient(node);
    let mut hess = [[T::zero(); 3]; 3];
    let inv_h2 = T::one() / (h * h);
    let quarter = T::of(0.25) * inv_h2;
    for a in 0..3 {
        hess[a][a] = (v[c + s[a]] - T::of(2.0) * d + v[c - s[a]]) * inv_h2;
        for b in a + 1..3 {
            let pp = v[c + s[a] + s[b]];
            let pm = v[c + s[a] - s[b]];
            let mp = v[c - s[a] + s[b]];
            let mm = v[c - s[a] - s[b]];
            hess[a][b] = (pp - pm - mp + mm) * quarter;
            hess[b][a] = hess[a][b];
        }
    }
    let lap = hess[0][0] + hess[1][1] + hess[2][2];
    let cof = |i: usize, j: usize| {
        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
        let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
        hess[i1][j1] * hess[i2][j2] - hess[i1][j2] * hess[i2][j1]
    };
    let mut quad = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            // adj(H)_{ij} = cof(j, i); H is symmetric
            quad += g[i] * cof(j, i) * g[j];
        }
    }
    T::one() - d * lap + d * d * quad
}

/// Collects every node with `|phi| < eps`, ordered by linear grid index.
pub fn extract<T: Real>(sdf: &SignedDistanceField<T>, opts: &BandOptions) -> Result<Narrowband<T>> {
    let field = &sdf.field;
    let grid = *field.grid();
    let eps = sdf.eps;
    let [nx, ny, nz] = grid.dims;
    let slabs: Vec<Result<Vec<NarrowbandNode<T>>>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    let node = [i, j, k];
                    let d = field.at(node);
                    if !(d.abs() < eps) {
                        continue;
                    }
                    let g = field.weno_gradient(node);
                    let norm = g.norm();
                    if !(norm >= T::of(0.5)) {
                        return Err(Error::DegenerateGradient {
                            index: node,
                            norm: norm.to_f64_lossy(),
                        });
                    }
                    let normal = g.scale(T::one() / norm);
                    let x = grid.position(node);
                    let projection = if opts.normalize_gradient {
                        x - normal.scale(d)
                    } else {
                        x - g.scale(d)
                    };
                    let jac = match opts.jacobian {
                        JacobianMode::Unit => T::one(),
                        JacobianMode::Full => jacobian_full(field, node),
                    };
                    out.push(NarrowbandNode {
                        index: node,
                        position: x,
                        distance: d,
                        projection,
                        normal,
                        weight: delta_eps(d, eps) * jac,
                    });
                }
            }
            Ok(out)
        })
        .collect();
    let mut nodes = Vec::new();
    for slab in slabs {
        nodes.extend(slab?);
    }
    Ok(Narrowband {
        nodes,
        eps,
        h: grid.h,
    })
}

impl<T: Real> Narrowband<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `h^3`, the volume element of the Riemann sums.
    pub fn cell_volume(&self) -> T {
        self.h * self.h * self.h
    }

    pub fn weights(&self) -> Vec<T> {
        self.nodes.iter().map(|n| n.weight).collect()
    }

    /// Band CSV: grid index, position, distance, projection, normal, weight.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,k,x,y,z,d,px,py,pz,nx,ny,nz,w")?;
        for n in &self.nodes {
            let [i, j, k] = n.index;
            let (x, p, m) = (n.position, n.projection, n.normal);
            writeln!(
                w,
                "{i},{j},{k},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                x.x, x.y, x.z, n.distance, p.x, p.y, p.z, m.x, m.y, m.z, n.weight
            )?;
        }
        Ok(())
    }
}

/// `h^3 * sum_i f(node_i) * w_i`.
pub fn surface_integral<T: Real>(band: &Narrowband<T>, f: impl Fn(&NarrowbandNode<T>) -> T) -> T {
    let sum: T = band.nodes.iter().map(|n| f(n) * n.weight).sum();
    sum * band.cell_volume()
}
