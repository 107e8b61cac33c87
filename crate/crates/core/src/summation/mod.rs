//! Application of the discrete boundary integral operator
//! `out_i = h^3 sum_j K(x_i, y_j) w_j rho_j` by exact dense summation or a
//! Chebyshev tree code.

pub mod chebyshev;
pub mod tree;
pub mod treecode;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Block, BlockKernels};
use crate::narrowband::Narrowband;
use crate::scalar::Real;
use crate::vec3::Vec3;

pub use treecode::TreeCode;

/// Block coefficients: the first output is
/// `c11 K11 psi + c12 K12 psi_n`, the second `c21 K21 psi + c22 K22 psi_n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coeffs<T> {
    pub c11: T,
    pub c12: T,
    pub c21: T,
    pub c22: T,
}

impl<T: Real> Coeffs<T> {
    /// Signs of the coupled system: `(K11 psi - K12 psi_n, K21 psi - K22 psi_n)`.
    pub fn system() -> Self {
        Self {
            c11: T::one(),
            c12: -T::one(),
            c21: T::one(),
            c22: -T::one(),
        }
    }

    /// Isolates one block with unit coefficient.
    pub fn block(which: Block) -> Self {
        let mut c = [T::zero(); 4];
        c[which as usize] = T::one();
        Self {
            c11: c[0],
            c12: c[1],
            c21: c[2],
            c22: c[3],
        }
    }
}

/// Projected band points with normals and quadrature weights; sources and
/// targets coincide.
#[derive(Clone, Debug)]
pub struct PointCloudOperator<T> {
    pub points: Vec<Vec3<T>>,
    pub normals: Vec<Vec3<T>>,
    pub weights: Vec<T>,
    pub kernels: BlockKernels<T>,
    /// `h^3`.
    pub cell_volume: T,
}

impl<T: Real> PointCloudOperator<T> {
    pub fn from_band(band: &Narrowband<T>, kernels: BlockKernels<T>) -> Self {
        Self {
            points: band.nodes.iter().map(|n| n.projection).collect(),
            normals: band.nodes.iter().map(|n| n.normal).collect(),
            weights: band.weights(),
            kernels,
            cell_volume: band.cell_volume(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(w psi, w psi_n)`.
    pub(crate) fn weighted(&self, psi: &[T], psin: &[T]) -> (Vec<T>, Vec<T>) {
        assert_eq!(psi.len(), self.len(), "density length mismatch");
        assert_eq!(psin.len(), self.len(), "density length mismatch");
        let wpsi = self.weights.iter().zip(psi).map(|(&w, &p)| w * p).collect();
        let wpsin = self.weights.iter().zip(psin).map(|(&w, &p)| w * p).collect();
        (wpsi, wpsin)
    }

    /// Adds the regularized pair `(i, j)` to `acc`. Dense and tree
    /// summation both go through here so their direct parts agree bitwise.
    #[inline(always)]
    pub(crate) fn direct_accumulate(
        &self,
        i: usize,
        j: usize,
        c: &Coeffs<T>,
        wpsi: &[T],
        wpsin: &[T],
        acc: &mut [T; 2],
    ) {
        let k = self
            .kernels
            .eval(self.points[i], self.normals[i], self.points[j], self.normals[j]);
        acc[0] += c.c11 * k[0] * wpsi[j] + c.c12 * k[1] * wpsin[j];
        acc[1] += c.c21 * k[2] * wpsi[j] + c.c22 * k[3] * wpsin[j];
    }

    /// Exact summation over all pairs.
    pub fn apply_dense(&self, c: &Coeffs<T>, psi: &[T], psin: &[T]) -> (Vec<T>, Vec<T>) {
        let (wpsi, wpsin) = self.weighted(psi, psin);
        let n = self.len();
        let out: Vec<[T; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = [T::zero(); 2];
                for j in 0..n {
                    self.direct_accumulate(i, j, c, &wpsi, &wpsin, &mut acc);
                }
                [acc[0] * self.cell_volume, acc[1] * self.cell_volume]
            })
            .collect();
        out.into_iter().map(|a| (a[0], a[1])).unzip()
    }

    /// Dense summation of several density pairs sharing one pass over the
    /// kernel.
    pub fn apply_dense_batch(&self, c: &Coeffs<T>, inputs: &[(Vec<T>, Vec<T>)]) -> Vec<(Vec<T>, Vec<T>)> {
        let weighted: Vec<(Vec<T>, Vec<T>)> = inputs.iter().map(|(a, b)| self.weighted(a, b)).collect();
        let n = self.len();
        let m = inputs.len();
        let rows: Vec<Vec<[T; 2]>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![[T::zero(); 2]; m];
                for j in 0..n {
                    let k = self
                        .kernels
                        .eval(self.points[i], self.normals[i], self.points[j], self.normals[j]);
                    let (a, b) = (c.c11 * k[0], c.c12 * k[1]);
                    let (d, e) = (c.c21 * k[2], c.c22 * k[3]);
                    for (slot, (wpsi, wpsin)) in acc.iter_mut().zip(&weighted) {
                        slot[0] += a * wpsi[j] + b * wpsin[j];
                        slot[1] += d * wpsi[j] + e * wpsin[j];
                    }
                }
                acc
            })
            .collect();
        (0..m)
            .map(|v| {
                rows.iter()
                    .map(|r| (r[v][0] * self.cell_volume, r[v][1] * self.cell_volume))
                    .unzip()
            })
            .collect()
    }

    /// One block applied to `rho`, dense.
    pub fn apply_block_dense(&self, which: Block, rho: &[T]) -> Vec<T> {
        let zero = vec![T::zero(); self.len()];
        let c = Coeffs::block(which);
        let (o1, o2) = match which {
            Block::K11 | Block::K21 => self.apply_dense(&c, rho, &zero),
            Block::K12 | Block::K22 => self.apply_dense(&c, &zero, rho),
        };
        match which {
            Block::K11 | Block::K12 => o1,
            Block::K21 | Block::K22 => o2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummationKind {
    Dense,
    Tree,
}

impl std::str::FromStr for SummationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "tree" => Ok(Self::Tree),
            _ => Err(Error::Config(format!("unknown summation backend '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams<T> {
    pub leaf_capacity: usize,
    /// Chebyshev points per axis.
    pub order: usize,
    /// Multipole acceptance: clusters interact through interpolation when
    /// `r_target + r_source < theta * distance`.
    pub theta: T,
    pub max_depth: usize,
    /// Target relative accuracy. Tightening it shrinks the boxes that may be
    /// interpolated at a given separation.
    pub tol: T,
}

impl<T: Real> Default for TreeParams<T> {
    fn default() -> Self {
        Self {
            leaf_capacity: 64,
            order: 4,
            theta: T::of(0.5),
            max_depth: 24,
            tol: T::of(1e-4),
        }
    }
}

impl<T: Real> TreeParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::Config(format!("interpolation order {} < 2", self.order)));
        }
        if self.leaf_capacity < 16 {
            return Err(Error::Config(format!("leaf capacity {} < 16", self.leaf_capacity)));
        }
        if !(self.theta > T::zero() && self.theta <= T::one()) {
            return Err(Error::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max depth must be positive".into()));
        }
        let tol = self.tol.to_f64_lossy();
        if !(1e-10..=1e-1).contains(&tol) {
            return Err(Error::Config(format!("tree tolerance must lie in [1e-10, 1e-1], got {tol:e}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummationConfig<T> {
    pub kind: SummationKind,
    pub tree: TreeParams<T>,
}

impl<T: Real> Default for SummationConfig<T> {
    fn default() -> Self {
        Self {
            kind: SummationKind::Tree,
            tree: TreeParams::default(),
        }
    }
}

/// A ready-to-apply backend bound to one operator.
#[derive(Clone, Debug)]
pub enum Summation<T> {
    Dense,
    Tree(Box<TreeCode<T>>),
}

impl<T: Real> Summation<T> {
    pub fn new(op: &PointCloudOperator<T>, cfg: &SummationConfig<T>) -> Result<Self> {
        match cfg.kind {
            SummationKind::Dense => Ok(Self::Dense),
            SummationKind::Tree => {
                cfg.tree.validate()?;
                Ok(Self::Tree(Box::new(TreeCode::new(op, &cfg.tree))))
            }
        }
    }

    pub fn apply(&self, op: &PointCloudOperator<T>, c: &Coeffs<T>, psi: &[T], psin: &[T]) -> (Vec<T>, Vec<T>) {
        match self {
            Self::Dense => op.apply_dense(c, psi, psin),
            Self::Tree(t) => t.apply(op, c, psi, psin),
        }
    }
}
