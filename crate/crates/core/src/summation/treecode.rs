//! Dual-tree Chebyshev interpolation of the far field.
//!
//! Every (target, source) point pair is covered exactly once: either by a
//! direct kernel call or by a well separated cluster pair. Far pairs pick the
//! cheapest of three interpolation modes (source side, target side, both).
//! Direct sources of a target leaf are summed in ascending global order
//! through the same routine as the dense backend, so with no far pairs the
//! two backends agree bitwise.

use rayon::prelude::*;

use super::chebyshev::Chebyshev;
use super::tree::{build_tree, Octree};
use super::{Coeffs, PointCloudOperator, TreeParams};
use crate::kernels::FarKernel;
use crate::scalar::Real;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FarMode {
    /// Interpolate the source cluster; evaluate at every target.
    Source,
    /// Interpolate at the target cluster nodes; sum every source.
    Target,
    Both,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TreeStats {
    pub nodes: usize,
    pub leaves: usize,
    /// Point pairs evaluated directly.
    pub direct_pairs: usize,
    pub far_source: usize,
    pub far_target: usize,
    pub far_both: usize,
}

#[derive(Clone, Debug)]
pub struct TreeCode<T> {
    params: TreeParams<T>,
    tree: Octree<T>,
    cheb: Chebyshev<T>,
    parent: Vec<usize>,
    leaves: Vec<usize>,
    leaf_sources: Vec<Vec<u32>>,
    far_lists: Vec<(usize, Vec<(usize, FarMode)>)>,
    far_slot: Vec<Option<usize>>,
    moment_nodes: Vec<usize>,
    moment_slot: Vec<Option<usize>>,
    stats: TreeStats,
}

struct FarAccum<T> {
    /// Per target point `[first output, second output already dotted with n]`.
    point: Option<Vec<[T; 2]>>,
    /// Values at the target box Chebyshev nodes.
    cheb: Option<(Vec<T>, Vec<Vec3<T>>)>,
}

/// Largest box radius to separation ratio at which order `p` Chebyshev
/// interpolation of a kernel singular at that separation is expected to
/// stay below `tol`: `rho^-p = tol` for the Bernstein ellipse parameter
/// `rho = 1/q + sqrt(1/q^2 - 1)`.
pub fn side_ratio_limit(tol: f64, p: usize) -> f64 {
    let rho = tol.powf(-1.0 / p as f64).max(1.0 + 1e-12);
    2.0 / (rho + 1.0 / rho)
}

#[inline(always)]
fn mat_vec<T: Real>(m: &[[T; 3]; 3], v: Vec3<T>) -> Vec3<T> {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

/// Contribution of a source with dipole moment `dip` (`w psi n_y`) and charge
/// `q` (`w psi_n`): scalar first output and vector second output.
#[inline(always)]
fn far_contrib<T: Real>(fk: &FarKernel<T>, c: &Coeffs<T>, dip: Vec3<T>, q: T) -> (T, Vec3<T>) {
    let s = c.c11 * fk.grad_y_phi11.dot(dip) + c.c12 * fk.phi12 * q;
    let v = mat_vec(&fk.hess21, dip).scale(c.c21) + fk.grad_x_phi22.scale(c.c22 * q);
    (s, v)
}

impl<T: Real> TreeCode<T> {
    /// Builds the tree and interaction lists. `params` is not validated
    /// here; `theta = 0` turns every interaction into a direct one.
    pub fn new(op: &PointCloudOperator<T>, params: &TreeParams<T>) -> Self {
        let tree = build_tree(&op.points, params.leaf_capacity, params.max_depth);
        let cheb = Chebyshev::new(params.order);
        let n_nodes = tree.nodes.len();
        let mut parent = vec![usize::MAX; n_nodes];
        for (id, node) in tree.nodes.iter().enumerate() {
            for &ch in &node.children {
                parent[ch] = id;
            }
        }
        let leaves: Vec<usize> = tree.leaves().collect();
        let p3 = cheb.len();
        let tau = op.kernels.tau;
        let eta = T::of(side_ratio_limit(params.tol.to_f64_lossy(), params.order));

        let mut direct_by_node: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        let mut far_by_node: Vec<Vec<(usize, FarMode)>> = vec![Vec::new(); n_nodes];
        let mut stats = TreeStats {
            nodes: n_nodes,
            leaves: leaves.len(),
            ..Default::default()
        };
        let mut stack = vec![(0usize, 0usize)];
        while let Some((t, s)) = stack.pop() {
            let (tn, sn) = (&tree.nodes[t], &tree.nodes[s]);
            let d = (tn.center - sn.center).norm();
            let mut accepted = tn.radius + sn.radius < params.theta * d
                && tree.points_of(t).iter().all(|&i| {
                    let u = sn.center - op.points[i];
                    let nrm = op.normals[i];
                    let tangential = u - nrm.scale(nrm.dot(u));
                    tangential.norm() >= sn.radius + tau
                });
            if accepted {
                let (nt, ns) = (tn.len(), sn.len());
                // interpolating a box is only allowed when it is small compared
                // with its distance to the other cluster
                let src_ok = sn.radius <= eta * (d - tn.radius);
                let tgt_ok = tn.radius <= eta * (d - sn.radius);
                let costs = [
                    (nt * ns, None),
                    (if src_ok { nt * p3 } else { usize::MAX }, Some(FarMode::Source)),
                    (if tgt_ok { p3 * ns } else { usize::MAX }, Some(FarMode::Target)),
                    (if src_ok && tgt_ok { p3 * p3 } else { usize::MAX }, Some(FarMode::Both)),
                ];
                let best = costs.iter().min_by_key(|c| c.0).unwrap().1;
                match best {
                    None if !(src_ok || tgt_ok) => {
                        accepted = false;
                    }
                    None => {
                        direct_by_node[t].push(s);
                        stats.direct_pairs += nt * ns;
                    }
                    Some(mode) => {
                        match mode {
                            FarMode::Source => stats.far_source += 1,
                            FarMode::Target => stats.far_target += 1,
                            FarMode::Both => stats.far_both += 1,
                        }
                        far_by_node[t].push((s, mode));
                    }
                }
            }
            if accepted {
                continue;
            }
            match (tn.is_leaf(), sn.is_leaf()) {
                (true, true) => {
                    direct_by_node[t].push(s);
                    stats.direct_pairs += tn.len() * sn.len();
                }
                (false, true) => {
                    for &c in tn.children.iter().rev() {
                        stack.push((c, s));
                    }
                }
                (true, false) => {
                    for &c in sn.children.iter().rev() {
                        stack.push((t, c));
                    }
                }
                (false, false) => {
                    if tn.radius >= sn.radius {
                        for &c in tn.children.iter().rev() {
                            stack.push((c, s));
                        }
                    } else {
                        for &c in sn.children.iter().rev() {
                            stack.push((t, c));
                        }
                    }
                }
            }
        }

        let leaf_sources: Vec<Vec<u32>> = leaves
            .iter()
            .map(|&leaf| {
                let mut src: Vec<u32> = Vec::new();
                let mut a = leaf;
                while a != usize::MAX {
                    for &s in &direct_by_node[a] {
                        src.extend(tree.points_of(s).iter().map(|&j| j as u32));
                    }
                    a = parent[a];
                }
                src.sort_unstable();
                src
            })
            .collect();

        let mut far_slot = vec![None; n_nodes];
        let mut far_lists = Vec::new();
        let mut needs_moments = vec![false; n_nodes];
        for (t, list) in far_by_node.into_iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            for &(s, mode) in &list {
                if mode != FarMode::Target {
                    needs_moments[s] = true;
                }
            }
            far_slot[t] = Some(far_lists.len());
            far_lists.push((t, list));
        }
        let mut moment_slot = vec![None; n_nodes];
        let mut moment_nodes = Vec::new();
        for (s, &need) in needs_moments.iter().enumerate() {
            if need {
                moment_slot[s] = Some(moment_nodes.len());
                moment_nodes.push(s);
            }
        }

        Self {
            params: *params,
            tree,
            cheb,
            parent,
            leaves,
            leaf_sources,
            far_lists,
            far_slot,
            moment_nodes,
            moment_slot,
            stats,
        }
    }

    pub fn params(&self) -> &TreeParams<T> {
        &self.params
    }

    pub fn stats(&self) -> TreeStats {
        self.stats
    }

    pub fn tree(&self) -> &Octree<T> {
        &self.tree
    }

    pub fn apply(&self, op: &PointCloudOperator<T>, c: &Coeffs<T>, psi: &[T], psin: &[T]) -> (Vec<T>, Vec<T>) {
        assert_eq!(op.len(), self.tree.perm.len(), "operator does not match tree");
        let (wpsi, wpsin) = op.weighted(psi, psin);
        let p3 = self.cheb.len();
        let p = self.cheb.order;
        let kern = &op.kernels;

        // Chebyshev moments of the source clusters
        let moments: Vec<(Vec<T>, Vec<Vec3<T>>)> = self
            .moment_nodes
            .par_iter()
            .map(|&s| {
                let node = &self.tree.nodes[s];
                let mut q = vec![T::zero(); p3];
                let mut dip = vec![Vec3::zero(); p3];
                let mut scratch = vec![T::zero(); 3 * p];
                let mut w = vec![T::zero(); p3];
                for &j in self.tree.points_of(s) {
                    self.cheb.weights(op.points[j], node.lo, node.hi, &mut scratch, &mut w);
                    let dj = op.normals[j].scale(wpsi[j]);
                    for m in 0..p3 {
                        q[m] += w[m] * wpsin[j];
                        dip[m] += dj.scale(w[m]);
                    }
                }
                (q, dip)
            })
            .collect();

        let far: Vec<FarAccum<T>> = self
            .far_lists
            .par_iter()
            .map(|(t, list)| {
                let tn = &self.tree.nodes[*t];
                let targets = self.tree.points_of(*t);
                let mut acc = FarAccum {
                    point: None,
                    cheb: None,
                };
                let t_nodes = if list.iter().any(|&(_, m)| m != FarMode::Source) {
                    self.cheb.box_nodes(tn.lo, tn.hi)
                } else {
                    Vec::new()
                };
                for &(s, mode) in list {
                    let sn = &self.tree.nodes[s];
                    match mode {
                        FarMode::Source => {
                            let (q, dip) = &moments[self.moment_slot[s].unwrap()];
                            let s_nodes = self.cheb.box_nodes(sn.lo, sn.hi);
                            let pt = acc.point.get_or_insert_with(|| vec![[T::zero(); 2]; targets.len()]);
                            for (slot, &i) in pt.iter_mut().zip(targets) {
                                let x = op.points[i];
                                let mut s1 = T::zero();
                                let mut s2 = Vec3::zero();
                                for m in 0..p3 {
                                    let fk = kern.far_kernel(x, s_nodes[m]);
                                    let (a, b) = far_contrib(&fk, c, dip[m], q[m]);
                                    s1 += a;
                                    s2 += b;
                                }
                                slot[0] += s1;
                                slot[1] += op.normals[i].dot(s2);
                            }
                        }
                        FarMode::Target => {
                            let (u, v) = acc
                                .cheb
                                .get_or_insert_with(|| (vec![T::zero(); p3], vec![Vec3::zero(); p3]));
                            for l in 0..p3 {
                                let x = t_nodes[l];
                                for &j in self.tree.points_of(s) {
                                    let fk = kern.far_kernel(x, op.points[j]);
                                    let (a, b) = far_contrib(&fk, c, op.normals[j].scale(wpsi[j]), wpsin[j]);
                                    u[l] += a;
                                    v[l] += b;
                                }
                            }
                        }
                        FarMode::Both => {
                            let (q, dip) = &moments[self.moment_slot[s].unwrap()];
                            let s_nodes = self.cheb.box_nodes(sn.lo, sn.hi);
                            let (u, v) = acc
                                .cheb
                                .get_or_insert_with(|| (vec![T::zero(); p3], vec![Vec3::zero(); p3]));
                            for l in 0..p3 {
                                for m in 0..p3 {
                                    let fk = kern.far_kernel(t_nodes[l], s_nodes[m]);
                                    let (a, b) = far_contrib(&fk, c, dip[m], q[m]);
                                    u[l] += a;
                                    v[l] += b;
                                }
                            }
                        }
                    }
                }
                acc
            })
            .collect();

        let h3 = op.cell_volume;
        let per_leaf: Vec<Vec<(usize, T, T)>> = self
            .leaves
            .par_iter()
            .zip(self.leaf_sources.par_iter())
            .map(|(&leaf, sources)| {
                let node = &self.tree.nodes[leaf];
                let mut scratch = vec![T::zero(); 3 * p];
                let mut w = vec![T::zero(); p3];
                let mut out = Vec::with_capacity(node.len());
                for pos in node.start..node.end {
                    let i = self.tree.perm[pos];
                    let mut acc = [T::zero(); 2];
                    for &j in sources {
                        op.direct_accumulate(i, j as usize, c, &wpsi, &wpsin, &mut acc);
                    }
                    let mut f1 = T::zero();
                    let mut f2 = T::zero();
                    let mut any = false;
                    let mut a = leaf;
                    while a != usize::MAX {
                        if let Some(slot) = self.far_slot[a] {
                            any = true;
                            let fa = &far[slot];
                            let an = &self.tree.nodes[a];
                            if let Some(pt) = &fa.point {
                                f1 += pt[pos - an.start][0];
                                f2 += pt[pos - an.start][1];
                            }
                            if let Some((u, v)) = &fa.cheb {
                                self.cheb.weights(op.points[i], an.lo, an.hi, &mut scratch, &mut w);
                                let mut vv = Vec3::zero();
                                for l in 0..p3 {
                                    f1 += w[l] * u[l];
                                    vv += v[l].scale(w[l]);
                                }
                                f2 += op.normals[i].dot(vv);
                            }
                        }
                        a = self.parent[a];
                    }
                    if any {
                        acc[0] += f1;
                        acc[1] += f2;
                    }
                    out.push((i, acc[0] * h3, acc[1] * h3));
                }
                out
            })
            .collect();

        let n = op.len();
        let mut o1 = vec![T::zero(); n];
        let mut o2 = vec![T::zero(); n];
        for leaf in per_leaf {
            for (i, a, b) in leaf {
                o1[i] = a;
                o2[i] = b;
            }
        }
        (o1, o2)
    }
}
