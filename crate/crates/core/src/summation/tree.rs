//! Adaptive octree over a point cloud with tight bounding boxes.

use crate::scalar::Real;
use crate::vec3::Vec3;

#[derive(Clone, Debug)]
pub struct TreeNode<T> {
    /// Tight bounding box, widened on flat axes.
    pub lo: Vec3<T>,
    pub hi: Vec3<T>,
    pub center: Vec3<T>,
    /// Half diagonal of the box.
    pub radius: T,
    /// Range into [`Octree::perm`].
    pub start: usize,
    pub end: usize,
    pub children: Vec<usize>,
    pub depth: usize,
}

impl<T> TreeNode<T> {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Debug)]
pub struct Octree<T> {
    pub nodes: Vec<TreeNode<T>>,
    /// Point indices grouped so that each node owns a contiguous range.
    pub perm: Vec<usize>,
    pub leaf_capacity: usize,
    pub max_depth: usize,
}

impl<T: Real> Octree<T> {
    pub fn root(&self) -> &TreeNode<T> {
        &self.nodes[0]
    }

    pub fn points_of(&self, node: usize) -> &[usize] {
        let n = &self.nodes[node];
        &self.perm[n.start..n.end]
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }
}

fn bounds<T: Real>(points: &[Vec3<T>], idx: &[usize]) -> (Vec3<T>, Vec3<T>) {
    let mut lo = Vec3::splat(T::infinity());
    let mut hi = Vec3::splat(T::neg_infinity());
    for &i in idx {
        lo = lo.zip(points[i], T::min);
        hi = hi.zip(points[i], T::max);
    }
    // widen flat axes so interpolation boxes never have zero width
    let widest = (hi - lo).max_component();
    let mag = lo.map(T::abs).zip(hi.map(T::abs), T::max).max_component();
    let floor = (widest * T::of(1e-3)).max(T::epsilon().sqrt() * (T::one() + mag));
    for a in 0..3 {
        let w = hi[a] - lo[a];
        if w < floor {
            let pad = (floor - w) * T::of(0.5);
            lo[a] -= pad;
            hi[a] += pad;
        }
    }
    (lo, hi)
}

/// Splits until every leaf holds at most `leaf_capacity` points or reaches
/// `max_depth`. Points are never duplicated.
pub fn build_tree<T: Real>(points: &[Vec3<T>], leaf_capacity: usize, max_depth: usize) -> Octree<T> {
    assert!(!points.is_empty(), "octree needs at least one point");
    let mut perm: Vec<usize> = (0..points.len()).collect();
    let mut nodes: Vec<TreeNode<T>> = Vec::new();
    let make = |perm: &[usize], start: usize, end: usize, depth: usize| {
        let (lo, hi) = bounds(points, &perm[start..end]);
        let center = (lo + hi).scale(T::of(0.5));
        TreeNode {
            lo,
            hi,
            center,
            radius: (hi - lo).norm() * T::of(0.5),
            start,
            end,
            children: Vec::new(),
            depth,
        }
    };
    nodes.push(make(&perm, 0, points.len(), 0));
    let mut stack = vec![0usize];
    let mut scratch = Vec::new();
    while let Some(id) = stack.pop() {
        let (start, end, depth, center) = {
            let n = &nodes[id];
            (n.start, n.end, n.depth, n.center)
        };
        if end - start <= leaf_capacity || depth >= max_depth {
            continue;
        }
        let octant = |p: Vec3<T>| {
            (p.x > center.x) as usize | ((p.y > center.y) as usize) << 1 | ((p.z > center.z) as usize) << 2
        };
        let mut counts = [0usize; 8];
        for &i in &perm[start..end] {
            counts[octant(points[i])] += 1;
        }
        if counts.iter().filter(|&&c| c > 0).count() < 2 {
            // coincident points cannot be separated
            continue;
        }
        let mut offsets = [0usize; 9];
        for o in 0..8 {
            offsets[o + 1] = offsets[o] + counts[o];
        }
        scratch.clear();
        scratch.resize(end - start, 0);
        let mut fill = offsets;
        for &i in &perm[start..end] {
            let o = octant(points[i]);
            scratch[fill[o]] = i;
            fill[o] += 1;
        }
        perm[start..end].copy_from_slice(&scratch);
        let mut children = Vec::new();
        for o in 0..8 {
            if counts[o] == 0 {
                continue;
            }
            let child = make(&perm, start + offsets[o], start + offsets[o + 1], depth + 1);
            children.push(nodes.len());
            nodes.push(child);
        }
        // visit children in octant order
        stack.extend(children.iter().rev().copied());
        nodes[id].children = children;
    }
    Octree {
        nodes,
        perm,
        leaf_capacity,
        max_depth,
    }
}
