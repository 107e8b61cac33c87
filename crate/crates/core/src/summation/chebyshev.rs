//! Tensor-product Chebyshev interpolation on axis-aligned boxes.

use crate::scalar::Real;
use crate::vec3::Vec3;

/// Chebyshev points of the first kind on `[-1, 1]` with their Lagrange
/// basis denominators.
#[derive(Clone, Debug)]
pub struct Chebyshev<T> {
    pub order: usize,
    nodes: Vec<T>,
    inv_denom: Vec<T>,
}

impl<T: Real> Chebyshev<T> {
    pub fn new(order: usize) -> Self {
        assert!(order >= 2, "interpolation order must be at least 2");
        let nodes: Vec<T> = (0..order)
            .map(|k| {
                let a = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * order) as f64;
                T::of(a.cos())
            })
            .collect();
        let inv_denom = (0..order)
            .map(|k| {
                let mut d = T::one();
                for m in 0..order {
                    if m != k {
                        d *= nodes[k] - nodes[m];
                    }
                }
                T::one() / d
            })
            .collect();
        Self {
            order,
            nodes,
            inv_denom,
        }
    }

    /// Number of tensor nodes, `order^3`.
    pub fn len(&self) -> usize {
        self.order * self.order * self.order
    }

    /// Lagrange basis values at `t in [-1, 1]`.
    #[inline]
    pub fn basis(&self, t: T, out: &mut [T]) {
        let p = self.order;
        for k in 0..p {
            if t == self.nodes[k] {
                out[..p].iter_mut().for_each(|v| *v = T::zero());
                out[k] = T::one();
                return;
            }
        }
        let mut full = T::one();
        for m in 0..p {
            full *= t - self.nodes[m];
        }
        for k in 0..p {
            out[k] = full / (t - self.nodes[k]) * self.inv_denom[k];
        }
    }

    /// Tensor node positions in the box `[lo, hi]`, x fastest.
    pub fn box_nodes(&self, lo: Vec3<T>, hi: Vec3<T>) -> Vec<Vec3<T>> {
        let p = self.order;
        let half = T::of(0.5);
        let map = |a: usize, t: T| lo[a] + (t + T::one()) * half * (hi[a] - lo[a]);
        let mut out = Vec::with_capacity(self.len());
        for k in 0..p {
            for j in 0..p {
                for i in 0..p {
                    out.push(Vec3::new(map(0, self.nodes[i]), map(1, self.nodes[j]), map(2, self.nodes[k])));
                }
            }
        }
        out
    }

    /// Tensor basis weights of `x` in the box `[lo, hi]`, x fastest; `out`
    /// must hold `order^3` values, `scratch` `3 * order`.
    #[inline]
    pub fn weights(&self, x: Vec3<T>, lo: Vec3<T>, hi: Vec3<T>, scratch: &mut [T], out: &mut [T]) {
        let p = self.order;
        let two = T::of(2.0);
        for a in 0..3 {
            let t = two * (x[a] - lo[a]) / (hi[a] - lo[a]) - T::one();
            self.basis(t, &mut scratch[a * p..(a + 1) * p]);
        }
        let (bx, rest) = scratch.split_at(p);
        let (by, bz) = rest.split_at(p);
        let mut n = 0;
        for &wz in &bz[..p] {
            for &wy in &by[..p] {
                let wyz = wy * wz;
                for &wx in &bx[..p] {
                    out[n] = wx * wyz;
                    n += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_partition_of_unity_and_cardinal() {
        let c = Chebyshev::<f64>::new(5);
        let mut b = [0.0; 5];
        for &t in &[-1.0, -0.3, 0.0, 0.77, 1.0] {
            c.basis(t, &mut b);
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
        for k in 0..5 {
            c.basis(c.nodes[k], &mut b);
            assert_eq!(b[k], 1.0);
        }
    }

    #[test]
    fn reproduces_low_degree_polynomials() {
        let c = Chebyshev::<f64>::new(4);
        let lo = Vec3::new(-1.0, 0.5, 2.0);
        let hi = Vec3::new(0.0, 2.5, 2.1);
        let f = |p: Vec3<f64>| p.x.powi(3) - 2.0 * p.x * p.y * p.z + p.z * p.z + 1.0;
        let nodes = c.box_nodes(lo, hi);
        let vals: Vec<f64> = nodes.iter().map(|&p| f(p)).collect();
        let mut scratch = vec![0.0; 12];
        let mut w = vec![0.0; 64];
        let x = Vec3::new(-0.41, 1.3, 2.07);
        c.weights(x, lo, hi, &mut scratch, &mut w);
        let interp: f64 = w.iter().zip(&vals).map(|(a, b)| a * b).sum();
        assert!((interp - f(x)).abs() < 1e-12);
    }
}
