//! Laplace and screened Coulomb (Yukawa) fundamental solutions, their
//! normal derivatives, and the four combined kernels of the coupled
//! boundary integral system with tangent-disc regularization.
//!
//! All combined kernels are built from `G0` and the difference
//! `D = G0 - Gk = (1 - exp(-kr)) / (4 pi r)`, which is bounded as `r -> 0`
//! and is evaluated with `expm1` and short series so that nothing cancels
//! catastrophically at small `kr`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dielectrics<T> {
    pub eps_in: T,
    pub eps_out: T,
    /// Inverse Debye length.
    pub kappa: T,
}

impl<T: Real> Default for Dielectrics<T> {
    fn default() -> Self {
        Self {
            eps_in: T::one(),
            eps_out: T::of(80.0),
            kappa: T::of(0.1257),
        }
    }
}

impl<T: Real> Dielectrics<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if !ok(self.eps_in) || !ok(self.eps_out) {
            return Err(Error::Config(format!(
                "dielectric constants must be positive, got {} and {}",
                self.eps_in, self.eps_out
            )));
        }
        if !(self.kappa >= T::zero()) || !self.kappa.is_finite() {
            return Err(Error::Config(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        Ok(())
    }

    /// `eps_out / eps_in`.
    pub fn theta1(&self) -> T {
        self.eps_out / self.eps_in
    }

    /// `eps_in / eps_out`.
    pub fn theta2(&self) -> T {
        self.eps_in / self.eps_out
    }

    pub fn lambda1(&self) -> T {
        T::of(0.5) * (T::one() + self.theta1())
    }

    pub fn lambda2(&self) -> T {
        T::of(0.5) * (T::one() + self.theta2())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelPoint<T> {
    pub position: Vec3<T>,
    pub normal: Vec3<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    K11,
    K12,
    K21,
    K22,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::K11, Block::K12, Block::K21, Block::K22];
}

#[inline(always)]
fn inv_four_pi<T: Real>() -> T {
    T::FRAC_1_PI() * T::of(0.25)
}

fn separation<T: Real>(x: Vec3<T>, y: Vec3<T>) -> Result<T> {
    let r = (x - y).norm();
    if r > T::zero() {
        Ok(r)
    } else {
        Err(Error::SingularEvaluation)
    }
}

/// `1 / (4 pi |x - y|)`.
pub fn g0<T: Real>(x: Vec3<T>, y: Vec3<T>) -> Result<T> {
    Ok(inv_four_pi::<T>() / separation(x, y)?)
}

/// `exp(-kappa |x - y|) / (4 pi |x - y|)`.
pub fn gk<T: Real>(x: Vec3<T>, y: Vec3<T>, kappa: T) -> Result<T> {
    let r = separation(x, y)?;
    Ok((-kappa * r).exp() * inv_four_pi::<T>() / r)
}

/// Radial profile `Phi(r)` and its first two derivatives.
#[derive(Clone, Copy, Debug)]
struct Radial<T> {
    v: T,
    d1: T,
    d2: T,
}

/// `expm1(-x) + x exp(-x)`, `O(x^2)` at the origin.
#[inline(always)]
fn f1<T: Real>(x: T, em1: T) -> T {
    if x < T::of(0.05) {
        let x2 = x * x;
        x2 * (T::of(-0.5)
            + x * (T::of(1.0 / 3.0)
                + x * (T::of(-1.0 / 8.0)
                    + x * (T::of(1.0 / 30.0) + x * (T::of(-1.0 / 144.0) + x * T::of(1.0 / 840.0))))))
    } else {
        em1 + x * (em1 + T::one())
    }
}

/// `(2 + 2x + x^2) exp(-x) - 2`, `O(x^3)` at the origin.
#[inline(always)]
fn f2<T: Real>(x: T, em1: T) -> T {
    if x < T::of(0.05) {
        let x3 = x * x * x;
        x3 * (T::of(-1.0 / 3.0)
            + x * (T::of(0.25)
                + x * (T::of(-0.1) + x * (T::of(1.0 / 36.0) + x * T::of(-1.0 / 168.0)))))
    } else {
        (T::of(2.0) + x * (T::of(2.0) + x)) * (em1 + T::one()) - T::of(2.0)
    }
}

/// `(exp(-x) - 1 + x) / x^2`.
fn disc_factor<T: Real>(x: T) -> T {
    if x < T::of(0.05) {
        T::of(0.5)
            + x * (T::of(-1.0 / 6.0)
                + x * (T::of(1.0 / 24.0) + x * (T::of(-1.0 / 120.0) + x * T::of(1.0 / 720.0))))
    } else {
        ((-x).exp_m1() + x) / (x * x)
    }
}

/// Value assigned to `K12` inside the regularization disc: the mean of
/// `G0 - Gk` over a flat disc of radius `tau` centered on the singularity,
/// `(exp(-k tau) - 1 + k tau) / (2 pi k tau^2)`.
pub fn k12_near<T: Real>(kappa: T, tau: T) -> T {
    kappa * disc_factor(kappa * tau) * T::FRAC_1_PI() * T::of(0.5)
}

/// Tangential distance test in the tangent plane at `x`.
#[inline(always)]
pub fn near_field_test<T: Real>(x: &KernelPoint<T>, y: &KernelPoint<T>, tau: T) -> bool {
    let u = y.position - x.position;
    let t = u - x.normal.scale(x.normal.dot(u));
    t.norm_squared() < tau * tau
}

/// Precomputed constants for fast evaluation of all four blocks.
#[derive(Clone, Copy, Debug)]
pub struct BlockKernels<T> {
    pub diel: Dielectrics<T>,
    pub tau: T,
    kappa: T,
    theta1: T,
    theta2: T,
    tau2: T,
    near12: T,
    c: T,
}

/// Far-field kernel data at a point pair, independent of the normals:
/// `K11 = n_y . grad_y_phi11`, `K12 = phi12`, `K21 = n_x . hess21 n_y`,
/// `K22 = n_x . grad_x_phi22`.
#[derive(Clone, Copy, Debug, Default)]
pub struct FarKernel<T> {
    pub grad_y_phi11: Vec3<T>,
    pub phi12: T,
    pub hess21: [[T; 3]; 3],
    pub grad_x_phi22: Vec3<T>,
}

impl<T: Real> BlockKernels<T> {
    pub fn new(diel: Dielectrics<T>, tau: T) -> Self {
        Self {
            diel,
            tau,
            kappa: diel.kappa,
            theta1: diel.theta1(),
            theta2: diel.theta2(),
            tau2: tau * tau,
            near12: k12_near(diel.kappa, tau),
            c: inv_four_pi(),
        }
    }

    pub fn near12(&self) -> T {
        self.near12
    }

    /// Profiles of `G0` and `D = G0 - Gk` at distance `r`.
    #[inline(always)]
    fn profiles(&self, r: T) -> (Radial<T>, Radial<T>) {
        let c = self.c;
        let inv_r = T::one() / r;
        let c1 = c * inv_r;
        let c2 = c1 * inv_r;
        let c3 = c2 * inv_r;
        let g0 = Radial {
            v: c1,
            d1: -c2,
            d2: T::of(2.0) * c3,
        };
        let x = self.kappa * r;
        let d = if x > T::zero() {
            let em1 = (-x).exp_m1();
            Radial {
                v: -em1 * c1,
                d1: f1(x, em1) * c2,
                d2: -f2(x, em1) * c3,
            }
        } else {
            Radial {
                v: T::zero(),
                d1: T::zero(),
                d2: T::zero(),
            }
        };
        (g0, d)
    }

    /// `Phi_theta' = (1 - theta) G0' + theta D'`, the radial derivative of
    /// `G0 - theta Gk`.
    #[inline(always)]
    fn mixed_d1(g0: &Radial<T>, d: &Radial<T>, theta: T) -> T {
        (T::one() - theta) * g0.d1 + theta * d.d1
    }

    /// `[K11, K12, K21, K22]` at `(x, y)` without regularization. Requires
    /// `x != y`.
    #[inline(always)]
    pub fn far(&self, x: Vec3<T>, nx: Vec3<T>, y: Vec3<T>, ny: Vec3<T>) -> [T; 4] {
        let u = x - y;
        let r = u.norm();
        let inv_r = T::one() / r;
        let (g0, d) = self.profiles(r);
        let a = nx.dot(u) * inv_r;
        let b = ny.dot(u) * inv_r;
        let cn = nx.dot(ny);
        let k11 = -Self::mixed_d1(&g0, &d, self.theta1) * b;
        let k12 = d.v;
        let k21 = -(d.d2 * a * b + d.d1 * inv_r * (cn - a * b));
        let k22 = Self::mixed_d1(&g0, &d, self.theta2) * a;
        [k11, k12, k21, k22]
    }

    /// `[K11, K12, K21, K22]` with the tangent-disc regularization.
    #[inline(always)]
    pub fn eval(&self, x: Vec3<T>, nx: Vec3<T>, y: Vec3<T>, ny: Vec3<T>) -> [T; 4] {
        let u = y - x;
        let un = nx.dot(u);
        let t2 = u.norm_squared() - un * un;
        if t2 < self.tau2 {
            [T::zero(), self.near12, T::zero(), T::zero()]
        } else {
            self.far(x, nx, y, ny)
        }
    }

    pub fn block(&self, which: Block, x: &KernelPoint<T>, y: &KernelPoint<T>) -> T {
        let k = self.eval(x.position, x.normal, y.position, y.normal);
        k[which as usize]
    }

    /// Normal-free far-field data, for interpolation on cluster pairs.
    #[inline(always)]
    pub fn far_kernel(&self, x: Vec3<T>, y: Vec3<T>) -> FarKernel<T> {
        let u = x - y;
        let r = u.norm();
        let inv_r = T::one() / r;
        let e = u.scale(inv_r);
        let (g0, d) = self.profiles(r);
        let p11 = Self::mixed_d1(&g0, &d, self.theta1);
        let p22 = Self::mixed_d1(&g0, &d, self.theta2);
        // grad_x grad_y Phi = -[Phi'' e e^T + (Phi'/r)(I - e e^T)]
        let s = d.d1 * inv_r;
        let t = d.d2 - s;
        let mut hess = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { s } else { T::zero() };
                hess[i][j] = -(t * e[i] * e[j] + delta);
            }
        }
        FarKernel {
            grad_y_phi11: e.scale(-p11),
            phi12: d.v,
            hess21: hess,
            grad_x_phi22: e.scale(p22),
        }
    }
}

/// Regularized kernel block at a pair of projected band points.
pub fn kernel_block<T: Real>(
    which: Block,
    x: &KernelPoint<T>,
    y: &KernelPoint<T>,
    diel: &Dielectrics<T>,
    tau: T,
) -> T {
    BlockKernels::new(*diel, tau).block(which, x, y)
}

/// `d G0 / d n_y` at `(x, y)`.
pub fn dg0_dny<T: Real>(x: Vec3<T>, y: &KernelPoint<T>) -> Result<T> {
    let u = x - y.position;
    let r = separation(x, y.position)?;
    Ok(y.normal.dot(u) * inv_four_pi::<T>() / (r * r * r))
}

/// `d Gk / d n_y` at `(x, y)`.
pub fn dgk_dny<T: Real>(x: Vec3<T>, y: &KernelPoint<T>, kappa: T) -> Result<T> {
    let u = x - y.position;
    let r = separation(x, y.position)?;
    let kr = kappa * r;
    Ok(y.normal.dot(u) * (T::one() + kr) * (-kr).exp() * inv_four_pi::<T>() / (r * r * r))
}

/// `d G0 / d n_x` at `(x, y)`.
pub fn dg0_dnx<T: Real>(x: &KernelPoint<T>, y: Vec3<T>) -> Result<T> {
    let u = x.position - y;
    let r = separation(x.position, y)?;
    Ok(-x.normal.dot(u) * inv_four_pi::<T>() / (r * r * r))
}

/// `d Gk / d n_x` at `(x, y)`.
pub fn dgk_dnx<T: Real>(x: &KernelPoint<T>, y: Vec3<T>, kappa: T) -> Result<T> {
    let u = x.position - y;
    let r = separation(x.position, y)?;
    let kr = kappa * r;
    Ok(-x.normal.dot(u) * (T::one() + kr) * (-kr).exp() * inv_four_pi::<T>() / (r * r * r))
}

/// `d^2 G0 / (d n_x d n_y)`.
pub fn d2g0<T: Real>(x: &KernelPoint<T>, y: &KernelPoint<T>) -> Result<T> {
    let u = x.position - y.position;
    let r = separation(x.position, y.position)?;
    let r2 = r * r;
    let a = x.normal.dot(u);
    let b = y.normal.dot(u);
    let c = x.normal.dot(y.normal);
    Ok(inv_four_pi::<T>() * (c - T::of(3.0) * a * b / r2) / (r2 * r))
}

/// `d^2 Gk / (d n_x d n_y)`.
pub fn d2gk<T: Real>(x: &KernelPoint<T>, y: &KernelPoint<T>, kappa: T) -> Result<T> {
    let u = x.position - y.position;
    let r = separation(x.position, y.position)?;
    let r2 = r * r;
    let kr = kappa * r;
    let a = x.normal.dot(u);
    let b = y.normal.dot(u);
    let c = x.normal.dot(y.normal);
    let p = T::one() + kr;
    let q = T::of(3.0) + T::of(3.0) * kr + kr * kr;
    Ok(inv_four_pi::<T>() * (-kr).exp() * (p * c - q * a * b / r2) / (r2 * r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const KAPPA: f64 = 0.1257;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn kp(p: Vec3<f64>, n: Vec3<f64>) -> KernelPoint<f64> {
        KernelPoint {
            position: p,
            normal: n.normalized().unwrap(),
        }
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3<f64> {
        loop {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if v.norm() > 0.1 && v.norm() < 1.0 {
                return v.normalized().unwrap();
            }
        }
    }

    #[test]
    fn green_function_oracles() {
        let o = Vec3::zero();
        let e = Vec3::new(1.0, 0.0, 0.0);
        assert!(rel(g0(o, e).unwrap(), 0.0795774715459477) < 1e-14);
        assert!(rel(gk(o, e.scale(2.0), KAPPA).unwrap(), 0.0309441464329868) < 1e-13);
        assert!(rel(gk(o, e.scale(0.3), 0.0).unwrap(), g0(o, e.scale(0.3)).unwrap()) < 1e-15);
        assert!(matches!(g0(e, e), Err(Error::SingularEvaluation)));
        assert!(matches!(gk(e, e, KAPPA), Err(Error::SingularEvaluation)));
    }

    #[test]
    fn dielectric_constants() {
        let d = Dielectrics::<f64>::default();
        assert_eq!(d.lambda1(), 40.5);
        assert_eq!(d.lambda2(), 0.5 * (1.0 + 1.0 / 80.0));
        assert!(d.lambda1() > d.lambda2() && d.lambda2() > 0.5);
        assert!(Dielectrics { kappa: -1.0, ..d }.validate().is_err());
        assert!(Dielectrics { eps_in: 0.0, ..d }.validate().is_err());
    }

    #[test]
    fn near_field_examples() {
        let tau = 0.1;
        let x = kp(Vec3::zero(), Vec3::new(0.0, 0.0, 1.0));
        let on_normal = kp(Vec3::new(0.0, 0.0, 0.05), Vec3::new(0.0, 0.0, 1.0));
        let tangent = kp(Vec3::new(0.2, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
        let diag = kp(Vec3::new(tau / 2f64.sqrt(), 0.0, tau / 2f64.sqrt()), Vec3::new(0.0, 0.0, 1.0));
        assert!(near_field_test(&x, &on_normal, tau));
        assert!(!near_field_test(&x, &tangent, tau));
        assert!(near_field_test(&x, &diag, tau));
    }

    #[test]
    fn regularized_values() {
        let diel = Dielectrics::default();
        let x = kp(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.0, 1.0, 0.0));
        let k = BlockKernels::new(diel, 0.1);
        let v = k.eval(x.position, x.normal, x.position, x.normal);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[2], 0.0);
        assert_eq!(v[3], 0.0);
        assert!(rel(v[1], 0.00996110745023476) < 1e-12);
        // series and closed form agree across the switch
        let a = k12_near(0.1257, 0.05 / 0.1257 * 0.999_999);
        let b = k12_near(0.1257, 0.05 / 0.1257 * 1.000_001);
        assert!(rel(a, b) < 1e-5);
        // kappa = 0 limit
        assert_eq!(k12_near(0.0, 0.3), 0.0);
        assert!(rel(k12_near(1e-6, 0.3), 1e-6 / (4.0 * std::f64::consts::PI)) < 1e-6);
    }

    /// Mean of `G0 - Gk` over the tangent disc of radius tau, by a polar
    /// midpoint rule.
    #[test]
    fn k12_near_is_disc_average() {
        for &(kappa, tau) in &[(0.1257, 0.1), (0.1257, 0.4), (2.0, 0.5), (10.0, 0.3)] {
            let k = BlockKernels::new(
                Dielectrics {
                    eps_in: 1.0,
                    eps_out: 80.0,
                    kappa,
                },
                tau,
            );
            let n = 4000;
            let mut acc = 0.0;
            for i in 0..n {
                let s = (i as f64 + 0.5) * tau / n as f64;
                let p = Vec3::new(s, 0.0, 0.0);
                let d = k.far(Vec3::zero(), Vec3::new(0.0, 0.0, 1.0), p, Vec3::new(0.0, 0.0, 1.0))[1];
                acc += d * 2.0 * std::f64::consts::PI * s * tau / n as f64;
            }
            let avg = acc / (std::f64::consts::PI * tau * tau);
            assert!(rel(k.near12(), avg) < 0.01, "{} {}", k.near12(), avg);
        }
    }

    /// Every analytic normal derivative against centered differences of the
    /// Green's functions with step 1e-5.
    #[test]
    fn normal_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let step = 1e-5;
        for _ in 0..100 {
            let kappa = rng.gen_range(0.0..2.0);
            let x = kp(
                Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                random_unit(&mut rng),
            );
            let y = kp(
                x.position + random_unit(&mut rng).scale(rng.gen_range(0.2..3.0)),
                random_unit(&mut rng),
            );
            let fd_y = |f: &dyn Fn(Vec3<f64>) -> f64| {
                (f(y.position + y.normal.scale(step)) - f(y.position - y.normal.scale(step))) / (2.0 * step)
            };
            let fd_x = |f: &dyn Fn(Vec3<f64>) -> f64| {
                (f(x.position + x.normal.scale(step)) - f(x.position - x.normal.scale(step))) / (2.0 * step)
            };
            let ok = |a: f64, b: f64| (a - b).abs() <= 1e-5 * b.abs().max(1e-3 * a.abs().max(1e-12));
            let g0y = fd_y(&|p| g0(x.position, p).unwrap());
            assert!(ok(dg0_dny(x.position, &y).unwrap(), g0y));
            let gky = fd_y(&|p| gk(x.position, p, kappa).unwrap());
            assert!(ok(dgk_dny(x.position, &y, kappa).unwrap(), gky));
            let g0x = fd_x(&|p| g0(p, y.position).unwrap());
            assert!(ok(dg0_dnx(&x, y.position).unwrap(), g0x));
            let gkx = fd_x(&|p| gk(p, y.position, kappa).unwrap());
            assert!(ok(dgk_dnx(&x, y.position, kappa).unwrap(), gkx));
            let d2 = fd_x(&|p| dg0_dny(p, &y).unwrap());
            assert!(ok(d2g0(&x, &y).unwrap(), d2));
            let d2k = fd_x(&|p| dgk_dny(p, &y, kappa).unwrap());
            assert!(ok(d2gk(&x, &y, kappa).unwrap(), d2k));
        }
    }

    /// The fused block evaluation against the single-function definitions.
    #[test]
    fn blocks_match_definitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let diel = Dielectrics {
                eps_in: rng.gen_range(1.0..4.0),
                eps_out: rng.gen_range(1.0..100.0),
                kappa: rng.gen_range(0.0..1.5),
            };
            let x = kp(Vec3::new(0.3, -0.2, 0.1), random_unit(&mut rng));
            let y = kp(
                x.position + random_unit(&mut rng).scale(rng.gen_range(0.01..4.0)),
                random_unit(&mut rng),
            );
            let k = BlockKernels::new(diel, 0.0).far(x.position, x.normal, y.position, y.normal);
            let kap = diel.kappa;
            let e11 = dg0_dny(x.position, &y).unwrap() - diel.theta1() * dgk_dny(x.position, &y, kap).unwrap();
            let e12 = g0(x.position, y.position).unwrap() - gk(x.position, y.position, kap).unwrap();
            let e21 = d2g0(&x, &y).unwrap() - d2gk(&x, &y, kap).unwrap();
            let e22 = dg0_dnx(&x, y.position).unwrap() - diel.theta2() * dgk_dnx(&x, y.position, kap).unwrap();
            let scale = [e11, e12, e21, e22].map(f64::abs);
            // the differences of G0 and Gk cancel; compare against the size
            // of the separate terms
            let r = (x.position - y.position).norm();
            let mag = 1.0 / (4.0 * std::f64::consts::PI * r.powi(3));
            for (i, e) in [e11, e12, e21, e22].iter().enumerate() {
                assert!(
                    (k[i] - e).abs() <= 1e-10 * mag.max(scale[i]),
                    "block {i}: {} vs {e}",
                    k[i]
                );
            }
            // and the normal-free decomposition agrees
            let f = BlockKernels::new(diel, 0.0).far_kernel(x.position, y.position);
            let mut k21 = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    k21 += x.normal[i] * f.hess21[i][j] * y.normal[j];
                }
            }
            let dec = [
                y.normal.dot(f.grad_y_phi11),
                f.phi12,
                k21,
                x.normal.dot(f.grad_x_phi22),
            ];
            for i in 0..4 {
                assert!((dec[i] - k[i]).abs() <= 1e-12 * mag, "{i}");
            }
        }
    }

    #[test]
    fn k11_finite_difference_example() {
        let diel = Dielectrics::default();
        let x = kp(Vec3::new(2.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        let y = kp(Vec3::zero(), Vec3::new(1.0, 0.0, 0.0));
        // collinear normals put y on the normal line of x, so the regularized
        // block is zero here; the far formula is what is being checked
        assert_eq!(kernel_block(Block::K11, &x, &y, &diel, 0.1), 0.0);
        let k11 = BlockKernels::new(diel, 0.1).far(x.position, x.normal, y.position, y.normal)[0];
        let f = |p: Vec3<f64>| g0(x.position, p).unwrap() - 80.0 * gk(x.position, p, KAPPA).unwrap();
        let s = 1e-5;
        let fd = (f(Vec3::new(s, 0.0, 0.0)) - f(Vec3::new(-s, 0.0, 0.0))) / (2.0 * s);
        assert!(rel(k11, fd) < 1e-6);
    }

    #[test]
    fn kappa_zero_differences_vanish() {
        let diel = Dielectrics {
            eps_in: 1.0,
            eps_out: 80.0,
            kappa: 0.0,
        };
        let k = BlockKernels::new(diel, 0.1);
        let v = k.eval(Vec3::zero(), Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.5, 0.2), Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(v[1], 0.0);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = BlockKernels::new(Dielectrics::default(), 0.0);
        for _ in 0..50 {
            let (x, nx) = (random_unit(&mut rng).scale(2.0), random_unit(&mut rng));
            let (y, ny) = (random_unit(&mut rng), random_unit(&mut rng));
            let a = k.far(x, nx, y, ny);
            let b = k.far(y, ny, x, nx);
            assert!((a[1] - b[1]).abs() < 1e-15);
            assert!((a[2] - b[2]).abs() < 1e-14 * a[2].abs().max(1e-3));
        }
    }

    /// |K21| grows no faster than about 1/r along tangent configurations.
    #[test]
    fn k21_is_weakly_singular() {
        let k = BlockKernels::new(Dielectrics::default(), 0.0);
        let n = Vec3::new(0.0, 0.0, 1.0);
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        let m = 40;
        for i in 0..m {
            let r = 10f64.powf(-3.0 + 3.0 * i as f64 / (m - 1) as f64);
            let v = k.far(Vec3::zero(), n, Vec3::new(r, 0.0, 0.0), n)[2].abs();
            let (lx, ly) = (r.ln(), v.ln());
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        let mf = m as f64;
        let slope = (mf * sxy - sx * sy) / (mf * sxx - sx * sx);
        assert!(slope >= -1.2, "fitted exponent {slope}");
    }

    #[test]
    fn works_in_f32() {
        let k = BlockKernels::new(Dielectrics::<f32>::default(), 0.1);
        let v = k.eval(Vec3::zero(), Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.5, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
        assert!(v.iter().all(|x| x.is_finite()));
        let w = BlockKernels::new(Dielectrics::<f64>::default(), 0.1).eval(
            Vec3::zero(),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.5, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        );
        for i in 0..4 {
            assert!((v[i] as f64 - w[i]).abs() <= 1e-5 * w[i].abs().max(1e-3));
        }
    }
}
