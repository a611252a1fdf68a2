//! Scalar abstraction for forward-mode differentiation.
//!
//! Kinematics and losses that need gradients are written once over [`Real`]
//! and evaluated either with `f64` or with [`Dual`], which carries one
//! directional derivative alongside the value.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Send
    + Sync
{
    fn cst(v: f64) -> Self;
    fn re(self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    /// Applies a function known only through its value `f` and gradient
    /// `grad` at `args.re()`.
    fn chain(f: f64, grad: &[f64], args: &[Self]) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn max0(self) -> Self {
        if self.re() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn chain(f: f64, _grad: &[f64], _args: &[Self]) -> Self {
        f
    }
}

/// Value plus one tangent component.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.eps += o.eps;
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.re;
        Dual::new(self.re * inv, (self.eps * o.re - self.re * o.eps) * inv * inv)
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl Real for Dual {
    fn cst(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, if s > 0.0 { self.eps / (2.0 * s) } else { 0.0 })
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.eps * self.re.sin())
    }
    fn chain(f: f64, grad: &[f64], args: &[Self]) -> Self {
        let eps = grad.iter().zip(args).map(|(g, a)| g * a.eps).sum();
        Dual::new(f, eps)
    }
}

/// Minimal 3-vector over a [`Real`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V3<S>(pub [S; 3]);

impl<S: Real> V3<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        V3([x, y, z])
    }

    pub fn zero() -> Self {
        V3([S::zero(); 3])
    }

    pub fn cst(v: [f64; 3]) -> Self {
        V3(v.map(S::cst))
    }

    pub fn re(&self) -> [f64; 3] {
        self.0.map(|v| v.re())
    }

    pub fn dot(&self, o: &Self) -> S {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm2(&self) -> S {
        self.dot(self)
    }

    pub fn cross(&self, o: &Self) -> Self {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = o.0;
        V3([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    pub fn scale(&self, s: S) -> Self {
        V3(self.0.map(|v| v * s))
    }
}

impl<S: Real> Add for V3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        V3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<S: Real> Sub for V3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        V3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

/// Quaternion `(w, x, y, z)` over a [`Real`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat<S> {
    pub w: S,
    pub v: V3<S>,
}

impl<S: Real> Quat<S> {
    pub fn identity() -> Self {
        Quat { w: S::cst(1.0), v: V3::zero() }
    }

    pub fn cst(q: [f64; 4]) -> Self {
        Quat { w: S::cst(q[0]), v: V3::cst([q[1], q[2], q[3]]) }
    }

    pub fn coords(&self) -> [S; 4] {
        [self.w, self.v.0[0], self.v.0[1], self.v.0[2]]
    }

    pub fn mul(&self, o: &Self) -> Self {
        Quat {
            w: self.w * o.w - self.v.dot(&o.v),
            v: o.v.scale(self.w) + self.v.scale(o.w) + self.v.cross(&o.v),
        }
    }

    /// Rotates `p` assuming unit norm. Exact for the identity quaternion.
    pub fn rotate(&self, p: &V3<S>) -> V3<S> {
        let two = S::cst(2.0);
        let t = self.v.cross(p).scale(two);
        *p + t.scale(self.w) + self.v.cross(&t)
    }

    /// Unit quaternion of the rotation vector `omega` (axis times angle).
    pub fn exp(omega: &V3<S>) -> Self {
        let th2 = omega.norm2();
        if th2.re() < 1e-12 {
            // series in theta^2 keeps derivatives finite at zero
            let w = S::cst(1.0) - th2 * S::cst(1.0 / 8.0);
            let k = S::cst(0.5) - th2 * S::cst(1.0 / 48.0);
            Quat { w, v: omega.scale(k) }
        } else {
            let th = th2.sqrt();
            let half = th * S::cst(0.5);
            Quat { w: half.cos(), v: omega.scale(half.sin() / th) }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_arithmetic_derivatives() {
        // f(x) = x^2 sin(x) / (1 + x)
        let f = |x: Dual| x * x * x.sin() / (Dual::cst(1.0) + x);
        let x = 0.7;
        let d = f(Dual::new(x, 1.0)).eps;
        let h = 1e-6;
        let fd = (f(Dual::cst(x + h)).re - f(Dual::cst(x - h)).re) / (2.0 * h);
        assert!((d - fd).abs() < 1e-8);
    }

    #[test]
    fn exp_map_matches_axis_angle() {
        let w = V3::<f64>::new(0.3, -0.2, 0.9);
        let q = Quat::exp(&w);
        let na = nalgebra::UnitQuaternion::from_scaled_axis(nalgebra::Vector3::new(0.3, -0.2, 0.9));
        assert!((q.w - na.w).abs() < 1e-14);
        assert!((q.v.0[0] - na.i).abs() < 1e-14);
        let p = V3::new(1.0, 2.0, 3.0);
        let r = q.rotate(&p);
        let rn = na * nalgebra::Vector3::new(1.0, 2.0, 3.0);
        assert!((r.0[2] - rn.z).abs() < 1e-12);
    }

    #[test]
    fn exp_map_derivative_is_continuous_at_zero() {
        let at = |t: f64| Quat::exp(&V3::new(Dual::new(t, 1.0), Dual::cst(0.0), Dual::cst(0.0))).v.0[0].eps;
        assert!((at(0.0) - 0.5).abs() < 1e-12);
        assert!((at(1e-4) - 0.5).abs() < 1e-6);
    }
}
