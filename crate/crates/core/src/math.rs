//! Small fixed-size linear algebra over a generic float.
//!
//! Everything in the renderer and trainer is generic over [`Real`] so the
//! production path can run in `f32` while gradient checks run the very same
//! code in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst};

pub trait Real:
    Float
    + FloatConst
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn as_f32(self) -> f32 {
        self.as_f64() as f32
    }
}

impl Real for f32 {
    #[inline(always)]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn as_f32(self) -> f32 {
        self
    }
}

impl Real for f64 {
    #[inline(always)]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

pub type Vec3<F> = [F; 3];
pub type Mat3<F> = [[F; 3]; 3];
pub type Quat<F> = [F; 4];

#[inline]
pub fn dot3<F: Real>(a: Vec3<F>, b: Vec3<F>) -> F {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn add3<F: Real>(a: Vec3<F>, b: Vec3<F>) -> Vec3<F> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3<F: Real>(a: Vec3<F>, b: Vec3<F>) -> Vec3<F> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3<F: Real>(a: Vec3<F>, s: F) -> Vec3<F> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn norm3<F: Real>(a: Vec3<F>) -> F {
    dot3(a, a).sqrt()
}

#[inline]
pub fn mat_vec<F: Real>(m: &Mat3<F>, v: Vec3<F>) -> Vec3<F> {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[inline]
pub fn mat_t_vec<F: Real>(m: &Mat3<F>, v: Vec3<F>) -> Vec3<F> {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_mul<F: Real>(a: &Mat3<F>, b: &Mat3<F>) -> Mat3<F> {
    let mut out = [[F::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose<F: Real>(m: &Mat3<F>) -> Mat3<F> {
    [
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2], m[1][2], m[2][2]],
    ]
}

/// Rotation matrix of `q / |q|` (wxyz).
pub fn quat_to_rotation<F: Real>(q: Quat<F>) -> Mat3<F> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let one = F::one();
    let two = F::lit(2.0);
    [
        [
            one - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
        ],
        [
            two * (x * y + w * z),
            one - two * (x * x + z * z),
            two * (y * z - w * x),
        ],
        [
            two * (x * z - w * y),
            two * (y * z + w * x),
            one - two * (x * x + y * y),
        ],
    ]
}

/// Backpropagates `dL/dR` through [`quat_to_rotation`], including the
/// normalization of `q`.
pub fn quat_to_rotation_backward<F: Real>(q: Quat<F>, d_rot: &Mat3<F>) -> Quat<F> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let two = F::lit(2.0);
    let g = d_rot;
    let dw = two
        * (x * (g[2][1] - g[1][2]) + y * (g[0][2] - g[2][0]) + z * (g[1][0] - g[0][1]));
    let dx = two
        * (-two * x * (g[1][1] + g[2][2])
            + y * (g[0][1] + g[1][0])
            + z * (g[0][2] + g[2][0])
            + w * (g[2][1] - g[1][2]));
    let dy = two
        * (-two * y * (g[0][0] + g[2][2])
            + x * (g[0][1] + g[1][0])
            + z * (g[1][2] + g[2][1])
            + w * (g[0][2] - g[2][0]));
    let dz = two
        * (-two * z * (g[0][0] + g[1][1])
            + x * (g[0][2] + g[2][0])
            + y * (g[1][2] + g[2][1])
            + w * (g[1][0] - g[0][1]));
    let dn = [dw, dx, dy, dz];
    let qn = [w, x, y, z];
    let proj = dn[0] * qn[0] + dn[1] * qn[1] + dn[2] * qn[2] + dn[3] * qn[3];
    [
        (dn[0] - qn[0] * proj) / n,
        (dn[1] - qn[1] * proj) / n,
        (dn[2] - qn[2] * proj) / n,
        (dn[3] - qn[3] * proj) / n,
    ]
}

pub fn normalize_quat<F: Real>(q: &mut Quat<F>) {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n > F::zero() && n.is_finite() {
        for c in q.iter_mut() {
            *c /= n;
        }
    } else {
        *q = [F::one(), F::zero(), F::zero(), F::zero()];
    }
}

/// Hamilton product `a * b` (wxyz).
pub fn quat_mul<F: Real>(a: Quat<F>, b: Quat<F>) -> Quat<F> {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

#[inline]
pub fn logit<F: Real>(p: F) -> F {
    (p / (F::one() - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_orthonormal() {
        let r = quat_to_rotation([0.3f64, -0.5, 0.7, 0.1]);
        let rrt = mat_mul(&r, &transpose(&r));
        for (i, row) in rrt.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_backward_matches_finite_differences() {
        let q = [0.8f64, -0.2, 0.4, 0.35];
        let g = [[0.3, -1.0, 0.2], [0.7, 0.1, -0.4], [-0.6, 0.5, 0.9]];
        let loss = |q: Quat<f64>| {
            let r = quat_to_rotation(q);
            (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| r[i][j] * g[i][j])
                .sum::<f64>()
        };
        let analytic = quat_to_rotation_backward(q, &g);
        for k in 0..4 {
            let h = 1e-6;
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let fd = (loss(qp) - loss(qm)) / (2.0 * h);
            assert!((fd - analytic[k]).abs() < 1e-8, "k={k} fd={fd} an={}", analytic[k]);
        }
    }

    #[test]
    fn quat_mul_composes_rotations() {
        let a = [0.9f64, 0.1, -0.3, 0.2];
        let b = [0.4f64, 0.5, 0.1, -0.6];
        let mut an = a;
        let mut bn = b;
        normalize_quat(&mut an);
        normalize_quat(&mut bn);
        let lhs = quat_to_rotation(quat_mul(an, bn));
        let rhs = mat_mul(&quat_to_rotation(an), &quat_to_rotation(bn));
        for i in 0..3 {
            for j in 0..3 {
                assert!((lhs[i][j] - rhs[i][j]).abs() < 1e-12);
            }
        }
    }
}
