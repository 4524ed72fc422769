//! Real spherical harmonics up to degree 3, using the sign conventions of the
//! reference splatting implementations so checkpoints stay comparable.

use crate::error::{Error, Result};
use crate::math::{Real, Vec3};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: usize = 3;

/// Number of basis functions per color channel for `degree`.
#[inline]
pub const fn num_coeffs(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Inverse of [`num_coeffs`]; `None` if `n` is not a perfect square of a
/// supported degree.
pub fn degree_from_coeffs(n: usize) -> Option<usize> {
    (0..=MAX_SH_DEGREE).find(|&d| num_coeffs(d) == n)
}

/// Evaluates the first `num_coeffs(degree)` basis functions at `dir`.
pub fn eval_basis<F: Real>(dir: Vec3<F>, degree: usize, out: &mut [F; 16]) {
    let [x, y, z] = dir;
    let c = F::lit;
    out[0] = c(SH_C0);
    if degree == 0 {
        return;
    }
    out[1] = -c(SH_C1) * y;
    out[2] = c(SH_C1) * z;
    out[3] = -c(SH_C1) * x;
    if degree == 1 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = c(SH_C2[0]) * xy;
    out[5] = c(SH_C2[1]) * yz;
    out[6] = c(SH_C2[2]) * (c(2.0) * zz - xx - yy);
    out[7] = c(SH_C2[3]) * xz;
    out[8] = c(SH_C2[4]) * (xx - yy);
    if degree == 2 {
        return;
    }
    out[9] = c(SH_C3[0]) * y * (c(3.0) * xx - yy);
    out[10] = c(SH_C3[1]) * xy * z;
    out[11] = c(SH_C3[2]) * y * (c(4.0) * zz - xx - yy);
    out[12] = c(SH_C3[3]) * z * (c(2.0) * zz - c(3.0) * xx - c(3.0) * yy);
    out[13] = c(SH_C3[4]) * x * (c(4.0) * zz - xx - yy);
    out[14] = c(SH_C3[5]) * z * (xx - yy);
    out[15] = c(SH_C3[6]) * x * (xx - c(3.0) * yy);
}

/// Gradient of each basis function with respect to the (unnormalized)
/// direction components.
pub fn eval_basis_grad<F: Real>(dir: Vec3<F>, degree: usize, out: &mut [[F; 3]; 16]) {
    let [x, y, z] = dir;
    let c = F::lit;
    let zero = F::zero();
    out[0] = [zero; 3];
    if degree == 0 {
        return;
    }
    out[1] = [zero, -c(SH_C1), zero];
    out[2] = [zero, zero, c(SH_C1)];
    out[3] = [-c(SH_C1), zero, zero];
    if degree == 1 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let two = c(2.0);
    out[4] = [c(SH_C2[0]) * y, c(SH_C2[0]) * x, zero];
    out[5] = [zero, c(SH_C2[1]) * z, c(SH_C2[1]) * y];
    out[6] = [
        c(SH_C2[2]) * -two * x,
        c(SH_C2[2]) * -two * y,
        c(SH_C2[2]) * c(4.0) * z,
    ];
    out[7] = [c(SH_C2[3]) * z, zero, c(SH_C2[3]) * x];
    out[8] = [c(SH_C2[4]) * two * x, c(SH_C2[4]) * -two * y, zero];
    if degree == 2 {
        return;
    }
    let k = SH_C3;
    out[9] = [
        c(k[0]) * c(6.0) * x * y,
        c(k[0]) * c(3.0) * (xx - yy),
        zero,
    ];
    out[10] = [c(k[1]) * y * z, c(k[1]) * x * z, c(k[1]) * x * y];
    out[11] = [
        c(k[2]) * -two * x * y,
        c(k[2]) * (c(4.0) * zz - xx - c(3.0) * yy),
        c(k[2]) * c(8.0) * y * z,
    ];
    out[12] = [
        c(k[3]) * c(-6.0) * x * z,
        c(k[3]) * c(-6.0) * y * z,
        c(k[3]) * (c(6.0) * zz - c(3.0) * xx - c(3.0) * yy),
    ];
    out[13] = [
        c(k[4]) * (c(4.0) * zz - c(3.0) * xx - yy),
        c(k[4]) * -two * x * y,
        c(k[4]) * c(8.0) * x * z,
    ];
    out[14] = [c(k[5]) * two * x * z, c(k[5]) * -two * y * z, c(k[5]) * (xx - yy)];
    out[15] = [
        c(k[6]) * c(3.0) * (xx - yy),
        c(k[6]) * c(-6.0) * x * y,
        zero,
    ];
}

/// SH color before the +0.5 offset and clamp.
pub(crate) fn eval_raw<F: Real>(coeffs: &[F], dir: Vec3<F>, degree: usize) -> Vec3<F> {
    let mut basis = [F::zero(); 16];
    eval_basis(dir, degree, &mut basis);
    let mut rgb = [F::zero(); 3];
    for (k, b) in basis.iter().enumerate().take(num_coeffs(degree)) {
        for (ch, v) in rgb.iter_mut().enumerate() {
            *v += *b * coeffs[k * 3 + ch];
        }
    }
    rgb
}

#[inline]
pub(crate) fn offset_clamp<F: Real>(raw: Vec3<F>) -> Vec3<F> {
    let half = F::lit(0.5);
    raw.map(|v| (v + half).max(F::zero()).min(F::one()))
}

/// Evaluates the view-dependent color of one Gaussian.
///
/// `coeffs` holds `num_coeffs(stored_degree) * 3` values laid out as
/// `[basis][channel]`; `degree` may be lower than the stored degree (used
/// during degree warmup).
pub fn sh_to_color<F: Real>(coeffs: &[F], view_dir: Vec3<F>, degree: usize) -> Result<Vec3<F>> {
    let stored = degree_from_coeffs(coeffs.len() / 3)
        .filter(|_| coeffs.len().is_multiple_of(3))
        .ok_or_else(|| Error::invalid(format!("{} SH coefficients is not a valid layout", coeffs.len())))?;
    if degree > stored {
        return Err(Error::invalid(format!(
            "SH degree {degree} exceeds stored degree {stored}"
        )));
    }
    if view_dir.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite view direction"));
    }
    Ok(offset_clamp(eval_raw(coeffs, view_dir, degree)))
}

/// Encodes a flat RGB color as the degree-0 coefficient.
pub fn rgb_to_dc<F: Real>(rgb: Vec3<F>) -> Vec3<F> {
    let c0 = F::lit(SH_C0);
    rgb.map(|v| (v - F::lit(0.5)) / c0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
        loop {
            let v: [f64; 3] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 0.1 {
                return v.map(|c| c / n);
            }
        }
    }

    /// Textbook real SH in spherical coordinates, written out by band, with
    /// the splatting sign flips applied to the odd-m terms.
    fn polynomial_basis(d: [f64; 3]) -> [f64; 16] {
        let [x, y, z] = d;
        let pi = std::f64::consts::PI;
        let n0 = 0.5 * (1.0 / pi).sqrt();
        let n1 = (3.0 / (4.0 * pi)).sqrt();
        let n2a = 0.5 * (15.0 / pi).sqrt();
        let n2b = 0.25 * (5.0 / pi).sqrt();
        let n2c = 0.25 * (15.0 / pi).sqrt();
        let n3a = 0.25 * (35.0 / (2.0 * pi)).sqrt();
        let n3b = 0.5 * (105.0 / pi).sqrt();
        let n3c = 0.25 * (21.0 / (2.0 * pi)).sqrt();
        let n3d = 0.25 * (7.0 / pi).sqrt();
        let n3e = 0.25 * (105.0 / pi).sqrt();
        let r2 = x * x + y * y + z * z;
        [
            n0,
            -n1 * y,
            n1 * z,
            -n1 * x,
            n2a * x * y,
            -n2a * y * z,
            n2b * (3.0 * z * z - r2),
            -n2a * x * z,
            n2c * (x * x - y * y),
            -n3a * y * (3.0 * x * x - y * y),
            n3b * x * y * z,
            -n3c * y * (5.0 * z * z - r2),
            n3d * z * (5.0 * z * z - 3.0 * r2),
            -n3c * x * (5.0 * z * z - r2),
            n3e * z * (x * x - y * y),
            -n3a * x * (x * x - 3.0 * y * y),
        ]
    }

    #[test]
    fn dc_band_constant_color() {
        let coeffs = [0.5 / 0.2820948, 0.0, 0.0];
        let c = sh_to_color(&coeffs, [0.0f64, 0.0, 1.0], 0).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-6);
        assert_eq!(c[1], 0.5);
        assert_eq!(c[2], 0.5);
    }

    #[test]
    fn zero_coefficients_give_mid_gray() {
        let c = sh_to_color(&[0.0f32; 3], [1.0, 0.0, 0.0], 0).unwrap();
        assert_eq!(c, [0.5, 0.5, 0.5]);
    }

    #[test]
    fn degree_above_stored_is_rejected() {
        assert!(sh_to_color(&[0.0f64; 12], [1.0, 0.0, 0.0], 2).is_err());
        assert!(sh_to_color(&[0.0f64; 12], [1.0, 0.0, 0.0], 1).is_ok());
    }

    #[test]
    fn degree3_matches_polynomial_basis_and_odd_bands_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let d = unit(&mut rng);
            let mut basis = [0.0; 16];
            eval_basis(d, 3, &mut basis);
            let oracle = polynomial_basis(d);
            for k in 0..16 {
                assert!((basis[k] - oracle[k]).abs() < 1e-12, "k={k}");
            }
            let mut anti = [0.0; 16];
            eval_basis(d.map(|v| -v), 3, &mut anti);
            for k in 0..16 {
                let band = (k as f64).sqrt().floor() as usize;
                let sign = if band % 2 == 1 { -1.0 } else { 1.0 };
                assert!((anti[k] - sign * basis[k]).abs() < 1e-12);
            }
            // Small random coefficients so the clamp stays inactive.
            let coeffs: Vec<f64> = (0..48).map(|_| rng.random_range(-0.1..0.1)).collect();
            let color = sh_to_color(&coeffs, d, 3).unwrap();
            for ch in 0..3 {
                let want: f64 = (0..16).map(|k| oracle[k] * coeffs[k * 3 + ch]).sum::<f64>() + 0.5;
                assert!((color[ch] - want.clamp(0.0, 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn basis_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = unit(&mut rng);
        let mut g = [[0.0; 3]; 16];
        eval_basis_grad(d, 3, &mut g);
        for axis in 0..3 {
            let h = 1e-6;
            let mut p = d;
            let mut m = d;
            p[axis] += h;
            m[axis] -= h;
            let mut bp = [0.0; 16];
            let mut bm = [0.0; 16];
            eval_basis(p, 3, &mut bp);
            eval_basis(m, 3, &mut bm);
            for k in 0..16 {
                let fd = (bp[k] - bm[k]) / (2.0 * h);
                assert!((fd - g[k][axis]).abs() < 1e-7, "k={k} axis={axis}");
            }
        }
    }
}
