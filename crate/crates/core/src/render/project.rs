//! Perspective projection of 3D Gaussians to screen-space splats (EWA, with
//! first-order Jacobian propagation of the covariance).

use rayon::prelude::*;

use crate::math::{self, Mat3, Real, Vec3};
use crate::model::{covariance_unchecked, sh, Camera, GaussianSoA};

/// Added to the diagonal of every 2D covariance, in px².
pub const COV_BLUR: f64 = 0.3;
/// Splats whose 3σ radius falls below this many pixels are culled.
pub const MIN_SCREEN_RADIUS: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian<F> {
    pub id: usize,
    pub mean2d: [F; 2],
    /// `[xx, xy, yy]` of the blurred 2D covariance.
    pub cov2d: [F; 3],
    /// `[xx, xy, yy]` of the inverse of `cov2d`.
    pub conic: [F; 3],
    pub depth: F,
    pub color: Vec3<F>,
    pub opacity: F,
    pub feature: Vec3<F>,
    /// Pixel radius outside which the splat's alpha is below the blending
    /// cutoff.
    pub radius: F,
}

/// Camera parameters converted to the working precision.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CameraF<F> {
    pub fx: F,
    pub fy: F,
    pub cx: F,
    pub cy: F,
    pub near: F,
    pub far: F,
    pub rot: Mat3<F>,
    pub trans: Vec3<F>,
    pub center: Vec3<F>,
    pub width: usize,
    pub height: usize,
}

impl<F: Real> CameraF<F> {
    pub fn new(cam: &Camera) -> Self {
        let c = F::lit;
        CameraF {
            fx: c(cam.fx),
            fy: c(cam.fy),
            cx: c(cam.cx),
            cy: c(cam.cy),
            near: c(cam.near),
            far: c(cam.far),
            rot: cam.rotation().map(|r| r.map(c)),
            trans: cam.translation().map(c),
            center: cam.center().map(c),
            width: cam.width,
            height: cam.height,
        }
    }
}

/// Per-Gaussian projection with the given SH degree and blending cutoff.
pub(crate) fn project_one<F: Real>(
    g: &GaussianSoA<F>,
    i: usize,
    cam: &CameraF<F>,
    sh_degree: usize,
    min_alpha: F,
) -> Option<ProjectedGaussian<F>> {
    let mean = g.means[i];
    let t = math::add3(math::mat_vec(&cam.rot, mean), cam.trans);
    if t[2] <= cam.near || t[2] >= cam.far {
        return None;
    }
    let opacity = math::sigmoid(g.opacity_logits[i]);
    if opacity < min_alpha {
        return None;
    }
    let cov3 = covariance_unchecked(g.rotations[i], g.log_scales[i]);
    let jw = jacobian_times_rotation(cam, t);
    let cov2d = project_cov(&jw, &cov3);
    let det = cov2d[0] * cov2d[2] - cov2d[1] * cov2d[1];
    if !(det > F::zero()) {
        return None;
    }
    let mid = F::lit(0.5) * (cov2d[0] + cov2d[2]);
    let lambda_max = mid + (mid * mid - det).max(F::zero()).sqrt();
    if F::lit(3.0) * lambda_max.sqrt() < F::lit(MIN_SCREEN_RADIUS) {
        return None;
    }
    // alpha >= min_alpha  <=>  d^T Q d <= 2 ln(opacity / min_alpha)
    let reach = F::lit(2.0) * (opacity / min_alpha).ln();
    let radius = (reach.max(F::zero()) * lambda_max).sqrt();
    let mean2d = [
        cam.fx * t[0] / t[2] + cam.cx,
        cam.fy * t[1] / t[2] + cam.cy,
    ];
    let (w, h) = (F::lit(cam.width as f64), F::lit(cam.height as f64));
    if mean2d[0] + radius < F::zero()
        || mean2d[0] - radius > w
        || mean2d[1] + radius < F::zero()
        || mean2d[1] - radius > h
    {
        return None;
    }
    let conic = [cov2d[2] / det, -cov2d[1] / det, cov2d[0] / det];
    let dir = view_dir(cam, mean);
    let raw = sh::eval_raw(g.sh_of(i), dir.0, sh_degree);
    Some(ProjectedGaussian {
        id: i,
        mean2d,
        cov2d,
        conic,
        depth: t[2],
        color: sh::offset_clamp(raw),
        opacity,
        feature: g.semantics[i],
        radius,
    })
}

/// `J·W`: the 2×3 Jacobian of the pinhole projection at camera-space point
/// `t`, composed with the world-to-camera rotation.
pub(crate) fn jacobian_times_rotation<F: Real>(cam: &CameraF<F>, t: Vec3<F>) -> [[F; 3]; 2] {
    let j = jacobian(cam, t);
    let r = &cam.rot;
    let mut out = [[F::zero(); 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            out[a][b] = j[a][0] * r[0][b] + j[a][1] * r[1][b] + j[a][2] * r[2][b];
        }
    }
    out
}

pub(crate) fn jacobian<F: Real>(cam: &CameraF<F>, t: Vec3<F>) -> [[F; 3]; 2] {
    let iz = F::one() / t[2];
    let iz2 = iz * iz;
    [
        [cam.fx * iz, F::zero(), -cam.fx * t[0] * iz2],
        [F::zero(), cam.fy * iz, -cam.fy * t[1] * iz2],
    ]
}

/// `M Σ Mᵀ + blur·I` as `[xx, xy, yy]`.
pub(crate) fn project_cov<F: Real>(m: &[[F; 3]; 2], cov3: &Mat3<F>) -> [F; 3] {
    let ms0 = math::mat_t_vec(cov3, m[0]);
    let ms1 = math::mat_t_vec(cov3, m[1]);
    let blur = F::lit(COV_BLUR);
    [
        math::dot3(ms0, m[0]) + blur,
        math::dot3(ms0, m[1]),
        math::dot3(ms1, m[1]) + blur,
    ]
}

/// Unit direction from the camera center to `mean`, and the distance.
pub(crate) fn view_dir<F: Real>(cam: &CameraF<F>, mean: Vec3<F>) -> (Vec3<F>, F) {
    let v = math::sub3(mean, cam.center);
    let n = math::norm3(v);
    if n > F::zero() {
        (math::scale3(v, F::one() / n), n)
    } else {
        ([F::zero(), F::zero(), F::one()], F::zero())
    }
}

pub(crate) fn project_all<F: Real>(
    g: &GaussianSoA<F>,
    cam: &CameraF<F>,
    sh_degree: usize,
    min_alpha: F,
) -> Vec<ProjectedGaussian<F>> {
    (0..g.len())
        .into_par_iter()
        .with_min_len(256)
        .filter_map(|i| project_one(g, i, cam, sh_degree, min_alpha))
        .collect()
}

/// Projects every visible Gaussian; culled ones are omitted.
pub fn project<F: Real>(gaussians: &GaussianSoA<F>, camera: &Camera) -> Vec<ProjectedGaussian<F>> {
    let cam = CameraF::new(camera);
    project_all(
        gaussians,
        &cam,
        gaussians.sh_degree(),
        F::lit(super::DEFAULT_MIN_ALPHA),
    )
}

/// Front-to-back order: camera depth, ties broken by Gaussian id.
pub(crate) fn depth_sort<F: Real>(splats: &mut [ProjectedGaussian<F>]) {
    splats.sort_unstable_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
}

/// Splat alpha at pixel center `(px, py)`, or `None` when below `min_alpha`.
/// Also returns the Gaussian falloff and the offset from the splat center.
#[inline(always)]
pub(crate) fn splat_alpha<F: Real>(
    s: &ProjectedGaussian<F>,
    px: F,
    py: F,
    min_alpha: F,
) -> Option<(F, F, F, F)> {
    let dx = px - s.mean2d[0];
    let dy = py - s.mean2d[1];
    let power = F::lit(0.5) * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) + s.conic[1] * dx * dy;
    if power < F::zero() {
        return None;
    }
    let falloff = (-power).exp();
    let alpha = s.opacity * falloff;
    if alpha < min_alpha {
        return None;
    }
    Some((alpha, falloff, dx, dy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::camera::IDENTITY_POSE;

    fn one_gaussian(mean: Vec3<f64>, log_scale: f64) -> GaussianSoA<f64> {
        let mut g = GaussianSoA::new(0);
        g.push(mean, [1.0, 0.0, 0.0, 0.0], [log_scale; 3], 3.0, &[0.0; 3], [0.0; 3]);
        g
    }

    #[test]
    fn behind_near_plane_is_culled() {
        let cam = Camera::new(100.0, 100.0, 50.0, 50.0, 100, 100, IDENTITY_POSE).unwrap();
        assert!(project(&one_gaussian([0.0, 0.0, 0.0], -2.0), &cam).is_empty());
        assert!(project(&one_gaussian([0.0, 0.0, -1.0], -2.0), &cam).is_empty());
    }

    #[test]
    fn on_axis_isotropic_matches_pinhole_closed_form() {
        let cam = Camera::new(120.0, 80.0, 40.0, 30.0, 80, 60, IDENTITY_POSE).unwrap();
        let sigma = 0.05f64;
        let z = 2.5;
        let p = project(&one_gaussian([0.0, 0.0, z], sigma.ln()), &cam);
        assert_eq!(p.len(), 1);
        let s = &p[0];
        assert_eq!(s.mean2d, [40.0, 30.0]);
        let want_xx = (120.0 * sigma / z).powi(2) + COV_BLUR;
        let want_yy = (80.0 * sigma / z).powi(2) + COV_BLUR;
        assert!((s.cov2d[0] - want_xx).abs() < 1e-12);
        assert!((s.cov2d[2] - want_yy).abs() < 1e-12);
        assert!(s.cov2d[1].abs() < 1e-15);
        assert_eq!(s.depth, z);
    }

    #[test]
    fn pinhole_arithmetic() {
        let cam = Camera::new(100.0, 100.0, 50.0, 50.0, 200, 100, IDENTITY_POSE).unwrap();
        let p = project(&one_gaussian([1.0, 0.0, 1.0], -3.0), &cam);
        assert_eq!(p[0].mean2d, [150.0, 50.0]);
    }
}
