//! Analytic gradients of the blended color and feature maps with respect to
//! every Gaussian parameter.
//!
//! The per-pixel compositing is differentiated back to front, keeping a
//! running `dL/dT` so no division by `1 − α` is ever needed. Screen-space
//! gradients are accumulated per tile, reduced per splat in a fixed order
//! (deterministic), then chained through projection, SH evaluation and the
//! covariance parameterization.

use rayon::prelude::*;

use crate::math::{self, Mat3, Real, Vec3};
use crate::model::{sh, Camera, GaussianSoA, Scene};
use crate::render::project::{self, splat_alpha, CameraF};
use crate::render::{pixel_center, prepare, Prepared, RenderOptions};

/// Gradients mirroring [`GaussianSoA`] and the semantic head.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer<F> {
    pub means: Vec<Vec3<F>>,
    pub rotations: Vec<[F; 4]>,
    pub log_scales: Vec<Vec3<F>>,
    pub opacity_logits: Vec<F>,
    pub sh: Vec<F>,
    pub semantics: Vec<Vec3<F>>,
    pub head_weights: Vec<Vec3<F>>,
    pub head_bias: Vec<F>,
    /// |dL/d(screen-space mean)| per Gaussian, in pixels.
    pub mean2d_norm: Vec<F>,
    /// Whether the Gaussian was rendered in this view.
    pub visible: Vec<bool>,
}

impl<F: Real> GradientBuffer<F> {
    pub fn zeros(g: &GaussianSoA<F>, num_classes: usize) -> Self {
        let n = g.len();
        GradientBuffer {
            means: vec![[F::zero(); 3]; n],
            rotations: vec![[F::zero(); 4]; n],
            log_scales: vec![[F::zero(); 3]; n],
            opacity_logits: vec![F::zero(); n],
            sh: vec![F::zero(); g.sh.len()],
            semantics: vec![[F::zero(); 3]; n],
            head_weights: vec![[F::zero(); 3]; num_classes],
            head_bias: vec![F::zero(); num_classes],
            mean2d_norm: vec![F::zero(); n],
            visible: vec![false; n],
        }
    }

    pub fn is_zero(&self) -> bool {
        let z = |v: &F| *v == F::zero();
        self.means.iter().flatten().all(z)
            && self.rotations.iter().flatten().all(z)
            && self.log_scales.iter().flatten().all(z)
            && self.opacity_logits.iter().all(z)
            && self.sh.iter().all(z)
            && self.semantics.iter().flatten().all(z)
            && self.head_weights.iter().flatten().all(z)
            && self.head_bias.iter().all(z)
    }
}

/// Screen-space gradient of one splat.
#[derive(Debug, Clone, Copy, Default)]
struct SplatGrad<F> {
    mean: [F; 2],
    /// Full-matrix gradient of the conic, `[xx, xy(=yx), yy]`.
    conic: [F; 3],
    opacity: F,
    color: [F; 3],
    feature: [F; 3],
}

impl<F: Real> SplatGrad<F> {
    fn zero() -> Self {
        SplatGrad {
            mean: [F::zero(); 2],
            conic: [F::zero(); 3],
            opacity: F::zero(),
            color: [F::zero(); 3],
            feature: [F::zero(); 3],
        }
    }

    fn add(&mut self, o: &SplatGrad<F>) {
        for i in 0..2 {
            self.mean[i] += o.mean[i];
        }
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.color[i] += o.color[i];
            self.feature[i] += o.feature[i];
        }
        self.opacity += o.opacity;
    }
}

struct Hit<F> {
    slot: usize,
    alpha: F,
    falloff: F,
    dx: F,
    dy: F,
    transmittance: F,
}

fn tile_backward<F: Real>(
    prep: &Prepared<F>,
    tile: usize,
    background: [F; 3],
    d_color: &[F],
    d_feature: &[F],
) -> Vec<SplatGrad<F>> {
    let (x0, y0, x1, y1) = prep.tile_rect(tile);
    let list = prep.tile_list(tile);
    let mut grads = vec![SplatGrad::zero(); list.len()];
    if list.is_empty() {
        return grads;
    }
    let mut hits: Vec<Hit<F>> = Vec::new();
    let half = F::lit(0.5);
    for y in y0..y1 {
        for x in x0..x1 {
            let pix = y * prep.width + x;
            let dc = [d_color[pix * 3], d_color[pix * 3 + 1], d_color[pix * 3 + 2]];
            let df = [d_feature[pix * 3], d_feature[pix * 3 + 1], d_feature[pix * 3 + 2]];
            if dc.iter().chain(df.iter()).all(|v| *v == F::zero()) {
                continue;
            }
            let (px, py) = pixel_center::<F>(x, y);
            hits.clear();
            let mut t = F::one();
            for (slot, &k) in list.iter().enumerate() {
                let s = &prep.splats[k as usize];
                if let Some((alpha, falloff, dx, dy)) = splat_alpha(s, px, py, prep.min_alpha) {
                    hits.push(Hit {
                        slot,
                        alpha,
                        falloff,
                        dx,
                        dy,
                        transmittance: t,
                    });
                    t *= F::one() - alpha;
                    if t < prep.min_transmittance {
                        break;
                    }
                }
            }
            // dL/dT_final from the background term.
            let mut g_t = math::dot3(dc, background);
            for h in hits.iter().rev() {
                let s = &prep.splats[list[h.slot] as usize];
                let w = h.alpha * h.transmittance;
                let g = &mut grads[h.slot];
                for c in 0..3 {
                    g.color[c] += dc[c] * w;
                    g.feature[c] += df[c] * w;
                }
                let contrib = math::dot3(dc, s.color) + math::dot3(df, s.feature);
                let d_alpha = h.transmittance * (contrib - g_t);
                g_t = h.alpha * contrib + (F::one() - h.alpha) * g_t;

                g.opacity += d_alpha * h.falloff;
                // alpha = o·exp(−power), power = ½ dᵀQd
                let d_power = -d_alpha * h.alpha;
                let q = &s.conic;
                g.conic[0] += d_power * half * h.dx * h.dx;
                g.conic[1] += d_power * half * h.dx * h.dy;
                g.conic[2] += d_power * half * h.dy * h.dy;
                g.mean[0] -= d_power * (q[0] * h.dx + q[1] * h.dy);
                g.mean[1] -= d_power * (q[1] * h.dx + q[2] * h.dy);
            }
        }
    }
    grads
}

/// Chains one splat's screen-space gradient into the 3D parameters.
fn gaussian_backward<F: Real>(
    g: &GaussianSoA<F>,
    i: usize,
    cam: &CameraF<F>,
    sh_degree: usize,
    sg: &SplatGrad<F>,
    out_sh: &mut [F],
) -> (Vec3<F>, [F; 4], Vec3<F>, F) {
    let mean = g.means[i];
    let t = math::add3(math::mat_vec(&cam.rot, mean), cam.trans);
    let cov3 = crate::model::covariance_unchecked(g.rotations[i], g.log_scales[i]);
    let m = project::jacobian_times_rotation(cam, t);
    let cov2d = project::project_cov(&m, &cov3);
    let det = cov2d[0] * cov2d[2] - cov2d[1] * cov2d[1];
    let q = [cov2d[2] / det, -cov2d[1] / det, cov2d[0] / det];

    // dL/dCov2d = −Q G_Q Q (2×2 symmetric)
    let gq = [[sg.conic[0], sg.conic[1]], [sg.conic[1], sg.conic[2]]];
    let qm = [[q[0], q[1]], [q[1], q[2]]];
    let mut tmp = [[F::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            tmp[a][b] = qm[a][0] * gq[0][b] + qm[a][1] * gq[1][b];
        }
    }
    let mut g_cov = [[F::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            g_cov[a][b] = -(tmp[a][0] * qm[0][b] + tmp[a][1] * qm[1][b]);
        }
    }

    // Cov2d = M Σ Mᵀ + blur:  dΣ = Mᵀ G M,  dM = 2 G M Σ
    let mut d_sigma: Mat3<F> = [[F::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let mut s = F::zero();
            for a in 0..2 {
                for b in 0..2 {
                    s += m[a][r] * g_cov[a][b] * m[b][c];
                }
            }
            d_sigma[r][c] = s;
        }
    }
    let mut d_m = [[F::zero(); 3]; 2];
    let two = F::lit(2.0);
    for a in 0..2 {
        let gm = [
            g_cov[a][0] * m[0][0] + g_cov[a][1] * m[1][0],
            g_cov[a][0] * m[0][1] + g_cov[a][1] * m[1][1],
            g_cov[a][0] * m[0][2] + g_cov[a][1] * m[1][2],
        ];
        let gms = math::mat_t_vec(&cov3, gm);
        for c in 0..3 {
            d_m[a][c] = two * gms[c];
        }
    }
    // M = J W  =>  dJ = dM Wᵀ
    let w = &cam.rot;
    let mut d_j = [[F::zero(); 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            d_j[a][b] = d_m[a][0] * w[b][0] + d_m[a][1] * w[b][1] + d_m[a][2] * w[b][2];
        }
    }
    let iz = F::one() / t[2];
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let (fx, fy) = (cam.fx, cam.fy);
    let mut d_t = [F::zero(); 3];
    d_t[0] += d_j[0][2] * (-fx * iz2);
    d_t[1] += d_j[1][2] * (-fy * iz2);
    d_t[2] += d_j[0][0] * (-fx * iz2)
        + d_j[0][2] * (two * fx * t[0] * iz3)
        + d_j[1][1] * (-fy * iz2)
        + d_j[1][2] * (two * fy * t[1] * iz3);
    // mean2d = (fx tx/tz + cx, fy ty/tz + cy)
    d_t[0] += sg.mean[0] * fx * iz;
    d_t[1] += sg.mean[1] * fy * iz;
    d_t[2] -= sg.mean[0] * fx * t[0] * iz2 + sg.mean[1] * fy * t[1] * iz2;
    let mut d_mean = math::mat_t_vec(&cam.rot, d_t);

    // Color: clamp(SH(dir) + 0.5)
    let (dir, dist) = project::view_dir(cam, mean);
    let coeffs = g.sh_of(i);
    let raw = sh::eval_raw(coeffs, dir, sh_degree);
    let half = F::lit(0.5);
    let d_raw: [F; 3] = std::array::from_fn(|c| {
        let v = raw[c] + half;
        if v > F::zero() && v < F::one() {
            sg.color[c]
        } else {
            F::zero()
        }
    });
    if d_raw.iter().any(|v| *v != F::zero()) {
        let mut basis = [F::zero(); 16];
        sh::eval_basis(dir, sh_degree, &mut basis);
        let nk = sh::num_coeffs(sh_degree);
        for k in 0..nk {
            for c in 0..3 {
                out_sh[k * 3 + c] = d_raw[c] * basis[k];
            }
        }
        if sh_degree > 0 && dist > F::zero() {
            let mut grad = [[F::zero(); 3]; 16];
            sh::eval_basis_grad(dir, sh_degree, &mut grad);
            let mut d_dir = [F::zero(); 3];
            for k in 1..nk {
                let w = d_raw[0] * coeffs[k * 3] + d_raw[1] * coeffs[k * 3 + 1] + d_raw[2] * coeffs[k * 3 + 2];
                for a in 0..3 {
                    d_dir[a] += w * grad[k][a];
                }
            }
            let proj = math::dot3(dir, d_dir);
            for a in 0..3 {
                d_mean[a] += (d_dir[a] - dir[a] * proj) / dist;
            }
        }
    }

    // Σ = (R S)(R S)ᵀ
    let r = math::quat_to_rotation(g.rotations[i]);
    let s = g.log_scales[i].map(F::exp);
    let mut d_r: Mat3<F> = [[F::zero(); 3]; 3];
    let mut d_s = [F::zero(); 3];
    for a in 0..3 {
        for j in 0..3 {
            // dM3[a][j] = 2 Σ_b dΣ[a][b] M3[b][j],  M3 = R diag(s)
            let mut dm3 = F::zero();
            for b in 0..3 {
                dm3 += d_sigma[a][b] * r[b][j] * s[j];
            }
            dm3 = two * dm3;
            d_r[a][j] = dm3 * s[j];
            d_s[j] += dm3 * r[a][j];
        }
    }
    let d_log_scale = [d_s[0] * s[0], d_s[1] * s[1], d_s[2] * s[2]];
    let d_quat = math::quat_to_rotation_backward(g.rotations[i], &d_r);
    let o = math::sigmoid(g.opacity_logits[i]);
    let d_logit = sg.opacity * o * (F::one() - o);
    (d_mean, d_quat, d_log_scale, d_logit)
}

pub(crate) fn backward_prepared<F: Real>(
    scene: &Scene<F>,
    camera: &Camera,
    prep: &Prepared<F>,
    sh_degree: usize,
    d_color: &[F],
    d_feature: &[F],
) -> GradientBuffer<F> {
    let npix = prep.width * prep.height;
    assert_eq!(d_color.len(), npix * 3, "color gradient shape");
    assert_eq!(d_feature.len(), npix * 3, "feature gradient shape");

    let per_tile: Vec<Vec<SplatGrad<F>>> = (0..prep.num_tiles())
        .into_par_iter()
        .map(|t| tile_backward(prep, t, scene.background, d_color, d_feature))
        .collect();
    let mut per_splat = vec![SplatGrad::zero(); prep.splats.len()];
    for (tile, grads) in per_tile.iter().enumerate() {
        for (slot, g) in prep.tile_list(tile).iter().zip(grads) {
            per_splat[*slot as usize].add(g);
        }
    }

    let g = &scene.gaussians;
    let mut out = GradientBuffer::zeros(g, scene.head.num_classes());
    let cam = CameraF::<F>::new(camera);
    let stride = g.sh_stride();
    let chained: Vec<(usize, Vec3<F>, [F; 4], Vec3<F>, F, Vec<F>)> = prep
        .splats
        .par_iter()
        .zip(per_splat.par_iter())
        .map(|(s, sg)| {
            let mut d_sh = vec![F::zero(); stride];
            let (dm, dq, dl, dop) = gaussian_backward(g, s.id, &cam, sh_degree, sg, &mut d_sh);
            (s.id, dm, dq, dl, dop, d_sh)
        })
        .collect();
    for ((id, dm, dq, dl, dop, d_sh), sg) in chained.into_iter().zip(&per_splat) {
        out.means[id] = dm;
        out.rotations[id] = dq;
        out.log_scales[id] = dl;
        out.opacity_logits[id] = dop;
        out.sh[id * stride..(id + 1) * stride].copy_from_slice(&d_sh);
        out.semantics[id] = sg.feature;
        out.mean2d_norm[id] = (sg.mean[0] * sg.mean[0] + sg.mean[1] * sg.mean[1]).sqrt();
        out.visible[id] = true;
    }
    out
}

/// Gradients of a render with respect to all Gaussian parameters, given the
/// upstream gradients of the color and feature maps (`HxWx3` each). Head
/// gradients are left at zero; they come from the semantic loss.
pub fn backward_render<F: Real>(
    scene: &Scene<F>,
    camera: &Camera,
    d_color: &[F],
    d_feature: &[F],
) -> GradientBuffer<F> {
    backward_render_with(scene, camera, &RenderOptions::default(), d_color, d_feature)
}

pub fn backward_render_with<F: Real>(
    scene: &Scene<F>,
    camera: &Camera,
    opts: &RenderOptions,
    d_color: &[F],
    d_feature: &[F],
) -> GradientBuffer<F> {
    let prep = prepare(scene, camera, opts);
    let degree = opts.sh_degree.unwrap_or(scene.sh_degree()).min(scene.sh_degree());
    backward_prepared(scene, camera, &prep, degree, d_color, d_feature)
}
