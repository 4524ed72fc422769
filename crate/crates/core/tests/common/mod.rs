#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semsplat::math::{self, Real};
use semsplat::model::camera::IDENTITY_POSE;
use semsplat::model::{sh, Camera, EmbeddingTable, GaussianSoA, Scene, SemanticDictionary, SemanticHead};
use semsplat::render::render;
use semsplat::train::{backward_render, loss_photometric, loss_semantic, GradientBuffer, LossConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.2 && n < 1.0 {
            return q.map(|v| v / n);
        }
    }
}

pub fn dictionary(n: usize) -> (SemanticDictionary, EmbeddingTable) {
    let labels: Vec<String> = (0..n).map(|i| format!("label{i}")).collect();
    let dim = n + 2;
    let mut entries = vec![0.0f32; n * dim];
    for i in 0..n {
        entries[i * dim + i] = 1.0;
    }
    let mut neg = vec![0.0f32; dim];
    neg[dim - 1] = 1.0;
    let table = EmbeddingTable::new(dim, entries, neg, vec!["object".into()]).unwrap();
    (SemanticDictionary::new(labels).unwrap(), table)
}

pub struct SceneSpec {
    pub gaussians: usize,
    pub labels: usize,
    pub sh_degree: usize,
    pub width: usize,
    pub height: usize,
    pub min_log_scale: f64,
    pub max_log_scale: f64,
    pub opacity: (f64, f64),
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            gaussians: 10,
            labels: 3,
            sh_degree: 3,
            width: 16,
            height: 16,
            min_log_scale: 0.15f64.ln(),
            max_log_scale: 0.6f64.ln(),
            opacity: (0.3, 0.9),
        }
    }
}

/// Camera at the origin looking down +z with a 90° field of view.
pub fn front_camera(width: usize, height: usize) -> Camera {
    let f = width as f64 / 2.0;
    Camera::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height, IDENTITY_POSE).unwrap()
}

/// Random Gaussians in front of [`front_camera`], random semantics, head and
/// background.
pub fn random_scene<F: Real>(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Scene<F> {
    let mut g = GaussianSoA::<f64>::new(spec.sh_degree);
    let stride = sh::num_coeffs(spec.sh_degree) * 3;
    for _ in 0..spec.gaussians {
        let z = rng.random_range(2.5..4.5);
        let mean = [
            rng.random_range(-0.45..0.45) * z,
            rng.random_range(-0.45..0.45) * z,
            z,
        ];
        let ls = std::array::from_fn(|_| rng.random_range(spec.min_log_scale..spec.max_log_scale));
        let o = rng.random_range(spec.opacity.0..spec.opacity.1);
        let mut coeffs = vec![0.0; stride];
        for c in coeffs.iter_mut().take(3) {
            *c = rng.random_range(-1.2..1.2);
        }
        for c in coeffs.iter_mut().skip(3) {
            *c = rng.random_range(-0.3..0.3);
        }
        let beta = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        g.push(mean, random_unit_quat(rng), ls, math::logit(o), &coeffs, beta);
    }
    let (dict, emb) = dictionary(spec.labels);
    let k = spec.labels + 1;
    let head = SemanticHead {
        weights: (0..k)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.5..1.5)))
            .collect(),
        bias: (0..k).map(|_| rng.random_range(-0.5..0.5)).collect(),
    };
    let bg = std::array::from_fn(|_| rng.random_range(0.0..1.0));
    Scene::new(g, head, dict, emb, bg).unwrap().cast()
}

pub fn random_image(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

pub fn random_labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<u16> {
    (0..n).map(|_| rng.random_range(0..k) as u16).collect()
}

/// Joint loss `L_gs + w·L_ce` evaluated through the forward renderer only.
pub fn joint_loss(scene: &Scene<f64>, cam: &Camera, target: &[f64], labels: &[u16], cfg: &LossConfig) -> f64 {
    let out = render(scene, cam);
    let p = loss_photometric(&out, target, cfg.lambda_dssim).unwrap();
    let s = loss_semantic(&out.feature, &scene.head, labels, cfg.gamma_labeled, cfg.gamma_undetected).unwrap();
    p.loss + cfg.semantic_weight * s.loss
}

pub fn joint_gradient(
    scene: &Scene<f64>,
    cam: &Camera,
    target: &[f64],
    labels: &[u16],
    cfg: &LossConfig,
) -> GradientBuffer<f64> {
    let out = render(scene, cam);
    let p = loss_photometric(&out, target, cfg.lambda_dssim).unwrap();
    let s = loss_semantic(&out.feature, &scene.head, labels, cfg.gamma_labeled, cfg.gamma_undetected).unwrap();
    let w = cfg.semantic_weight;
    let d_feature: Vec<f64> = s.d_feature.iter().map(|v| v * w).collect();
    let mut g = backward_render(scene, cam, &p.grad, &d_feature);
    g.head_weights = s.d_weights.iter().map(|r| r.map(|v| v * w)).collect();
    g.head_bias = s.d_bias.iter().map(|v| v * w).collect();
    g
}

/// Parameter groups in a fixed order, with accessors into flat views.
pub const GROUPS: [&str; 8] = [
    "means",
    "rotations",
    "log_scales",
    "opacity",
    "sh",
    "semantics",
    "head_weights",
    "head_bias",
];

pub fn param_slice<'a>(scene: &'a mut Scene<f64>, group: &str) -> &'a mut [f64] {
    let g = &mut scene.gaussians;
    match group {
        "means" => g.means.as_flattened_mut(),
        "rotations" => g.rotations.as_flattened_mut(),
        "log_scales" => g.log_scales.as_flattened_mut(),
        "opacity" => &mut g.opacity_logits,
        "sh" => &mut g.sh,
        "semantics" => g.semantics.as_flattened_mut(),
        "head_weights" => scene.head.weights.as_flattened_mut(),
        "head_bias" => &mut scene.head.bias,
        _ => unreachable!("unknown group {group}"),
    }
}

pub fn grad_slice<'a>(grads: &'a GradientBuffer<f64>, group: &str) -> &'a [f64] {
    match group {
        "means" => grads.means.as_flattened(),
        "rotations" => grads.rotations.as_flattened(),
        "log_scales" => grads.log_scales.as_flattened(),
        "opacity" => &grads.opacity_logits,
        "sh" => &grads.sh,
        "semantics" => grads.semantics.as_flattened(),
        "head_weights" => grads.head_weights.as_flattened(),
        "head_bias" => &grads.head_bias,
        _ => unreachable!("unknown group {group}"),
    }
}

/// One analytic-vs-numeric comparison.
#[derive(Debug, Clone)]
pub struct GradSample {
    pub group: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradSample {
    /// Relative error with an absolute floor so that coordinates whose true
    /// gradient is zero do not divide by noise.
    pub fn rel_err(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(1e-6);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Central differences of `f` over every parameter coordinate.
pub fn finite_difference_check(
    scene: &Scene<f64>,
    analytic: &GradientBuffer<f64>,
    h: f64,
    f: impl Fn(&Scene<f64>) -> f64,
) -> Vec<GradSample> {
    let mut out = Vec::new();
    let mut work = scene.clone();
    for group in GROUPS {
        let n = param_slice(&mut work, group).len();
        let a = grad_slice(analytic, group);
        assert_eq!(a.len(), n, "gradient shape for {group}");
        for i in 0..n {
            let orig = param_slice(&mut work, group)[i];
            param_slice(&mut work, group)[i] = orig + h;
            let fp = f(&work);
            param_slice(&mut work, group)[i] = orig - h;
            let fm = f(&work);
            param_slice(&mut work, group)[i] = orig;
            out.push(GradSample {
                group,
                index: i,
                analytic: a[i],
                numeric: (fp - fm) / (2.0 * h),
            });
        }
    }
    out
}

/// The random-scene family used for renderer equivalence: 1 to 100
/// Gaussians at 32×32, one scene per seed offset.
pub fn oracle_scene(seed: u64) -> (Scene<f32>, Camera) {
    let mut r = rng(0x5eed ^ seed);
    let spec = SceneSpec {
        gaussians: r.random_range(1..=100),
        width: 32,
        height: 32,
        ..SceneSpec::default()
    };
    (random_scene(&spec, &mut r), front_camera(32, 32))
}
