//! Single-phase joint optimization of geometry, appearance and semantics.
//!
//! Every iteration renders one training view, evaluates
//! `L = L_photometric + semantic_weight · L_ce`, back-propagates into all
//! parameter groups at once and takes one Adam step.

pub mod adam;
pub mod backward;
pub mod densify;
pub mod loss;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState, LearningRates};
pub use backward::{backward_render, backward_render_with, GradientBuffer};
pub use densify::{densify_and_prune, DensifyConfig, DensifyReport, DensifyStats};
pub use loss::{loss_photometric, loss_semantic, LossConfig, PhotometricLoss, SemanticLoss};

use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::math::{self, Vec3};
use crate::metrics;
use crate::model::{sh, GaussianSoA, Scene, SemanticHead};
use crate::render::{prepare, render_prepared, RenderOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub seed: u64,
    pub lr: LearningRates,
    pub adam: AdamConfig,
    pub densify: DensifyConfig,
    /// Final SH degree.
    pub sh_degree: usize,
    /// The active SH degree grows by one every this many iterations
    /// (0 = full degree from the start).
    pub sh_warmup_interval: usize,
    /// Number of random Gaussians when the dataset has no point cloud.
    pub random_init_points: usize,
    pub init_opacity: f64,
    /// Standard deviation of the random initial semantic codes and head
    /// weights. Both starting at zero would leave their gradients zero.
    pub init_semantic_std: f64,
    pub background: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 30_000,
            seed: 0,
            lr: LearningRates::default(),
            adam: AdamConfig::default(),
            densify: DensifyConfig::default(),
            sh_degree: 3,
            sh_warmup_interval: 1000,
            random_init_points: 5000,
            init_opacity: 0.1,
            init_semantic_std: 0.1,
            background: [0.0; 3],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be > 0".into()));
        }
        if self.sh_degree > sh::MAX_SH_DEGREE {
            return Err(Error::Config(format!("sh_degree must be ≤ {}", sh::MAX_SH_DEGREE)));
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return Err(Error::Config("init_opacity must lie in (0,1)".into()));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Config("background must lie in [0,1]".into()));
        }
        self.lr.validate()?;
        self.densify.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    #[serde(rename = "L_gs")]
    pub l_gs: f64,
    #[serde(rename = "L_ce")]
    pub l_ce: f64,
    pub psnr: f64,
    pub num_gaussians: usize,
    /// Wall-clock milliseconds since training started. The only
    /// non-deterministic field.
    pub wall_ms: f64,
}

/// Builds the initial scene from the dataset's point cloud, or from random
/// points around the region the cameras look at.
pub fn initialize_scene(dataset: &Dataset, cfg: &TrainConfig) -> Result<Scene<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_1417);
    let points: Vec<[f64; 6]> = match &dataset.points {
        Some(p) if !p.is_empty() => p.clone(),
        _ => random_points(dataset, cfg.random_init_points.max(1), &mut rng),
    };
    let spacing = neighbor_spacing(&points);
    let mut g = GaussianSoA::<f32>::new(cfg.sh_degree);
    let mut coeffs = vec![0.0f32; g.sh_stride()];
    let logit = math::logit(cfg.init_opacity) as f32;
    let std = cfg.init_semantic_std;
    for (p, s) in points.iter().zip(&spacing) {
        let dc = sh::rgb_to_dc([p[3], p[4], p[5]]);
        coeffs.iter_mut().for_each(|c| *c = 0.0);
        for c in 0..3 {
            coeffs[c] = dc[c] as f32;
        }
        let beta: Vec3<f32> = std::array::from_fn(|_| (rng.sample::<f64, _>(StandardNormal) * std) as f32);
        g.push(
            [p[0] as f32, p[1] as f32, p[2] as f32],
            [1.0, 0.0, 0.0, 0.0],
            [s.ln() as f32; 3],
            logit,
            &coeffs,
            beta,
        );
    }
    let k = dataset.dictionary.num_classes();
    let mut head = SemanticHead::zeros(k);
    for w in head.weights.iter_mut() {
        *w = std::array::from_fn(|_| (rng.sample::<f64, _>(StandardNormal) * std) as f32);
    }
    let bg = cfg.background.map(|c| c as f32);
    Scene::new(g, head, dataset.dictionary.clone(), dataset.embeddings.clone(), bg)
}

/// Mean distance to the three nearest neighbours, floored to avoid
/// degenerate scales. Brute force below 20k points, a global estimate above.
fn neighbor_spacing(points: &[[f64; 6]]) -> Vec<f64> {
    let n = points.len();
    let pos = |i: usize| [points[i][0], points[i][1], points[i][2]];
    if n < 2 {
        return vec![0.01; n];
    }
    if n > 20_000 {
        let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
        for i in 0..n {
            for a in 0..3 {
                lo[a] = lo[a].min(points[i][a]);
                hi[a] = hi[a].max(points[i][a]);
            }
        }
        let vol: f64 = (0..3).map(|a| (hi[a] - lo[a]).max(1e-6)).product();
        return vec![(vol / n as f64).cbrt(); n];
    }
    (0..n)
        .map(|i| {
            let mut best = [f64::INFINITY; 3];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = math::norm3(math::sub3(pos(i), pos(j)));
                if d < best[2] {
                    best[2] = d;
                    best.sort_by(f64::total_cmp);
                }
            }
            let k = best.iter().filter(|d| d.is_finite()).count().max(1);
            let mean = best.iter().filter(|d| d.is_finite()).sum::<f64>() / k as f64;
            mean.max(1e-4)
        })
        .collect()
}

/// Point closest (least squares) to all optical axes, and the mean camera
/// distance to it.
fn look_center(dataset: &Dataset) -> (Vec3<f64>, f64) {
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for f in &dataset.frames {
        let c = f.camera.center();
        let r = f.camera.rotation();
        let d = [r[2][0], r[2][1], r[2][2]];
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { 1.0 } else { 0.0 } - d[i] * d[j];
                a[i][j] += m;
                b[i] += m * c[j];
            }
        }
    }
    let center = solve3(a, b).unwrap_or_else(|| {
        let n = dataset.frames.len() as f64;
        let mut c = [0.0; 3];
        for f in &dataset.frames {
            let cc = f.camera.center();
            let r = f.camera.rotation();
            for i in 0..3 {
                c[i] += (cc[i] + r[2][i]) / n;
            }
        }
        c
    });
    let dist = dataset
        .frames
        .iter()
        .map(|f| math::norm3(math::sub3(f.camera.center(), center)))
        .sum::<f64>()
        / dataset.frames.len() as f64;
    (center, dist.max(1e-3))
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d.abs() < 1e-9 {
        return None;
    }
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *xk = det(&m) / d;
    }
    Some(x)
}

fn random_points(dataset: &Dataset, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 6]> {
    let (center, dist) = look_center(dataset);
    let half = 0.5 * dist;
    (0..n)
        .map(|_| {
            let mut p = [0.0; 6];
            for a in 0..3 {
                p[a] = center[a] + rng.random_range(-half..half);
            }
            for c in 3..6 {
                p[c] = rng.random_range(0.0..1.0);
            }
            p
        })
        .collect()
}

/// Everything produced by one training step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub record: MetricsRecord,
    pub grads: GradientBuffer<f32>,
    pub densify: Option<DensifyReport>,
}

pub struct Trainer<'a> {
    dataset: &'a Dataset,
    scene: Scene<f32>,
    state: AdamState<f32>,
    stats: DensifyStats,
    cfg: TrainConfig,
    loss: LossConfig,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    iteration: usize,
    extent: f64,
    started: Instant,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, scene: Scene<f32>, cfg: TrainConfig, loss: LossConfig) -> Result<Self> {
        cfg.validate()?;
        loss.validate()?;
        if dataset.is_empty() {
            return Err(Error::Config("dataset has no frames".into()));
        }
        if scene.dictionary != dataset.dictionary {
            return Err(Error::Config(format!(
                "scene dictionary has {} labels, dataset dictionary has {} (or they differ)",
                scene.dictionary.len(),
                dataset.dictionary.len()
            )));
        }
        if scene.head.num_classes() != dataset.dictionary.num_classes() {
            return Err(Error::Config("semantic head size does not match the dictionary".into()));
        }
        let state = AdamState::new(&scene, cfg.adam);
        let stats = DensifyStats::new(scene.len());
        let extent = densify::scene_extent(&scene);
        Ok(Trainer {
            dataset,
            state,
            stats,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            order: Vec::new(),
            cursor: 0,
            iteration: 0,
            extent,
            started: Instant::now(),
            scene,
            cfg,
            loss,
        })
    }

    pub fn scene(&self) -> &Scene<f32> {
        &self.scene
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn into_scene(self) -> Scene<f32> {
        self.scene
    }

    fn next_view(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order = (0..self.dataset.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    fn active_sh_degree(&self) -> usize {
        let full = self.scene.sh_degree();
        match self.cfg.sh_warmup_interval {
            0 => full,
            w => (self.iteration / w).min(full),
        }
    }

    /// Runs one iteration on the next view in the shuffled order.
    pub fn step(&mut self) -> Result<StepOutput> {
        let view = self.next_view();
        self.step_on(view)
    }

    /// Runs one iteration on frame `view`.
    pub fn step_on(&mut self, view: usize) -> Result<StepOutput> {
        let frame = &self.dataset.frames[view];
        let degree = self.active_sh_degree();
        let opts = RenderOptions {
            sh_degree: Some(degree),
            ..RenderOptions::default()
        };
        let prep = prepare(&self.scene, &frame.camera, &opts);
        let out = render_prepared(&prep, self.scene.background, false);

        let photo = loss_photometric(&out, &frame.image, self.loss.lambda_dssim)?;
        let w = self.loss.semantic_weight as f32;
        let (l_ce, d_feature, d_weights, d_bias) = if w > 0.0 {
            let sem = loss_semantic(
                &out.feature,
                &self.scene.head,
                &frame.labels,
                self.loss.gamma_labeled,
                self.loss.gamma_undetected,
            )?;
            let scale3 = |v: [f32; 3]| v.map(|x| x * w);
            (
                sem.loss as f64,
                sem.d_feature.iter().map(|x| x * w).collect(),
                sem.d_weights.into_iter().map(scale3).collect(),
                sem.d_bias.iter().map(|x| x * w).collect(),
            )
        } else {
            let k = self.scene.head.num_classes();
            (0.0, vec![0.0; out.feature.len()], vec![[0.0; 3]; k], vec![0.0; k])
        };

        let mut grads =
            backward::backward_prepared(&self.scene, &frame.camera, &prep, degree, &photo.grad, &d_feature);
        grads.head_weights = d_weights;
        grads.head_bias = d_bias;
        let psnr = metrics::psnr(&out.color, &frame.image)?;

        if self.iteration < self.cfg.densify.stop {
            self.stats.accumulate(&grads, frame.camera.width, frame.camera.height);
        }
        self.state.step(&mut self.scene, &grads, &self.cfg.lr);
        self.iteration += 1;

        let mut report = None;
        if self.cfg.densify.due(self.iteration) {
            report = Some(densify::densify_and_prune(
                &mut self.scene,
                &mut self.state,
                &mut self.stats,
                &self.cfg.densify,
                self.extent,
                &mut self.rng,
            ));
        }
        if self.cfg.densify.reset_due(self.iteration) {
            densify::reset_opacity(&mut self.scene, &mut self.state, self.cfg.densify.opacity_reset_value);
        }
        if !self.scene.gaussians.all_finite() {
            return Err(Error::Config(format!(
                "non-finite parameters after iteration {}; lower the learning rates",
                self.iteration
            )));
        }

        let record = MetricsRecord {
            iteration: self.iteration,
            l_gs: photo.loss as f64,
            l_ce,
            psnr,
            num_gaussians: self.scene.len(),
            wall_ms: self.started.elapsed().as_secs_f64() * 1e3,
        };
        Ok(StepOutput {
            record,
            grads,
            densify: report,
        })
    }
}

/// Trains from `init` for `cfg.iterations` steps, calling `on_record` after
/// every step. Returns the trained scene and the full metrics log.
pub fn train_from(
    dataset: &Dataset,
    init: Scene<f32>,
    cfg: &TrainConfig,
    loss: &LossConfig,
    mut on_record: impl FnMut(&MetricsRecord),
) -> Result<(Scene<f32>, Vec<MetricsRecord>)> {
    let mut trainer = Trainer::new(dataset, init, cfg.clone(), loss.clone())?;
    let mut log = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let out = trainer.step()?;
        on_record(&out.record);
        log.push(out.record);
    }
    Ok((trainer.into_scene(), log))
}

/// Initializes a scene from the dataset and trains it.
pub fn train(
    dataset: &Dataset,
    cfg: &TrainConfig,
    loss: &LossConfig,
    on_record: impl FnMut(&MetricsRecord),
) -> Result<(Scene<f32>, Vec<MetricsRecord>)> {
    cfg.validate()?;
    let init = initialize_scene(dataset, cfg)?;
    train_from(dataset, init, cfg, loss, on_record)
}
