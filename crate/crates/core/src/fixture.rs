//! Synthetic scene with known ground truth: three clustered objects, a ring
//! of cameras, label maps, an embedding table and a query lookup in which
//! the vague prompts "coffee" and "tea" sit closest to "coffee machine".

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, Dataset, Frame, QueryLookup, RunConfig};
use crate::math::{self, Quat, Real};
use crate::model::{dictionary::DEFAULT_NEGATIVES, sh, Camera, EmbeddingTable, GaussianSoA, Scene, SemanticDictionary, SemanticHead};
use crate::render::render;
use crate::train::{DensifyConfig, LearningRates, LossConfig, TrainConfig};

pub const LABELS: [&str; 3] = ["coffee machine", "apple", "kettle"];
pub const EMBEDDING_DIM: usize = 8;
/// Alpha above which a pixel counts as covered in the ground-truth labels.
pub const COVERAGE_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub seed: u64,
    pub gaussians: usize,
    pub views: usize,
    pub size: usize,
    pub camera_distance: f64,
    /// Standard deviation of the noise added to the ground-truth means to
    /// form the initial point cloud.
    pub init_noise: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 7,
            gaussians: 20,
            views: 10,
            size: 64,
            camera_distance: 4.0,
            init_noise: 0.05,
        }
    }
}

const CENTERS: [[f64; 3]; 3] = [[-0.85, 0.1, 0.0], [0.85, 0.2, 0.1], [0.0, -0.55, -0.2]];
const BASE_COLORS: [[f64; 3]; 3] = [[0.55, 0.25, 0.15], [0.25, 0.7, 0.2], [0.3, 0.4, 0.85]];

fn random_quat(rng: &mut ChaCha8Rng) -> Quat<f64> {
    let mut q: Quat<f64> = std::array::from_fn(|_| rng.sample(StandardNormal));
    math::normalize_quat(&mut q);
    q
}

/// Embedding table: entry `i` is basis vector `eᵢ`, the four negatives are
/// `e₄..e₇`.
pub fn embedding_table() -> EmbeddingTable {
    let mut entries = vec![0.0f32; LABELS.len() * EMBEDDING_DIM];
    for i in 0..LABELS.len() {
        entries[i * EMBEDDING_DIM + i] = 1.0;
    }
    let mut negatives = vec![0.0f32; DEFAULT_NEGATIVES.len() * EMBEDDING_DIM];
    for i in 0..DEFAULT_NEGATIVES.len() {
        negatives[i * EMBEDDING_DIM + 4 + i] = 1.0;
    }
    EmbeddingTable::new(
        EMBEDDING_DIM,
        entries,
        negatives,
        DEFAULT_NEGATIVES.iter().map(|s| s.to_string()).collect(),
    )
    .expect("fixture table is unit norm")
}

fn mix(weights: &[(usize, f32)]) -> Vec<f32> {
    let mut v = vec![0.0f32; EMBEDDING_DIM];
    for &(i, w) in weights {
        v[i] = w;
    }
    // Put the remaining length on e₃ (unused by entries and negatives).
    if weights.iter().all(|&(i, _)| i != 3) {
        let used: f32 = v.iter().map(|x| x * x).sum();
        v[3] = (1.0 - used).max(0.0).sqrt();
    }
    v
}

/// Prompt embeddings. "coffee" and "tea" have no entry of their own; both
/// are closest to "coffee machine", "kettle" is a weaker match, "apple" is
/// slightly anti-aligned, and "car" is orthogonal to every entry.
pub fn query_lookup() -> QueryLookup {
    let mut q = QueryLookup::new(EMBEDDING_DIM);
    let prompts: [(&str, Vec<f32>); 6] = [
        ("coffee", mix(&[(0, 0.9), (1, -0.05), (2, 0.2)])),
        ("tea", mix(&[(0, 0.6), (1, -0.1), (2, 0.25)])),
        ("coffee machine", mix(&[(0, 1.0)])),
        ("apple", mix(&[(1, 1.0)])),
        ("kettle", mix(&[(2, 1.0)])),
        ("car", mix(&[(3, 1.0)])),
    ];
    for (p, v) in prompts {
        q.insert(p, v).expect("fixture prompt");
    }
    q
}

/// The ground-truth scene (SH degree 0, black background). Semantic codes
/// are one-hot per class so that rendering them yields class coverage.
pub fn ground_truth_scene(cfg: &FixtureConfig) -> Scene<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g = GaussianSoA::<f64>::new(0);
    for i in 0..cfg.gaussians {
        let class = i * LABELS.len() / cfg.gaussians.max(1);
        let c = CENTERS[class];
        let mean = std::array::from_fn(|a| c[a] + 0.22 * rng.sample::<f64, _>(StandardNormal));
        let log_scale = std::array::from_fn(|_| rng.random_range(0.1f64..0.28).ln());
        let opacity = rng.random_range(0.75..0.95);
        let rgb: [f64; 3] =
            std::array::from_fn(|a| (BASE_COLORS[class][a] + rng.random_range(-0.1..0.1)).clamp(0.05, 0.95));
        let mut beta = [0.0; 3];
        beta[class] = 1.0;
        g.push(mean, random_quat(&mut rng), log_scale, math::logit(opacity), &sh::rgb_to_dc(rgb), beta);
    }
    let dictionary = SemanticDictionary::new(LABELS).expect("fixture labels");
    let mut head = SemanticHead::zeros(LABELS.len() + 1);
    // Head mapping one-hot codes to their class, used only for inspection.
    for c in 0..LABELS.len() {
        head.weights[c + 1][c] = 4.0;
    }
    head.bias[0] = 2.0;
    Scene::new(g, head, dictionary, embedding_table(), [0.0; 3])
        .expect("fixture scene")
        .cast()
}

pub fn cameras(cfg: &FixtureConfig) -> Vec<Camera> {
    (0..cfg.views)
        .map(|i| {
            let t = i as f64 / cfg.views as f64 * std::f64::consts::TAU;
            let elevation = if i % 2 == 0 { -0.8 } else { 0.6 };
            let eye = [
                cfg.camera_distance * t.sin(),
                elevation,
                -cfg.camera_distance * t.cos(),
            ];
            Camera::look_at(eye, [0.0; 3], [0.0, -1.0, 0.0], cfg.size as f64, cfg.size, cfg.size)
                .expect("fixture camera")
        })
        .collect()
}

/// Label of each pixel: the class with the largest blending weight, or 0
/// where accumulated alpha is at most [`COVERAGE_ALPHA`]. Requires one-hot
/// semantic codes as produced by [`ground_truth_scene`].
pub fn ground_truth_labels<F: Real>(scene: &Scene<F>, camera: &Camera) -> Vec<u16> {
    let out = render(scene, camera);
    out.feature
        .chunks_exact(3)
        .zip(&out.alpha)
        .map(|(f, a)| {
            if a.as_f64() <= COVERAGE_ALPHA {
                return 0;
            }
            let mut best = 0;
            for c in 1..3 {
                if f[c] > f[best] {
                    best = c;
                }
            }
            best as u16 + 1
        })
        .collect()
}

/// Renders every view of the ground truth into a dataset. The point cloud
/// is the ground-truth means plus noise, with uniform gray color.
pub fn synthetic_dataset(cfg: &FixtureConfig) -> Dataset {
    let gt = ground_truth_scene(cfg);
    let frames = cameras(cfg)
        .into_iter()
        .map(|camera| {
            let out = render(&gt, &camera);
            // Quantize like an 8-bit PNG so in-memory and on-disk datasets agree.
            let image = out
                .color
                .iter()
                .map(|&v| ((v as f64).clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0)
                .collect();
            Frame {
                labels: ground_truth_labels(&gt, &camera),
                image,
                camera,
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let points = gt
        .gaussians
        .means
        .iter()
        .map(|m| {
            let mut p = [0.5; 6];
            for a in 0..3 {
                p[a] = m[a] as f64 + cfg.init_noise * rng.sample::<f64, _>(StandardNormal);
            }
            p
        })
        .collect();
    Dataset {
        root: Default::default(),
        frames,
        dictionary: gt.dictionary.clone(),
        embeddings: gt.embeddings.clone(),
        points: Some(points),
    }
}

/// Training settings for the fixture: SH degree 0 (the ground truth is
/// view independent) and densification tuned to the small scene.
pub fn train_config(iterations: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        seed,
        sh_degree: 0,
        sh_warmup_interval: 0,
        lr: LearningRates {
            means: 1.6e-3,
            means_final: 1.6e-5,
            means_decay_steps: iterations,
            ..LearningRates::default()
        },
        densify: DensifyConfig {
            start: 300,
            stop: (iterations / 2).min(1500),
            interval: 100,
            max_gaussians: 400,
            opacity_reset_interval: 0,
            ..DensifyConfig::default()
        },
        ..TrainConfig::default()
    }
}

/// Writes the dataset, query lookup (`queries.bin`) and a training config
/// (`train.json`) into `dir`.
pub fn write_fixture(dir: &Path, cfg: &FixtureConfig, iterations: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::save_dataset(dir, &synthetic_dataset(cfg))?;
    io::save_query_lookup(&dir.join("queries.bin"), &query_lookup())?;
    let run = RunConfig {
        train: train_config(iterations, 0),
        loss: LossConfig::default(),
    };
    let text = serde_json::to_string_pretty(&run).expect("serializing config");
    let path = dir.join("train.json");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}
