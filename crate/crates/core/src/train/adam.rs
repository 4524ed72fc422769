//! Adam with one moment buffer per parameter group, rows kept aligned with
//! the Gaussians they belong to.

use serde::{Deserialize, Serialize};

use super::backward::GradientBuffer;
use crate::error::{Error, Result};
use crate::math::{self, Real};
use crate::model::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

/// Learning rate for every parameter group. The mean rate decays
/// exponentially from `means` to `means_final` over `means_decay_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub means: f64,
    pub means_final: f64,
    pub means_decay_steps: usize,
    pub log_scales: f64,
    pub rotations: f64,
    pub opacity: f64,
    pub sh: f64,
    pub semantics: f64,
    pub head: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            means: 1.6e-4,
            means_final: 1.6e-6,
            means_decay_steps: 30_000,
            log_scales: 5e-3,
            rotations: 1e-3,
            opacity: 5e-2,
            sh: 2.5e-3,
            semantics: 2.5e-3,
            head: 2.5e-3,
        }
    }
}

impl LearningRates {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("means", self.means),
            ("means_final", self.means_final),
            ("log_scales", self.log_scales),
            ("rotations", self.rotations),
            ("opacity", self.opacity),
            ("sh", self.sh),
            ("semantics", self.semantics),
            ("head", self.head),
        ];
        for (name, lr) in all {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate `{name}` must be > 0, got {lr}")));
            }
        }
        Ok(())
    }

    /// Mean learning rate at `step` (0-based), log-linear interpolation.
    pub fn means_at(&self, step: usize) -> f64 {
        if self.means_decay_steps == 0 {
            return self.means_final;
        }
        let t = (step as f64 / self.means_decay_steps as f64).clamp(0.0, 1.0);
        (self.means.ln() * (1.0 - t) + self.means_final.ln() * t).exp()
    }
}

/// First and second moments for a group of rows of `width` scalars each.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<F> {
    width: usize,
    m: Vec<F>,
    v: Vec<F>,
}

impl<F: Real> Moments<F> {
    pub fn new(rows: usize, width: usize) -> Self {
        Moments {
            width,
            m: vec![F::zero(); rows * width],
            v: vec![F::zero(); rows * width],
        }
    }

    pub fn rows(&self) -> usize {
        self.m.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn first(&self) -> &[F] {
        &self.m
    }

    pub fn second(&self) -> &[F] {
        &self.v
    }

    fn retain_rows(&mut self, keep: &[bool]) {
        let w = self.width;
        let mut dst = 0;
        for (row, &k) in keep.iter().enumerate() {
            if k {
                if dst != row {
                    self.m.copy_within(row * w..(row + 1) * w, dst * w);
                    self.v.copy_within(row * w..(row + 1) * w, dst * w);
                }
                dst += 1;
            }
        }
        self.m.truncate(dst * w);
        self.v.truncate(dst * w);
    }

    fn push_zero_rows(&mut self, n: usize) {
        let len = self.m.len() + n * self.width;
        self.m.resize(len, F::zero());
        self.v.resize(len, F::zero());
    }

    fn step(&mut self, params: &mut [F], grads: &[F], lr: F, bias: &Bias<F>) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        adam_update(params, grads, &mut self.m, &mut self.v, lr, bias);
    }
}

pub(crate) struct Bias<F> {
    beta1: F,
    beta2: F,
    eps: F,
    correction1: F,
    correction2: F,
}

impl<F: Real> Bias<F> {
    pub(crate) fn new(cfg: &AdamConfig, step: u64) -> Self {
        let t = step as i32;
        Bias {
            beta1: F::lit(cfg.beta1),
            beta2: F::lit(cfg.beta2),
            eps: F::lit(cfg.eps),
            correction1: F::lit(1.0 - cfg.beta1.powi(t)),
            correction2: F::lit(1.0 - cfg.beta2.powi(t)),
        }
    }
}

/// One Adam update over a flat slice.
pub(crate) fn adam_update<F: Real>(
    params: &mut [F],
    grads: &[F],
    m: &mut [F],
    v: &mut [F],
    lr: F,
    b: &Bias<F>,
) {
    let one = F::one();
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b.beta1 * m[i] + (one - b.beta1) * g;
        v[i] = b.beta2 * v[i] + (one - b.beta2) * g * g;
        let m_hat = m[i] / b.correction1;
        let v_hat = v[i] / b.correction2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + b.eps);
    }
}

fn flat3<F>(v: &[[F; 3]]) -> &[F] {
    v.as_flattened()
}

fn flat3_mut<F>(v: &mut [[F; 3]]) -> &mut [F] {
    v.as_flattened_mut()
}

/// Optimizer state for a whole scene.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    step: u64,
    pub means: Moments<F>,
    pub rotations: Moments<F>,
    pub log_scales: Moments<F>,
    pub opacity: Moments<F>,
    pub sh: Moments<F>,
    pub semantics: Moments<F>,
    pub head_weights: Moments<F>,
    pub head_bias: Moments<F>,
}

impl<F: Real> AdamState<F> {
    pub fn new(scene: &Scene<F>, config: AdamConfig) -> Self {
        let n = scene.len();
        let k = scene.head.num_classes();
        AdamState {
            config,
            step: 0,
            means: Moments::new(n, 3),
            rotations: Moments::new(n, 4),
            log_scales: Moments::new(n, 3),
            opacity: Moments::new(n, 1),
            sh: Moments::new(n, scene.gaussians.sh_stride()),
            semantics: Moments::new(n, 3),
            head_weights: Moments::new(k, 3),
            head_bias: Moments::new(k, 1),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Number of Gaussian rows tracked.
    pub fn rows(&self) -> usize {
        self.means.rows()
    }

    pub fn retain_rows(&mut self, keep: &[bool]) {
        for g in self.gaussian_groups() {
            g.retain_rows(keep);
        }
    }

    /// Appends zeroed moments for `n` new Gaussians.
    pub fn push_rows(&mut self, n: usize) {
        for g in self.gaussian_groups() {
            g.push_zero_rows(n);
        }
    }

    fn gaussian_groups(&mut self) -> [&mut Moments<F>; 6] {
        [
            &mut self.means,
            &mut self.rotations,
            &mut self.log_scales,
            &mut self.opacity,
            &mut self.sh,
            &mut self.semantics,
        ]
    }

    /// Applies one Adam step to every parameter group, then renormalizes
    /// the quaternions.
    pub fn step(&mut self, scene: &mut Scene<F>, grads: &GradientBuffer<F>, lr: &LearningRates) {
        assert_eq!(self.rows(), scene.len(), "optimizer rows out of sync with scene");
        self.step += 1;
        let b = Bias::new(&self.config, self.step);
        let g = &mut scene.gaussians;
        let lr_means = F::lit(lr.means_at(self.step as usize - 1));
        self.means.step(flat3_mut(&mut g.means), flat3(&grads.means), lr_means, &b);
        self.rotations.step(
            g.rotations.as_flattened_mut(),
            grads.rotations.as_flattened(),
            F::lit(lr.rotations),
            &b,
        );
        self.log_scales.step(
            flat3_mut(&mut g.log_scales),
            flat3(&grads.log_scales),
            F::lit(lr.log_scales),
            &b,
        );
        self.opacity.step(&mut g.opacity_logits, &grads.opacity_logits, F::lit(lr.opacity), &b);
        self.sh.step(&mut g.sh, &grads.sh, F::lit(lr.sh), &b);
        self.semantics.step(
            flat3_mut(&mut g.semantics),
            flat3(&grads.semantics),
            F::lit(lr.semantics),
            &b,
        );
        self.head_weights.step(
            flat3_mut(&mut scene.head.weights),
            flat3(&grads.head_weights),
            F::lit(lr.head),
            &b,
        );
        self.head_bias.step(&mut scene.head.bias, &grads.head_bias, F::lit(lr.head), &b);
        for q in g.rotations.iter_mut() {
            math::normalize_quat(q);
        }
    }
}
