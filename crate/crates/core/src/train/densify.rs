//! Adaptive density control: clone, split, prune and opacity reset.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::backward::GradientBuffer;
use crate::error::{Error, Result};
use crate::math::{self, Real};
use crate::model::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensifyConfig {
    pub enabled: bool,
    /// First iteration at which densification may run.
    pub start: usize,
    /// Densification stops after this iteration.
    pub stop: usize,
    pub interval: usize,
    /// Mean view-space positional gradient above which a Gaussian densifies.
    pub grad_threshold: f64,
    /// Gaussians whose largest scale exceeds this fraction of the scene
    /// extent are split, smaller ones cloned.
    pub percent_dense: f64,
    pub split_samples: usize,
    pub split_scale_divisor: f64,
    pub prune_opacity: f64,
    /// 0 disables opacity reset.
    pub opacity_reset_interval: usize,
    pub opacity_reset_value: f64,
    /// Hard cap on the number of Gaussians; densification is skipped above it.
    pub max_gaussians: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            enabled: true,
            start: 500,
            stop: 15_000,
            interval: 100,
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            split_samples: 2,
            split_scale_divisor: 1.6,
            prune_opacity: 0.005,
            opacity_reset_interval: 3000,
            opacity_reset_value: 0.01,
            max_gaussians: 5_000_000,
        }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enabled && self.interval == 0 {
            return Err(Error::Config("densify interval must be > 0".into()));
        }
        if !(self.grad_threshold >= 0.0) || !(self.percent_dense > 0.0) {
            return Err(Error::Config("densify thresholds must be positive".into()));
        }
        if self.split_samples == 0 || !(self.split_scale_divisor > 1.0) {
            return Err(Error::Config("split needs ≥1 sample and a divisor > 1".into()));
        }
        if !(0.0..1.0).contains(&self.prune_opacity) || !(0.0..1.0).contains(&self.opacity_reset_value) {
            return Err(Error::Config("opacity thresholds must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Whether densification runs after `iteration` (1-based count of
    /// completed iterations).
    pub fn due(&self, iteration: usize) -> bool {
        self.enabled
            && iteration >= self.start
            && iteration <= self.stop
            && iteration.is_multiple_of(self.interval)
    }

    pub fn reset_due(&self, iteration: usize) -> bool {
        self.enabled
            && self.opacity_reset_interval > 0
            && iteration <= self.stop
            && iteration.is_multiple_of(self.opacity_reset_interval)
    }
}

/// Running sum of view-space positional gradient norms per Gaussian.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensifyStats {
    pub grad_sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        DensifyStats {
            grad_sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    /// Adds one view's gradients. Pixel gradients are rescaled to NDC units
    /// so the threshold is resolution independent.
    pub fn accumulate<F: Real>(&mut self, grads: &GradientBuffer<F>, width: usize, height: usize) {
        let to_ndc = 0.5 * width.max(height) as f64;
        for i in 0..self.count.len() {
            if grads.visible[i] {
                self.grad_sum[i] += grads.mean2d_norm[i].as_f64() * to_ndc;
                self.count[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.grad_sum[i] / self.count[i] as f64
        }
    }

    pub fn reset(&mut self, n: usize) {
        *self = DensifyStats::new(n);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Radius of the bounding sphere of the Gaussian means around their
/// centroid, used to scale the split threshold.
pub fn scene_extent<F: Real>(scene: &Scene<F>) -> f64 {
    let n = scene.len();
    if n == 0 {
        return 1.0;
    }
    let mut c = [0.0f64; 3];
    for m in &scene.gaussians.means {
        for a in 0..3 {
            c[a] += m[a].as_f64() / n as f64;
        }
    }
    let r = scene
        .gaussians
        .means
        .iter()
        .map(|m| {
            let d = [m[0].as_f64() - c[0], m[1].as_f64() - c[1], m[2].as_f64() - c[2]];
            math::norm3(d)
        })
        .fold(0.0, f64::max);
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

/// Clones small and splits large high-gradient Gaussians, then prunes
/// near-transparent ones. New rows copy every attribute of their source,
/// including β; optimizer moments follow the surviving rows and start at
/// zero for new ones. Resets `stats` to the new size.
pub fn densify_and_prune<F: Real, R: Rng>(
    scene: &mut Scene<F>,
    state: &mut AdamState<F>,
    stats: &mut DensifyStats,
    cfg: &DensifyConfig,
    extent: f64,
    rng: &mut R,
) -> DensifyReport {
    let n = scene.len();
    assert_eq!(stats.count.len(), n, "densify stats out of sync with scene");
    let mut report = DensifyReport::default();
    let split_limit = cfg.percent_dense * extent;
    let g = &mut scene.gaussians;

    let mut split_src = Vec::new();
    // Net growth allowed before reaching `max_gaussians`; candidates are
    // taken in index order until it runs out.
    let mut budget = cfg.max_gaussians.saturating_sub(n);
    let split_growth = cfg.split_samples.saturating_sub(1);
    for i in 0..n {
        if stats.mean(i) < cfg.grad_threshold {
            continue;
        }
        let s = g.scale(i);
        let max_scale = s[0].max(s[1]).max(s[2]).as_f64();
        if max_scale <= split_limit {
            if budget == 0 {
                continue;
            }
            g.push_from_self(i);
            budget -= 1;
            report.cloned += 1;
        } else if split_growth <= budget {
            split_src.push(i);
            budget -= split_growth;
        }
    }
    let shrink = F::lit(cfg.split_scale_divisor.ln());
    for &i in &split_src {
        let r = math::quat_to_rotation(g.rotations[i]);
        let s = g.scale(i);
        for _ in 0..cfg.split_samples {
            let z: [F; 3] = std::array::from_fn(|a| F::lit(rng.sample::<f64, _>(StandardNormal)) * s[a]);
            let offset = math::mat_vec(&r, z);
            let row = g.len();
            g.push_from_self(i);
            g.means[row] = math::add3(g.means[i], offset);
            for a in 0..3 {
                g.log_scales[row][a] -= shrink;
            }
        }
        report.split += 1;
    }
    let added = g.len() - n;
    state.push_rows(added);

    let min_opacity = F::lit(cfg.prune_opacity);
    let mut keep: Vec<bool> = (0..g.len()).map(|i| g.opacity(i) >= min_opacity).collect();
    for &i in &split_src {
        keep[i] = false;
    }
    report.pruned = keep.iter().filter(|k| !**k).count() - split_src.len();
    g.retain_rows(&keep);
    state.retain_rows(&keep);
    stats.reset(g.len());
    report
}

/// Prunes Gaussians with opacity below `min_opacity` only.
pub fn prune<F: Real>(scene: &mut Scene<F>, state: &mut AdamState<F>, min_opacity: f64) -> usize {
    let g = &mut scene.gaussians;
    let t = F::lit(min_opacity);
    let keep: Vec<bool> = (0..g.len()).map(|i| g.opacity(i) >= t).collect();
    let removed = keep.iter().filter(|k| !**k).count();
    g.retain_rows(&keep);
    state.retain_rows(&keep);
    removed
}

/// Caps every opacity at `value` and clears the opacity moments.
pub fn reset_opacity<F: Real>(scene: &mut Scene<F>, state: &mut AdamState<F>, value: f64) {
    let cap = math::logit(F::lit(value));
    for l in scene.gaussians.opacity_logits.iter_mut() {
        *l = l.min(cap);
    }
    let n = state.opacity.rows();
    state.opacity = super::adam::Moments::new(n, 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmbeddingTable, GaussianSoA, SemanticDictionary, SemanticHead};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene(opacities: &[f64], log_scale: f64) -> Scene<f64> {
        let mut g = GaussianSoA::new(0);
        for (i, &o) in opacities.iter().enumerate() {
            g.push(
                [i as f64, 0.0, 5.0],
                [1.0, 0.0, 0.0, 0.0],
                [log_scale; 3],
                math::logit(o),
                &[0.1, 0.2, 0.3],
                [i as f64, -1.5, 0.25],
            );
        }
        let dict = SemanticDictionary::new(["a"]).unwrap();
        let emb = EmbeddingTable::from_unnormalized(2, vec![1.0, 0.0], vec![0.0, 1.0], vec!["object".into()]).unwrap();
        Scene::new(g, SemanticHead::zeros(2), dict, emb, [0.0; 3]).unwrap()
    }

    fn stats_with(n: usize, hot: &[usize], value: f64) -> DensifyStats {
        let mut s = DensifyStats::new(n);
        for &i in hot {
            s.grad_sum[i] = value;
            s.count[i] = 1;
        }
        s
    }

    #[test]
    fn below_threshold_only_prunes() {
        let mut sc = scene(&[0.5, 0.9, 0.3], -3.0);
        let mut st = AdamState::new(&sc, Default::default());
        let mut stats = stats_with(3, &[0, 1, 2], 1e-5);
        let r = densify_and_prune(&mut sc, &mut st, &mut stats, &DensifyConfig::default(), 10.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(r, DensifyReport::default());
        assert_eq!(sc.len(), 3);
    }

    #[test]
    fn single_clone_copies_semantics() {
        let mut sc = scene(&[0.5, 0.9], -5.0);
        let mut st = AdamState::new(&sc, Default::default());
        let mut stats = stats_with(2, &[1], 1e-3);
        let r = densify_and_prune(&mut sc, &mut st, &mut stats, &DensifyConfig::default(), 10.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(r.cloned, 1);
        assert_eq!(r.split, 0);
        assert_eq!(sc.len(), 3);
        let g = &sc.gaussians;
        assert_eq!(g.semantics[2], g.semantics[1]);
        assert_eq!(g.means[2], g.means[1]);
        assert_eq!(st.rows(), 3);
        assert_eq!(stats.count.len(), 3);
    }

    #[test]
    fn split_replaces_source_with_smaller_children() {
        let mut sc = scene(&[0.5, 0.9], 0.0);
        let mut st = AdamState::new(&sc, Default::default());
        let mut stats = stats_with(2, &[0], 1e-3);
        let r = densify_and_prune(&mut sc, &mut st, &mut stats, &DensifyConfig::default(), 10.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(r.split, 1);
        assert_eq!(sc.len(), 3);
        let g = &sc.gaussians;
        for i in 1..3 {
            assert_eq!(g.semantics[i], [0.0, -1.5, 0.25]);
            assert!((g.log_scales[i][0] + 1.6f64.ln()).abs() < 1e-12);
        }
        // Total squared extent stays within a factor 2 of the source.
        let children: f64 = (1..3).map(|i| g.scale(i)[0].powi(2)).sum();
        assert!(children > 0.5 && children < 2.0);
    }

    #[test]
    fn prune_compacts_optimizer_state() {
        let mut sc = scene(&[0.5, 0.001, 0.9], -3.0);
        let mut st = AdamState::new(&sc, Default::default());
        st.means = {
            let mut m = super::super::adam::Moments::new(3, 3);
            let grads = GradientBuffer {
                means: vec![[1.0; 3], [2.0; 3], [3.0; 3]],
                ..GradientBuffer::zeros(&sc.gaussians, 2)
            };
            let mut dummy = sc.clone();
            let mut s2 = AdamState::new(&dummy, Default::default());
            s2.step(&mut dummy, &grads, &Default::default());
            m.clone_from(&s2.means);
            m
        };
        let before = st.means.first().to_vec();
        let removed = prune(&mut sc, &mut st, 0.005);
        assert_eq!(removed, 1);
        assert_eq!(sc.len(), 2);
        assert_eq!(st.rows(), 2);
        assert_eq!(st.means.first()[..3], before[..3]);
        assert_eq!(st.means.first()[3..], before[6..]);
        assert!(sc.gaussians.opacity(1) > 0.8);
    }

    #[test]
    fn growth_stops_at_max_gaussians() {
        let mut sc = scene(&[0.5, 0.6, 0.7, 0.8], -5.0);
        let mut st = AdamState::new(&sc, Default::default());
        let mut stats = stats_with(4, &[0, 1, 2, 3], 1e-3);
        let cfg = DensifyConfig {
            max_gaussians: 6,
            ..DensifyConfig::default()
        };
        let r = densify_and_prune(&mut sc, &mut st, &mut stats, &cfg, 10.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(r.cloned, 2);
        assert_eq!(sc.len(), 6);
        assert_eq!(st.rows(), 6);
    }

    #[test]
    fn opacity_reset_caps() {
        let mut sc = scene(&[0.5, 0.001], -3.0);
        let mut st = AdamState::new(&sc, Default::default());
        reset_opacity(&mut sc, &mut st, 0.01);
        assert!((sc.gaussians.opacity(0) - 0.01).abs() < 1e-12);
        assert!((sc.gaussians.opacity(1) - 0.001).abs() < 1e-12);
    }
}
