//! Tile-based forward rendering of color, alpha, depth and blended semantic
//! features, plus a naive per-pixel renderer used as a correctness oracle.
//!
//! Per pixel, splats are composited front to back:
//!
//! ```text
//! C = Σᵢ cᵢ αᵢ Tᵢ + T_final · background,   Tᵢ = Πⱼ<ᵢ (1 − αⱼ)
//! F = Σᵢ βᵢ αᵢ Tᵢ                           (zero background)
//! ```
//!
//! with `αᵢ = opacityᵢ · exp(−½ dᵀ Σ₂⁻¹ d)`. Splat alphas below
//! [`DEFAULT_MIN_ALPHA`] are treated as zero by every renderer and by the
//! backward pass. The tiled renderer additionally stops compositing a pixel
//! once its transmittance drops below [`DEFAULT_MIN_TRANSMITTANCE`]; the
//! naive renderer never stops early.

pub mod naive;
pub mod project;
mod tiled;

pub use naive::render_naive;
pub use project::{project, ProjectedGaussian};
pub use tiled::{render, render_with};
pub(crate) use tiled::{prepare, render_prepared, Prepared};

use crate::math::Real;

pub const DEFAULT_TILE_SIZE: usize = 16;
pub const DEFAULT_MIN_ALPHA: f64 = 1.0 / 255.0;
pub const DEFAULT_MIN_TRANSMITTANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub tile_size: usize,
    pub min_alpha: f64,
    /// Compositing of a pixel stops once transmittance falls below this.
    pub min_transmittance: f64,
    /// Overrides the SH degree used for color (degree warmup).
    pub sh_degree: Option<usize>,
    /// Record the ids of contributing Gaussians per pixel (debugging).
    pub record_contributors: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            tile_size: DEFAULT_TILE_SIZE,
            min_alpha: DEFAULT_MIN_ALPHA,
            min_transmittance: DEFAULT_MIN_TRANSMITTANCE,
            sh_degree: None,
            record_contributors: false,
        }
    }
}

/// Rendered maps, row-major; `color` and `feature` are interleaved `HxWx3`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput<F> {
    pub width: usize,
    pub height: usize,
    pub color: Vec<F>,
    pub alpha: Vec<F>,
    /// Alpha-weighted expected depth (zero where nothing was hit).
    pub depth: Vec<F>,
    pub feature: Vec<F>,
    pub contributors: Option<Vec<Vec<usize>>>,
}

impl<F: Real> RenderOutput<F> {
    pub(crate) fn blank(width: usize, height: usize, record: bool) -> Self {
        let n = width * height;
        RenderOutput {
            width,
            height,
            color: vec![F::zero(); n * 3],
            alpha: vec![F::zero(); n],
            depth: vec![F::zero(); n],
            feature: vec![F::zero(); n * 3],
            contributors: record.then(|| vec![Vec::new(); n]),
        }
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn color_at(&self, x: usize, y: usize) -> [F; 3] {
        let i = (y * self.width + x) * 3;
        [self.color[i], self.color[i + 1], self.color[i + 2]]
    }

    pub fn feature_at(&self, x: usize, y: usize) -> [F; 3] {
        let i = (y * self.width + x) * 3;
        [self.feature[i], self.feature[i + 1], self.feature[i + 2]]
    }

    /// Largest absolute difference across color, alpha, depth and feature.
    pub fn max_abs_diff(&self, other: &RenderOutput<F>) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let d = |a: &[F], b: &[F]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
                .fold(0.0, f64::max)
        };
        d(&self.color, &other.color)
            .max(d(&self.alpha, &other.alpha))
            .max(d(&self.feature, &other.feature))
    }
}

/// Result of compositing one pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PixelAccum<F> {
    pub color: [F; 3],
    pub feature: [F; 3],
    pub transmittance: F,
    pub depth_sum: F,
}

impl<F: Real> PixelAccum<F> {
    pub fn new() -> Self {
        PixelAccum {
            color: [F::zero(); 3],
            feature: [F::zero(); 3],
            transmittance: F::one(),
            depth_sum: F::zero(),
        }
    }

    #[inline(always)]
    pub fn add(&mut self, s: &ProjectedGaussian<F>, alpha: F) {
        let w = alpha * self.transmittance;
        for c in 0..3 {
            self.color[c] += s.color[c] * w;
            self.feature[c] += s.feature[c] * w;
        }
        self.depth_sum += s.depth * w;
        self.transmittance *= F::one() - alpha;
    }

    pub fn write(&self, out: &mut RenderOutput<F>, pixel: usize, background: [F; 3]) {
        let t = self.transmittance;
        for c in 0..3 {
            out.color[pixel * 3 + c] = self.color[c] + t * background[c];
            out.feature[pixel * 3 + c] = self.feature[c];
        }
        let a = F::one() - t;
        out.alpha[pixel] = a;
        out.depth[pixel] = if a > F::zero() { self.depth_sum / a } else { F::zero() };
    }
}

#[inline(always)]
pub(crate) fn pixel_center<F: Real>(x: usize, y: usize) -> (F, F) {
    (F::lit(x as f64 + 0.5), F::lit(y as f64 + 0.5))
}
