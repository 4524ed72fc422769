use rayon::prelude::*;

use super::project::{self, depth_sort, splat_alpha, CameraF, ProjectedGaussian};
use super::{pixel_center, PixelAccum, RenderOptions, RenderOutput};
use crate::math::Real;
use crate::model::{Camera, Scene};

/// Projected, depth-sorted splats binned into screen tiles. Shared between
/// the forward pass and the backward pass so both see identical lists.
#[derive(Debug, Clone)]
pub(crate) struct Prepared<F> {
    pub splats: Vec<ProjectedGaussian<F>>,
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// `tile_items[tile_offsets[t]..tile_offsets[t + 1]]` are indices into
    /// `splats`, front to back.
    pub tile_offsets: Vec<usize>,
    pub tile_items: Vec<u32>,
    pub width: usize,
    pub height: usize,
    pub min_alpha: F,
    pub min_transmittance: F,
}

impl<F: Real> Prepared<F> {
    pub fn num_tiles(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    pub fn tile_list(&self, tile: usize) -> &[u32] {
        &self.tile_items[self.tile_offsets[tile]..self.tile_offsets[tile + 1]]
    }

    /// Pixel rectangle `(x0, y0, x1, y1)` of a tile, exclusive upper bounds.
    pub fn tile_rect(&self, tile: usize) -> (usize, usize, usize, usize) {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (
            x0,
            y0,
            (x0 + self.tile_size).min(self.width),
            (y0 + self.tile_size).min(self.height),
        )
    }
}

/// Inclusive range of tile indices along one axis whose pixel centers can
/// fall within `radius` of `center`.
fn tile_span<F: Real>(center: F, radius: F, tile_size: usize, tiles: usize) -> Option<(usize, usize)> {
    let r = radius * F::lit(1.001) + F::lit(1e-3);
    let lo = (center - r - F::lit(0.5)).ceil();
    let hi = (center + r - F::lit(0.5)).floor();
    if hi < F::zero() || lo > F::lit((tiles * tile_size) as f64 - 1.0) || lo > hi {
        return None;
    }
    let lo = lo.max(F::zero()).as_f64() as usize / tile_size;
    let hi = (hi.as_f64() as usize / tile_size).min(tiles - 1);
    Some((lo, hi))
}

pub(crate) fn prepare<F: Real>(scene: &Scene<F>, camera: &Camera, opts: &RenderOptions) -> Prepared<F> {
    let cam = CameraF::<F>::new(camera);
    let degree = opts
        .sh_degree
        .unwrap_or(scene.sh_degree())
        .min(scene.sh_degree());
    let min_alpha = F::lit(opts.min_alpha);
    let mut splats = project::project_all(&scene.gaussians, &cam, degree, min_alpha);
    depth_sort(&mut splats);

    let ts = opts.tile_size.max(1);
    let tiles_x = camera.width.div_ceil(ts);
    let tiles_y = camera.height.div_ceil(ts);
    let spans: Vec<Option<((usize, usize), (usize, usize))>> = splats
        .iter()
        .map(|s| {
            let sx = tile_span(s.mean2d[0], s.radius, ts, tiles_x)?;
            let sy = tile_span(s.mean2d[1], s.radius, ts, tiles_y)?;
            Some((sx, sy))
        })
        .collect();

    let mut counts = vec![0usize; tiles_x * tiles_y + 1];
    for ((x0, x1), (y0, y1)) in spans.iter().flatten() {
        for ty in *y0..=*y1 {
            for tx in *x0..=*x1 {
                counts[ty * tiles_x + tx + 1] += 1;
            }
        }
    }
    for t in 1..counts.len() {
        counts[t] += counts[t - 1];
    }
    let mut cursor = counts.clone();
    let mut items = vec![0u32; *counts.last().unwrap()];
    for (k, span) in spans.iter().enumerate() {
        if let Some(((x0, x1), (y0, y1))) = span {
            for ty in *y0..=*y1 {
                for tx in *x0..=*x1 {
                    let t = ty * tiles_x + tx;
                    items[cursor[t]] = k as u32;
                    cursor[t] += 1;
                }
            }
        }
    }

    Prepared {
        splats,
        tile_size: ts,
        tiles_x,
        tiles_y,
        tile_offsets: counts,
        tile_items: items,
        width: camera.width,
        height: camera.height,
        min_alpha,
        min_transmittance: F::lit(opts.min_transmittance),
    }
}

struct TileResult<F> {
    pixels: Vec<(usize, PixelAccum<F>)>,
    contributors: Vec<Vec<usize>>,
}

pub(crate) fn render_prepared<F: Real>(
    prep: &Prepared<F>,
    background: [F; 3],
    record_contributors: bool,
) -> RenderOutput<F> {
    let tiles: Vec<TileResult<F>> = (0..prep.num_tiles())
        .into_par_iter()
        .map(|tile| {
            let (x0, y0, x1, y1) = prep.tile_rect(tile);
            let list = prep.tile_list(tile);
            let mut out = TileResult {
                pixels: Vec::with_capacity((x1 - x0) * (y1 - y0)),
                contributors: Vec::new(),
            };
            for y in y0..y1 {
                for x in x0..x1 {
                    let (px, py) = pixel_center::<F>(x, y);
                    let mut acc = PixelAccum::new();
                    let mut ids = Vec::new();
                    for &k in list {
                        let s = &prep.splats[k as usize];
                        if let Some((alpha, ..)) = splat_alpha(s, px, py, prep.min_alpha) {
                            acc.add(s, alpha);
                            if record_contributors {
                                ids.push(s.id);
                            }
                            if acc.transmittance < prep.min_transmittance {
                                break;
                            }
                        }
                    }
                    out.pixels.push((y * prep.width + x, acc));
                    if record_contributors {
                        out.contributors.push(ids);
                    }
                }
            }
            out
        })
        .collect();

    let mut image = RenderOutput::blank(prep.width, prep.height, record_contributors);
    for tile in tiles {
        for (k, (pixel, acc)) in tile.pixels.iter().enumerate() {
            acc.write(&mut image, *pixel, background);
            if let Some(c) = image.contributors.as_mut() {
                c[*pixel] = tile.contributors[k].clone();
            }
        }
    }
    image
}

/// Renders with the default options.
pub fn render<F: Real>(scene: &Scene<F>, camera: &Camera) -> RenderOutput<F> {
    render_with(scene, camera, &RenderOptions::default())
}

pub fn render_with<F: Real>(scene: &Scene<F>, camera: &Camera, opts: &RenderOptions) -> RenderOutput<F> {
    let prep = prepare(scene, camera, opts);
    render_prepared(&prep, scene.background, opts.record_contributors)
}
