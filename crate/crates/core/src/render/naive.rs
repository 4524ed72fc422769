//! Reference renderer: one global depth sort, every pixel visits every splat,
//! no tiling and no early termination.

use rayon::prelude::*;

use super::project::{self, depth_sort, splat_alpha, CameraF};
use super::{pixel_center, PixelAccum, RenderOptions, RenderOutput};
use crate::math::Real;
use crate::model::{Camera, Scene};

pub fn render_naive<F: Real>(scene: &Scene<F>, camera: &Camera) -> RenderOutput<F> {
    let opts = RenderOptions::default();
    let cam = CameraF::<F>::new(camera);
    let min_alpha = F::lit(opts.min_alpha);
    let mut splats = project::project_all(&scene.gaussians, &cam, scene.sh_degree(), min_alpha);
    depth_sort(&mut splats);

    let (w, h) = (camera.width, camera.height);
    let rows: Vec<Vec<PixelAccum<F>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let (px, py) = pixel_center::<F>(x, y);
                    let mut acc = PixelAccum::new();
                    for s in &splats {
                        if let Some((alpha, ..)) = splat_alpha(s, px, py, min_alpha) {
                            acc.add(s, alpha);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();

    let mut image = RenderOutput::blank(w, h, false);
    for (y, row) in rows.iter().enumerate() {
        for (x, acc) in row.iter().enumerate() {
            acc.write(&mut image, y * w + x, scene.background);
        }
    }
    image
}
