//! Image- and segmentation-quality metrics.
//!
//! Images are interleaved `HxWxC` slices described by [`Dims`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Real;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Dims {
            width,
            height,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_shape<F>(a: &[F], b: &[F], dims: Dims) -> Result<()> {
    if a.len() != dims.len() || b.len() != dims.len() {
        return Err(Error::invalid(format!(
            "image shape mismatch: {} and {} values for {}x{}x{}",
            a.len(),
            b.len(),
            dims.width,
            dims.height,
            dims.channels
        )));
    }
    Ok(())
}

pub fn mse<F: Real>(a: &[F], b: &[F]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid("image shape mismatch"));
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10·log10(1/MSE)` for images in `[0,1]`, capped at [`PSNR_CAP`].
pub fn psnr<F: Real>(a: &[F], b: &[F]) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" filtering of a single-channel `w×h` plane.
fn filter_valid<F: Real>(src: &[F], w: usize, h: usize, win: &[F; SSIM_WINDOW]) -> Vec<F> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut tmp = vec![F::zero(); ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            let mut s = F::zero();
            for (k, &c) in win.iter().enumerate() {
                s += c * row[x + k];
            }
            tmp[y * ow + x] = s;
        }
    }
    let mut out = vec![F::zero(); ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = F::zero();
            for (k, &c) in win.iter().enumerate() {
                s += c * tmp[(y + k) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters an output-sized map back onto the
/// `w×h` input grid.
fn filter_adjoint<F: Real>(map: &[F], w: usize, h: usize, win: &[F; SSIM_WINDOW]) -> Vec<F> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut tmp = vec![F::zero(); ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = map[y * ow + x];
            for (k, &c) in win.iter().enumerate() {
                tmp[(y + k) * ow + x] += c * v;
            }
        }
    }
    let mut out = vec![F::zero(); w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for (k, &c) in win.iter().enumerate() {
                out[y * w + x + k] += c * v;
            }
        }
    }
    out
}

fn channel_plane<F: Real>(img: &[F], dims: Dims, c: usize) -> Vec<F> {
    img.iter().skip(c).step_by(dims.channels).copied().collect()
}

fn ssim_impl<F: Real>(a: &[F], b: &[F], dims: Dims, want_grad: bool) -> Result<(F, Option<Vec<F>>)> {
    check_shape(a, b, dims)?;
    if dims.width < SSIM_WINDOW || dims.height < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "image {}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window",
            dims.width, dims.height
        )));
    }
    if dims.channels == 0 {
        return Err(Error::invalid("image has no channels"));
    }
    let win = gaussian_window().map(F::lit);
    let (w, h) = (dims.width, dims.height);
    let count = (w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW);
    let norm = F::one() / F::lit((count * dims.channels) as f64);
    let c1 = F::lit(SSIM_C1);
    let c2 = F::lit(SSIM_C2);
    let two = F::lit(2.0);

    let mut total = F::zero();
    let mut grad = want_grad.then(|| vec![F::zero(); a.len()]);
    for c in 0..dims.channels {
        let x = channel_plane(a, dims, c);
        let y = channel_plane(b, dims, c);
        let xx: Vec<F> = x.iter().map(|&v| v * v).collect();
        let yy: Vec<F> = y.iter().map(|&v| v * v).collect();
        let xy: Vec<F> = x.iter().zip(&y).map(|(&p, &q)| p * q).collect();
        let mu_x = filter_valid(&x, w, h, &win);
        let mu_y = filter_valid(&y, w, h, &win);
        let e_xx = filter_valid(&xx, w, h, &win);
        let e_yy = filter_valid(&yy, w, h, &win);
        let e_xy = filter_valid(&xy, w, h, &win);

        let mut d_mu = vec![F::zero(); count];
        let mut d_yy = vec![F::zero(); count];
        let mut d_xy = vec![F::zero(); count];
        for p in 0..count {
            let (mx, my) = (mu_x[p], mu_y[p]);
            let var_x = e_xx[p] - mx * mx;
            let var_y = e_yy[p] - my * my;
            let cov = e_xy[p] - mx * my;
            let n1 = two * mx * my + c1;
            let n2 = two * cov + c2;
            let d1 = mx * mx + my * my + c1;
            let d2 = var_x + var_y + c2;
            let f = (n1 * n2) / (d1 * d2);
            total += f;
            if want_grad {
                // ∂f/∂μy, ∂f/∂σy², ∂f/∂σxy at this window
                let df_dmu = (two * mx * n2) / (d1 * d2) - f * two * my / d1;
                let df_dvar = -f / d2;
                let df_dcov = two * n1 / (d1 * d2);
                // σy² = E[y²] − μy², σxy = E[xy] − μxμy
                d_mu[p] = (df_dmu - two * df_dvar * my - df_dcov * mx) * norm;
                d_yy[p] = df_dvar * norm;
                d_xy[p] = df_dcov * norm;
            }
        }
        if let Some(g) = grad.as_mut() {
            let g_mu = filter_adjoint(&d_mu, w, h, &win);
            let g_yy = filter_adjoint(&d_yy, w, h, &win);
            let g_xy = filter_adjoint(&d_xy, w, h, &win);
            for i in 0..w * h {
                g[i * dims.channels + c] = g_mu[i] + two * y[i] * g_yy[i] + x[i] * g_xy[i];
            }
        }
    }
    Ok((total * norm, grad))
}

/// Windowed SSIM (11×11 Gaussian window, σ = 1.5, valid region only),
/// averaged over channels.
pub fn ssim<F: Real>(a: &[F], b: &[F], dims: Dims) -> Result<F> {
    Ok(ssim_impl(a, b, dims, false)?.0)
}

/// SSIM and its gradient with respect to `b`.
pub fn ssim_with_grad<F: Real>(a: &[F], b: &[F], dims: Dims) -> Result<(F, Vec<F>)> {
    let (s, g) = ssim_impl(a, b, dims, true)?;
    Ok((s, g.expect("gradient requested")))
}

/// D-SSIM `(1 − SSIM)/2` and its gradient with respect to `b`.
pub fn dssim_with_grad<F: Real>(a: &[F], b: &[F], dims: Dims) -> Result<(F, Vec<F>)> {
    let (s, mut g) = ssim_with_grad(a, b, dims)?;
    let half = F::lit(0.5);
    for v in g.iter_mut() {
        *v = -half * *v;
    }
    Ok((half * (F::one() - s), g))
}

/// Mean over queries of |pred ∩ gt| / |pred ∪ gt|; a query with both masks
/// empty scores 1.
pub fn miou(pred: &[Vec<bool>], gt: &[Vec<bool>]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "{} predicted masks vs {} ground-truth masks",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("no masks to compare"));
    }
    let mut sum = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        sum += iou(p, g)?;
    }
    Ok(sum / pred.len() as f64)
}

pub fn iou(pred: &[bool], gt: &[bool]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::invalid("mask shape mismatch"));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.iter().zip(gt) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub correct: usize,
    pub evaluated: usize,
    pub skipped: usize,
}

impl Localization {
    pub fn accuracy(&self) -> Option<f64> {
        (self.evaluated > 0).then(|| self.correct as f64 / self.evaluated as f64)
    }
}

/// Fraction of queries whose highest-relevancy pixel lies inside the
/// ground-truth mask. Queries with an empty mask are skipped.
pub fn localization_accuracy<F: Real>(relevancy_maps: &[Vec<F>], gt_masks: &[Vec<bool>]) -> Result<Localization> {
    if relevancy_maps.len() != gt_masks.len() {
        return Err(Error::invalid("one relevancy map is required per query"));
    }
    let mut out = Localization {
        correct: 0,
        evaluated: 0,
        skipped: 0,
    };
    for (q, (map, mask)) in relevancy_maps.iter().zip(gt_masks).enumerate() {
        if map.len() != mask.len() {
            return Err(Error::invalid(format!("query {q}: relevancy map and mask differ in size")));
        }
        if !mask.iter().any(|&m| m) {
            log::warn!("localization: query {q} has an empty ground-truth mask, skipped");
            out.skipped += 1;
            continue;
        }
        let mut best = 0;
        for (i, v) in map.iter().enumerate() {
            if *v > map[best] {
                best = i;
            }
        }
        out.evaluated += 1;
        out.correct += mask[best] as usize;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    #[test]
    fn psnr_identities() {
        let a = vec![0.25f64; 48];
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &b[..10]).is_err());
    }

    #[test]
    fn psnr_matches_direct_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 300);
        let b = random_image(&mut rng, 300);
        let mut s = 0.0;
        for i in 0..300 {
            s += (a[i] - b[i]) * (a[i] - b[i]);
        }
        let want = -10.0 * (s / 300.0).log10();
        assert!((psnr(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let a = vec![0.5f64; 64];
        let mut last = f64::INFINITY;
        for k in 1..10 {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.04 } else { -0.04 } * k as f64).collect();
            let p = psnr(&a, &b).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_self_is_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = Dims::new(20, 17, 3);
        let x = random_image(&mut rng, dims.len());
        assert_eq!(ssim(&x, &x, dims).unwrap(), 1.0);
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        assert_eq!(ssim(&x32, &x32, dims).unwrap(), 1.0);
    }

    #[test]
    fn ssim_of_inverse_is_below_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = Dims::new(16, 16, 1);
        let x: Vec<f64> = (0..dims.len())
            .map(|_| {
                let v: f64 = rng.random_range(0.0..0.4);
                if rng.random_bool(0.5) { v } else { 1.0 - v }
            })
            .collect();
        let inv: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        assert!(ssim(&x, &inv, dims).unwrap() < 1.0);
    }

    #[test]
    fn ssim_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dims = Dims::new(24, 13, 3);
        let a = random_image(&mut rng, dims.len());
        let b = random_image(&mut rng, dims.len());
        let ab = ssim(&a, &b, dims).unwrap();
        let ba = ssim(&b, &a, dims).unwrap();
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let dims = Dims::new(10, 20, 1);
        let a = vec![0.0f64; dims.len()];
        assert!(ssim(&a, &a, dims).is_err());
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = Dims::new(16, 16, 3);
        let a = random_image(&mut rng, dims.len());
        let b = random_image(&mut rng, dims.len());
        let (_, g) = dssim_with_grad(&a, &b, dims).unwrap();
        let h = 1e-6;
        for i in (0..dims.len()).step_by(7) {
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[i] += h;
            bm[i] -= h;
            let fp = dssim_with_grad(&a, &bp, dims).unwrap().0;
            let fm = dssim_with_grad(&a, &bm, dims).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "i={i} fd={fd} an={}", g[i]);
        }
    }

    #[test]
    fn miou_identities() {
        let m = vec![true, true, false, false];
        assert_eq!(miou(std::slice::from_ref(&m), std::slice::from_ref(&m)).unwrap(), 1.0);
        let d = vec![false, false, true, true];
        assert_eq!(miou(std::slice::from_ref(&m), &[d]).unwrap(), 0.0);
        // Two masks of area 2 sharing one pixel: IoU = 1/3.
        let a = vec![true, true, false, false];
        let b = vec![false, true, true, false];
        assert_eq!(miou(&[a], &[b]).unwrap(), 1.0 / 3.0);
        assert_eq!(miou(&[vec![false; 4]], &[vec![false; 4]]).unwrap(), 1.0);
        assert!(miou(&[vec![true]], &[vec![true, false]]).is_err());
    }

    #[test]
    fn miou_invariant_to_query_order() {
        let p = vec![vec![true, false, true], vec![false, true, true], vec![true, true, true]];
        let g = vec![vec![true, false, false], vec![false, true, false], vec![true, false, true]];
        let base = miou(&p, &g).unwrap();
        let pr = vec![p[2].clone(), p[0].clone(), p[1].clone()];
        let gr = vec![g[2].clone(), g[0].clone(), g[1].clone()];
        assert!((miou(&pr, &gr).unwrap() - base).abs() < 1e-15);
    }

    #[test]
    fn localization_counts() {
        let gt = vec![vec![false, true, true, false], vec![true, false, false, false], vec![false; 4]];
        let maps = vec![
            gt[0].iter().map(|&b| b as u8 as f64).collect::<Vec<_>>(),
            vec![0.1, 0.2, 0.9, 0.3],
            vec![1.0, 0.0, 0.0, 0.0],
        ];
        let r = localization_accuracy(&maps, &gt).unwrap();
        assert_eq!(r, Localization { correct: 1, evaluated: 2, skipped: 1 });
        assert_eq!(r.accuracy(), Some(0.5));
    }

    #[test]
    fn localization_matches_enumeration() {
        // 3x3 maps, peak positions enumerated by hand:
        // q0 peak at 4 (mask {3,4,5}) -> hit; q1 peak at 0 (mask {8}) -> miss;
        // q2 peak at 8 (mask {6,7,8}) -> hit; q3 peak at 2 (mask {0,1}) -> miss.
        let mut maps = vec![vec![0.0f32; 9]; 4];
        maps[0][4] = 1.0;
        maps[1][0] = 0.7;
        maps[2][8] = 0.2;
        maps[3][2] = 0.5;
        let mk = |idx: &[usize]| (0..9).map(|i| idx.contains(&i)).collect::<Vec<_>>();
        let gt = vec![mk(&[3, 4, 5]), mk(&[8]), mk(&[6, 7, 8]), mk(&[0, 1])];
        let r = localization_accuracy(&maps, &gt).unwrap();
        assert_eq!(r.accuracy(), Some(0.5));
    }
}
