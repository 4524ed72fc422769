use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Real, Vec3};
use crate::metrics::{self, Dims};
use crate::model::SemanticHead;
use crate::render::RenderOutput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of D-SSIM against L1 in the photometric loss.
    pub lambda_dssim: f64,
    /// Cross-entropy weight for pixels carrying a dictionary label.
    pub gamma_labeled: f64,
    /// Cross-entropy weight for undetected pixels.
    pub gamma_undetected: f64,
    /// Multiplier on the cross-entropy term of the joint loss.
    pub semantic_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_dssim: 0.2,
            gamma_labeled: 1.0,
            gamma_undetected: 0.1,
            semantic_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(Error::Config(format!("lambda_dssim {} outside [0,1]", self.lambda_dssim)));
        }
        if !(self.gamma_labeled >= 0.0 && self.gamma_undetected >= 0.0) {
            return Err(Error::Config("pixel weights must be non-negative".into()));
        }
        if !(self.semantic_weight >= 0.0) {
            return Err(Error::Config("semantic_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PhotometricLoss<F> {
    pub loss: F,
    pub l1: F,
    pub dssim: F,
    /// dLoss/d(rendered color), interleaved `HxWx3`.
    pub grad: Vec<F>,
}

/// `(1−λ)·mean|I−Î| + λ·(1−SSIM(I,Î))/2` and its gradient.
pub fn loss_photometric<F: Real>(
    rendered: &RenderOutput<F>,
    target: &[F],
    lambda: f64,
) -> Result<PhotometricLoss<F>> {
    let n = rendered.color.len();
    if target.len() != n {
        return Err(Error::invalid(format!(
            "target has {} values, rendered image has {n}",
            target.len()
        )));
    }
    let lam = F::lit(lambda);
    let w_l1 = (F::one() - lam) / F::lit(n as f64);
    let mut l1 = F::zero();
    let mut grad = vec![F::zero(); n];
    for ((g, &r), &t) in grad.iter_mut().zip(&rendered.color).zip(target) {
        let d = r - t;
        l1 += d.abs();
        *g = if d > F::zero() {
            w_l1
        } else if d < F::zero() {
            -w_l1
        } else {
            F::zero()
        };
    }
    l1 /= F::lit(n as f64);
    let mut dssim = F::zero();
    if lambda > 0.0 {
        let dims = Dims::new(rendered.width, rendered.height, 3);
        let (d, g) = metrics::dssim_with_grad(target, &rendered.color, dims)?;
        dssim = d;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += lam * b;
        }
    }
    Ok(PhotometricLoss {
        loss: (F::one() - lam) * l1 + lam * dssim,
        l1,
        dssim,
        grad,
    })
}

#[derive(Debug, Clone)]
pub struct SemanticLoss<F> {
    pub loss: F,
    /// dLoss/d(feature map), interleaved `HxWx3`.
    pub d_feature: Vec<F>,
    pub d_weights: Vec<Vec3<F>>,
    pub d_bias: Vec<F>,
}

/// Numerically stable softmax over `logits`, in place.
pub(crate) fn softmax_in_place<F: Real>(logits: &mut [F]) {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Weighted multi-class cross-entropy over all pixels,
/// `−(1/|T|)·Σ_p γ_p·log softmax(A·f_p + b)[c_p]`.
pub fn loss_semantic<F: Real>(
    feature: &[F],
    head: &SemanticHead<F>,
    labels: &[u16],
    gamma_labeled: f64,
    gamma_undetected: f64,
) -> Result<SemanticLoss<F>> {
    let k = head.num_classes();
    if feature.len() != labels.len() * 3 {
        return Err(Error::invalid(format!(
            "feature map has {} values for {} labels",
            feature.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c as usize >= k) {
        return Err(Error::invalid(format!("label {bad} outside [0, {}]", k - 1)));
    }
    if feature.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite semantic feature"));
    }
    let n = labels.len();
    if n == 0 {
        return Ok(SemanticLoss {
            loss: F::zero(),
            d_feature: Vec::new(),
            d_weights: vec![[F::zero(); 3]; k],
            d_bias: vec![F::zero(); k],
        });
    }
    let inv_n = F::one() / F::lit(n as f64);
    let (gl, gu) = (F::lit(gamma_labeled), F::lit(gamma_undetected));

    struct Partial<F> {
        loss: F,
        d_w: Vec<Vec3<F>>,
        d_b: Vec<F>,
    }
    const CHUNK: usize = 1024;
    let mut d_feature = vec![F::zero(); n * 3];
    let partials: Vec<Partial<F>> = d_feature
        .par_chunks_mut(CHUNK * 3)
        .zip(feature.par_chunks(CHUNK * 3))
        .zip(labels.par_chunks(CHUNK))
        .map(|((df, f), lab)| {
            let mut p = Partial {
                loss: F::zero(),
                d_w: vec![[F::zero(); 3]; k],
                d_b: vec![F::zero(); k],
            };
            let mut probs = vec![F::zero(); k];
            for (i, &c) in lab.iter().enumerate() {
                let fp = [f[i * 3], f[i * 3 + 1], f[i * 3 + 2]];
                head.logits_into(fp, &mut probs);
                softmax_in_place(&mut probs);
                let c = c as usize;
                let gamma = if c == 0 { gu } else { gl };
                p.loss -= gamma * probs[c].ln();
                let mut dfp = [F::zero(); 3];
                for j in 0..k {
                    let target = if j == c { F::one() } else { F::zero() };
                    let dz = gamma * (probs[j] - target) * inv_n;
                    p.d_b[j] += dz;
                    for a in 0..3 {
                        p.d_w[j][a] += dz * fp[a];
                        dfp[a] += dz * head.weights[j][a];
                    }
                }
                df[i * 3..i * 3 + 3].copy_from_slice(&dfp);
            }
            p
        })
        .collect();

    let mut loss = F::zero();
    let mut d_weights = vec![[F::zero(); 3]; k];
    let mut d_bias = vec![F::zero(); k];
    for p in partials {
        loss += p.loss;
        for j in 0..k {
            d_bias[j] += p.d_b[j];
            for a in 0..3 {
                d_weights[j][a] += p.d_w[j][a];
            }
        }
    }
    Ok(SemanticLoss {
        loss: loss * inv_n,
        d_feature,
        d_weights,
        d_bias,
    })
}
