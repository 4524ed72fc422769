//! Whole-dataset evaluation of a trained scene.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::Dataset;
use crate::metrics::{self, Dims};
use crate::model::Scene;
use crate::render::render;
use crate::semantics::{pixel_label_map, relevancy_map};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub label: String,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub num_gaussians: usize,
    /// Mean over frames.
    pub psnr: f64,
    pub ssim: f64,
    /// Mean IoU over dictionary classes, pixels pooled over all frames.
    pub miou: f64,
    pub class_iou: Vec<ClassIou>,
    /// Fraction of (frame, label) queries whose highest-relevancy pixel lies
    /// inside that label's ground-truth mask. Queries use the entry's own
    /// embedding; frames where the label is absent are skipped.
    pub localization_accuracy: Option<f64>,
    pub localization_queries: usize,
    pub wall_ms: f64,
}

/// Per-class IoU of predicted against ground-truth label maps, pooled over
/// frames, for classes `1..num_classes`.
pub fn label_iou(pred: &[Vec<u16>], gt: &[Vec<u16>], num_classes: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(num_classes.saturating_sub(1));
    for class in 1..num_classes {
        let c = class as u16;
        let p: Vec<bool> = pred.iter().flatten().map(|&v| v == c).collect();
        let g: Vec<bool> = gt.iter().flatten().map(|&v| v == c).collect();
        out.push(metrics::iou(&p, &g)?);
    }
    Ok(out)
}

pub fn evaluate(scene: &Scene<f32>, dataset: &Dataset) -> Result<EvalReport> {
    let start = Instant::now();
    let k = scene.dictionary.num_classes();
    let mut psnr = 0.0;
    let mut ssim = 0.0;
    let mut pred = Vec::with_capacity(dataset.len());
    let mut gt = Vec::with_capacity(dataset.len());
    let mut maps = Vec::new();
    let mut masks = Vec::new();
    for frame in &dataset.frames {
        let out = render(scene, &frame.camera);
        psnr += metrics::psnr(&out.color, &frame.image)?;
        let dims = Dims::new(frame.camera.width, frame.camera.height, 3);
        ssim += metrics::ssim(&out.color, &frame.image, dims)? as f64;
        pred.push(pixel_label_map(&out.feature, &scene.head));
        gt.push(frame.labels.clone());
        for class in 1..k {
            let mask: Vec<bool> = frame.labels.iter().map(|&l| l as usize == class).collect();
            if !mask.iter().any(|&m| m) {
                continue;
            }
            maps.push(relevancy_map(scene, &out, scene.embeddings.entry(class - 1))?);
            masks.push(mask);
        }
    }
    let n = dataset.len().max(1) as f64;
    let ious = label_iou(&pred, &gt, k)?;
    let miou = ious.iter().sum::<f64>() / ious.len().max(1) as f64;
    let loc = metrics::localization_accuracy(&maps, &masks)?;
    Ok(EvalReport {
        frames: dataset.len(),
        num_gaussians: scene.len(),
        psnr: psnr / n,
        ssim: ssim / n,
        miou,
        class_iou: scene
            .dictionary
            .labels()
            .iter()
            .zip(&ious)
            .map(|(l, &iou)| ClassIou {
                label: l.clone(),
                iou,
            })
            .collect(),
        localization_accuracy: loc.accuracy(),
        localization_queries: loc.evaluated,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
