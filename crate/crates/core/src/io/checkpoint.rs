//! Scene checkpoints: a self-contained binary file holding the Gaussians,
//! the semantic head, the dictionary and the embedding table.
//!
//! Layout (all integers `u32` LE unless noted):
//!
//! ```text
//! "SEMSPLAT1"  version  num_gaussians  sh_degree  num_classes
//! dictionary:  count, count × (len, utf8)
//! embeddings:  dim, num_negatives, num_negatives × (len, utf8),
//!              f32[count × dim], f32[num_negatives × dim]
//! f32[3] background
//! f32 arrays:  means[3n] rotations[4n] log_scales[3n] opacity_logits[n]
//!              sh[n × 3(d+1)²] semantics[3n] head_weights[3k] head_bias[k]
//! u64 footer:  number of bytes preceding the footer
//! ```

use std::path::Path;

use super::binary::{read_file, write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{
    sh, EmbeddingTable, GaussianSoA, Scene, SemanticDictionary, SemanticHead,
};

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"SEMSPLAT1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(scene: &Scene<f32>) -> Vec<u8> {
    let g = &scene.gaussians;
    let mut w = Writer::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.len_u32(g.len());
    w.len_u32(g.sh_degree());
    w.len_u32(scene.head.num_classes());

    w.len_u32(scene.dictionary.len());
    for label in scene.dictionary.labels() {
        w.string(label);
    }
    let e = &scene.embeddings;
    w.len_u32(e.dim());
    w.len_u32(e.num_negatives());
    for p in e.negative_phrases() {
        w.string(p);
    }
    w.f32s(e.entry_data());
    w.f32s(e.negative_data());

    w.f32s(&scene.background);
    w.f32s(g.means.as_flattened());
    w.f32s(g.rotations.as_flattened());
    w.f32s(g.log_scales.as_flattened());
    w.f32s(&g.opacity_logits);
    w.f32s(&g.sh);
    w.f32s(g.semantics.as_flattened());
    w.f32s(scene.head.weights.as_flattened());
    w.f32s(&scene.head.bias);
    let len = w.buf.len() as u64;
    w.u64(len);
    w.buf
}

fn triples(v: Vec<f32>) -> Vec<[f32; 3]> {
    v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<Scene<f32>> {
    let mut r = Reader::new(path, bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
        });
    }
    let body = bytes.len() as u64 - 8;
    let footer = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    if footer != body {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected: footer,
            found: body,
        });
    }
    let mut r = Reader::new(path, &bytes[..bytes.len() - 8]);
    r.take(CHECKPOINT_MAGIC.len() + 4)?;

    let n = r.count()?;
    let degree = r.count()?;
    if degree > sh::MAX_SH_DEGREE {
        return Err(r.malformed("sh_degree", format!("{degree} exceeds {}", sh::MAX_SH_DEGREE)));
    }
    let k = r.count()?;
    let num_labels = r.count()?;
    if k != num_labels + 1 {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            key: "num_classes".into(),
            expected: num_labels + 1,
            found: k,
        });
    }
    let mut labels = Vec::with_capacity(num_labels);
    for i in 0..num_labels {
        labels.push(r.string(&format!("label[{i}]"))?);
    }
    let dictionary =
        SemanticDictionary::new(labels).map_err(|e| r.malformed("dictionary", e.to_string()))?;
    let dim = r.count()?;
    let m = r.count()?;
    let mut negative_phrases = Vec::with_capacity(m);
    for i in 0..m {
        negative_phrases.push(r.string(&format!("negative[{i}]"))?);
    }
    let entries = r.f32s(num_labels * dim)?;
    let negatives = r.f32s(m * dim)?;
    let embeddings = EmbeddingTable::new(dim, entries, negatives, negative_phrases)
        .map_err(|e| r.malformed("embeddings", e.to_string()))?;

    let bg = r.f32s(3)?;
    let stride = sh::num_coeffs(degree) * 3;
    let mut g = GaussianSoA::new(degree);
    g.means = triples(r.f32s(3 * n)?);
    g.rotations = r.f32s(4 * n)?.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
    g.log_scales = triples(r.f32s(3 * n)?);
    g.opacity_logits = r.f32s(n)?;
    g.sh = r.f32s(stride * n)?;
    g.semantics = triples(r.f32s(3 * n)?);
    let head = SemanticHead {
        weights: triples(r.f32s(3 * k)?),
        bias: r.f32s(k)?,
    };
    if r.remaining() != 0 {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected: r.offset() as u64,
            found: body,
        });
    }
    Scene::new(g, head, dictionary, embeddings, [bg[0], bg[1], bg[2]])
        .map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            key: "scene".into(),
            message: e.to_string(),
        })
}

/// Saves atomically (write to a temporary sibling, then rename).
pub fn save_checkpoint(scene: &Scene<f32>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(scene))
}

pub fn load_checkpoint(path: &Path) -> Result<Scene<f32>> {
    decode_checkpoint(path, &read_file(path)?)
}
