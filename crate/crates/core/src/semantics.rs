//! Class probabilities, pixel labeling, relevancy scoring and
//! open-vocabulary query resolution.
//!
//! A query never produces a free-floating mask: it scores every dictionary
//! entry against the query embedding and returns the entries that pass the
//! threshold, each carrying its own stored label.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::QueryLookup;
use crate::math::{Real, Vec3};
use crate::model::dictionary::{l2_norm, normalize_in_place};
use crate::model::{Camera, EmbeddingTable, Scene, SemanticDictionary, SemanticHead};
use crate::render::{render, RenderOutput};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Tolerance on `|v| = 1` for relevancy inputs.
pub const UNIT_TOL: f64 = 1e-3;

/// `softmax(A·f + b)` over all `N + 1` classes.
pub fn class_probabilities<F: Real>(feature: Vec3<F>, head: &SemanticHead<F>) -> Vec<F> {
    let mut p = head.logits(feature);
    crate::train::loss::softmax_in_place(&mut p);
    p
}

/// Index of the first maximum.
pub fn argmax<F: Real>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Most likely class of a feature. Softmax is monotone, so the argmax is
/// taken over the logits directly.
pub fn classify<F: Real>(feature: Vec3<F>, head: &SemanticHead<F>, scratch: &mut Vec<F>) -> usize {
    scratch.resize(head.num_classes(), F::zero());
    head.logits_into(feature, scratch);
    argmax(scratch)
}

/// Per-pixel argmax class of an interleaved `H×W×3` feature map.
pub fn pixel_label_map<F: Real>(feature_map: &[F], head: &SemanticHead<F>) -> Vec<u16> {
    feature_map
        .par_chunks(3 * 1024)
        .flat_map_iter(|chunk| {
            let mut scratch = Vec::new();
            chunk
                .chunks_exact(3)
                .map(|f| classify([f[0], f[1], f[2]], head, &mut scratch) as u16)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Argmax class of every Gaussian's own semantic code.
pub fn gaussian_classes<F: Real>(scene: &Scene<F>) -> Vec<usize> {
    let mut scratch = Vec::new();
    scene
        .gaussians
        .semantics
        .iter()
        .map(|b| classify(*b, &scene.head, &mut scratch))
        .collect()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

fn check_unit(v: &[f32], what: &str) -> Result<()> {
    let n = l2_norm(v);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("{what} has norm {n}, expected 1")));
    }
    Ok(())
}

/// Pairwise-softmax relevancy of entry `d` for query `q`:
/// `minᵢ exp(d·q) / (exp(d·q) + exp(d·nᵢ))`.
pub fn relevancy<'a>(
    entry: &[f32],
    query: &[f32],
    negatives: impl IntoIterator<Item = &'a [f32]>,
) -> Result<f64> {
    if entry.len() != query.len() {
        return Err(Error::invalid("entry and query dimensions differ"));
    }
    check_unit(entry, "entry embedding")?;
    check_unit(query, "query embedding")?;
    let dq = dot(entry, query);
    let mut best = f64::INFINITY;
    let mut any = false;
    for n in negatives {
        if n.len() != entry.len() {
            return Err(Error::invalid("negative embedding dimension differs"));
        }
        check_unit(n, "negative embedding")?;
        // exp(a)/(exp(a)+exp(b)) = 1/(1+exp(b−a))
        let s = 1.0 / (1.0 + (dot(entry, n) - dq).exp());
        best = best.min(s);
        any = true;
    }
    if !any {
        return Err(Error::invalid("relevancy needs at least one negative"));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevancyScore {
    pub label: String,
    pub score: f64,
}

/// Relevancy of every dictionary entry, in dictionary order.
pub fn relevancy_scores(
    dictionary: &SemanticDictionary,
    table: &EmbeddingTable,
    query: &[f32],
) -> Result<Vec<RelevancyScore>> {
    if query.len() != table.dim() {
        return Err(Error::Config(format!(
            "query embedding has dimension {}, table has {}",
            query.len(),
            table.dim()
        )));
    }
    dictionary
        .labels()
        .iter()
        .enumerate()
        .map(|(i, label)| {
            Ok(RelevancyScore {
                label: label.clone(),
                score: relevancy(table.entry(i), query, table.negatives())?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedLabel {
    pub label: String,
    /// Class index (1-based dictionary position).
    pub class_index: usize,
    pub relevancy: f64,
    /// Row-major `height × width` mask of pixels labeled with this class.
    pub pixel_mask: Vec<bool>,
    pub gaussian_ids: Vec<usize>,
    /// Opacity-weighted mean of the member Gaussians; `None` when no
    /// Gaussian carries the label.
    pub centroid3d: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: String,
    pub ranked: Vec<RankedLabel>,
    pub threshold_used: f64,
    pub width: usize,
    pub height: usize,
}

impl QueryResult {
    pub fn top(&self) -> Option<&RankedLabel> {
        self.ranked.first()
    }
}

/// Resolves a query against the scene as seen from `camera`. Entries with
/// relevancy strictly above `threshold` are returned, most relevant first.
pub fn resolve_query<F: Real>(
    scene: &Scene<F>,
    query: &str,
    query_embedding: &[f32],
    camera: &Camera,
    threshold: f64,
) -> Result<QueryResult> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0,1]")));
    }
    let scores = relevancy_scores(&scene.dictionary, &scene.embeddings, query_embedding)?;
    let mut related: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.score > threshold)
        .map(|(i, s)| (i + 1, s.score))
        .collect();
    // Descending relevancy; ties keep dictionary order.
    related.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let (width, height) = (camera.width, camera.height);
    if related.is_empty() {
        return Ok(QueryResult {
            query: query.to_string(),
            ranked: Vec::new(),
            threshold_used: threshold,
            width,
            height,
        });
    }
    let out = render(scene, camera);
    let labels = pixel_label_map(&out.feature, &scene.head);
    let classes = gaussian_classes(scene);
    let g = &scene.gaussians;
    let ranked = related
        .into_iter()
        .map(|(class, score)| {
            let pixel_mask = labels.iter().map(|&l| l as usize == class).collect();
            let gaussian_ids: Vec<usize> = (0..g.len()).filter(|&i| classes[i] == class).collect();
            let mut wsum = 0.0;
            let mut c = [0.0f64; 3];
            for &i in &gaussian_ids {
                let w = g.opacity(i).as_f64();
                wsum += w;
                for a in 0..3 {
                    c[a] += w * g.means[i][a].as_f64();
                }
            }
            let centroid3d = (wsum > 0.0).then(|| c.map(|v| v / wsum));
            RankedLabel {
                label: scene.dictionary.label_of(class).unwrap_or_default().to_string(),
                class_index: class,
                relevancy: score,
                pixel_mask,
                gaussian_ids,
                centroid3d,
            }
        })
        .collect();
    Ok(QueryResult {
        query: query.to_string(),
        ranked,
        threshold_used: threshold,
        width,
        height,
    })
}

/// Per-pixel expected relevancy `Σ_c p_c · r_c` (undetected scores 0),
/// from an existing render.
pub fn relevancy_map<F: Real>(scene: &Scene<F>, out: &RenderOutput<F>, query_embedding: &[f32]) -> Result<Vec<f64>> {
    let scores = relevancy_scores(&scene.dictionary, &scene.embeddings, query_embedding)?;
    let r: Vec<f64> = std::iter::once(0.0).chain(scores.iter().map(|s| s.score)).collect();
    Ok(out
        .feature
        .par_chunks_exact(3)
        .map(|f| {
            let p = class_probabilities([f[0], f[1], f[2]], &scene.head);
            p.iter().zip(&r).map(|(p, r)| p.as_f64() * r).sum()
        })
        .collect())
}

/// Where query embeddings come from: an offline lookup file, a live
/// encoder service, or both (lookup first).
#[derive(Debug, Clone, Default)]
pub struct QuerySource {
    pub lookup: Option<QueryLookup>,
    /// Base URL of the encoder service; `POST {url}/encode` with
    /// `{"texts": [...]}` returns `{"embeddings": [[...], ...]}`.
    pub encoder_url: Option<String>,
    pub timeout: Option<Duration>,
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    texts: [&'a str; 1],
}

#[derive(Deserialize)]
struct EncodeResponse {
    embeddings: Vec<Vec<f32>>,
}

fn encode_remote(url: &str, text: &str, timeout: Duration) -> Result<Vec<f32>> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into();
    let endpoint = format!("{}/encode", url.trim_end_matches('/'));
    let mut resp = agent
        .post(&endpoint)
        .send_json(EncodeRequest { texts: [text] })
        .map_err(|e| match e {
            ureq::Error::StatusCode(code) => Error::Encoder(format!("{endpoint} returned HTTP {code}")),
            other => Error::EncoderUnavailable(format!("{text} ({endpoint}: {other})")),
        })?;
    let body: EncodeResponse = resp
        .body_mut()
        .read_json()
        .map_err(|e| Error::Encoder(format!("{endpoint}: bad response: {e}")))?;
    body.embeddings
        .into_iter()
        .next()
        .ok_or_else(|| Error::Encoder(format!("{endpoint}: empty embedding list")))
}

/// Unit-norm embedding of `text` with dimension `dim`.
pub fn embed_query(text: &str, source: &QuerySource, dim: usize) -> Result<Vec<f32>> {
    let mut v = if let Some(v) = source.lookup.as_ref().and_then(|l| l.get(text)) {
        v.to_vec()
    } else if let Some(url) = &source.encoder_url {
        encode_remote(url, text, source.timeout.unwrap_or(Duration::from_secs(30)))?
    } else {
        return Err(Error::EncoderUnavailable(text.to_string()));
    };
    if v.len() != dim {
        return Err(Error::Config(format!(
            "embedding for {text:?} has dimension {}, scene table has {dim}",
            v.len()
        )));
    }
    normalize_in_place(&mut v).map_err(|_| Error::Encoder(format!("zero embedding for {text:?}")))?;
    Ok(v)
}
