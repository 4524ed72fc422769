//! Training datasets: a JSON manifest naming per-frame images, label maps
//! and camera parameters, plus the label dictionary and embedding table.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embeddings::{load_embeddings, save_embeddings};
use super::image::{read_label_png, read_rgb_png, write_label_png, write_rgb_png};
use crate::error::{Error, Result};
use crate::model::{Camera, EmbeddingTable, SemanticDictionary};

pub const MANIFEST_VERSION: u32 = 1;
pub const DICTIONARY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub image_path: String,
    pub label_map_path: String,
    /// Row-major 4×4, OpenCV axes (x right, y down, z forward).
    pub camera_to_world: [[f64; 4]; 4],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub frames: Vec<FrameEntry>,
    pub dictionary_path: String,
    pub embeddings_path: String,
    /// Optional initial point cloud (`{"points": [[x,y,z,r,g,b], ...]}`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryFile {
    pub version: u32,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsFile {
    pub points: Vec<[f64; 6]>,
}

/// A decoded training frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub camera: Camera,
    /// Interleaved RGB in `[0,1]`, `height × width × 3`.
    pub image: Vec<f32>,
    /// Class index per pixel, 0 = undetected.
    pub labels: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub frames: Vec<Frame>,
    pub dictionary: SemanticDictionary,
    pub embeddings: EmbeddingTable,
    /// Optional initial points, `[x, y, z, r, g, b]` with colors in `[0,1]`.
    pub points: Option<Vec<[f64; 6]>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        key: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializing JSON");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn resolve(manifest: &Path, root: &Path, rel: &str) -> Result<PathBuf> {
    let p = root.join(rel);
    if !p.is_file() {
        return Err(Error::MissingFile {
            path: manifest.to_path_buf(),
            missing: p,
        });
    }
    Ok(p)
}

/// Manifest path for `path`, which may name the manifest or its directory.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    }
}

pub fn load_dictionary(path: &Path) -> Result<SemanticDictionary> {
    let file: DictionaryFile = read_json(path)?;
    if file.version != DICTIONARY_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version: file.version,
        });
    }
    let mut seen = std::collections::HashSet::new();
    for label in &file.labels {
        if !seen.insert(label.as_str()) {
            return Err(Error::DuplicateLabel {
                path: path.to_path_buf(),
                label: label.clone(),
            });
        }
    }
    SemanticDictionary::new(file.labels).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        key: "labels".into(),
        message: e.to_string(),
    })
}

fn load_frame(manifest: &Path, root: &Path, index: usize, entry: &FrameEntry, max_label: u16) -> Result<Frame> {
    let key = |k: &str| format!("frames[{index}].{k}");
    let camera = Camera::from_camera_to_world(
        entry.fx,
        entry.fy,
        entry.cx,
        entry.cy,
        entry.width,
        entry.height,
        entry.camera_to_world,
    )
    .map_err(|e| Error::Malformed {
        path: manifest.to_path_buf(),
        key: key("camera"),
        message: e.to_string(),
    })?;
    let image_path = resolve(manifest, root, &entry.image_path)?;
    let label_path = resolve(manifest, root, &entry.label_map_path)?;
    let (w, h, image) = read_rgb_png(&image_path)?;
    let (lw, lh, labels) = read_label_png(&label_path)?;
    for (path, k, expected, found) in [
        (&image_path, "width", entry.width, w),
        (&image_path, "height", entry.height, h),
        (&label_path, "width", entry.width, lw),
        (&label_path, "height", entry.height, lh),
    ] {
        if expected != found {
            return Err(Error::DimensionMismatch {
                path: path.clone(),
                key: key(k),
                expected,
                found,
            });
        }
    }
    if let Some(&bad) = labels.iter().find(|&&v| v > max_label) {
        return Err(Error::LabelOutOfRange {
            path: label_path,
            frame: index,
            value: bad as u32,
            max: max_label as u32,
        });
    }
    Ok(Frame {
        camera,
        image,
        labels,
    })
}

/// Loads and validates a dataset. `path` is the manifest file or the
/// directory containing `manifest.json`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest_file = manifest_path(path);
    let manifest: DatasetManifest = read_json(&manifest_file)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::UnsupportedVersion {
            path: manifest_file,
            version: manifest.version,
        });
    }
    if manifest.frames.is_empty() {
        return Err(Error::Malformed {
            path: manifest_file,
            key: "frames".into(),
            message: "no frames".into(),
        });
    }
    let root = manifest_file.parent().unwrap_or(Path::new(".")).to_path_buf();
    let dict_path = resolve(&manifest_file, &root, &manifest.dictionary_path)?;
    let emb_path = resolve(&manifest_file, &root, &manifest.embeddings_path)?;
    let dictionary = load_dictionary(&dict_path)?;
    let (phrases, embeddings) = load_embeddings(&emb_path)?;
    if phrases.len() != dictionary.len() {
        return Err(Error::DimensionMismatch {
            path: emb_path,
            key: "entries".into(),
            expected: dictionary.len(),
            found: phrases.len(),
        });
    }
    if let Some((i, (p, l))) = phrases
        .iter()
        .zip(dictionary.labels())
        .enumerate()
        .find(|(_, (p, l))| p != l)
    {
        return Err(Error::Malformed {
            path: emb_path,
            key: format!("phrase[{i}]"),
            message: format!("entry {p:?} does not match dictionary label {l:?}"),
        });
    }
    let max_label = u16::try_from(dictionary.len()).map_err(|_| Error::Malformed {
        path: dict_path.clone(),
        key: "labels".into(),
        message: "more than 65535 labels".into(),
    })?;
    let frames = manifest
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| load_frame(&manifest_file, &root, i, f, max_label))
        .collect::<Result<Vec<_>>>()?;
    let points = match &manifest.points_path {
        Some(rel) => {
            let p = resolve(&manifest_file, &root, rel)?;
            let file: PointsFile = read_json(&p)?;
            Some(file.points)
        }
        None => None,
    };
    Ok(Dataset {
        root,
        frames,
        dictionary,
        embeddings,
        points,
    })
}

/// Writes `dataset` as `dir/manifest.json` with frames under `dir/images`
/// and `dir/labels`.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    for sub in ["images", "labels"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut frames = Vec::with_capacity(dataset.frames.len());
    for (i, f) in dataset.frames.iter().enumerate() {
        let image_path = format!("images/{i:04}.png");
        let label_map_path = format!("labels/{i:04}.png");
        let c = &f.camera;
        write_rgb_png(&dir.join(&image_path), c.width, c.height, &f.image)?;
        write_label_png(&dir.join(&label_map_path), c.width, c.height, &f.labels)?;
        frames.push(FrameEntry {
            image_path,
            label_map_path,
            camera_to_world: c.camera_to_world(),
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        });
    }
    write_json(
        &dir.join("dictionary.json"),
        &DictionaryFile {
            version: DICTIONARY_VERSION,
            labels: dataset.dictionary.labels().to_vec(),
        },
    )?;
    save_embeddings(&dir.join("embeddings.bin"), dataset.dictionary.labels(), &dataset.embeddings)?;
    let points_path = match &dataset.points {
        Some(points) => {
            write_json(&dir.join("points.json"), &PointsFile { points: points.clone() })?;
            Some("points.json".to_string())
        }
        None => None,
    };
    write_json(
        &dir.join("manifest.json"),
        &DatasetManifest {
            version: MANIFEST_VERSION,
            frames,
            dictionary_path: "dictionary.json".into(),
            embeddings_path: "embeddings.bin".into(),
            points_path,
        },
    )
}
