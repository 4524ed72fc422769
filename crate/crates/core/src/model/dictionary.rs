use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNDETECTED: &str = "undetected";

/// Ordered set of detected object labels.
///
/// Index 0 is reserved for the undetected class; entries occupy `1..=N`, which
/// is also their logit index in the semantic head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct SemanticDictionary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl SemanticDictionary {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::invalid("dictionary needs at least one label"));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label == UNDETECTED {
                return Err(Error::invalid(format!("label {UNDETECTED:?} is reserved")));
            }
            if index.insert(label.clone(), i + 1).is_some() {
                return Err(Error::invalid(format!("duplicate label {label:?}")));
            }
        }
        Ok(SemanticDictionary { labels, index })
    }

    /// Number of entries, excluding the undetected slot.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of classes including the undetected slot.
    pub fn num_classes(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn lookup(&self, label: &str) -> Option<usize> {
        if label == UNDETECTED {
            return Some(0);
        }
        self.index.get(label).copied()
    }

    pub fn label_of(&self, index: usize) -> Option<&str> {
        match index {
            0 => Some(UNDETECTED),
            i => self.labels.get(i - 1).map(String::as_str),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Appends labels not already present; returns for each input label its
    /// index in the merged dictionary.
    pub fn union(&mut self, other: &SemanticDictionary) -> Vec<usize> {
        let mut remap = vec![0usize; other.num_classes()];
        for (i, label) in other.labels.iter().enumerate() {
            let idx = match self.index.get(label) {
                Some(&idx) => idx,
                None => {
                    self.labels.push(label.clone());
                    let idx = self.labels.len();
                    self.index.insert(label.clone(), idx);
                    idx
                }
            };
            remap[i + 1] = idx;
        }
        remap
    }
}

impl TryFrom<Vec<String>> for SemanticDictionary {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        SemanticDictionary::new(v)
    }
}

impl From<SemanticDictionary> for Vec<String> {
    fn from(d: SemanticDictionary) -> Self {
        d.labels
    }
}

pub const DEFAULT_NEGATIVES: [&str; 4] = ["object", "things", "stuff", "texture"];

/// Unit-norm text embeddings for each dictionary entry plus the canonical
/// negative phrases used by relevancy scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: Vec<f32>,
    negatives: Vec<f32>,
    negative_phrases: Vec<String>,
}

pub const UNIT_NORM_TOL: f64 = 1e-5;

impl EmbeddingTable {
    pub fn new(
        dim: usize,
        entries: Vec<f32>,
        negatives: Vec<f32>,
        negative_phrases: Vec<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if !entries.len().is_multiple_of(dim) || !negatives.len().is_multiple_of(dim) {
            return Err(Error::invalid("embedding buffer is not a multiple of dim"));
        }
        if negatives.len() / dim != negative_phrases.len() {
            return Err(Error::invalid("negative phrase count does not match vectors"));
        }
        if negative_phrases.is_empty() {
            return Err(Error::invalid("at least one canonical negative is required"));
        }
        let table = EmbeddingTable {
            dim,
            entries,
            negatives,
            negative_phrases,
        };
        if let Some((row, norm)) = table.first_non_unit() {
            return Err(Error::invalid(format!(
                "embedding row {row} has norm {norm}, expected 1"
            )));
        }
        Ok(table)
    }

    /// Builds a table from arbitrary vectors, normalizing every row.
    pub fn from_unnormalized(
        dim: usize,
        mut entries: Vec<f32>,
        mut negatives: Vec<f32>,
        negative_phrases: Vec<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        for row in entries.chunks_mut(dim).chain(negatives.chunks_mut(dim)) {
            normalize_in_place(row)?;
        }
        Self::new(dim, entries, negatives, negative_phrases)
    }

    pub(crate) fn first_non_unit(&self) -> Option<(usize, f64)> {
        self.entries
            .chunks(self.dim)
            .chain(self.negatives.chunks(self.dim))
            .map(l2_norm)
            .enumerate()
            .find(|(_, n)| (n - 1.0).abs() > UNIT_NORM_TOL)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len() / self.dim
    }

    pub fn num_negatives(&self) -> usize {
        self.negative_phrases.len()
    }

    /// Embedding of dictionary entry `i` (0-based, i.e. class index − 1).
    pub fn entry(&self, i: usize) -> &[f32] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn negative(&self, i: usize) -> &[f32] {
        &self.negatives[i * self.dim..(i + 1) * self.dim]
    }

    pub fn negatives(&self) -> impl Iterator<Item = &[f32]> {
        self.negatives.chunks(self.dim)
    }

    pub fn negative_phrases(&self) -> &[String] {
        &self.negative_phrases
    }

    pub fn entry_data(&self) -> &[f32] {
        &self.entries
    }

    pub fn negative_data(&self) -> &[f32] {
        &self.negatives
    }

    pub(crate) fn push_entry(&mut self, v: &[f32]) {
        debug_assert_eq!(v.len(), self.dim);
        self.entries.extend_from_slice(v);
    }
}

pub(crate) fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

pub(crate) fn normalize_in_place(v: &mut [f32]) -> Result<()> {
    let n = l2_norm(v);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / n) as f32;
    }
    Ok(())
}
