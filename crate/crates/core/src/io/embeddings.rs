//! Embedding table and query lookup files.
//!
//! Both start with an 8-byte magic and a `u32` version, followed by counts,
//! length-prefixed UTF-8 phrases and row-major little-endian `f32` vectors.
//! See `docs/formats.md` for byte layouts.

use std::collections::BTreeMap;
use std::path::Path;

use super::binary::{read_file, write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::dictionary::{l2_norm, normalize_in_place};
use crate::model::EmbeddingTable;

pub const EMBEDDINGS_MAGIC: &[u8; 8] = b"SEMEMB1\0";
pub const QUERY_MAGIC: &[u8; 8] = b"SEMQRY1\0";
pub const FORMAT_VERSION: u32 = 1;

/// Rows further than this from unit norm are rejected at load; rows within
/// it are renormalized.
pub const LOAD_NORM_TOL: f64 = 1e-3;

fn check_version(r: &mut Reader) -> Result<()> {
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: r.path().to_path_buf(),
            version,
        });
    }
    Ok(())
}

fn read_rows(r: &mut Reader, key: &str, rows: usize, dim: usize) -> Result<Vec<f32>> {
    let mut data = r.f32s(rows * dim)?;
    for (row, v) in data.chunks_mut(dim).enumerate() {
        let norm = l2_norm(v);
        if !v.iter().all(|x| x.is_finite()) || (norm - 1.0).abs() > LOAD_NORM_TOL {
            return Err(Error::NotUnitNorm {
                path: r.path().to_path_buf(),
                key: key.to_string(),
                row,
                norm,
            });
        }
        normalize_in_place(v)?;
    }
    Ok(data)
}

fn expect_end(r: &Reader) -> Result<()> {
    if r.remaining() != 0 {
        return Err(r.malformed("trailer", format!("{} unexpected trailing bytes", r.remaining())));
    }
    Ok(())
}

/// Serializes an embedding table. `entry_phrases` name the rows in order
/// and must match the dictionary labels they belong to.
pub fn encode_embeddings(entry_phrases: &[String], table: &EmbeddingTable) -> Vec<u8> {
    assert_eq!(entry_phrases.len(), table.num_entries(), "one phrase per entry row");
    let mut w = Writer::new();
    w.bytes(EMBEDDINGS_MAGIC);
    w.u32(FORMAT_VERSION);
    w.len_u32(table.dim());
    w.len_u32(table.num_entries());
    w.len_u32(table.num_negatives());
    for p in entry_phrases.iter().chain(table.negative_phrases()) {
        w.string(p);
    }
    w.f32s(table.entry_data());
    w.f32s(table.negative_data());
    w.buf
}

pub fn save_embeddings(path: &Path, entry_phrases: &[String], table: &EmbeddingTable) -> Result<()> {
    write_atomic(path, &encode_embeddings(entry_phrases, table))
}

pub fn decode_embeddings(path: &Path, bytes: &[u8]) -> Result<(Vec<String>, EmbeddingTable)> {
    let mut r = Reader::new(path, bytes);
    r.magic(EMBEDDINGS_MAGIC)?;
    check_version(&mut r)?;
    let dim = r.count()?;
    let n = r.count()?;
    let m = r.count()?;
    if dim == 0 {
        return Err(r.malformed("dim", "embedding dimension is zero"));
    }
    if m == 0 {
        return Err(r.malformed("negatives", "at least one canonical negative is required"));
    }
    let mut phrases = Vec::with_capacity(n + m);
    for i in 0..n + m {
        phrases.push(r.string(&format!("phrase[{i}]"))?);
    }
    let negative_phrases = phrases.split_off(n);
    let entries = read_rows(&mut r, "entries", n, dim)?;
    let negatives = read_rows(&mut r, "negatives", m, dim)?;
    expect_end(&r)?;
    let table = EmbeddingTable::new(dim, entries, negatives, negative_phrases)
        .map_err(|e| r.malformed("table", e.to_string()))?;
    Ok((phrases, table))
}

pub fn load_embeddings(path: &Path) -> Result<(Vec<String>, EmbeddingTable)> {
    decode_embeddings(path, &read_file(path)?)
}

/// Precomputed prompt embeddings, keyed by the exact prompt text.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryLookup {
    pub dim: usize,
    pub prompts: BTreeMap<String, Vec<f32>>,
}

impl QueryLookup {
    pub fn new(dim: usize) -> Self {
        QueryLookup {
            dim,
            prompts: BTreeMap::new(),
        }
    }

    /// Inserts a prompt, normalizing the vector.
    pub fn insert(&mut self, prompt: impl Into<String>, mut v: Vec<f32>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::invalid(format!(
                "query embedding has dimension {}, lookup has {}",
                v.len(),
                self.dim
            )));
        }
        normalize_in_place(&mut v)?;
        self.prompts.insert(prompt.into(), v);
        Ok(())
    }

    pub fn get(&self, prompt: &str) -> Option<&[f32]> {
        self.prompts.get(prompt).map(Vec::as_slice)
    }
}

pub fn encode_query_lookup(lookup: &QueryLookup) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(QUERY_MAGIC);
    w.u32(FORMAT_VERSION);
    w.len_u32(lookup.dim);
    w.len_u32(lookup.prompts.len());
    for p in lookup.prompts.keys() {
        w.string(p);
    }
    for v in lookup.prompts.values() {
        w.f32s(v);
    }
    w.buf
}

pub fn save_query_lookup(path: &Path, lookup: &QueryLookup) -> Result<()> {
    write_atomic(path, &encode_query_lookup(lookup))
}

pub fn decode_query_lookup(path: &Path, bytes: &[u8]) -> Result<QueryLookup> {
    let mut r = Reader::new(path, bytes);
    r.magic(QUERY_MAGIC)?;
    check_version(&mut r)?;
    let dim = r.count()?;
    let n = r.count()?;
    if dim == 0 {
        return Err(r.malformed("dim", "embedding dimension is zero"));
    }
    let mut phrases = Vec::with_capacity(n);
    for i in 0..n {
        phrases.push(r.string(&format!("prompt[{i}]"))?);
    }
    let data = r.f32s(n * dim)?;
    expect_end(&r)?;
    let mut lookup = QueryLookup::new(dim);
    for (i, (p, v)) in phrases.into_iter().zip(data.chunks(dim)).enumerate() {
        if lookup.prompts.contains_key(&p) {
            return Err(r.malformed(&format!("prompt[{i}]"), format!("duplicate prompt {p:?}")));
        }
        lookup
            .insert(p, v.to_vec())
            .map_err(|e| r.malformed(&format!("vector[{i}]"), e.to_string()))?;
    }
    Ok(lookup)
}

/// Loads a query lookup; stored vectors are renormalized.
pub fn load_query_embeddings(path: &Path) -> Result<QueryLookup> {
    decode_query_lookup(path, &read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn table() -> (Vec<String>, EmbeddingTable) {
        let t = EmbeddingTable::from_unnormalized(
            3,
            vec![1.0, 2.0, 2.0, 0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec!["object".into()],
        )
        .unwrap();
        (vec!["kettle".into(), "apple".into()], t)
    }

    #[test]
    fn embeddings_round_trip() {
        let (p, t) = table();
        let bytes = encode_embeddings(&p, &t);
        assert_eq!(&bytes[..8], EMBEDDINGS_MAGIC);
        let (p2, t2) = decode_embeddings(&PathBuf::from("x"), &bytes).unwrap();
        assert_eq!(p, p2);
        assert_eq!(t, t2);
    }

    #[test]
    fn truncation_and_magic_are_named() {
        let (p, t) = table();
        let bytes = encode_embeddings(&p, &t);
        let e = decode_embeddings(&PathBuf::from("x"), &bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(e, Error::Truncated { .. }), "{e}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let e = decode_embeddings(&PathBuf::from("x"), &bad).unwrap_err();
        assert!(matches!(e, Error::BadMagic { .. }));
    }

    #[test]
    fn non_unit_row_rejected() {
        let (p, t) = table();
        let mut bytes = encode_embeddings(&p, &t);
        let n = bytes.len();
        // last f32 belongs to the negative row
        bytes[n - 4..].copy_from_slice(&3.0f32.to_le_bytes());
        let e = decode_embeddings(&PathBuf::from("x"), &bytes).unwrap_err();
        assert!(matches!(e, Error::NotUnitNorm { ref key, row: 0, .. } if key == "negatives"), "{e}");
    }

    #[test]
    fn lookup_round_trip_renormalizes() {
        let mut q = QueryLookup::new(2);
        q.insert("coffee", vec![3.0, 4.0]).unwrap();
        q.insert("tea", vec![0.0, 1.0]).unwrap();
        let back = decode_query_lookup(&PathBuf::from("q"), &encode_query_lookup(&q)).unwrap();
        assert_eq!(back, q);
        assert_eq!(back.get("coffee").unwrap(), &[0.6, 0.8]);
        assert!(back.get("milk").is_none());
    }
}
