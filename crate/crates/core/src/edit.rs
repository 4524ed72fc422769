//! Semantic scene editing: select by label, recolor, delete, translate and
//! insert.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Real, Vec3};
use crate::model::{sh, Scene};
use crate::semantics::gaussian_classes;

/// Ids of all Gaussians whose own semantic code classifies as `label`
/// (`"undetected"` selects class 0).
pub fn select_by_label<F: Real>(scene: &Scene<F>, label: &str) -> Result<Vec<usize>> {
    let class = scene
        .dictionary
        .lookup(label)
        .ok_or_else(|| Error::invalid(format!("label {label:?} is not in the dictionary")))?;
    Ok(gaussian_classes(scene)
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c == class)
        .map(|(i, _)| i)
        .collect())
}

fn check_ids<F: Real>(scene: &Scene<F>, ids: &[usize]) -> Result<()> {
    let n = scene.len();
    match ids.iter().find(|&&i| i >= n) {
        Some(bad) => Err(Error::invalid(format!("Gaussian id {bad} out of range (scene has {n})"))),
        None => Ok(()),
    }
}

/// Sets the selected Gaussians to a flat `rgb` color: the DC band encodes
/// the color and every higher band is zeroed.
pub fn recolor<F: Real>(scene: &mut Scene<F>, ids: &[usize], rgb: Vec3<F>) -> Result<()> {
    check_ids(scene, ids)?;
    if rgb.iter().any(|c| !(F::zero()..=F::one()).contains(c)) {
        return Err(Error::invalid("recolor components must lie in [0,1]"));
    }
    let dc = sh::rgb_to_dc(rgb);
    for &i in ids {
        let coeffs = scene.gaussians.sh_of_mut(i);
        coeffs.iter_mut().for_each(|c| *c = F::zero());
        coeffs[..3].copy_from_slice(&dc);
    }
    Ok(())
}

/// Removes the selected Gaussians. Returns the keep mask, which callers
/// holding optimizer state apply to it as well.
pub fn delete<F: Real>(scene: &mut Scene<F>, ids: &[usize]) -> Result<Vec<bool>> {
    check_ids(scene, ids)?;
    let mut keep = vec![true; scene.len()];
    for &i in ids {
        keep[i] = false;
    }
    scene.gaussians.retain_rows(&keep);
    Ok(keep)
}

/// Adds `offset` to the means of the selected Gaussians (each id once).
pub fn translate<F: Real>(scene: &mut Scene<F>, ids: &[usize], offset: Vec3<F>) -> Result<()> {
    check_ids(scene, ids)?;
    if offset.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("translation must be finite"));
    }
    let unique: BTreeSet<usize> = ids.iter().copied().collect();
    for i in unique {
        let m = &mut scene.gaussians.means[i];
        for a in 0..3 {
            m[a] += offset[a];
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertReport {
    /// Id of the first inserted Gaussian; the rest follow contiguously.
    pub first_id: usize,
    pub count: usize,
    /// Class index in the host scene for each class index of the sub-scene.
    pub class_remap: Vec<usize>,
    /// Labels that were new to the host dictionary.
    pub new_labels: Vec<String>,
}

/// Appends the Gaussians of `sub` shifted by `offset`.
///
/// Dictionaries are unioned (a shared label keeps one index), the host head
/// gains zero-initialized rows for new labels and the embedding table gains
/// their rows. Semantic codes are copied unchanged; the host head is not
/// refit, so inserted content is only queryable after fine-tuning.
pub fn insert<F: Real>(scene: &mut Scene<F>, sub: &Scene<F>, offset: Vec3<F>) -> Result<InsertReport> {
    if sub.embeddings.dim() != scene.embeddings.dim() {
        return Err(Error::Config(format!(
            "cannot merge embedding tables of dimension {} and {}",
            scene.embeddings.dim(),
            sub.embeddings.dim()
        )));
    }
    if offset.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("insert offset must be finite"));
    }
    let before = scene.dictionary.len();
    let class_remap = scene.dictionary.union(&sub.dictionary);
    let new_labels: Vec<String> = scene.dictionary.labels()[before..].to_vec();
    for label in &new_labels {
        let i = sub.dictionary.lookup(label).expect("new label comes from sub") - 1;
        scene.embeddings.push_entry(sub.embeddings.entry(i));
    }
    scene.head.pad_to(scene.dictionary.num_classes());

    let incoming = sub.gaussians.with_sh_degree(scene.sh_degree());
    let first_id = scene.len();
    for i in 0..incoming.len() {
        scene.gaussians.push_from(&incoming, i);
        let m = &mut scene.gaussians.means[first_id + i];
        for a in 0..3 {
            m[a] += offset[a];
        }
    }
    scene.validate()?;
    Ok(InsertReport {
        first_id,
        count: incoming.len(),
        class_remap,
        new_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmbeddingTable, GaussianSoA, SemanticDictionary, SemanticHead};

    fn scene(labels: &[&str], betas: &[[f64; 3]]) -> Scene<f64> {
        let mut g = GaussianSoA::new(1);
        for (i, b) in betas.iter().enumerate() {
            g.push([i as f64, 0.0, 4.0], [1.0, 0.0, 0.0, 0.0], [-2.0; 3], 0.0, &[0.3; 12], *b);
        }
        let dim = 8;
        let entries: Vec<f32> = (0..labels.len())
            .flat_map(|i| (0..dim).map(move |d| if d == i { 1.0 } else { 0.1 }))
            .collect();
        let emb = EmbeddingTable::from_unnormalized(dim, entries, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0], vec!["object".into()]).unwrap();
        let k = labels.len() + 1;
        let mut head = SemanticHead::zeros(k);
        // class c wins when β[0] ≈ c
        for c in 0..k {
            head.weights[c] = [2.0 * c as f64, 0.0, 0.0];
            head.bias[c] = -(c as f64).powi(2);
        }
        Scene::new(g, head, SemanticDictionary::new(labels.iter().copied()).unwrap(), emb, [0.0; 3]).unwrap()
    }

    #[test]
    fn selections_partition_all_gaussians() {
        let s = scene(&["a", "b"], &[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [1.1, 0.0, 0.0]]);
        assert_eq!(select_by_label(&s, "a").unwrap(), vec![1, 3]);
        assert_eq!(select_by_label(&s, "b").unwrap(), vec![2]);
        assert_eq!(select_by_label(&s, "undetected").unwrap(), vec![0]);
        assert!(select_by_label(&s, "zebra").is_err());
    }

    #[test]
    fn recolor_touches_only_selection() {
        let mut s = scene(&["a"], &[[0.0; 3], [1.0, 0.0, 0.0]]);
        let before = s.clone();
        recolor(&mut s, &[], [0.2, 0.4, 0.6]).unwrap();
        assert_eq!(s, before);
        recolor(&mut s, &[1], [0.2, 0.4, 0.6]).unwrap();
        assert_eq!(s.gaussians.sh_of(0), before.gaussians.sh_of(0));
        assert!(s.gaussians.sh_of(1)[3..].iter().all(|v| *v == 0.0));
        assert!(recolor(&mut s, &[2], [0.0; 3]).is_err());
    }

    #[test]
    fn insert_unions_dictionary_and_pads_head() {
        let mut host = scene(&["a", "b"], &[[1.0, 0.0, 0.0]]);
        let sub = scene(&["b", "c"], &[[2.0, 0.0, 0.0], [0.0; 3]]);
        let r = insert(&mut host, &sub, [0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r.first_id, 1);
        assert_eq!(r.count, 2);
        assert_eq!(r.class_remap, vec![0, 2, 3]);
        assert_eq!(r.new_labels, vec!["c".to_string()]);
        assert_eq!(host.dictionary.labels(), &["a", "b", "c"]);
        assert_eq!(host.head.num_classes(), 4);
        assert_eq!(host.head.weights[3], [0.0; 3]);
        assert_eq!(host.embeddings.num_entries(), 3);
        assert_eq!(host.embeddings.entry(2), sub.embeddings.entry(1));
        assert_eq!(host.gaussians.means[2], [1.0, 1.0, 4.0]);
        assert_eq!(host.gaussians.semantics[1], [2.0, 0.0, 0.0]);
    }

    #[test]
    fn insert_empty_only_unions() {
        let mut host = scene(&["a"], &[[1.0, 0.0, 0.0]]);
        let sub = scene(&["a", "z"], &[]);
        let before = host.gaussians.clone();
        insert(&mut host, &sub, [0.0; 3]).unwrap();
        assert_eq!(host.gaussians, before);
        assert_eq!(host.dictionary.labels(), &["a", "z"]);
    }

    #[test]
    fn translate_round_trip() {
        let mut s = scene(&["a"], &[[0.0; 3], [1.0, 0.0, 0.0]]);
        let before = s.gaussians.means.clone();
        translate(&mut s, &[1, 1], [0.25, -0.5, 1.0]).unwrap();
        assert_eq!(s.gaussians.means[1], [1.25, -0.5, 5.0]);
        translate(&mut s, &[1], [-0.25, 0.5, -1.0]).unwrap();
        assert_eq!(s.gaussians.means, before);
    }
}
