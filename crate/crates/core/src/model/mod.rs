//! Scene representation: Gaussians with geometric, visual and semantic
//! attributes, the semantic head, the label dictionary and text embeddings.

pub mod camera;
pub mod dictionary;
pub mod sh;

pub use camera::Camera;
pub use dictionary::{EmbeddingTable, SemanticDictionary, UNDETECTED};

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Quat, Real, Vec3};

/// Dimension of the per-Gaussian semantic code.
pub const SEMANTIC_DIM: usize = 3;

/// Structure-of-arrays storage for all Gaussians of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSoA<F> {
    pub means: Vec<Vec3<F>>,
    /// Unit quaternions, wxyz.
    pub rotations: Vec<Quat<F>>,
    pub log_scales: Vec<Vec3<F>>,
    pub opacity_logits: Vec<F>,
    /// `num_coeffs(sh_degree) * 3` values per Gaussian, `[basis][channel]`.
    pub sh: Vec<F>,
    pub semantics: Vec<Vec3<F>>,
    sh_degree: usize,
}

impl<F: Real> GaussianSoA<F> {
    pub fn new(sh_degree: usize) -> Self {
        assert!(sh_degree <= sh::MAX_SH_DEGREE, "SH degree {sh_degree} unsupported");
        GaussianSoA {
            means: Vec::new(),
            rotations: Vec::new(),
            log_scales: Vec::new(),
            opacity_logits: Vec::new(),
            sh: Vec::new(),
            semantics: Vec::new(),
            sh_degree,
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn sh_degree(&self) -> usize {
        self.sh_degree
    }

    /// SH scalars per Gaussian (all three channels).
    pub fn sh_stride(&self) -> usize {
        sh::num_coeffs(self.sh_degree) * 3
    }

    pub fn sh_of(&self, i: usize) -> &[F] {
        let s = self.sh_stride();
        &self.sh[i * s..(i + 1) * s]
    }

    pub fn sh_of_mut(&mut self, i: usize) -> &mut [F] {
        let s = self.sh_stride();
        &mut self.sh[i * s..(i + 1) * s]
    }

    pub fn opacity(&self, i: usize) -> F {
        math::sigmoid(self.opacity_logits[i])
    }

    pub fn scale(&self, i: usize) -> Vec3<F> {
        self.log_scales[i].map(F::exp)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        mean: Vec3<F>,
        rotation: Quat<F>,
        log_scale: Vec3<F>,
        opacity_logit: F,
        sh: &[F],
        semantic: Vec3<F>,
    ) {
        assert_eq!(sh.len(), self.sh_stride(), "SH coefficient count mismatch");
        self.means.push(mean);
        self.rotations.push(rotation);
        self.log_scales.push(log_scale);
        self.opacity_logits.push(opacity_logit);
        self.sh.extend_from_slice(sh);
        self.semantics.push(semantic);
    }

    /// Appends row `i` of `other` (which must share this SH degree).
    pub fn push_from(&mut self, other: &GaussianSoA<F>, i: usize) {
        self.push(
            other.means[i],
            other.rotations[i],
            other.log_scales[i],
            other.opacity_logits[i],
            other.sh_of(i),
            other.semantics[i],
        );
    }

    /// Appends a copy of row `i`.
    pub fn push_from_self(&mut self, i: usize) {
        let stride = self.sh_stride();
        self.means.push(self.means[i]);
        self.rotations.push(self.rotations[i]);
        self.log_scales.push(self.log_scales[i]);
        self.opacity_logits.push(self.opacity_logits[i]);
        self.sh.extend_from_within(i * stride..(i + 1) * stride);
        self.semantics.push(self.semantics[i]);
    }

    /// Keeps rows where `keep[i]` is true, preserving order.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        let stride = self.sh_stride();
        let mut it = keep.iter();
        self.means.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.rotations.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.log_scales.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.opacity_logits.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.semantics.retain(|_| *it.next().unwrap());
        let mut sh = Vec::with_capacity(self.means.len() * stride);
        for (i, &k) in keep.iter().enumerate() {
            if k {
                sh.extend_from_slice(&self.sh[i * stride..(i + 1) * stride]);
            }
        }
        self.sh = sh;
    }

    pub fn check_consistent(&self) -> Result<()> {
        let n = self.len();
        if self.rotations.len() != n
            || self.log_scales.len() != n
            || self.opacity_logits.len() != n
            || self.semantics.len() != n
            || self.sh.len() != n * self.sh_stride()
        {
            return Err(Error::invalid("Gaussian arrays have unequal lengths"));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.means.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
            && self.sh.iter().all(|v| v.is_finite())
            && self.semantics.iter().flatten().all(|v| v.is_finite())
    }

    /// Re-lays the SH coefficients for a different degree, truncating or
    /// zero-padding higher bands.
    pub fn with_sh_degree(&self, degree: usize) -> GaussianSoA<F> {
        assert!(degree <= sh::MAX_SH_DEGREE);
        let old = self.sh_stride();
        let new = sh::num_coeffs(degree) * 3;
        let mut out = self.clone();
        out.sh_degree = degree;
        out.sh = Vec::with_capacity(self.len() * new);
        for i in 0..self.len() {
            let src = &self.sh[i * old..(i + 1) * old];
            for k in 0..new {
                out.sh.push(src.get(k).copied().unwrap_or_else(F::zero));
            }
        }
        out
    }

    pub fn cast<G: Real>(&self) -> GaussianSoA<G> {
        let c = |v: F| G::lit(v.as_f64());
        GaussianSoA {
            means: self.means.iter().map(|v| v.map(c)).collect(),
            rotations: self.rotations.iter().map(|v| v.map(c)).collect(),
            log_scales: self.log_scales.iter().map(|v| v.map(c)).collect(),
            opacity_logits: self.opacity_logits.iter().map(|&v| c(v)).collect(),
            sh: self.sh.iter().map(|&v| c(v)).collect(),
            semantics: self.semantics.iter().map(|v| v.map(c)).collect(),
            sh_degree: self.sh_degree,
        }
    }
}

/// Affine map from a semantic feature to class logits: `A·f + b`, with row 0
/// the undetected class and rows `1..=N` the dictionary entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticHead<F> {
    pub weights: Vec<Vec3<F>>,
    pub bias: Vec<F>,
}

impl<F: Real> SemanticHead<F> {
    pub fn zeros(num_classes: usize) -> Self {
        SemanticHead {
            weights: vec![[F::zero(); 3]; num_classes],
            bias: vec![F::zero(); num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits_into(&self, feature: Vec3<F>, out: &mut [F]) {
        for ((o, w), &b) in out.iter_mut().zip(&self.weights).zip(&self.bias) {
            *o = math::dot3(*w, feature) + b;
        }
    }

    pub fn logits(&self, feature: Vec3<F>) -> Vec<F> {
        let mut out = vec![F::zero(); self.num_classes()];
        self.logits_into(feature, &mut out);
        out
    }

    /// Appends zero-initialized rows until the head covers `num_classes`.
    pub fn pad_to(&mut self, num_classes: usize) {
        while self.bias.len() < num_classes {
            self.weights.push([F::zero(); 3]);
            self.bias.push(F::zero());
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().flatten().all(|v| v.is_finite()) && self.bias.iter().all(|v| v.is_finite())
    }

    pub fn cast<G: Real>(&self) -> SemanticHead<G> {
        let c = |v: F| G::lit(v.as_f64());
        SemanticHead {
            weights: self.weights.iter().map(|w| w.map(c)).collect(),
            bias: self.bias.iter().map(|&b| c(b)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene<F> {
    pub gaussians: GaussianSoA<F>,
    pub head: SemanticHead<F>,
    pub dictionary: SemanticDictionary,
    pub embeddings: EmbeddingTable,
    pub background: Vec3<F>,
}

impl<F: Real> Scene<F> {
    pub fn new(
        gaussians: GaussianSoA<F>,
        head: SemanticHead<F>,
        dictionary: SemanticDictionary,
        embeddings: EmbeddingTable,
        background: Vec3<F>,
    ) -> Result<Self> {
        let scene = Scene {
            gaussians,
            head,
            dictionary,
            embeddings,
            background,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn sh_degree(&self) -> usize {
        self.gaussians.sh_degree()
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.gaussians.check_consistent()?;
        let classes = self.dictionary.num_classes();
        if self.head.num_classes() != classes || self.head.weights.len() != classes {
            return Err(Error::Config(format!(
                "semantic head has {} classes, dictionary needs {}",
                self.head.num_classes(),
                classes
            )));
        }
        if self.embeddings.num_entries() != self.dictionary.len() {
            return Err(Error::Config(format!(
                "embedding table has {} entries, dictionary has {}",
                self.embeddings.num_entries(),
                self.dictionary.len()
            )));
        }
        if self.background.iter().any(|c| !(F::zero()..=F::one()).contains(c)) {
            return Err(Error::invalid("background color must lie in [0,1]"));
        }
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> Scene<G> {
        Scene {
            gaussians: self.gaussians.cast(),
            head: self.head.cast(),
            dictionary: self.dictionary.clone(),
            embeddings: self.embeddings.clone(),
            background: self.background.map(|v| G::lit(v.as_f64())),
        }
    }
}

/// `R · diag(exp(2·log_scale)) · Rᵀ` for the rotation of `q`.
pub fn covariance_of<F: Real>(q: Quat<F>, log_scale: Vec3<F>) -> Result<Mat3<F>> {
    if q.iter().chain(log_scale.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite quaternion or scale"));
    }
    let n2 = q.iter().map(|&v| v * v).sum::<F>();
    if (n2.sqrt() - F::one()).abs() > F::lit(1e-4) {
        return Err(Error::invalid(format!("quaternion norm {} is not 1", n2.sqrt())));
    }
    Ok(covariance_unchecked(q, log_scale))
}

pub(crate) fn covariance_unchecked<F: Real>(q: Quat<F>, log_scale: Vec3<F>) -> Mat3<F> {
    let r = math::quat_to_rotation(q);
    let s2 = log_scale.map(|l| (l + l).exp());
    let mut out = [[F::zero(); 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = r[i][0] * s2[0] * r[j][0] + r[i][1] * s2[1] * r[j][1] + r[i][2] * s2[2] * r[j][2];
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit_quat(rng: &mut ChaCha8Rng) -> Quat<f64> {
        let mut q: Quat<f64> = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        math::normalize_quat(&mut q);
        q
    }

    /// Rodrigues' formula from the axis-angle form of `q`.
    fn rodrigues(q: Quat<f64>) -> Mat3<f64> {
        let s = (q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let angle = 2.0 * s.atan2(q[0]);
        if s < 1e-15 {
            return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        }
        let k = [q[1] / s, q[2] / s, q[3] / s];
        let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
        let kx2 = math::mat_mul(&kx, &kx);
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = if i == j { 1.0 } else { 0.0 } + angle.sin() * kx[i][j] + (1.0 - angle.cos()) * kx2[i][j];
            }
        }
        r
    }

    #[test]
    fn identity_covariance() {
        let c = covariance_of([1.0f64, 0.0, 0.0, 0.0], [0.0; 3]).unwrap();
        assert_eq!(c, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn axis_aligned_scaling() {
        let c = covariance_of([1.0f64, 0.0, 0.0, 0.0], [2f64.ln(), 0.0, 0.0]).unwrap();
        assert!((c[0][0] - 4.0).abs() < 1e-12);
        assert_eq!(c[1][1], 1.0);
        assert_eq!(c[2][2], 1.0);
        assert_eq!(c[0][1], 0.0);
    }

    #[test]
    fn rejects_non_finite_and_non_unit() {
        assert!(covariance_of([f64::NAN, 0.0, 0.0, 0.0], [0.0; 3]).is_err());
        assert!(covariance_of([1.0f64, 0.0, 0.0, 0.0], [f64::INFINITY, 0.0, 0.0]).is_err());
        assert!(covariance_of([2.0f64, 0.0, 0.0, 0.0], [0.0; 3]).is_err());
    }

    #[test]
    fn matches_rodrigues_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = random_unit_quat(&mut rng);
            let ls: Vec3<f64> = [
                rng.random_range(-2.0..1.0),
                rng.random_range(-2.0..1.0),
                rng.random_range(-2.0..1.0),
            ];
            let r = rodrigues(q);
            let s = ls.map(f64::exp);
            let rs = [
                [r[0][0] * s[0], r[0][1] * s[1], r[0][2] * s[2]],
                [r[1][0] * s[0], r[1][1] * s[1], r[1][2] * s[2]],
                [r[2][0] * s[0], r[2][1] * s[1], r[2][2] * s[2]],
            ];
            let want = math::mat_mul(&rs, &math::transpose(&rs));
            let got = covariance_of(q, ls).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((got[i][j] - want[i][j]).abs() < 1e-10);
                    assert_eq!(got[i][j], got[j][i]);
                }
            }
        }
    }

    #[test]
    fn rotation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let q = random_unit_quat(&mut rng);
            let r = random_unit_quat(&mut rng);
            let ls: Vec3<f64> = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let lhs = covariance_of(math::quat_mul(r, q), ls).unwrap();
            let rm = math::quat_to_rotation(r);
            let rhs = math::mat_mul(&math::mat_mul(&rm, &covariance_of(q, ls).unwrap()), &math::transpose(&rm));
            for i in 0..3 {
                for j in 0..3 {
                    assert!((lhs[i][j] - rhs[i][j]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn retain_rows_keeps_sh_in_step() {
        let mut g = GaussianSoA::<f32>::new(1);
        for i in 0..4 {
            let sh = vec![i as f32; 12];
            g.push([i as f32; 3], [1.0, 0.0, 0.0, 0.0], [0.0; 3], 0.0, &sh, [0.0; 3]);
        }
        g.retain_rows(&[true, false, true, false]);
        assert_eq!(g.len(), 2);
        assert_eq!(g.sh_of(1), &[2.0; 12]);
        assert_eq!(g.means[1], [2.0; 3]);
        g.check_consistent().unwrap();
    }
}
