//! Numeric core for text-image retrieval.
//!
//! [`SimilarityMatrix`] is laid out with texts on rows and images on
//! columns: `S[i][j] = s(V_j, T_i)`. Both loss directions are derived from
//! that one orientation:
//!
//! * image-to-text: for image `i`, a softmax over texts `j` of `S[j][i]/τ`
//!   (column-wise), target `S[i][i]`;
//! * text-to-image: for text `i`, a softmax over images `j` of `S[i][j]/τ`
//!   (row-wise), target `S[i][i]`.
//!
//! Each direction sums `-log p(target)` over the batch. Rankings for the
//! retrieval metrics treat rows as text queries and break score ties by
//! ascending gallery (column) index.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// CLIP's usual temperature; used when no other value is configured.
pub const DEFAULT_TAU: f64 = 0.07;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MathError {
    #[error("expected {expected} vectors, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("feature vectors must be non-empty and finite")]
    InvalidFeature,
    #[error("zero-norm feature vector at index {0}")]
    ZeroVector(usize),
    #[error("matrix must be square with finite entries ({0} values for n = {1})")]
    NotSquare(usize, usize),
    #[error("matrix must not be empty")]
    Empty,
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("query {0} has no relevant gallery item")]
    NoRelevant(usize),
    #[error("relevant index {index} out of range for query {query}")]
    RelevantOutOfRange { query: usize, index: usize },
    #[error("K must lie in 1..={n}, got {k}")]
    InvalidK { k: usize, n: usize },
    #[error("fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, MathError> {
        if values.is_empty() || values.iter().any(|x| !x.is_finite()) {
            return Err(MathError::InvalidFeature);
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = MathError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        FeatureVector::new(v)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(f: FeatureVector) -> Self {
        f.0
    }
}

/// How a text/image feature pair is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Row-major `n × n` values; row = text, column = image.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, MathError> {
        if n == 0 {
            return Err(MathError::Empty);
        }
        if values.len() != n * n || values.iter().any(|x| !x.is_finite()) {
            return Err(MathError::NotSquare(values.len(), n));
        }
        Ok(SimilarityMatrix { n, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MathError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(MathError::NotSquare(rows.iter().map(Vec::len).sum(), n));
        }
        Self::new(n, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Score of text `text` against image `image`.
    pub fn get(&self, text: usize, image: usize) -> f64 {
        self.values[text * self.n + image]
    }

    pub fn row(&self, text: usize) -> &[f64] {
        &self.values[text * self.n..(text + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let values = (0..n * n).map(|k| self.values[(k % n) * n + k / n]).collect();
        SimilarityMatrix { n, values }
    }

    /// Same matrix with rows and columns both reordered: entry `(i, j)` of
    /// the result is entry `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        assert_eq!(perm.len(), n, "permutation length");
        let values = (0..n * n).map(|k| self.get(perm[k / n], perm[k % n])).collect();
        SimilarityMatrix { n, values }
    }
}

/// Builds `S[i][j] = cosine(text_i, image_j)`.
pub fn mixed_similarity_matrix(
    image_feats: &[FeatureVector],
    text_feats: &[FeatureVector],
) -> Result<SimilarityMatrix, MathError> {
    mixed_similarity_matrix_with(image_feats, text_feats, Similarity::Cosine)
}

pub fn mixed_similarity_matrix_with(
    image_feats: &[FeatureVector],
    text_feats: &[FeatureVector],
    kind: Similarity,
) -> Result<SimilarityMatrix, MathError> {
    let n = image_feats.len();
    if n == 0 {
        return Err(MathError::Empty);
    }
    if text_feats.len() != n {
        return Err(MathError::CountMismatch {
            expected: n,
            actual: text_feats.len(),
        });
    }
    let dim = image_feats[0].dim();
    if let Some(bad) = image_feats.iter().chain(text_feats).find(|f| f.dim() != dim) {
        return Err(MathError::DimensionMismatch(dim, bad.dim()));
    }

    let scale = |feats: &[FeatureVector]| -> Result<Vec<Vec<f64>>, MathError> {
        feats
            .iter()
            .enumerate()
            .map(|(i, f)| match kind {
                Similarity::Dot => Ok(f.as_slice().to_vec()),
                Similarity::Cosine => {
                    let norm = f.norm();
                    if norm == 0.0 {
                        Err(MathError::ZeroVector(i))
                    } else {
                        Ok(f.as_slice().iter().map(|x| x / norm).collect())
                    }
                }
            })
            .collect()
    };
    let images = scale(image_feats)?;
    let texts = scale(text_feats)?;

    let mut values = Vec::with_capacity(n * n);
    for t in &texts {
        for v in &images {
            let dot: f64 = t.iter().zip(v).map(|(a, b)| a * b).sum();
            values.push(match kind {
                Similarity::Cosine => dot.clamp(-1.0, 1.0),
                Similarity::Dot => dot,
            });
        }
    }
    SimilarityMatrix::new(n, values)
}

fn check_tau(tau: f64) -> Result<(), MathError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(MathError::InvalidTemperature(tau))
    }
}

/// `log Σ exp(x)` with max subtraction.
fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Image-to-text loss: column-wise softmax.
pub fn contrastive_loss_v2t(s: &SimilarityMatrix, tau: f64) -> Result<f64, MathError> {
    check_tau(tau)?;
    let n = s.n;
    Ok((0..n)
        .map(|i| log_sum_exp((0..n).map(|j| s.get(j, i) / tau)) - s.get(i, i) / tau)
        .sum::<f64>()
        .max(0.0))
}

/// Text-to-image loss: row-wise softmax.
pub fn contrastive_loss_t2v(s: &SimilarityMatrix, tau: f64) -> Result<f64, MathError> {
    check_tau(tau)?;
    let n = s.n;
    Ok((0..n)
        .map(|i| log_sum_exp(s.row(i).iter().map(|x| x / tau)) - s.get(i, i) / tau)
        .sum::<f64>()
        .max(0.0))
}

pub fn contrastive_loss(s: &SimilarityMatrix, tau: f64) -> Result<f64, MathError> {
    Ok(contrastive_loss_v2t(s, tau)? + contrastive_loss_t2v(s, tau)?)
}

/// Row-major `P[j][i]`: probability the image-to-text softmax for image `i`
/// assigns to text `j`. Every column sums to one.
pub fn image_to_text_probabilities(s: &SimilarityMatrix, tau: f64) -> Result<Vec<f64>, MathError> {
    check_tau(tau)?;
    let n = s.n;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let lse = log_sum_exp((0..n).map(|j| s.get(j, i) / tau));
        for j in 0..n {
            p[j * n + i] = (s.get(j, i) / tau - lse).exp();
        }
    }
    Ok(p)
}

/// Row-major `P[i][j]`: probability the text-to-image softmax for text `i`
/// assigns to image `j`. Every row sums to one.
pub fn text_to_image_probabilities(s: &SimilarityMatrix, tau: f64) -> Result<Vec<f64>, MathError> {
    check_tau(tau)?;
    let n = s.n;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = s.row(i);
        let lse = log_sum_exp(row.iter().map(|x| x / tau));
        for j in 0..n {
            p[i * n + j] = (row[j] / tau - lse).exp();
        }
    }
    Ok(p)
}

/// Gradient of `L_v2t + L_t2v` with respect to every entry of `S`, row-major
/// in the same layout: `(P_v2t + P_t2v - 2·I) / τ`.
pub fn loss_gradient(s: &SimilarityMatrix, tau: f64) -> Result<Vec<f64>, MathError> {
    let n = s.n;
    let col = image_to_text_probabilities(s, tau)?;
    let row = text_to_image_probabilities(s, tau)?;
    Ok((0..n * n)
        .map(|k| {
            let diag = if k / n == k % n { 2.0 } else { 0.0 };
            (col[k] + row[k] - diag) / tau
        })
        .collect())
}

/// Relevant gallery columns for each text query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    relevant: Vec<Vec<usize>>,
}

impl GroundTruth {
    /// Each query's list is sorted and deduplicated. Every query needs at
    /// least one relevant item.
    pub fn new(relevant: Vec<Vec<usize>>) -> Result<Self, MathError> {
        let relevant: Vec<Vec<usize>> = relevant
            .into_iter()
            .map(|mut r| {
                r.sort_unstable();
                r.dedup();
                r
            })
            .collect();
        if let Some(q) = relevant.iter().position(Vec::is_empty) {
            return Err(MathError::NoRelevant(q));
        }
        Ok(GroundTruth { relevant })
    }

    /// Query `i` is relevant to gallery item `j` iff they share an identity.
    pub fn from_identities<T: PartialEq>(queries: &[T], gallery: &[T]) -> Result<Self, MathError> {
        Self::new(
            queries
                .iter()
                .map(|q| gallery.iter().enumerate().filter(|(_, g)| *g == q).map(|(j, _)| j).collect())
                .collect(),
        )
    }

    /// Query `i` relevant only to gallery item `i`.
    pub fn diagonal(n: usize) -> Self {
        GroundTruth {
            relevant: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.relevant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }

    pub fn relevant(&self, query: usize) -> &[usize] {
        &self.relevant[query]
    }

    /// Relabels queries and gallery items by the same permutation used in
    /// [`SimilarityMatrix::permuted`].
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (new, old) in perm.iter().enumerate() {
            inverse[*old] = new;
        }
        GroundTruth {
            relevant: perm
                .iter()
                .map(|old| {
                    let mut r: Vec<usize> = self.relevant[*old].iter().map(|j| inverse[*j]).collect();
                    r.sort_unstable();
                    r
                })
                .collect(),
        }
    }

    fn check_against(&self, s: &SimilarityMatrix) -> Result<(), MathError> {
        if self.relevant.len() != s.n {
            return Err(MathError::CountMismatch {
                expected: s.n,
                actual: self.relevant.len(),
            });
        }
        for (query, rel) in self.relevant.iter().enumerate() {
            if rel.is_empty() {
                return Err(MathError::NoRelevant(query));
            }
            if let Some(&index) = rel.iter().find(|j| **j >= s.n) {
                return Err(MathError::RelevantOutOfRange { query, index });
            }
        }
        Ok(())
    }
}

/// Gallery indices for a query, best first, ties by ascending index.
fn ranking(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    order
}

/// Percentage of text queries with a relevant image among their top `k`.
pub fn rank_k(s: &SimilarityMatrix, gt: &GroundTruth, k: usize) -> Result<f64, MathError> {
    gt.check_against(s)?;
    if k == 0 || k > s.n {
        return Err(MathError::InvalidK { k, n: s.n });
    }
    let hits = (0..s.n)
        .filter(|&q| {
            let rel = gt.relevant(q);
            ranking(s.row(q))[..k].iter().any(|j| rel.binary_search(j).is_ok())
        })
        .count();
    Ok(100.0 * hits as f64 / s.n as f64)
}

/// Mean over queries of average precision, as a percentage.
pub fn mean_average_precision(s: &SimilarityMatrix, gt: &GroundTruth) -> Result<f64, MathError> {
    gt.check_against(s)?;
    let total: f64 = (0..s.n)
        .map(|q| {
            let rel = gt.relevant(q);
            let mut found = 0usize;
            let mut precision_sum = 0.0;
            for (pos, j) in ranking(s.row(q)).into_iter().enumerate() {
                if rel.binary_search(&j).is_ok() {
                    found += 1;
                    precision_sum += found as f64 / (pos + 1) as f64;
                    if found == rel.len() {
                        break;
                    }
                }
            }
            precision_sum / rel.len() as f64
        })
        .sum();
    Ok(100.0 * total / s.n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub rank: BTreeMap<usize, f64>,
    pub map: f64,
}

/// Rank-K for every `k` in `ks` (values above `n` are skipped) plus mAP.
pub fn evaluate(s: &SimilarityMatrix, gt: &GroundTruth, ks: &[usize]) -> Result<RetrievalMetrics, MathError> {
    let mut rank = BTreeMap::new();
    for &k in ks.iter().filter(|k| **k <= s.n) {
        rank.insert(k, rank_k(s, gt, k)?);
    }
    Ok(RetrievalMetrics {
        rank,
        map: mean_average_precision(s, gt)?,
    })
}

/// One line of a feature fixture: `{"id": ..., "identity": ..., "vector": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeature {
    pub id: String,
    #[serde(default)]
    pub identity: Option<String>,
    pub vector: FeatureVector,
}

impl LabeledFeature {
    /// The identity label, or the id when no identity is given.
    pub fn label(&self) -> &str {
        self.identity.as_deref().unwrap_or(&self.id)
    }
}

pub fn read_feature_jsonl<R: BufRead>(input: R) -> Result<Vec<LabeledFeature>, MathError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| MathError::Fixture {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| MathError::Fixture {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn basis(n: usize) -> Vec<FeatureVector> {
        (0..n)
            .map(|i| fv(&(0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn orthonormal_basis_gives_identity() {
        let b = basis(4);
        let s = mixed_similarity_matrix(&b, &b).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(s.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn orientation_rows_are_texts() {
        let images = vec![fv(&[1.0, 0.0]), fv(&[0.0, 1.0])];
        let texts = vec![fv(&[1.0, 1.0]), fv(&[1.0, 0.0])];
        let s = mixed_similarity_matrix(&images, &texts).unwrap();
        assert!((s.get(0, 1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(s.get(1, 1), 0.0);
        assert_eq!(s.get(1, 0), 1.0);
    }

    #[test]
    fn single_pair() {
        let s = mixed_similarity_matrix(&[fv(&[3.0, 4.0])], &[fv(&[4.0, 3.0])]).unwrap();
        assert_eq!(s.n(), 1);
        assert!((s.get(0, 0) - 24.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn dot_product_variant() {
        let s = mixed_similarity_matrix_with(&[fv(&[3.0, 4.0])], &[fv(&[4.0, 3.0])], Similarity::Dot).unwrap();
        assert_eq!(s.get(0, 0), 24.0);
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(
            mixed_similarity_matrix(&basis(2), &basis(3)[..1]),
            Err(MathError::CountMismatch { .. })
        ));
        assert!(matches!(
            mixed_similarity_matrix(&basis(2), &[fv(&[1.0]), fv(&[1.0])]),
            Err(MathError::DimensionMismatch(2, 1))
        ));
        assert_eq!(
            mixed_similarity_matrix(&[fv(&[0.0])], &[fv(&[1.0])]),
            Err(MathError::ZeroVector(0))
        );
        assert_eq!(FeatureVector::new(vec![f64::NAN]), Err(MathError::InvalidFeature));
        assert!(SimilarityMatrix::new(2, vec![0.0; 3]).is_err());
        let s = SimilarityMatrix::new(1, vec![0.5]).unwrap();
        assert!(contrastive_loss_v2t(&s, 0.0).is_err());
        assert!(contrastive_loss_t2v(&s, -1.0).is_err());
    }

    #[test]
    fn single_element_loss_is_zero() {
        let s = SimilarityMatrix::new(1, vec![0.37]).unwrap();
        assert_eq!(contrastive_loss_v2t(&s, 0.07).unwrap(), 0.0);
        assert_eq!(contrastive_loss_t2v(&s, 0.07).unwrap(), 0.0);
        assert_eq!(loss_gradient(&s, 0.07).unwrap(), vec![0.0]);
    }

    #[test]
    fn two_by_two_identity_closed_form() {
        let s = SimilarityMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let e = std::f64::consts::E;
        let expected = 2.0 * -(e / (e + 1.0)).ln();
        assert!((expected - 0.626_523_38).abs() < 1e-8);
        assert!((contrastive_loss_v2t(&s, 1.0).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn uniform_matrix_loss_and_gradient() {
        for n in [2usize, 3, 7] {
            let s = SimilarityMatrix::new(n, vec![0.3; n * n]).unwrap();
            let nf = n as f64;
            let tau = 0.5;
            assert!((contrastive_loss_v2t(&s, tau).unwrap() - nf * nf.ln()).abs() < 1e-9);
            let g = loss_gradient(&s, tau).unwrap();
            for (k, gk) in g.iter().enumerate() {
                let expected = if k / n == k % n { -2.0 * (1.0 - 1.0 / nf) / tau } else { 2.0 / (nf * tau) };
                assert!((gk - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn axis_swap_identity() {
        let s = SimilarityMatrix::from_rows(&[vec![0.9, 0.1, -0.2], vec![0.3, 0.5, 0.0], vec![-0.4, 0.2, 0.8]]).unwrap();
        let t = s.transpose();
        assert!((contrastive_loss_t2v(&s, 0.1).unwrap() - contrastive_loss_v2t(&t, 0.1).unwrap()).abs() < 1e-12);
        assert_eq!(t.transpose(), s);
    }

    #[test]
    fn perfect_ranking_metrics() {
        let b = basis(5);
        let s = mixed_similarity_matrix(&b, &b).unwrap();
        let gt = GroundTruth::diagonal(5);
        assert_eq!(rank_k(&s, &gt, 1).unwrap(), 100.0);
        assert_eq!(mean_average_precision(&s, &gt).unwrap(), 100.0);
    }

    #[test]
    fn relevant_at_exact_k() {
        // Query 0 ranks gallery items 2, 1, 0.
        let s = SimilarityMatrix::from_rows(&[vec![0.1, 0.5, 0.9], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let gt = GroundTruth::new(vec![vec![0], vec![1], vec![2]]).unwrap();
        let first_query_hit = |k| rank_k(&s, &gt, k).unwrap() - 200.0 / 3.0;
        assert!(first_query_hit(2).abs() < 1e-12);
        assert!((rank_k(&s, &gt, 3).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_lower_index() {
        let s = SimilarityMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let gt = GroundTruth::diagonal(2);
        assert_eq!(rank_k(&s, &gt, 1).unwrap(), 50.0);
        assert_eq!(ranking(&[0.2, 0.7, 0.7, 0.1]), vec![1, 2, 0, 3]);
    }

    #[test]
    fn average_precision_ranks_one_and_three() {
        let s = SimilarityMatrix::from_rows(&[vec![0.9, 0.8, 0.7, 0.1], vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]]).unwrap();
        let gt = GroundTruth::new(vec![vec![0, 2], vec![0], vec![0], vec![0]]).unwrap();
        // Only query 0 matters here; the others have AP 1.
        let map = mean_average_precision(&s, &gt).unwrap();
        let ap0 = (1.0 + 2.0 / 3.0) / 2.0;
        assert!((map - 100.0 * (ap0 + 3.0) / 4.0).abs() < 1e-9);
        assert!((100.0 * ap0 - 83.33).abs() < 0.01);
    }

    #[test]
    fn metric_argument_errors() {
        let s = SimilarityMatrix::new(2, vec![0.0; 4]).unwrap();
        assert_eq!(GroundTruth::new(vec![vec![0], vec![]]), Err(MathError::NoRelevant(1)));
        let gt = GroundTruth::diagonal(2);
        assert_eq!(rank_k(&s, &gt, 0), Err(MathError::InvalidK { k: 0, n: 2 }));
        assert_eq!(rank_k(&s, &gt, 3), Err(MathError::InvalidK { k: 3, n: 2 }));
        let bad = GroundTruth::new(vec![vec![5], vec![0]]).unwrap();
        assert!(matches!(mean_average_precision(&s, &bad), Err(MathError::RelevantOutOfRange { .. })));
    }

    #[test]
    fn identities_to_ground_truth() {
        let gt = GroundTruth::from_identities(&["a", "b", "a"], &["a", "a", "b"]).unwrap();
        assert_eq!(gt.relevant(0), &[0, 1]);
        assert_eq!(gt.relevant(1), &[2]);
        assert!(GroundTruth::from_identities(&["z"], &["a"]).is_err());
    }

    #[test]
    fn feature_fixture_parsing() {
        let raw = "{\"id\":\"a\",\"identity\":\"7\",\"vector\":[1.0,0.0]}\n\n{\"id\":\"b\",\"vector\":[0.0,1.0]}\n";
        let feats = read_feature_jsonl(raw.as_bytes()).unwrap();
        assert_eq!(feats.len(), 2);
        assert_eq!(feats[0].label(), "7");
        assert_eq!(feats[1].label(), "b");
        let err = read_feature_jsonl("{\"id\":\"a\",\"vector\":[]}".as_bytes()).unwrap_err();
        assert!(matches!(err, MathError::Fixture { line: 1, .. }));
    }
}
