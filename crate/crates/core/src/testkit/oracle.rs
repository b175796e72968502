//! Brute-force reference implementations, written directly from the
//! definitions with plain nested loops and no numerical safeguards.
//!
//! Nothing here calls into [`crate::retrieval_math`]. Matrices are plain
//! `rows[text][image]` vectors. Intended for `n <= 20`.

#![allow(clippy::needless_range_loop)]

pub const ORACLE_MAX_N: usize = 20;

fn assert_scale(rows: &[Vec<f64>]) {
    assert!(
        rows.len() <= ORACLE_MAX_N,
        "oracle is limited to n <= {ORACLE_MAX_N}, got {}",
        rows.len()
    );
}

/// `a·b / (|a| |b|)` by explicit summation.
pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    dot / (aa.sqrt() * bb.sqrt())
}

/// Image-to-text loss: for each image `i`, `-ln(exp(S[i][i]/τ) / Σ_j exp(S[j][i]/τ))`.
pub fn oracle_loss_v2t(rows: &[Vec<f64>], tau: f64) -> f64 {
    assert_scale(rows);
    let n = rows.len();
    let mut loss = 0.0;
    for i in 0..n {
        let mut denom = 0.0;
        for row in rows.iter().take(n) {
            denom += (row[i] / tau).exp();
        }
        loss -= ((rows[i][i] / tau).exp() / denom).ln();
    }
    loss
}

/// Text-to-image loss: for each text `i`, `-ln(exp(S[i][i]/τ) / Σ_j exp(S[i][j]/τ))`.
pub fn oracle_loss_t2v(rows: &[Vec<f64>], tau: f64) -> f64 {
    assert_scale(rows);
    let n = rows.len();
    let mut loss = 0.0;
    for i in 0..n {
        let mut denom = 0.0;
        for j in 0..n {
            denom += (rows[i][j] / tau).exp();
        }
        loss -= ((rows[i][i] / tau).exp() / denom).ln();
    }
    loss
}

/// Both directions summed.
pub fn oracle_loss(rows: &[Vec<f64>], tau: f64) -> f64 {
    oracle_loss_v2t(rows, tau) + oracle_loss_t2v(rows, tau)
}

/// 1-based position of gallery item `j` in query `q`'s ranking: one plus the
/// number of items scoring higher, or scoring equal with a lower index.
fn position(row: &[f64], j: usize) -> usize {
    let mut pos = 1;
    for (other, score) in row.iter().enumerate() {
        if *score > row[j] || (*score == row[j] && other < j) {
            pos += 1;
        }
    }
    pos
}

/// Rank-K percentage.
pub fn oracle_rank_k(rows: &[Vec<f64>], relevant: &[Vec<usize>], k: usize) -> f64 {
    assert_scale(rows);
    let mut hits = 0;
    for (q, row) in rows.iter().enumerate() {
        let mut best = usize::MAX;
        for j in &relevant[q] {
            best = best.min(position(row, *j));
        }
        if best <= k {
            hits += 1;
        }
    }
    100.0 * hits as f64 / rows.len() as f64
}

/// mAP percentage: per query, the relevant items' positions sorted
/// ascending; the m-th of them contributes precision `m / position`.
pub fn oracle_map(rows: &[Vec<f64>], relevant: &[Vec<usize>]) -> f64 {
    assert_scale(rows);
    let mut sum = 0.0;
    for (q, row) in rows.iter().enumerate() {
        let mut positions: Vec<usize> = relevant[q].iter().map(|j| position(row, *j)).collect();
        positions.sort();
        positions.dedup();
        let mut ap = 0.0;
        for (m, pos) in positions.iter().enumerate() {
            ap += (m + 1) as f64 / *pos as f64;
        }
        sum += ap / positions.len() as f64;
    }
    100.0 * sum / rows.len() as f64
}

/// Rank-K and mAP together.
pub fn oracle_metrics(rows: &[Vec<f64>], relevant: &[Vec<usize>], k: usize) -> (f64, f64) {
    (oracle_rank_k(rows, relevant, k), oracle_map(rows, relevant))
}

/// Central finite-difference gradient of `f` at `rows`, step `h`.
pub fn finite_difference_gradient(rows: &[Vec<f64>], h: f64, f: impl Fn(&[Vec<f64>]) -> f64) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut grad = vec![vec![0.0; n]; n];
    let mut work = rows.to_vec();
    for i in 0..n {
        for j in 0..n {
            let orig = work[i][j];
            work[i][j] = orig + h;
            let up = f(&work);
            work[i][j] = orig - h;
            let down = f(&work);
            work[i][j] = orig;
            grad[i][j] = (up - down) / (2.0 * h);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rank_one() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let rel: Vec<Vec<usize>> = (0..4).map(|i| vec![i]).collect();
        assert_eq!(oracle_rank_k(&rows, &rel, 1), 100.0);
        assert_eq!(oracle_map(&rows, &rel), 100.0);
    }

    #[test]
    fn uniform_loss_is_n_log_n() {
        let rows = vec![vec![0.25; 4]; 4];
        let expected = 4.0 * 4f64.ln();
        assert!((oracle_loss_v2t(&rows, 1.0) - expected).abs() < 1e-12);
        assert!((oracle_loss_t2v(&rows, 1.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn fd_of_quadratic() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let g = finite_difference_gradient(&rows, 1e-4, |m| m.iter().flatten().map(|x| x * x).sum());
        assert!((g[1][0] - 6.0).abs() < 1e-8);
    }
}
