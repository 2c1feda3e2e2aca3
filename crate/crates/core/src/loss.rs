//! Symmetric InfoNCE over a batch of embedding pairs.
//!
//! Row i of the batch is a positive pair; everything off the diagonal of
//! the scaled similarity matrix acts as a negative. The loss averages the
//! row-wise (A retrieves V) and column-wise (V retrieves A) cross-entropy:
//!
//! ```text
//! L = 1/(2B) * sum_i [ -log softmax_row(S)[i][i] - log softmax_col(S)[i][i] ]
//! S[i][j] = <a_i, v_j> / temperature
//! ```
//!
//! Log-sum-exp terms subtract the running maximum first, so small
//! temperatures cannot overflow. Swapping the two embedding sets yields a
//! bitwise identical loss and exactly swapped gradients.

use thiserror::Error;

use crate::encoder::Embedding;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("temperature must be positive, got {0}")]
    TemperatureNonPositive(f64),
}

/// Scaled pairwise similarities of one batch, row-major.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    values: Vec<f64>,
    batch: usize,
    temperature: f64,
}

impl SimilarityMatrix {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.batch + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.batch..(i + 1) * self.batch]
    }

    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.batch).map(|i| self.values[i * self.batch + j]).collect()
    }
}

fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Loss and the similarity matrix it was computed from.
///
/// Requires at least two pairs (a single pair has no negatives) and equal
/// embedding widths on both sides.
pub fn infonce_loss(
    a: &[Embedding],
    v: &[Embedding],
    temperature: f64,
) -> Result<(f64, SimilarityMatrix), LossError> {
    if !(temperature > 0.0) {
        return Err(LossError::TemperatureNonPositive(temperature));
    }
    let b = a.len();
    assert_eq!(b, v.len(), "batch sides differ");
    assert!(b >= 2, "a contrastive batch needs at least two pairs");
    assert_eq!(a[0].dim(), v[0].dim(), "embedding widths differ");

    let mut values = Vec::with_capacity(b * b);
    for ai in a {
        for vj in v {
            values.push(ai.dot(vj) / temperature);
        }
    }
    let sim = SimilarityMatrix { values, batch: b, temperature };

    let mut total = 0.0;
    for i in 0..b {
        let row_term = logsumexp(sim.row(i)) - sim.value(i, i);
        let col_term = logsumexp(&sim.column(i)) - sim.value(i, i);
        total += row_term + col_term;
    }
    Ok((total / (2 * b) as f64, sim))
}

/// Gradient of the loss w.r.t. every similarity entry, row-major.
pub fn grad_wrt_similarity(sim: &SimilarityMatrix) -> Vec<f64> {
    let b = sim.batch();
    let row_lse: Vec<f64> = (0..b).map(|i| logsumexp(sim.row(i))).collect();
    let col_lse: Vec<f64> = (0..b).map(|j| logsumexp(&sim.column(j))).collect();
    let scale = (2 * b) as f64;
    let mut g = Vec::with_capacity(b * b);
    for i in 0..b {
        for j in 0..b {
            let delta = if i == j { 1.0 } else { 0.0 };
            let row_term = (sim.value(i, j) - row_lse[i]).exp() - delta;
            let col_term = (sim.value(i, j) - col_lse[j]).exp() - delta;
            g.push((row_term + col_term) / scale);
        }
    }
    g
}

/// Gradients w.r.t. both embedding sets.
pub fn infonce_grad(
    sim: &SimilarityMatrix,
    a: &[Embedding],
    v: &[Embedding],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let b = sim.batch();
    assert_eq!(a.len(), b, "a side does not match the similarity matrix");
    assert_eq!(v.len(), b, "v side does not match the similarity matrix");
    let d = a[0].dim();
    let g = grad_wrt_similarity(sim);
    let tau = sim.temperature();

    let mut grad_a = vec![vec![0.0; d]; b];
    for i in 0..b {
        for j in 0..b {
            let w = g[i * b + j] / tau;
            for (ga, vv) in grad_a[i].iter_mut().zip(v[j].values()) {
                *ga += w * vv;
            }
        }
    }
    let mut grad_v = vec![vec![0.0; d]; b];
    for j in 0..b {
        for i in 0..b {
            let w = g[i * b + j] / tau;
            for (gv, av) in grad_v[j].iter_mut().zip(a[i].values()) {
                *gv += w * av;
            }
        }
    }
    (grad_a, grad_v)
}
