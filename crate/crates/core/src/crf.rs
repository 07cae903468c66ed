//! Linear-chain CRF over the three-step sequence (entity 1, relation,
//! entity 2).
//!
//! Emissions `d` are a `3 x N` matrix. Transitions `q` are
//! `(N + 2) x (N + 2)`: index `N` is the begin tag and `N + 1` the end tag,
//! so a path `y` scores
//!
//! ```text
//! q[B, y1] + d[0, y1] + q[y1, y2] + d[1, y2] + q[y2, y3] + d[2, y3] + q[y3, E]
//! ```
//!
//! All functions work for any `N`, which keeps toy-sized tests cheap.

use crate::error::{Error, Result};
use crate::math::{logsumexp, Matrix};

pub const LEN: usize = 3;

/// Additive penalty for classes excluded by the decode mask.
pub const MASK_PENALTY: f64 = -1e9;

/// Unified class indices for the three positions.
pub type LabelSequence = [usize; LEN];

fn check(d: &Matrix, q: &Matrix) -> Result<usize> {
    let n = d.cols();
    if d.rows() != LEN || n == 0 {
        return Err(Error::shape("crf", format!("emissions {}", d.shape_str()), format!("{LEN}xN")));
    }
    if q.shape() != (n + 2, n + 2) {
        return Err(Error::shape(
            "crf",
            format!("emissions {}", d.shape_str()),
            format!("transitions {}", q.shape_str()),
        ));
    }
    Ok(n)
}

fn check_labels(y: &LabelSequence, n: usize) -> Result<()> {
    if let Some(bad) = y.iter().find(|&&c| c >= n) {
        return Err(Error::Contract(format!("label {bad} outside class range 0..{n}")));
    }
    Ok(())
}

/// Score `s(y)` of one label path, summed term by term in path order.
pub fn sequence_score(d: &Matrix, q: &Matrix, y: &LabelSequence) -> Result<f64> {
    let n = check(d, q)?;
    check_labels(y, n)?;
    let (begin, end) = (n, n + 1);
    let mut s = q[(begin, y[0])] + d[(0, y[0])];
    for t in 1..LEN {
        s += q[(y[t - 1], y[t])] + d[(t, y[t])];
    }
    Ok(s + q[(y[LEN - 1], end)])
}

/// Forward and backward log-messages for one `(d, q)` pair.
struct Lattice {
    alpha: [Vec<f64>; LEN],
    beta: [Vec<f64>; LEN],
    log_z: f64,
}

impl Lattice {
    fn new(d: &Matrix, q: &Matrix) -> Result<Self> {
        let n = check(d, q)?;
        let (begin, end) = (n, n + 1);
        let mut scratch = vec![0.0; n];

        let mut alpha: [Vec<f64>; LEN] = Default::default();
        alpha[0] = (0..n).map(|c| q[(begin, c)] + d[(0, c)]).collect();
        for t in 1..LEN {
            let mut next = Vec::with_capacity(n);
            for c in 0..n {
                for (p, s) in scratch.iter_mut().enumerate() {
                    *s = alpha[t - 1][p] + q[(p, c)];
                }
                next.push(d[(t, c)] + logsumexp(&scratch)?);
            }
            alpha[t] = next;
        }
        for (c, s) in scratch.iter_mut().enumerate() {
            *s = alpha[LEN - 1][c] + q[(c, end)];
        }
        let log_z = logsumexp(&scratch)?;

        let mut beta: [Vec<f64>; LEN] = Default::default();
        beta[LEN - 1] = (0..n).map(|c| q[(c, end)]).collect();
        for t in (0..LEN - 1).rev() {
            let mut cur = Vec::with_capacity(n);
            for c in 0..n {
                for (nx, s) in scratch.iter_mut().enumerate() {
                    *s = q[(c, nx)] + d[(t + 1, nx)] + beta[t + 1][nx];
                }
                cur.push(logsumexp(&scratch)?);
            }
            beta[t] = cur;
        }
        Ok(Lattice { alpha, beta, log_z })
    }

    fn marginals(&self) -> Matrix {
        let n = self.alpha[0].len();
        let mut m = Matrix::zeros(LEN, n);
        for t in 0..LEN {
            for c in 0..n {
                m[(t, c)] = (self.alpha[t][c] + self.beta[t][c] - self.log_z).exp();
            }
        }
        m
    }
}

/// `log sum_y exp(s(y))` over all `N^3` paths, by the forward algorithm.
pub fn forward_log_z(d: &Matrix, q: &Matrix) -> Result<f64> {
    Ok(Lattice::new(d, q)?.log_z)
}

/// Reference log-partition by explicit enumeration of every path.
/// Refuses class counts above 32.
pub fn brute_force_log_z(d: &Matrix, q: &Matrix) -> Result<f64> {
    let n = check(d, q)?;
    if n > 32 {
        return Err(Error::Oracle(format!("{n} classes exceed the enumeration bound of 32")));
    }
    let mut scores = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                scores.push(sequence_score(d, q, &[a, b, c])?);
            }
        }
    }
    logsumexp(&scores)
}

/// Per-position class marginals `P(y_t = c)`.
pub fn marginals(d: &Matrix, q: &Matrix) -> Result<Matrix> {
    Ok(Lattice::new(d, q)?.marginals())
}

#[derive(Debug, Clone)]
pub struct CrfLoss {
    pub loss: f64,
    pub grad_d: Matrix,
    pub grad_q: Matrix,
}

/// Negative log-likelihood `log Z - s(gold)` and its exact gradients:
/// marginals minus one-hot gold for `d`, expected minus observed transition
/// counts (begin and end included) for `q`.
pub fn nll_and_gradients(d: &Matrix, q: &Matrix, gold: &LabelSequence) -> Result<CrfLoss> {
    let n = check(d, q)?;
    check_labels(gold, n)?;
    let (begin, end) = (n, n + 1);
    let lat = Lattice::new(d, q)?;
    let gold_score = sequence_score(d, q, gold)?;
    // clamp roundoff: log Z dominates every path score
    let loss = (lat.log_z - gold_score).max(0.0);

    let mut grad_d = lat.marginals();
    let mut grad_q = Matrix::zeros(n + 2, n + 2);
    for c in 0..n {
        grad_q[(begin, c)] += grad_d[(0, c)];
        grad_q[(c, end)] += grad_d[(LEN - 1, c)];
    }
    for t in 0..LEN - 1 {
        for p in 0..n {
            let a = lat.alpha[t][p] - lat.log_z;
            for c in 0..n {
                grad_q[(p, c)] += (a + q[(p, c)] + d[(t + 1, c)] + lat.beta[t + 1][c]).exp();
            }
        }
    }

    for (t, &g) in gold.iter().enumerate() {
        grad_d[(t, g)] -= 1.0;
    }
    grad_q[(begin, gold[0])] -= 1.0;
    for t in 1..LEN {
        grad_q[(gold[t - 1], gold[t])] -= 1.0;
    }
    grad_q[(gold[LEN - 1], end)] -= 1.0;

    Ok(CrfLoss { loss, grad_d, grad_q })
}

/// Restricts positions 0 and 2 to `ec` classes and position 1 to the rest
/// by adding [`MASK_PENALTY`] to excluded entries.
pub fn apply_position_mask(d: &Matrix, n_ec: usize) -> Matrix {
    let mut masked = d.clone();
    for c in 0..d.cols() {
        let is_ec = c < n_ec;
        for t in 0..LEN {
            if is_ec != (t != 1) {
                masked[(t, c)] += MASK_PENALTY;
            }
        }
    }
    masked
}

/// Highest-scoring path. Among equal scores, the lowest class index wins at
/// the earliest differing position. The returned score is recomputed with
/// [`sequence_score`].
pub fn viterbi(d: &Matrix, q: &Matrix) -> Result<(LabelSequence, f64)> {
    let n = check(d, q)?;
    let (begin, end) = (n, n + 1);
    // best completion score from each (position, class) to the end tag
    let mut tail = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for c in 0..n {
        tail[LEN - 1][c] = q[(c, end)];
    }
    for t in (0..LEN - 1).rev() {
        for c in 0..n {
            tail[t][c] = (0..n)
                .map(|nx| q[(c, nx)] + d[(t + 1, nx)] + tail[t + 1][nx])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    // greedy lexicographic choice against the exact completion scores
    let mut y = [0usize; LEN];
    let mut prev = begin;
    for t in 0..LEN {
        let mut best = f64::NEG_INFINITY;
        for c in 0..n {
            let v = q[(prev, c)] + d[(t, c)] + tail[t][c];
            if v > best {
                best = v;
                y[t] = c;
            }
        }
        prev = y[t];
    }
    let score = sequence_score(d, q, &y)?;
    Ok((y, score))
}

/// Viterbi on masked emissions; the score is reported on the unmasked ones.
pub fn viterbi_masked(d: &Matrix, q: &Matrix, n_ec: usize) -> Result<(LabelSequence, f64)> {
    let (y, _) = viterbi(&apply_position_mask(d, n_ec), q)?;
    Ok((y, sequence_score(d, q, &y)?))
}
