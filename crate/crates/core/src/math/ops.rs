//! Forward kernels and their recorded backward counterparts.
//!
//! The free functions are pure. The op structs (`Affine`, `Conv1d`,
//! `KMaxPool`, `Tanh`) record what their backward pass needs during
//! `forward` and return [`Error::State`] if asked for gradients first.
//! Backward methods accumulate parameter gradients into caller-owned
//! buffers and return the gradient w.r.t. the op input.

use crate::error::{Error, Result};
use crate::math::Matrix;

pub fn matvec(m: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if m.cols() != x.len() {
        return Err(Error::shape("matvec", m.shape_str(), format!("vector[{}]", x.len())));
    }
    Ok((0..m.rows()).map(|r| dot(m.row(r), x)).collect())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-pads `seq` with zero rows until it has at least `width` rows.
pub fn pad_to_width(seq: &Matrix, width: usize) -> Matrix {
    if seq.rows() >= width {
        return seq.clone();
    }
    let mut out = Matrix::zeros(width, seq.cols());
    out.as_mut_slice()[..seq.len()].copy_from_slice(seq.as_slice());
    out
}

/// Valid (narrow) 1-D convolution.
///
/// `filters` is `nk x (width * emb)`; filter `f` at offset `i` and embedding
/// dimension `e` lives at column `i * emb + e`.
pub fn conv1d(seq: &Matrix, filters: &Matrix, width: usize, bias: &[f64]) -> Result<Matrix> {
    let emb = seq.cols();
    if width == 0 || filters.cols() != width * emb {
        return Err(Error::shape(
            "conv1d",
            format!("filters {}", filters.shape_str()),
            format!("width {width} x emb {emb}"),
        ));
    }
    if bias.len() != filters.rows() {
        return Err(Error::shape(
            "conv1d",
            format!("filters {}", filters.shape_str()),
            format!("bias[{}]", bias.len()),
        ));
    }
    if seq.rows() < width {
        return Err(Error::Contract(format!(
            "conv1d input of length {} is shorter than filter width {width}; pad first",
            seq.rows()
        )));
    }
    let steps = seq.rows() - width + 1;
    let nk = filters.rows();
    let mut out = Matrix::zeros(steps, nk);
    for t in 0..steps {
        // rows t..t+width are contiguous in row-major storage
        let window = &seq.as_slice()[t * emb..(t + width) * emb];
        let dst = out.row_mut(t);
        for f in 0..nk {
            dst[f] = bias[f] + dot(window, filters.row(f));
        }
    }
    Ok(out)
}

/// Per column, keeps the `k` largest values in their original order.
/// Columns shorter than `k` are zero-padded at the end. Ties go to the
/// earlier index.
pub fn kmax_pool(seq: &Matrix, k: usize) -> Matrix {
    kmax_select(seq, k).0
}

fn kmax_select(seq: &Matrix, k: usize) -> (Matrix, Vec<Option<usize>>) {
    let (t, nk) = seq.shape();
    let mut out = Matrix::zeros(k, nk);
    // selected[slot * nk + col] = source row
    let mut selected = vec![None; k * nk];
    let mut order: Vec<usize> = Vec::with_capacity(t);
    for col in 0..nk {
        order.clear();
        order.extend(0..t);
        // stable: equal values keep index order
        order.sort_by(|&a, &b| seq[(b, col)].total_cmp(&seq[(a, col)]));
        order.truncate(k);
        order.sort_unstable();
        for (slot, &src) in order.iter().enumerate() {
            out[(slot, col)] = seq[(src, col)];
            selected[slot * nk + col] = Some(src);
        }
    }
    (out, selected)
}

/// Numerically stable `log(sum(exp(xs)))`.
pub fn logsumexp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Domain("logsumexp of an empty vector".into()));
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(max);
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

pub fn tanh(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Softmax in place over a slice.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// `y = W x (+ b)` with `W` stored as `out x in`.
#[derive(Debug, Default, Clone)]
pub struct Affine {
    input: Option<Vec<f64>>,
}

impl Affine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, w: &Matrix, b: Option<&[f64]>, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = matvec(w, x)?;
        if let Some(b) = b {
            if b.len() != y.len() {
                return Err(Error::shape("affine", w.shape_str(), format!("bias[{}]", b.len())));
            }
            y.iter_mut().zip(b).for_each(|(y, b)| *y += b);
        }
        self.input = Some(x.to_vec());
        Ok(y)
    }

    /// Accumulates `dW += up x^T` and `db += up`; returns `W^T up`.
    pub fn backward_into(
        &self,
        w: &Matrix,
        upstream: &[f64],
        dw: &mut Matrix,
        db: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        let x = self.input.as_ref().ok_or(Error::State("affine"))?;
        if upstream.len() != w.rows() {
            return Err(Error::shape(
                "affine backward",
                w.shape_str(),
                format!("upstream[{}]", upstream.len()),
            ));
        }
        w.check_same_shape("affine backward", dw)?;
        let mut dx = vec![0.0; w.cols()];
        for (r, &g) in upstream.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let wr = w.row(r);
            for (d, wv) in dx.iter_mut().zip(wr) {
                *d += g * wv;
            }
            for (d, xv) in dw.row_mut(r).iter_mut().zip(x) {
                *d += g * xv;
            }
        }
        if let Some(db) = db {
            db.iter_mut().zip(upstream).for_each(|(d, g)| *d += g);
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    width: usize,
    input: Option<Matrix>,
}

impl Conv1d {
    pub fn new(width: usize) -> Self {
        Conv1d { width, input: None }
    }

    pub fn forward(&mut self, seq: &Matrix, filters: &Matrix, bias: &[f64]) -> Result<Matrix> {
        let out = conv1d(seq, filters, self.width, bias)?;
        self.input = Some(seq.clone());
        Ok(out)
    }

    /// Accumulates filter and bias gradients; returns the gradient w.r.t.
    /// the (padded) input sequence.
    pub fn backward_into(
        &self,
        filters: &Matrix,
        upstream: &Matrix,
        dfilters: &mut Matrix,
        dbias: &mut [f64],
    ) -> Result<Matrix> {
        let seq = self.input.as_ref().ok_or(Error::State("conv1d"))?;
        let emb = seq.cols();
        let w = self.width;
        let steps = seq.rows() + 1 - w;
        if upstream.shape() != (steps, filters.rows()) {
            return Err(Error::shape(
                "conv1d backward",
                format!("{steps}x{}", filters.rows()),
                upstream.shape_str(),
            ));
        }
        filters.check_same_shape("conv1d backward", dfilters)?;
        let mut dseq = Matrix::zeros(seq.rows(), emb);
        for t in 0..steps {
            let window = &seq.as_slice()[t * emb..(t + w) * emb];
            for (f, &g) in upstream.row(t).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                dbias[f] += g;
                for (d, x) in dfilters.row_mut(f).iter_mut().zip(window) {
                    *d += g * x;
                }
                let dwin = &mut dseq.as_mut_slice()[t * emb..(t + w) * emb];
                for (d, fv) in dwin.iter_mut().zip(filters.row(f)) {
                    *d += g * fv;
                }
            }
        }
        Ok(dseq)
    }
}

#[derive(Debug, Clone)]
pub struct KMaxPool {
    k: usize,
    record: Option<(usize, usize, Vec<Option<usize>>)>,
}

impl KMaxPool {
    pub fn new(k: usize) -> Self {
        KMaxPool { k, record: None }
    }

    pub fn forward(&mut self, seq: &Matrix) -> Matrix {
        let (out, selected) = kmax_select(seq, self.k);
        self.record = Some((seq.rows(), seq.cols(), selected));
        out
    }

    /// Routes each upstream entry back to the row it was selected from;
    /// padding slots receive no gradient.
    pub fn backward(&self, upstream: &Matrix) -> Result<Matrix> {
        let (rows, nk, selected) = self.record.as_ref().ok_or(Error::State("kmax_pool"))?;
        if upstream.shape() != (self.k, *nk) {
            return Err(Error::shape(
                "kmax_pool backward",
                format!("{}x{nk}", self.k),
                upstream.shape_str(),
            ));
        }
        let mut grad = Matrix::zeros(*rows, *nk);
        for slot in 0..self.k {
            for col in 0..*nk {
                if let Some(src) = selected[slot * nk + col] {
                    grad[(src, col)] += upstream[(slot, col)];
                }
            }
        }
        Ok(grad)
    }
}

#[derive(Debug, Default, Clone)]
pub struct Tanh {
    output: Option<Vec<f64>>,
}

impl Tanh {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &[f64]) -> Vec<f64> {
        let h = tanh(x);
        self.output = Some(h.clone());
        h
    }

    /// Activations recorded by the last forward pass.
    pub fn output(&self) -> Option<&[f64]> {
        self.output.as_deref()
    }

    pub fn backward(&self, upstream: &[f64]) -> Result<Vec<f64>> {
        let h = self.output.as_ref().ok_or(Error::State("tanh"))?;
        if h.len() != upstream.len() {
            return Err(Error::shape(
                "tanh backward",
                format!("[{}]", h.len()),
                format!("[{}]", upstream.len()),
            ));
        }
        Ok(h.iter().zip(upstream).map(|(h, g)| (1.0 - h * h) * g).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matvec_small_cases() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&m, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        let x = [0.3, -1.5, 2.25];
        assert_eq!(matvec(&Matrix::identity(3), &x).unwrap(), x.to_vec());
    }

    #[test]
    fn matvec_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng, 5, 4);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut naive = vec![0.0; 5];
        for (i, out) in naive.iter_mut().enumerate() {
            for (j, xv) in x.iter().enumerate() {
                *out += m[(i, j)] * xv;
            }
        }
        assert_eq!(matvec(&m, &x).unwrap(), naive);
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let err = matvec(&Matrix::zeros(2, 3), &[1.0, 2.0]).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("vector[2]"), "{err}");
    }

    #[test]
    fn conv1d_running_sum() {
        let seq = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let filt = Matrix::from_vec(1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        let out = conv1d(&seq, &filt, 3, &[0.0]).unwrap();
        assert_eq!(out.as_slice(), &[6.0, 9.0]);
    }

    #[test]
    fn conv1d_zero_filters_give_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seq = random_matrix(&mut rng, 5, 3);
        let out = conv1d(&seq, &Matrix::zeros(2, 6), 2, &[0.5, -1.0]).unwrap();
        for t in 0..4 {
            assert_eq!(out.row(t), &[0.5, -1.0]);
        }
    }

    #[test]
    fn conv1d_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (l, w, emb, nk) = (7, 3, 5, 4);
        let seq = random_matrix(&mut rng, l, emb);
        let filt = random_matrix(&mut rng, nk, w * emb);
        let bias: Vec<f64> = (0..nk).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = conv1d(&seq, &filt, w, &bias).unwrap();
        for t in 0..l - w + 1 {
            for f in 0..nk {
                let mut acc = bias[f];
                for i in 0..w {
                    for e in 0..emb {
                        acc += seq[(t + i, e)] * filt[(f, i * emb + e)];
                    }
                }
                assert!((out[(t, f)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv1d_rejects_short_input() {
        let seq = Matrix::zeros(1, 2);
        assert!(matches!(
            conv1d(&seq, &Matrix::zeros(1, 4), 2, &[0.0]),
            Err(Error::Contract(_))
        ));
        let padded = pad_to_width(&seq, 2);
        assert_eq!(conv1d(&padded, &Matrix::zeros(1, 4), 2, &[0.0]).unwrap().rows(), 1);
    }

    #[test]
    fn kmax_examples() {
        let col = Matrix::from_vec(5, 1, vec![1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        assert_eq!(kmax_pool(&col, 2).as_slice(), &[5.0, 4.0]);
        let short = Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(kmax_pool(&short, 3).as_slice(), &[1.0, 2.0, 0.0]);
        // tie: earlier index wins
        let tie = Matrix::from_vec(4, 1, vec![2.0, 1.0, 2.0, 2.0]).unwrap();
        let mut op = KMaxPool::new(2);
        assert_eq!(op.forward(&tie).as_slice(), &[2.0, 2.0]);
        let g = op.backward(&Matrix::from_vec(2, 1, vec![1.0, 10.0]).unwrap()).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 0.0, 10.0, 0.0]);
    }

    #[test]
    fn kmax_matches_index_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seq = random_matrix(&mut rng, 10, 3);
        let out = kmax_pool(&seq, 4);
        for col in 0..3 {
            let mut idx: Vec<usize> = (0..10).collect();
            idx.sort_by(|&a, &b| seq[(b, col)].partial_cmp(&seq[(a, col)]).unwrap());
            let mut top = idx[..4].to_vec();
            top.sort();
            let expect: Vec<f64> = top.iter().map(|&i| seq[(i, col)]).collect();
            let got: Vec<f64> = (0..4).map(|s| out[(s, col)]).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn kmax_backward_routes_to_selected_rows() {
        let col = Matrix::from_vec(5, 1, vec![1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        let mut op = KMaxPool::new(2);
        op.forward(&col);
        let g = op.backward(&Matrix::from_vec(2, 1, vec![0.7, -0.2]).unwrap()).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0, 0.0, 0.7, -0.2]);
    }

    #[test]
    fn logsumexp_cases() {
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let big = logsumexp(&[1000.0, 1000.0]).unwrap();
        assert!((big - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!(matches!(logsumexp(&[]), Err(Error::Domain(_))));
        assert_eq!(logsumexp(&[f64::NEG_INFINITY; 3]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn logsumexp_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..11).map(|_| rng.gen_range(-5.0..5.0)).collect();
        // direct summation is safe in this range; accumulate in sorted order
        let mut terms: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        terms.sort_by(f64::total_cmp);
        let direct = terms.iter().sum::<f64>().ln();
        assert!((logsumexp(&xs).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let up = Matrix::zeros(1, 1);
        assert!(matches!(KMaxPool::new(1).backward(&up), Err(Error::State(_))));
        assert!(matches!(Tanh::new().backward(&[1.0]), Err(Error::State(_))));
        let mut dw = Matrix::zeros(1, 1);
        assert!(matches!(
            Affine::new().backward_into(&Matrix::zeros(1, 1), &[1.0], &mut dw, None),
            Err(Error::State(_))
        ));
        let mut df = Matrix::zeros(1, 1);
        assert!(matches!(
            Conv1d::new(1).backward_into(&Matrix::zeros(1, 1), &up, &mut df, &mut [0.0]),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn tanh_derivative_at_zero_is_one() {
        let mut op = Tanh::new();
        op.forward(&[0.0]);
        assert_eq!(op.backward(&[1.0]).unwrap(), vec![1.0]);
    }
}
