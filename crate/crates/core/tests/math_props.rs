use jointcrf::math::ops::{Affine, Conv1d, KMaxPool, Tanh};
use jointcrf::math::{conv1d, kmax_pool, logsumexp, matvec, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Central difference of the scalar `f` at every entry of `x`.
fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + EPS;
            let plus = f(&x);
            x[i] = orig - EPS;
            let minus = f(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * EPS)
        })
        .collect()
}

fn weighted(out: &[f64], w: &[f64]) -> f64 {
    out.iter().zip(w).map(|(a, b)| a * b).sum()
}

#[test]
fn identity_matvec() {
    let x = [0.5, -2.0, 3.25];
    assert_eq!(matvec(&Matrix::identity(3), &x).unwrap(), x);
}

#[test]
fn affine_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let (r, c) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let w = random_matrix(&mut rng, r, c);
        let b: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut op = Affine::new();
        op.forward(&w, Some(&b), &x).unwrap();
        let mut dw = Matrix::zeros(r, c);
        let mut db = vec![0.0; r];
        let dx = op.backward_into(&w, &up, &mut dw, Some(&mut db)).unwrap();

        let loss_x = |x: &[f64]| weighted(&Affine::new().forward(&w, Some(&b), x).unwrap(), &up);
        for (a, n) in dx.iter().zip(numeric_grad(&x, loss_x)) {
            assert!(rel(*a, n) < TOL, "dx {a} vs {n}");
        }
        let loss_w = |wv: &[f64]| {
            let w = Matrix::from_vec(r, c, wv.to_vec()).unwrap();
            weighted(&Affine::new().forward(&w, Some(&b), &x).unwrap(), &up)
        };
        for (a, n) in dw.as_slice().iter().zip(numeric_grad(w.as_slice(), loss_w)) {
            assert!(rel(*a, n) < TOL, "dw {a} vs {n}");
        }
        let loss_b = |bv: &[f64]| weighted(&Affine::new().forward(&w, Some(bv), &x).unwrap(), &up);
        for (a, n) in db.iter().zip(numeric_grad(&b, loss_b)) {
            assert!(rel(*a, n) < TOL);
        }
    }
}

#[test]
fn conv_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let width = rng.gen_range(1..4);
        let (len, emb, nk) = (rng.gen_range(width..9), rng.gen_range(1..4), rng.gen_range(1..4));
        let seq = random_matrix(&mut rng, len, emb);
        let filters = random_matrix(&mut rng, nk, width * emb);
        let bias: Vec<f64> = (0..nk).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let up = random_matrix(&mut rng, len + 1 - width, nk);

        let mut op = Conv1d::new(width);
        op.forward(&seq, &filters, &bias).unwrap();
        let mut df = Matrix::zeros(nk, width * emb);
        let mut db = vec![0.0; nk];
        let dseq = op.backward_into(&filters, &up, &mut df, &mut db).unwrap();

        let loss_seq = |s: &[f64]| {
            let s = Matrix::from_vec(len, emb, s.to_vec()).unwrap();
            weighted(conv1d(&s, &filters, width, &bias).unwrap().as_slice(), up.as_slice())
        };
        for (a, n) in dseq.as_slice().iter().zip(numeric_grad(seq.as_slice(), loss_seq)) {
            assert!(rel(*a, n) < TOL, "dseq {a} vs {n}");
        }
        let loss_f = |f: &[f64]| {
            let f = Matrix::from_vec(nk, width * emb, f.to_vec()).unwrap();
            weighted(conv1d(&seq, &f, width, &bias).unwrap().as_slice(), up.as_slice())
        };
        for (a, n) in df.as_slice().iter().zip(numeric_grad(filters.as_slice(), loss_f)) {
            assert!(rel(*a, n) < TOL, "dfilters {a} vs {n}");
        }
        let loss_b = |b: &[f64]| weighted(conv1d(&seq, &filters, width, b).unwrap().as_slice(), up.as_slice());
        for (a, n) in db.iter().zip(numeric_grad(&bias, loss_b)) {
            assert!(rel(*a, n) < TOL);
        }
    }
}

#[test]
fn kmax_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let (t, nk, k) = (rng.gen_range(1..8), rng.gen_range(1..4), rng.gen_range(1..5));
        // distinct values keep the selection stable under the perturbation
        let seq = random_matrix(&mut rng, t, nk);
        let up = random_matrix(&mut rng, k, nk);
        let mut op = KMaxPool::new(k);
        op.forward(&seq);
        let grad = op.backward(&up).unwrap();
        let loss = |s: &[f64]| {
            let s = Matrix::from_vec(t, nk, s.to_vec()).unwrap();
            weighted(kmax_pool(&s, k).as_slice(), up.as_slice())
        };
        for (a, n) in grad.as_slice().iter().zip(numeric_grad(seq.as_slice(), loss)) {
            assert!((a - n).abs() < TOL, "{a} vs {n}");
        }
    }
}

#[test]
fn tanh_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let up: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut op = Tanh::new();
    op.forward(&x);
    let g = op.backward(&up).unwrap();
    let loss = |x: &[f64]| weighted(&Tanh::new().forward(x), &up);
    for (a, n) in g.iter().zip(numeric_grad(&x, loss)) {
        assert!(rel(*a, n) < TOL);
    }
}

fn finite_vec(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, n)
}

proptest! {
    #[test]
    fn logsumexp_shift_law(xs in finite_vec(1..12), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let a = logsumexp(&shifted).unwrap();
        let b = logsumexp(&xs).unwrap() + c;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn logsumexp_bounds(xs in finite_vec(1..12)) {
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let l = logsumexp(&xs).unwrap();
        prop_assert!(l >= m && l <= m + (xs.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn kmax_keeps_values_in_order(col in finite_vec(1..12), k in 1usize..6) {
        let seq = Matrix::from_vec(col.len(), 1, col.clone()).unwrap();
        let out = kmax_pool(&seq, k);
        prop_assert_eq!(out.shape(), (k, 1));
        // selected entries are a subsequence of the input, then zero padding
        let kept = k.min(col.len());
        let mut pos = 0;
        for slot in 0..kept {
            let v = out[(slot, 0)];
            let found = col[pos..].iter().position(|&x| x == v);
            prop_assert!(found.is_some());
            pos += found.unwrap() + 1;
        }
        for slot in kept..k {
            prop_assert_eq!(out[(slot, 0)], 0.0);
        }
        // nothing left out is larger than anything kept
        let mut sorted = col.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut kept_vals: Vec<f64> = (0..kept).map(|s| out[(s, 0)]).collect();
        kept_vals.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(kept_vals, sorted[..kept].to_vec());
    }

    #[test]
    fn conv_is_linear_in_filters(seed in 0u64..1000, alpha in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = random_matrix(&mut rng, 6, 3);
        let filters = random_matrix(&mut rng, 4, 9);
        let mut scaled = filters.clone();
        scaled.scale(alpha);
        let zero = [0.0; 4];
        let mut a = conv1d(&seq, &filters, 3, &zero).unwrap();
        a.scale(alpha);
        let b = conv1d(&seq, &scaled, 3, &zero).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn matvec_matches_naive_loops(seed in 0u64..1000, r in 1usize..7, c in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, r, c);
        let x: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = matvec(&m, &x).unwrap();
        for i in 0..r {
            let mut s = 0.0;
            for j in 0..c {
                s += m[(i, j)] * x[j];
            }
            prop_assert_eq!(y[i], s);
        }
    }
}
