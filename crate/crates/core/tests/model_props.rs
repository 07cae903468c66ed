mod common;

use std::collections::BTreeMap;

use jointcrf::corpus::{vocabulary, LabelSpace, Span};
use jointcrf::math::Matrix;
use jointcrf::model::{
    forward_query, load_checkpoint, predict, read_manifest, save_checkpoint, slot, softmax_forward, ModelParams,
    OutputLayer, QueryInput, MANIFEST, PARAMS,
};
use jointcrf::querygen::gen_setup2;
use jointcrf::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-line reimplementation of one part: lookup, zero-pad, narrow
/// convolution, k-max pooling, flattened slot-major.
fn oracle_part(p: &ModelParams, tokens: &[usize], entity: bool) -> Vec<f64> {
    let h = &p.hyper;
    let (width, filters, bias) = if entity {
        (h.entity_width, p.value(slot::ENTITY_FILTERS), p.value(slot::ENTITY_BIAS))
    } else {
        (h.context_width, p.value(slot::CONTEXT_FILTERS), p.value(slot::CONTEXT_BIAS))
    };
    let emb = p.value(slot::EMBEDDINGS);
    let dim = h.emb_dim;
    let len = tokens.len().max(width);
    let x = |t: usize, e: usize| if t < tokens.len() { emb[(tokens[t], e)] } else { 0.0 };
    let nk = filters.rows();
    let steps = len - width + 1;
    let mut conv = vec![vec![0.0; nk]; steps];
    for (t, row) in conv.iter_mut().enumerate() {
        for (f, out) in row.iter_mut().enumerate() {
            let mut s = bias[(0, f)];
            for o in 0..width {
                for e in 0..dim {
                    s += filters[(f, o * dim + e)] * x(t + o, e);
                }
            }
            *out = s;
        }
    }
    let mut pooled = vec![0.0; h.k * nk];
    for f in 0..nk {
        let mut idx: Vec<usize> = (0..steps).collect();
        idx.sort_by(|&a, &b| conv[b][f].partial_cmp(&conv[a][f]).unwrap().then(a.cmp(&b)));
        idx.truncate(h.k);
        idx.sort();
        for (s, &t) in idx.iter().enumerate() {
            pooled[s * nk + f] = conv[t][f];
        }
    }
    pooled
}

fn dense_tanh(w: &Matrix, b: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|r| (b[(0, r)] + (0..w.cols()).map(|c| w[(r, c)] * x[c]).sum::<f64>()).tanh())
        .collect()
}

fn oracle_scores(p: &ModelParams, ids: &[usize], si: Span, sj: Span) -> Matrix {
    let n = ids.len();
    let parts: Vec<&[usize]> = vec![
        &ids[..si.start],
        &ids[si.start..si.end],
        &ids[si.end..n],
        &ids[..sj.start],
        &ids[sj.start..sj.end],
        &ids[sj.end..n],
    ];
    let pooled: Vec<Vec<f64>> = parts
        .iter()
        .enumerate()
        .map(|(i, t)| oracle_part(p, t, i == 1 || i == 4))
        .collect();
    let cat = |idx: &[usize]| -> Vec<f64> { idx.iter().flat_map(|&i| pooled[i].clone()).collect() };
    let layout: [(&[usize], &[usize], bool); 3] = [
        (&[0, 2], &[1], false),
        (&[0, 2, 3, 5], &[1, 4], true),
        (&[3, 5], &[4], false),
    ];
    let mut out = Matrix::zeros(3, LabelSpace::N);
    for (pos, (ctx, ent, re)) in layout.iter().enumerate() {
        let base = if *re { slot::RE_CONTEXT_W } else { slot::EC_CONTEXT_W };
        let mut h = dense_tanh(p.value(base), p.value(base + 1), &cat(ctx));
        h.extend(dense_tanh(p.value(base + 2), p.value(base + 3), &cat(ent)));
        let w = p.value(if *re { slot::RE_OUTPUT } else { slot::EC_OUTPUT });
        for c in 0..LabelSpace::N {
            out[(pos, c)] = (0..h.len()).map(|k| w[(c, k)] * h[k]).sum();
        }
    }
    out
}

fn fixture(output: OutputLayer, seed: u64) -> (ModelParams, Vec<jointcrf::corpus::Sentence>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<_> = (0..6).map(|i| common::random_sentence(&mut rng, i, 12)).collect();
    let words = vocabulary([corpus.as_slice()]);
    let mut params = common::tiny_model(output, &words, seed);
    // non-zero biases and transitions so the oracle sees every term
    for s in [slot::CONTEXT_BIAS, slot::ENTITY_BIAS, slot::EC_CONTEXT_B, slot::RE_ENTITY_B, slot::TRANSITIONS] {
        for v in params.tensors[s].value.as_mut_slice() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    (params, corpus)
}

#[test]
fn forward_matches_straight_line_oracle() {
    for seed in 0..20 {
        let (params, corpus) = fixture(OutputLayer::Crf, seed);
        let set = gen_setup2(&corpus);
        for q in set.queries.iter().take(40) {
            let ids = params.encode(&corpus[q.sentence]);
            let got = forward_query(&params, &QueryInput::new(&ids, q).unwrap()).unwrap();
            let want = oracle_scores(&params, &ids, q.span_i, q.span_j);
            assert!(got.max_abs_diff(&want) < 1e-12, "seed {seed}");
        }
    }
}

#[test]
fn zero_weights_give_zero_scores() {
    let (mut params, corpus) = fixture(OutputLayer::Crf, 1);
    for t in &mut params.tensors {
        if t.name != "embeddings" {
            t.value.fill(0.0);
        }
    }
    let q = &gen_setup2(&corpus).queries[0];
    let ids = params.encode(&corpus[q.sentence]);
    let scores = forward_query(&params, &QueryInput::new(&ids, q).unwrap()).unwrap();
    assert!(scores.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn entity_scores_depend_only_on_the_span() {
    // the same span read as e_i or as e_j sees identical inputs
    let (params, corpus) = fixture(OutputLayer::Crf, 3);
    let s = corpus.iter().find(|s| s.tokens.len() >= 6).unwrap();
    let ids = params.encode(s);
    let set = gen_setup2(std::slice::from_ref(s));
    let table = &set.tables[0];
    let mid = table.size() / 2;
    let first = set.queries.iter().find(|q| q.row_i == mid).unwrap();
    let second = set.queries.iter().find(|q| q.row_j == mid).unwrap();
    let a = forward_query(&params, &QueryInput::new(&ids, first).unwrap()).unwrap();
    let b = forward_query(&params, &QueryInput::new(&ids, second).unwrap()).unwrap();
    assert_eq!(a.row(0), b.row(2));
}

#[test]
fn softmax_distributions_sum_to_one() {
    let (params, corpus) = fixture(OutputLayer::Softmax, 4);
    for q in gen_setup2(&corpus).queries.iter().take(30) {
        let ids = params.encode(&corpus[q.sentence]);
        let out = softmax_forward(&params, &QueryInput::new(&ids, q).unwrap()).unwrap();
        assert_eq!((out.p1.len(), out.pr.len(), out.p2.len()), (5, 6, 5));
        for p in [&out.p1, &out.pr, &out.p2] {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0));
        }
        let pred = predict(&params, &QueryInput::new(&ids, q).unwrap(), false).unwrap();
        assert!(pred.labels[0] < 5 && (5..11).contains(&pred.labels[1]) && pred.labels[2] < 5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_are_linear_in_output_weights(seed in 0u64..500, alpha in -4.0f64..4.0) {
        let (params, corpus) = fixture(OutputLayer::Crf, seed);
        let set = gen_setup2(&corpus);
        prop_assume!(!set.queries.is_empty());
        let q = &set.queries[seed as usize % set.queries.len()];
        let ids = params.encode(&corpus[q.sentence]);
        let input = QueryInput::new(&ids, q).unwrap();
        let mut base = forward_query(&params, &input).unwrap();
        let mut scaled = params.clone();
        scaled.tensors[slot::EC_OUTPUT].value.scale(alpha);
        scaled.tensors[slot::RE_OUTPUT].value.scale(alpha);
        base.scale(alpha);
        prop_assert!(forward_query(&scaled, &input).unwrap().max_abs_diff(&base) < 1e-12);
    }

    #[test]
    fn masked_prediction_is_block_consistent(seed in 0u64..500) {
        let (params, corpus) = fixture(OutputLayer::Crf, seed);
        for q in gen_setup2(&corpus).queries.iter().take(5) {
            let ids = params.encode(&corpus[q.sentence]);
            let y = predict(&params, &QueryInput::new(&ids, q).unwrap(), true).unwrap().labels;
            prop_assert!(y[0] < 5 && y[1] >= 5 && y[2] < 5);
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let (params, corpus) = fixture(OutputLayer::Crf, 8);
    let dir = tempfile::tempdir().unwrap();
    let mut meta = BTreeMap::new();
    meta.insert("note".to_string(), serde_json::json!("x"));
    save_checkpoint(dir.path(), &params, 8, meta.clone()).unwrap();
    let (back, manifest) = load_checkpoint(dir.path()).unwrap();
    assert_eq!(manifest.seed, 8);
    assert_eq!(manifest.metadata, meta);
    assert_eq!(back.hyper, params.hyper);
    assert_eq!(back.vocab, params.vocab);
    for (a, b) in back.tensors.iter().zip(&params.tensors) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.value.as_slice(), b.value.as_slice());
    }
    for q in gen_setup2(&corpus).queries.iter().take(20) {
        let ids = params.encode(&corpus[q.sentence]);
        let input = QueryInput::new(&ids, q).unwrap();
        assert_eq!(predict(&params, &input, false).unwrap(), predict(&back, &input, false).unwrap());
    }
}

fn rewrite_manifest(dir: &std::path::Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join(MANIFEST);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    edit(&mut v);
    std::fs::write(path, serde_json::to_string(&v).unwrap()).unwrap();
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let (params, _) = fixture(OutputLayer::Crf, 9);
    let fresh = || {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &params, 0, BTreeMap::new()).unwrap();
        dir
    };
    let is_ckpt = |r: jointcrf::Result<_>| matches!(r, Err(Error::Checkpoint { .. }));

    let d = fresh();
    rewrite_manifest(d.path(), |v| v["tensors"][3]["rows"] = serde_json::json!(99));
    assert!(is_ckpt(load_checkpoint(d.path()).map(|_| ())));

    let d = fresh();
    rewrite_manifest(d.path(), |v| v["version"] = serde_json::json!(7));
    assert!(is_ckpt(load_checkpoint(d.path()).map(|_| ())));

    let d = fresh();
    rewrite_manifest(d.path(), |v| v["labels"].as_array_mut().unwrap().swap(0, 1));
    assert!(is_ckpt(load_checkpoint(d.path()).map(|_| ())));

    let d = fresh();
    let bytes = std::fs::read(d.path().join(PARAMS)).unwrap();
    std::fs::write(d.path().join(PARAMS), &bytes[..bytes.len() - 8]).unwrap();
    assert!(is_ckpt(load_checkpoint(d.path()).map(|_| ())));

    let d = fresh();
    std::fs::remove_file(d.path().join(MANIFEST)).unwrap();
    assert!(is_ckpt(read_manifest(d.path()).map(|_| ())));
}
