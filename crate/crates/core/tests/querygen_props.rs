mod common;

use jointcrf::corpus::{EcLabel, ReLabel, Span};
use jointcrf::querygen::{gen_setup1, gen_setup2, gen_setup3, split_context, subsample_negatives, Setup};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn worked_example_context_split() {
    let s = common::fig1();
    // Anderson and Middle East
    let split = split_context(s.tokens.len(), Span::new(0, 1), Span::new(7, 9)).unwrap();
    let parts = split.tokens(&s.tokens);
    assert!(parts[0].is_empty());
    assert_eq!(parts[1], ["Anderson"]);
    assert_eq!(parts[2].len(), 14);
    assert_eq!(parts[3], &s.tokens[..7]);
    assert_eq!(parts[4], ["Middle", "East"]);
    assert_eq!(parts[5], ["correspondent", "for", "The", "Associated", "Press", "."]);
}

#[test]
fn split_rejects_bad_spans() {
    assert!(split_context(5, Span::new(2, 4), Span::new(3, 5)).is_err());
    assert!(split_context(5, Span::new(3, 4), Span::new(0, 1)).is_err());
    assert!(split_context(5, Span::new(0, 0), Span::new(1, 2)).is_err());
    assert!(split_context(5, Span::new(0, 1), Span::new(4, 6)).is_err());
}

#[test]
fn worked_example_queries() {
    let s = common::fig1();
    let set1 = gen_setup1(std::slice::from_ref(&s));
    assert_eq!(set1.queries.len(), 3);
    let live = &set1.queries[0];
    assert_eq!((live.gold_t1, live.gold_rel, live.gold_t2), (EcLabel::Peop, ReLabel::LiveIn, EcLabel::Loc));
    assert!(!live.inverse);
    assert_eq!(set1.negatives(), 2);

    // 9 O tokens plus 3 mentions give 12 units
    let set2 = gen_setup2(std::slice::from_ref(&s));
    assert_eq!(set2.tables[0].size(), 12);
    assert_eq!(set2.queries.len(), 12 * 11 / 2);
    let set3 = gen_setup3(std::slice::from_ref(&s));
    assert_eq!(set3.tables[0].size(), 15);
    assert_eq!(set3.queries.len(), 15 * 14 / 2);
    // 1 x 2 = 2 token pairs across Anderson and Middle East
    let live3 = set3.queries.iter().filter(|q| q.gold_rel == ReLabel::LiveIn).count();
    assert_eq!(live3, 2);
}

#[test]
fn inverse_relations_keep_textual_order() {
    let mut s = common::fig1();
    s.relations[0].head = 1;
    s.relations[0].tail = 0;
    let set = gen_setup1(std::slice::from_ref(&s));
    let q = &set.queries[0];
    assert_eq!(q.span_i, Span::new(0, 1));
    assert_eq!(q.gold_rel, ReLabel::LiveIn);
    assert!(q.inverse);
}

#[test]
fn subsampling_keeps_positives_and_matches_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let corpus: Vec<_> = (0..300).map(|i| common::random_sentence(&mut rng, i, 20)).collect();
    let set = gen_setup2(&corpus);
    let negatives = set.negatives();
    let positives = set.queries.len() - negatives;
    assert!(negatives > 2000);
    let p = 0.3;
    let kept = subsample_negatives(&set.queries, p, 11).unwrap();
    let kept_pos = kept.iter().filter(|q| !q.is_negative()).count();
    assert_eq!(kept_pos, positives);
    let kept_neg = (kept.len() - kept_pos) as f64;
    let mean = negatives as f64 * p;
    let sd = (negatives as f64 * p * (1.0 - p)).sqrt();
    assert!((kept_neg - mean).abs() <= 3.0 * sd, "{kept_neg} vs {mean} +- {sd}");

    assert_eq!(subsample_negatives(&set.queries, p, 11).unwrap(), kept);
    assert_eq!(subsample_negatives(&set.queries, 1.0, 0).unwrap(), set.queries);
    assert!(subsample_negatives(&set.queries, 0.0, 0).is_err());
    assert!(subsample_negatives(&set.queries, 1.5, 0).is_err());
}

proptest! {
    #[test]
    fn tables_are_complete(seed in 0u64..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus: Vec<_> = (0..4).map(|i| common::random_sentence(&mut rng, i, 18)).collect();
        for setup in [Setup::EntityPairs, Setup::TableFilling, Setup::TokenTable] {
            let set = jointcrf::querygen::generate(setup, &corpus);
            prop_assert_eq!(set.tables.len(), corpus.len());
            let mut expected_queries = 0;
            for (t, s) in set.tables.iter().zip(&corpus) {
                let m = t.size();
                prop_assert_eq!(t.cell_count(), m * (m + 1) / 2);
                expected_queries += m * (m.saturating_sub(1)) / 2;
                let units = t.units.len();
                match setup {
                    Setup::EntityPairs => prop_assert_eq!(units, s.entities.len()),
                    Setup::TableFilling => prop_assert_eq!(m, units),
                    Setup::TokenTable => prop_assert_eq!(m, s.tokens.len()),
                }
                // each annotated relation sits in exactly one unit pair
                prop_assert_eq!(t.gold_relations.len(), s.relations.len());
                for r in &s.relations {
                    let hits = t.gold_relations.iter().filter(|g| {
                        let (a, b) = (t.units[g.unit_a].entity, t.units[g.unit_b].entity);
                        (a, b) == (Some(r.head), Some(r.tail)) || (a, b) == (Some(r.tail), Some(r.head))
                    }).count();
                    prop_assert_eq!(hits, 1);
                }
            }
            prop_assert_eq!(set.queries.len(), expected_queries);
        }
    }

    #[test]
    fn token_table_has_at_least_as_many_queries(seed in 0u64..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus: Vec<_> = (0..4).map(|i| common::random_sentence(&mut rng, i, 18)).collect();
        prop_assert!(gen_setup3(&corpus).queries.len() >= gen_setup2(&corpus).queries.len());
        prop_assert!(gen_setup2(&corpus).queries.len() >= gen_setup1(&corpus).queries.len());
    }

    #[test]
    fn queries_agree_with_their_tables(seed in 0u64..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus: Vec<_> = (0..3).map(|i| common::random_sentence(&mut rng, i, 15)).collect();
        let set = gen_setup3(&corpus);
        for q in &set.queries {
            let t = &set.tables[q.sentence];
            prop_assert!(q.row_i < q.row_j);
            prop_assert_eq!(q.span_i, t.rows[q.row_i]);
            prop_assert_eq!(q.gold_t1, t.row_label(q.row_i));
            prop_assert_eq!(q.gold_t2, t.row_label(q.row_j));
            prop_assert_eq!(q.gold_sequence()[1], t.cell(q.row_i, q.row_j));
            prop_assert!(split_context(corpus[q.sentence].tokens.len(), q.span_i, q.span_j).is_ok());
        }
    }
}
