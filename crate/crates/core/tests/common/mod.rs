#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use jointcrf::corpus::{
    parse_raw_str, ColumnMap, EcLabel, EmbeddingTable, EntityMention, ReLabel, RelationAnnotation, Sentence,
};
use jointcrf::evaluation::{Counts, PredictedTable};
use jointcrf::model::{init_params, HyperParams, ModelParams, OutputLayer};
use jointcrf::querygen::TableSpec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The worked example: "Anderson , 41 , was the chief Middle East
/// correspondent for The Associated Press ." with one live_in relation.
pub const FIG1_RAW: &str = "\
0\tPeop\t0\tO\tNNP\tAnderson\tO\tO\tO
0\tO\t1\tO\t,\t,\tO\tO\tO
0\tO\t2\tO\tCD\t41\tO\tO\tO
0\tO\t3\tO\t,\t,\tO\tO\tO
0\tO\t4\tO\tVBD\twas\tO\tO\tO
0\tO\t5\tO\tDT\tthe\tO\tO\tO
0\tO\t6\tO\tJJ\tchief\tO\tO\tO
0\tLoc\t7\tO\tNNP/NNP\tMiddle/East\tO\tO\tO
0\tO\t8\tO\tNN\tcorrespondent\tO\tO\tO
0\tO\t9\tO\tIN\tfor\tO\tO\tO
0\tOrg\t10\tO\tDT/NNP/NNP\tThe/Associated/Press\tO\tO\tO
0\tO\t11\tO\t.\t.\tO\tO\tO

0\t7\tLive_In

";

pub fn fig1() -> Sentence {
    parse_raw_str(FIG1_RAW, "fig1", &ColumnMap::default())
        .unwrap()
        .remove(0)
}

/// Random valid sentence: disjoint mentions of random types and
/// relations between distinct named mentions.
pub fn random_sentence(rng: &mut ChaCha8Rng, id: usize, max_len: usize) -> Sentence {
    let len = rng.gen_range(1..=max_len);
    let tokens: Vec<String> = (0..len).map(|_| format!("t{}", rng.gen_range(0..30))).collect();
    let mut entities = Vec::new();
    let mut t = 0;
    while t < len {
        if rng.gen_bool(0.35) {
            let end = (t + rng.gen_range(1..=3)).min(len);
            let label = EcLabel::ALL[rng.gen_range(0..4)];
            entities.push(EntityMention { start: t, end, label });
            t = end;
        } else {
            t += 1;
        }
    }
    let mut relations = Vec::new();
    let mut used = BTreeSet::new();
    for _ in 0..entities.len() {
        if entities.len() < 2 || !rng.gen_bool(0.5) {
            continue;
        }
        let h = rng.gen_range(0..entities.len());
        let tl = rng.gen_range(0..entities.len());
        if h == tl || !used.insert((h.min(tl), h.max(tl))) {
            continue;
        }
        relations.push(RelationAnnotation {
            head: h,
            tail: tl,
            label: ReLabel::ALL[rng.gen_range(0..5)],
        });
    }
    let s = Sentence {
        id: format!("r{id}"),
        tokens,
        entities,
        relations,
    };
    s.validate().expect("generator builds valid sentences");
    s
}

pub fn tiny_hyper(output: OutputLayer) -> HyperParams {
    HyperParams {
        nk_c: 4,
        nk_e: 3,
        h_c: 5,
        h_e: 3,
        k: 3,
        emb_dim: 6,
        context_width: 3,
        entity_width: 2,
        output,
    }
}

pub fn tiny_model(output: OutputLayer, words: &[String], seed: u64) -> ModelParams {
    let emb = EmbeddingTable::random(words, 6, 0.5, seed);
    init_params(tiny_hyper(output), emb, seed + 1).unwrap()
}

fn majority(votes: &[usize]) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let mut ranked: Vec<(usize, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.first().map(|&(label, _)| label)
}

/// Independent recount of the table scoring rules: at-least-one for unit
/// types and gold relations, one FP per distinct label on other pairs.
/// Returns (entity counts, relation counts) indexed by label.
pub fn oracle_counts(spec: &TableSpec, pred: &PredictedTable) -> ([Counts; 5], [Counts; 6]) {
    let mut ec = [Counts::default(); 5];
    let mut re = [Counts::default(); 6];
    for (u, unit) in spec.units.iter().enumerate() {
        let row_labels: Vec<usize> = (0..spec.size())
            .filter(|&r| spec.row_unit[r] == u)
            .filter_map(|r| majority(&pred.row_votes[r]))
            .collect();
        if row_labels.is_empty() {
            continue;
        }
        let gold = unit.label.index();
        let p = if row_labels.contains(&gold) {
            gold
        } else {
            majority(&row_labels).unwrap()
        };
        if p == gold {
            ec[gold].tp += 1;
        } else {
            ec[gold].fn_ += 1;
            ec[p].fp += 1;
        }
    }

    let n = spec.units.len();
    for a in 0..n {
        for b in a..n {
            let cell_labels: Vec<usize> = pred
                .cells
                .iter()
                .filter(|(i, j, _)| {
                    let (x, y) = (spec.row_unit[*i], spec.row_unit[*j]);
                    (x.min(y), x.max(y)) == (a, b)
                })
                .map(|(_, _, l)| l.index())
                .collect();
            if cell_labels.is_empty() && !spec.gold_relations.iter().any(|g| (g.unit_a, g.unit_b) == (a, b)) {
                continue;
            }
            let named: Vec<usize> = cell_labels.iter().copied().filter(|&l| l != ReLabel::N.index()).collect();
            match spec.gold_relations.iter().find(|g| (g.unit_a, g.unit_b) == (a, b)) {
                Some(g) => {
                    let gl = g.label.index();
                    if named.contains(&gl) {
                        re[gl].tp += 1;
                    } else {
                        re[gl].fn_ += 1;
                        let p = majority(&named).unwrap_or(ReLabel::N.index());
                        re[p].fp += 1;
                    }
                }
                None => {
                    let distinct: BTreeSet<usize> = named.into_iter().collect();
                    if distinct.is_empty() {
                        re[ReLabel::N.index()].tp += 1;
                    } else {
                        re[ReLabel::N.index()].fn_ += 1;
                        for l in distinct {
                            re[l].fp += 1;
                        }
                    }
                }
            }
        }
    }
    (ec, re)
}
