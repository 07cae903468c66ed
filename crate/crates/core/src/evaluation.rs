//! Per-class F1, task-wise macro scores, and table-level scoring of query
//! predictions.
//!
//! Predictions for a sentence are folded back into its table: each row
//! collects the entity votes of every query it takes part in, and each
//! off-diagonal cell holds a relation decision. Rows map to units (gold
//! mentions or single uncovered tokens). A unit's type is right if any of
//! its rows is right; a gold relation is found if any cell between its two
//! units carries its label.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::analysis::{disagreement_report, majority_label, DisagreementStats};
use crate::corpus::{EcLabel, LabelSpace, ReLabel};
use crate::crf::LabelSequence;
use crate::error::{Error, Result};
use crate::querygen::{QuerySet, TableSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Counts { tp, fp, fn_ }
    }

    pub fn is_absent(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    pub fn precision(&self) -> Option<f64> {
        (self.tp + self.fp > 0).then(|| self.tp as f64 / (self.tp + self.fp) as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        (self.tp + self.fn_ > 0).then(|| self.tp as f64 / (self.tp + self.fn_) as f64)
    }

    /// `None` for a class that never occurs in gold or predictions.
    pub fn f1(&self) -> Option<f64> {
        if self.is_absent() {
            None
        } else if self.tp == 0 {
            Some(0.0)
        } else {
            let p = self.precision().unwrap_or(0.0);
            let r = self.recall().unwrap_or(0.0);
            Some(2.0 * p * r / (p + r))
        }
    }
}

/// F1 of `class` over aligned prediction and gold lists.
pub fn f1_per_class(predictions: &[usize], golds: &[usize], class: usize) -> Result<Option<f64>> {
    if predictions.len() != golds.len() {
        return Err(Error::shape(
            "f1_per_class",
            format!("{} predictions", predictions.len()),
            format!("{} golds", golds.len()),
        ));
    }
    let mut c = Counts::default();
    for (&p, &g) in predictions.iter().zip(golds) {
        match (p == class, g == class) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            _ => {}
        }
    }
    Ok(c.f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Averages {
    pub avg_ec: f64,
    pub avg_re: f64,
    pub avg_ec_re: f64,
}

fn mean_present(xs: impl IntoIterator<Item = Option<f64>>) -> f64 {
    let present: Vec<f64> = xs.into_iter().flatten().collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Macro F1 over `Peop, Org, Loc, Other` and over the five relations, and
/// their mean. Absent classes (`None`) are left out. Works on any scale.
pub fn macro_and_avg(ec: &[Option<f64>; 4], re: &[Option<f64>; 5], omit_other: bool) -> Averages {
    let ec_used = if omit_other { &ec[..3] } else { &ec[..] };
    let avg_ec = mean_present(ec_used.iter().copied());
    let avg_re = mean_present(re.iter().copied());
    Averages {
        avg_ec,
        avg_re,
        avg_ec_re: (avg_ec + avg_re) / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScore {
    pub label: String,
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl ClassScore {
    fn new(label: String, counts: Counts) -> Self {
        ClassScore {
            label,
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// All five entity classes, `O` last.
    pub ec: Vec<ClassScore>,
    /// All six relation classes, `N` last.
    pub re: Vec<ClassScore>,
    pub averages: Averages,
    pub omit_other: bool,
    pub disagreement: DisagreementStats,
    pub queries: usize,
    pub triple_accuracy: Option<f64>,
}

impl MetricsReport {
    pub fn avg_ec(&self) -> f64 {
        self.averages.avg_ec
    }

    pub fn avg_re(&self) -> f64 {
        self.averages.avg_re
    }

    pub fn avg_ec_re(&self) -> f64 {
        self.averages.avg_ec_re
    }

    pub fn ec_f1(&self, label: EcLabel) -> Option<f64> {
        self.ec[label.index()].f1
    }

    pub fn re_f1(&self, label: ReLabel) -> Option<f64> {
        self.re[label.index()].f1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>8} {:>8} {:>8}", "class", "P", "R", "F1")?;
        let named_ec = &self.ec[..EcLabel::O.index()];
        let named_re = &self.re[..ReLabel::N.index()];
        for s in named_ec.iter().chain(named_re) {
            writeln!(
                f,
                "{:<12} {:>8} {:>8} {:>8}",
                s.label,
                pct(s.precision),
                pct(s.recall),
                pct(s.f1)
            )?;
        }
        let ec_name = if self.omit_other { "Avg EC (no Other)" } else { "Avg EC" };
        writeln!(f, "{ec_name:<30} {:>8.2}", 100.0 * self.averages.avg_ec)?;
        writeln!(f, "{:<30} {:>8.2}", "Avg RE", 100.0 * self.averages.avg_re)?;
        writeln!(f, "{:<30} {:>8.2}", "Avg EC+RE", 100.0 * self.averages.avg_ec_re)?;
        writeln!(f, "entity votes: {}", self.disagreement)
    }
}

/// Query predictions folded back into one sentence's table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictedTable {
    /// Entity-class votes per row, in unified indices.
    pub row_votes: Vec<Vec<usize>>,
    /// `(row_i, row_j, relation)` for each predicted cell, `row_i < row_j`.
    pub cells: Vec<(usize, usize, ReLabel)>,
}

/// Entity votes outside the entity block count as `O`.
fn ec_vote(index: usize) -> usize {
    LabelSpace::as_ec(index).unwrap_or(EcLabel::O).index()
}

/// Relation predictions outside the relation block count as `N`.
fn re_vote(index: usize) -> ReLabel {
    LabelSpace::as_re(index).unwrap_or(ReLabel::N)
}

/// Groups per-query predictions (aligned with `set.queries`) by sentence.
pub fn assemble_tables(set: &QuerySet, predictions: &[LabelSequence]) -> Result<Vec<PredictedTable>> {
    if predictions.len() != set.queries.len() {
        return Err(Error::shape(
            "assemble_tables",
            format!("{} queries", set.queries.len()),
            format!("{} predictions", predictions.len()),
        ));
    }
    let mut tables: Vec<PredictedTable> = set
        .tables
        .iter()
        .map(|t| PredictedTable {
            row_votes: vec![Vec::new(); t.size()],
            cells: Vec::new(),
        })
        .collect();
    for (q, p) in set.queries.iter().zip(predictions) {
        let t = tables
            .get_mut(q.sentence)
            .ok_or_else(|| Error::Contract(format!("query refers to missing table {}", q.sentence)))?;
        if q.row_i >= q.row_j || q.row_j >= t.row_votes.len() {
            return Err(Error::Contract(format!(
                "query rows ({}, {}) invalid for table of size {}",
                q.row_i,
                q.row_j,
                t.row_votes.len()
            )));
        }
        t.row_votes[q.row_i].push(ec_vote(p[0]));
        t.row_votes[q.row_j].push(ec_vote(p[2]));
        t.cells.push((q.row_i, q.row_j, re_vote(p[1])));
    }
    Ok(tables)
}

#[derive(Debug, Clone, Default)]
struct Tally {
    ec: [Counts; LabelSpace::N_EC],
    re: [Counts; LabelSpace::N_RE],
    groups: Vec<Vec<usize>>,
}

impl Tally {
    fn decide_ec(&mut self, gold: EcLabel, pred: EcLabel) {
        if gold == pred {
            self.ec[gold.index()].tp += 1;
        } else {
            self.ec[gold.index()].fn_ += 1;
            self.ec[pred.index()].fp += 1;
        }
    }

    fn decide_re(&mut self, gold: ReLabel, pred: ReLabel) {
        if gold == pred {
            self.re[gold.index()].tp += 1;
        } else {
            self.re[gold.index()].fn_ += 1;
            self.re[pred.index()].fp += 1;
        }
    }
}

/// Unit type under the at-least-one rule: the gold label when any row of
/// the unit predicts it, otherwise the majority over row decisions. `None`
/// when no row received a vote.
fn unit_prediction(gold: EcLabel, row_labels: &[usize]) -> Option<EcLabel> {
    if row_labels.is_empty() {
        return None;
    }
    if row_labels.contains(&gold.index()) {
        return Some(gold);
    }
    majority_label(row_labels).ok().and_then(EcLabel::from_index)
}

/// Scores one table into `tally`.
fn score_table(spec: &TableSpec, pred: &PredictedTable, tally: &mut Tally) {
    let n_units = spec.units.len();
    let mut unit_rows: Vec<Vec<usize>> = vec![Vec::new(); n_units];
    for (row, votes) in pred.row_votes.iter().enumerate() {
        if let Ok(label) = majority_label(votes) {
            unit_rows[spec.row_unit[row]].push(label);
        }
        if !votes.is_empty() {
            tally.groups.push(votes.clone());
        }
    }
    for (u, unit) in spec.units.iter().enumerate() {
        if let Some(p) = unit_prediction(unit.label, &unit_rows[u]) {
            tally.decide_ec(unit.label, p);
        }
    }

    // distinct non-N labels and their cell frequencies per unit pair
    let mut pair_labels: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
    let mut pairs_seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &(i, j, rel) in &pred.cells {
        let (a, b) = (spec.row_unit[i], spec.row_unit[j]);
        let key = (a.min(b), a.max(b));
        pairs_seen.insert(key);
        let freq = pair_labels.entry(key).or_insert_with(|| vec![0; LabelSpace::N_RE]);
        if rel != ReLabel::N {
            freq[rel.index()] += 1;
        }
    }

    let mut gold_pairs = BTreeSet::new();
    for g in &spec.gold_relations {
        let key = (g.unit_a, g.unit_b);
        gold_pairs.insert(key);
        let freq = pair_labels.get(&key);
        let hit = freq.is_some_and(|f| f[g.label.index()] > 0);
        if hit {
            tally.decide_re(g.label, g.label);
        } else {
            let wrong = freq.and_then(|f| {
                let best = *f.iter().max()?;
                (best > 0).then(|| f.iter().position(|&c| c == best)).flatten()
            });
            tally.decide_re(g.label, wrong.and_then(ReLabel::from_index).unwrap_or(ReLabel::N));
        }
    }
    for key in pairs_seen {
        if gold_pairs.contains(&key) {
            continue;
        }
        let freq = &pair_labels[&key];
        let predicted: Vec<usize> = (0..LabelSpace::N_RE).filter(|&l| freq[l] > 0).collect();
        if predicted.is_empty() {
            tally.decide_re(ReLabel::N, ReLabel::N);
        } else {
            tally.re[ReLabel::N.index()].fn_ += 1;
            for l in predicted {
                tally.re[l].fp += 1;
            }
        }
    }
}

/// Scores assembled predictions against the gold tables of `set`.
pub fn score_tables(set: &QuerySet, predicted: &[PredictedTable], omit_other: bool) -> Result<MetricsReport> {
    if predicted.len() != set.tables.len() {
        return Err(Error::shape(
            "score_tables",
            format!("{} gold tables", set.tables.len()),
            format!("{} predicted", predicted.len()),
        ));
    }
    let mut tally = Tally::default();
    for (spec, pred) in set.tables.iter().zip(predicted) {
        if pred.row_votes.len() != spec.size() {
            return Err(Error::shape(
                "score_tables",
                format!("table {} with {} rows", spec.sentence, spec.size()),
                format!("{} predicted rows", pred.row_votes.len()),
            ));
        }
        score_table(spec, pred, &mut tally);
    }
    Ok(build_report(&tally, omit_other, set.queries.len(), None))
}

fn build_report(tally: &Tally, omit_other: bool, queries: usize, triple_accuracy: Option<f64>) -> MetricsReport {
    let ec: Vec<ClassScore> = EcLabel::ALL
        .iter()
        .map(|l| ClassScore::new(l.name().to_string(), tally.ec[l.index()]))
        .collect();
    let re: Vec<ClassScore> = ReLabel::ALL
        .iter()
        .map(|l| ClassScore::new(l.name().to_string(), tally.re[l.index()]))
        .collect();
    let ec_f1 = [ec[0].f1, ec[1].f1, ec[2].f1, ec[3].f1];
    let re_f1 = [re[0].f1, re[1].f1, re[2].f1, re[3].f1, re[4].f1];
    MetricsReport {
        averages: macro_and_avg(&ec_f1, &re_f1, omit_other),
        ec,
        re,
        omit_other,
        disagreement: disagreement_report(&tally.groups),
        queries,
        triple_accuracy,
    }
}

/// Relation direction is not part of the compared triple.
pub fn triple_accuracy(set: &QuerySet, predictions: &[LabelSequence]) -> Option<f64> {
    if set.queries.is_empty() || predictions.len() != set.queries.len() {
        return None;
    }
    let hits = set
        .queries
        .iter()
        .zip(predictions)
        .filter(|(q, p)| q.gold_sequence() == **p)
        .count();
    Some(hits as f64 / set.queries.len() as f64)
}

/// Assembles, scores, and records triple accuracy in one call.
pub fn evaluate_predictions(set: &QuerySet, predictions: &[LabelSequence], omit_other: bool) -> Result<MetricsReport> {
    let tables = assemble_tables(set, predictions)?;
    let mut report = score_tables(set, &tables, omit_other)?;
    report.triple_accuracy = triple_accuracy(set, predictions);
    Ok(report)
}

/// Gold sequences of every query; scoring them gives all-1 F1 scores.
pub fn gold_predictions(set: &QuerySet) -> Vec<LabelSequence> {
    set.queries.iter().map(|q| q.gold_sequence()).collect()
}
