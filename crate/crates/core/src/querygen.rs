//! Turning annotated sentences into model queries.
//!
//! Every setup is expressed as a table per sentence: rows are candidate
//! entities, the diagonal holds their types and the strict upper triangle
//! holds relations. Each off-diagonal cell becomes one query whose outputs
//! cover the cell itself and the two diagonal cells of its rows.
//!
//! * setup 1: rows are the gold named entities only;
//! * setup 2: rows are gold mentions plus every token outside a mention;
//! * setup 3: rows are single tokens; evaluation maps them back to the gold
//!   units (mentions and uncovered tokens) they belong to.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EcLabel, LabelSpace, ReLabel, Sentence, Span};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Setup {
    EntityPairs = 1,
    TableFilling = 2,
    TokenTable = 3,
}

impl Setup {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Setup {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Setup::EntityPairs),
            2 => Ok(Setup::TableFilling),
            3 => Ok(Setup::TokenTable),
            _ => Err(Error::Config(format!("setup must be 1, 2 or 3, got {v}"))),
        }
    }
}

impl From<Setup> for u8 {
    fn from(s: Setup) -> u8 {
        s.number()
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl std::str::FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .parse::<u8>()
            .map_err(|_| Error::Config(format!("setup must be 1, 2 or 3, got `{s}`")))?
            .try_into()
    }
}

/// One model input: a sentence, two ordered spans and the gold triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    /// Index into the sentence slice (and the table list) it came from.
    pub sentence: usize,
    pub row_i: usize,
    pub row_j: usize,
    pub span_i: Span,
    pub span_j: Span,
    pub gold_t1: EcLabel,
    pub gold_rel: ReLabel,
    pub gold_t2: EcLabel,
    /// The annotated relation points from the later span to the earlier one.
    pub inverse: bool,
    pub setup: Setup,
}

impl Query {
    /// Gold labels in unified class indices.
    pub fn gold_sequence(&self) -> [usize; 3] {
        [
            LabelSpace::ec(self.gold_t1),
            LabelSpace::re(self.gold_rel),
            LabelSpace::ec(self.gold_t2),
        ]
    }

    pub fn is_negative(&self) -> bool {
        self.gold_rel == ReLabel::N
    }
}

/// The six token ranges the encoder reads for a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextSplit {
    pub left_i: Span,
    pub ent_i: Span,
    pub mid_i: Span,
    pub left_j: Span,
    pub ent_j: Span,
    pub right_j: Span,
}

impl ContextSplit {
    pub fn parts(&self) -> [Span; 6] {
        [self.left_i, self.ent_i, self.mid_i, self.left_j, self.ent_j, self.right_j]
    }

    pub fn tokens<'a>(&self, tokens: &'a [String]) -> [&'a [String]; 6] {
        self.parts().map(|s| &tokens[s.start..s.end])
    }
}

/// Splits a sentence of `len` tokens around two ordered, disjoint spans:
/// left of e_i, e_i, right of e_i, left of e_j, e_j, right of e_j.
pub fn split_context(len: usize, span_i: Span, span_j: Span) -> Result<ContextSplit> {
    for s in [span_i, span_j] {
        if s.is_empty() || s.end > len {
            return Err(Error::Query(format!(
                "span [{}, {}) empty or outside a sentence of {len} tokens",
                s.start, s.end
            )));
        }
    }
    if span_i.overlaps(&span_j) {
        return Err(Error::Query(format!("spans {span_i:?} and {span_j:?} overlap")));
    }
    if span_i.start > span_j.start {
        return Err(Error::Query(format!("span {span_i:?} must precede {span_j:?}")));
    }
    Ok(ContextSplit {
        left_i: Span::new(0, span_i.start),
        ent_i: span_i,
        mid_i: Span::new(span_i.end, len),
        left_j: Span::new(0, span_j.start),
        ent_j: span_j,
        right_j: Span::new(span_j.end, len),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Unit {
    pub span: Span,
    pub label: EcLabel,
    /// Mention index in the sentence, when the unit is a gold mention.
    pub entity: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GoldRelation {
    /// Units in textual order (`unit_a < unit_b`).
    pub unit_a: usize,
    pub unit_b: usize,
    pub label: ReLabel,
    pub inverse: bool,
}

/// Gold table for one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableSpec {
    pub sentence: usize,
    pub setup: Setup,
    pub rows: Vec<Span>,
    pub row_unit: Vec<usize>,
    pub units: Vec<Unit>,
    pub gold_relations: Vec<GoldRelation>,
    /// Upper triangle including the diagonal, row-major, unified labels.
    pub cells: Vec<usize>,
}

impl TableSpec {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Position of cell `(i, j)`, `i <= j`, in the upper-triangle storage.
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        let m = self.size();
        debug_assert!(i <= j && j < m);
        // rows above i hold m + (m - 1) + ... + (m - i + 1) cells
        i * (2 * m + 1 - i) / 2 + (j - i)
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.cells[self.cell_index(i, j)]
    }

    pub fn row_label(&self, row: usize) -> EcLabel {
        LabelSpace::as_ec(self.cell(row, row)).expect("diagonal holds entity labels")
    }
}

/// Queries plus the gold tables they were cut from.
#[derive(Debug, Clone, Default)]
pub struct QuerySet {
    pub queries: Vec<Query>,
    pub tables: Vec<TableSpec>,
}

impl QuerySet {
    pub fn negatives(&self) -> usize {
        self.queries.iter().filter(|q| q.is_negative()).count()
    }
}

pub fn generate(setup: Setup, sentences: &[Sentence]) -> QuerySet {
    let mut set = QuerySet::default();
    for (si, s) in sentences.iter().enumerate() {
        let table = build_table(setup, si, s);
        let m = table.size();
        for i in 0..m {
            for j in i + 1..m {
                let (ua, ub) = (table.row_unit[i], table.row_unit[j]);
                let inverse = table
                    .gold_relations
                    .iter()
                    .find(|g| g.unit_a == ua && g.unit_b == ub)
                    .is_some_and(|g| g.inverse);
                set.queries.push(Query {
                    sentence: si,
                    row_i: i,
                    row_j: j,
                    span_i: table.rows[i],
                    span_j: table.rows[j],
                    gold_t1: table.row_label(i),
                    gold_rel: LabelSpace::as_re(table.cell(i, j)).expect("off-diagonal holds relations"),
                    gold_t2: table.row_label(j),
                    inverse,
                    setup,
                });
            }
        }
        set.tables.push(table);
    }
    set
}

pub fn gen_setup1(sentences: &[Sentence]) -> QuerySet {
    generate(Setup::EntityPairs, sentences)
}

pub fn gen_setup2(sentences: &[Sentence]) -> QuerySet {
    generate(Setup::TableFilling, sentences)
}

pub fn gen_setup3(sentences: &[Sentence]) -> QuerySet {
    generate(Setup::TokenTable, sentences)
}

/// Gold mentions plus one unit per uncovered token, in textual order.
fn mention_units(s: &Sentence) -> Vec<Unit> {
    let mut units = Vec::new();
    let mut t = 0;
    let mut by_start: Vec<(usize, &crate::corpus::EntityMention)> = s.entities.iter().enumerate().collect();
    by_start.sort_by_key(|(_, e)| e.start);
    let mut next = by_start.into_iter().peekable();
    while t < s.tokens.len() {
        match next.peek() {
            Some((ei, e)) if e.start == t => {
                units.push(Unit {
                    span: e.span(),
                    label: e.label,
                    entity: Some(*ei),
                });
                t = e.end;
                next.next();
            }
            _ => {
                units.push(Unit {
                    span: Span::single(t),
                    label: EcLabel::O,
                    entity: None,
                });
                t += 1;
            }
        }
    }
    units
}

fn build_table(setup: Setup, si: usize, s: &Sentence) -> TableSpec {
    let units: Vec<Unit> = match setup {
        Setup::EntityPairs => mention_units(s).into_iter().filter(|u| u.label.is_named()).collect(),
        Setup::TableFilling | Setup::TokenTable => mention_units(s),
    };
    let (rows, row_unit): (Vec<Span>, Vec<usize>) = match setup {
        Setup::EntityPairs | Setup::TableFilling => units.iter().enumerate().map(|(u, unit)| (unit.span, u)).unzip(),
        Setup::TokenTable => units
            .iter()
            .enumerate()
            .flat_map(|(u, unit)| (unit.span.start..unit.span.end).map(move |t| (Span::single(t), u)))
            .unzip(),
    };

    let mut gold_relations = Vec::new();
    for a in 0..units.len() {
        for b in a + 1..units.len() {
            if let (Some(ea), Some(eb)) = (units[a].entity, units[b].entity) {
                if let Some((label, inverse)) = s.relation_between(ea, eb) {
                    gold_relations.push(GoldRelation {
                        unit_a: a,
                        unit_b: b,
                        label,
                        inverse,
                    });
                }
            }
        }
    }

    let m = rows.len();
    let mut cells = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        cells.push(LabelSpace::ec(units[row_unit[i]].label));
        for j in i + 1..m {
            let (ua, ub) = (row_unit[i], row_unit[j]);
            let rel = gold_relations
                .iter()
                .find(|g| g.unit_a == ua && g.unit_b == ub)
                .map_or(ReLabel::N, |g| g.label);
            cells.push(LabelSpace::re(rel));
        }
    }
    TableSpec {
        sentence: si,
        setup,
        rows,
        row_unit,
        units,
        gold_relations,
        cells,
    }
}

/// Keeps each negative (gold `N`) query with probability `keep_prob`;
/// positives are always kept. Meant for train/dev only.
pub fn subsample_negatives(queries: &[Query], keep_prob: f64, seed: u64) -> Result<Vec<Query>> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::Config(format!("keep_prob must lie in (0, 1], got {keep_prob}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(queries
        .iter()
        .filter(|q| !q.is_negative() || rng.gen_bool(keep_prob))
        .cloned()
        .collect())
}

#[derive(Serialize)]
struct QueryRecord<'a> {
    sentence_id: &'a str,
    e1: String,
    e2: String,
    #[serde(flatten)]
    query: &'a Query,
}

/// Writes one JSON record per query for inspection.
pub fn write_queries(path: impl AsRef<Path>, queries: &[Query], sentences: &[Sentence]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for q in queries {
        let s = &sentences[q.sentence];
        let rec = QueryRecord {
            sentence_id: &s.id,
            e1: s.text(q.span_i),
            e2: s.text(q.span_j),
            query: q,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
