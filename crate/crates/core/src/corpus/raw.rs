//! Reader for the tab-separated ERR/CoNLL04 distribution format.
//!
//! Each sentence is a block of token rows followed by optional relation
//! rows `<row-a> <row-b> <label>`. A token row carries (at least) a
//! sentence id, an entity tag and the word; multi-word chunks may be
//! joined with `/`.
//!
//! ```text
//! 12  Peop  0  O  NNP/NNP  Abraham/Lincoln  O  O  O
//! 12  O     1  O  VBD      was              O  O  O
//! ...
//!
//! 0   5   Kill
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::labels::{EcLabel, ReLabel};
use super::sentence::{EntityMention, RelationAnnotation, Sentence};

/// Which columns of a token row carry what.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub sentence: usize,
    pub tag: usize,
    /// Row index within the sentence; checked for sequence when present.
    pub index: Option<usize>,
    pub word: usize,
    /// Split multi-word chunks joined by `/` back into tokens.
    pub split_slash: bool,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            sentence: 0,
            tag: 1,
            index: Some(2),
            word: 5,
            split_slash: true,
        }
    }
}

impl ColumnMap {
    fn width(&self) -> usize {
        [Some(self.sentence), Some(self.tag), self.index, Some(self.word)]
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(0)
            + 1
    }

    pub fn validate(&self) -> Result<()> {
        let cols: Vec<usize> = [Some(self.sentence), Some(self.tag), self.index, Some(self.word)]
            .into_iter()
            .flatten()
            .collect();
        let unique: BTreeSet<_> = cols.iter().collect();
        if unique.len() != cols.len() {
            return Err(Error::Config(format!("column map assigns one column twice: {self:?}")));
        }
        Ok(())
    }
}

impl FromStr for ColumnMap {
    type Err = Error;

    /// Parses `sentence=0,tag=1,index=2,word=5,split=true`; omitted keys keep
    /// their defaults and `index=none` disables the index check.
    fn from_str(s: &str) -> Result<Self> {
        let mut map = ColumnMap::default();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("column map entry `{item}` is not key=value")))?;
            let col = || {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("column map: `{value}` is not a column number")))
            };
            match key {
                "sentence" => map.sentence = col()?,
                "tag" => map.tag = col()?,
                "word" => map.word = col()?,
                "index" if value == "none" => map.index = None,
                "index" => map.index = Some(col()?),
                "split" => {
                    map.split_slash = value
                        .parse()
                        .map_err(|_| Error::Config(format!("column map: split=`{value}` is not a bool")))?
                }
                other => return Err(Error::Config(format!("column map: unknown key `{other}`"))),
            }
        }
        map.validate()?;
        Ok(map)
    }
}

struct Row {
    tag: EcLabel,
    words: Vec<String>,
}

struct Block {
    id: String,
    rows: Vec<Row>,
    relations: Vec<(usize, usize, ReLabel, usize)>,
}

pub fn parse_raw(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_raw_str(&text, &path.display().to_string(), columns)
}

pub fn parse_raw_str(text: &str, source: &str, columns: &ColumnMap) -> Result<Vec<Sentence>> {
    columns.validate()?;
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut out = Vec::new();
    let mut current: Option<Block> = None;
    let mut seen_token_row = false;

    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end())) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').collect()
        } else {
            line.split_whitespace().collect()
        };

        if let Some((a, b, label)) = relation_fields(&fields) {
            let block = current
                .as_mut()
                .ok_or_else(|| err(lineno, "relation line before any token rows".into()))?;
            let label = label.parse::<ReLabel>().map_err(|e| err(lineno, e.to_string()))?;
            if label == ReLabel::N {
                return Err(err(lineno, "relation label N is implicit and cannot be annotated".into()));
            }
            block.relations.push((a, b, label, lineno));
            continue;
        }

        if fields.len() < columns.width() {
            let msg = format!(
                "token row has {} columns but the column map needs {}",
                fields.len(),
                columns.width()
            );
            // a map that does not fit the very first row is a usage error
            return Err(if seen_token_row {
                err(lineno, msg)
            } else {
                Error::Config(format!("{source}:{lineno}: {msg}"))
            });
        }
        seen_token_row = true;

        let id = fields[columns.sentence].trim();
        let starts_new = match &current {
            Some(b) => b.id != id || !b.relations.is_empty(),
            None => true,
        };
        if starts_new {
            if let Some(block) = current.take() {
                out.push(finish(block, source)?);
            }
            current = Some(Block {
                id: id.to_string(),
                rows: Vec::new(),
                relations: Vec::new(),
            });
        }
        let block = current.as_mut().expect("block initialised above");

        if let Some(ic) = columns.index {
            let idx: usize = fields[ic]
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("row index `{}` is not a number", fields[ic])))?;
            if idx != block.rows.len() {
                return Err(err(
                    lineno,
                    format!("row index {idx} out of sequence (expected {})", block.rows.len()),
                ));
            }
        }
        let tag = fields[columns.tag]
            .trim()
            .parse::<EcLabel>()
            .map_err(|e| err(lineno, e.to_string()))?;
        let word = fields[columns.word].trim();
        if word.is_empty() {
            return Err(err(lineno, "empty word column".into()));
        }
        let words: Vec<String> = if columns.split_slash {
            let parts: Vec<String> = word
                .split('/')
                .filter(|p| !p.is_empty())
                .map(str::to_string)
                .collect();
            if parts.is_empty() {
                vec![word.to_string()]
            } else {
                parts
            }
        } else {
            vec![word.to_string()]
        };
        block.rows.push(Row { tag, words });
    }
    if let Some(block) = current.take() {
        out.push(finish(block, source)?);
    }
    Ok(out)
}

fn relation_fields<'a>(fields: &[&'a str]) -> Option<(usize, usize, &'a str)> {
    if fields.len() != 3 {
        return None;
    }
    let a = fields[0].trim().parse().ok()?;
    let b = fields[1].trim().parse().ok()?;
    Some((a, b, fields[2].trim()))
}

fn finish(block: Block, source: &str) -> Result<Sentence> {
    let nrows = block.rows.len();
    let mut referenced = vec![false; nrows];
    for &(a, b, _, line) in &block.relations {
        for arg in [a, b] {
            if arg >= nrows {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line,
                    msg: format!(
                        "relation argument row {arg} crosses the boundary of sentence `{}` ({nrows} rows)",
                        block.id
                    ),
                });
            }
            referenced[arg] = true;
        }
        if a == b {
            return Err(Error::Parse {
                path: source.to_string(),
                line,
                msg: "relation connects a row to itself".into(),
            });
        }
    }

    let mut tokens = Vec::new();
    let mut entities = Vec::new();
    let mut row_entity = vec![None; nrows];
    for (r, row) in block.rows.into_iter().enumerate() {
        let start = tokens.len();
        let multi = row.words.len() > 1;
        tokens.extend(row.words);
        if row.tag != EcLabel::O || multi || referenced[r] {
            row_entity[r] = Some(entities.len());
            entities.push(EntityMention {
                start,
                end: tokens.len(),
                label: row.tag,
            });
        }
    }
    let relations = block
        .relations
        .iter()
        .map(|&(a, b, label, _)| RelationAnnotation {
            head: row_entity[a].expect("referenced rows become mentions"),
            tail: row_entity[b].expect("referenced rows become mentions"),
            label,
        })
        .collect();
    Ok(Sentence {
        id: block.id,
        tokens,
        entities,
        relations,
    })
}
