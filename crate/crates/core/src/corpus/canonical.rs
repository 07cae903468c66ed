//! Line-delimited JSON corpus: one sentence object per line with fields
//! `id`, `tokens`, `entities` (`start`, `end`, `type`) and `relations`
//! (`head`, `tail`, `type`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::sentence::Sentence;

pub fn to_canonical_string(sentences: &[Sentence]) -> Result<String> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_canonical(path: impl AsRef<Path>, sentences: &[Sentence]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for s in sentences {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn from_canonical_str(text: &str) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (record, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: Sentence = serde_json::from_str(line).map_err(|e| Error::Schema {
            record,
            msg: e.to_string(),
        })?;
        s.validate().map_err(|msg| Error::Schema { record, msg })?;
        out.push(s);
    }
    Ok(out)
}

pub fn load_canonical(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    from_canonical_str(&fs::read_to_string(path)?)
}
