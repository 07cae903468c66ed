use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Word vectors for the corpus vocabulary plus one shared unknown-word row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Matrix,
    unk_row: usize,
    pub trainable: bool,
}

/// Coverage of a corpus vocabulary by an embedding file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub requested: usize,
    pub exact: usize,
    pub lowercase: usize,
    pub unk: usize,
}

pub const UNK: &str = "<unk>";

fn uniform_row(rng: &mut ChaCha8Rng, dim: usize, bound: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect()
}

impl EmbeddingTable {
    /// Builds a table from explicit rows. Row 0 is the unknown-word row.
    pub fn from_parts(dim: usize, words: Vec<String>, matrix: Matrix) -> Result<Self> {
        if matrix.cols() != dim || matrix.rows() != words.len() {
            return Err(Error::shape(
                "EmbeddingTable::from_parts",
                matrix.shape_str(),
                format!("{} words x dim {dim}", words.len()),
            ));
        }
        if words.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Contract(format!("row 0 must be `{UNK}`")));
        }
        if !matrix.is_finite() {
            return Err(Error::Contract("embedding rows must be finite".into()));
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(EmbeddingTable {
            dim,
            words,
            index,
            matrix,
            unk_row: 0,
            trainable: true,
        })
    }

    /// Uniform random vectors in `[-scale, scale]` for every word.
    pub fn random<S: AsRef<str>>(vocab: &[S], dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut words = vec![UNK.to_string()];
        let mut seen = HashSet::new();
        for w in vocab {
            if w.as_ref() != UNK && seen.insert(w.as_ref()) {
                words.push(w.as_ref().to_string());
            }
        }
        let data = (0..words.len()).flat_map(|_| uniform_row(&mut rng, dim, scale)).collect();
        let matrix = Matrix::from_vec(words.len(), dim, data).expect("sized above");
        Self::from_parts(dim, words, matrix).expect("consistent by construction")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn unk_row(&self) -> usize {
        self.unk_row
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    /// Exact match first, lowercase second, unknown row otherwise.
    pub fn lookup(&self, word: &str) -> usize {
        self.find(word).unwrap_or(self.unk_row)
    }

    pub fn find(&self, word: &str) -> Option<usize> {
        self.index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()))
            .copied()
    }

    pub fn write_word2vec(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{} {}", self.words.len(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for v in self.matrix.row(i) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads a word2vec text file (`<count> <dim>` header, then `word v1 .. vdim`)
/// restricted to `vocab`. Words missing from the file share the unknown
/// row, which is drawn uniformly with bound `sqrt(6 / (1 + dim))`.
pub fn load_embeddings<S: AsRef<str>>(
    path: impl AsRef<Path>,
    vocab: &[S],
    seed: u64,
) -> Result<(EmbeddingTable, LoadStats)> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let reader = BufReader::new(fs::File::open(path)?);
    load_embeddings_from(reader, &source, vocab, seed)
}

pub fn load_embeddings_from<R: BufRead, S: AsRef<str>>(
    reader: R,
    source: &str,
    vocab: &[S],
    seed: u64,
) -> Result<(EmbeddingTable, LoadStats)> {
    let ferr = |line: usize, msg: String| Error::Format {
        path: source.to_string(),
        line,
        msg,
    };
    let mut wanted: HashSet<String> = HashSet::new();
    for w in vocab {
        wanted.insert(w.as_ref().to_string());
        wanted.insert(w.as_ref().to_lowercase());
    }

    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| ferr(1, "missing header".into()))??;
    let mut it = header.split_whitespace();
    let (count, dim) = match (it.next(), it.next(), it.next()) {
        (Some(c), Some(d), None) => (
            c.parse::<usize>().map_err(|_| ferr(1, format!("bad count `{c}`")))?,
            d.parse::<usize>().map_err(|_| ferr(1, format!("bad dimension `{d}`")))?,
        ),
        _ => return Err(ferr(1, format!("header `{header}` is not `<count> <dim>`"))),
    };
    if dim == 0 {
        return Err(ferr(1, "dimension 0".into()));
    }

    let mut found: HashMap<String, Vec<f64>> = HashMap::new();
    let mut rows = 0usize;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line");
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(ferr(
                lineno,
                format!("row `{word}` has {} values, header says {dim}", values.len()),
            ));
        }
        if !wanted.contains(word) {
            continue;
        }
        let vec = values
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ferr(lineno, format!("bad value `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        found.entry(word.to_string()).or_insert(vec);
    }
    if rows != count {
        return Err(ferr(rows + 1, format!("header announces {count} rows, file has {rows}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = (6.0 / (1.0 + dim as f64)).sqrt();
    let mut words = vec![UNK.to_string()];
    let mut data = uniform_row(&mut rng, dim, bound);
    let mut stats = LoadStats::default();
    let mut seen = HashSet::new();
    for w in vocab {
        let w = w.as_ref();
        if !seen.insert(w) || w == UNK {
            continue;
        }
        stats.requested += 1;
        let hit = if let Some(v) = found.get(w) {
            stats.exact += 1;
            Some(v)
        } else if let Some(v) = found.get(&w.to_lowercase()) {
            stats.lowercase += 1;
            Some(v)
        } else {
            stats.unk += 1;
            None
        };
        if let Some(v) = hit {
            words.push(w.to_string());
            data.extend_from_slice(v);
        }
    }
    let matrix = Matrix::from_vec(words.len(), dim, data)?;
    Ok((EmbeddingTable::from_parts(dim, words, matrix)?, stats))
}
