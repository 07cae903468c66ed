//! Corpus ingestion: the raw ERR/CoNLL04 column format, the canonical
//! line-delimited format, and word2vec text embeddings.

mod canonical;
mod embeddings;
mod labels;
mod raw;
mod sentence;

use std::collections::BTreeSet;

pub use canonical::{from_canonical_str, load_canonical, to_canonical_string, write_canonical};
pub use embeddings::{load_embeddings, load_embeddings_from, EmbeddingTable, LoadStats, UNK};
pub use labels::{Class, EcLabel, LabelSpace, ReLabel};
pub use raw::{parse_raw, parse_raw_str, ColumnMap};
pub use sentence::{CorpusStats, EntityMention, RelationAnnotation, Sentence, Span};

/// Sorted distinct tokens of a corpus.
pub fn vocabulary<'a>(corpora: impl IntoIterator<Item = &'a [Sentence]>) -> Vec<String> {
    let mut set = BTreeSet::new();
    for corpus in corpora {
        for s in corpus {
            set.extend(s.tokens.iter().cloned());
        }
    }
    set.into_iter().collect()
}
