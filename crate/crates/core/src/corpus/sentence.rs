use serde::{Deserialize, Serialize};

use super::labels::{EcLabel, ReLabel};

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn single(token: usize) -> Self {
        Span::new(token, token + 1)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, token: usize) -> bool {
        (self.start..self.end).contains(&token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub label: EcLabel,
}

impl EntityMention {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationAnnotation {
    pub head: usize,
    pub tail: usize,
    #[serde(rename = "type")]
    pub label: ReLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub entities: Vec<EntityMention>,
    pub relations: Vec<RelationAnnotation>,
}

impl Sentence {
    /// Checks span bounds, span disjointness and relation argument indices.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.tokens.len();
        for (i, e) in self.entities.iter().enumerate() {
            if e.start >= e.end || e.end > n {
                return Err(format!(
                    "entity {i} span [{}, {}) outside 0..{n} or empty",
                    e.start, e.end
                ));
            }
        }
        let mut spans: Vec<Span> = self.entities.iter().map(EntityMention::span).collect();
        spans.sort();
        if let Some(w) = spans.windows(2).find(|w| w[0].overlaps(&w[1])) {
            return Err(format!("entity spans {:?} and {:?} overlap", w[0], w[1]));
        }
        for (i, r) in self.relations.iter().enumerate() {
            if r.head >= self.entities.len() || r.tail >= self.entities.len() {
                return Err(format!(
                    "relation {i} argument out of range ({} entities)",
                    self.entities.len()
                ));
            }
            if r.head == r.tail {
                return Err(format!("relation {i} has identical head and tail"));
            }
            if r.label == ReLabel::N {
                return Err(format!("relation {i} stores the implicit label N"));
            }
        }
        Ok(())
    }

    /// Entity index covering `token`, if any.
    pub fn entity_at(&self, token: usize) -> Option<usize> {
        self.entities.iter().position(|e| e.span().contains(token))
    }

    /// Relation between two entities regardless of argument order, with a
    /// flag telling whether the annotated head is `b`.
    pub fn relation_between(&self, a: usize, b: usize) -> Option<(ReLabel, bool)> {
        self.relations.iter().find_map(|r| {
            if r.head == a && r.tail == b {
                Some((r.label, false))
            } else if r.head == b && r.tail == a {
                Some((r.label, true))
            } else {
                None
            }
        })
    }

    pub fn text(&self, span: Span) -> String {
        self.tokens[span.start..span.end].join(" ")
    }
}

/// Corpus-level counts, as printed by `convert`. The `O` count includes
/// every token not covered by a mention.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub tokens: usize,
    pub entities: [usize; 5],
    pub relations: [usize; 5],
}

impl CorpusStats {
    pub fn of(sentences: &[Sentence]) -> Self {
        let mut stats = CorpusStats {
            sentences: sentences.len(),
            ..Default::default()
        };
        for s in sentences {
            stats.tokens += s.tokens.len();
            for e in &s.entities {
                stats.entities[e.label.index()] += 1;
            }
            // tokens outside every mention are single-token O rows
            let covered: usize = s.entities.iter().map(|e| e.end - e.start).sum();
            stats.entities[EcLabel::O.index()] += s.tokens.len() - covered;
            for r in &s.relations {
                if r.label != ReLabel::N {
                    stats.relations[r.label.index()] += 1;
                }
            }
        }
        stats
    }

    pub fn entity_count(&self, label: EcLabel) -> usize {
        self.entities[label.index()]
    }

    pub fn relation_count(&self, label: ReLabel) -> usize {
        self.relations.get(label.index()).copied().unwrap_or(0)
    }
}

impl std::fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "sentences\t{}", self.sentences)?;
        writeln!(f, "tokens\t{}", self.tokens)?;
        for l in EcLabel::ALL {
            writeln!(f, "{}\t{}", l, self.entity_count(l))?;
        }
        for l in &ReLabel::ALL[..5] {
            writeln!(f, "{}\t{}", l, self.relation_count(*l))?;
        }
        Ok(())
    }
}
