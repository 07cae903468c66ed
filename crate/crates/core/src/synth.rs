//! Rule-governed synthetic corpora with known entity types and relations.
//!
//! Every sentence is built from a relation template (head, trigger, tail),
//! optional distractor mentions and filler words. Entity types follow the
//! relation's type signature, so the output is fully consistent with the
//! annotation scheme. Two knobs make the task harder without breaking that
//! consistency: `noise_rate` swaps the trigger for one belonging to another
//! relation, and `ambiguity_rate` draws names from a pool shared by several
//! entity types.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EcLabel, EmbeddingTable, EntityMention, ReLabel, RelationAnnotation, Sentence};
use crate::error::{Error, Result};

/// `(head, tail)` entity types of each relation.
pub fn signature(rel: ReLabel) -> Option<(EcLabel, EcLabel)> {
    use EcLabel::*;
    match rel {
        ReLabel::LiveIn => Some((Peop, Loc)),
        ReLabel::WorkFor => Some((Peop, Org)),
        ReLabel::OrgBasedIn => Some((Org, Loc)),
        ReLabel::LocatedIn => Some((Loc, Loc)),
        ReLabel::Kill => Some((Peop, Peop)),
        ReLabel::N => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub relation: ReLabel,
    pub head: EcLabel,
    pub tail: EcLabel,
    /// Trigger phrases placed between head and tail.
    pub triggers: Vec<Vec<String>>,
    /// Trigger phrases for the passive order: tail first, then head.
    pub inverse_triggers: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleGrammar {
    pub templates: Vec<Template>,
    pub people: Vec<Vec<String>>,
    pub orgs: Vec<Vec<String>>,
    pub locations: Vec<Vec<String>>,
    pub others: Vec<Vec<String>>,
    /// Names that may stand for a person, an organization or a location.
    pub ambiguous: Vec<String>,
    pub fillers: Vec<String>,
    pub noise_rate: f64,
    pub ambiguity_rate: f64,
    pub relation_free_rate: f64,
    pub distractor_rate: f64,
    pub inverse_rate: f64,
    pub seed: u64,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn phrases(list: &[&str]) -> Vec<Vec<String>> {
    list.iter().map(|p| words(p)).collect()
}

const FIRST: &[&str] = &[
    "John", "Mary", "Ahmed", "Elena", "Tomas", "Yuki", "Carlos", "Fatima", "Ivan", "Grace", "Omar", "Lena", "Pedro",
    "Nadia", "Felix", "Anya", "Kofi", "Ingrid", "Ravi", "Sofia",
];
const LAST: &[&str] = &["Smith", "Okafor", "Novak", "Tanaka", "Silva", "Berg", "Haddad", "Moreau"];
const ORGS: &[&str] = &[
    "Acme", "Globex", "Initech", "Umbrella Corp", "Stark Industries", "Wayne Enterprises", "Hooli", "Vandelay",
    "Cyberdyne", "Tyrell", "Soylent", "Massive Dynamic", "Oscorp", "Wonka Industries", "Aperture", "Gringotts",
    "Monarch", "Nakatomi",
];
const LOCS: &[&str] = &[
    "Boston", "Lagos", "Oslo", "Lima", "Kyoto", "Cairo", "Quito", "Perth", "Hanoi", "Dublin", "Nairobi", "Tbilisi",
    "New York", "Buenos Aires", "Cape Town", "Kansas", "Ontario", "Bavaria", "Kerala", "Patagonia",
];
const OTHERS: &[&str] = &["Monday", "1998", "Christmas", "the Olympics", "Ramadan", "2004", "the Derby", "Easter"];
const AMBIGUOUS: &[&str] = &["Jordan", "Washington", "Austin", "Florence", "Victoria", "Chad", "Georgia", "Lincoln"];
const FILLERS: &[&str] = &[
    "reportedly", "yesterday", "officials", "confirmed", "that", "the", "newspaper", "wrote", "sources", "say",
    "according", "to", "reports", "last", "week", "it", "seems", "apparently", "indeed", "however", "meanwhile",
    "also", "still", "now", "earlier", "today", "in", "fact", "local", "media", "noted", "as", "expected",
    "witnesses", "claimed", "some", "believe", "analysts", "agree", "many", "years", "ago", "back", "then",
    "after", "all", "officially", "rumours", "suggest", "critics", "argue", "experts", "recall", "records", "show",
    "insiders", "hinted", "once", "again",
];

impl RuleGrammar {
    /// Noise-free grammar with distinct triggers per relation.
    pub fn standard(seed: u64) -> Self {
        let t = |relation, triggers: &[&str], inverse: &[&str]| {
            let (head, tail) = signature(relation).expect("named relation");
            Template {
                relation,
                head,
                tail,
                triggers: phrases(triggers),
                inverse_triggers: phrases(inverse),
            }
        };
        let mut people = Vec::new();
        for (i, f) in FIRST.iter().enumerate() {
            people.push(words(f));
            people.push(words(&format!("{f} {}", LAST[i % LAST.len()])));
        }
        RuleGrammar {
            templates: vec![
                t(ReLabel::LiveIn, &["lives in", "resides in", "grew up in"], &["is home to"]),
                t(ReLabel::WorkFor, &["works for", "is employed by", "joined"], &["hired"]),
                t(ReLabel::OrgBasedIn, &["is based in", "is headquartered in"], &["hosts the offices of"]),
                t(ReLabel::LocatedIn, &["is located in", "is a region of"], &["contains"]),
                t(ReLabel::Kill, &["killed", "assassinated", "shot"], &["was killed by"]),
            ],
            people,
            orgs: phrases(ORGS),
            locations: phrases(LOCS),
            others: phrases(OTHERS),
            ambiguous: AMBIGUOUS.iter().map(|s| s.to_string()).collect(),
            fillers: FILLERS.iter().map(|s| s.to_string()).collect(),
            noise_rate: 0.0,
            ambiguity_rate: 0.0,
            relation_free_rate: 0.1,
            distractor_rate: 0.3,
            inverse_rate: 0.1,
            seed,
        }
    }

    /// Grammar where triggers are shared across relations (`of`, `in`,
    /// `with`), names are often ambiguous, and `noise_rate` of triggers are
    /// swapped, so the relation is mostly recoverable only jointly with the
    /// entity types.
    pub fn coupled(seed: u64, noise_rate: f64) -> Self {
        let mut g = Self::standard(seed);
        for tpl in &mut g.templates {
            let shared: &[&str] = match tpl.relation {
                ReLabel::LiveIn => &["of", "in"],
                ReLabel::WorkFor => &["of", "with"],
                ReLabel::OrgBasedIn => &["of", "in"],
                ReLabel::LocatedIn => &["of", "in"],
                ReLabel::Kill => &["with"],
                ReLabel::N => &[],
            };
            tpl.triggers.extend(phrases(shared));
        }
        g.noise_rate = noise_rate;
        g.ambiguity_rate = 0.3;
        g
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("noise_rate", self.noise_rate),
            ("ambiguity_rate", self.ambiguity_rate),
            ("relation_free_rate", self.relation_free_rate),
            ("distractor_rate", self.distractor_rate),
            ("inverse_rate", self.inverse_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.templates.is_empty() {
            return Err(Error::Config("grammar has no templates".into()));
        }
        for t in &self.templates {
            if signature(t.relation) != Some((t.head, t.tail)) {
                return Err(Error::Config(format!(
                    "template for {} uses types ({}, {})",
                    t.relation, t.head, t.tail
                )));
            }
            if t.triggers.is_empty() {
                return Err(Error::Config(format!("template for {} has no trigger", t.relation)));
            }
        }
        for (ty, pool) in [
            (EcLabel::Peop, &self.people),
            (EcLabel::Org, &self.orgs),
            (EcLabel::Loc, &self.locations),
            (EcLabel::Other, &self.others),
        ] {
            if pool.is_empty() {
                return Err(Error::Config(format!("no names for {ty}")));
            }
        }
        if self.fillers.is_empty() {
            return Err(Error::Config("no filler words".into()));
        }
        Ok(())
    }

    fn names(&self, ty: EcLabel) -> &[Vec<String>] {
        match ty {
            EcLabel::Peop => &self.people,
            EcLabel::Org => &self.orgs,
            EcLabel::Loc => &self.locations,
            _ => &self.others,
        }
    }

    /// Every token the grammar can emit, sorted.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .templates
            .iter()
            .flat_map(|t| t.triggers.iter().chain(&t.inverse_triggers).flatten().cloned())
            .chain(
                [&self.people, &self.orgs, &self.locations, &self.others]
                    .into_iter()
                    .flatten()
                    .flatten()
                    .cloned(),
            )
            .chain(self.ambiguous.iter().cloned())
            .chain(self.fillers.iter().cloned())
            .chain(
                [",", ".", "and", "were", "mentioned", "said", "on", "near"]
                    .map(str::to_string),
            )
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

struct Builder {
    tokens: Vec<String>,
    entities: Vec<EntityMention>,
}

impl Builder {
    fn push_words(&mut self, ws: &[String]) {
        self.tokens.extend(ws.iter().cloned());
    }

    fn push_entity(&mut self, ws: &[String], label: EcLabel) -> usize {
        let start = self.tokens.len();
        self.push_words(ws);
        self.entities.push(EntityMention {
            start,
            end: self.tokens.len(),
            label,
        });
        self.entities.len() - 1
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    xs.choose(rng).expect("validated non-empty")
}

fn name(g: &RuleGrammar, rng: &mut ChaCha8Rng, ty: EcLabel) -> Vec<String> {
    let ambiguous_ok = matches!(ty, EcLabel::Peop | EcLabel::Org | EcLabel::Loc);
    if ambiguous_ok && !g.ambiguous.is_empty() && rng.gen_bool(g.ambiguity_rate) {
        return vec![pick(rng, &g.ambiguous).clone()];
    }
    pick(rng, g.names(ty)).clone()
}

fn fillers(g: &RuleGrammar, rng: &mut ChaCha8Rng, b: &mut Builder, max: usize) {
    for _ in 0..rng.gen_range(0..=max) {
        b.tokens.push(pick(rng, &g.fillers).clone());
    }
}

fn sentence(g: &RuleGrammar, rng: &mut ChaCha8Rng, id: String) -> Sentence {
    let mut b = Builder {
        tokens: Vec::new(),
        entities: Vec::new(),
    };
    let mut relations = Vec::new();
    fillers(g, rng, &mut b, 2);

    if rng.gen_bool(g.relation_free_rate) {
        let a = *pick(rng, &[EcLabel::Peop, EcLabel::Org, EcLabel::Loc]);
        let c = *pick(rng, &[EcLabel::Peop, EcLabel::Org, EcLabel::Loc]);
        let n = name(g, rng, a);
        b.push_entity(&n, a);
        b.tokens.push("and".into());
        let n = name(g, rng, c);
        b.push_entity(&n, c);
        b.push_words(&words("were mentioned"));
    } else {
        let tpl = pick(rng, &g.templates);
        let inverse = !tpl.inverse_triggers.is_empty() && rng.gen_bool(g.inverse_rate);
        let mut trigger = if inverse {
            pick(rng, &tpl.inverse_triggers).clone()
        } else {
            pick(rng, &tpl.triggers).clone()
        };
        if g.noise_rate > 0.0 && rng.gen_bool(g.noise_rate) {
            let others: Vec<&Template> = g.templates.iter().filter(|t| t.relation != tpl.relation).collect();
            if let Some(o) = others.choose(rng) {
                trigger = if inverse && !o.inverse_triggers.is_empty() {
                    pick(rng, &o.inverse_triggers).clone()
                } else {
                    pick(rng, &o.triggers).clone()
                };
            }
        }
        let head_name = name(g, rng, tpl.head);
        let tail_name = name(g, rng, tpl.tail);
        let (head, tail) = if inverse {
            let t = b.push_entity(&tail_name, tpl.tail);
            b.push_words(&trigger);
            let h = b.push_entity(&head_name, tpl.head);
            (h, t)
        } else {
            let h = b.push_entity(&head_name, tpl.head);
            b.push_words(&trigger);
            let t = b.push_entity(&tail_name, tpl.tail);
            (h, t)
        };
        relations.push(RelationAnnotation {
            head,
            tail,
            label: tpl.relation,
        });
    }

    if rng.gen_bool(g.distractor_rate) {
        match rng.gen_range(0..3) {
            0 => {
                b.tokens.push("on".into());
                let n = pick(rng, &g.others).clone();
                b.push_entity(&n, EcLabel::Other);
            }
            1 => {
                b.push_words(&words(", said"));
                let n = name(g, rng, EcLabel::Peop);
                b.push_entity(&n, EcLabel::Peop);
            }
            _ => {
                b.tokens.push("near".into());
                let n = name(g, rng, EcLabel::Loc);
                b.push_entity(&n, EcLabel::Loc);
            }
        }
    }
    fillers(g, rng, &mut b, 1);
    b.tokens.push(".".into());
    Sentence {
        id,
        tokens: b.tokens,
        entities: b.entities,
        relations,
    }
}

/// `n` sentences; sentence `i` depends only on the grammar seed and `i`.
pub fn generate(grammar: &RuleGrammar, n: usize) -> Result<Vec<Sentence>> {
    grammar.validate()?;
    Ok((0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(grammar.seed);
            rng.set_stream(i as u64);
            sentence(grammar, &mut rng, format!("synth-{i}"))
        })
        .collect())
}

/// Checks that every relation joins mentions of its signature types.
pub fn audit(sentences: &[Sentence]) -> std::result::Result<(), String> {
    for s in sentences {
        s.validate().map_err(|e| format!("{}: {e}", s.id))?;
        for r in &s.relations {
            let want = signature(r.label).ok_or_else(|| format!("{}: stored N relation", s.id))?;
            let got = (s.entities[r.head].label, s.entities[r.tail].label);
            if got != want {
                return Err(format!(
                    "{}: {} joins ({}, {}), expected ({}, {})",
                    s.id, r.label, got.0, got.1, want.0, want.1
                ));
            }
        }
    }
    Ok(())
}

/// Random uniform vectors in `[-1, 1]` for the grammar's vocabulary. With
/// a couple of hundred words and a few dozen dimensions these are close to
/// orthogonal.
pub fn embeddings(grammar: &RuleGrammar, dim: usize, seed: u64) -> EmbeddingTable {
    EmbeddingTable::random(&grammar.vocabulary(), dim, 1.0, seed)
}
