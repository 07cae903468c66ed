//! Post-hoc inspection of trained models: strong transitions and entity
//! vote disagreement.

use std::fmt;

use serde::Serialize;

use crate::corpus::LabelSpace;
use crate::error::{Error, Result};
use crate::math::Matrix;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionEdge {
    pub from: usize,
    pub to: usize,
    pub from_label: String,
    pub to_label: String,
    pub score: f64,
    /// Either end is the begin or end tag.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionReport {
    pub threshold: f64,
    pub edges: Vec<TransitionEdge>,
}

impl TransitionReport {
    pub fn score(&self, from: usize, to: usize) -> Option<f64> {
        self.edges.iter().find(|e| e.from == from && e.to == to).map(|e| e.score)
    }

    /// Position of `(from, to)` in the ranking, if listed.
    pub fn rank(&self, from: usize, to: usize) -> Option<usize> {
        self.edges.iter().position(|e| e.from == from && e.to == to)
    }
}

impl fmt::Display for TransitionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "transitions above {}: {}", self.threshold, self.edges.len())?;
        for e in &self.edges {
            let mark = if e.boundary { " *" } else { "" };
            writeln!(f, "{:>12} -> {:<12} {:>9.4}{mark}", e.from_label, e.to_label, e.score)?;
        }
        Ok(())
    }
}

/// All transitions `Q[k, l] > threshold`, strongest first. Ties keep
/// row-major order.
pub fn inspect_transitions(q: &Matrix, threshold: f64) -> Result<TransitionReport> {
    if q.rows() != q.cols() {
        return Err(Error::shape("inspect_transitions", q.shape_str(), "square"));
    }
    let n = q.rows();
    let named = n == LabelSpace::WITH_TAGS;
    let name = |i: usize| {
        if named {
            LabelSpace::tag_name(i)
        } else {
            format!("#{i}")
        }
    };
    let mut edges = Vec::new();
    for from in 0..n {
        for to in 0..n {
            let score = q[(from, to)];
            if score > threshold {
                edges.push(TransitionEdge {
                    from,
                    to,
                    from_label: name(from),
                    to_label: name(to),
                    score,
                    boundary: from + 2 >= n || to + 2 >= n,
                });
            }
        }
    }
    edges.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(TransitionReport { threshold, edges })
}

/// Disagreement of individual votes with their group's majority label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementStats {
    pub entities: usize,
    /// Entities with at least one vote different from the majority.
    pub disagreeing: usize,
    pub fraction: f64,
    /// Over disagreeing entities: share of votes that differ.
    pub max: Option<f64>,
    pub min: Option<f64>,
    pub median: Option<f64>,
}

impl fmt::Display for DisagreementStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} of {} entities disagree ({:.2}%)",
            self.disagreeing,
            self.entities,
            100.0 * self.fraction
        )?;
        if let (Some(max), Some(min), Some(med)) = (self.max, self.min, self.median) {
            write!(
                f,
                "; max {:.0}%, min {:.0}%, median {:.0}%",
                100.0 * max,
                100.0 * min,
                100.0 * med
            )?;
        }
        Ok(())
    }
}

/// Most frequent label; ties go to the lowest label index.
pub fn majority_label(votes: &[usize]) -> Result<usize> {
    let max = *votes
        .iter()
        .max()
        .ok_or_else(|| Error::Contract("majority vote over an empty group".into()))?;
    let mut counts = vec![0usize; max + 1];
    for &v in votes {
        counts[v] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    Ok(counts.iter().position(|&c| c == best).expect("non-empty"))
}

/// Summarizes how often votes in each group differ from its majority.
/// Empty groups are ignored.
pub fn disagreement_report<G: AsRef<[usize]>>(groups: &[G]) -> DisagreementStats {
    let mut fractions = Vec::new();
    let mut entities = 0;
    for g in groups {
        let votes = g.as_ref();
        let Ok(major) = majority_label(votes) else {
            continue;
        };
        entities += 1;
        let off = votes.iter().filter(|&&v| v != major).count();
        if off > 0 {
            fractions.push(off as f64 / votes.len() as f64);
        }
    }
    fractions.sort_by(f64::total_cmp);
    let median = match fractions.len() {
        0 => None,
        n if n % 2 == 1 => Some(fractions[n / 2]),
        n => Some((fractions[n / 2 - 1] + fractions[n / 2]) / 2.0),
    };
    DisagreementStats {
        entities,
        disagreeing: fractions.len(),
        fraction: if entities == 0 {
            0.0
        } else {
            fractions.len() as f64 / entities as f64
        },
        max: fractions.last().copied(),
        min: fractions.first().copied(),
        median,
    }
}
