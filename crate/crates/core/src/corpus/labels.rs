use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Entity classes, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EcLabel {
    Peop,
    Org,
    Loc,
    Other,
    O,
}

/// Relation classes, in canonical order. `N` marks a pair with no relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReLabel {
    LocatedIn,
    WorkFor,
    OrgBasedIn,
    LiveIn,
    Kill,
    N,
}

impl EcLabel {
    pub const ALL: [EcLabel; 5] = [EcLabel::Peop, EcLabel::Org, EcLabel::Loc, EcLabel::Other, EcLabel::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EcLabel::Peop => "Peop",
            EcLabel::Org => "Org",
            EcLabel::Loc => "Loc",
            EcLabel::Other => "Other",
            EcLabel::O => "O",
        }
    }

    pub fn is_named(self) -> bool {
        self != EcLabel::O
    }
}

impl ReLabel {
    pub const ALL: [ReLabel; 6] = [
        ReLabel::LocatedIn,
        ReLabel::WorkFor,
        ReLabel::OrgBasedIn,
        ReLabel::LiveIn,
        ReLabel::Kill,
        ReLabel::N,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ReLabel::LocatedIn => "Located_in",
            ReLabel::WorkFor => "Work_for",
            ReLabel::OrgBasedIn => "OrgBased_in",
            ReLabel::LiveIn => "Live_in",
            ReLabel::Kill => "Kill",
            ReLabel::N => "N",
        }
    }
}

impl FromStr for EcLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        EcLabel::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown entity label `{s}`")))
    }
}

impl FromStr for ReLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ReLabel::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown relation label `{s}`")))
    }
}

impl fmt::Display for EcLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for ReLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! serde_by_name {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_by_name!(EcLabel);
serde_by_name!(ReLabel);

/// One of the `N = N_EC + N_RE` output classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Class {
    Ec(EcLabel),
    Re(ReLabel),
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Class::Ec(l) => l.fmt(f),
            Class::Re(l) => l.fmt(f),
        }
    }
}

/// Unified indexing of entity and relation classes plus the CRF's padding
/// tags. Entity class `i` maps to `i`, relation class `j` to `N_EC + j`;
/// the begin and end tags follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSpace;

impl LabelSpace {
    pub const N_EC: usize = 5;
    pub const N_RE: usize = 6;
    pub const N: usize = Self::N_EC + Self::N_RE;
    pub const BEGIN: usize = Self::N;
    pub const END: usize = Self::N + 1;
    pub const WITH_TAGS: usize = Self::N + 2;

    pub fn ec(label: EcLabel) -> usize {
        label.index()
    }

    pub fn re(label: ReLabel) -> usize {
        Self::N_EC + label.index()
    }

    pub fn decode(index: usize) -> Option<Class> {
        if index < Self::N_EC {
            EcLabel::from_index(index).map(Class::Ec)
        } else {
            ReLabel::from_index(index - Self::N_EC).map(Class::Re)
        }
    }

    /// Entity label at `index`, if `index` falls in the entity block.
    pub fn as_ec(index: usize) -> Option<EcLabel> {
        EcLabel::from_index(index)
    }

    pub fn as_re(index: usize) -> Option<ReLabel> {
        index.checked_sub(Self::N_EC).and_then(ReLabel::from_index)
    }

    pub fn ec_range() -> std::ops::Range<usize> {
        0..Self::N_EC
    }

    pub fn re_range() -> std::ops::Range<usize> {
        Self::N_EC..Self::N
    }

    /// Name of any index including the padding tags.
    pub fn tag_name(index: usize) -> String {
        match index {
            Self::BEGIN => "<begin>".to_string(),
            Self::END => "<end>".to_string(),
            i => Self::decode(i).map_or_else(|| format!("#{i}"), |c| c.to_string()),
        }
    }

    /// Class names in unified order; stored in checkpoints to detect
    /// label-order mismatches.
    pub fn names() -> Vec<String> {
        (0..Self::N).map(Self::tag_name).collect()
    }
}
