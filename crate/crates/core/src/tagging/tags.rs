use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annot::{InteractionKind, MentionKind};
use crate::error::{Error, Result};

/// Entity letter of a non-O tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TagLabel {
    /// Trigger.
    T,
    /// Effect (SpecificInteraction).
    E,
    /// PD precipitant.
    D,
    /// PK precipitant.
    K,
    /// UN precipitant.
    U,
}

impl TagLabel {
    pub const ALL: [TagLabel; 5] = [TagLabel::T, TagLabel::E, TagLabel::D, TagLabel::K, TagLabel::U];

    pub fn letter(self) -> char {
        match self {
            TagLabel::T => 'T',
            TagLabel::E => 'E',
            TagLabel::D => 'D',
            TagLabel::K => 'K',
            TagLabel::U => 'U',
        }
    }

    pub fn for_precipitant(kind: InteractionKind) -> Self {
        match kind {
            InteractionKind::PD => TagLabel::D,
            InteractionKind::PK => TagLabel::K,
            InteractionKind::UN => TagLabel::U,
        }
    }

    pub fn mention_kind(self) -> MentionKind {
        match self {
            TagLabel::T => MentionKind::Trigger,
            TagLabel::E => MentionKind::SpecificInteraction,
            TagLabel::D | TagLabel::K | TagLabel::U => MentionKind::Precipitant,
        }
    }

    /// Interaction kind carried by a precipitant label.
    pub fn interaction_kind(self) -> Option<InteractionKind> {
        match self {
            TagLabel::D => Some(InteractionKind::PD),
            TagLabel::K => Some(InteractionKind::PK),
            TagLabel::U => Some(InteractionKind::UN),
            TagLabel::T | TagLabel::E => None,
        }
    }
}

/// One of the 11 IOB tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    O,
    B(TagLabel),
    I(TagLabel),
}

/// Number of tags, the NER output width.
pub const NUM_TAGS: usize = 11;

impl Tag {
    /// All tags in index order: O, B-T, I-T, B-E, I-E, B-D, I-D, B-K, I-K, B-U, I-U.
    pub fn all() -> [Tag; NUM_TAGS] {
        let mut out = [Tag::O; NUM_TAGS];
        for (i, l) in TagLabel::ALL.iter().enumerate() {
            out[1 + 2 * i] = Tag::B(*l);
            out[2 + 2 * i] = Tag::I(*l);
        }
        out
    }

    pub fn index(self) -> usize {
        let pos = |l: TagLabel| TagLabel::ALL.iter().position(|x| *x == l).expect("label in ALL");
        match self {
            Tag::O => 0,
            Tag::B(l) => 1 + 2 * pos(l),
            Tag::I(l) => 2 + 2 * pos(l),
        }
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Tag::all().get(i).copied()
    }

    pub fn label(self) -> Option<TagLabel> {
        match self {
            Tag::O => None,
            Tag::B(l) | Tag::I(l) => Some(l),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(l) => write!(f, "B-{}", l.letter()),
            Tag::I(l) => write!(f, "I-{}", l.letter()),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Tag> {
        Tag::all().into_iter().find(|t| t.to_string() == s).ok_or_else(|| Error::Invalid(format!("unknown tag {s:?}")))
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Tag, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleven_distinct_tags_round_trip() {
        let all = Tag::all();
        assert_eq!(all.len(), 11);
        for (i, t) in all.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(Tag::from_index(i), Some(*t));
            assert_eq!(t.to_string().parse::<Tag>().unwrap(), *t);
        }
        let names: std::collections::HashSet<String> = all.iter().map(|t| t.to_string()).collect();
        assert_eq!(names.len(), 11);
        assert!(Tag::from_index(11).is_none());
        assert!("B-X".parse::<Tag>().is_err());
    }
}
