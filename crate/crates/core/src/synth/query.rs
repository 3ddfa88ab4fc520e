use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::scene::{Scene, SceneObject};
use super::tables::{self, AttrClass, SpatialKind, NEGATION, NEGATIVE_DETERMINERS, WITH, WITHOUT};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeTerm {
    pub word: String,
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationPhrase {
    With(String),
    Without(String),
    Spatial {
        kind: SpatialKind,
        noun: String,
        negated: bool,
    },
}

impl RelationPhrase {
    pub fn negated(&self) -> RelationPhrase {
        match self {
            RelationPhrase::With(a) => RelationPhrase::Without(a.clone()),
            RelationPhrase::Without(a) => RelationPhrase::With(a.clone()),
            RelationPhrase::Spatial { kind, noun, negated } => RelationPhrase::Spatial {
                kind: *kind,
                noun: noun.clone(),
                negated: !negated,
            },
        }
    }

    pub fn is_negative(&self) -> bool {
        matches!(
            self,
            RelationPhrase::Without(_) | RelationPhrase::Spatial { negated: true, .. }
        )
    }

    pub fn text(&self) -> String {
        match self {
            RelationPhrase::With(a) => format!("{WITH} {a}"),
            RelationPhrase::Without(a) => format!("{WITHOUT} {a}"),
            RelationPhrase::Spatial { kind, noun, negated } => {
                if *negated {
                    format!("{NEGATION} {} {noun}", kind.word())
                } else {
                    format!("{} {noun}", kind.word())
                }
            }
        }
    }

    pub fn holds(&self, scene: &Scene, obj: &SceneObject) -> bool {
        match self {
            RelationPhrase::With(a) => obj.has_accessory(a),
            RelationPhrase::Without(a) => !obj.has_accessory(a),
            RelationPhrase::Spatial { kind, noun, negated } => {
                let exists = obj
                    .relations
                    .iter()
                    .any(|(k, other)| k == kind && scene.objects.get(*other).is_some_and(|o| &o.category == noun));
                exists != *negated
            }
        }
    }
}

/// Structured caption: `[no] [not] [attribute] noun [relation]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    /// Leading negative determiner ("no dog"): never satisfied.
    pub determiner: bool,
    pub attribute: Option<AttributeTerm>,
    pub noun: String,
    pub relation: Option<RelationPhrase>,
}

impl Query {
    pub fn category(noun: &str) -> Self {
        Self {
            determiner: false,
            attribute: None,
            noun: noun.to_string(),
            relation: None,
        }
    }

    pub fn attributed(word: &str, noun: &str) -> Self {
        Self {
            attribute: Some(AttributeTerm {
                word: word.to_string(),
                negated: false,
            }),
            ..Self::category(noun)
        }
    }

    pub fn described(word: &str, noun: &str, relation: RelationPhrase) -> Self {
        Self {
            relation: Some(relation),
            ..Self::attributed(word, noun)
        }
    }

    /// Number of hierarchy tiers the caption spans (1 to 3).
    pub fn tier(&self) -> usize {
        if self.relation.is_some() {
            3
        } else if self.attribute.is_some() {
            2
        } else {
            1
        }
    }

    pub fn text(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if self.determiner {
            parts.push(NEGATIVE_DETERMINERS[0].to_string());
        }
        if let Some(a) = &self.attribute {
            if a.negated {
                parts.push(NEGATION.to_string());
            }
            parts.push(a.word.clone());
        }
        parts.push(self.noun.clone());
        if let Some(r) = &self.relation {
            parts.push(r.text());
        }
        parts.join(" ")
    }

    pub fn parse(caption: &str) -> Result<Self> {
        let err = |reason: &str| Error::Parse {
            caption: caption.to_string(),
            reason: reason.to_string(),
        };
        let words: Vec<&str> = caption.split_whitespace().collect();
        if words.is_empty() {
            return Err(Error::EmptyCaption);
        }
        let mut i = 0;
        let determiner = NEGATIVE_DETERMINERS.contains(&words[0]);
        if determiner {
            i += 1;
        }
        let mut attribute = None;
        let negated = words.get(i) == Some(&NEGATION);
        if negated {
            i += 1;
        }
        if let Some(w) = words.get(i).filter(|w| AttrClass::of(w).is_some()) {
            attribute = Some(AttributeTerm {
                word: (*w).to_string(),
                negated,
            });
            i += 1;
        } else if negated {
            return Err(err("negation must precede an attribute"));
        }
        let noun = match words.get(i) {
            Some(w) if tables::is_noun(w) => (*w).to_string(),
            Some(_) => return Err(err("expected a noun")),
            None => return Err(err("missing noun")),
        };
        i += 1;
        let rest = &words[i..];
        let relation = match rest {
            [] => None,
            [w, acc @ ..] if *w == WITH && !acc.is_empty() => Some(RelationPhrase::With(acc.join(" "))),
            [w, acc @ ..] if *w == WITHOUT && !acc.is_empty() => Some(RelationPhrase::Without(acc.join(" "))),
            [not, k, n] if *not == NEGATION => Some(RelationPhrase::Spatial {
                kind: SpatialKind::parse(k).ok_or_else(|| err("unknown spatial relation"))?,
                noun: (*n).to_string(),
                negated: true,
            }),
            [k, n] => Some(RelationPhrase::Spatial {
                kind: SpatialKind::parse(k).ok_or_else(|| err("unknown spatial relation"))?,
                noun: (*n).to_string(),
                negated: false,
            }),
            _ => return Err(err("unrecognised relation phrase")),
        };
        if determiner && (attribute.is_some() || relation.is_some()) {
            return Err(err("negative determiner only applies to bare nouns"));
        }
        Ok(Self {
            determiner,
            attribute,
            noun,
            relation,
        })
    }

    /// Whether `obj` satisfies every part of the caption.
    pub fn holds(&self, scene: &Scene, obj: &SceneObject) -> bool {
        if self.determiner || obj.category != self.noun {
            return false;
        }
        if let Some(a) = &self.attribute {
            let has = AttrClass::of(&a.word).is_some_and(|c| obj.attribute(c) == Some(a.word.as_str()));
            if has == a.negated {
                return false;
            }
        }
        if let Some(r) = &self.relation {
            if !r.holds(scene, obj) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trips() {
        for c in [
            "woman",
            "no dog",
            "middle woman",
            "not tall man",
            "middle woman with dark hair",
            "left dog without a collar",
            "red car not above bus",
            "small cat beside dog",
        ] {
            let q = Query::parse(c).unwrap();
            assert_eq!(q.text(), c);
        }
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(Query::parse("").is_err());
        assert!(Query::parse("not dog").is_err());
        assert!(Query::parse("red").is_err());
        assert!(Query::parse("no red dog").is_err());
        assert!(Query::parse("dog towards cat").is_err());
    }
}
