use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::query::{AttributeTerm, Query, RelationPhrase};
use super::scene::Scene;
use super::tables::{self, AttrClass, SpatialKind, EASY_NOUNS};
use crate::rng::Rng;
use crate::{Error, Result};

pub const TIERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeKind {
    Antonym,
    RandomNoun,
    Determiner,
    AttributeSwap,
    AttributeNegation,
    RelationSwap,
    RelationNegation,
}

impl NegativeKind {
    pub fn tier(self) -> usize {
        match self {
            NegativeKind::Antonym | NegativeKind::RandomNoun | NegativeKind::Determiner => 1,
            NegativeKind::AttributeSwap | NegativeKind::AttributeNegation => 2,
            NegativeKind::RelationSwap | NegativeKind::RelationNegation => 3,
        }
    }
}

/// Positive captions for tiers 1..3 (category, + attribute, + relation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveChain {
    pub tiers: [Query; TIERS],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeTier {
    pub query: Query,
    pub kind: NegativeKind,
}

/// Attribute class for tier 2: the object's first class with probability
/// one half, otherwise one of its other classes.
fn attribute_class_order(classes: &[AttrClass], rng: &mut Rng) -> Vec<AttrClass> {
    let mut rest: Vec<AttrClass> = classes[1..].to_vec();
    rest.shuffle(rng);
    if rest.is_empty() || rng.random_bool(0.5) {
        let mut out = alloc::vec![classes[0]];
        out.extend(rest);
        out
    } else {
        let mut out = alloc::vec![rest[0], classes[0]];
        out.extend_from_slice(&rest[1..]);
        out
    }
}

/// Builds the positive ladder for `object_id`; the tier-3 caption is unique
/// in the scene.
pub fn positive_chain(scene: &Scene, object_id: usize, rng: &mut Rng) -> Result<PositiveChain> {
    let obj = scene.object(object_id)?;
    let classes: Vec<AttrClass> = obj.attributes.keys().copied().collect();
    if classes.is_empty() {
        return Err(Error::AttributeExhausted(object_id));
    }
    let mut relations = obj.true_relations(scene);
    if relations.is_empty() {
        return Err(Error::RelationExhausted(object_id));
    }
    for class in attribute_class_order(&classes, rng) {
        let word = obj.attribute(class).expect("listed class");
        relations.shuffle(rng);
        for rel in &relations {
            let q3 = Query::described(word, &obj.category, rel.clone());
            if scene.matches(&q3) == [object_id] {
                return Ok(PositiveChain {
                    tiers: [Query::category(&obj.category), Query::attributed(word, &obj.category), q3],
                });
            }
        }
    }
    Err(Error::NotUnique(object_id))
}

fn ensure_false(scene: &Scene, target: usize, q: &Query, tier: usize) -> Result<()> {
    if q.holds(scene, scene.object(target)?) {
        Err(Error::NoValidNegative { tier })
    } else {
        Ok(())
    }
}

fn tier1_negative(positive: &Query, rng: &mut Rng) -> Result<NegativeTier> {
    let noun = &positive.noun;
    // Antonym and determiner are the hard kinds, a random noun the easy one.
    let (query, kind) = match rng.random_range(0..3) {
        0 => {
            let c: Vec<&str> = tables::contrast_nouns(noun).collect();
            let c = c.choose(rng).ok_or(Error::NoValidNegative { tier: 1 })?;
            (Query::category(c), NegativeKind::Antonym)
        }
        1 => (
            Query {
                determiner: true,
                ..Query::category(noun)
            },
            NegativeKind::Determiner,
        ),
        _ => {
            let n = EASY_NOUNS.choose(rng).expect("easy nouns");
            (Query::category(n), NegativeKind::RandomNoun)
        }
    };
    Ok(NegativeTier { query, kind })
}

fn tier2_negative(positive: &Query, rng: &mut Rng) -> Result<NegativeTier> {
    let attr = positive.attribute.as_ref().ok_or(Error::MissingComponent {
        component: "attribute",
        tier: 2,
    })?;
    if rng.random_range(0..3) < 2 {
        let swaps: Vec<&str> = AttrClass::contrasts(&attr.word).collect();
        if let Some(w) = swaps.choose(rng) {
            return Ok(NegativeTier {
                query: Query::attributed(w, &positive.noun),
                kind: NegativeKind::AttributeSwap,
            });
        }
    }
    let mut q = positive.clone();
    q.attribute = Some(AttributeTerm {
        word: attr.word.clone(),
        negated: true,
    });
    Ok(NegativeTier {
        query: q,
        kind: NegativeKind::AttributeNegation,
    })
}

/// Relation phrases of the same shape as `rel` that are false for the target.
fn false_relations(scene: &Scene, target: usize, rel: &RelationPhrase) -> Vec<RelationPhrase> {
    let obj = &scene.objects[target];
    let mut out = Vec::new();
    match rel {
        RelationPhrase::With(_) | RelationPhrase::Without(_) => {
            let pool = tables::group_of(&obj.category).map_or(&[][..], |g| g.accessories());
            for a in pool {
                let cand = RelationPhrase::With((*a).to_string());
                if !cand.holds(scene, obj) {
                    out.push(cand);
                }
            }
        }
        RelationPhrase::Spatial { noun, .. } => {
            let mut nouns: Vec<String> = scene.objects.iter().map(|o| o.category.clone()).collect();
            nouns.sort();
            nouns.dedup();
            for kind in SpatialKind::ALL {
                for n in &nouns {
                    let cand = RelationPhrase::Spatial {
                        kind,
                        noun: n.clone(),
                        negated: false,
                    };
                    // Keep the swap local: change the relation or its object, not both.
                    let same_shape = n == noun || matches!(rel, RelationPhrase::Spatial { kind: k, .. } if *k == kind);
                    if same_shape && !cand.holds(scene, obj) {
                        out.push(cand);
                    }
                }
            }
        }
    }
    out
}

fn tier3_negative(scene: &Scene, target: usize, positive: &Query, rng: &mut Rng) -> Result<NegativeTier> {
    let rel = positive.relation.as_ref().ok_or(Error::MissingComponent {
        component: "relation",
        tier: 3,
    })?;
    let with_relation = |r: RelationPhrase| Query {
        relation: Some(r),
        ..positive.clone()
    };
    let negation = NegativeTier {
        query: with_relation(rel.negated()),
        kind: NegativeKind::RelationNegation,
    };
    if rng.random_range(0..3) < 2 {
        let swaps = false_relations(scene, target, rel);
        if let Some(r) = swaps.choose(rng) {
            return Ok(NegativeTier {
                query: with_relation(r.clone()),
                kind: NegativeKind::RelationSwap,
            });
        }
    }
    if !negation.query.holds(scene, &scene.objects[target]) {
        return Ok(negation);
    }
    let swaps = false_relations(scene, target, rel);
    swaps
        .choose(rng)
        .map(|r| NegativeTier {
            query: with_relation(r.clone()),
            kind: NegativeKind::RelationSwap,
        })
        .ok_or(Error::NoValidNegative { tier: 3 })
}

/// One hard negative per tier, each differing from its positive only in
/// that tier's component and each false for the target.
pub fn negative_chain(
    scene: &Scene,
    target: usize,
    positive: &PositiveChain,
    rng: &mut Rng,
) -> Result<[NegativeTier; TIERS]> {
    let n1 = tier1_negative(&positive.tiers[0], rng)?;
    let n2 = tier2_negative(&positive.tiers[1], rng)?;
    let n3 = tier3_negative(scene, target, &positive.tiers[2], rng)?;
    for (t, n) in [&n1, &n2, &n3].into_iter().enumerate() {
        ensure_false(scene, target, &n.query, t + 1)?;
    }
    Ok([n1, n2, n3])
}
