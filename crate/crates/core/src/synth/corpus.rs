use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::chain::{negative_chain, positive_chain, NegativeKind, TIERS};
use super::query::Query;
use super::scene::{generate_scene, Scene, SceneConfig};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierRecord {
    pub positive: String,
    pub negative: String,
    pub negative_kind: NegativeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainRecord {
    pub scene_id: u64,
    pub target_id: usize,
    pub tiers: Vec<TierRecord>,
}

impl ChainRecord {
    pub fn positives(&self) -> impl Iterator<Item = &str> {
        self.tiers.iter().map(|t| t.positive.as_str())
    }

    pub fn negatives(&self) -> impl Iterator<Item = &str> {
        self.tiers.iter().map(|t| t.negative.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub scenes: usize,
    pub chains_per_scene: usize,
    /// Tier-3 positives with fewer words are rejected.
    pub min_tier3_words: usize,
    pub scene: SceneConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            scenes: 1000,
            chains_per_scene: 1,
            min_tier3_words: 4,
            scene: SceneConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 {
            return Err(Error::config("corpus.scenes", "must be positive"));
        }
        if self.chains_per_scene == 0 || self.chains_per_scene > self.scene.min_objects {
            return Err(Error::config("corpus.chains_per_scene", "must lie in 1..=scene.min_objects"));
        }
        if self.min_tier3_words < 3 {
            return Err(Error::config("corpus.min_tier3_words", "a tier-3 caption has at least three words"));
        }
        self.scene.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub scenes: Vec<Scene>,
    pub chains: Vec<ChainRecord>,
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn invalid(record: &ChainRecord, reason: String) -> Error {
    Error::Unsatisfiable(format!(
        "chain for scene {} object {}: {}",
        record.scene_id, record.target_id, reason
    ))
}

/// Positives form strict token extensions: tier 2 ends with tier 1, tier 3
/// starts with tier 2.
pub fn check_containment(record: &ChainRecord) -> Result<()> {
    if record.tiers.len() != TIERS {
        return Err(invalid(record, format!("expected {TIERS} tiers, found {}", record.tiers.len())));
    }
    let p: Vec<Vec<&str>> = record.positives().map(words).collect();
    if p[0].len() != 1 {
        return Err(invalid(record, "tier-1 positive must be a bare noun".into()));
    }
    if !(p[1].len() > p[0].len() && p[1].ends_with(&p[0])) {
        return Err(invalid(record, "tier 2 does not extend tier 1".into()));
    }
    if !(p[2].len() > p[1].len() && p[2].starts_with(&p[1])) {
        return Err(invalid(record, "tier 3 does not extend tier 2".into()));
    }
    Ok(())
}

/// The negative at tier `t` changes only the tier-`t` component.
pub fn check_locality(record: &ChainRecord) -> Result<()> {
    for (t, tier) in record.tiers.iter().enumerate() {
        let pos = Query::parse(&tier.positive)?;
        let neg = Query::parse(&tier.negative)?;
        if neg.tier() != pos.tier() || tier.negative_kind.tier() != t + 1 {
            return Err(invalid(record, format!("tier {} negative has the wrong shape", t + 1)));
        }
        let ok = match t {
            0 => pos.noun != neg.noun || pos.determiner != neg.determiner,
            1 => pos.noun == neg.noun && !neg.determiner && pos.attribute != neg.attribute,
            _ => {
                pos.noun == neg.noun
                    && !neg.determiner
                    && pos.attribute == neg.attribute
                    && pos.relation != neg.relation
            }
        };
        if !ok || pos == neg {
            return Err(invalid(record, format!("tier {} negative is not local", t + 1)));
        }
    }
    Ok(())
}

/// Every positive holds for the target, every negative fails, and the
/// tier-3 positive picks out the target alone.
pub fn check_ground_truth(scene: &Scene, record: &ChainRecord) -> Result<()> {
    let target = scene.object(record.target_id)?;
    for (t, tier) in record.tiers.iter().enumerate() {
        if !Query::parse(&tier.positive)?.holds(scene, target) {
            return Err(invalid(record, format!("tier {} positive is false", t + 1)));
        }
        if Query::parse(&tier.negative)?.holds(scene, target) {
            return Err(invalid(record, format!("tier {} negative is true", t + 1)));
        }
    }
    let q3 = Query::parse(&record.tiers[TIERS - 1].positive)?;
    if scene.matches(&q3) != [record.target_id] {
        return Err(invalid(record, "tier-3 positive is not unique".into()));
    }
    Ok(())
}

pub fn validate_record(scene: &Scene, record: &ChainRecord, min_tier3_words: usize) -> Result<()> {
    if scene.id != record.scene_id {
        return Err(invalid(record, format!("paired with scene {}", scene.id)));
    }
    check_containment(record)?;
    check_locality(record)?;
    check_ground_truth(scene, record)?;
    if words(&record.tiers[TIERS - 1].positive).len() < min_tier3_words {
        return Err(invalid(record, "tier-3 caption too short".into()));
    }
    Ok(())
}

/// Validates every chain against its scene.
pub fn validate_corpus(corpus: &Corpus, min_tier3_words: usize) -> Result<()> {
    let by_id: BTreeMap<u64, &Scene> = corpus.scenes.iter().map(|s| (s.id, s)).collect();
    for record in &corpus.chains {
        let scene = by_id
            .get(&record.scene_id)
            .ok_or_else(|| invalid(record, "scene missing".into()))?;
        validate_record(scene, record, min_tier3_words)?;
    }
    Ok(())
}

/// Builds a chain for `target`, or reports why it cannot.
pub fn build_chain(scene: &Scene, target: usize, seed: u64, min_tier3_words: usize) -> Result<ChainRecord> {
    let mut rng = rng::seeded(seed);
    let pos = positive_chain(scene, target, &mut rng)?;
    let neg = negative_chain(scene, target, &pos, &mut rng)?;
    let tiers = pos
        .tiers
        .iter()
        .zip(neg)
        .map(|(p, n)| TierRecord {
            positive: p.text(),
            negative: n.query.text(),
            negative_kind: n.kind,
        })
        .collect();
    let record = ChainRecord {
        scene_id: scene.id,
        target_id: target,
        tiers,
    };
    validate_record(scene, &record, min_tier3_words)?;
    Ok(record)
}

/// Generates `cfg.scenes` scenes with `cfg.chains_per_scene` validated chains
/// each. Scene `i` depends only on the master seed and `i`.
pub fn generate_corpus(cfg: &CorpusConfig, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    let mut corpus = Corpus::default();
    for i in 0..cfg.scenes {
        let scene_seed = rng::derive(seed, i as u64);
        let mut done = false;
        for attempt in 0..cfg.scene.max_retries as u64 {
            let attempt_seed = rng::derive(scene_seed, attempt);
            let scene = generate_scene(&cfg.scene, attempt_seed, i as u64)?;
            let mut order: Vec<usize> = (0..scene.objects.len()).collect();
            order.shuffle(&mut rng::stream(attempt_seed, 1));
            let mut chains = Vec::new();
            for (k, target) in order.into_iter().enumerate() {
                if chains.len() == cfg.chains_per_scene {
                    break;
                }
                if let Ok(c) = build_chain(&scene, target, rng::derive(attempt_seed, 2 + k as u64), cfg.min_tier3_words) {
                    chains.push(c);
                }
            }
            if chains.len() == cfg.chains_per_scene {
                corpus.scenes.push(scene);
                corpus.chains.extend(chains);
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::Unsatisfiable(format!("scene {i}: no valid chains after retries")));
        }
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub scenes: usize,
    pub chains: usize,
    /// Per tier: word count -> number of positive captions.
    pub tier_word_histogram: Vec<BTreeMap<usize, usize>>,
    pub tier_mean_words: Vec<f64>,
    pub negative_kinds: BTreeMap<NegativeKind, usize>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut hist = alloc::vec![BTreeMap::new(); TIERS];
    let mut kinds = BTreeMap::new();
    for record in &corpus.chains {
        for (t, tier) in record.tiers.iter().enumerate().take(TIERS) {
            *hist[t].entry(words(&tier.positive).len()).or_insert(0) += 1;
            *kinds.entry(tier.negative_kind).or_insert(0) += 1;
        }
    }
    let means = hist
        .iter()
        .map(|h: &BTreeMap<usize, usize>| {
            let n: usize = h.values().sum();
            let total: usize = h.iter().map(|(w, c)| w * c).sum();
            if n == 0 {
                0.0
            } else {
                total as f64 / n as f64
            }
        })
        .collect();
    CorpusStats {
        scenes: corpus.scenes.len(),
        chains: corpus.chains.len(),
        tier_word_histogram: hist,
        tier_mean_words: means,
        negative_kinds: kinds,
    }
}

/// All distinct caption words in the corpus, sorted.
pub fn corpus_words(corpus: &Corpus) -> Vec<String> {
    let mut out: Vec<String> = corpus
        .chains
        .iter()
        .flat_map(|c| c.positives().chain(c.negatives()).flat_map(words).collect::<Vec<_>>())
        .map(ToString::to_string)
        .collect();
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            scenes: 200,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn generated_corpus_validates() {
        let c = generate_corpus(&small(), 3).unwrap();
        assert_eq!(c.chains.len(), 200);
        validate_corpus(&c, 4).unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_corpus(&small(), 9).unwrap(), generate_corpus(&small(), 9).unwrap());
    }

    #[test]
    fn tier_lengths_increase() {
        let s = corpus_stats(&generate_corpus(&small(), 1).unwrap());
        assert!(s.tier_mean_words[0] < s.tier_mean_words[1]);
        assert!(s.tier_mean_words[1] < s.tier_mean_words[2]);
    }

    #[test]
    fn missing_tier_is_rejected() {
        let mut c = generate_corpus(&small(), 2).unwrap();
        c.chains[0].tiers.pop();
        assert!(validate_corpus(&c, 4).is_err());
    }
}
