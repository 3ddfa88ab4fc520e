use hierground_core::synth::{
    generate_corpus, validate_record, ChainRecord, Corpus, CorpusConfig, Query, TierRecord, TIERS,
};
use proptest::prelude::*;

fn small(scenes: usize) -> CorpusConfig {
    CorpusConfig {
        scenes,
        ..Default::default()
    }
}

fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn scene_of<'a>(c: &'a Corpus, r: &ChainRecord) -> &'a hierground_core::synth::Scene {
    c.scenes.iter().find(|s| s.id == r.scene_id).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn positives_nest_and_lengthen(seed in any::<u64>()) {
        let c = generate_corpus(&small(4), seed).unwrap();
        for r in &c.chains {
            let p: Vec<Vec<&str>> = r.positives().map(tokens).collect();
            prop_assert_eq!(p.len(), TIERS);
            prop_assert!(p[0].len() < p[1].len() && p[1].len() < p[2].len());
            // every tier-1 token recurs in tier 2, every tier-2 token in tier 3
            for t in 0..TIERS - 1 {
                prop_assert!(p[t].iter().all(|w| p[t + 1].contains(w)), "{:?}", p);
            }
        }
    }

    #[test]
    fn ground_truth_holds_by_exhaustive_search(seed in any::<u64>()) {
        let c = generate_corpus(&small(4), seed).unwrap();
        for r in &c.chains {
            let scene = scene_of(&c, r);
            for tier in &r.tiers {
                let pos = Query::parse(&tier.positive).unwrap();
                let neg = Query::parse(&tier.negative).unwrap();
                let holding: Vec<usize> = scene.objects.iter().filter(|o| pos.holds(scene, o)).map(|o| o.id).collect();
                prop_assert!(holding.contains(&r.target_id));
                let target = scene.objects.iter().find(|o| o.id == r.target_id).unwrap();
                prop_assert!(!neg.holds(scene, target), "{} holds", tier.negative);
            }
            let top = Query::parse(&r.tiers[TIERS - 1].positive).unwrap();
            let n = scene.objects.iter().filter(|o| top.holds(scene, o)).count();
            prop_assert_eq!(n, 1);
        }
    }

    #[test]
    fn each_negative_differs_from_its_positive_in_few_tokens(seed in any::<u64>()) {
        let c = generate_corpus(&small(4), seed).unwrap();
        for r in &c.chains {
            for tier in &r.tiers {
                let (p, n) = (tokens(&tier.positive), tokens(&tier.negative));
                prop_assert!(p != n);
                let shared = p.iter().filter(|w| n.contains(w)).count();
                // only the edited component's words may differ
                prop_assert!(p.len() - shared <= 3, "{} vs {}", tier.positive, tier.negative);
            }
        }
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>()) {
        prop_assert_eq!(generate_corpus(&small(3), seed).unwrap(), generate_corpus(&small(3), seed).unwrap());
    }
}

#[test]
fn a_record_missing_a_tier_is_rejected() {
    let c = generate_corpus(&small(2), 5).unwrap();
    let mut r = c.chains[0].clone();
    r.tiers.pop();
    assert!(validate_record(scene_of(&c, &r), &r, 4).is_err());
}

#[test]
fn a_true_negative_is_rejected() {
    let c = generate_corpus(&small(2), 5).unwrap();
    let mut r = c.chains[0].clone();
    let t: &mut TierRecord = &mut r.tiers[0];
    t.negative = t.positive.clone();
    assert!(validate_record(scene_of(&c, &r), &r, 4).is_err());
}

#[test]
fn scene_order_does_not_change_later_scenes() {
    // scene i depends only on the master seed and i
    let a = generate_corpus(&small(3), 11).unwrap();
    let b = generate_corpus(&small(6), 11).unwrap();
    assert_eq!(a.scenes[..], b.scenes[..3]);
}
