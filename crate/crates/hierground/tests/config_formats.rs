use std::path::Path;

use hierground::config::RunConfig;
use hierground::core::synth::{generate_corpus, CorpusConfig};
use hierground::core::train::{LossMode, TrainConfig, Trainer};
use hierground::error::CliError;
use hierground::formats::{self, MetricRow};

fn workspace_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn configuration_survives_a_toml_round_trip() {
    for cfg in [RunConfig::default(), RunConfig::desk()] {
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}

#[test]
fn the_shipped_desk_file_is_the_desk_preset_with_periodic_evaluation() {
    let file = RunConfig::load(&workspace_file("configs/desk.toml")).unwrap();
    assert_eq!(file.eval_every, 250);
    assert_eq!(RunConfig { eval_every: RunConfig::desk().eval_every, ..file }, RunConfig::desk());
}

#[test]
fn unknown_and_missing_keys_are_validation_errors() {
    let mut t = RunConfig::default().to_table();
    t.insert("no_such_key".into(), toml::Value::Integer(1));
    assert!(matches!(RunConfig::from_table(t), Err(CliError::Validation(_))));
    let mut t = RunConfig::default().to_table();
    t.remove("schema_version");
    assert!(matches!(RunConfig::from_table(t), Err(CliError::Validation(_))));
}

#[test]
fn overrides_apply_typed_values() {
    let c = RunConfig::default().with_overrides("mode=cl, lr_head=0.5, iterations=7").unwrap();
    assert_eq!(c.mode, LossMode::Cl);
    assert_eq!(c.lr_head, 0.5);
    assert_eq!(c.iterations, 7);
    assert!(RunConfig::default().with_overrides("iterations=many").is_err());
    assert!(RunConfig::default().with_overrides("bogus=1").is_err());
}

#[test]
fn corpus_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (chains, scenes) = (dir.path().join("c.jsonl"), dir.path().join("s.jsonl"));
    let corpus = generate_corpus(&CorpusConfig { scenes: 10, ..Default::default() }, 4).unwrap();
    formats::write_corpus(&chains, &scenes, &corpus).unwrap();
    assert_eq!(formats::read_corpus(&chains, &scenes, 4).unwrap(), corpus);
}

#[test]
fn a_record_missing_a_tier_is_rejected_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let (chains, scenes) = (dir.path().join("c.jsonl"), dir.path().join("s.jsonl"));
    let mut corpus = generate_corpus(&CorpusConfig { scenes: 3, ..Default::default() }, 4).unwrap();
    corpus.chains[1].tiers.pop();
    formats::write_corpus(&chains, &scenes, &corpus).unwrap();
    let err = formats::read_corpus(&chains, &scenes, 4).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)), "{err}");
    // header on line 1, so the second record sits on line 3
    assert!(err.to_string().contains(":3:"), "{err}");
}

#[test]
fn metrics_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    let rows = vec![
        MetricRow { metric: "ap".into(), name: "overall".into(), value: 0.123456789012345 },
        MetricRow { metric: "recall".into(), name: "tier3".into(), value: 1.0 / 3.0 },
    ];
    formats::write_metrics_csv(&p, &rows).unwrap();
    assert_eq!(formats::read_metrics_csv(&p).unwrap(), rows);
}

#[test]
fn checkpoints_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ck.json");
    let corpus = generate_corpus(&CorpusConfig { scenes: 6, ..Default::default() }, 4).unwrap();
    let mut t = Trainer::new(TrainConfig { chains_per_step: 2, iterations: 2, ..TrainConfig::desk() }, &corpus).unwrap();
    t.run(|_| {}).unwrap();
    let ck = t.checkpoint();
    formats::write_checkpoint(&p, &ck).unwrap();
    assert_eq!(formats::read_checkpoint(&p).unwrap(), ck);
}
