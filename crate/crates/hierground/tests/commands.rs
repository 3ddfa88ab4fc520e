use std::fs;

use hierground::commands::{self, CHECKPOINT_FILE};
use hierground::config::RunConfig;
use hierground::core::train::Model;
use hierground::formats;

fn tiny() -> RunConfig {
    RunConfig {
        train_scene_count: 24,
        eval_scene_count: 8,
        iterations: 6,
        eval_every: 3,
        ablate_seeds: vec![0],
        ..RunConfig::desk()
    }
}

#[test]
fn gen_data_is_deterministic_and_counts_add_up() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = tiny();
    let s = commands::gen_data(&cfg, a.path()).unwrap();
    commands::gen_data(&cfg, b.path()).unwrap();
    for f in ["train.chains.jsonl", "train.scenes.jsonl", "eval.chains.jsonl", "eval.scenes.jsonl", "stats.json", "vocab.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(s.train.scenes, 24);
    assert_eq!(s.train.chains, 24 * cfg.chains_per_scene);
    for tier in &s.train.tier_word_histogram {
        assert_eq!(tier.values().sum::<usize>(), s.train.chains);
    }
}

#[test]
fn training_from_written_corpora_matches_training_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    commands::gen_data(&cfg, dir.path()).unwrap();
    let from_files = RunConfig {
        train_chains_path: Some(dir.path().join("train.chains.jsonl")),
        train_scenes_path: Some(dir.path().join("train.scenes.jsonl")),
        eval_chains_path: Some(dir.path().join("eval.chains.jsonl")),
        eval_scenes_path: Some(dir.path().join("eval.scenes.jsonl")),
        ..cfg.clone()
    };
    let a = commands::train_in_memory(&cfg, &commands::corpora(&cfg).unwrap(), None, |_| {}, |_, _| Ok(())).unwrap();
    let b = commands::train_in_memory(&from_files, &commands::corpora(&from_files).unwrap(), None, |_| {}, |_, _| Ok(())).unwrap();
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
}

#[test]
fn resumed_training_matches_an_unbroken_run() {
    let (whole, part) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let full = commands::train(&tiny(), whole.path(), None, |_| {}).unwrap();
    let short = RunConfig { iterations: 3, ..tiny() };
    commands::train(&short, part.path(), None, |_| {}).unwrap();
    let ck = part.path().join(CHECKPOINT_FILE);
    let resumed = commands::train(&tiny(), part.path(), Some(&ck), |_| {}).unwrap();
    assert_eq!(resumed.checkpoint, full.checkpoint);
    assert_eq!(resumed.evaluations.last(), full.evaluations.last());
}

#[test]
fn a_checkpoint_from_a_different_model_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    commands::train(&tiny(), dir.path(), None, |_| {}).unwrap();
    let other = RunConfig { components: 2, ..tiny() };
    let err = commands::eval(&other, &dir.path().join(CHECKPOINT_FILE), dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
}

#[test]
fn evaluation_of_a_checkpoint_is_deterministic_and_matches_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let t = commands::train(&cfg, dir.path(), None, |_| {}).unwrap();
    let ck = dir.path().join(CHECKPOINT_FILE);
    let a = commands::eval(&cfg, &ck, dir.path()).unwrap();
    let b = commands::eval(&cfg, &ck, dir.path()).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(Some(&a.metrics), t.evaluations.last().map(|e| &e.metrics));
    let rows = formats::read_metrics_csv(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(rows[0].value, a.metrics.ap);
}

#[test]
fn exported_embeddings_match_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    commands::train(&cfg, dir.path(), None, |_| {}).unwrap();
    let ck = dir.path().join(CHECKPOINT_FILE);
    let captions: Vec<String> = ["woman", "left woman", "left woman with dark hair"].map(String::from).to_vec();
    let n = commands::export_embeddings(&cfg, &ck, &captions, dir.path()).unwrap();
    assert_eq!(n, 4 * captions.len());

    let model = Model::init(cfg.text_config(), cfg.tau, cfg.seed)
        .unwrap()
        .with_params(formats::read_checkpoint(&ck).unwrap().params)
        .unwrap();
    let e = model.embed(&captions).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("embeddings.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), n);
    for (i, c) in captions.iter().enumerate() {
        let row = &rows[4 * i];
        assert_eq!((&row[0], &row[1]), (c.as_str(), "E"));
        for (k, v) in e.row(i).iter().enumerate() {
            let parsed: f64 = row[k + 2].parse().unwrap();
            assert!((parsed - v).abs() < 1e-12);
        }
    }
}

#[test]
fn ablation_covers_each_variant_and_identical_variants_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        ablate_variants: vec!["mode=h".into(), "mode=h, lr_head=0.01".into()],
        ..tiny()
    };
    assert_eq!(cfg.lr_head, 0.01);
    let t = commands::ablate(&cfg, dir.path(), |_| {}).unwrap();
    assert_eq!(t.runs.len(), 2);
    assert_eq!(t.summary.len(), 2);
    assert_eq!(t.runs[0].ap, t.runs[1].ap);
    assert_eq!(t.runs[0].angle_pos, t.runs[1].angle_pos);
    let csv_rows = fs::read_to_string(dir.path().join("ablation.csv")).unwrap().lines().count();
    assert_eq!(csv_rows, 3);
}

#[test]
fn median_handles_odd_and_even_lengths() {
    assert_eq!(commands::median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(commands::median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert!(commands::median(&[]).is_nan());
}

#[test]
fn a_short_desk_run_reduces_the_total_loss() {
    let mut drops = Vec::new();
    for seed in 0..3 {
        let cfg = RunConfig {
            seed,
            iterations: 200,
            eval_every: 0,
            train_scene_count: 200,
            eval_scene_count: 8,
            ..RunConfig::desk()
        };
        let o = commands::train_in_memory(&cfg, &commands::corpora(&cfg).unwrap(), None, |_| {}, |_, _| Ok(())).unwrap();
        let mean = |s: &[hierground::core::train::LossReport]| s.iter().map(|r| r.total).sum::<f64>() / s.len() as f64;
        let (head, tail) = (mean(&o.losses[..20]), mean(&o.losses[180..]));
        drops.push(1.0 - tail / head);
    }
    let m = commands::median(&drops);
    assert!(m >= 0.2, "median relative drop {m}, per seed {drops:?}");
}
