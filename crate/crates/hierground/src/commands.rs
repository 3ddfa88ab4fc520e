//! The subcommands, as library functions that read and write the run
//! directory.
//!
//! | command | writes |
//! |---|---|
//! | [`gen_data`] | `train.chains.jsonl`, `train.scenes.jsonl`, `eval.chains.jsonl`, `eval.scenes.jsonl`, `stats.json`, `vocab.txt` |
//! | [`train`] | `config.toml`, `losses.jsonl`, `evals.jsonl`, `checkpoint.json` |
//! | [`eval`] | `metrics.json`, `metrics.csv`, `angles.csv` |
//! | [`ablate`] | `ablation.json`, `ablation.csv`, `ablation_summary.csv` |
//! | [`export_embeddings`] | `embeddings.csv` |
//! | [`grad_check`] | `gradients.csv` |

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hierground_core::gradsuite::{run_suite, SuiteConfig, SuiteReport};
use hierground_core::grounder::{evaluate, AngleHistogram, EvalItem, Metrics};
use hierground_core::rng;
use hierground_core::synth::{corpus_stats, generate_corpus, Corpus, CorpusStats};
use hierground_core::train::{default_vocab, eval_items, Checkpoint, LossReport, Model, Trainer};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats;

const TRAIN_CORPUS_STREAM: u64 = 0x7a1;
const EVAL_CORPUS_STREAM: u64 = 0xe7a1;
const EVAL_PROPOSAL_STREAM: u64 = 0xe7a2;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Train and evaluation corpora for one run.
#[derive(Debug, Clone)]
pub struct Corpora {
    pub train: Corpus,
    pub eval: Corpus,
}

fn load_or_generate(
    cfg: &RunConfig,
    chains: &Option<PathBuf>,
    scenes: &Option<PathBuf>,
    count: usize,
    stream: u64,
    which: &str,
) -> Result<Corpus> {
    match (chains, scenes) {
        (Some(c), Some(s)) => formats::read_corpus(c, s, cfg.min_tier3_words),
        (None, None) => Ok(generate_corpus(&cfg.corpus_config(count), rng::derive(cfg.seed, stream))?),
        _ => Err(CliError::field(
            &format!("{which}_chains_path"),
            "chains and scenes paths must be given together",
        )),
    }
}

/// Reads the corpus files named in `cfg`, or generates them from the seed.
pub fn corpora(cfg: &RunConfig) -> Result<Corpora> {
    Ok(Corpora {
        train: load_or_generate(
            cfg,
            &cfg.train_chains_path,
            &cfg.train_scenes_path,
            cfg.train_scene_count,
            TRAIN_CORPUS_STREAM,
            "train",
        )?,
        eval: load_or_generate(
            cfg,
            &cfg.eval_chains_path,
            &cfg.eval_scenes_path,
            cfg.eval_scene_count,
            EVAL_CORPUS_STREAM,
            "eval",
        )?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataStats {
    pub train: CorpusStats,
    pub eval: CorpusStats,
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<DataStats> {
    cfg.validate()?;
    let c = corpora(cfg)?;
    formats::write_corpus(&out.join("train.chains.jsonl"), &out.join("train.scenes.jsonl"), &c.train)?;
    formats::write_corpus(&out.join("eval.chains.jsonl"), &out.join("eval.scenes.jsonl"), &c.eval)?;
    let stats = DataStats {
        train: corpus_stats(&c.train),
        eval: corpus_stats(&c.eval),
    };
    formats::write_json(&out.join("stats.json"), &stats)?;
    formats::write_vocab(&out.join("vocab.txt"), &default_vocab())?;
    Ok(stats)
}

/// Evaluation items for the held-out corpus; proposals depend only on the
/// frozen vision parameters and the seed.
pub fn evaluation_items(cfg: &RunConfig, eval: &Corpus, model: &Model) -> Result<Vec<EvalItem>> {
    let seed = rng::derive(cfg.seed, EVAL_PROPOSAL_STREAM);
    Ok(eval_items(eval, model, &cfg.train_config(), seed)?)
}

/// Metrics and the angle histogram of `model` on `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub iteration: usize,
    pub metrics: Metrics,
    pub angles: AngleHistogram,
}

pub fn evaluate_model(cfg: &RunConfig, model: &mut Model, items: &[EvalItem], eval: &Corpus, iteration: usize) -> Result<Evaluation> {
    let metrics = evaluate(model, items, &cfg.eval_config())?;
    let angles = model.angle_histogram(&eval.chains, cfg.reference, cfg.angle_bins)?;
    Ok(Evaluation {
        iteration,
        metrics,
        angles,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub losses: Vec<LossReport>,
    pub evaluations: Vec<Evaluation>,
    pub checkpoint: Checkpoint,
    pub model: Model,
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let line = serde_json::to_string(value).expect("record serialises");
    writeln!(f, "{line}").map_err(|e| CliError::io(path, e))
}

/// Trains on in-memory corpora without touching the disk. With
/// `eval_every > 0` the held-out set is evaluated on that cadence and after
/// the last step.
pub fn train_in_memory(
    cfg: &RunConfig,
    data: &Corpora,
    resume: Option<Checkpoint>,
    mut on_step: impl FnMut(&LossReport),
    mut on_eval: impl FnMut(&Evaluation, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let tc = cfg.train_config();
    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(tc, &data.train, ckpt)?,
        None => Trainer::new(tc, &data.train)?,
    };
    let items = if cfg.eval_every > 0 {
        evaluation_items(cfg, &data.eval, &trainer.model)?
    } else {
        Vec::new()
    };
    let mut losses = Vec::new();
    let mut evaluations = Vec::new();
    while trainer.step < tc.iterations {
        let r = trainer.step()?;
        on_step(&r);
        losses.push(r);
        let done = trainer.step == tc.iterations;
        if cfg.eval_every > 0 && (trainer.step % cfg.eval_every == 0 || done) {
            let ev = evaluate_model(cfg, &mut trainer.model, &items, &data.eval, trainer.step)?;
            on_eval(&ev, &trainer.checkpoint())?;
            evaluations.push(ev);
        }
    }
    Ok(TrainOutcome {
        losses,
        evaluations,
        checkpoint: trainer.checkpoint(),
        model: trainer.model,
    })
}

/// Trains, appending per-step losses to `losses.jsonl` and evaluations to
/// `evals.jsonl`; the checkpoint is rewritten at every evaluation and at
/// the end.
pub fn train(cfg: &RunConfig, out: &Path, resume: Option<&Path>, mut on_step: impl FnMut(&LossReport)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = corpora(cfg)?;
    let ckpt = resume.map(formats::read_checkpoint).transpose()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()).map_err(|e| CliError::io(out, e))?;
    let losses_path = out.join("losses.jsonl");
    let evals_path = out.join("evals.jsonl");
    let ckpt_path = out.join(CHECKPOINT_FILE);
    if resume.is_none() {
        for p in [&losses_path, &evals_path] {
            if p.exists() {
                std::fs::remove_file(p).map_err(|e| CliError::io(p, e))?;
            }
        }
    }
    let mut write_err = None;
    let outcome = train_in_memory(
        cfg,
        &data,
        ckpt,
        |r| {
            if write_err.is_none() {
                write_err = append_line(&losses_path, r).err();
            }
            on_step(r);
        },
        |ev, ck| {
            append_line(&evals_path, ev)?;
            formats::write_checkpoint(&ckpt_path, ck)
        },
    )?;
    if let Some(e) = write_err {
        return Err(e);
    }
    formats::write_checkpoint(&ckpt_path, &outcome.checkpoint)?;
    Ok(outcome)
}

/// Rebuilds the model a checkpoint was written from; the configuration
/// must match the one used for training.
pub fn model_from_checkpoint(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<Model> {
    let tc = cfg.train_config();
    if ckpt.config_hash != tc.fingerprint() {
        return Err(CliError::Validation(
            "incompatible checkpoint: configuration differs from the one that wrote it".into(),
        ));
    }
    Ok(Model::init(tc.text, tc.tau, tc.seed)?.with_params(ckpt.params.clone())?)
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<Evaluation> {
    cfg.validate()?;
    let ckpt = formats::read_checkpoint(checkpoint)?;
    let mut model = model_from_checkpoint(cfg, &ckpt)?;
    let data = corpora(cfg)?;
    let items = evaluation_items(cfg, &data.eval, &model)?;
    let ev = evaluate_model(cfg, &mut model, &items, &data.eval, ckpt.iteration)?;
    formats::write_json(&out.join("metrics.json"), &ev)?;
    formats::write_metrics_csv(&out.join("metrics.csv"), &formats::metric_rows(&ev.metrics, Some(&ev.angles)))?;
    formats::write_histogram_csv(&out.join("angles.csv"), &ev.angles)?;
    Ok(ev)
}

/// One trained variant on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub variant: String,
    pub seed: u64,
    pub ap: f64,
    pub ap_category: f64,
    pub ap_description: f64,
    pub angle_pos: f64,
    pub angle_neg: f64,
    pub seconds: f64,
}

/// Per-variant medians over seeds, ranked by median AP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub rank: usize,
    pub variant: String,
    pub median_ap: f64,
    pub median_ap_category: f64,
    pub median_ap_description: f64,
    pub seed_aps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub runs: Vec<AblationRun>,
    pub summary: Vec<AblationSummary>,
}

impl AblationTable {
    pub fn get(&self, variant: &str) -> Option<&AblationSummary> {
        self.summary.iter().find(|s| s.variant == variant)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

fn summarise(variants: &[String], runs: &[AblationRun]) -> Vec<AblationSummary> {
    let mut rows: Vec<AblationSummary> = variants
        .iter()
        .map(|v| {
            let mine: Vec<&AblationRun> = runs.iter().filter(|r| &r.variant == v).collect();
            let pick = |f: fn(&AblationRun) -> f64| median(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            AblationSummary {
                rank: 0,
                variant: v.clone(),
                median_ap: pick(|r| r.ap),
                median_ap_category: pick(|r| r.ap_category),
                median_ap_description: pick(|r| r.ap_description),
                seed_aps: mine.iter().map(|r| r.ap).collect(),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.median_ap.total_cmp(&a.median_ap));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    rows
}

/// Trains and evaluates every variant on every seed in memory. Variants
/// that leave the generator untouched share the seed's corpora.
pub fn ablate_in_memory(cfg: &RunConfig, mut progress: impl FnMut(&AblationRun)) -> Result<AblationTable> {
    cfg.validate()?;
    let mut runs = Vec::new();
    for &seed in &cfg.ablate_seeds {
        let base = RunConfig { seed, ..cfg.clone() };
        let shared = corpora(&base)?;
        for variant in &cfg.ablate_variants {
            let mut vcfg = base.with_overrides(variant)?;
            vcfg.eval_every = 0;
            let same_data = vcfg.corpus_config(1) == base.corpus_config(1)
                && vcfg.train_scene_count == base.train_scene_count
                && vcfg.eval_scene_count == base.eval_scene_count;
            let own;
            let data = if same_data {
                &shared
            } else {
                own = corpora(&vcfg)?;
                &own
            };
            let start = Instant::now();
            let mut outcome = train_in_memory(&vcfg, data, None, |_| {}, |_, _| Ok(()))?;
            let items = evaluation_items(&vcfg, &data.eval, &outcome.model)?;
            let ev = evaluate_model(&vcfg, &mut outcome.model, &items, &data.eval, vcfg.iterations)?;
            let run = AblationRun {
                variant: variant.clone(),
                seed,
                ap: ev.metrics.ap,
                ap_category: ev.metrics.ap_category,
                ap_description: ev.metrics.ap_description,
                angle_pos: ev.angles.mean_pos,
                angle_neg: ev.angles.mean_neg,
                seconds: start.elapsed().as_secs_f64(),
            };
            progress(&run);
            runs.push(run);
        }
    }
    let summary = summarise(&cfg.ablate_variants, &runs);
    Ok(AblationTable { runs, summary })
}

pub fn ablate(cfg: &RunConfig, out: &Path, progress: impl FnMut(&AblationRun)) -> Result<AblationTable> {
    let table = ablate_in_memory(cfg, progress)?;
    formats::write_json(&out.join("ablation.json"), &table)?;
    write_csv(&out.join("ablation.csv"), &table.runs)?;
    let flat: Vec<_> = table
        .summary
        .iter()
        .map(|s| {
            (
                s.rank,
                s.variant.clone(),
                s.median_ap,
                s.median_ap_category,
                s.median_ap_description,
                s.seed_aps.iter().map(|a| format!("{a:.6}")).collect::<Vec<_>>().join(" "),
            )
        })
        .collect();
    let mut w = csv::Writer::from_path(out.join("ablation_summary.csv")).map_err(|e| csv_err(out, e))?;
    w.write_record(["rank", "variant", "median_ap", "median_ap_category", "median_ap_description", "seed_aps"])
        .map_err(|e| csv_err(out, e))?;
    for r in flat {
        w.serialize(r).map_err(|e| csv_err(out, e))?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;
    Ok(table)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes the embedding and pooled components of each caption; returns the
/// number of rows.
pub fn export_embeddings(cfg: &RunConfig, checkpoint: &Path, captions: &[String], out: &Path) -> Result<usize> {
    cfg.validate()?;
    if captions.is_empty() {
        return Err(CliError::Validation("no captions to embed".into()));
    }
    let ckpt = formats::read_checkpoint(checkpoint)?;
    let model = model_from_checkpoint(cfg, &ckpt)?;
    let e = model.embed(captions)?;
    let rows = formats::embedding_rows(captions, &e);
    formats::write_embeddings_csv(&out.join("embeddings.csv"), cfg.dim, &rows)?;
    Ok(rows.len())
}

/// Runs the gradient suite and writes one CSV row per operation; a failing
/// operation is reported as [`CliError::CheckFailed`] after the file is
/// written.
pub fn grad_check(suite: &SuiteConfig, out: Option<&Path>) -> Result<SuiteReport> {
    let report = run_suite(suite)?;
    if let Some(out) = out {
        write_csv(&out.join("gradients.csv"), &report.ops)?;
    }
    Ok(report)
}

/// One line per operation, for the terminal.
pub fn format_suite(report: &SuiteReport) -> String {
    let mut s = format!(
        "{:<12} {:<32} {:>7} {:>8} {:>12} {:>10}  result\n",
        "module", "op", "checked", "excluded", "max_rel_err", "tolerance"
    );
    for op in &report.ops {
        s.push_str(&format!(
            "{:<12} {:<32} {:>7} {:>8} {:>12.3e} {:>10.1e}  {}\n",
            op.module,
            op.op,
            op.checked,
            op.excluded,
            op.max_rel_error,
            op.tolerance,
            if op.passed() { "ok" } else { "FAIL" }
        ));
    }
    s
}
