//! On-disk formats.
//!
//! | file | layout |
//! |---|---|
//! | chains | JSON lines; header `{"schema":"hierground-chains/1","records":N}` then one chain per line |
//! | scenes | JSON lines; header `{"schema":"hierground-scenes/1","records":N}` then one scene per line |
//! | checkpoint | one JSON object with `schema`, config hash, iteration, parameters and optimiser moments |
//! | metrics | one JSON object, plus a `metric,name,value` CSV |
//! | angle histogram | CSV `bin_low,bin_high,count_pos,count_neg` |
//! | embeddings | CSV `caption,component,dim_0..dim_{D-1}` |
//! | vocabulary | one token per line |

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use hierground_core::disentangle::Vocab;
use hierground_core::grounder::{AngleHistogram, Metrics};
use hierground_core::synth::{validate_record, ChainRecord, Corpus, Scene};
use hierground_core::train::{Checkpoint, Embedded};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CHAINS_SCHEMA: &str = "hierground-chains/1";
pub const SCENES_SCHEMA: &str = "hierground-scenes/1";
pub const CHECKPOINT_SCHEMA: &str = "hierground-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema: String,
    pub records: usize,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("record serialises")
}

pub fn write_jsonl<T: Serialize>(path: &Path, schema: &str, records: &[T]) -> Result<()> {
    let mut out = json_line(&Header {
        schema: schema.into(),
        records: records.len(),
    });
    out.push('\n');
    for r in records {
        out.push_str(&json_line(r));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| CliError::parse(path, 1, "missing header line"))?
        .map_err(|e| CliError::io(path, e))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| CliError::parse(path, 1, e))?;
    if header.schema != schema {
        return Err(CliError::parse(
            path,
            1,
            format!("schema `{}`, expected `{schema}`", header.schema),
        ));
    }
    let mut out = Vec::with_capacity(header.records);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::parse(path, i + 2, e))?);
    }
    if out.len() != header.records {
        return Err(CliError::parse(
            path,
            1,
            format!("header announces {} records, found {}", header.records, out.len()),
        ));
    }
    Ok(out)
}

pub fn write_corpus(chains: &Path, scenes: &Path, corpus: &Corpus) -> Result<()> {
    write_jsonl(chains, CHAINS_SCHEMA, &corpus.chains)?;
    write_jsonl(scenes, SCENES_SCHEMA, &corpus.scenes)
}

/// Reads both files and checks every chain against its scene.
pub fn read_corpus(chains: &Path, scenes: &Path, min_tier3_words: usize) -> Result<Corpus> {
    let chain_records: Vec<ChainRecord> = read_jsonl(chains, CHAINS_SCHEMA)?;
    let scene_records: Vec<Scene> = read_jsonl(scenes, SCENES_SCHEMA)?;
    let by_id: BTreeMap<u64, &Scene> = scene_records.iter().map(|s| (s.id, s)).collect();
    for (i, c) in chain_records.iter().enumerate() {
        let scene = by_id
            .get(&c.scene_id)
            .ok_or_else(|| CliError::parse(chains, i + 2, format!("unknown scene {}", c.scene_id)))?;
        validate_record(scene, c, min_tier3_words).map_err(|e| CliError::parse(chains, i + 2, e))?;
    }
    Ok(Corpus {
        scenes: scene_records,
        chains: chain_records,
    })
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema: String,
    #[serde(flatten)]
    checkpoint: Checkpoint,
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let file = CheckpointFile {
        schema: CHECKPOINT_SCHEMA.into(),
        checkpoint: ckpt.clone(),
    };
    write_text(path, &serde_json::to_string(&file).expect("checkpoint serialises"))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| CliError::parse(path, 1, e))?;
    if file.schema != CHECKPOINT_SCHEMA {
        return Err(CliError::parse(
            path,
            1,
            format!("schema `{}`, expected `{CHECKPOINT_SCHEMA}`", file.schema),
        ));
    }
    for (name, p) in file.checkpoint.params.iter() {
        let expected: usize = p.value.shape().iter().product();
        if p.value.len() != expected {
            return Err(CliError::parse(
                path,
                1,
                format!("parameter `{name}` has {} values for shape {:?}", p.value.len(), p.value.shape()),
            ));
        }
    }
    Ok(file.checkpoint)
}

pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    write_text(path, &vocab.to_text())
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Vocab::from_text(&text))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serialises");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, 1, e))
}

/// One row of the flat metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub name: String,
    pub value: f64,
}

/// Flattens metrics and angle means into `(metric, name, value)` rows.
pub fn metric_rows(m: &Metrics, angles: Option<&AngleHistogram>) -> Vec<MetricRow> {
    let row = |metric: &str, name: &str, value: f64| MetricRow {
        metric: metric.into(),
        name: name.into(),
        value,
    };
    let mut rows = vec![
        row("ap", "overall", m.ap),
        row("ap", "category", m.ap_category),
        row("ap", "description", m.ap_description),
    ];
    for t in &m.tiers {
        let name = format!("tier{}", t.tier);
        rows.push(row("ap", &name, t.ap));
        rows.push(row("precision", &name, t.precision));
        rows.push(row("recall", &name, t.recall));
        rows.push(row("queries", &name, t.queries as f64));
    }
    if let Some(h) = angles {
        rows.push(row("angle_mean", "positive", h.mean_pos));
        rows.push(row("angle_mean", "negative", h.mean_neg));
        rows.push(row("angle_gap", "negative_minus_positive", h.gap()));
    }
    rows
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_histogram_csv(path: &Path, h: &AngleHistogram) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["bin_low", "bin_high", "count_pos", "count_neg"])
        .map_err(|e| csv_err(path, e))?;
    for b in &h.bins {
        w.write_record([
            b.low.to_string(),
            b.high.to_string(),
            b.count_pos.to_string(),
            b.count_neg.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Rows `caption, component, dim_0..`: the embedding `E` and then each
/// pooled component, per caption.
pub fn embedding_rows(captions: &[String], e: &Embedded) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (i, c) in captions.iter().enumerate() {
        let mut push = |label: &str, values: &[f64]| {
            let mut row = vec![c.clone(), label.to_string()];
            row.extend(values.iter().map(f64::to_string));
            rows.push(row);
        };
        push("E", e.embeddings.row(i));
        for (comp, t) in &e.components {
            push(comp.label(), t.row(i));
        }
    }
    rows
}

pub fn write_embeddings_csv(path: &Path, dim: usize, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["caption".to_string(), "component".to_string()];
    header.extend((0..dim).map(|i| format!("dim_{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
