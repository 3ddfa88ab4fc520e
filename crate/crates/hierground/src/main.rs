use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hierground::commands;
use hierground::config::RunConfig;
use hierground::core::gradsuite::SuiteConfig;
use hierground::core::train::LossMode;
use hierground::error::{CliError, Result};

#[derive(Parser)]
#[command(name = "hierground", version, about = "Hierarchical caption grounding on synthetic scenes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; full-scale defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Comma-separated `key=value` overrides of configuration keys.
    #[arg(long = "set", global = true)]
    set: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train and evaluation corpora.
    GenData,
    /// Train a model; `--checkpoint` resumes from a saved state.
    Train {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        mode: Option<LossMode>,
    },
    /// Evaluate a checkpoint on the held-out corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mode: Option<LossMode>,
    },
    /// Train every configured variant on every configured seed.
    Ablate,
    /// Write caption embeddings and their components as CSV.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        /// File with one caption per line.
        #[arg(long)]
        captions: Option<PathBuf>,
        /// Captions given inline.
        text: Vec<String>,
    },
    /// Compare analytic and numerical gradients of every operation.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Negate one operation's analytic gradient.
        #[arg(long)]
        flip: Option<String>,
    },
}

fn load_config(c: &Common, mode: Option<LossMode>) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &c.set {
        cfg = cfg.with_overrides(s)?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let out = &cli.common.out;
    match cli.command {
        Command::GenData => {
            let cfg = load_config(&cli.common, None)?;
            let s = commands::gen_data(&cfg, out)?;
            println!(
                "train: {} chains over {} scenes; eval: {} chains over {} scenes; written to {}",
                s.train.chains,
                s.train.scenes,
                s.eval.chains,
                s.eval.scenes,
                out.display()
            );
        }
        Command::Train { checkpoint, mode } => {
            let cfg = load_config(&cli.common, mode)?;
            let every = (cfg.iterations / 20).max(1);
            let o = commands::train(&cfg, out, checkpoint.as_deref(), |r| {
                if (r.step + 1) % every == 0 {
                    println!(
                        "step {:>6} total {:.4} class {:.4} bbox {:.4} giou {:.4} embedding {:.4}",
                        r.step + 1,
                        r.total,
                        r.class,
                        r.bbox,
                        r.giou,
                        r.embedding
                    );
                }
            })?;
            if let Some(ev) = o.evaluations.last() {
                println!(
                    "ap {:.4} (category {:.4}, description {:.4}); angle gap {:.4}",
                    ev.metrics.ap,
                    ev.metrics.ap_category,
                    ev.metrics.ap_description,
                    ev.angles.gap()
                );
            }
            println!("checkpoint: {}", out.join(commands::CHECKPOINT_FILE).display());
        }
        Command::Eval { checkpoint, mode } => {
            let cfg = load_config(&cli.common, mode)?;
            let ev = commands::eval(&cfg, &checkpoint, out)?;
            println!(
                "ap {:.4} (category {:.4}, description {:.4})",
                ev.metrics.ap, ev.metrics.ap_category, ev.metrics.ap_description
            );
            for t in &ev.metrics.tiers {
                println!(
                    "tier {} ap {:.4} precision {:.4} recall {:.4} ({} queries)",
                    t.tier, t.ap, t.precision, t.recall, t.queries
                );
            }
            println!(
                "angles: positive {:.4}, negative {:.4}",
                ev.angles.mean_pos, ev.angles.mean_neg
            );
        }
        Command::Ablate => {
            let cfg = load_config(&cli.common, None)?;
            let t = commands::ablate(&cfg, out, |r| {
                println!("seed {} {:<28} ap {:.4} ({:.1}s)", r.seed, r.variant, r.ap, r.seconds)
            })?;
            println!("{:<4} {:<28} {:>10}  per seed", "rank", "variant", "median_ap");
            for s in &t.summary {
                let seeds: Vec<String> = s.seed_aps.iter().map(|a| format!("{a:.4}")).collect();
                println!("{:<4} {:<28} {:>10.4}  {}", s.rank, s.variant, s.median_ap, seeds.join(" "));
            }
        }
        Command::ExportEmbeddings {
            checkpoint,
            captions,
            text,
        } => {
            let cfg = load_config(&cli.common, None)?;
            let mut all = text;
            if let Some(p) = captions {
                let body = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
                all.extend(body.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from));
            }
            let n = commands::export_embeddings(&cfg, &checkpoint, &all, out)?;
            println!("{n} rows written to {}", out.join("embeddings.csv").display());
        }
        Command::GradCheck { points, flip } => {
            let suite = SuiteConfig {
                points,
                seed: cli.common.seed.unwrap_or(0),
                flip,
                ..SuiteConfig::default()
            };
            let report = commands::grad_check(&suite, Some(out))?;
            print!("{}", commands::format_suite(&report));
            if !report.passed() {
                let names: Vec<&str> = report.failures().map(|o| o.op.as_str()).collect();
                return Err(CliError::CheckFailed(format!("gradient mismatch in {}", names.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
