//! `nrnf` — the pipeline entry point.
//!
//! Subcommands: gen-data, ingest, train, eval, ablate, sweep, report.
//! Every artifact-producing command writes into a named output directory
//! containing the resolved config snapshot; a snapshot alone reproduces a
//! run bit for bit. Exit codes: 0 success, 2 usage or config error, 1
//! runtime failure.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nrnf_core::ablate::{self, Suite};
use nrnf_core::config::{Precision, RunConfig};
use nrnf_core::eval::evaluate_split;
use nrnf_core::metrics::MetricsRecord;
use nrnf_core::model::{ModelConfig, NrnfModel};
use nrnf_core::pipeline::{self, Dataset};
use nrnf_core::records::{RawImpression, RawNews};
use nrnf_core::synth::{self, GroundTruth};
use nrnf_core::trainer::{effective_threshold, train, TrainOutcome};
use nrnf_tensor::{checkpoint, Scalar};

mod runs;
use runs::{ensure_out_dir, write_json_line, write_jsonl_file, write_tsv};

#[derive(Parser)]
#[command(name = "nrnf", version, about = "News recommendation with dwell-time negative feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
    Bench,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Base preset the config file and flags override.
    #[arg(long, value_enum, default_value = "bench")]
    preset: PresetArg,
    /// TOML run-config file; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads override.
    #[arg(long)]
    threads: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match self.preset {
            PresetArg::Paper => RunConfig::default(),
            PresetArg::Desk => RunConfig::desk(),
            PresetArg::Bench => RunConfig::bench(),
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| usage(format!("cannot read config {}", path.display())))?;
            cfg = toml::from_str(&text)
                .map_err(|e| anyhow!(usage(format!("{}: {e}", path.display()))))?;
        }
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
            cfg.data.seed = seed;
            cfg.gen.seed = seed;
        }
        if let Some(threads) = self.threads {
            cfg.train.threads = threads;
        }
        cfg.validate().map_err(|e| anyhow!(usage(e.to_string())))?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and session log with ground truth.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        news: Option<usize>,
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long)]
        clickbait_rate: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Tokenize news, split sessions, and build training samples.
    Ingest {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        news: PathBuf,
        #[arg(long)]
        impressions: PathBuf,
        #[arg(long)]
        title_len: Option<usize>,
        #[arg(long)]
        body_len: Option<usize>,
        #[arg(long)]
        pos_cap: Option<usize>,
        #[arg(long)]
        neg_cap: Option<usize>,
        #[arg(long)]
        threshold_seconds: Option<f64>,
        #[arg(long)]
        neg_ratio: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Train a model on an ingested dataset.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory produced by `ingest` (contains dataset.json).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        /// Checkpoint file; the run config is taken from the snapshot next
        /// to it unless --config points elsewhere.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitArg,
        /// Metrics record file to write (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate an ablation suite over repeated seeds.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        suite: SuiteArg,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Full train+eval at each dwell threshold.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated threshold seconds, e.g. "2,5,10,30,60".
        #[arg(long)]
        thresholds: String,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Tables from finished runs or raw logs.
    Report {
        #[arg(long, value_enum)]
        kind: ReportKind,
        /// experiments.jsonl from an ablate run (for --kind weights).
        #[arg(long)]
        experiment: Option<PathBuf>,
        /// Variant name inside the experiment file (defaults to the last).
        #[arg(long)]
        name: Option<String>,
        /// Raw files (for --kind nf-ratio / topics).
        #[arg(long)]
        news: Option<PathBuf>,
        #[arg(long)]
        impressions: Option<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        threshold_seconds: f64,
        #[arg(long, default_value_t = 10)]
        min_clicks: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Val,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Views,
    Attention,
    Negfeed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Weights,
    NfRatio,
    Topics,
}

/// Marks a message as a usage error (exit code 2).
fn usage(msg: String) -> String {
    format!("usage: {msg}")
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        let msg = format!("{e:#}");
        eprintln!("error: {}", msg.replace('\n', " "));
        let code = if msg.contains("usage:") { 2 } else { 1 };
        std::process::exit(code);
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { config, users, news, sessions, clickbait_rate, out, overwrite } => {
            let mut cfg = config.resolve()?;
            if let Some(v) = users {
                cfg.gen.users = v;
            }
            if let Some(v) = news {
                cfg.gen.news = v;
            }
            if let Some(v) = sessions {
                cfg.gen.sessions = v;
            }
            if let Some(v) = clickbait_rate {
                cfg.gen.clickbait_rate = v;
            }
            cfg.validate().map_err(|e| anyhow!(usage(e.to_string())))?;
            ensure_out_dir(&out, overwrite)?;
            runs::write_config_snapshot(&cfg, &out)?;
            let generated = synth::generate(&cfg.gen)?;
            synth::emit(&generated, &out)?;
            println!(
                "generated {} news, {} impressions into {}",
                generated.news.len(),
                generated.impressions.len(),
                out.display()
            );
            Ok(())
        }
        Command::Ingest {
            config,
            news,
            impressions,
            title_len,
            body_len,
            pos_cap,
            neg_cap,
            threshold_seconds,
            neg_ratio,
            out,
            overwrite,
        } => {
            let mut cfg = config.resolve()?;
            let d = &mut cfg.data;
            if let Some(v) = title_len {
                d.title_len = v;
            }
            if let Some(v) = body_len {
                d.body_len = v;
            }
            if let Some(v) = pos_cap {
                d.pos_cap = v;
            }
            if let Some(v) = neg_cap {
                d.neg_cap = v;
            }
            if let Some(v) = threshold_seconds {
                d.threshold_seconds = v;
            }
            if let Some(v) = neg_ratio {
                d.neg_ratio = v;
            }
            cfg.validate().map_err(|e| anyhow!(usage(e.to_string())))?;
            ensure_out_dir(&out, overwrite)?;
            runs::write_config_snapshot(&cfg, &out)?;
            let ds = pipeline::ingest_files(&news, &impressions, &cfg.data)?;
            pipeline::save_dataset(&ds, out.join("dataset.json"))?;
            serde_json::to_writer_pretty(
                std::fs::File::create(out.join("stats.json"))?,
                &ds.stats,
            )?;
            println!(
                "ingested {} news, {} train samples, {} val / {} test impressions into {}",
                ds.news.len(),
                ds.train.len(),
                ds.val.len(),
                ds.test.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train { config, data, out, overwrite } => {
            let cfg = config.resolve()?;
            let ds = load_dataset_dir(&data)?;
            ensure_out_dir(&out, overwrite)?;
            runs::write_config_snapshot(&cfg, &out)?;
            match cfg.train.precision {
                Precision::F32 => run_training::<f32>(&ds, &cfg, &out),
                Precision::F64 => run_training::<f64>(&ds, &cfg, &out),
            }
        }
        Command::Eval { checkpoint, config, data, split, out } => {
            if !checkpoint.exists() {
                bail!("checkpoint not found: {}", checkpoint.display());
            }
            let cfg_path = match config {
                Some(p) => p,
                None => infer_snapshot(&checkpoint)?,
            };
            let text = std::fs::read_to_string(&cfg_path)
                .with_context(|| format!("cannot read config {}", cfg_path.display()))?;
            let cfg: RunConfig =
                toml::from_str(&text).map_err(|e| anyhow!(usage(e.to_string())))?;
            let ds = load_dataset_dir(&data)?;
            let record = match cfg.train.precision {
                Precision::F32 => eval_checkpoint::<f32>(&cfg, &ds, &checkpoint, split)?,
                Precision::F64 => eval_checkpoint::<f64>(&cfg, &ds, &checkpoint, split)?,
            };
            let line = serde_json::to_string(&record)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, format!("{line}\n"))?;
                    println!("wrote {}", path.display());
                }
                None => println!("{line}"),
            }
            Ok(())
        }
        Command::Ablate { config, data, suite, seeds, out, overwrite } => {
            let cfg = config.resolve()?;
            let ds = load_dataset_dir(&data)?;
            ensure_out_dir(&out, overwrite)?;
            runs::write_config_snapshot(&cfg, &out)?;
            let suite = match suite {
                SuiteArg::Views => Suite::Views,
                SuiteArg::Attention => Suite::Attention,
                SuiteArg::Negfeed => Suite::Negfeed,
            };
            let seed_list = seed_list(&cfg, seeds);
            let reports = match cfg.train.precision {
                Precision::F32 => ablate::ablation_suite::<f32>(&ds, &cfg, suite, &seed_list)?,
                Precision::F64 => ablate::ablation_suite::<f64>(&ds, &cfg, suite, &seed_list)?,
            };
            write_jsonl_file(&reports, out.join("experiments.jsonl"))?;
            let mut rows = vec![vec![
                "variant".to_string(),
                "auc".into(),
                "auc_std".into(),
                "mrr".into(),
                "ndcg5".into(),
                "ndcg10".into(),
            ]];
            for r in &reports {
                rows.push(vec![
                    r.name.clone(),
                    format!("{:.6}", r.mean_auc()),
                    format!("{:.6}", r.std(|x| x.auc)),
                    format!("{:.6}", r.mean(|x| x.mrr)),
                    format!("{:.6}", r.mean(|x| x.ndcg5)),
                    format!("{:.6}", r.mean(|x| x.ndcg10)),
                ]);
            }
            write_tsv(&rows, out.join("summary.tsv"))?;
            for r in &reports {
                println!("{}: mean AUC {:.4} (±{:.4})", r.name, r.mean_auc(), r.std(|x| x.auc));
            }
            Ok(())
        }
        Command::Sweep { config, data, thresholds, seeds, out, overwrite } => {
            let cfg = config.resolve()?;
            let ds = load_dataset_dir(&data)?;
            let ts: Vec<f64> = thresholds
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| anyhow!(usage(format!("bad threshold {s}"))))
                })
                .collect::<anyhow::Result<_>>()?;
            ensure_out_dir(&out, overwrite)?;
            runs::write_config_snapshot(&cfg, &out)?;
            let seed_list = seed_list(&cfg, seeds);
            let rows = match cfg.train.precision {
                Precision::F32 => ablate::threshold_sweep::<f32>(&ds, &cfg, &ts, &seed_list)?,
                Precision::F64 => ablate::threshold_sweep::<f64>(&ds, &cfg, &ts, &seed_list)?,
            };
            write_jsonl_file(&rows, out.join("sweep.jsonl"))?;
            let mut table = vec![vec![
                "threshold".to_string(),
                "auc".into(),
                "auc_std".into(),
                "mrr".into(),
                "ndcg5".into(),
                "ndcg10".into(),
            ]];
            for r in &rows {
                table.push(vec![
                    format!("{}", r.threshold),
                    format!("{:.6}", r.auc),
                    format!("{:.6}", r.auc_std),
                    format!("{:.6}", r.mrr),
                    format!("{:.6}", r.ndcg5),
                    format!("{:.6}", r.ndcg10),
                ]);
            }
            write_tsv(&table, out.join("sweep.tsv"))?;
            println!("swept {} thresholds into {}", rows.len(), out.display());
            Ok(())
        }
        Command::Report {
            kind,
            experiment,
            name,
            news,
            impressions,
            ground_truth,
            threshold_seconds,
            min_clicks,
            out,
            overwrite,
        } => {
            if out.exists() && !overwrite {
                bail!(usage(format!("{} exists; pass --overwrite", out.display())));
            }
            match kind {
                ReportKind::Weights => {
                    let path = experiment
                        .ok_or_else(|| anyhow!(usage("--kind weights needs --experiment".into())))?;
                    let reports: Vec<ablate::ExperimentReport> = pipeline::read_jsonl(&path)?;
                    let chosen = match &name {
                        Some(n) => reports
                            .iter()
                            .find(|r| &r.name == n)
                            .ok_or_else(|| anyhow!("no variant named {n} in {}", path.display()))?,
                        None => reports
                            .last()
                            .ok_or_else(|| anyhow!("{} is empty", path.display()))?,
                    };
                    let report = ablate::weight_report(chosen);
                    write_json_line(&report, &out)?;
                    println!(
                        "w_p > 0 in {}/{} seeds, w_n < 0 in {}/{}",
                        report.w_p_positive,
                        report.rows.len(),
                        report.w_n_negative,
                        report.rows.len()
                    );
                }
                ReportKind::NfRatio | ReportKind::Topics => {
                    let news_path = news
                        .ok_or_else(|| anyhow!(usage("this report needs --news".into())))?;
                    let imp_path = impressions
                        .ok_or_else(|| anyhow!(usage("this report needs --impressions".into())))?;
                    let news: Vec<RawNews> = pipeline::read_jsonl(&news_path)?;
                    let imps: Vec<RawImpression> = pipeline::read_jsonl(&imp_path)?;
                    let truth: Option<Vec<GroundTruth>> = match ground_truth {
                        Some(p) => Some(pipeline::read_jsonl(&p)?),
                        None => None,
                    };
                    let report = ablate::nf_ratio_report(
                        &news,
                        &imps,
                        truth.as_deref(),
                        threshold_seconds,
                        min_clicks,
                    );
                    if matches!(kind, ReportKind::NfRatio) {
                        write_jsonl_file(&report.per_news, &out)?;
                        if let Some(cb) = &report.clickbait {
                            println!(
                                "clickbait mean NF {:.3} vs clean {:.3}; top decile {:.0}% clickbait",
                                cb.clickbait_mean_nf,
                                cb.clean_mean_nf,
                                cb.top_decile_clickbait_share * 100.0
                            );
                        }
                        println!("{} qualifying news", report.per_news.len());
                    } else {
                        write_jsonl_file(&report.per_topic, &out)?;
                        println!("{} topics", report.per_topic.len());
                    }
                }
            }
            Ok(())
        }
    }
}

fn seed_list(cfg: &RunConfig, override_count: Option<usize>) -> Vec<u64> {
    let count = override_count.unwrap_or(cfg.eval.r_seeds).max(1);
    (0..count as u64).map(|i| cfg.train.seed + i).collect()
}

fn load_dataset_dir(dir: &Path) -> anyhow::Result<Dataset> {
    let path = if dir.is_dir() { dir.join("dataset.json") } else { dir.to_path_buf() };
    pipeline::load_dataset(&path)
        .with_context(|| format!("loading dataset from {}", path.display()))
}

/// checkpoints/best.ckpt → ../config.toml
fn infer_snapshot(checkpoint: &Path) -> anyhow::Result<PathBuf> {
    let run_dir = checkpoint
        .parent()
        .and_then(|p| p.parent())
        .ok_or_else(|| anyhow!(usage("cannot infer run dir; pass --config".into())))?;
    let snapshot = run_dir.join("config.toml");
    if !snapshot.exists() {
        bail!(usage(format!("no config snapshot at {}; pass --config", snapshot.display())));
    }
    Ok(snapshot)
}

fn run_training<S: Scalar>(ds: &Dataset, cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let outcome: TrainOutcome<S> = train(ds, cfg)?;
    std::fs::create_dir_all(out.join("checkpoints"))?;
    std::fs::create_dir_all(out.join("logs"))?;
    std::fs::create_dir_all(out.join("reports"))?;
    checkpoint::save(&outcome.model.params, out.join("checkpoints").join("best.ckpt"))?;
    write_jsonl_file(&outcome.logs, out.join("logs").join("train_log.jsonl"))?;

    let threshold = effective_threshold(cfg);
    let test = evaluate_split(&outcome.model, ds, &ds.test, threshold, cfg.train.threads)?;
    write_json_line(&test, &out.join("reports").join("metrics.jsonl"))?;
    println!(
        "best epoch {} (val AUC {:.4}); test AUC {:.4} MRR {:.4} nDCG@5 {:.4} nDCG@10 {:.4}",
        outcome.best_epoch, outcome.best_val.auc, test.auc, test.mrr, test.ndcg5, test.ndcg10
    );
    Ok(())
}

fn eval_checkpoint<S: Scalar>(
    cfg: &RunConfig,
    ds: &Dataset,
    ckpt: &Path,
    split: SplitArg,
) -> anyhow::Result<MetricsRecord> {
    let mut model: NrnfModel<S> =
        NrnfModel::new(ModelConfig::from_run(cfg, ds.vocab.size()), cfg.train.seed);
    checkpoint::load_into(&mut model.params, ckpt)?;
    let impressions = match split {
        SplitArg::Val => &ds.val,
        SplitArg::Test => &ds.test,
    };
    let threshold = effective_threshold(cfg);
    Ok(evaluate_split(&model, ds, impressions, threshold, cfg.train.threads)?)
}
