//! Experiment harness: seed-repeated variant runs, the threshold sweep,
//! and the negative-feedback-ratio reports.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use nrnf_tensor::Scalar;

use crate::config::{NewsMode, RunConfig};
use crate::eval::evaluate_split;
use crate::pipeline::Dataset;
use crate::records::{RawImpression, RawNews};
use crate::synth::GroundTruth;
use crate::trainer::{effective_threshold, train};
use crate::{CoreError, Result};

/// Final test metrics and learned score weights of one seeded run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub w_p: f64,
    pub w_n: f64,
}

/// Mean and spread over independent seeds for one experiment variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub runs: Vec<RunMetrics>,
}

impl ExperimentReport {
    pub fn mean(&self, f: impl Fn(&RunMetrics) -> f64) -> f64 {
        self.runs.iter().map(&f).sum::<f64>() / self.runs.len() as f64
    }

    /// Sample standard deviation; 0 for fewer than two runs.
    pub fn std(&self, f: impl Fn(&RunMetrics) -> f64) -> f64 {
        if self.runs.len() < 2 {
            return 0.0;
        }
        let mean = self.mean(&f);
        let var = self.runs.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>()
            / (self.runs.len() - 1) as f64;
        var.sqrt()
    }

    pub fn mean_auc(&self) -> f64 {
        self.mean(|r| r.auc)
    }
}

/// Trains one variant over the given seeds and evaluates on the test split.
pub fn run_experiment<S: Scalar>(
    ds: &Dataset,
    base: &RunConfig,
    name: &str,
    seeds: &[u64],
    mutate: impl Fn(&mut RunConfig),
) -> Result<ExperimentReport> {
    if seeds.is_empty() {
        return Err(CoreError::Config("experiment needs at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cfg = base.clone();
        mutate(&mut cfg);
        cfg.train.seed = seed;
        let outcome = train::<S>(ds, &cfg)?;
        let threshold = effective_threshold(&cfg);
        let test = evaluate_split(&outcome.model, ds, &ds.test, threshold, cfg.train.threads)?;
        runs.push(RunMetrics {
            seed,
            auc: test.auc,
            mrr: test.mrr,
            ndcg5: test.ndcg5,
            ndcg10: test.ndcg10,
            w_p: outcome.model.w_p(),
            w_n: outcome.model.w_n(),
        });
    }
    Ok(ExperimentReport { name: name.to_string(), runs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Views,
    Attention,
    Negfeed,
}

/// Runs one ablation suite. Any failing variant aborts with the partial
/// report attached to the error message.
pub fn ablation_suite<S: Scalar>(
    ds: &Dataset,
    base: &RunConfig,
    suite: Suite,
    seeds: &[u64],
) -> Result<Vec<ExperimentReport>> {
    let variants: Vec<(&str, Box<dyn Fn(&mut RunConfig)>)> = match suite {
        Suite::Views => vec![
            ("title-only", Box::new(|c: &mut RunConfig| c.model.news_mode = NewsMode::TitleOnly)),
            ("body-only", Box::new(|c: &mut RunConfig| c.model.news_mode = NewsMode::BodyOnly)),
            ("title-body", Box::new(|_| {})),
        ],
        Suite::Attention => vec![
            ("no-word-attention", Box::new(|c: &mut RunConfig| c.model.word_attention = false)),
            ("no-news-attention", Box::new(|c: &mut RunConfig| c.model.news_attention = false)),
            ("no-interactive", Box::new(|c: &mut RunConfig| c.model.interactive = false)),
            ("all-attention", Box::new(|_| {})),
        ],
        Suite::Negfeed => vec![
            ("basic", Box::new(|c: &mut RunConfig| c.model.negative_view = false)),
            ("negative-feedback", Box::new(|_| {})),
        ],
    };
    let mut reports = Vec::new();
    for (name, mutate) in variants {
        match run_experiment::<S>(ds, base, name, seeds, mutate) {
            Ok(r) => reports.push(r),
            Err(e) => {
                let done: Vec<&str> = reports.iter().map(|r| r.name.as_str()).collect();
                return Err(CoreError::Data(format!(
                    "variant {name} failed after {done:?}: {e}"
                )));
            }
        }
    }
    Ok(reports)
}

/// One row of the threshold sweep: full train+eval at each T.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub auc_std: f64,
}

pub fn threshold_sweep<S: Scalar>(
    ds: &Dataset,
    base: &RunConfig,
    thresholds: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if thresholds.iter().any(|&t| t < 0.0) {
        return Err(CoreError::Config("thresholds must be nonnegative".into()));
    }
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let report = run_experiment::<S>(ds, base, &format!("T={t}"), seeds, |c| {
            c.data.threshold_seconds = t;
        })?;
        rows.push(SweepRow {
            threshold: t,
            auc: report.mean_auc(),
            mrr: report.mean(|r| r.mrr),
            ndcg5: report.mean(|r| r.ndcg5),
            ndcg10: report.mean(|r| r.ndcg10),
            auc_std: report.std(|r| r.auc),
        });
    }
    Ok(rows)
}

/// Learned w_p/w_n per seed with a sign summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightReport {
    pub rows: Vec<WeightRow>,
    pub w_p_positive: usize,
    pub w_n_negative: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightRow {
    pub seed: u64,
    pub w_p: f64,
    pub w_n: f64,
}

pub fn weight_report(report: &ExperimentReport) -> WeightReport {
    let rows: Vec<WeightRow> = report
        .runs
        .iter()
        .map(|r| WeightRow { seed: r.seed, w_p: r.w_p, w_n: r.w_n })
        .collect();
    WeightReport {
        w_p_positive: rows.iter().filter(|r| r.w_p > 0.0).count(),
        w_n_negative: rows.iter().filter(|r| r.w_n < 0.0).count(),
        rows,
    }
}

/// Per-news share of clicks that were negative feedback (dwell below T).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewsNf {
    pub news_id: String,
    pub topic: String,
    pub clicks: usize,
    pub nf_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicNf {
    pub topic: String,
    pub clicks: usize,
    pub nf_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClickbaitComparison {
    pub clickbait_mean_nf: f64,
    pub clean_mean_nf: f64,
    /// Share of clickbait news in the top NF-ratio decile.
    pub top_decile_clickbait_share: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NfReport {
    /// News with at least `min_clicks` clicks, sorted by NF ratio
    /// descending (ties by id for a stable report).
    pub per_news: Vec<NewsNf>,
    pub per_topic: Vec<TopicNf>,
    pub min_clicks: usize,
    pub threshold: f64,
    pub clickbait: Option<ClickbaitComparison>,
}

/// Computes NF ratios straight from the raw impression log. News with
/// fewer than `min_clicks` clicks are left out of the per-news table;
/// per-topic aggregates use every click.
pub fn nf_ratio_report(
    news: &[RawNews],
    impressions: &[RawImpression],
    truth: Option<&[GroundTruth]>,
    threshold: f64,
    min_clicks: usize,
) -> NfReport {
    let topic_of: HashMap<&str, &str> =
        news.iter().map(|n| (n.news_id.as_str(), n.topic.as_str())).collect();
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for imp in impressions {
        for (id, &dwell) in &imp.dwell {
            let e = counts.entry(id.as_str()).or_default();
            e.0 += 1;
            if dwell < threshold {
                e.1 += 1;
            }
        }
    }

    let mut per_news: Vec<NewsNf> = counts
        .iter()
        .filter(|(_, (clicks, _))| *clicks >= min_clicks)
        .map(|(id, (clicks, short))| NewsNf {
            news_id: id.to_string(),
            topic: topic_of.get(id).copied().unwrap_or("unknown").to_string(),
            clicks: *clicks,
            nf_ratio: *short as f64 / *clicks as f64,
        })
        .collect();
    per_news.sort_by(|a, b| {
        b.nf_ratio
            .partial_cmp(&a.nf_ratio)
            .unwrap()
            .then_with(|| a.news_id.cmp(&b.news_id))
    });

    let mut by_topic: HashMap<&str, (usize, usize)> = HashMap::new();
    for (id, (clicks, short)) in &counts {
        let topic = topic_of.get(id).copied().unwrap_or("unknown");
        let e = by_topic.entry(topic).or_default();
        e.0 += clicks;
        e.1 += short;
    }
    let mut per_topic: Vec<TopicNf> = by_topic
        .into_iter()
        .map(|(topic, (clicks, short))| TopicNf {
            topic: topic.to_string(),
            clicks,
            nf_ratio: short as f64 / clicks as f64,
        })
        .collect();
    per_topic.sort_by(|a, b| a.topic.cmp(&b.topic));

    let clickbait = truth.map(|t| {
        let is_cb: HashMap<&str, bool> =
            t.iter().map(|g| (g.news_id.as_str(), g.is_clickbait)).collect();
        let (mut cb_sum, mut cb_n, mut ok_sum, mut ok_n) = (0.0, 0usize, 0.0, 0usize);
        for row in &per_news {
            if is_cb.get(row.news_id.as_str()).copied().unwrap_or(false) {
                cb_sum += row.nf_ratio;
                cb_n += 1;
            } else {
                ok_sum += row.nf_ratio;
                ok_n += 1;
            }
        }
        let decile = (per_news.len() / 10).max(1);
        let top_cb = per_news
            .iter()
            .take(decile)
            .filter(|r| is_cb.get(r.news_id.as_str()).copied().unwrap_or(false))
            .count();
        ClickbaitComparison {
            clickbait_mean_nf: if cb_n > 0 { cb_sum / cb_n as f64 } else { 0.0 },
            clean_mean_nf: if ok_n > 0 { ok_sum / ok_n as f64 } else { 0.0 },
            top_decile_clickbait_share: top_cb as f64 / decile as f64,
        }
    });

    NfReport { per_news, per_topic, min_clicks, threshold, clickbait }
}
