//! Synthetic corpus and session generator with planted ground truth.
//!
//! Users carry topic preferences. Titles drive most of the click propensity,
//! bodies a smaller share; dwell time depends on the body topic alone. A
//! clickbait article pairs an attractive title topic with a different body
//! topic, so it draws clicks that end in short dwells — exactly the signal
//! the negative-feedback model is built to exploit, and measurably absent
//! from the basic variant.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use nrnf_tensor::rng::{self, stage};

use crate::pipeline::write_jsonl;
use crate::records::{RawImpression, RawNews};
use crate::{CoreError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub users: usize,
    pub news: usize,
    pub sessions: usize,
    pub displayed_per_impression: usize,
    pub topics: usize,
    /// Distinct tokens per topic and in the shared common pool.
    pub topic_vocab: usize,
    pub common_vocab: usize,
    pub clickbait_rate: f64,
    /// Log-normal dwell parameters (median seconds, sigma of the log).
    pub long_dwell_median_secs: f64,
    pub long_dwell_sigma: f64,
    pub short_dwell_median_secs: f64,
    pub short_dwell_sigma: f64,
    pub click_temperature: f64,
    /// Weight of the body-topic affinity in click propensity; the title
    /// topic carries the rest.
    pub body_click_weight: f64,
    /// Probability that an impression gets a second click.
    pub extra_click_rate: f64,
    pub title_tokens_min: usize,
    pub title_tokens_max: usize,
    pub body_tokens_min: usize,
    pub body_tokens_max: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            users: 1000,
            news: 5000,
            sessions: 20_000,
            displayed_per_impression: 10,
            topics: 10,
            topic_vocab: 120,
            common_vocab: 300,
            clickbait_rate: 0.3,
            long_dwell_median_secs: 120.0,
            long_dwell_sigma: 0.6,
            // ~90% of short draws fall below 10 s: sigma = ln(10/4)/Φ⁻¹(0.9)
            short_dwell_median_secs: 4.0,
            short_dwell_sigma: 0.715,
            click_temperature: 0.2,
            body_click_weight: 0.45,
            extra_click_rate: 0.05,
            title_tokens_min: 8,
            title_tokens_max: 12,
            body_tokens_min: 80,
            body_tokens_max: 120,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.clickbait_rate) {
            return Err(CoreError::Config(format!(
                "clickbait_rate {} outside [0,1]",
                self.clickbait_rate
            )));
        }
        for (name, v) in [
            ("users", self.users),
            ("news", self.news),
            ("sessions", self.sessions),
            ("displayed_per_impression", self.displayed_per_impression),
            ("topics", self.topics),
        ] {
            if v == 0 {
                return Err(CoreError::Config(format!("{name} must be positive")));
            }
        }
        if self.topics < 2 {
            return Err(CoreError::Config("need at least 2 topics".into()));
        }
        if self.displayed_per_impression > self.news {
            return Err(CoreError::Config(
                "displayed_per_impression exceeds the news pool".into(),
            ));
        }
        if self.click_temperature <= 0.0 {
            return Err(CoreError::Config("click_temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.body_click_weight) {
            return Err(CoreError::Config("body_click_weight outside [0,1]".into()));
        }
        Ok(())
    }
}

/// Per-topic unigram distributions over a shared token list.
pub struct TopicModel {
    pub names: Vec<String>,
    pub tokens: Vec<String>,
    /// Per topic, cumulative probabilities over `tokens` (last entry 1.0).
    cumulative: Vec<Vec<f64>>,
}

impl TopicModel {
    pub fn build(cfg: &GeneratorConfig) -> Self {
        let k = cfg.topics;
        let names: Vec<String> = (0..k).map(|t| format!("topic{t}")).collect();
        let mut tokens = Vec::with_capacity(k * cfg.topic_vocab + cfg.common_vocab);
        for t in 0..k {
            for j in 0..cfg.topic_vocab {
                tokens.push(format!("t{t}w{j}"));
            }
        }
        for j in 0..cfg.common_vocab {
            tokens.push(format!("cw{j}"));
        }
        let mut cumulative = Vec::with_capacity(k);
        for t in 0..k {
            let mut probs = vec![0.0f64; tokens.len()];
            // 75% of mass on the topic's own tokens with a Zipf profile,
            // 25% spread uniformly over the common pool.
            let zipf_total: f64 = (1..=cfg.topic_vocab).map(|j| 1.0 / j as f64).sum();
            for j in 0..cfg.topic_vocab {
                probs[t * cfg.topic_vocab + j] = 0.75 * (1.0 / (j + 1) as f64) / zipf_total;
            }
            let common_start = k * cfg.topic_vocab;
            for j in 0..cfg.common_vocab {
                probs[common_start + j] = 0.25 / cfg.common_vocab as f64;
            }
            let total: f64 = probs.iter().sum();
            let mut cum = Vec::with_capacity(probs.len());
            let mut acc = 0.0;
            for p in &probs {
                acc += p / total;
                cum.push(acc);
            }
            *cum.last_mut().unwrap() = 1.0;
            cumulative.push(cum);
        }
        Self { names, tokens, cumulative }
    }

    pub fn mass_sums_to_one(&self, topic: usize) -> f64 {
        *self.cumulative[topic].last().unwrap()
    }

    fn sample_token<R: Rng>(&self, topic: usize, rng: &mut R) -> &str {
        let u: f64 = rng.gen_range(0.0..1.0);
        let cum = &self.cumulative[topic];
        let idx = cum.partition_point(|&c| c < u).min(cum.len() - 1);
        &self.tokens[idx]
    }

    fn sample_text<R: Rng>(&self, topic: usize, len: usize, rng: &mut R) -> String {
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            words.push(self.sample_token(topic, rng));
        }
        words.join(" ")
    }
}

/// A generated user: a preference simplex over topics.
#[derive(Debug, Clone)]
pub struct SyntheticUser {
    pub prefs: Vec<f64>,
    pub sessions: usize,
}

impl SyntheticUser {
    fn generate<R: Rng>(topics: usize, sessions: usize, rng: &mut R) -> Self {
        let primary = rng.gen_range(0..topics);
        let mut secondary = rng.gen_range(0..topics - 1);
        if secondary >= primary {
            secondary += 1;
        }
        let base = 0.10 / topics as f64;
        let mut prefs = vec![base; topics];
        prefs[primary] += 0.65;
        prefs[secondary] += 0.25;
        Self { prefs, sessions }
    }

    /// Lower median of the preference components; body topics strictly
    /// above it draw long dwells.
    pub fn median_pref(&self) -> f64 {
        let mut sorted = self.prefs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted[(sorted.len() - 1) / 2]
    }
}

/// Planted per-news truth, written as a sidecar file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub news_id: String,
    pub title_topic: String,
    pub body_topic: String,
    pub is_clickbait: bool,
}

pub struct GeneratedNews {
    pub records: Vec<RawNews>,
    pub truth: Vec<GroundTruth>,
    pub title_topics: Vec<usize>,
    pub body_topics: Vec<usize>,
}

/// Generates the news corpus: title topic uniform, body topic equal to it
/// except for clickbait articles, which get a different body topic.
pub fn generate_corpus(cfg: &GeneratorConfig, topics: &TopicModel) -> GeneratedNews {
    let mut rng = rng::stream(cfg.seed, &[stage::GENERATOR_CORPUS]);
    let mut records = Vec::with_capacity(cfg.news);
    let mut truth = Vec::with_capacity(cfg.news);
    let mut title_topics = Vec::with_capacity(cfg.news);
    let mut body_topics = Vec::with_capacity(cfg.news);
    for i in 0..cfg.news {
        let title_topic = rng.gen_range(0..cfg.topics);
        let is_clickbait = rng.gen_range(0.0..1.0) < cfg.clickbait_rate;
        let body_topic = if is_clickbait {
            let mut t = rng.gen_range(0..cfg.topics - 1);
            if t >= title_topic {
                t += 1;
            }
            t
        } else {
            title_topic
        };
        let title_len = rng.gen_range(cfg.title_tokens_min..=cfg.title_tokens_max);
        let body_len = rng.gen_range(cfg.body_tokens_min..=cfg.body_tokens_max);
        let news_id = format!("n{i:06}");
        records.push(RawNews {
            news_id: news_id.clone(),
            title: topics.sample_text(title_topic, title_len, &mut rng),
            body: topics.sample_text(body_topic, body_len, &mut rng),
            topic: topics.names[title_topic].clone(),
        });
        truth.push(GroundTruth {
            news_id,
            title_topic: topics.names[title_topic].clone(),
            body_topic: topics.names[body_topic].clone(),
            is_clickbait,
        });
        title_topics.push(title_topic);
        body_topics.push(body_topic);
    }
    GeneratedNews { records, truth, title_topics, body_topics }
}

fn box_muller<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u.ln()).sqrt() * v.cos()
}

fn log_normal<R: Rng>(median: f64, sigma: f64, rng: &mut R) -> f64 {
    (median.ln() + sigma * box_muller(rng)).exp()
}

/// Weighted sampling without replacement of `count` indices.
fn weighted_distinct<R: Rng>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count.min(weights.len()) {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let mut u = rng.gen_range(0.0..total);
        let mut chosen = remaining.len() - 1;
        for (pos, &i) in remaining.iter().enumerate() {
            u -= weights[i];
            if u <= 0.0 {
                chosen = pos;
                break;
            }
        }
        out.push(remaining.swap_remove(chosen));
    }
    out
}

/// Simulates one impression for a user: displayed news drawn uniformly,
/// clicks by softmax of topic affinity at the configured temperature (at
/// least one click per impression), dwell drawn long or short by the body
/// topic's preference relative to the user's median.
pub fn simulate_session(
    user: &SyntheticUser,
    user_id: &str,
    timestamp: u64,
    corpus: &GeneratedNews,
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> RawImpression {
    let n = corpus.records.len();
    let mut displayed_idx = Vec::with_capacity(cfg.displayed_per_impression);
    while displayed_idx.len() < cfg.displayed_per_impression {
        let i = rng.gen_range(0..n);
        if !displayed_idx.contains(&i) {
            displayed_idx.push(i);
        }
    }

    let weights: Vec<f64> = displayed_idx
        .iter()
        .map(|&i| {
            let affinity = (1.0 - cfg.body_click_weight) * user.prefs[corpus.title_topics[i]]
                + cfg.body_click_weight * user.prefs[corpus.body_topics[i]];
            (affinity / cfg.click_temperature).exp()
        })
        .collect();

    let n_clicks = 1 + usize::from(rng.gen_range(0.0..1.0) < cfg.extra_click_rate);
    let clicked_pos = weighted_distinct(&weights, n_clicks, rng);

    let median = user.median_pref();
    let mut clicked = Vec::with_capacity(clicked_pos.len());
    let mut dwell = BTreeMap::new();
    for &pos in &clicked_pos {
        let news = &corpus.records[displayed_idx[pos]];
        let long = user.prefs[corpus.body_topics[displayed_idx[pos]]] > median;
        let secs = if long {
            log_normal(cfg.long_dwell_median_secs, cfg.long_dwell_sigma, rng)
        } else {
            log_normal(cfg.short_dwell_median_secs, cfg.short_dwell_sigma, rng)
        };
        clicked.push(news.news_id.clone());
        dwell.insert(news.news_id.clone(), secs);
    }

    RawImpression {
        user_id: user_id.to_string(),
        timestamp,
        displayed: displayed_idx.iter().map(|&i| corpus.records[i].news_id.clone()).collect(),
        clicked,
        dwell,
    }
}

pub struct GeneratedDataset {
    pub news: Vec<RawNews>,
    pub impressions: Vec<RawImpression>,
    pub truth: Vec<GroundTruth>,
}

/// Generates the full corpus and session log. Sessions interleave users
/// across the timeline so every user appears in every chronological split.
/// Per-user streams are derived independently, so output is a pure function
/// of the config.
pub fn generate(cfg: &GeneratorConfig) -> Result<GeneratedDataset> {
    cfg.validate()?;
    let topics = TopicModel::build(cfg);
    let corpus = generate_corpus(cfg, &topics);

    let base_sessions = cfg.sessions / cfg.users;
    let extra = cfg.sessions % cfg.users;
    let mut impressions = Vec::with_capacity(cfg.sessions);
    for u in 0..cfg.users {
        let mut user_rng = rng::stream(cfg.seed, &[stage::GENERATOR_USER, u as u64]);
        let sessions = base_sessions + usize::from(u < extra);
        let user = SyntheticUser::generate(cfg.topics, sessions, &mut user_rng);
        let user_id = format!("u{u:05}");
        for s in 0..user.sessions {
            // slot interleaves users: all first sessions, then all second...
            let slot = (s * cfg.users + u) as u64;
            let timestamp = 1_000_000 + slot * 60;
            impressions.push(simulate_session(
                &user, &user_id, timestamp, &corpus, cfg, &mut user_rng,
            ));
        }
    }

    Ok(GeneratedDataset { news: corpus.records, impressions, truth: corpus.truth })
}

/// Writes news.jsonl, impressions.jsonl, and the ground-truth sidecar.
pub fn emit<P: AsRef<Path>>(ds: &GeneratedDataset, dir: P) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_jsonl(&ds.news, dir.join("news.jsonl"))?;
    write_jsonl(&ds.impressions, dir.join("impressions.jsonl"))?;
    write_jsonl(&ds.truth, dir.join("ground_truth.jsonl"))?;
    Ok(())
}
