//! Ingestion: tokenize news, split sessions chronologically, build per-user
//! histories, and emit negative-sampled training samples.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use nrnf_tensor::rng::{self, stage};

use crate::records::{ClickEvent, EvalImpression, NewsRecord, RawImpression, RawNews, TrainingSample, UserHistory};
use crate::vocab::Vocabulary;
use crate::{CoreError, Result};

/// Ingest parameters; defaults follow the model's standard configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub title_len: usize,
    pub body_len: usize,
    pub pos_cap: usize,
    pub neg_cap: usize,
    pub threshold_seconds: f64,
    pub neg_ratio: usize,
    pub min_token_freq: usize,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            title_len: 30,
            body_len: 200,
            pos_cap: 50,
            neg_cap: 20,
            threshold_seconds: 10.0,
            neg_ratio: 4,
            min_token_freq: 2,
            seed: 0,
        }
    }
}

/// Counters reported by ingestion.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestStats {
    pub sessions: usize,
    pub clicks: usize,
    pub train_samples: usize,
    /// Clicks skipped because their impression had zero non-clicked news.
    pub skipped_no_negatives: usize,
    /// Val/test impressions without both a positive and a negative label.
    pub eval_excluded: usize,
}

/// Fully processed dataset: the model consumes this directly.
#[derive(Serialize, Deserialize)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub news: Vec<NewsRecord>,
    /// Per kept impression, the user's click history strictly before it.
    pub histories: Vec<Vec<ClickEvent>>,
    pub train: Vec<TrainingSample>,
    pub val: Vec<EvalImpression>,
    pub test: Vec<EvalImpression>,
    pub stats: IngestStats,
    pub config: IngestConfig,
}

impl Dataset {
    pub fn news_index(&self) -> HashMap<&str, usize> {
        self.news.iter().enumerate().map(|(i, n)| (n.news_id.as_str(), i)).collect()
    }
}

/// Splits one user's chronological clicks into positive/negative views by
/// the dwell threshold: dwell < T is negative, dwell ≥ T is positive. Order
/// is preserved; caps drop the oldest entries first.
pub fn split_history(clicks: &[ClickEvent], threshold: f64, pos_cap: usize, neg_cap: usize) -> UserHistory {
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for c in clicks {
        if c.dwell < threshold {
            negative.push(c.news);
        } else {
            positive.push(c.news);
        }
    }
    if positive.len() > pos_cap {
        positive.drain(..positive.len() - pos_cap);
    }
    if negative.len() > neg_cap {
        negative.drain(..negative.len() - neg_cap);
    }
    UserHistory { positive, negative }
}

/// Stable chronological 80/10/10 split by session count. Returns index
/// vectors into the input slice, sorted by (timestamp, input order).
pub fn chronological_split(sessions: &[RawImpression]) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let n = sessions.len();
    if n < 10 {
        return Err(CoreError::Size(format!("need at least 10 sessions to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| sessions[i].timestamp);
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    Ok((train, val, test))
}

/// Draws `q` negatives from an impression's non-clicked pool: distinct when
/// the pool is large enough, with replacement otherwise.
pub fn draw_negatives<R: Rng>(pool: &[usize], q: usize, rng: &mut R) -> Vec<usize> {
    if pool.len() >= q {
        // partial Fisher-Yates for q distinct picks
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        let mut out = Vec::with_capacity(q);
        for i in 0..q {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
            out.push(pool[idx[i]]);
        }
        out
    } else {
        (0..q).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
    }
}

/// Runs the full ingestion over in-memory raw records.
pub fn ingest(news: &[RawNews], impressions: &[RawImpression], cfg: &IngestConfig) -> Result<Dataset> {
    for imp in impressions {
        imp.validate()?;
    }
    let (train_idx, val_idx, test_idx) = chronological_split(impressions)?;

    // Vocabulary from the text visible in training sessions only.
    let news_by_id: HashMap<&str, &RawNews> =
        news.iter().map(|n| (n.news_id.as_str(), n)).collect();
    let mut train_news_ids: Vec<&str> = Vec::new();
    let mut seen: HashMap<&str, ()> = HashMap::new();
    for &i in &train_idx {
        for id in &impressions[i].displayed {
            if seen.insert(id.as_str(), ()).is_none() {
                train_news_ids.push(id.as_str());
            }
        }
    }
    let mut texts: Vec<String> = Vec::with_capacity(train_news_ids.len() * 2);
    for id in &train_news_ids {
        let n = news_by_id
            .get(id)
            .ok_or_else(|| CoreError::Data(format!("impression references unknown news {id}")))?;
        texts.push(n.title.clone());
        texts.push(n.body.clone());
    }
    let vocab = Vocabulary::build(texts.iter().map(|s| s.as_str()), cfg.min_token_freq);

    // Encode every news article.
    let mut records = Vec::with_capacity(news.len());
    for n in news {
        let (title_ids, title_len) = vocab.encode(&n.title, cfg.title_len);
        let (body_ids, body_len) = vocab.encode(&n.body, cfg.body_len);
        if title_len == 0 {
            return Err(CoreError::Data(format!("news {} has an empty title", n.news_id)));
        }
        records.push(NewsRecord {
            news_id: n.news_id.clone(),
            title_ids,
            body_ids,
            title_len,
            body_len,
            topic: n.topic.clone(),
        });
    }
    let index: HashMap<&str, usize> =
        records.iter().enumerate().map(|(i, r)| (r.news_id.as_str(), i)).collect();

    // Walk sessions in chronological order, maintaining per-user running
    // histories. A session's snapshot contains only strictly earlier clicks,
    // so a sample never sees its own impression.
    let mut chronological: Vec<usize> = Vec::with_capacity(impressions.len());
    chronological.extend(train_idx.iter());
    chronological.extend(val_idx.iter());
    chronological.extend(test_idx.iter());
    let split_of = |pos: usize| -> u8 {
        if pos < train_idx.len() {
            0
        } else if pos < train_idx.len() + val_idx.len() {
            1
        } else {
            2
        }
    };

    let mut stats = IngestStats { sessions: impressions.len(), ..Default::default() };
    let mut running: HashMap<&str, Vec<ClickEvent>> = HashMap::new();
    let mut histories: Vec<Vec<ClickEvent>> = Vec::with_capacity(impressions.len());
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();

    for (pos, &imp_i) in chronological.iter().enumerate() {
        let imp = &impressions[imp_i];
        let user_hist = running.entry(imp.user_id.as_str()).or_default();
        let hist_id = histories.len();
        histories.push(user_hist.clone());

        let mut candidates = Vec::with_capacity(imp.displayed.len());
        for id in &imp.displayed {
            let &ni = index
                .get(id.as_str())
                .ok_or_else(|| CoreError::Data(format!("unknown news {id} in impression")))?;
            candidates.push(ni);
        }
        let labels: Vec<bool> = imp.displayed.iter().map(|d| imp.clicked.contains(d)).collect();
        let pool: Vec<usize> = candidates
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| !l)
            .map(|(&c, _)| c)
            .collect();

        match split_of(pos) {
            0 => {
                let mut neg_rng = rng::stream(cfg.seed, &[stage::NEGATIVE_SAMPLING, imp_i as u64]);
                for id in &imp.clicked {
                    stats.clicks += 1;
                    if pool.is_empty() {
                        stats.skipped_no_negatives += 1;
                        continue;
                    }
                    let negatives = draw_negatives(&pool, cfg.neg_ratio, &mut neg_rng);
                    train.push(TrainingSample {
                        impression: hist_id,
                        positive: index[id.as_str()],
                        negatives,
                        pool: pool.clone(),
                    });
                }
                stats.train_samples = train.len();
            }
            split => {
                let has_pos = labels.iter().any(|&l| l);
                let has_neg = labels.iter().any(|&l| !l);
                if has_pos && has_neg {
                    let rec = EvalImpression { impression: hist_id, candidates, labels };
                    if split == 1 {
                        val.push(rec);
                    } else {
                        test.push(rec);
                    }
                } else {
                    stats.eval_excluded += 1;
                }
            }
        }

        // Append this session's clicks to the user's running history.
        for id in &imp.clicked {
            let dwell = imp.dwell[id.as_str()];
            user_hist.push(ClickEvent { news: index[id.as_str()], dwell });
        }
    }

    Ok(Dataset { vocab, news: records, histories, train, val, test, stats, config: cfg.clone() })
}

// ── File IO ──────────────────────────────────────────────────────────

pub fn read_jsonl<T: serde::de::DeserializeOwned, P: AsRef<Path>>(path: P) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| CoreError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| {
            CoreError::Data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, P: AsRef<Path>>(items: &[T], path: P) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn ingest_files<P: AsRef<Path>>(news_path: P, impressions_path: P, cfg: &IngestConfig) -> Result<Dataset> {
    let news: Vec<RawNews> = read_jsonl(news_path)?;
    let impressions: Vec<RawImpression> = read_jsonl(impressions_path)?;
    ingest(&news, &impressions, cfg)
}

pub fn save_dataset<P: AsRef<Path>>(ds: &Dataset, path: P) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset<P: AsRef<Path>>(path: P) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| CoreError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut ds: Dataset = serde_json::from_reader(BufReader::new(file))?;
    ds.vocab.rebuild_index();
    Ok(ds)
}
