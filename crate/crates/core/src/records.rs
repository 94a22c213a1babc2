//! Data records: raw file schemas and their processed, model-ready forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// One line of the news file (newline-delimited JSON, UTF-8).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawNews {
    pub news_id: String,
    pub title: String,
    pub body: String,
    pub topic: String,
}

/// One line of the impressions file: a display event with click flags and
/// the dwell seconds of each clicked news.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawImpression {
    pub user_id: String,
    pub timestamp: u64,
    pub displayed: Vec<String>,
    pub clicked: Vec<String>,
    pub dwell: BTreeMap<String, f64>,
}

impl RawImpression {
    pub fn validate(&self) -> Result<()> {
        for c in &self.clicked {
            if !self.displayed.contains(c) {
                return Err(CoreError::Data(format!(
                    "impression for {}: clicked {c} not among displayed",
                    self.user_id
                )));
            }
            match self.dwell.get(c) {
                None => {
                    return Err(CoreError::Data(format!(
                        "impression for {}: clicked {c} has no dwell entry",
                        self.user_id
                    )))
                }
                Some(d) if *d < 0.0 => {
                    return Err(CoreError::Data(format!(
                        "impression for {}: negative dwell for {c}",
                        self.user_id
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Tokenized news with fixed-length padded id sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewsRecord {
    pub news_id: String,
    pub title_ids: Vec<u32>,
    pub body_ids: Vec<u32>,
    pub title_len: usize,
    pub body_len: usize,
    pub topic: String,
}

/// One click with its dwell time, in chronological order within a history.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClickEvent {
    /// Index into the dataset's news table.
    pub news: usize,
    pub dwell: f64,
}

/// Clicked-news history split into positive (dwell ≥ T) and negative
/// (dwell < T) views, most recent last, capped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

/// One training sample: a clicked candidate, Q same-impression non-clicked
/// candidates, and the user's pre-impression click history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSample {
    /// Index into the dataset's per-impression history table.
    pub impression: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
    /// Displayed-but-not-clicked pool of the impression, kept so negatives
    /// can be re-drawn per epoch when configured.
    pub pool: Vec<usize>,
}

/// One evaluation impression: every displayed candidate with its click label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalImpression {
    pub impression: usize,
    pub candidates: Vec<usize>,
    pub labels: Vec<bool>,
}
