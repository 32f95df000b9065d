use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Match;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    NonMatch,
    Unsure,
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "match" | "m" => Ok(Verdict::Match),
            "non_match" | "non-match" | "x" => Ok(Verdict::NonMatch),
            "unsure" | "u" => Ok(Verdict::Unsure),
            other => Err(Error::Invalid(format!("unknown verdict {other:?}"))),
        }
    }
}

/// One relevance judgement of a retrieved phrase. Records are only ever
/// appended; a later record with `amend` set replaces the verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub theme_id: String,
    pub corpus: String,
    pub post_id: String,
    pub phrase: String,
    pub rank: usize,
    pub verdict: Verdict,
    pub reviewer: String,
    pub reviewed_at: i64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub amend: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReviewKey {
    pub theme_id: String,
    pub corpus: String,
    pub post_id: String,
    pub phrase: String,
}

impl ReviewRecord {
    pub fn key(&self) -> ReviewKey {
        ReviewKey {
            theme_id: self.theme_id.clone(),
            corpus: self.corpus.clone(),
            post_id: self.post_id.clone(),
            phrase: self.phrase.clone(),
        }
    }
}

/// Review counts for a theme in one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeCounts {
    /// Reviews with verdict `match` within the window.
    pub k: usize,
    /// Reviews of any verdict within the window.
    pub n: usize,
    pub window: usize,
    /// Fewer than `window` matches have been reviewed.
    pub partial: bool,
    /// `k / window` when fully reviewed, `k / n` otherwise (0 with no reviews).
    pub proportion: f64,
}

/// Current verdicts, derived purely from the log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReviewState {
    current: BTreeMap<ReviewKey, ReviewRecord>,
    history_len: BTreeMap<ReviewKey, usize>,
}

impl ReviewState {
    pub fn replay<'a>(records: impl IntoIterator<Item = &'a ReviewRecord>) -> Result<Self> {
        let mut state = Self::default();
        for r in records {
            state.apply(r.clone())?;
        }
        Ok(state)
    }

    /// Checks `record` against the current state without applying it.
    pub fn validate(&self, record: &ReviewRecord) -> Result<()> {
        let exists = self.current.contains_key(&record.key());
        match (exists, record.amend) {
            (true, false) => Err(Error::Conflict(format!(
                "phrase {:?} of post {} already reviewed for theme {} in {}; amend to change it",
                record.phrase, record.post_id, record.theme_id, record.corpus
            ))),
            (false, true) => Err(Error::NotFound(format!(
                "no review of post {} to amend for theme {}",
                record.post_id, record.theme_id
            ))),
            _ => Ok(()),
        }
    }

    pub fn apply(&mut self, record: ReviewRecord) -> Result<()> {
        self.validate(&record)?;
        let key = record.key();
        *self.history_len.entry(key.clone()).or_default() += 1;
        self.current.insert(key, record);
        Ok(())
    }

    pub fn get(&self, key: &ReviewKey) -> Option<&ReviewRecord> {
        self.current.get(key)
    }

    /// Number of log records for `key`, the original review included.
    pub fn audit_len(&self, key: &ReviewKey) -> usize {
        self.history_len.get(key).copied().unwrap_or(0)
    }

    pub fn reviews<'a>(&'a self, theme_id: &'a str, corpus: &'a str) -> impl Iterator<Item = &'a ReviewRecord> + 'a {
        self.current
            .values()
            .filter(move |r| r.theme_id == theme_id && r.corpus == corpus)
    }

    pub fn counts(&self, theme_id: &str, corpus: &str, window: usize) -> ThemeCounts {
        let (mut k, mut n) = (0, 0);
        for r in self.reviews(theme_id, corpus).filter(|r| r.rank >= 1 && r.rank <= window) {
            n += 1;
            if r.verdict == Verdict::Match {
                k += 1;
            }
        }
        let partial = n < window;
        let denom = if partial { n } else { window };
        ThemeCounts {
            k,
            n,
            window,
            partial,
            proportion: if denom == 0 { 0.0 } else { k as f64 / denom as f64 },
        }
    }
}

/// Builds the log record for reviewing `m` and applies it to `state`.
pub fn record_review(
    state: &mut ReviewState,
    theme_id: &str,
    corpus: &str,
    m: &Match,
    verdict: Verdict,
    reviewer: &str,
    reviewed_at: i64,
    amend: bool,
) -> Result<ReviewRecord> {
    let record = ReviewRecord {
        theme_id: theme_id.to_string(),
        corpus: corpus.to_string(),
        post_id: m.post_id.clone(),
        phrase: m.phrase.clone(),
        rank: m.rank,
        verdict,
        reviewer: reviewer.to_string(),
        reviewed_at,
        amend,
    };
    state.apply(record.clone())?;
    Ok(record)
}
