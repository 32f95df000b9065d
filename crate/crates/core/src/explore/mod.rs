//! Theme building and phrase retrieval.
//!
//! An analyst groups explanation phrases into themes. A theme's query vector
//! is the re-normalized mean of its members' unit embeddings, and retrieval is
//! an exact cosine ranking over a corpus's [`PhraseIndex`].

mod index;
mod provider;
mod review;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use index::{build_index, IndexEntry, IndexSource, PhraseIndex};
pub use provider::{normalize, Embedder, EmbeddingCache, EmbeddingProvider, HashProvider, RetryPolicy};
pub use review::{record_review, ReviewKey, ReviewRecord, ReviewState, ThemeCounts, Verdict};

/// Window used for top-N reviews unless stated otherwise.
pub const DEFAULT_WINDOW: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theme {
    pub theme_id: String,
    pub name: String,
    #[serde(default)]
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_vector: Option<Vec<f64>>,
    #[serde(default)]
    pub notes: String,
}

impl Theme {
    pub fn new(theme_id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            theme_id: theme_id.into(),
            name: name.into(),
            members: Vec::new(),
            query_vector: None,
            notes: String::new(),
        }
    }

    /// Adds a member phrase (trimmed). Returns false if it was already there.
    /// The cached query vector is dropped.
    pub fn add_member(&mut self, phrase: &str) -> bool {
        let phrase = phrase.trim();
        if phrase.is_empty() || self.members.iter().any(|m| m == phrase) {
            return false;
        }
        self.members.push(phrase.to_string());
        self.query_vector = None;
        true
    }

    pub fn remove_member(&mut self, phrase: &str) -> bool {
        let before = self.members.len();
        self.members.retain(|m| m != phrase.trim());
        let removed = self.members.len() != before;
        if removed {
            self.query_vector = None;
        }
        removed
    }

    /// Recomputes and stores the query vector.
    pub fn refresh_query_vector(&mut self, embedder: &mut Embedder<'_>) -> Result<&[f64]> {
        let v = theme_query_vector(embedder, &self.members)?;
        Ok(self.query_vector.insert(v))
    }
}

/// Normalized mean of the members' unit embeddings.
pub fn theme_query_vector(embedder: &mut Embedder<'_>, members: &[String]) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Err(invalid("a theme needs at least one member phrase"));
    }
    let vectors = embedder.embed(members)?;
    let mut mean = vec![0.0; embedder.dimension()];
    for v in &vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let n = vectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(invalid("theme members cancel out; their mean embedding is zero"));
    }
    Ok(mean.into_iter().map(|x| x / norm).collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// One retrieved phrase. Ranks start at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub rank: usize,
    pub post_id: String,
    pub phrase: String,
    pub cosine: f64,
}

/// Exact top-`n` of `index` by cosine to `query`, descending; equal cosines
/// are ordered by `(post_id, phrase)`.
pub fn top_matches(index: &PhraseIndex, query: &[f64], n: usize) -> Result<Vec<Match>> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if query.len() != index.dimension {
        return Err(invalid(format!(
            "query has dimension {}, index {} has {}",
            query.len(),
            index.corpus,
            index.dimension
        )));
    }
    let qnorm = dot(query, query).sqrt();
    if !(qnorm > 0.0 && qnorm.is_finite()) {
        return Err(invalid("query vector must be non-zero and finite"));
    }
    let mut scored: Vec<(f64, &IndexEntry)> = index
        .entries
        .iter()
        .map(|e| (dot(query, &e.vector) / qnorm, e))
        .collect();
    let order = |a: &(f64, &IndexEntry), b: &(f64, &IndexEntry)| -> Ordering {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.post_id.cmp(&b.1.post_id))
            .then_with(|| a.1.phrase.cmp(&b.1.phrase))
    };
    if n < scored.len() {
        scored.select_nth_unstable_by(n - 1, order);
        scored.truncate(n);
    }
    scored.sort_unstable_by(order);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (cosine, e))| Match {
            rank: i + 1,
            post_id: e.post_id.clone(),
            phrase: e.phrase.clone(),
            cosine,
        })
        .collect())
}
