use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::corpus::LabeledExample;
use crate::error::{invalid, Result};

pub(super) fn alpha_from_map(map: &BTreeMap<String, f64>) -> Result<f64> {
    let mut alpha = 1.0;
    for (key, &value) in map {
        match key.as_str() {
            "alpha" if value > 0.0 && value.is_finite() => alpha = value,
            "alpha" => return Err(invalid("alpha must be positive")),
            other => return Err(invalid(format!("unknown naive Bayes hyperparameter {other:?}"))),
        }
    }
    Ok(alpha)
}

/// Multinomial naive Bayes with additive smoothing.
///
/// The state is kept as raw counts so a serialized model reproduces scores
/// exactly. Tokens never seen in training are ignored at scoring time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    alpha: f64,
    /// Documents per class, `[negative, positive]`.
    class_docs: [u64; 2],
    /// Token occurrences per class.
    class_tokens: [u64; 2],
    counts: BTreeMap<String, [u64; 2]>,
}

impl NaiveBayesModel {
    pub fn fit(examples: &[LabeledExample], alpha: f64) -> Self {
        let mut class_docs = [0u64; 2];
        let mut class_tokens = [0u64; 2];
        let mut counts: BTreeMap<String, [u64; 2]> = BTreeMap::new();
        for ex in examples {
            let c = ex.label.as_u8() as usize;
            class_docs[c] += 1;
            for tok in tokenize(&ex.text) {
                counts.entry(tok).or_default()[c] += 1;
                class_tokens[c] += 1;
            }
        }
        Self {
            alpha,
            class_docs,
            class_tokens,
            counts,
        }
    }

    /// Log joint probability per class, `[negative, positive]`.
    pub fn log_joint(&self, text: &str) -> [f64; 2] {
        let docs = (self.class_docs[0] + self.class_docs[1]) as f64;
        let vocab = self.counts.len() as f64;
        let mut lp = [0.0; 2];
        for c in 0..2 {
            lp[c] = (self.class_docs[c] as f64 / docs).ln();
        }
        let denom = [
            self.class_tokens[0] as f64 + self.alpha * vocab,
            self.class_tokens[1] as f64 + self.alpha * vocab,
        ];
        for tok in tokenize(text) {
            if let Some(n) = self.counts.get(&tok) {
                for c in 0..2 {
                    lp[c] += ((n[c] as f64 + self.alpha) / denom[c]).ln();
                }
            }
        }
        lp
    }

    pub fn score(&self, text: &str) -> f64 {
        let [neg, pos] = self.log_joint(text);
        1.0 / (1.0 + (neg - pos).exp())
    }
}
