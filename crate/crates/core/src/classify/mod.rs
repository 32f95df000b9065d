//! Binary text classifiers behind a single scoring contract.
//!
//! Two reference backends ship with the crate: a logistic-loss linear model
//! over a bag of words and multinomial naive Bayes. Both share the same
//! tokenizer (lowercase, split on runs of non-alphanumeric characters,
//! unigrams) and produce a score in `[0, 1]` for the positive class.

mod linear;
mod metrics;
mod naive_bayes;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dataset, Label};
use crate::error::{invalid, Error, Result};
use crate::{content_hash, TOOL_VERSION};

pub use linear::LinearModel;
pub use metrics::{Confusion, Metrics};
pub use naive_bayes::NaiveBayesModel;

/// Anything that maps a text to a positive-class probability.
///
/// Implementations must be total over valid UTF-8, return values in `[0, 1]`
/// and be deterministic for a fixed state.
pub trait Classifier: Send + Sync {
    fn score(&self, text: &str) -> f64;

    fn score_batch(&self, texts: &[String]) -> Vec<f64> {
        texts.iter().map(|t| self.score(t)).collect()
    }

    /// Stable identifier of the fitted state, recorded in manifests.
    fn fingerprint(&self) -> String;
}

/// Adapts a plain function into a [`Classifier`]. Handy for analytic stubs.
pub struct ScoreFn<F> {
    name: String,
    f: F,
}

impl<F> ScoreFn<F>
where
    F: Fn(&str) -> f64 + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> Classifier for ScoreFn<F>
where
    F: Fn(&str) -> f64 + Send + Sync,
{
    fn score(&self, text: &str) -> f64 {
        (self.f)(text)
    }

    fn fingerprint(&self) -> String {
        format!("fn:{}", self.name)
    }
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub const TOKENIZER: &str = "lowercase;split=non-alphanumeric;ngrams=1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Linear,
    #[serde(rename = "nb")]
    NaiveBayes,
    Transformer,
}

impl Backend {
    pub fn id(self) -> &'static str {
        match self {
            Backend::Linear => "linear",
            Backend::NaiveBayes => "nb",
            Backend::Transformer => "transformer",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Backend::Linear),
            "nb" => Ok(Backend::NaiveBayes),
            "transformer" => Ok(Backend::Transformer),
            other => Err(invalid(format!("unknown backend {other:?}"))),
        }
    }
}

/// Backend choice plus hyperparameter overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendSpec {
    pub backend: Backend,
    pub hyperparameters: BTreeMap<String, f64>,
}

impl BackendSpec {
    pub fn new(backend: Backend) -> Self {
        Self {
            backend,
            hyperparameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.hyperparameters.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend_id", content = "state")]
pub enum Model {
    #[serde(rename = "linear")]
    Linear(LinearModel),
    #[serde(rename = "nb")]
    NaiveBayes(NaiveBayesModel),
}

impl Model {
    fn score(&self, text: &str) -> f64 {
        match self {
            Model::Linear(m) => m.score(text),
            Model::NaiveBayes(m) => m.score(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub backend_id: String,
    pub hyperparameters: BTreeMap<String, f64>,
    pub dataset_hash: String,
    pub seed: u64,
    pub tokenizer: String,
    pub tool_version: String,
}

/// A fitted backend together with how it was fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub model: Model,
    pub manifest: ModelManifest,
}

const MANIFEST_FILE: &str = "manifest.json";
const STATE_FILE: &str = "state.json";

impl TrainedClassifier {
    pub fn state_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.model).expect("model state serializes")
    }

    pub fn manifest_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes")
    }

    pub fn from_parts(manifest: &[u8], state: &[u8]) -> Result<Self> {
        let manifest: ModelManifest = serde_json::from_slice(manifest)?;
        let model: Model = serde_json::from_slice(state)?;
        Ok(Self { model, manifest })
    }

    /// Writes the model artifact: a directory holding `manifest.json` and
    /// the opaque `state.json`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest_bytes())?;
        fs::write(dir.join(STATE_FILE), self.state_bytes())?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::from_parts(&fs::read(dir.join(MANIFEST_FILE))?, &fs::read(dir.join(STATE_FILE))?)
    }
}

impl Classifier for TrainedClassifier {
    fn score(&self, text: &str) -> f64 {
        self.model.score(text)
    }

    fn fingerprint(&self) -> String {
        content_hash(&self.state_bytes())
    }
}

/// Fits `spec` on `train_set`.
pub fn train(spec: &BackendSpec, train_set: &Dataset, seed: u64) -> Result<TrainedClassifier> {
    let counts = train_set.counts();
    if counts.positive == 0 || counts.negative == 0 {
        return Err(invalid("training needs both classes present"));
    }
    let (model, hyperparameters) = match spec.backend {
        Backend::Linear => {
            let params = linear::Params::from_map(&spec.hyperparameters)?;
            (Model::Linear(LinearModel::fit(&train_set.examples, &params, seed)), params.to_map())
        }
        Backend::NaiveBayes => {
            let alpha = naive_bayes::alpha_from_map(&spec.hyperparameters)?;
            let mut map = BTreeMap::new();
            map.insert("alpha".to_string(), alpha);
            (Model::NaiveBayes(NaiveBayesModel::fit(&train_set.examples, alpha)), map)
        }
        Backend::Transformer => {
            return Err(invalid(
                "the transformer backend is not part of this build; use `linear` or `nb`",
            ))
        }
    };
    let manifest = ModelManifest {
        backend_id: spec.backend.id().to_string(),
        hyperparameters,
        dataset_hash: content_hash(&train_set.to_records()),
        seed,
        tokenizer: TOKENIZER.to_string(),
        tool_version: TOOL_VERSION.to_string(),
    };
    Ok(TrainedClassifier { model, manifest })
}

/// Scores `test_set` at the 0.5 threshold; label 1 is the positive class.
pub fn evaluate(classifier: &dyn Classifier, test_set: &Dataset) -> Result<Metrics> {
    if test_set.is_empty() {
        return Err(invalid("cannot evaluate on an empty test set"));
    }
    let texts: Vec<String> = test_set.examples.iter().map(|e| e.text.clone()).collect();
    let scores = classifier.score_batch(&texts);
    Ok(Metrics::from_pairs(
        test_set
            .examples
            .iter()
            .zip(scores)
            .map(|(e, s)| (e.label, Label::from_bool(s >= 0.5))),
    ))
}

/// One row of a prediction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub post_id: String,
    pub score: f64,
    pub predicted: Label,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("threshold must lie in (0, 1), got {threshold}")))
    }
}

/// Scores every post in corpus order. A post is predicted positive when its
/// score is at least `threshold`.
pub fn classify_corpus(
    classifier: &dyn Classifier,
    corpus: &Corpus,
    threshold: f64,
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    check_threshold(threshold)?;
    let batch_size = batch_size.max(1);
    let mut rows = Vec::with_capacity(corpus.len());
    for chunk in corpus.posts.chunks(batch_size) {
        let texts: Vec<String> = chunk.iter().map(|p| p.text()).collect();
        let scores = classifier.score_batch(&texts);
        rows.extend(chunk.iter().zip(scores).map(|(p, score)| Prediction {
            post_id: p.id.clone(),
            score,
            predicted: Label::from_bool(score >= threshold),
        }));
    }
    Ok(rows)
}

pub fn write_predictions<W: std::io::Write>(rows: &[Prediction], mut out: W) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Keeps the posts the classifier predicts positive. The manifest records the
/// classifier fingerprint and threshold; use
/// [`Corpus::to_dataset`](crate::corpus::Corpus::to_dataset) with
/// `Provenance::Expanded` to turn the result into training examples.
pub fn expand_dataset(classifier: &dyn Classifier, corpus: &Corpus, threshold: f64) -> Result<Corpus> {
    let predictions = classify_corpus(classifier, corpus, threshold, 256)?;
    let posts = corpus
        .posts
        .iter()
        .zip(&predictions)
        .filter(|(_, pred)| pred.predicted.is_positive())
        .map(|(p, _)| p.clone())
        .collect();
    let mut manifest = corpus.manifest.clone();
    manifest.filters.push(format!(
        "expanded:classifier={},threshold={threshold}",
        classifier.fingerprint()
    ));
    Ok(Corpus::new(format!("{}.expanded", corpus.name), posts, manifest))
}
