//! Typed artifacts on top of [`Store`] and the operations shared by the CLI
//! and the HTTP service.

use std::io::BufReader;

use maskboard_core::classify::TrainedClassifier;
use maskboard_core::corpus::{load_posts, Corpus, CorpusManifest, Dataset, DatasetManifest};
use maskboard_core::explain::{render_highlights, Explainer, Explanation, MarkupFormat};
use maskboard_core::explore::{
    build_index, theme_query_vector, top_matches, Embedder, EmbeddingCache, EmbeddingProvider, HashProvider,
    IndexSource, Match, PhraseIndex, ReviewRecord, Theme, ThemeCounts, Verdict,
};
use maskboard_core::stats::{compare_theme, ComparisonResult, ComparisonRow};
use maskboard_core::classify::Classifier;
use maskboard_core::{content_hash, TOOL_VERSION};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, not_found, Error, Result};
use crate::remote::{RemoteConfig, RemoteProvider};
use crate::store::{Kind, Store, EMBEDDING_CACHE};

/// Default page size of explanation listings.
pub const PAGE_SIZE: usize = 50;

fn to_json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("artifact manifests serialize");
    v.push(b'\n');
    v
}

fn parse<T: for<'de> Deserialize<'de>>(store: &Store, kind: Kind, name: &str, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes)
        .map_err(|e| Error::integrity(store.root().join(kind.dir()).join(name), e.to_string()))
}

fn required_sidecar(store: &Store, kind: Kind, name: &str) -> Result<Vec<u8>> {
    store
        .get_sidecar(kind, name)?
        .ok_or_else(|| Error::integrity(store.root().join(kind.dir()), format!("entry {name:?} has no manifest")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSetManifest {
    pub corpus: String,
    pub model: String,
    pub classifier: String,
    pub policy: String,
    pub posts: usize,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    /// Deterministic hash embeddings; no network.
    Test { dimension: usize },
    Remote(RemoteConfig),
}

impl ProviderConfig {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            ProviderConfig::Test { dimension } => {
                if *dimension == 0 {
                    return Err(invalid("embedding dimension must be positive"));
                }
                Box::new(HashProvider::new(*dimension))
            }
            ProviderConfig::Remote(cfg) => Box::new(RemoteProvider::from_env(cfg.clone())?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub corpus: String,
    pub provider: ProviderConfig,
    /// `highlights` or `all`.
    pub source: String,
    pub entries: usize,
    pub tool_version: String,
}

impl Store {
    pub fn put_corpus(&self, corpus: &Corpus) -> Result<String> {
        self.put_with(
            Kind::Corpora,
            &corpus.name,
            &corpus.to_records(),
            Some(&to_json_pretty(&corpus.manifest)),
            false,
        )
    }

    pub fn corpus(&self, name: &str) -> Result<Corpus> {
        let records = self.get(Kind::Corpora, name)?;
        let manifest: CorpusManifest = parse(self, Kind::Corpora, name, &required_sidecar(self, Kind::Corpora, name)?)?;
        let mut corpus = load_posts(name, &manifest.source, BufReader::new(records.as_slice()))?;
        if corpus.manifest.skipped != 0 {
            return Err(Error::integrity(self.root().join("corpora"), format!("corpus {name:?} has unreadable records")));
        }
        corpus.manifest = manifest;
        Ok(corpus)
    }

    pub fn put_dataset(&self, dataset: &Dataset) -> Result<String> {
        self.put_with(
            Kind::Datasets,
            &dataset.name,
            &dataset.to_records(),
            Some(&to_json_pretty(&dataset.manifest)),
            false,
        )
    }

    pub fn dataset(&self, name: &str) -> Result<Dataset> {
        let records = self.get(Kind::Datasets, name)?;
        let manifest: DatasetManifest =
            parse(self, Kind::Datasets, name, &required_sidecar(self, Kind::Datasets, name)?)?;
        Ok(Dataset::read_records(name, BufReader::new(records.as_slice()), manifest)?)
    }

    pub fn put_model(&self, name: &str, model: &TrainedClassifier) -> Result<String> {
        self.put_with(Kind::Models, name, &model.state_bytes(), Some(&model.manifest_bytes()), false)
    }

    pub fn model(&self, name: &str) -> Result<TrainedClassifier> {
        let state = self.get(Kind::Models, name)?;
        let manifest = required_sidecar(self, Kind::Models, name)?;
        TrainedClassifier::from_parts(&manifest, &state)
            .map_err(|e| Error::integrity(self.root().join("models"), format!("model {name:?}: {e}")))
    }

    /// Stores one explanation per line; re-explaining replaces the set.
    pub fn put_explanations(&self, name: &str, items: &[Explanation], manifest: &ExplanationSetManifest) -> Result<String> {
        let mut payload = Vec::new();
        for e in items {
            serde_json::to_writer(&mut payload, e).map_err(maskboard_core::Error::from)?;
            payload.push(b'\n');
        }
        self.put_with(Kind::Explanations, name, &payload, Some(&to_json_pretty(manifest)), true)
    }

    pub fn explanations(&self, name: &str) -> Result<(Vec<Explanation>, ExplanationSetManifest)> {
        let payload = self.get(Kind::Explanations, name)?;
        let manifest: ExplanationSetManifest =
            parse(self, Kind::Explanations, name, &required_sidecar(self, Kind::Explanations, name)?)?;
        let text = String::from_utf8(payload)
            .map_err(|e| Error::integrity(self.root().join("explanations"), e.to_string()))?;
        let mut items = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let mut e: Explanation = parse(self, Kind::Explanations, name, line.as_bytes())?;
            e.policy = manifest.policy.clone();
            items.push(e);
        }
        Ok((items, manifest))
    }

    /// Indexes are named after their corpus; rebuilding replaces the index.
    pub fn put_index(&self, index: &PhraseIndex, manifest: &IndexManifest) -> Result<String> {
        self.put_with(Kind::Indexes, &index.corpus, &index.to_bytes(), Some(&to_json_pretty(manifest)), true)
    }

    pub fn index(&self, corpus: &str) -> Result<(PhraseIndex, IndexManifest)> {
        let bytes = self.get(Kind::Indexes, corpus).map_err(|e| match e {
            Error::Core(maskboard_core::Error::NotFound(_)) => {
                not_found(format!("corpus {corpus:?} has no phrase index; run `maskboard index` first"))
            }
            other => other,
        })?;
        let manifest: IndexManifest = parse(self, Kind::Indexes, corpus, &required_sidecar(self, Kind::Indexes, corpus)?)?;
        let index = PhraseIndex::read_from(bytes.as_slice())
            .map_err(|e| Error::integrity(self.root().join("indexes"), format!("index {corpus:?}: {e}")))?;
        Ok((index, manifest))
    }

    pub fn themes(&self) -> Result<Vec<Theme>> {
        self.list(Kind::Themes)?.iter().map(|id| self.theme(id)).collect()
    }

    pub fn theme(&self, id: &str) -> Result<Theme> {
        let bytes = self.get(Kind::Themes, id).map_err(|e| match e {
            Error::Core(maskboard_core::Error::NotFound(_)) => not_found(format!("no theme {id:?}")),
            other => other,
        })?;
        parse(self, Kind::Themes, id, &bytes)
    }

    pub fn save_theme(&self, theme: &Theme) -> Result<()> {
        self.put_with(Kind::Themes, &theme.theme_id, &to_json_pretty(theme), None, true)?;
        Ok(())
    }

    /// Creates a theme whose id is the slug of `name`.
    pub fn create_theme(&self, name: &str, notes: &str) -> Result<Theme> {
        let id = slug(name);
        if id.is_empty() {
            return Err(invalid("a theme name needs at least one letter or digit"));
        }
        if self.contains(Kind::Themes, &id)? {
            return Err(crate::error::conflict(format!("theme {id:?} already exists")));
        }
        let mut theme = Theme::new(id, name.trim());
        theme.notes = notes.to_string();
        self.save_theme(&theme)?;
        Ok(theme)
    }

    pub fn delete_theme(&self, id: &str) -> Result<()> {
        self.theme(id)?;
        self.remove(Kind::Themes, id)
    }

    pub fn embedding_cache(&self) -> Result<EmbeddingCache> {
        match self.read_root_file(EMBEDDING_CACHE)? {
            Some(bytes) => Ok(EmbeddingCache::read_lines(BufReader::new(bytes.as_slice()))
                .map_err(|e| Error::integrity(self.root().join(EMBEDDING_CACHE), e.to_string()))?),
            None => Ok(EmbeddingCache::default()),
        }
    }

    /// Merges `cache` into the stored cache.
    pub fn save_embedding_cache(&self, cache: EmbeddingCache) -> Result<()> {
        let mut merged = self.embedding_cache()?;
        let before = merged.len();
        merged.merge(cache);
        if merged.len() == before && self.read_root_file(EMBEDDING_CACHE)?.is_some() {
            return Ok(());
        }
        let mut bytes = Vec::new();
        merged.write_lines(&mut bytes)?;
        self.write_root_file(EMBEDDING_CACHE, &bytes)
    }
}

/// Lowercase ASCII letters and digits, other runs collapsed to `-`.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.trim().chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

/// Explains every post of `corpus` with `model` and stores the set under the
/// corpus name.
pub fn explain_corpus(store: &Store, model_name: &str, corpus_name: &str, explainer: &Explainer) -> Result<Vec<Explanation>> {
    let model = store.model(model_name)?;
    let corpus = store.corpus(corpus_name)?;
    let items = corpus
        .posts
        .iter()
        .map(|p| explainer.explain(&model, &p.id, &p.text()))
        .collect::<maskboard_core::Result<Vec<_>>>()?;
    let manifest = ExplanationSetManifest {
        corpus: corpus_name.to_string(),
        model: model_name.to_string(),
        classifier: model.fingerprint(),
        policy: explainer.describe(),
        posts: items.len(),
        tool_version: TOOL_VERSION.to_string(),
    };
    store.put_explanations(corpus_name, &items, &manifest)?;
    Ok(items)
}

/// Embeds the phrases of a corpus and stores the index.
pub fn index_corpus(store: &Store, corpus_name: &str, provider: &ProviderConfig, highlights_only: bool) -> Result<PhraseIndex> {
    let corpus = store.corpus(corpus_name)?;
    let built = provider.build()?;
    let mut embedder = Embedder::new(built.as_ref(), store.embedding_cache()?);
    let segmenter = Default::default();
    let explanations;
    let source = if highlights_only {
        explanations = store
            .explanations(corpus_name)
            .map_err(|e| match e {
                Error::Core(maskboard_core::Error::NotFound(_)) => {
                    not_found(format!("corpus {corpus_name:?} has no explanations; run `maskboard explain` first"))
                }
                other => other,
            })?
            .0;
        IndexSource::Highlights(&explanations)
    } else {
        IndexSource::AllPhrases(&segmenter)
    };
    let index = build_index(&mut embedder, &corpus, source)?;
    store.save_embedding_cache(embedder.into_cache())?;
    let manifest = IndexManifest {
        corpus: corpus_name.to_string(),
        provider: provider.clone(),
        source: if highlights_only { "highlights" } else { "all" }.to_string(),
        entries: index.len(),
        tool_version: TOOL_VERSION.to_string(),
    };
    store.put_index(&index, &manifest)?;
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub theme_id: String,
    pub corpus: String,
    pub provider: String,
    pub matches: Vec<Match>,
}

/// Top-`n` phrases of `corpus` closest to the theme's query vector, embedded
/// with the provider the corpus index was built with.
pub fn search(store: &Store, theme_id: &str, corpus: &str, n: usize) -> Result<SearchResult> {
    let theme = store.theme(theme_id)?;
    let (index, manifest) = store.index(corpus)?;
    let provider = manifest.provider.build()?;
    let mut embedder = Embedder::new(provider.as_ref(), store.embedding_cache()?);
    let query = theme_query_vector(&mut embedder, &theme.members)?;
    let matches = top_matches(&index, &query, n)?;
    store.save_embedding_cache(embedder.into_cache())?;
    Ok(SearchResult {
        theme_id: theme_id.to_string(),
        corpus: corpus.to_string(),
        provider: index.provider_id,
        matches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub theme_id: String,
    pub corpus: String,
    pub post_id: String,
    pub phrase: String,
    pub rank: usize,
    pub verdict: Verdict,
    #[serde(default)]
    pub reviewer: String,
    #[serde(default)]
    pub reviewed_at: Option<i64>,
    #[serde(default)]
    pub amend: bool,
}

/// Appends a review. `now` fills in a missing timestamp.
pub fn add_review(store: &Store, req: ReviewRequest, now: i64) -> Result<ReviewRecord> {
    store.theme(&req.theme_id)?;
    if req.rank == 0 {
        return Err(invalid("ranks start at 1"));
    }
    let record = ReviewRecord {
        theme_id: req.theme_id,
        corpus: req.corpus,
        post_id: req.post_id,
        phrase: req.phrase,
        rank: req.rank,
        verdict: req.verdict,
        reviewer: req.reviewer,
        reviewed_at: req.reviewed_at.unwrap_or(now),
        amend: req.amend,
    };
    store.append_review(&record)?;
    Ok(record)
}

pub fn theme_counts(store: &Store, theme_id: &str, corpus: &str, window: usize) -> Result<ThemeCounts> {
    if window == 0 {
        return Err(invalid("window must be at least 1"));
    }
    store.theme(theme_id)?;
    Ok(store.replay_reviews()?.counts(theme_id, corpus, window))
}

/// Comparison of a theme between two corpora, with its export row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    #[serde(flatten)]
    pub result: ComparisonResult,
    pub pct1: String,
    pub pct2: String,
    pub partial_a: bool,
    pub partial_b: bool,
    pub significant_at_0_01: bool,
}

impl Comparison {
    pub fn new(result: ComparisonResult, partial_a: bool, partial_b: bool) -> Self {
        Self {
            pct1: result.pct1(),
            pct2: result.pct2(),
            significant_at_0_01: result.significant_at(0.01),
            partial_a,
            partial_b,
            result,
        }
    }

    pub fn row(&self) -> ComparisonRow {
        self.result.row()
    }
}

pub fn compare(store: &Store, theme_id: &str, corpus_a: &str, corpus_b: &str, window: usize) -> Result<Comparison> {
    let theme = store.theme(theme_id)?;
    let a = theme_counts(store, theme_id, corpus_a, window)?;
    let b = theme_counts(store, theme_id, corpus_b, window)?;
    let result = compare_theme(&theme.name, &a, &b)?;
    Ok(Comparison::new(result, a.partial, b.partial))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedPost {
    #[serde(flatten)]
    pub explanation: Explanation,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationPage {
    pub corpus: String,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub items: Vec<ExplainedPost>,
}

/// 1-based page of a corpus's explanation set.
pub fn explanation_page(store: &Store, corpus_name: &str, page: usize, page_size: usize) -> Result<ExplanationPage> {
    if page == 0 || page_size == 0 {
        return Err(invalid("page and page size start at 1"));
    }
    let (items, _) = store.explanations(corpus_name)?;
    let corpus = store.corpus(corpus_name)?;
    let total = items.len();
    let items = items
        .into_iter()
        .skip((page - 1).saturating_mul(page_size))
        .take(page_size)
        .map(|explanation| {
            let text = corpus.get(&explanation.post_id).map(|p| p.text()).unwrap_or_default();
            ExplainedPost { explanation, text }
        })
        .collect();
    Ok(ExplanationPage {
        corpus: corpus_name.to_string(),
        page,
        page_size,
        total,
        items,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPost {
    pub post_id: String,
    pub corpus: String,
    pub format: String,
    pub text: String,
    pub rendered: String,
}

/// A post with its highlighted phrases marked up. Without `corpus`, every
/// explained corpus is searched in name order.
pub fn rendered_post(store: &Store, corpus: Option<&str>, post_id: &str, format: MarkupFormat) -> Result<RenderedPost> {
    let candidates = match corpus {
        Some(c) => vec![c.to_string()],
        None => store.list(Kind::Explanations)?,
    };
    for name in candidates {
        let (items, _) = store.explanations(&name)?;
        if let Some(e) = items.iter().find(|e| e.post_id == post_id) {
            let corpus = store.corpus(&name)?;
            let post = corpus
                .get(post_id)
                .ok_or_else(|| not_found(format!("post {post_id} is not in corpus {name:?}")))?;
            let text = post.text();
            let rendered = render_highlights(&text, e, format)?;
            return Ok(RenderedPost {
                post_id: post_id.to_string(),
                corpus: name,
                format: format_name(format).to_string(),
                text,
                rendered,
            });
        }
    }
    Err(not_found(format!("no explanation for post {post_id}")))
}

pub fn format_name(format: MarkupFormat) -> &'static str {
    match format {
        MarkupFormat::Ansi => "ansi",
        MarkupFormat::Html => "html",
        MarkupFormat::PlainMarkers => "plain",
    }
}

/// Hash of a stored entry's current payload.
pub fn entry_hash(store: &Store, kind: Kind, name: &str) -> Result<String> {
    Ok(content_hash(&store.get(kind, name)?))
}
