use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::content_hash;
use crate::error::{invalid, Error, Result};

/// Turns texts into fixed-length vectors.
///
/// Providers may return vectors of any scale; [`Embedder`] normalizes them.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    /// One vector per input text, in order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Deterministic offline provider: each text maps to a Gaussian vector drawn
/// from a generator seeded by the text's SHA-256.
#[derive(Debug, Clone)]
pub struct HashProvider {
    id: String,
    dimension: usize,
}

impl HashProvider {
    pub fn new(dimension: usize) -> Self {
        Self {
            id: format!("hash-{dimension}"),
            dimension,
        }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let digest = content_hash(text.as_bytes());
        let seed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.dimension).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

impl EmbeddingProvider for HashProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Scales `v` to unit length; `None` for zero or non-finite vectors.
pub fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    provider: String,
    hash: String,
    vector: Vec<f64>,
}

/// Unit vectors keyed by `(provider id, content hash)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingCache {
    entries: HashMap<(String, String), Vec<f64>>,
}

impl EmbeddingCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, provider: &str, text: &str) -> Option<&Vec<f64>> {
        self.entries.get(&(provider.to_string(), content_hash(text.as_bytes())))
    }

    fn insert(&mut self, provider: &str, hash: String, v: Vec<f64>) {
        self.entries.insert((provider.to_string(), hash), v);
    }

    /// Adds every entry of `other`; existing keys keep their vectors.
    pub fn merge(&mut self, other: EmbeddingCache) {
        for (k, v) in other.entries {
            self.entries.entry(k).or_insert(v);
        }
    }

    /// Newline-delimited dump, sorted by key so the bytes are stable.
    pub fn write_lines<W: Write>(&self, mut out: W) -> Result<()> {
        let mut keys: Vec<_> = self.entries.keys().collect();
        keys.sort();
        for key in keys {
            let line = CacheLine {
                provider: key.0.clone(),
                hash: key.1.clone(),
                vector: self.entries[key].clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a dump; an incomplete trailing line is ignored.
    pub fn read_lines<R: BufRead>(reader: R) -> Result<Self> {
        let mut cache = Self::default();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheLine>(&line) {
                Ok(l) => cache.insert(&l.provider, l.hash, l.vector),
                Err(e) if e.is_eof() => break,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(cache)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub sleep: fn(Duration),
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(250),
            sleep: std::thread::sleep,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            sleep: |_| {},
        }
    }
}

/// Provider access through a cache, in batches, with retries.
pub struct Embedder<'a> {
    provider: &'a dyn EmbeddingProvider,
    cache: EmbeddingCache,
    retry: RetryPolicy,
    batch_size: usize,
    calls: usize,
}

impl<'a> Embedder<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider, cache: EmbeddingCache) -> Self {
        Self {
            provider,
            cache,
            retry: RetryPolicy::default(),
            batch_size: 64,
            calls: 0,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn dimension(&self) -> usize {
        self.provider.dimension()
    }

    /// Number of provider requests issued, retries included.
    pub fn provider_calls(&self) -> usize {
        self.calls
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn into_cache(self) -> EmbeddingCache {
        self.cache
    }

    /// Unit vectors for `texts`. Cache misses are fetched in batches; each
    /// successful batch is cached at once, so a failure keeps earlier work.
    pub fn embed(&mut self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let provider_id = self.provider.id().to_string();
        if self.provider.dimension() == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        let hashes: Vec<String> = texts.iter().map(|t| content_hash(t.as_bytes())).collect();
        let mut missing: Vec<(String, String)> = Vec::new();
        let mut queued = std::collections::HashSet::new();
        for (t, h) in texts.iter().zip(&hashes) {
            let key = (provider_id.clone(), h.clone());
            if !self.cache.entries.contains_key(&key) && queued.insert(h.clone()) {
                missing.push((t.clone(), h.clone()));
            }
        }
        for chunk in missing.chunks(self.batch_size) {
            let batch: Vec<String> = chunk.iter().map(|(t, _)| t.clone()).collect();
            let vectors = self.fetch(&batch)?;
            for ((_, hash), v) in chunk.iter().zip(vectors) {
                self.cache.insert(&provider_id, hash.clone(), v);
            }
        }
        Ok(hashes
            .into_iter()
            .map(|h| self.cache.entries[&(provider_id.clone(), h)].clone())
            .collect())
    }

    pub fn embed_one(&mut self, text: &str) -> Result<Vec<f64>> {
        Ok(self.embed(&[text.to_string()])?.remove(0))
    }

    fn fetch(&mut self, batch: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut attempt = 0;
        loop {
            self.calls += 1;
            let err = match self.provider.embed(batch) {
                Ok(vectors) => match self.check(batch.len(), vectors) {
                    Ok(v) => return Ok(v),
                    Err(e) => e,
                },
                Err(e) => e,
            };
            attempt += 1;
            if attempt >= self.retry.max_attempts {
                return Err(Error::Provider(format!(
                    "{} failed after {attempt} attempts: {err}",
                    self.provider.id()
                )));
            }
            (self.retry.sleep)(self.retry.base_delay * 2u32.saturating_pow(attempt - 1));
        }
    }

    fn check(&self, expected: usize, vectors: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
        if vectors.len() != expected {
            return Err(Error::Provider(format!("expected {expected} vectors, got {}", vectors.len())));
        }
        let dim = self.provider.dimension();
        vectors
            .iter()
            .map(|v| {
                if v.len() != dim {
                    return Err(Error::Provider(format!("expected dimension {dim}, got {}", v.len())));
                }
                normalize(v).ok_or_else(|| Error::Provider("provider returned a zero or non-finite vector".into()))
            })
            .collect()
    }
}
