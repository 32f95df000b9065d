use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::provider::Embedder;
use crate::corpus::Corpus;
use crate::error::{invalid, Error, Result};
use crate::explain::{Explanation, Segmenter};

const MAGIC: &[u8; 4] = b"MBIX";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub post_id: String,
    pub phrase: String,
    pub vector: Vec<f64>,
}

/// Unit-norm phrase embeddings for one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseIndex {
    pub corpus: String,
    pub provider_id: String,
    pub dimension: usize,
    pub entries: Vec<IndexEntry>,
}

/// Which phrases of a corpus go into an index.
pub enum IndexSource<'a> {
    /// The highlighted phrases of these explanations.
    Highlights(&'a [Explanation]),
    /// Every phrase of every post.
    AllPhrases(&'a Segmenter),
}

fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    let mut bounds = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let a = bounds.nth(start)?;
    let b = if end == start { a } else { bounds.nth(end - start - 1)? };
    Some(&text[a..b])
}

/// Embeds the selected phrases of `corpus`.
///
/// Phrases are trimmed, empty ones are skipped and `(post_id, phrase)` pairs
/// are deduplicated. Only cache misses reach the provider.
pub fn build_index(embedder: &mut Embedder<'_>, corpus: &Corpus, source: IndexSource<'_>) -> Result<PhraseIndex> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |post_id: &str, phrase: &str| {
        let phrase = phrase.trim();
        if !phrase.is_empty() && seen.insert((post_id.to_string(), phrase.to_string())) {
            pairs.push((post_id.to_string(), phrase.to_string()));
        }
    };
    match source {
        IndexSource::AllPhrases(segmenter) => {
            for post in &corpus.posts {
                for p in segmenter.segment(&post.text()) {
                    push(&post.id, &p.text);
                }
            }
        }
        IndexSource::Highlights(explanations) => {
            let texts: HashMap<&str, String> = corpus.posts.iter().map(|p| (p.id.as_str(), p.text())).collect();
            for e in explanations {
                let text = texts
                    .get(e.post_id.as_str())
                    .ok_or_else(|| Error::NotFound(format!("post {} is not in corpus {}", e.post_id, corpus.name)))?;
                for &i in &e.highlighted {
                    let phrase = e
                        .phrases
                        .get(i)
                        .and_then(|p| char_slice(text, p.start, p.end))
                        .ok_or_else(|| invalid(format!("explanation for {} does not match its post", e.post_id)))?;
                    push(&e.post_id, phrase);
                }
            }
        }
    }
    let texts: Vec<String> = pairs.iter().map(|(_, p)| p.clone()).collect();
    let vectors = embedder.embed(&texts)?;
    Ok(PhraseIndex {
        corpus: corpus.name.clone(),
        provider_id: embedder.provider_id().to_string(),
        dimension: embedder.dimension(),
        entries: pairs
            .into_iter()
            .zip(vectors)
            .map(|((post_id, phrase), vector)| IndexEntry { post_id, phrase, vector })
            .collect(),
    })
}

fn put_str<W: Write>(out: &mut W, s: &str) -> std::io::Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated index file: {e}")))?;
    Ok(buf)
}

fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let len = u32::from_le_bytes(read_exact(r)?) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated index file: {e}")))?;
    String::from_utf8(buf).map_err(|_| Error::Format("index string is not UTF-8".into()))
}

impl PhraseIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Binary layout, little endian:
    /// `"MBIX" | version u32 | dimension u32 | count u64 | corpus str | provider str`
    /// followed by `count` rows of `post_id str | phrase str | dimension × f64`,
    /// where `str` is a u32 byte length and UTF-8 bytes.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.dimension as u32).to_le_bytes())?;
        out.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        put_str(&mut out, &self.corpus)?;
        put_str(&mut out, &self.provider_id)?;
        for e in &self.entries {
            put_str(&mut out, &e.post_id)?;
            put_str(&mut out, &e.phrase)?;
            for x in &e.vector {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        if &read_exact::<4, _>(&mut r)? != MAGIC {
            return Err(Error::Format("not a phrase index file".into()));
        }
        let version = u32::from_le_bytes(read_exact(&mut r)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported index version {version}")));
        }
        let dimension = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        let count = u64::from_le_bytes(read_exact(&mut r)?) as usize;
        let corpus = get_str(&mut r)?;
        let provider_id = get_str(&mut r)?;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let post_id = get_str(&mut r)?;
            let phrase = get_str(&mut r)?;
            let vector = (0..dimension)
                .map(|_| read_exact(&mut r).map(f64::from_le_bytes))
                .collect::<Result<_>>()?;
            entries.push(IndexEntry { post_id, phrase, vector });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after index rows".into()));
        }
        Ok(Self {
            corpus,
            provider_id,
            dimension,
            entries,
        })
    }
}
