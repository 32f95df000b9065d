//! Phrase-occlusion explanations.
//!
//! A post is cut into phrases at punctuation, each phrase is deleted in turn,
//! and the drop in the classifier's positive-class score is that phrase's
//! influence. The phrases with the largest influence are highlighted.

use serde::{Deserialize, Serialize};

use crate::classify::Classifier;
use crate::error::{invalid, Result};

pub const DEFAULT_DELIMITERS: &[char] = &['.', ',', ';', ':', '!', '?', '…', '\n'];

/// One punctuation-bounded fragment of a text.
///
/// `start` and `end` are character (Unicode scalar) offsets of `text` in the
/// original string. `separator` is the punctuation run that follows, together
/// with the whitespace around it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrase {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub separator: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmenter {
    delimiters: Vec<char>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Self::new(DEFAULT_DELIMITERS)
    }
}

impl Segmenter {
    pub fn new(delimiters: &[char]) -> Self {
        Self {
            delimiters: delimiters.to_vec(),
        }
    }

    pub fn delimiters(&self) -> &[char] {
        &self.delimiters
    }

    fn is_delim(&self, c: char) -> bool {
        self.delimiters.contains(&c)
    }

    /// Splits `text` into phrases.
    ///
    /// A separator is a maximal run of delimiter and whitespace characters
    /// that contains at least one delimiter. Text before a leading separator
    /// is empty, so that separator is folded into the first phrase. A text
    /// with no content outside separators yields a single phrase with empty
    /// `text`. Concatenating `text + separator` over the result always gives
    /// back the input.
    pub fn segment(&self, text: &str) -> Vec<Phrase> {
        if text.is_empty() {
            return Vec::new();
        }
        // byte ranges of the delimiter/whitespace runs that contain a delimiter
        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut run: Option<(usize, bool)> = None;
        for (i, c) in text.char_indices() {
            let delim = self.is_delim(c);
            if delim || c.is_whitespace() {
                let r = run.get_or_insert((i, false));
                r.1 |= delim;
            } else if let Some((start, has_delim)) = run.take() {
                if has_delim {
                    runs.push((start, i));
                }
            }
        }
        if let Some((start, true)) = run {
            runs.push((start, text.len()));
        }

        if runs.first() == Some(&(0, text.len())) {
            return vec![Phrase {
                index: 0,
                start: 0,
                end: 0,
                text: String::new(),
                separator: text.to_string(),
            }];
        }
        // (text start, text end = separator start, separator end)
        let mut out: Vec<(usize, usize, usize)> = Vec::new();
        let mut frag_start = 0;
        for (sep_start, sep_end) in runs {
            if sep_start == 0 {
                // leading separator; the next fragment absorbs it
                continue;
            }
            out.push((frag_start, sep_start, sep_end));
            frag_start = sep_end;
        }
        if frag_start < text.len() {
            out.push((frag_start, text.len(), text.len()));
        }

        let mut chars_before = 0;
        let mut last_byte = 0;
        let mut char_offset = |byte: usize| {
            chars_before += text[last_byte..byte].chars().count();
            last_byte = byte;
            chars_before
        };
        out.into_iter()
            .enumerate()
            .map(|(index, (a, b, c))| Phrase {
                index,
                start: char_offset(a),
                end: char_offset(b),
                text: text[a..b].to_string(),
                separator: text[b..c].to_string(),
            })
            .collect()
    }
}

/// [`Segmenter::segment`] with the default delimiter set.
pub fn segment_phrases(text: &str) -> Vec<Phrase> {
    Segmenter::default().segment(text)
}

/// Deletes phrase `i` from `text`, keeping its separator and every other byte.
pub fn mask_phrase(text: &str, phrases: &[Phrase], i: usize) -> Result<String> {
    if i >= phrases.len() {
        return Err(invalid(format!("phrase index {i} out of range ({} phrases)", phrases.len())));
    }
    let total: usize = phrases.iter().map(|p| p.text.len() + p.separator.len()).sum();
    if total != text.len() {
        return Err(invalid("phrases were not segmented from this text"));
    }
    let mut out = String::with_capacity(text.len() - phrases[i].text.len());
    for p in phrases {
        if p.index != i {
            out.push_str(&p.text);
        }
        out.push_str(&p.separator);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighlightPolicy {
    pub k: usize,
    pub min_influence: f64,
}

impl Default for HighlightPolicy {
    fn default() -> Self {
        Self {
            k: 5,
            min_influence: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhraseInfluence {
    pub start: usize,
    pub end: usize,
    pub influence: f64,
}

/// Influence of every phrase of one post, plus the highlighted subset.
///
/// `phrases[i].influence` is the base score minus the score with phrase `i`
/// deleted; positive values mean the phrase pushes toward the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub post_id: String,
    pub base_score: f64,
    pub phrases: Vec<PhraseInfluence>,
    pub highlighted: Vec<usize>,
    /// Description of the segmentation, masking and selection rules. Kept out
    /// of the per-post export; explanation sets record it once.
    #[serde(skip)]
    pub policy: String,
}

impl Explanation {
    pub fn influences(&self) -> impl Iterator<Item = f64> + '_ {
        self.phrases.iter().map(|p| p.influence)
    }
}

/// Configures [`explain`].
#[derive(Debug, Clone, Default)]
pub struct Explainer {
    pub segmenter: Segmenter,
    pub policy: HighlightPolicy,
}

impl Explainer {
    pub fn new(policy: HighlightPolicy) -> Self {
        Self {
            segmenter: Segmenter::default(),
            policy,
        }
    }

    pub fn describe(&self) -> String {
        let delims: String = self
            .segmenter
            .delimiters
            .iter()
            .map(|c| c.escape_default().to_string())
            .collect();
        format!(
            "mask=deletion;delimiters={delims};top_k={};min_influence={}",
            self.policy.k, self.policy.min_influence
        )
    }

    pub fn explain(&self, classifier: &dyn Classifier, post_id: &str, text: &str) -> Result<Explanation> {
        let phrases = self.segmenter.segment(text);
        let base_score = classifier.score(text);
        let masked = (0..phrases.len())
            .map(|i| mask_phrase(text, &phrases, i))
            .collect::<Result<Vec<_>>>()?;
        let scores = classifier.score_batch(&masked);
        let phrases = phrases
            .iter()
            .zip(scores)
            .map(|(p, s)| PhraseInfluence {
                start: p.start,
                end: p.end,
                influence: base_score - s,
            })
            .collect();
        let mut explanation = Explanation {
            post_id: post_id.to_string(),
            base_score,
            phrases,
            highlighted: Vec::new(),
            policy: self.describe(),
        };
        explanation.highlighted = select_highlights(&explanation, &self.policy)?;
        Ok(explanation)
    }
}

/// Explains with the default segmenter and highlight policy.
pub fn explain(classifier: &dyn Classifier, post_id: &str, text: &str) -> Result<Explanation> {
    Explainer::default().explain(classifier, post_id, text)
}

/// Up to `k` phrase indices with the largest influence, among those with
/// influence at least `min_influence`; ties go to the smaller index. The
/// result is sorted ascending.
pub fn select_highlights(explanation: &Explanation, policy: &HighlightPolicy) -> Result<Vec<usize>> {
    if policy.k == 0 {
        return Err(invalid("highlight policy needs k >= 1"));
    }
    let mut ranked: Vec<(usize, f64)> = explanation
        .influences()
        .enumerate()
        .filter(|&(_, v)| v >= policy.min_influence)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = ranked.into_iter().take(policy.k).map(|(i, _)| i).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkupFormat {
    Ansi,
    Html,
    PlainMarkers,
}

impl std::str::FromStr for MarkupFormat {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ansi" => Ok(Self::Ansi),
            "html" => Ok(Self::Html),
            "plain" | "plain-markers" => Ok(Self::PlainMarkers),
            other => Err(invalid(format!("unknown markup format {other:?}"))),
        }
    }
}

const ANSI_ON: &str = "\x1b[1;31m";
const ANSI_OFF: &str = "\x1b[0m";

fn escape_into(out: &mut String, s: &str, format: MarkupFormat) {
    match format {
        MarkupFormat::Ansi => out.push_str(s),
        MarkupFormat::Html => {
            for c in s.chars() {
                match c {
                    '&' => out.push_str("&amp;"),
                    '<' => out.push_str("&lt;"),
                    '>' => out.push_str("&gt;"),
                    '"' => out.push_str("&quot;"),
                    c => out.push(c),
                }
            }
        }
        MarkupFormat::PlainMarkers => {
            for c in s.chars() {
                if matches!(c, '«' | '»' | '\\') {
                    out.push('\\');
                }
                out.push(c);
            }
        }
    }
}

/// Wraps each highlighted phrase of `text` in format-specific markers.
///
/// HTML output escapes the text and uses `<mark>`; plain markers use `«…»`
/// with backslash escapes. [`strip_markup`] inverts both exactly. ANSI output
/// is inverted exactly as long as `text` has no escape characters of its own.
pub fn render_highlights(text: &str, explanation: &Explanation, format: MarkupFormat) -> Result<String> {
    let bounds: Vec<usize> = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len())).collect();
    let byte_at = |c: usize| {
        bounds
            .get(c)
            .copied()
            .ok_or_else(|| invalid("explanation offsets exceed the text"))
    };
    let mut out = String::with_capacity(text.len() + 16 * explanation.highlighted.len());
    let mut pos = 0;
    for &i in &explanation.highlighted {
        let phrase = explanation
            .phrases
            .get(i)
            .ok_or_else(|| invalid(format!("highlighted index {i} has no phrase")))?;
        let (a, b) = (byte_at(phrase.start)?, byte_at(phrase.end)?);
        if a < pos || b < a {
            return Err(invalid("highlighted phrases overlap or are out of order"));
        }
        escape_into(&mut out, &text[pos..a], format);
        let (open, close) = match format {
            MarkupFormat::Ansi => (ANSI_ON, ANSI_OFF),
            MarkupFormat::Html => ("<mark>", "</mark>"),
            MarkupFormat::PlainMarkers => ("«", "»"),
        };
        out.push_str(open);
        escape_into(&mut out, &text[a..b], format);
        out.push_str(close);
        pos = b;
    }
    escape_into(&mut out, &text[pos..], format);
    Ok(out)
}

/// Removes the markup added by [`render_highlights`].
pub fn strip_markup(rendered: &str, format: MarkupFormat) -> String {
    match format {
        MarkupFormat::Ansi => rendered.replace(ANSI_ON, "").replace(ANSI_OFF, ""),
        MarkupFormat::Html => {
            let mut out = String::with_capacity(rendered.len());
            let mut rest = rendered;
            while let Some(i) = rest.find(['<', '&']) {
                out.push_str(&rest[..i]);
                rest = &rest[i..];
                if rest.starts_with('<') {
                    rest = rest.find('>').map_or("", |j| &rest[j + 1..]);
                } else {
                    let entity = [("&amp;", '&'), ("&lt;", '<'), ("&gt;", '>'), ("&quot;", '"')]
                        .into_iter()
                        .find(|(e, _)| rest.starts_with(e));
                    match entity {
                        Some((e, c)) => {
                            out.push(c);
                            rest = &rest[e.len()..];
                        }
                        None => {
                            out.push('&');
                            rest = &rest[1..];
                        }
                    }
                }
            }
            out.push_str(rest);
            out
        }
        MarkupFormat::PlainMarkers => {
            let mut out = String::with_capacity(rendered.len());
            let mut chars = rendered.chars();
            while let Some(c) = chars.next() {
                match c {
                    '\\' => out.extend(chars.next()),
                    '«' | '»' => {}
                    c => out.push(c),
                }
            }
            out
        }
    }
}
