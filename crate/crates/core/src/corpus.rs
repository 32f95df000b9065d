//! Post dumps, cohort construction, keyword corpora and labeled datasets.
//!
//! Post records arrive as newline-delimited JSON in the usual Reddit dump
//! layout (`id`, `author`, `subreddit`, `created_utc`, `title`, `selftext`).
//! Corpora are always kept sorted by `(created_at, id)` so that everything
//! downstream is deterministic.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{invalid, Error, Result};
use crate::TOOL_VERSION;

const DAY_SECS: i64 = 24 * 60 * 60;

/// One forum submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub author: String,
    #[serde(rename = "subreddit")]
    pub forum: String,
    #[serde(rename = "created_utc")]
    pub created_at: i64,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "selftext", default)]
    pub body: String,
}

impl Post {
    /// Title and body separated by a blank line. When one of the two is
    /// empty the other is returned on its own.
    pub fn text(&self) -> String {
        match (self.title.is_empty(), self.body.is_empty()) {
            (true, _) => self.body.clone(),
            (false, true) => self.title.clone(),
            (false, false) => format!("{}\n\n{}", self.title, self.body),
        }
    }

    fn has_text(&self) -> bool {
        !self.title.trim().is_empty() || !self.body.trim().is_empty()
    }
}

/// Where a corpus came from and what was done to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub source: String,
    pub records_read: usize,
    pub skipped: usize,
    #[serde(default)]
    pub filters: Vec<String>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub posts: Vec<Post>,
    pub manifest: CorpusManifest,
}

impl Corpus {
    /// Builds a corpus, sorting posts by `(created_at, id)`.
    pub fn new(name: impl Into<String>, mut posts: Vec<Post>, manifest: CorpusManifest) -> Self {
        sort_posts(&mut posts);
        Self {
            name: name.into(),
            posts,
            manifest,
        }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn get(&self, post_id: &str) -> Option<&Post> {
        self.posts.iter().find(|p| p.id == post_id)
    }

    /// Writes the posts back out in the input record format.
    pub fn write_records<W: Write>(&self, mut out: W) -> Result<()> {
        for post in &self.posts {
            serde_json::to_writer(&mut out, post)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_records(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_records(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Labels every post with `label`, e.g. to turn an expanded corpus into
    /// training examples.
    pub fn to_dataset(&self, label: Label, provenance: Provenance) -> Dataset {
        let examples = self
            .posts
            .iter()
            .filter(|p| p.has_text())
            .map(|p| LabeledExample {
                post_id: p.id.clone(),
                author: p.author.clone(),
                text: p.text(),
                label,
                provenance,
            })
            .collect();
        let mut manifest = DatasetManifest::new(format!("corpus:{}", self.name));
        manifest.filters = self.manifest.filters.clone();
        Dataset::new(self.name.clone(), examples, manifest)
    }
}

fn sort_posts(posts: &mut [Post]) {
    posts.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
}

/// Reads newline-delimited post records.
///
/// Records that are not valid JSON, or that lack a usable `id`, `author` or
/// `created_utc`, are skipped and counted in the manifest. Repeated ids keep
/// the first occurrence. Read errors are fatal.
pub fn load_posts<R: BufRead>(name: &str, source: &str, reader: R) -> Result<Corpus> {
    let mut posts = Vec::new();
    let mut seen = HashSet::new();
    let mut records_read = 0;
    let mut skipped = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records_read += 1;
        match parse_record(&line) {
            Some(post) if seen.insert(post.id.clone()) => posts.push(post),
            _ => skipped += 1,
        }
    }
    let manifest = CorpusManifest {
        source: source.to_string(),
        records_read,
        skipped,
        filters: Vec::new(),
        tool_version: TOOL_VERSION.to_string(),
    };
    Ok(Corpus::new(name, posts, manifest))
}

fn parse_record(line: &str) -> Option<Post> {
    let value: Value = serde_json::from_str(line).ok()?;
    let obj = value.as_object()?;
    let text_field = |key: &str| obj.get(key).and_then(Value::as_str).map(str::to_string);
    let id = text_field("id").filter(|s| !s.is_empty())?;
    let author = text_field("author").filter(|s| !s.is_empty())?;
    let created_at = obj.get("created_utc").and_then(timestamp)?;
    if created_at <= 0 {
        return None;
    }
    Some(Post {
        id,
        author,
        forum: text_field("subreddit").unwrap_or_default(),
        created_at,
        title: text_field("title").unwrap_or_default(),
        body: text_field("selftext").unwrap_or_default(),
    })
}

// Dumps are inconsistent about the timestamp type: integers, floats and
// numeric strings all occur.
fn timestamp(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 9e15).map(|f| f as i64)),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Case-insensitive substring filter over `Post::text`.
pub fn filter_keyword(corpus: &Corpus, keyword: &str) -> Result<Corpus> {
    if keyword.is_empty() {
        return Err(invalid("keyword must be non-empty"));
    }
    let needle = keyword.to_lowercase();
    let posts = corpus
        .posts
        .iter()
        .filter(|p| p.text().to_lowercase().contains(&needle))
        .cloned()
        .collect();
    let mut manifest = corpus.manifest.clone();
    manifest.filters.push(format!("keyword:{keyword}"));
    Ok(Corpus::new(corpus.name.clone(), posts, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Manual,
    CohortRule,
    Expanded,
}

/// A post's text with a binary label.
///
/// `author` is carried so that splits can keep each author on one side; it is
/// omitted from the serialized record when empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub post_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub author: String,
    pub text: String,
    pub label: Label,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

/// Sidecar written next to every dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: String,
    pub counts: ClassCounts,
    #[serde(default)]
    pub filters: Vec<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl DatasetManifest {
    pub fn new(source: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            counts: ClassCounts::default(),
            filters: Vec::new(),
            seed: None,
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<LabeledExample>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Wraps `examples`, refreshing the class counts in the manifest.
    pub fn new(name: impl Into<String>, examples: Vec<LabeledExample>, mut manifest: DatasetManifest) -> Self {
        manifest.counts = count_classes(&examples);
        Self {
            name: name.into(),
            examples,
            manifest,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn counts(&self) -> &ClassCounts {
        &self.manifest.counts
    }

    pub fn write_records<W: Write>(&self, mut out: W) -> Result<()> {
        for ex in &self.examples {
            serde_json::to_writer(&mut out, ex)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_records(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_records(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Parses dataset records. Unlike post loading, a bad record is an error:
    /// datasets are produced by this tool and must not silently lose rows.
    pub fn read_records<R: BufRead>(name: &str, reader: R, manifest: DatasetManifest) -> Result<Self> {
        let mut examples = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: LabeledExample = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("dataset line {}: {e}", lineno + 1)))?;
            examples.push(ex);
        }
        Ok(Self::new(name, examples, manifest))
    }
}

fn count_classes(examples: &[LabeledExample]) -> ClassCounts {
    let positive = examples.iter().filter(|e| e.label.is_positive()).count();
    ClassCounts {
        positive,
        negative: examples.len() - positive,
    }
}

/// Attaches manual labels to posts of `corpus`.
pub fn manual_labels<I>(corpus: &Corpus, labels: I) -> Result<Dataset>
where
    I: IntoIterator<Item = (String, Label)>,
{
    let by_id: HashMap<&str, &Post> = corpus.posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut seen = HashSet::new();
    let mut examples = Vec::new();
    for (post_id, label) in labels {
        let post = by_id
            .get(post_id.as_str())
            .ok_or_else(|| Error::NotFound(format!("post {post_id} is not in corpus {}", corpus.name)))?;
        if !seen.insert(post_id.clone()) {
            return Err(Error::Conflict(format!("post {post_id} labeled twice")));
        }
        examples.push(LabeledExample {
            post_id,
            author: post.author.clone(),
            text: post.text(),
            label,
            provenance: Provenance::Manual,
        });
    }
    let mut manifest = DatasetManifest::new(format!("corpus:{}", corpus.name));
    manifest.filters.push("manual-labels".into());
    Ok(Dataset::new(corpus.name.clone(), examples, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub anxiety_forum: String,
    pub adhd_forum: String,
    /// Seconds after an author's first anxiety-forum post during which their
    /// adhd-forum posts are ignored.
    pub exclusion_window: i64,
    /// Posts at or after this timestamp are ignored.
    pub cutoff: i64,
}

impl CohortConfig {
    pub const DEFAULT_WINDOW_DAYS: i64 = 183;

    pub fn new(anxiety_forum: impl Into<String>, adhd_forum: impl Into<String>, cutoff: i64) -> Self {
        Self {
            anxiety_forum: anxiety_forum.into(),
            adhd_forum: adhd_forum.into(),
            exclusion_window: Self::DEFAULT_WINDOW_DAYS * DAY_SECS,
            cutoff,
        }
    }

    pub fn with_window_days(mut self, days: i64) -> Self {
        self.exclusion_window = days * DAY_SECS;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.exclusion_window <= 0 {
            return Err(invalid("exclusion window must be positive"));
        }
        if self.anxiety_forum.eq_ignore_ascii_case(&self.adhd_forum) {
            return Err(invalid("the two cohort forums must differ"));
        }
        Ok(())
    }
}

/// Labels anxiety-forum posts by whether their author later moved on to the
/// adhd forum.
///
/// Per author, with `t0` the first anxiety post:
/// * no adhd posts: every anxiety post is a negative;
/// * adhd posts only inside `(.., t0 + window]`: the author is dropped;
/// * an adhd post before `t0`: the author did not start in the anxiety forum
///   and is dropped;
/// * otherwise the anxiety posts strictly before the first adhd post after the
///   window are positives, later ones are left out.
pub fn build_transition_cohort(corpus: &Corpus, cfg: &CohortConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut by_author: BTreeMap<&str, (Vec<&Post>, Vec<i64>)> = BTreeMap::new();
    for post in corpus.posts.iter().filter(|p| p.created_at < cfg.cutoff) {
        if post.forum.eq_ignore_ascii_case(&cfg.anxiety_forum) {
            by_author.entry(&post.author).or_default().0.push(post);
        } else if post.forum.eq_ignore_ascii_case(&cfg.adhd_forum) {
            by_author.entry(&post.author).or_default().1.push(post.created_at);
        }
    }

    let mut examples = Vec::new();
    let mut dropped_authors = 0usize;
    for (anxiety, adhd) in by_author.values() {
        // corpus order makes anxiety[0] the earliest
        let Some(first) = anxiety.first() else {
            dropped_authors += 1;
            continue;
        };
        let first_anxiety = first.created_at;
        let (label, horizon) = if adhd.is_empty() {
            (Label::Negative, i64::MAX)
        } else if adhd.iter().any(|&t| t < first_anxiety) {
            dropped_authors += 1;
            continue;
        } else {
            match adhd.iter().copied().filter(|&t| t > first_anxiety + cfg.exclusion_window).min() {
                Some(transition) => (Label::Positive, transition),
                None => {
                    dropped_authors += 1;
                    continue;
                }
            }
        };
        examples.extend(
            anxiety
                .iter()
                .filter(|p| p.created_at < horizon && p.has_text())
                .map(|p| LabeledExample {
                    post_id: p.id.clone(),
                    author: p.author.clone(),
                    text: p.text(),
                    label,
                    provenance: Provenance::CohortRule,
                }),
        );
    }
    // back to corpus order
    let order: HashMap<&str, usize> = corpus.posts.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    examples.sort_by_key(|e| order[e.post_id.as_str()]);

    let mut manifest = DatasetManifest::new(format!("corpus:{}", corpus.name));
    manifest.filters.push(format!(
        "cohort:anxiety={},adhd={},window_secs={},cutoff={},dropped_authors={}",
        cfg.anxiety_forum, cfg.adhd_forum, cfg.exclusion_window, cfg.cutoff, dropped_authors
    ));
    Ok(Dataset::new(format!("{}-cohort", corpus.name), examples, manifest))
}

/// Splits into `(train, test)` with every author on exactly one side.
///
/// Authors are shuffled with `seed` and greedily assigned to the test side
/// while their whole group still fits into `floor(test_fraction * N)`; the
/// test side therefore has exactly that size whenever the author group sizes
/// allow it and never exceeds it. Examples without an author count as their
/// own group.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid("test fraction must lie in (0, 1)"));
    }
    if dataset.is_empty() {
        return Err(invalid("cannot split an empty dataset"));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in dataset.examples.iter().enumerate() {
        let key = if ex.author.is_empty() { ex.post_id.as_str() } else { ex.author.as_str() };
        groups.entry(key).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(invalid("an author-grouped split needs at least two authors"));
    }
    let target = (test_fraction * dataset.len() as f64).floor() as usize;
    let mut keys: Vec<&str> = groups.keys().copied().collect();
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut in_test = vec![false; dataset.len()];
    let mut remaining = target;
    for key in keys {
        let members = &groups[key];
        if members.len() <= remaining {
            remaining -= members.len();
            for &i in members {
                in_test[i] = true;
            }
        }
        if remaining == 0 {
            break;
        }
    }
    let test_len = target - remaining;
    if test_len == 0 || test_len == dataset.len() {
        return Err(invalid(format!(
            "test fraction {test_fraction} leaves one side of the split empty"
        )));
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (ex, &t) in dataset.examples.iter().zip(&in_test) {
        if t { &mut test } else { &mut train }.push(ex.clone());
    }
    let side = |suffix: &str, examples| {
        let mut manifest = dataset.manifest.clone();
        manifest.source = format!("dataset:{}", dataset.name);
        manifest.seed = Some(seed);
        manifest
            .filters
            .push(format!("split:{suffix},test_fraction={test_fraction},grouped_by=author"));
        Dataset::new(format!("{}.{suffix}", dataset.name), examples, manifest)
    };
    Ok((side("train", train), side("test", test)))
}

/// Randomly downsamples the majority class so both classes are equally
/// frequent. Surviving examples keep their original relative order.
pub fn balance(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| dataset.examples[i].label.is_positive());
    if pos.is_empty() || neg.is_empty() {
        return Err(invalid("balancing needs both classes present"));
    }
    let mut keep = if pos.len() == neg.len() {
        (0..dataset.len()).collect::<Vec<_>>()
    } else {
        let (minority, majority) = if pos.len() < neg.len() { (pos, neg) } else { (neg, pos) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen = index::sample(&mut rng, majority.len(), minority.len());
        let mut keep = minority;
        keep.extend(chosen.iter().map(|j| majority[j]));
        keep
    };
    keep.sort_unstable();
    let examples = keep.into_iter().map(|i| dataset.examples[i].clone()).collect();
    let mut manifest = dataset.manifest.clone();
    manifest.source = format!("dataset:{}", dataset.name);
    manifest.seed = Some(seed);
    manifest.filters.push("balance:downsample-majority".into());
    Ok(Dataset::new(format!("{}.balanced", dataset.name), examples, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, author: &str, forum: &str, t: i64) -> Post {
        Post {
            id: id.into(),
            author: author.into(),
            forum: forum.into(),
            created_at: t,
            title: format!("title {id}"),
            body: "body".into(),
        }
    }

    fn example(id: &str, author: &str, label: Label) -> LabeledExample {
        LabeledExample {
            post_id: id.into(),
            author: author.into(),
            text: format!("text {id}"),
            label,
            provenance: Provenance::Manual,
        }
    }

    fn dataset(examples: Vec<LabeledExample>) -> Dataset {
        Dataset::new("d", examples, DatasetManifest::new("test"))
    }

    #[test]
    fn loads_well_formed_records() {
        let input = r#"{"id":"a","author":"u1","subreddit":"Lyme","created_utc":3,"title":"t","selftext":"b"}
{"id":"b","author":"u2","subreddit":"Lyme","created_utc":1,"title":"t","selftext":"b"}
{"id":"c","author":"u3","subreddit":"Lyme","created_utc":2,"title":"t","selftext":"b"}
"#;
        let c = load_posts("x", "mem", input.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.manifest.skipped, 0);
        let ids: Vec<_> = c.posts.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
    }

    #[test]
    fn skips_record_missing_author() {
        let input = r#"{"id":"a","author":"u1","subreddit":"s","created_utc":1,"title":"t","selftext":""}
{"id":"b","subreddit":"s","created_utc":1,"title":"t","selftext":""}
{"id":"c","author":"u3","subreddit":"s","created_utc":1,"title":"t","selftext":""}
not json at all
"#;
        let c = load_posts("x", "mem", input.as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.manifest.skipped, 2);
        assert_eq!(c.manifest.records_read, 4);
    }

    #[test]
    fn equal_timestamps_order_by_id() {
        let input = r#"{"id":"z","author":"u","subreddit":"s","created_utc":5}
{"id":"m","author":"u","subreddit":"s","created_utc":5}
{"id":"a","author":"u","subreddit":"s","created_utc":5}
"#;
        let c = load_posts("x", "mem", input.as_bytes()).unwrap();
        let ids: Vec<_> = c.posts.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["a", "m", "z"]);
    }

    #[test]
    fn accepts_float_and_string_timestamps() {
        let input = r#"{"id":"a","author":"u","subreddit":"s","created_utc":1600000000.0}
{"id":"b","author":"u","subreddit":"s","created_utc":"1600000001"}
{"id":"c","author":"u","subreddit":"s","created_utc":0}
{"id":"d","author":"u","subreddit":"s","created_utc":1.5}
"#;
        let c = load_posts("x", "mem", input.as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.manifest.skipped, 2);
    }

    #[test]
    fn duplicate_ids_keep_first() {
        let input = r#"{"id":"a","author":"u","subreddit":"s","created_utc":1,"title":"first"}
{"id":"a","author":"v","subreddit":"s","created_utc":2,"title":"second"}
"#;
        let c = load_posts("x", "mem", input.as_bytes()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.posts[0].title, "first");
        assert_eq!(c.manifest.skipped, 1);
    }

    #[test]
    fn post_text_joins_title_and_body() {
        let mut p = post("a", "u", "s", 1);
        assert_eq!(p.text(), "title a\n\nbody");
        p.title.clear();
        assert_eq!(p.text(), "body");
    }

    #[test]
    fn keyword_filter_is_case_insensitive_substring() {
        let mut posts = vec![post("1", "u", "s", 1), post("2", "u", "s", 2), post("3", "u", "s", 3)];
        posts[0].body = "Lyme disease ruined my summer".into();
        posts[1].body = "limes are sour".into();
        posts[2].body = "chlamydia test".into();
        for p in &mut posts {
            p.title.clear();
        }
        let c = Corpus::new("c", posts, CorpusManifest::default());
        let f = filter_keyword(&c, "lyme").unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.posts[0].id, "1");
        assert_eq!(f.manifest.filters, ["keyword:lyme"]);
        assert!(filter_keyword(&c, "").is_err());
    }

    #[test]
    fn cohort_three_author_fixture() {
        let t0 = 1_600_000_000;
        let day = DAY_SECS;
        let posts = vec![
            post("a1", "A", "Anxiety", t0),
            post("a2", "A", "Anxiety", t0 + 10 * day),
            post("b1", "B", "Anxiety", t0),
            post("b2", "B", "Anxiety", t0 + 100 * day),
            post("b3", "B", "ADHD", t0 + 200 * day),
            post("b4", "B", "Anxiety", t0 + 250 * day),
            post("c1", "C", "Anxiety", t0),
            post("c2", "C", "ADHD", t0 + 90 * day),
        ];
        let c = Corpus::new("c", posts, CorpusManifest::default());
        let cfg = CohortConfig::new("Anxiety", "ADHD", i64::MAX);
        let d = build_transition_cohort(&c, &cfg).unwrap();
        let got: Vec<(&str, Label)> = d.examples.iter().map(|e| (e.post_id.as_str(), e.label)).collect();
        assert_eq!(
            got,
            [
                ("a1", Label::Negative),
                ("b1", Label::Positive),
                ("a2", Label::Negative),
                ("b2", Label::Positive),
            ]
        );
        assert!(d.examples.iter().all(|e| e.provenance == Provenance::CohortRule));
    }

    #[test]
    fn cohort_drops_adhd_only_and_adhd_first_authors() {
        let t0 = 1_600_000_000;
        let posts = vec![
            post("d1", "D", "ADHD", t0),
            post("e1", "E", "ADHD", t0),
            post("e2", "E", "Anxiety", t0 + 10),
            post("e3", "E", "ADHD", t0 + 400 * DAY_SECS),
        ];
        let c = Corpus::new("c", posts, CorpusManifest::default());
        let d = build_transition_cohort(&c, &CohortConfig::new("Anxiety", "ADHD", i64::MAX)).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn cohort_on_empty_corpus_is_empty() {
        let c = Corpus::new("c", vec![], CorpusManifest::default());
        let d = build_transition_cohort(&c, &CohortConfig::new("Anxiety", "ADHD", i64::MAX)).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn cohort_honours_cutoff_and_window_boundary() {
        let t0 = 1_600_000_000;
        let w = 183 * DAY_SECS;
        let posts = vec![
            post("b1", "B", "Anxiety", t0),
            // exactly at the window edge counts as inside
            post("b2", "B", "ADHD", t0 + w),
            post("c1", "C", "Anxiety", t0),
            post("c2", "C", "ADHD", t0 + w + 1),
            post("c3", "C", "Anxiety", t0 + 2 * w),
        ];
        let c = Corpus::new("c", posts, CorpusManifest::default());
        let d = build_transition_cohort(&c, &CohortConfig::new("anxiety", "adhd", t0 + w + 1)).unwrap();
        // with the cutoff, C's adhd post is invisible so C is a negative
        let got: Vec<_> = d.examples.iter().map(|e| (e.post_id.as_str(), e.label)).collect();
        assert_eq!(got, [("c1", Label::Negative)]);
    }

    #[test]
    fn split_single_author_examples() {
        let exs = (0..100).map(|i| example(&format!("p{i:03}"), &format!("u{i}"), Label::from_bool(i % 2 == 0))).collect();
        let d = dataset(exs);
        let (train, test) = split(&d, 0.2, 7).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        let train_authors: HashSet<_> = train.examples.iter().map(|e| &e.author).collect();
        assert!(test.examples.iter().all(|e| !train_authors.contains(&e.author)));
        let again = split(&d, 0.2, 7).unwrap();
        assert_eq!(again.0.examples, train.examples);
        assert_eq!(again.1.examples, test.examples);
        assert_eq!(test.manifest.seed, Some(7));
    }

    #[test]
    fn split_one_author_is_an_error() {
        let exs = (0..10).map(|i| example(&format!("p{i}"), "solo", Label::Positive)).collect();
        assert!(split(&dataset(exs), 0.2, 1).is_err());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let exs = (0..10).map(|i| example(&format!("p{i}"), &format!("u{i}"), Label::Positive)).collect();
        let d = dataset(exs);
        assert!(split(&d, 0.0, 1).is_err());
        assert!(split(&d, 1.0, 1).is_err());
        assert!(split(&d, f64::NAN, 1).is_err());
    }

    #[test]
    fn balance_downsamples_majority() {
        let mut exs: Vec<_> = (0..10).map(|i| example(&format!("p{i}"), "u", Label::Positive)).collect();
        exs.extend((0..30).map(|i| example(&format!("n{i}"), "u", Label::Negative)));
        let b = balance(&dataset(exs), 3).unwrap();
        assert_eq!(b.counts(), &ClassCounts { positive: 10, negative: 10 });
    }

    #[test]
    fn balance_keeps_balanced_input() {
        let mut exs: Vec<_> = (0..5).map(|i| example(&format!("p{i}"), "u", Label::Positive)).collect();
        exs.extend((0..5).map(|i| example(&format!("n{i}"), "u", Label::Negative)));
        let d = dataset(exs);
        assert_eq!(balance(&d, 9).unwrap().examples, d.examples);
    }

    #[test]
    fn balance_single_class_is_an_error() {
        let exs = (0..30).map(|i| example(&format!("n{i}"), "u", Label::Negative)).collect();
        assert!(balance(&dataset(exs), 1).is_err());
    }

    #[test]
    fn manual_labels_resolve_posts() {
        let c = Corpus::new("c", vec![post("a", "u", "Lyme", 1), post("b", "v", "Lyme", 2)], CorpusManifest::default());
        let d = manual_labels(&c, [("b".to_string(), Label::Positive)]).unwrap();
        assert_eq!(d.examples[0].author, "v");
        assert_eq!(d.examples[0].provenance, Provenance::Manual);
        assert!(matches!(manual_labels(&c, [("zz".to_string(), Label::Positive)]), Err(Error::NotFound(_))));
        let twice = [("a".to_string(), Label::Positive), ("a".to_string(), Label::Negative)];
        assert!(matches!(manual_labels(&c, twice), Err(Error::Conflict(_))));
    }

    #[test]
    fn dataset_records_round_trip() {
        let d = dataset(vec![example("a", "u", Label::Positive), example("b", "", Label::Negative)]);
        let bytes = d.to_records();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with(r#"{"post_id":"b","text":"text b","label":0,"provenance":"manual"}"#));
        let back = Dataset::read_records("d", bytes.as_slice(), d.manifest.clone()).unwrap();
        assert_eq!(back, d);
        assert!(Dataset::read_records("d", &br#"{"post_id":"a","text":"t","label":2,"provenance":"manual"}"#[..], d.manifest.clone()).is_err());
    }
}
