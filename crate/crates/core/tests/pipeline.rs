//! The library used end to end, the way the command-line driver strings it
//! together, on a small in-memory forum dump.

use std::io::BufReader;

use maskboard_core::classify::{classify_corpus, evaluate, expand_dataset, train, Backend, BackendSpec};
use maskboard_core::corpus::{build_transition_cohort, load_posts, split, CohortConfig, Label, Provenance};
use maskboard_core::explain::{render_highlights, strip_markup, Explainer, MarkupFormat};
use maskboard_core::explore::{
    build_index, record_review, top_matches, Embedder, EmbeddingCache, HashProvider, IndexSource, PhraseIndex,
    ReviewState, Theme, Verdict,
};
use maskboard_core::stats::compare_theme;

const DAY: i64 = 86_400;

fn dump() -> String {
    let mut lines = Vec::new();
    let t0 = 1_500_000_000;
    for a in 0..12 {
        let author = format!("u{a}");
        let transitions = a % 2 == 0;
        for j in 0..3 {
            let body = if transitions {
                ["I cannot focus at all.", "Forgot my keys again, so restless.", "Started ten tasks, finished none."][j]
            } else {
                ["My heart races at night.", "Worried about the exam.", "Breathing exercises help a bit."][j]
            };
            lines.push(format!(
                r#"{{"id":"{author}-{j}","author":"{author}","subreddit":"Anxiety","created_utc":{},"selftext":"{body}"}}"#,
                t0 + a * 1000 + j as i64 * 30 * DAY
            ));
        }
        if transitions {
            lines.push(format!(
                r#"{{"id":"{author}-x","author":"{author}","subreddit":"ADHD","created_utc":{},"selftext":"Diagnosed at last."}}"#,
                t0 + 300 * DAY
            ));
        }
    }
    lines.push("not json".into());
    lines.join("\n")
}

#[test]
fn ingest_to_comparison() {
    let corpus = load_posts("forum", "inline", BufReader::new(dump().as_bytes())).unwrap();
    assert_eq!((corpus.len(), corpus.manifest.skipped), (42, 1));

    let cohort = build_transition_cohort(&corpus, &CohortConfig::new("Anxiety", "ADHD", i64::MAX)).unwrap();
    assert_eq!((cohort.counts().positive, cohort.counts().negative), (18, 18));
    assert!(cohort.examples.iter().all(|e| e.provenance == Provenance::CohortRule));

    let (train_set, test_set) = split(&cohort, 0.25, 4).unwrap();
    let train_authors: Vec<&str> = train_set.examples.iter().map(|e| e.author.as_str()).collect();
    assert!(test_set.examples.iter().all(|e| !train_authors.contains(&e.author.as_str())));

    let model = train(&BackendSpec::new(Backend::Linear), &train_set, 0).unwrap();
    assert_eq!(evaluate(&model, &test_set).unwrap().accuracy, 1.0);

    let predictions = classify_corpus(&model, &corpus, 0.5, 7).unwrap();
    assert_eq!(predictions.len(), corpus.len());
    let expanded = expand_dataset(&model, &corpus, 0.5).unwrap();
    let as_dataset = expanded.to_dataset(Label::Positive, Provenance::Expanded);
    assert!(as_dataset.examples.iter().all(|e| e.provenance == Provenance::Expanded));

    let explainer = Explainer::default();
    let explanations: Vec<_> = corpus
        .posts
        .iter()
        .map(|p| explainer.explain(&model, &p.id, &p.text()).unwrap())
        .collect();
    for (p, e) in corpus.posts.iter().zip(&explanations) {
        let html = render_highlights(&p.text(), e, MarkupFormat::Html).unwrap();
        assert_eq!(strip_markup(&html, MarkupFormat::Html), p.text());
    }

    let provider = HashProvider::new(32);
    let mut embedder = Embedder::new(&provider, EmbeddingCache::default());
    let index = build_index(&mut embedder, &corpus, IndexSource::Highlights(&explanations)).unwrap();
    assert!(!index.is_empty());
    let reread = PhraseIndex::read_from(index.to_bytes().as_slice()).unwrap();
    assert_eq!(reread, index);

    let mut theme = Theme::new("focus", "Focus");
    theme.add_member(&index.entries[0].phrase);
    let query = theme.refresh_query_vector(&mut embedder).unwrap().to_vec();
    let matches = top_matches(&index, &query, 5).unwrap();
    assert_eq!(matches[0].phrase, index.entries[0].phrase);

    let mut state = ReviewState::default();
    for m in &matches {
        let verdict = if m.rank <= 3 { Verdict::Match } else { Verdict::NonMatch };
        record_review(&mut state, "focus", "forum", m, verdict, "ana", m.rank as i64, false).unwrap();
    }
    assert!(record_review(&mut state, "focus", "forum", &matches[0], Verdict::Match, "ana", 9, false).is_err());
    let a = state.counts("focus", "forum", 5);
    let b = state.counts("focus", "other", 5);
    assert_eq!((a.k, a.n, a.partial), (3, 5, false));
    assert!(compare_theme("focus", &a, &b).is_err());
}
