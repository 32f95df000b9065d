//! In-browser maskboard demo. Every export takes plain values and returns a
//! JSON string, so the page needs no bindings beyond `JSON.parse`.
//!
//! The same functions are callable natively through the `*_json` variants,
//! which is how they are tested.

use std::sync::OnceLock;

use maskboard_core::classify::{train, Backend, BackendSpec, TrainedClassifier};
use maskboard_core::corpus::{Dataset, DatasetManifest, Label, LabeledExample, Provenance};
use maskboard_core::explain::{render_highlights, segment_phrases, Explainer, HighlightPolicy, MarkupFormat};
use maskboard_core::explore::{normalize, top_matches, HashProvider, IndexEntry, PhraseIndex};
use maskboard_core::stats::two_proportion_test;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Tiny labeled set for the demo classifier: panic-attack talk versus
/// everyday posts.
const TRAINING: &[(&str, bool)] = &[
    ("I had a panic attack at work", true),
    ("my heart was racing and I could not breathe", true),
    ("another panic attack on the train this morning", true),
    ("I feel dizzy and my chest is tight", true),
    ("the panic comes out of nowhere at night", true),
    ("shaking hands and a racing heart before every meeting", true),
    ("I thought I was having a heart attack but it was panic", true),
    ("breathing exercises barely help when the attack starts", true),
    ("the weather was nice today", false),
    ("we went for a walk in the park", false),
    ("my cat knocked over a plant again", false),
    ("work was busy but fine", false),
    ("I made pasta for dinner", false),
    ("the train was on time for once", false),
    ("watched a film with friends at night", false),
    ("the garden needs more water this week", false),
];

fn model() -> &'static TrainedClassifier {
    static MODEL: OnceLock<TrainedClassifier> = OnceLock::new();
    MODEL.get_or_init(|| {
        let examples = TRAINING
            .iter()
            .enumerate()
            .map(|(i, (text, positive))| LabeledExample {
                post_id: format!("d{i}"),
                author: String::new(),
                text: text.to_string(),
                label: Label::from_bool(*positive),
                provenance: Provenance::Manual,
            })
            .collect();
        let ds = Dataset::new("demo", examples, DatasetManifest::new("builtin"));
        train(&BackendSpec::new(Backend::NaiveBayes), &ds, 0).expect("built-in training set has both classes")
    })
}

#[derive(Serialize)]
struct PhraseView {
    text: String,
    influence: f64,
    highlighted: bool,
}

#[derive(Serialize)]
struct ExplainView {
    score: f64,
    html: String,
    phrases: Vec<PhraseView>,
}

pub fn explain_json(text: &str, top_k: usize, min_influence: f64) -> Result<String, String> {
    let explainer = Explainer::new(HighlightPolicy { k: top_k, min_influence });
    let e = explainer.explain(model(), "input", text).map_err(|e| e.to_string())?;
    let html = render_highlights(text, &e, MarkupFormat::Html).map_err(|e| e.to_string())?;
    let phrases = segment_phrases(text)
        .into_iter()
        .zip(&e.phrases)
        .enumerate()
        .map(|(i, (p, infl))| PhraseView {
            text: p.text,
            influence: infl.influence,
            highlighted: e.highlighted.contains(&i),
        })
        .collect();
    to_json(&ExplainView {
        score: e.base_score,
        html,
        phrases,
    })
}

#[derive(Serialize)]
struct CompareView {
    pct1: String,
    pct2: String,
    z: Option<f64>,
    p_z: f64,
    p_fisher: f64,
    normal_approx_ok: bool,
    significant_at_0_01: bool,
    line: String,
}

pub fn compare_json(k1: u32, n1: u32, k2: u32, n2: u32) -> Result<String, String> {
    let mut r = two_proportion_test(k1.into(), n1.into(), k2.into(), n2.into()).map_err(|e| e.to_string())?;
    r.theme = "theme".into();
    to_json(&CompareView {
        pct1: r.pct1(),
        pct2: r.pct2(),
        z: r.z,
        p_z: r.p_z,
        p_fisher: r.p_fisher,
        normal_approx_ok: r.normal_approx_ok,
        significant_at_0_01: r.significant_at(0.01),
        line: r.table_line(),
    })
}

/// Ranks the non-empty lines of `candidates` by cosine to `query` under the
/// offline hash embedding of dimension `dim`.
pub fn similarity_json(query: &str, candidates: &str, dim: usize) -> Result<String, String> {
    if dim == 0 || dim > 4096 {
        return Err("dimension must lie in 1..=4096".into());
    }
    let provider = HashProvider::new(dim);
    let embed = |t: &str| normalize(&provider.vector(t)).ok_or_else(|| "zero embedding".to_string());
    let entries = candidates
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            Ok(IndexEntry {
                post_id: format!("{:04}", i + 1),
                phrase: l.to_string(),
                vector: embed(l)?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    if entries.is_empty() {
        return to_json(&Vec::<()>::new());
    }
    let n = entries.len();
    let index = PhraseIndex {
        corpus: "demo".into(),
        provider_id: format!("hash-{dim}"),
        dimension: dim,
        entries,
    };
    let matches = top_matches(&index, &embed(query.trim())?, n).map_err(|e| e.to_string())?;
    to_json(&matches)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn explain(text: &str, top_k: usize, min_influence: f64) -> Result<String, JsValue> {
    explain_json(text, top_k, min_influence).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare(k1: u32, n1: u32, k2: u32, n2: u32) -> Result<String, JsValue> {
    compare_json(k1, n1, k2, n2).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn similarity(query: &str, candidates: &str, dim: usize) -> Result<String, JsValue> {
    similarity_json(query, candidates, dim).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn panic_phrase_is_highlighted() {
        let v: Value = serde_json::from_str(&explain_json("I had a panic attack at work. The weather was nice.", 5, 0.05).unwrap()).unwrap();
        assert_eq!(v["html"], "<mark>I had a panic attack at work</mark>. The weather was nice.");
        assert!(v["score"].as_f64().unwrap() > 0.5);
        assert_eq!(v["phrases"][0]["highlighted"], true);
        assert_eq!(v["phrases"][1]["highlighted"], false);
    }

    #[test]
    fn mold_counts_compare() {
        let v: Value = serde_json::from_str(&compare_json(132, 300, 59, 300).unwrap()).unwrap();
        assert_eq!((v["pct1"].as_str(), v["pct2"].as_str()), (Some("44.0"), Some("19.7")));
        assert_eq!(v["significant_at_0_01"], true);
        assert!(compare_json(5, 0, 1, 1).is_err());
    }

    #[test]
    fn identical_phrase_ranks_first() {
        let v: Value = serde_json::from_str(&similarity_json("black mold", "damp walls\nblack mold\n\nsinus pain", 32).unwrap()).unwrap();
        let ranked = v.as_array().unwrap();
        assert_eq!(ranked.len(), 3);
        assert_eq!(ranked[0]["phrase"], "black mold");
        assert!((ranked[0]["cosine"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(similarity_json("x", "y", 0).is_err());
        assert_eq!(similarity_json("x", " \n", 8).unwrap(), "[]");
    }
}
