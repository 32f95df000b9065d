use std::fs;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use maskboard::project::{self, IndexManifest, ProviderConfig};
use maskboard::service::router;
use maskboard::Store;
use maskboard_core::classify::{train, Backend, BackendSpec};
use maskboard_core::corpus::{manual_labels, Corpus, CorpusManifest, Label, Post};
use maskboard_core::explain::{strip_markup, Explainer, MarkupFormat};
use maskboard_core::explore::{
    normalize, top_matches, HashProvider, IndexEntry, PhraseIndex, ReviewRecord, Verdict,
};
use serde_json::{json, Value};
use tower::ServiceExt;

const DIM: usize = 16;

fn post(id: &str, body: &str) -> Post {
    Post {
        id: id.into(),
        author: format!("author-{id}"),
        forum: "clinic".into(),
        created_at: 1_600_000_000,
        title: String::new(),
        body: body.into(),
    }
}

/// Project with an explained corpus, a 3-vector index for the theme member
/// "q" and a second corpus for comparisons.
fn fixture() -> (tempfile::TempDir, Store) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::init(dir.path().join("proj"), "fixture", 0).unwrap();
    let texts = [
        ("k1", "I had a panic attack at work. The weather was nice."),
        ("k2", "The weather was nice. I went for a walk."),
        ("k3", "Panic again & again <3. Coffee was cold."),
        ("k4", "Coffee was cold, the bus was late."),
    ];
    let corpus = Corpus::new(
        "clinic",
        texts.iter().map(|(id, t)| post(id, t)).collect(),
        CorpusManifest::default(),
    );
    store.put_corpus(&corpus).unwrap();
    let labels = texts
        .iter()
        .map(|(id, t)| (id.to_string(), Label::from_bool(t.to_lowercase().contains("panic"))));
    let ds = manual_labels(&corpus, labels).unwrap();
    store.put_dataset(&ds).unwrap();
    let model = train(&BackendSpec::new(Backend::NaiveBayes), &ds, 0).unwrap();
    store.put_model("nb", &model).unwrap();
    project::explain_corpus(&store, "nb", "clinic", &Explainer::default()).unwrap();

    let other = Corpus::new("askdocs", vec![post("z1", "Sinus pain.")], CorpusManifest::default());
    store.put_corpus(&other).unwrap();

    // e1 is the embedding of "q"; e2 is orthogonal to it
    let e1 = normalize(&HashProvider::new(DIM).vector("q")).unwrap();
    let mut e2 = normalize(&HashProvider::new(DIM).vector("other")).unwrap();
    let d: f64 = e1.iter().zip(&e2).map(|(a, b)| a * b).sum();
    e2.iter_mut().zip(&e1).for_each(|(x, y)| *x -= d * y);
    let e2 = normalize(&e2).unwrap();
    let blend = normalize(&e1.iter().zip(&e2).map(|(a, b)| a + b).collect::<Vec<_>>()).unwrap();
    let entry = |post_id: &str, phrase: &str, vector: Vec<f64>| IndexEntry {
        post_id: post_id.into(),
        phrase: phrase.into(),
        vector,
    };
    let index = PhraseIndex {
        corpus: "clinic".into(),
        provider_id: format!("hash-{DIM}"),
        dimension: DIM,
        entries: vec![entry("p2", "e2", e2), entry("p3", "blend", blend), entry("p1", "e1", e1)],
    };
    let manifest = IndexManifest {
        corpus: "clinic".into(),
        provider: ProviderConfig::Test { dimension: DIM },
        source: "fixture".into(),
        entries: 3,
        tool_version: "test".into(),
    };
    store.put_index(&index, &manifest).unwrap();
    (dir, store)
}

fn app(store: &Store) -> Router {
    router(Store::open(store.root()).unwrap(), None, None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn assert_error(v: &Value, code: &str) {
    let obj = v.as_object().expect("error body is an object");
    assert_eq!(obj.len(), 2, "{v}");
    assert_eq!(obj["code"], code, "{v}");
    assert!(obj["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn theme_crud_round_trip() {
    let (_d, store) = fixture();
    let app = app(&store);
    let (s, created) = call(&app, "POST", "/api/v1/themes", Some(json!({"name": "mold"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(created["theme_id"], "mold");
    let (s, list) = call(&app, "GET", "/api/v1/themes", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(list.as_array().unwrap().iter().any(|t| t["name"] == "mold"));

    let (s, v) = call(&app, "POST", "/api/v1/themes", Some(json!({"name": "Mold"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_error(&v, "conflict");

    let (s, t) = call(&app, "POST", "/api/v1/themes/mold/members", Some(json!({"phrase": "black mold"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(t["members"], json!(["black mold"]));
    let (_, t) = call(&app, "PATCH", "/api/v1/themes/mold", Some(json!({"name": "Mould", "notes": "damp"}))).await;
    assert_eq!((t["name"].as_str(), t["notes"].as_str()), (Some("Mould"), Some("damp")));
    let (s, _) = call(&app, "DELETE", "/api/v1/themes/mold/members", Some(json!({"phrase": "black mold"}))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = call(&app, "DELETE", "/api/v1/themes/mold", None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, v) = call(&app, "GET", "/api/v1/themes/mold", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
}

#[tokio::test]
async fn search_matches_the_library_ordering() {
    let (_d, store) = fixture();
    let app = app(&store);
    call(&app, "POST", "/api/v1/themes", Some(json!({"name": "q"}))).await;
    call(&app, "POST", "/api/v1/themes/q/members", Some(json!({"phrase": "q"}))).await;
    let (s, v) = call(&app, "POST", "/api/v1/search", Some(json!({"theme_id": "q", "corpus": "clinic", "n": 3}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let phrases: Vec<&str> = v["matches"].as_array().unwrap().iter().map(|m| m["phrase"].as_str().unwrap()).collect();
    assert_eq!(phrases, ["e1", "blend", "e2"]);

    let (index, _) = store.index("clinic").unwrap();
    let query = normalize(&HashProvider::new(DIM).vector("q")).unwrap();
    let expected = top_matches(&index, &query, 3).unwrap();
    assert_eq!(v["matches"], serde_json::to_value(&expected).unwrap());
    assert_eq!(v, serde_json::to_value(project::search(&store, "q", "clinic", 3).unwrap()).unwrap());

    let (s, v) = call(&app, "POST", "/api/v1/search", Some(json!({"theme_id": "q", "corpus": "askdocs", "n": 3}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
}

#[tokio::test]
async fn reviews_are_uniquely_keyed() {
    let (_d, store) = fixture();
    let app = app(&store);
    call(&app, "POST", "/api/v1/themes", Some(json!({"name": "q"}))).await;
    let review = json!({
        "theme_id": "q", "corpus": "clinic", "post_id": "p1", "phrase": "e1",
        "rank": 1, "verdict": "match", "reviewer": "ana", "reviewed_at": 5
    });
    let (s, rec) = call(&app, "POST", "/api/v1/reviews", Some(review.clone())).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(rec["verdict"], "match");
    let (s, v) = call(&app, "POST", "/api/v1/reviews", Some(review.clone())).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_error(&v, "conflict");
    let mut amend = review.clone();
    amend["verdict"] = json!("non_match");
    amend["amend"] = json!(true);
    assert_eq!(call(&app, "POST", "/api/v1/reviews", Some(amend)).await.0, StatusCode::CREATED);

    let (_, c) = call(&app, "GET", "/api/v1/themes/q/counts?corpus=clinic&window=300", None).await;
    assert_eq!((c["k"].as_u64(), c["n"].as_u64(), c["partial"].as_bool()), (Some(0), Some(1), Some(true)));
    let (_, list) = call(&app, "GET", "/api/v1/reviews?theme=q&corpus=clinic", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);

    let (s, v) = call(&app, "POST", "/api/v1/reviews", Some(json!({"theme_id": "q"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "invalid");
}

#[tokio::test]
async fn compare_reproduces_the_mold_row() {
    let (_d, store) = fixture();
    store.create_theme("mold", "").unwrap();
    for (corpus, k) in [("lyme", 132), ("askdocs", 59)] {
        for rank in 1..=300 {
            store
                .append_review(&ReviewRecord {
                    theme_id: "mold".into(),
                    corpus: corpus.into(),
                    post_id: format!("{corpus}-{rank}"),
                    phrase: "mold".into(),
                    rank,
                    verdict: if rank <= k { Verdict::Match } else { Verdict::NonMatch },
                    reviewer: "ana".into(),
                    reviewed_at: rank as i64,
                    amend: false,
                })
                .unwrap();
        }
    }
    let app = app(&store);
    let (s, v) = call(&app, "GET", "/api/v1/compare?theme=mold&corpus_a=lyme&corpus_b=askdocs", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!((v["pct1"].as_str(), v["pct2"].as_str()), (Some("44.0"), Some("19.7")));
    assert!(v["p_z"].as_f64().unwrap() < 0.01);
    assert!(v["p_fisher"].as_f64().unwrap() < 0.01);
    assert_eq!(v["significant_at_0_01"], true);
    let lib = project::compare(&store, "mold", "lyme", "askdocs", 300).unwrap();
    assert_eq!(v, serde_json::to_value(lib).unwrap());

    let (s, v) = call(&app, "GET", "/api/v1/compare?theme=mold&corpus_a=lyme", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "invalid");
}

#[tokio::test]
async fn explanations_page_and_rendering() {
    let (_d, store) = fixture();
    let app = app(&store);
    let (s, page) = call(&app, "GET", "/api/v1/explanations?corpus=clinic&page=1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(page["page_size"], 50);
    assert_eq!(page["total"], 4);
    assert_eq!(page, serde_json::to_value(project::explanation_page(&store, "clinic", 1, 50).unwrap()).unwrap());
    let (_, empty) = call(&app, "GET", "/api/v1/explanations?corpus=clinic&page=2", None).await;
    assert!(empty["items"].as_array().unwrap().is_empty());
    let (_, small) = call(&app, "GET", "/api/v1/explanations?corpus=clinic&page=2&page_size=3", None).await;
    assert_eq!(small["items"].as_array().unwrap().len(), 1);

    for item in page["items"].as_array().unwrap() {
        let id = item["post_id"].as_str().unwrap();
        for (fmt, markup) in [("html", MarkupFormat::Html), ("plain", MarkupFormat::PlainMarkers), ("ansi", MarkupFormat::Ansi)] {
            let (s, r) = call(&app, "GET", &format!("/api/v1/posts/{id}/rendered?format={fmt}"), None).await;
            assert_eq!(s, StatusCode::OK);
            assert_eq!(strip_markup(r["rendered"].as_str().unwrap(), markup), item["text"].as_str().unwrap());
        }
    }
    let (_, r) = call(&app, "GET", "/api/v1/posts/k3/rendered?corpus=clinic", None).await;
    assert!(r["rendered"].as_str().unwrap().contains("<mark>Panic again &amp; again &lt;3</mark>"), "{r}");
    let (s, v) = call(&app, "GET", "/api/v1/posts/nope/rendered", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
    let (s, _) = call(&app, "GET", "/api/v1/posts/k1/rendered?format=rtf", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn batch_classify_and_explain() {
    let (_d, store) = fixture();
    let app = app(&store);
    let (s, v) = call(&app, "POST", "/api/v1/classify", Some(json!({"model": "nb", "corpus": "clinic"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 4);
    let (s, v) = call(&app, "POST", "/api/v1/explain", Some(json!({"model": "nb", "corpus": "clinic", "top_k": 1}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["posts"], 4);
    let (items, manifest) = store.explanations("clinic").unwrap();
    assert!(items.iter().all(|e| e.highlighted.len() <= 1));
    assert!(manifest.policy.contains("top_k=1"));
}

#[tokio::test]
async fn errors_are_json() {
    let (_d, store) = fixture();
    let app = app(&store);
    let (s, v) = call(&app, "GET", "/api/v1/nothing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
    let (s, v) = call(&app, "PUT", "/api/v1/search", None).await;
    assert_eq!(s, StatusCode::METHOD_NOT_ALLOWED);
    assert_error(&v, "invalid");
    let req = Request::post("/api/v1/themes").body(Body::from("{not json")).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(resp.headers()["content-type"], "application/json");
}

#[tokio::test]
async fn restart_loses_nothing() {
    let (_d, store) = fixture();
    let first = app(&store);
    call(&first, "POST", "/api/v1/themes", Some(json!({"name": "q"}))).await;
    call(&first, "POST", "/api/v1/themes/q/members", Some(json!({"phrase": "q"}))).await;
    let (_, before) = call(&first, "GET", "/api/v1/themes", None).await;
    drop(first);
    let second = app(&store);
    let (_, after) = call(&second, "GET", "/api/v1/themes", None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn token_is_enforced_when_set() {
    let (_d, store) = fixture();
    let app = router(Store::open(store.root()).unwrap(), Some("s3cret".into()), None);
    let (s, v) = call(&app, "GET", "/api/v1/themes", None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    assert_error(&v, "invalid");
    let req = Request::get("/api/v1/themes")
        .header("authorization", "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    assert_eq!(app.oneshot(req).await.unwrap().status(), StatusCode::OK);
}

#[tokio::test]
async fn static_assets_are_served() {
    let (d, store) = fixture();
    let www = d.path().join("www");
    fs::create_dir(&www).unwrap();
    fs::write(www.join("index.html"), "<h1>workbench</h1>").unwrap();
    let app = router(Store::open(store.root()).unwrap(), None, Some(www));
    let resp = app.clone().oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<h1>workbench</h1>");
    let (s, _) = call(&app, "GET", "/api/v1/themes", None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread")]
async fn remote_provider_talks_to_a_local_endpoint() {
    use axum::extract::Json;
    use axum::http::HeaderMap;
    use maskboard::remote::{HttpTransport, RemoteConfig, RemoteProvider};
    use maskboard_core::explore::{EmbeddingProvider, Embedder, EmbeddingCache};
    use std::time::Duration;

    // Echoes a vector derived from the text length, after checking the key.
    async fn embed(headers: HeaderMap, Json(req): Json<Value>) -> (StatusCode, Json<Value>) {
        if headers.get("authorization").and_then(|h| h.to_str().ok()) != Some("Bearer k") {
            return (StatusCode::UNAUTHORIZED, Json(json!({"error": "bad key"})));
        }
        let data: Vec<Value> = req["input"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
            .rev()
            .map(|(i, t)| json!({"index": i, "embedding": [t.as_str().unwrap().len() as f64, 1.0, 0.0]}))
            .collect();
        (StatusCode::OK, Json(json!({"model": req["model"], "data": data})))
    }
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, Router::new().route("/v1/embeddings", axum::routing::post(embed)))
            .await
            .unwrap()
    });

    let config = RemoteConfig {
        url: format!("http://{addr}/v1/embeddings"),
        model: "m".into(),
        dimension: 3,
    };
    let transport = || Box::new(HttpTransport::new(Duration::from_secs(5)));
    let (good, bad) = tokio::task::spawn_blocking(move || {
        let provider = RemoteProvider::new(config.clone(), "k".into(), transport()).unwrap();
        assert_eq!(provider.id(), "remote:m:3");
        let mut embedder = Embedder::new(&provider, EmbeddingCache::default());
        let good = embedder.embed(&["ab".into(), "abcd".into()]);
        let wrong = RemoteProvider::new(config, "nope".into(), transport()).unwrap();
        let bad = wrong.embed(&["ab".into()]);
        (good, bad)
    })
    .await
    .unwrap();
    let good = good.unwrap();
    assert_eq!(good[0], normalize(&[2.0, 1.0, 0.0]).unwrap());
    assert_eq!(good[1], normalize(&[4.0, 1.0, 0.0]).unwrap());
    let err = bad.unwrap_err().to_string();
    assert!(err.contains("401"), "{err}");
}
