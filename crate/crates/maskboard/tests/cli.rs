use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_maskboard");

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn maskboard(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("MASKBOARD_PROJECT")
        .env_remove("MASKBOARD_EMBED_URL")
        .env_remove("MASKBOARD_EMBED_MODEL")
        .env_remove("MASKBOARD_EMBED_KEY")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

/// The bundled pipeline, one command per entry.
fn script(fx: &str) -> Vec<Vec<String>> {
    let lines = [
        "init --name demo".to_string(),
        format!("ingest --in {fx}/forum.jsonl --name forum"),
        "cohort --corpus forum --anxiety Anxiety --adhd ADHD --window-days 183".into(),
        format!("ingest --in {fx}/clinic.jsonl --name clinic"),
        "filter --corpus clinic --keyword panic".into(),
        format!("label --corpus clinic --labels {fx}/clinic_labels.csv --name clinic-labels"),
        "split --dataset clinic-labels --test-frac 0.25 --seed 7".into(),
        "balance --dataset forum-cohort --seed 3".into(),
        "train --backend nb --dataset clinic-labels --seed 1 --name nb".into(),
        "train --backend linear --dataset clinic-labels.train --seed 1 --name lin".into(),
        "train --backend transformer --dataset clinic-labels --seed 1 --name tr".into(),
        "eval --model nb --dataset clinic-labels".into(),
        "eval --model lin --dataset clinic-labels.test".into(),
        "classify --model nb --corpus clinic --threshold 0.5".into(),
        "explain --model nb --corpus clinic --top-k 5 --show 8".into(),
        "expand --model nb --corpus clinic --name clinic-panic".into(),
        "index --provider test --corpus clinic --dim 16".into(),
        "index --provider test --corpus forum --source all --dim 16".into(),
        "theme create Panic".into(),
        "theme add panic panic-attack-at-work".into(),
        "theme list".into(),
        "search --theme panic --corpus clinic --n 3".into(),
        "search --theme panic --corpus forum --n 3".into(),
        "review --theme panic --corpus clinic --rank 1 --verdict match --reviewer ana --at 100".into(),
        "review --theme panic --corpus clinic --rank 1 --verdict match --reviewer ana --at 101".into(),
        "review --theme panic --corpus clinic --rank 2 --verdict u --reviewer ana --at 102".into(),
        "review --theme panic --corpus clinic --rank 2 --verdict x --reviewer ana --at 103 --amend".into(),
        "review --theme panic --corpus forum --rank 1 --verdict x --reviewer ana --at 104".into(),
        "compare --theme panic --a clinic --b forum".into(),
        "compare --theme mold --counts-a 132/300 --counts-b 59/300 --label-a lyme --label-b askdocs".into(),
        "compare --theme mold --counts-a 68/300 --counts-b 54/300 --output csv".into(),
        "verify".into(),
    ];
    lines
        .iter()
        .map(|l| l.split(' ').map(|s| s.replace("panic-attack-at-work", "panic attack at work")).collect())
        .collect()
}

fn transcript(dir: &Path) -> String {
    let fx = fixtures().display().to_string();
    let mut out = String::new();
    for cmd in script(&fx) {
        let mut args = vec!["--project".to_string(), "proj".to_string()];
        args.extend(cmd.iter().cloned());
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let r = maskboard(dir, &argv);
        out.push_str(&format!("$ maskboard {}\n", cmd.join(" ").replace(&fx, "FIXTURES")));
        out.push_str(&r.stdout);
        if r.code != 0 {
            out.push_str(&format!("[exit {}] {}", r.code, r.stderr));
        }
    }
    out
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("MASKBOARD_UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(golden_dir()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    if expected != actual {
        for (i, (e, a)) in expected.lines().zip(actual.lines()).enumerate() {
            assert_eq!(e, a, "{name}: first difference at line {}", i + 1);
        }
        assert_eq!(expected.lines().count(), actual.lines().count(), "{name}: line count differs");
        assert_eq!(expected, actual);
    }
}

#[test]
fn pipeline_matches_golden_transcript() {
    let dir = tempfile::tempdir().unwrap();
    check_golden("pipeline.txt", &transcript(dir.path()));
}

fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest" {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(transcript(a.path()), transcript(b.path()));
    let (sa, sb) = (snapshot(&a.path().join("proj")), snapshot(&b.path().join("proj")));
    assert_eq!(sa.len(), sb.len());
    for (x, y) in sa.iter().zip(&sb) {
        assert_eq!(x, y, "{} differs", x.0);
    }
}

#[test]
fn explain_marks_exactly_the_panic_phrase() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures().display().to_string();
    let d = dir.path();
    for args in [
        vec!["--project", "p", "init"],
        vec!["--project", "p", "ingest", "--in", &format!("{fx}/clinic.jsonl"), "--name", "clinic"],
        vec!["--project", "p", "label", "--corpus", "clinic", "--labels", &format!("{fx}/clinic_labels.csv"), "--name", "l"],
        vec!["--project", "p", "train", "--backend", "nb", "--dataset", "l", "--seed", "0", "--name", "nb"],
    ] {
        assert_eq!(maskboard(d, &args).code, 0, "{args:?}");
    }
    let r = maskboard(d, &["--project", "p", "explain", "--model", "nb", "--corpus", "clinic", "--top-k", "5", "--show", "1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let shown = r.stdout.lines().nth(2).unwrap();
    assert_eq!(shown, "«I had a panic attack at work». The weather was nice.");
}

#[test]
fn help_on_every_verb_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let verbs = [
        "init", "ingest", "label", "cohort", "filter", "split", "balance", "train", "eval", "classify", "explain",
        "expand", "index", "theme", "search", "review", "compare", "verify", "serve",
    ];
    for v in verbs {
        let r = maskboard(dir.path(), &[v, "--help"]);
        assert_eq!(r.code, 0, "{v}");
        assert!(r.stdout.contains("Usage"), "{v}");
    }
    assert_eq!(maskboard(dir.path(), &["--help"]).code, 0);
    assert_eq!(maskboard(dir.path(), &["theme", "add", "--help"]).code, 0);
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let r = maskboard(d, &["frobnicate"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("Usage"));
    assert_eq!(maskboard(d, &["split", "--dataset", "x", "--test-frac", "0.2"]).code, 2);
    assert_eq!(maskboard(d, &["ingest", "--in", "x", "--name", "y", "--colour"]).code, 2);
    let r = maskboard(d, &["--project", "nowhere", "ingest", "--in", "x", "--name", "y"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.starts_with("error: "));
}

#[test]
fn serve_refuses_lan_bind_without_token() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(maskboard(dir.path(), &["--project", "p", "init"]).code, 0);
    let r = maskboard(dir.path(), &["--project", "p", "serve", "--bind", "0.0.0.0:0"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("--token"), "{}", r.stderr);
}

#[test]
fn remote_index_without_key_is_provider_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures().display().to_string();
    let d = dir.path();
    maskboard(d, &["--project", "p", "init"]);
    maskboard(d, &["--project", "p", "ingest", "--in", &format!("{fx}/clinic.jsonl"), "--name", "clinic"]);
    let r = maskboard(
        d,
        &[
            "--project", "p", "index", "--provider", "remote", "--corpus", "clinic", "--source", "all",
            "--remote-url", "https://embed.invalid/v1", "--remote-model", "m",
        ],
    );
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("MASKBOARD_EMBED_KEY"), "{}", r.stderr);
}
