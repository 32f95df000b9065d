//! `maskboard` command-line driver.
//!
//! Exit status: 0 on success, 2 on a usage error, 1 on any other failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maskboard_core::classify::{classify_corpus, evaluate, expand_dataset, train, write_predictions, Backend, BackendSpec};
use maskboard_core::corpus::{
    balance, build_transition_cohort, filter_keyword, load_posts, manual_labels, split, CohortConfig, Label, Provenance,
};
use maskboard_core::explain::{render_highlights, Explainer, HighlightPolicy, MarkupFormat};
use maskboard_core::explore::{ThemeCounts, Verdict, DEFAULT_WINDOW};
use maskboard_core::stats::{compare_theme, render_report};

use crate::error::{invalid, not_found, Result};
use crate::project::{self, Comparison, ProviderConfig, ReviewRequest};
use crate::remote::RemoteConfig;
use crate::service::{self, ServeOptions};
use crate::store::Store;

#[derive(Debug, Parser)]
#[command(name = "maskboard", version, about = "Classify forum posts, explain them by phrase occlusion and compare themes")]
struct Cli {
    /// Project directory.
    #[arg(long, global = true, env = "MASKBOARD_PROJECT", default_value = ".")]
    project: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a project in an empty directory.
    Init {
        #[arg(long)]
        name: Option<String>,
    },
    /// Load newline-delimited post records as a corpus.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        name: String,
    },
    /// Build a dataset from a CSV of `post_id,label` rows.
    Label {
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Label anxiety-forum posts by later adhd-forum activity.
    Cohort {
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        anxiety: String,
        #[arg(long)]
        adhd: String,
        #[arg(long, default_value_t = CohortConfig::DEFAULT_WINDOW_DAYS)]
        window_days: i64,
        /// Posts at or after this Unix time are ignored.
        #[arg(long, default_value_t = i64::MAX)]
        cutoff: i64,
        #[arg(long)]
        name: Option<String>,
    },
    /// Keep posts containing a keyword.
    Filter {
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        keyword: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// Author-grouped train/test split into DATASET.train and DATASET.test.
    Split {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        test_frac: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Downsample the majority class.
    Balance {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        name: Option<String>,
    },
    /// Fit a classifier.
    Train {
        #[arg(long, value_enum)]
        backend: BackendArg,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        name: String,
        /// Hyperparameter override, KEY=VALUE (repeatable).
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
    },
    /// Accuracy, precision, recall and F1 at threshold 0.5.
    Eval {
        #[arg(long)]
        model: String,
        #[arg(long)]
        dataset: String,
    },
    /// Score every post of a corpus.
    Classify {
        #[arg(long)]
        model: String,
        #[arg(long)]
        corpus: String,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Write the prediction table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explain every post of a corpus and store the explanations.
    Explain {
        #[arg(long)]
        model: String,
        #[arg(long)]
        corpus: String,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long, default_value_t = 0.05)]
        min_influence: f64,
        /// Print the first N posts with highlights.
        #[arg(long, default_value_t = 0)]
        show: usize,
        #[arg(long, value_enum, default_value_t = FormatArg::Plain)]
        format: FormatArg,
    },
    /// Keep the posts a model predicts positive, as a corpus and a dataset.
    Expand {
        #[arg(long)]
        model: String,
        #[arg(long)]
        corpus: String,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        name: Option<String>,
    },
    /// Embed a corpus's phrases.
    Index {
        #[arg(long, value_enum)]
        provider: ProviderArg,
        #[arg(long)]
        corpus: String,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Index only highlighted phrases (needs `explain`), or every phrase.
        #[arg(long, value_enum, default_value_t = SourceArg::Highlights)]
        source: SourceArg,
        #[arg(long, env = "MASKBOARD_EMBED_URL")]
        remote_url: Option<String>,
        #[arg(long, env = "MASKBOARD_EMBED_MODEL")]
        remote_model: Option<String>,
    },
    /// Manage themes.
    Theme {
        #[command(subcommand)]
        action: ThemeAction,
    },
    /// Rank a corpus's phrases against a theme.
    Search {
        #[arg(long)]
        theme: String,
        #[arg(long)]
        corpus: String,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        n: usize,
        #[arg(long)]
        json: bool,
    },
    /// Record a verdict on the match at RANK of a search.
    Review {
        #[arg(long)]
        theme: String,
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        rank: usize,
        #[arg(long, value_parser = parse_verdict)]
        verdict: Verdict,
        #[arg(long, default_value = "")]
        reviewer: String,
        /// Review time as Unix seconds; defaults to now.
        #[arg(long)]
        at: Option<i64>,
        #[arg(long)]
        amend: bool,
    },
    /// Compare a theme's prevalence between two corpora.
    Compare(CompareArgs),
    /// Re-hash every stored file.
    Verify,
    /// Run the local JSON service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8787")]
        bind: SocketAddr,
        /// Bearer token; required when binding beyond loopback.
        #[arg(long, env = "MASKBOARD_TOKEN")]
        token: Option<String>,
        /// Directory of static assets served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, required_unless_present = "counts_a")]
    theme: Option<String>,
    #[arg(long, requires = "theme", conflicts_with = "counts_a")]
    a: Option<String>,
    #[arg(long, requires = "theme", conflicts_with = "counts_b")]
    b: Option<String>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    /// Counts of corpus A as K/N, without a project.
    #[arg(long, value_parser = parse_counts, requires = "counts_b")]
    counts_a: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_counts, requires = "counts_a")]
    counts_b: Option<(usize, usize)>,
    /// Corpus labels for the report header when using counts.
    #[arg(long, default_value = "a")]
    label_a: String,
    #[arg(long, default_value = "b")]
    label_b: String,
    #[arg(long, value_enum, default_value_t = OutputArg::Table)]
    output: OutputArg,
}

#[derive(Debug, Subcommand)]
enum ThemeAction {
    Create {
        name: String,
        #[arg(long, default_value = "")]
        notes: String,
    },
    List,
    Show {
        id: String,
    },
    /// Add member phrases.
    Add {
        id: String,
        #[arg(required = true)]
        phrases: Vec<String>,
    },
    Remove {
        id: String,
        phrase: String,
    },
    Rename {
        id: String,
        name: String,
    },
    Delete {
        id: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Linear,
    Nb,
    Transformer,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Plain,
    Ansi,
    Html,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProviderArg {
    Test,
    Remote,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SourceArg {
    Highlights,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputArg {
    Table,
    Csv,
    Json,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected KEY=VALUE")?;
    let v: f64 = v.parse().map_err(|_| format!("{v:?} is not a number"))?;
    Ok((k.to_string(), v))
}

fn parse_counts(s: &str) -> std::result::Result<(usize, usize), String> {
    let (k, n) = s.split_once('/').ok_or("expected K/N, e.g. 132/300")?;
    let k = k.trim().parse().map_err(|_| format!("{k:?} is not a count"))?;
    let n = n.trim().parse().map_err(|_| format!("{n:?} is not a count"))?;
    if k > n || n == 0 {
        return Err(format!("{s}: need 0 <= K <= N and N > 0"));
    }
    Ok((k, n))
}

fn parse_verdict(s: &str) -> std::result::Result<Verdict, String> {
    s.parse().map_err(|e: maskboard_core::Error| e.to_string())
}

fn now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs() as i64)
}

fn short(hash: &str) -> &str {
    &hash[..12.min(hash.len())]
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            1
        }
    }
}

fn open(cli_project: &PathBuf) -> Result<Store> {
    Store::open(cli_project)
}

fn io_err(e: std::io::Error) -> crate::Error {
    crate::Error::Core(e.into())
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let root = &cli.project;
    match cli.command {
        Command::Init { name } => {
            let name = name.unwrap_or_else(|| {
                root.canonicalize()
                    .ok()
                    .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                    .unwrap_or_else(|| "project".into())
            });
            Store::init(root, &name, now())?;
            writeln!(out, "initialized project {name:?} in {}", root.display()).map_err(io_err)?;
        }
        Command::Ingest { input, name } => {
            let store = open(root)?;
            let f = File::open(&input).map_err(|e| crate::Error::io(&input, e))?;
            let corpus = load_posts(&name, &input.display().to_string(), BufReader::new(f))?;
            let hash = store.put_corpus(&corpus)?;
            writeln!(
                out,
                "corpus {name}: {} posts, {} skipped [{}]",
                corpus.len(),
                corpus.manifest.skipped,
                short(&hash)
            )
            .map_err(io_err)?;
        }
        Command::Label { corpus, labels, name } => {
            let store = open(root)?;
            let c = store.corpus(&corpus)?;
            let mut rdr = csv::Reader::from_path(&labels)
                .map_err(|e| invalid(format!("cannot read {}: {e}", labels.display())))?;
            let mut rows = Vec::new();
            for rec in rdr.records() {
                let rec = rec.map_err(|e| invalid(format!("{}: {e}", labels.display())))?;
                let (id, label) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or("").trim());
                let label = match label {
                    "1" => Label::Positive,
                    "0" => Label::Negative,
                    other => return Err(invalid(format!("label must be 0 or 1, got {other:?} for post {id}"))),
                };
                rows.push((id.trim().to_string(), label));
            }
            let mut ds = manual_labels(&c, rows)?;
            if let Some(n) = name {
                ds.name = n;
            }
            report_dataset(out, &store, &ds)?;
        }
        Command::Cohort {
            corpus,
            anxiety,
            adhd,
            window_days,
            cutoff,
            name,
        } => {
            let store = open(root)?;
            let c = store.corpus(&corpus)?;
            let cfg = CohortConfig::new(anxiety, adhd, cutoff).with_window_days(window_days);
            let mut ds = build_transition_cohort(&c, &cfg)?;
            if let Some(n) = name {
                ds.name = n;
            }
            report_dataset(out, &store, &ds)?;
        }
        Command::Filter { corpus, keyword, name } => {
            let store = open(root)?;
            let c = store.corpus(&corpus)?;
            let mut filtered = filter_keyword(&c, &keyword)?;
            filtered.name = name.unwrap_or_else(|| format!("{corpus}.{}", project::slug(&keyword)));
            let hash = store.put_corpus(&filtered)?;
            writeln!(out, "corpus {}: {} of {} posts [{}]", filtered.name, filtered.len(), c.len(), short(&hash))
                .map_err(io_err)?;
        }
        Command::Split { dataset, test_frac, seed } => {
            let store = open(root)?;
            let ds = store.dataset(&dataset)?;
            let (train_set, test_set) = split(&ds, test_frac, seed)?;
            report_dataset(out, &store, &train_set)?;
            report_dataset(out, &store, &test_set)?;
        }
        Command::Balance { dataset, seed, name } => {
            let store = open(root)?;
            let mut ds = balance(&store.dataset(&dataset)?, seed)?;
            if let Some(n) = name {
                ds.name = n;
            }
            report_dataset(out, &store, &ds)?;
        }
        Command::Train {
            backend,
            dataset,
            seed,
            name,
            params,
        } => {
            let store = open(root)?;
            let backend = match backend {
                BackendArg::Linear => Backend::Linear,
                BackendArg::Nb => Backend::NaiveBayes,
                BackendArg::Transformer => Backend::Transformer,
            };
            let spec = params.into_iter().fold(BackendSpec::new(backend), |s, (k, v)| s.with(&k, v));
            let ds = store.dataset(&dataset)?;
            let model = train(&spec, &ds, seed)?;
            let hash = store.put_model(&name, &model)?;
            writeln!(out, "model {name}: {} on {} examples [{}]", backend.id(), ds.len(), short(&hash))
                .map_err(io_err)?;
        }
        Command::Eval { model, dataset } => {
            let store = open(root)?;
            let m = store.model(&model)?;
            let metrics = evaluate(&m, &store.dataset(&dataset)?)?;
            let c = &metrics.confusion;
            writeln!(
                out,
                "n {}\naccuracy {:.4}\nprecision {:.4}\nrecall {:.4}\nf1 {:.4}\nconfusion tp={} fp={} tn={} fn={}",
                metrics.n, metrics.accuracy, metrics.precision, metrics.recall, metrics.f1, c.tp, c.fp, c.tn, c.fn_
            )
            .map_err(io_err)?;
        }
        Command::Classify {
            model,
            corpus,
            threshold,
            out: path,
        } => {
            let store = open(root)?;
            let m = store.model(&model)?;
            let rows = classify_corpus(&m, &store.corpus(&corpus)?, threshold, 256)?;
            match path {
                Some(p) => {
                    let f = File::create(&p).map_err(|e| crate::Error::io(&p, e))?;
                    write_predictions(&rows, std::io::BufWriter::new(f))?;
                    let positive = rows.iter().filter(|r| r.predicted.is_positive()).count();
                    writeln!(out, "{} posts scored, {positive} positive -> {}", rows.len(), p.display())
                        .map_err(io_err)?;
                }
                None => write_predictions(&rows, &mut *out)?,
            }
        }
        Command::Explain {
            model,
            corpus,
            top_k,
            min_influence,
            show,
            format,
        } => {
            let store = open(root)?;
            let explainer = Explainer::new(HighlightPolicy { k: top_k, min_influence });
            let items = project::explain_corpus(&store, &model, &corpus, &explainer)?;
            let highlighted: usize = items.iter().map(|e| e.highlighted.len()).sum();
            writeln!(out, "explained {} posts of {corpus}: {highlighted} highlighted phrases", items.len())
                .map_err(io_err)?;
            let format = match format {
                FormatArg::Plain => MarkupFormat::PlainMarkers,
                FormatArg::Ansi => MarkupFormat::Ansi,
                FormatArg::Html => MarkupFormat::Html,
            };
            if show > 0 {
                let c = store.corpus(&corpus)?;
                for e in items.iter().take(show) {
                    let text = c.get(&e.post_id).map(|p| p.text()).unwrap_or_default();
                    writeln!(out, "--- {} score={:.3}", e.post_id, e.base_score).map_err(io_err)?;
                    writeln!(out, "{}", render_highlights(&text, e, format)?).map_err(io_err)?;
                }
            }
        }
        Command::Expand {
            model,
            corpus,
            threshold,
            name,
        } => {
            let store = open(root)?;
            let m = store.model(&model)?;
            let c = store.corpus(&corpus)?;
            let mut expanded = expand_dataset(&m, &c, threshold)?;
            if let Some(n) = name {
                expanded.name = n;
            }
            let hash = store.put_corpus(&expanded)?;
            writeln!(out, "corpus {}: {} of {} posts [{}]", expanded.name, expanded.len(), c.len(), short(&hash))
                .map_err(io_err)?;
            let mut ds = expanded.to_dataset(Label::Positive, Provenance::Expanded);
            ds.name = expanded.name.clone();
            report_dataset(out, &store, &ds)?;
        }
        Command::Index {
            provider,
            corpus,
            dim,
            source,
            remote_url,
            remote_model,
        } => {
            let store = open(root)?;
            let cfg = match provider {
                ProviderArg::Test => ProviderConfig::Test { dimension: dim },
                ProviderArg::Remote => ProviderConfig::Remote(RemoteConfig {
                    url: remote_url.ok_or_else(|| invalid("--remote-url or MASKBOARD_EMBED_URL is required"))?,
                    model: remote_model.ok_or_else(|| invalid("--remote-model or MASKBOARD_EMBED_MODEL is required"))?,
                    dimension: dim,
                }),
            };
            let index = project::index_corpus(&store, &corpus, &cfg, matches!(source, SourceArg::Highlights))?;
            writeln!(out, "index {corpus}: {} phrases, {} [dim {}]", index.len(), index.provider_id, index.dimension)
                .map_err(io_err)?;
        }
        Command::Theme { action } => theme(open(root)?, action, out)?,
        Command::Search { theme, corpus, n, json } => {
            let store = open(root)?;
            let result = project::search(&store, &theme, &corpus, n)?;
            if json {
                serde_json::to_writer_pretty(&mut *out, &result).map_err(maskboard_core::Error::from)?;
                writeln!(out).map_err(io_err)?;
            } else {
                for m in &result.matches {
                    writeln!(out, "{:>4}  {:.4}  {}  {}", m.rank, m.cosine, m.post_id, m.phrase).map_err(io_err)?;
                }
            }
        }
        Command::Review {
            theme,
            corpus,
            rank,
            verdict,
            reviewer,
            at,
            amend,
        } => {
            let store = open(root)?;
            if rank == 0 {
                return Err(invalid("ranks start at 1"));
            }
            let result = project::search(&store, &theme, &corpus, rank)?;
            let m = result
                .matches
                .get(rank - 1)
                .ok_or_else(|| not_found(format!("the search has only {} matches", result.matches.len())))?;
            let record = project::add_review(
                &store,
                ReviewRequest {
                    theme_id: theme.clone(),
                    corpus: corpus.clone(),
                    post_id: m.post_id.clone(),
                    phrase: m.phrase.clone(),
                    rank,
                    verdict,
                    reviewer,
                    reviewed_at: at,
                    amend,
                },
                now(),
            )?;
            let counts = project::theme_counts(&store, &theme, &corpus, DEFAULT_WINDOW)?;
            writeln!(
                out,
                "rank {rank} {:?} -> {:?}; {theme} in {corpus}: {}/{} reviewed as match",
                record.phrase,
                record.verdict,
                counts.k,
                counts.n
            )
            .map_err(io_err)?;
        }
        Command::Compare(args) => compare(root, args, out)?,
        Command::Verify => {
            let store = open(root)?;
            let n = store.verify()?;
            let reviews = store.reviews()?.len();
            writeln!(out, "ok: {n} stored files, {reviews} review records").map_err(io_err)?;
        }
        Command::Serve { bind, token, static_dir } => {
            let store = open(root)?;
            let opts = ServeOptions { bind, token, static_dir };
            opts.validate()?;
            let rt = tokio::runtime::Runtime::new().map_err(io_err)?;
            rt.block_on(service::serve(store, opts))?;
        }
    }
    Ok(())
}

fn report_dataset(out: &mut dyn Write, store: &Store, ds: &maskboard_core::corpus::Dataset) -> Result<()> {
    let hash = store.put_dataset(ds)?;
    let c = ds.counts();
    writeln!(
        out,
        "dataset {}: {} examples ({} positive, {} negative) [{}]",
        ds.name,
        ds.len(),
        c.positive,
        c.negative,
        short(&hash)
    )
    .map_err(io_err)
}

fn theme(store: Store, action: ThemeAction, out: &mut dyn Write) -> Result<()> {
    let print = |out: &mut dyn Write, t: &maskboard_core::explore::Theme| -> Result<()> {
        writeln!(out, "{}  {:?}  {} members", t.theme_id, t.name, t.members.len()).map_err(io_err)?;
        for m in &t.members {
            writeln!(out, "  - {m}").map_err(io_err)?;
        }
        Ok(())
    };
    match action {
        ThemeAction::Create { name, notes } => print(out, &store.create_theme(&name, &notes)?)?,
        ThemeAction::List => {
            for t in store.themes()? {
                writeln!(out, "{}  {:?}  {} members", t.theme_id, t.name, t.members.len()).map_err(io_err)?;
            }
        }
        ThemeAction::Show { id } => print(out, &store.theme(&id)?)?,
        ThemeAction::Add { id, phrases } => {
            let mut t = store.theme(&id)?;
            for p in &phrases {
                if p.trim().is_empty() {
                    return Err(invalid("member phrase cannot be empty"));
                }
                t.add_member(p);
            }
            store.save_theme(&t)?;
            print(out, &t)?;
        }
        ThemeAction::Remove { id, phrase } => {
            let mut t = store.theme(&id)?;
            if !t.remove_member(&phrase) {
                return Err(not_found(format!("{phrase:?} is not a member of theme {id:?}")));
            }
            store.save_theme(&t)?;
            print(out, &t)?;
        }
        ThemeAction::Rename { id, name } => {
            let mut t = store.theme(&id)?;
            if name.trim().is_empty() {
                return Err(invalid("theme name cannot be empty"));
            }
            t.name = name.trim().to_string();
            store.save_theme(&t)?;
            print(out, &t)?;
        }
        ThemeAction::Delete { id } => {
            store.delete_theme(&id)?;
            writeln!(out, "deleted theme {id}").map_err(io_err)?;
        }
    }
    Ok(())
}

fn counts_of((k, n): (usize, usize)) -> ThemeCounts {
    ThemeCounts {
        k,
        n,
        window: n,
        partial: false,
        proportion: k as f64 / n as f64,
    }
}

fn compare(root: &PathBuf, args: CompareArgs, out: &mut dyn Write) -> Result<()> {
    let (comparison, label_a, label_b) = match (args.counts_a, args.counts_b) {
        (Some(a), Some(b)) => {
            let theme = args.theme.unwrap_or_else(|| "theme".into());
            let result = compare_theme(&theme, &counts_of(a), &counts_of(b))?;
            (Comparison::new(result, false, false), args.label_a, args.label_b)
        }
        _ => {
            let (Some(theme), Some(a), Some(b)) = (args.theme, args.a, args.b) else {
                return Err(invalid("compare needs --theme with --a and --b, or --counts-a and --counts-b"));
            };
            let store = open(root)?;
            (project::compare(&store, &theme, &a, &b, args.window)?, a, b)
        }
    };
    match args.output {
        OutputArg::Table => {
            write!(out, "{}", render_report(&label_a, &label_b, std::slice::from_ref(&comparison.result)))
                .map_err(io_err)?;
            let r = &comparison.result;
            writeln!(out, "counts: {}/{} vs {}/{}", r.k1, r.n1, r.k2, r.n2).map_err(io_err)?;
            writeln!(out, "method: {}", r.method_note).map_err(io_err)?;
        }
        OutputArg::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.serialize(comparison.row()).map_err(|e| invalid(e.to_string()))?;
            w.flush().map_err(io_err)?;
        }
        OutputArg::Json => {
            serde_json::to_writer_pretty(&mut *out, &comparison).map_err(maskboard_core::Error::from)?;
            writeln!(out).map_err(io_err)?;
        }
    }
    Ok(())
}
