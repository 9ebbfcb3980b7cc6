//! `paperscope`: ingest, embed, index, search, chat, sample and serve.
//!
//! Exit status: 0 on success, 1 on a user error (bad flags, unknown ids,
//! missing files), 2 on an internal or provider failure.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use paperscope_core::bootstrap::{self, LoadOptions};
use paperscope_core::config::Config;
use paperscope_core::corpus::{Corpus, IngestReport};
use paperscope_core::library::SimilarRequest;
use paperscope_core::{ErrorKind, LibraryError};
use paperscope_server::RouterOptions;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "paperscope", version, about = "Explore a paper corpus by keyword, embedding similarity and chat")]
struct Cli {
    /// Data directory (corpus, vectors, indexes, saved sets).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Merge a JSONL (or JSON array) corpus file into the data directory.
    Ingest { file: PathBuf },
    /// Embed every paper into a space with the configured provider.
    Embed {
        #[arg(long)]
        space: Option<String>,
    },
    /// Build and save the approximate index for a space.
    Index {
        #[arg(long)]
        space: Option<String>,
    },
    /// Similar papers to seed ids or to a title/abstract.
    Search {
        #[arg(long)]
        space: Option<String>,
        #[arg(long = "seed-id")]
        seed_id: Vec<String>,
        #[arg(long)]
        title: Option<String>,
        #[arg(long = "abstract")]
        abstract_text: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        threshold: Option<f32>,
        /// Full scan even when an index is saved.
        #[arg(long)]
        exact: bool,
    },
    /// One chat turn in a persisted session.
    Chat {
        #[arg(long)]
        session: String,
        #[arg(long)]
        message: String,
        #[arg(long)]
        space: Option<String>,
        #[arg(long)]
        mock_llm: bool,
    },
    /// Write a synthetic themed corpus and its mock vectors.
    Sample {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        space: Option<String>,
        #[arg(long)]
        dimension: Option<usize>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        projection: Option<PathBuf>,
        #[arg(long)]
        space: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<IpAddr>,
        #[arg(long)]
        mock_llm: bool,
        /// Static UI build to serve under /ui.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

enum Failure {
    User(String),
    Internal(String),
}

impl From<LibraryError> for Failure {
    fn from(e: LibraryError) -> Self {
        match e.kind {
            ErrorKind::NotFound | ErrorKind::BadRequest | ErrorKind::OversizeQuery => Failure::User(e.message),
            ErrorKind::ProviderError | ErrorKind::Internal => Failure::Internal(e.message),
        }
    }
}

type CliResult = Result<(), Failure>;

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| Failure::User(e.to_string()))?,
        None => Config::default(),
    };
    cfg.apply_env(std::env::vars()).map_err(|e| Failure::User(e.to_string()))?;
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = Some(d.clone());
    }
    Ok(cfg)
}

struct Out {
    json: bool,
}

impl Out {
    fn emit(&self, value: serde_json::Value, human: impl FnOnce() -> String) {
        let mut stdout = std::io::stdout().lock();
        let _ = if self.json { writeln!(stdout, "{value}") } else { write!(stdout, "{}", human()) };
    }
}

fn warn_rejections(what: &str, report: &IngestReport) {
    for r in report.rejected.iter().take(20) {
        eprintln!("warning: {what} line {}: {}", r.line, r.reason);
    }
    if report.rejected.len() > 20 {
        eprintln!("warning: {what}: {} more rejected lines", report.rejected.len() - 20);
    }
}

fn run(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    let out = Out { json: cli.json };
    let layout = cfg.layout();
    let space_or = |s: &Option<String>| s.clone().unwrap_or_else(|| cfg.embedding.space.clone());
    match cli.verb {
        Verb::Ingest { file } => {
            let base = if layout.corpus().exists() { bootstrap::read_corpus(&layout.corpus())?.0 } else { Corpus::new() };
            let src = std::fs::File::open(&file).map_err(|e| Failure::User(format!("{}: {e}", file.display())))?;
            let (next, report) = base.ingested(std::io::BufReader::new(src)).map_err(LibraryError::from)?;
            bootstrap::save_corpus(&next, &layout.corpus())?;
            warn_rejections(&file.display().to_string(), &report);
            out.emit(json!({"accepted": report.accepted, "rejected": report.rejected, "total": next.len()}), || {
                format!("accepted {}, rejected {}, corpus now {} papers\n", report.accepted, report.rejected.len(), next.len())
            });
        }
        Verb::Embed { space } => {
            let space = space_or(&space);
            let (corpus, _) = bootstrap::read_corpus(&layout.corpus())?;
            let v = bootstrap::embed_space(&cfg, &corpus, &space)?;
            let path = layout.embeddings(&space);
            out.emit(json!({"space": space, "vectors": v.len(), "dimension": v.dimension(), "path": path}), || {
                format!("embedded {} papers into {space} ({}d) -> {}\n", v.len(), v.dimension(), path.display())
            });
        }
        Verb::Index { space } => {
            let space = space_or(&space);
            let (corpus, _) = bootstrap::read_corpus(&layout.corpus())?;
            let (vectors, report) =
                bootstrap::read_vectors(&layout.embeddings(&space), &space, bootstrap::provenance(&cfg), &corpus)?;
            warn_rejections("vectors", &report);
            let index = bootstrap::build_index(&cfg, Arc::new(vectors))?;
            let path = layout.index(&space);
            out.emit(json!({"space": space, "nodes": index.len(), "path": path}), || {
                format!("indexed {} vectors of {space} -> {}\n", index.len(), path.display())
            });
        }
        Verb::Search { space, seed_id, title, abstract_text, k, threshold, exact } => {
            let opts = LoadOptions { space, mock_llm: true, ephemeral: true, ..Default::default() };
            let (lib, _) = bootstrap::open_library(&cfg, &opts)?;
            let req = SimilarRequest { seeds: seed_id, title, abstract_text, space: None, k, threshold, exact };
            let resp = lib.similar(&req)?;
            out.emit(json!(resp), || {
                resp.hits
                    .iter()
                    .enumerate()
                    .map(|(i, h)| format!("{:>3}  {:.4}  {:<12} {}\n", i + 1, h.score, h.paper_id, h.title))
                    .collect()
            });
        }
        Verb::Chat { session, message, space, mock_llm } => {
            let opts = LoadOptions { space, mock_llm, ..Default::default() };
            let (lib, _) = bootstrap::open_library(&cfg, &opts)?;
            let outcome = lib.chat(&session, &message, None)?;
            out.emit(json!(outcome), || {
                let mut s = format!("{}\n", outcome.reply.text);
                for m in &outcome.grounding.mentions {
                    match &m.matched_id {
                        Some(id) => s.push_str(&format!("  cited {id}: {}\n", m.surface_text)),
                        None => s.push_str(&format!("  unverified: {}\n", m.surface_text)),
                    }
                }
                s
            });
        }
        Verb::Sample { n, seed, space, dimension } => {
            let space = space_or(&space);
            let dim = dimension.unwrap_or(cfg.embedding.dimension);
            let w = bootstrap::write_sample(&layout, n, seed, &space, dim)?;
            out.emit(json!(w), || {
                format!("wrote {} papers to {} and {}\n", w.records, w.corpus.display(), w.embeddings.display())
            });
        }
        Verb::Serve { corpus, embeddings, projection, space, port, bind, mock_llm, ui_dir } => {
            let opts = LoadOptions { corpus, embeddings, projection, space, mock_llm, ephemeral: false };
            let (lib, report) = bootstrap::open_library(&cfg, &opts)?;
            warn_rejections("corpus", &report.corpus);
            let bind = match bind {
                Some(b) => b,
                None => cfg.server.bind.parse().map_err(|_| Failure::User(format!("invalid bind address {}", cfg.server.bind)))?,
            };
            let addr = SocketAddr::new(bind, port.unwrap_or(cfg.server.port));
            let ropts = RouterOptions { cors_origin: cfg.server.cors_origin.clone(), ui_dir };
            let h = lib.health();
            eprintln!("serving {} papers, spaces {:?}, on http://{addr}", h.papers, h.spaces);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Internal(e.to_string()))?;
            rt.block_on(paperscope_server::serve(Arc::new(lib), addr, &ropts)).map_err(|e| match e {
                paperscope_server::ServerError::Serve(_) => Failure::Internal(e.to_string()),
                _ => Failure::User(e.to_string()),
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let default_filter = if matches!(cli.verb, Verb::Serve { .. }) { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_filter));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(2)
        }
    }
}
