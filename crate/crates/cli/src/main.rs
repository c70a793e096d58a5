use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vscript::domain::TimeOfDay;
use vscript::metrics::{evaluate, EvalInput, Metric};
use vscript::pipeline::PresentationView;
use vscript::scene::BanList;
use vscript::video::{build_database, load_index, retrieve_clip, save_index, RetrievalConstraints};
use vscript::{Backends, Engine, EngineConfig, Genre, Orchestrator, SessionManager, SessionStatus, SessionStore};

#[derive(Parser)]
#[command(
    name = "vscript",
    version,
    about = "Genre-controlled script generation with clip retrieval"
)]
struct Cli {
    /// JSON engine configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a script and its presentation.
    Generate(GenerateArgs),
    /// Build or query the video database.
    #[command(subcommand)]
    Db(DbCommand),
    /// Score texts with the automatic metrics.
    Eval(EvalArgs),
    /// Serve the HTTP API (and optionally a static UI bundle).
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    genre: Genre,
    #[arg(long)]
    start: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write script.txt, script.json, presentation.json and session.json here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DbCommand {
    Build {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        genre: Option<Genre>,
        /// day or night
        #[arg(long)]
        time: Option<TimeOfDay>,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// One text per line.
    #[arg(long)]
    candidates: PathBuf,
    /// One text per line, paired with candidates by position.
    #[arg(long)]
    references: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "distinct,repeat")]
    metrics: Vec<String>,
    /// Target genre for genre accuracy.
    #[arg(long)]
    genre: Option<Genre>,
    /// Show sentence similarity multiplied by 100.
    #[arg(long)]
    percent: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Directory with a built UI bundle.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    Ok(match path {
        Some(p) => EngineConfig::load_relative(p)?,
        None => EngineConfig::default(),
    })
}

fn engine(cfg: &EngineConfig, index: Option<PathBuf>) -> Result<Engine> {
    let mut cfg = cfg.clone();
    if index.is_some() {
        cfg.index_path = index;
    }
    let backends = Backends::from_urls(&cfg.resolved_backends());
    Ok(Engine::from_config(backends, cfg)?)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::to_string)
        .filter(|l| !l.trim().is_empty())
        .collect())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn generate(cfg: &EngineConfig, args: GenerateArgs) -> Result<()> {
    let engine = engine(cfg, args.index)?;
    let session = engine.run_pipeline(args.genre, &args.start, args.seed);
    if session.status != SessionStatus::Complete {
        let f = session.failure.unwrap_or_else(|| vscript::session::StageFailure {
            stage: "pipeline".into(),
            cause: "unknown".into(),
        });
        bail!("{} stage failed: {}", f.stage, f.cause);
    }
    for w in &session.warnings {
        log::warn!("{w}");
    }
    let text = session.rendered_script();
    if let Some(out) = args.out {
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("script.txt"), &text)?;
        write_json(&out.join("script.json"), &session.script)?;
        write_json(&out.join("presentation.json"), &PresentationView::of(&session))?;
        write_json(&out.join("session.json"), &session)?;
        eprintln!("wrote {}", out.display());
    }
    println!("{text}");
    Ok(())
}

fn db(cfg: &EngineConfig, cmd: DbCommand) -> Result<()> {
    let backends = Backends::from_urls(&cfg.resolved_backends());
    match cmd {
        DbCommand::Build {
            annotations,
            captions,
            out,
        } => {
            let banlist = match &cfg.banlist_path {
                Some(p) => BanList::load(p, cfg.banlist_mode)?,
                None => BanList::builtin(),
            };
            let (index, report) = build_database(&captions, &annotations, &backends, &banlist)?;
            save_index(&index, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        DbCommand::Query {
            index,
            text,
            genre,
            time,
            top,
        } => {
            let index = load_index(&index)?;
            let constraints = RetrievalConstraints {
                genre: genre.filter(|g| !g.is_free()),
                time_of_day: time,
                ..Default::default()
            };
            let r = retrieve_clip(backends.embedder.as_ref(), &text, &index, &constraints)?;
            if r.relaxed() {
                eprintln!("relaxed filters: {:?}", r.relaxed_filters);
            }
            for hit in r.hits.iter().take(top) {
                println!(
                    "{:.6}\t{}\t{}\t{:.2}-{:.2}\t{}",
                    hit.score, hit.clip.id, hit.clip.video_uri, hit.clip.start_s, hit.clip.end_s, hit.clip.caption
                );
            }
        }
    }
    Ok(())
}

fn eval(cfg: &EngineConfig, args: EvalArgs) -> Result<()> {
    let metrics = args
        .metrics
        .iter()
        .map(|m| m.parse::<Metric>())
        .collect::<Result<Vec<_>, _>>()?;
    let input = EvalInput {
        candidates: read_lines(&args.candidates)?,
        references: args.references.as_deref().map(read_lines).transpose()?,
        target: args.genre,
    };
    let backends = Backends::from_urls(&cfg.resolved_backends());
    let mut report = evaluate(&backends, &input, &metrics)?;
    if args.percent {
        report.sent_sim = report.sent_sim.map(|s| s * 100.0);
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

async fn serve(cfg: &EngineConfig, args: ServeArgs) -> Result<()> {
    let engine = engine(cfg, args.index)?;
    let store = SessionStore::open(&cfg.session_dir)?;
    let orchestrator = Orchestrator::new(engine, SessionManager::new(Some(store)));
    let app = vscript::server::app(orchestrator, args.static_dir.as_deref());
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => tokio::task::block_in_place(|| generate(&cfg, a)),
        Command::Db(c) => tokio::task::block_in_place(|| db(&cfg, c)),
        Command::Eval(a) => tokio::task::block_in_place(|| eval(&cfg, a)),
        Command::Serve(a) => serve(&cfg, a).await,
    }
}
