use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use arena_service::{Arena, ArenaConfig, EventLog, QuizConfig, SharedArena, SystemClock};

use crate::{CliError, Global};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Event log; replayed on startup and appended to afterwards.
    #[arg(long)]
    log: PathBuf,
    /// Gold-pair quiz definition with exactly ten pairs.
    #[arg(long)]
    quiz: PathBuf,
    /// Seconds an issued pair stays open.
    #[arg(long, default_value_t = 1800)]
    pair_ttl: i64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

pub fn run(global: &Global, args: Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.quiz).map_err(|e| CliError::io(&args.quiz, e))?;
    let quiz: QuizConfig = serde_json::from_str(&text).map_err(|e| CliError::io(&args.quiz, e))?;
    let config = ArenaConfig { seed: global.seed, pair_ttl_seconds: args.pair_ttl, quiz, alpha: args.alpha };
    let log = EventLog::open(&args.log).map_err(|e| CliError::io(&args.log, e))?;
    let arena = Arena::open(config, Arc::new(SystemClock), log).map_err(|e| CliError::input(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::input(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.addr)
            .await
            .map_err(|e| CliError::input(format!("{}: {e}", args.addr)))?;
        eprintln!("listening on {}", listener.local_addr().map_err(|e| CliError::input(e.to_string()))?);
        arena_service::http::serve(listener, SharedArena::new(arena))
            .await
            .map_err(|e| CliError::input(e.to_string()))
    })
}
