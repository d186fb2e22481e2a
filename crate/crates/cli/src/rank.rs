use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use arena_core::ranking::{leaderboard, ComparisonRecord, Leaderboard, RankingError};
use serde_json::Value;

use crate::{CliError, Format, Global};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Comparison log (JSONL); service event logs are accepted too.
    log: PathBuf,
    /// Significance level of the confidence bands.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

/// Reads comparison records. Lines carrying an event envelope contribute
/// their payload when they are preference events and are skipped otherwise.
pub fn read_records(path: &Path) -> Result<Vec<ComparisonRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: String| CliError::input(format!("{}:{}: {e}", path.display(), i + 1));
        let value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let value = match value.get("type").and_then(Value::as_str) {
            Some("preference_recorded") => value["payload"].clone(),
            Some(_) => continue,
            None => value,
        };
        let record: ComparisonRecord = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
        record.validate().map_err(|e| bad(e.to_string()))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(CliError::input(format!("{}: no comparison records", path.display())));
    }
    Ok(records)
}

pub fn table(board: &Leaderboard) -> String {
    let width = board.entries.iter().map(|e| e.policy.as_str().len()).max().unwrap_or(6).max(6);
    let level = format!("{:.0}% CI", 100.0 * (1.0 - board.alpha));
    let mut out = format!(
        "{:>4}  {:<width$}  {:>10}  {:>10}  {:>23}  {:>8}  {:>9}\n",
        "rank", "policy", "beta", "theta", level, "decisive", "W/L/T"
    );
    for e in &board.entries {
        let ci = e
            .interval
            .map(|i| format!("[{:.4}, {:.4}]", i.lower, i.upper))
            .unwrap_or_else(|| "-".into());
        let decisive = match e.decisive {
            Some(true) => "yes",
            Some(false) => "no",
            None => "-",
        };
        let r = e.records;
        let _ = writeln!(
            out,
            "{:>4}  {:<width$}  {:>10.4}  {:>10.4}  {:>23}  {:>8}  {:>9}",
            e.rank,
            e.policy.as_str(),
            e.beta,
            e.theta,
            ci,
            decisive,
            format!("{}/{}/{}", r.wins, r.losses, r.ties)
        );
    }
    if !board.flags.is_empty() {
        let flags: Vec<_> = board.flags.iter().map(|f| format!("{f:?}").to_uppercase()).collect();
        let _ = writeln!(out, "flags: {}", flags.join(", "));
    }
    out
}

pub fn run(global: &Global, args: Args) -> Result<(), CliError> {
    let records = read_records(&args.log)?;
    let board = leaderboard(&records, args.alpha).map_err(|e| match e {
        RankingError::GraphDisconnected { components } => {
            let groups: Vec<String> = components
                .iter()
                .map(|c| c.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(", "))
                .collect();
            CliError::infeasible(format!(
                "comparison graph is disconnected; components: {}",
                groups.iter().map(|g| format!("{{{g}}}")).collect::<Vec<_>>().join(" ")
            ))
        }
        RankingError::EmptyDecisiveSet => CliError::infeasible("no decisive comparisons to fit"),
        other => CliError::input(other.to_string()),
    })?;
    let json = serde_json::to_string_pretty(&board).expect("leaderboard serializes") + "\n";
    match (&global.output, global.format) {
        (Some(_), _) => {
            global.emit(&json)?;
            print!("{}", table(&board));
        }
        (None, Some(Format::Json)) => print!("{json}"),
        (None, _) => print!("{}", table(&board)),
    }
    Ok(())
}
