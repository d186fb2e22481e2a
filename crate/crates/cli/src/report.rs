use std::collections::BTreeMap;
use std::path::PathBuf;

use arena_core::progress::{aggregate, sem, AggregationMethod, FrameScoreSeries};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{jsonl_files, read_jsonl};
use crate::{CliError, Format, Global};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupBy {
    Environment,
    Perturbation,
    None,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory of series files (`*.jsonl`).
    dir: PathBuf,
    #[arg(long, value_enum, default_value = "environment")]
    group_by: GroupBy,
}

/// A score series tagged with where it came from.
#[derive(Debug, Deserialize)]
struct TaggedSeries {
    policy: String,
    #[serde(default)]
    environment: Option<String>,
    /// `BG`, `COLOR`, `OBJ_POSE`; absent for unperturbed runs.
    #[serde(default)]
    perturbation: Option<String>,
    #[serde(flatten)]
    series: FrameScoreSeries,
}

#[derive(Debug, Serialize)]
pub struct ReportRow {
    pub policy: String,
    pub group: String,
    pub mean: f64,
    /// Empty for single-series groups.
    pub sem: Option<f64>,
    pub n: usize,
}

pub fn run(global: &Global, args: Args) -> Result<(), CliError> {
    if !args.dir.is_dir() {
        return Err(CliError::input(format!("{}: not a directory", args.dir.display())));
    }
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for file in jsonl_files(&args.dir)? {
        for t in read_jsonl::<TaggedSeries>(&file)? {
            let value = aggregate(&t.series, AggregationMethod::Final30)
                .map_err(|e| CliError::input(format!("{}: {}: {e}", file.display(), t.series.execution_id())))?
                .value;
            let group = match args.group_by {
                GroupBy::Environment => t.environment.unwrap_or_else(|| "unknown".into()),
                GroupBy::Perturbation => t.perturbation.unwrap_or_else(|| "none".into()),
                GroupBy::None => "all".into(),
            };
            groups.entry((t.policy, group)).or_default().push(value);
        }
    }
    if groups.is_empty() {
        return Err(CliError::input(format!("{}: no score series found", args.dir.display())));
    }
    let rows: Vec<ReportRow> = groups
        .into_iter()
        .map(|((policy, group), values)| ReportRow {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            sem: sem(&values).ok(),
            n: values.len(),
            policy,
            group,
        })
        .collect();
    let text = match global.format {
        Some(Format::Json) => serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n",
        _ => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(|e| CliError::input(e.to_string()))?;
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
        }
    };
    global.emit(&text)
}
