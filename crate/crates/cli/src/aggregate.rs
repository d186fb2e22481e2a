use std::path::PathBuf;

use arena_core::progress::{aggregate, AggregationMethod, FrameScoreSeries};
use serde::Serialize;

use crate::error::read_jsonl;
use crate::{CliError, Format, Global};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Series file (JSONL of {execution_id, frame_indices, scores}).
    series: PathBuf,
    #[arg(long, default_value = "FINAL_30")]
    method: AggregationMethod,
}

#[derive(Serialize)]
struct Row<'a> {
    execution_id: &'a str,
    method: AggregationMethod,
    value: f64,
}

pub fn run(global: &Global, args: Args) -> Result<(), CliError> {
    let series: Vec<FrameScoreSeries> = read_jsonl(&args.series)?;
    let mut rows = Vec::with_capacity(series.len());
    for s in &series {
        let agg = aggregate(s, args.method).map_err(|e| CliError::input(format!("{}: {e}", s.execution_id())))?;
        rows.push(Row { execution_id: s.execution_id(), method: args.method, value: agg.value });
    }
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
