//! Report emission: JSON documents and CSV tables, to stdout or a file.
//!
//! Every emitted document embeds the fully resolved run configuration,
//! so a consumer can reproduce the run from the output alone. JSON
//! documents carry a schema version; CSV tables carry the
//! configuration as a leading comment line followed by an RFC-style
//! header row.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

/// Version of the emitted JSON document layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// One report body: a JSON value, a table that can also render as CSV
/// rows, or both (the table is the CSV projection of the report).
pub enum Payload {
    Report(Value),
    Table {
        header: Vec<&'static str>,
        rows: Vec<Vec<String>>,
    },
    Dual {
        header: Vec<&'static str>,
        rows: Vec<Vec<String>>,
        report: Value,
    },
}

/// A finished command: resolved configuration, report body, and the
/// verdict that decides the exit code.
pub struct Outcome {
    pub config: Value,
    pub payload: Payload,
    pub pass: bool,
}

/// Command failure classes; they map onto the exit-code contract
/// (1 = violation or runtime failure, 2 = usage).
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<satlab_core::Error> for Failure {
    fn from(e: satlab_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn render_json(config: &Value, report: &Value) -> String {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "report": report,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("report serialization");
    s.push('\n');
    s
}

fn render_csv(config: &Value, header: &[&'static str], rows: &[Vec<String>]) -> String {
    let mut out = format!("# config {config}\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("csv header");
    for row in rows {
        w.write_record(row).expect("csv row");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8"));
    out
}

/// Renders the outcome in the requested format and writes it to `out`
/// or stdout. Tables render in both formats; plain reports are
/// JSON-only and reject a CSV request upstream.
pub fn emit(outcome: &Outcome, format: Format, out: Option<&Path>) -> io::Result<()> {
    let text = match (&outcome.payload, format) {
        (Payload::Report(report), Format::Json) => render_json(&outcome.config, report),
        (Payload::Report(_), Format::Csv) => {
            unreachable!("csv requests are rejected before dispatch")
        }
        (Payload::Table { header, rows }, Format::Csv) => {
            render_csv(&outcome.config, header, rows)
        }
        (Payload::Table { header, rows }, Format::Json) => {
            let report = json!({
                "columns": header,
                "rows": rows,
            });
            render_json(&outcome.config, &report)
        }
        (Payload::Dual { report, .. }, Format::Json) => render_json(&outcome.config, report),
        (Payload::Dual { header, rows, .. }, Format::Csv) => {
            render_csv(&outcome.config, header, rows)
        }
    };
    match out {
        Some(path) => fs::write(path, text),
        None => io::stdout().write_all(text.as_bytes()),
    }
}
