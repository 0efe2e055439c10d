use std::io::Write;

use serde::Serialize;

use super::config::ScenarioConfig;
use super::run::{AggregateRow, ResultRow};
use crate::error::{Error, Result};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const RESULT_COLUMNS: [&str; 12] = [
    "scenario",
    "seed",
    "method",
    "sweep_var",
    "sweep_value",
    "E_P_joules",
    "E_M_joules",
    "E_F_joules",
    "num_links",
    "alternations",
    "wall_ms",
    "status",
];

/// Comment line written above the column header.
pub fn header_comment(cfg: &ScenarioConfig, kind: &str) -> String {
    format!(
        "# d2d-energy {kind} schema={CSV_SCHEMA_VERSION} config_sha256={}",
        cfg.hash()
    )
}

fn write_table<W: Write, T: Serialize>(mut out: W, comment: &str, rows: &[T], columns: &[&str]) -> Result<()> {
    writeln!(out, "{comment}")?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(columns).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_results<W: Write>(out: W, cfg: &ScenarioConfig, rows: &[ResultRow]) -> Result<()> {
    write_table(out, &header_comment(cfg, "results"), rows, &RESULT_COLUMNS)
}

pub fn results_csv(cfg: &ScenarioConfig, rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_results(&mut buf, cfg, rows).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8 output")
}

pub const AGGREGATE_COLUMNS: [&str; 10] = [
    "scenario",
    "method",
    "sweep_var",
    "sweep_value",
    "count",
    "failures",
    "mean_E_P_joules",
    "best_E_P_joules",
    "mean_E_M_joules",
    "mean_E_F_joules",
];

pub fn write_aggregates<W: Write>(out: W, cfg: &ScenarioConfig, rows: &[AggregateRow]) -> Result<()> {
    write_table(out, &header_comment(cfg, "aggregates"), rows, &AGGREGATE_COLUMNS)
}

/// Parses a results file written by [`write_results`].
pub fn read_results(text: &str) -> Result<Vec<ResultRow>> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(RESULT_COLUMNS.iter().copied()) {
        return Err(Error::Format(format!("unexpected columns {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}
