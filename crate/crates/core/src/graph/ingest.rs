//! Readers for payments files (CSV with header, or JSON lines).

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::DateTime;
use serde_json::Value;

use super::{Address, PaymentEdge, PaymentGraph, Window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub window: Option<Window>,
}

/// Parses an RFC 3339 instant or integer Unix seconds.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    DateTime::parse_from_rfc3339(raw)
        .ok()
        .map(|dt| dt.timestamp())
}

fn parse_value(raw: &str, line: u64) -> Result<f64> {
    let value: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::record(line, format!("value_usd {raw:?} is not a decimal number")))?;
    if !value.is_finite() {
        return Err(Error::record(
            line,
            format!("value_usd {raw:?} is not finite"),
        ));
    }
    if value < 0.0 {
        return Err(Error::record(
            line,
            format!("value_usd {raw:?} is negative"),
        ));
    }
    Ok(value)
}

fn build_edge(line: u64, payer: &str, payee: &str, value: &str, ts: &str) -> Result<PaymentEdge> {
    let payer = Address::new(payer).map_err(|_| Error::record(line, "payer is empty"))?;
    let payee = Address::new(payee).map_err(|_| Error::record(line, "payee is empty"))?;
    let value_usd = parse_value(value, line)?;
    let timestamp = parse_timestamp(ts).ok_or_else(|| {
        Error::record(
            line,
            format!("timestamp {ts:?} is not RFC 3339 or Unix seconds"),
        )
    })?;
    Ok(PaymentEdge {
        payer,
        payee,
        value_usd,
        timestamp,
    })
}

fn push(graph: &mut PaymentGraph, line: u64, edge: PaymentEdge) -> Result<()> {
    graph
        .add_payment(edge)
        .map(|_| ())
        .map_err(|e| Error::record(line, e.to_string()))
}

/// Reads payments CSV. A header row naming `payer`, `payee`, `value_usd` and
/// `timestamp` is required; extra columns are ignored.
pub fn read_payments_csv<R: Read>(reader: R, opts: IngestOptions) -> Result<PaymentGraph> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::record(1, format!("header is missing column `{name}`")))
    };
    let (payer_col, payee_col, value_col, ts_col) = (
        column("payer")?,
        column("payee")?,
        column("value_usd")?,
        column("timestamp")?,
    );

    let mut graph = match opts.window {
        Some(w) => PaymentGraph::with_window(w),
        None => PaymentGraph::new(),
    };
    for result in rdr.records() {
        let record = result.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize| -> Result<&str> {
            record
                .get(idx)
                .ok_or_else(|| Error::record(line, "record has too few fields"))
        };
        let edge = build_edge(
            line,
            field(payer_col)?,
            field(payee_col)?,
            field(value_col)?,
            field(ts_col)?,
        )?;
        push(&mut graph, line, edge)?;
    }
    Ok(graph)
}

fn csv_error(err: csv::Error, fallback_line: u64) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(fallback_line);
    Error::record(line, err.to_string())
}

fn json_field(obj: &serde_json::Map<String, Value>, key: &str, line: u64) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(other) => Err(Error::record(
            line,
            format!("field `{key}` has unsupported type: {other}"),
        )),
        None => Err(Error::record(line, format!("missing field `{key}`"))),
    }
}

/// Reads payments as JSON lines, one object per line. Blank lines are skipped.
pub fn read_payments_jsonl<R: Read>(reader: R, opts: IngestOptions) -> Result<PaymentGraph> {
    let mut graph = match opts.window {
        Some(w) => PaymentGraph::with_window(w),
        None => PaymentGraph::new(),
    };
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx as u64 + 1;
        let line = line.map_err(|e| Error::record(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| Error::record(lineno, format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::record(lineno, "expected a JSON object"))?;
        let edge = build_edge(
            lineno,
            &json_field(obj, "payer", lineno)?,
            &json_field(obj, "payee", lineno)?,
            &json_field(obj, "value_usd", lineno)?,
            &json_field(obj, "timestamp", lineno)?,
        )?;
        push(&mut graph, lineno, edge)?;
    }
    Ok(graph)
}

/// Reads a payments file, choosing JSON lines for `.jsonl`/`.ndjson`
/// extensions and CSV otherwise.
pub fn read_payments(path: &Path, opts: IngestOptions) -> Result<PaymentGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let is_jsonl = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson")
    );
    if is_jsonl {
        read_payments_jsonl(file, opts)
    } else {
        read_payments_csv(file, opts)
    }
}
