//! Versioned CSV tables and JSON envelopes.
//!
//! Every CSV file starts with a `#schema=<name>/<version>` line ahead of the
//! header row. Readers name the schema they understand and reject anything else.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const ONLINE_TRACE_SCHEMA: &str = "mmw-sketch/online-trace/1";
pub const BENCH_LANCZOS_SCHEMA: &str = "mmw-sketch/bench-lanczos/1";

/// Fields holding wall-clock data; excluded when comparing reruns.
pub const VOLATILE_FIELDS: [&str; 2] = ["wall_ns", "generated_unix_s"];

const SCHEMA_PREFIX: &str = "#schema=";

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_versioned_csv<R: Serialize>(path: &Path, schema: &str, rows: &[R]) -> CliResult<()> {
    let mut buf = format!("{SCHEMA_PREFIX}{schema}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in rows {
            w.serialize(row).map_err(|e| CliError::Output(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

/// Reads a CSV written by [`write_versioned_csv`], failing on a missing or
/// different schema line.
pub fn read_versioned_csv<R: DeserializeOwned>(path: &Path, schema: &str) -> CliResult<Vec<R>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| CliError::io(path, e))?;
    let found = first
        .trim_end()
        .strip_prefix(SCHEMA_PREFIX)
        .ok_or_else(|| CliError::Output(format!("{}: missing schema line", path.display())))?;
    if found != schema {
        return Err(CliError::Output(format!(
            "{}: unsupported schema `{found}` (expected `{schema}`)",
            path.display()
        )));
    }
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<Result<Vec<R>, _>>()
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// Common wrapper for JSON summaries.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub generated_unix_s: u64,
    pub config: &'a C,
    pub results: &'a R,
}

impl<'a, C: Serialize, R: Serialize> Envelope<'a, C, R> {
    pub fn new(command: &'a str, config: &'a C, results: &'a R) -> Self {
        Self {
            tool: "mmw-sketch",
            version: mmw_sketch::VERSION,
            command,
            generated_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            config,
            results,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

/// Drops volatile fields at any depth, so two runs can be compared.
pub fn strip_volatile(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            for key in VOLATILE_FIELDS {
                map.remove(key);
            }
            map.values_mut().for_each(strip_volatile);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}

/// Drops the `wall_ns` column from a versioned CSV payload.
pub fn strip_volatile_csv(text: &str) -> String {
    let mut lines = text.lines();
    let mut out = String::new();
    let Some(schema) = lines.next() else {
        return out;
    };
    out.push_str(schema);
    out.push('\n');
    let Some(header) = lines.next() else {
        return out;
    };
    let cols: Vec<&str> = header.split(',').collect();
    let keep: Vec<bool> = cols.iter().map(|c| !VOLATILE_FIELDS.contains(c)).collect();
    for line in std::iter::once(header).chain(lines) {
        let kept: Vec<&str> = line
            .split(',')
            .zip(&keep)
            .filter_map(|(f, k)| k.then_some(f))
            .collect();
        out.push_str(&kept.join(","));
        out.push('\n');
    }
    out
}

pub const OUT_DIR_ENV: &str = "MMW_SKETCH_OUT_DIR";

/// Output directory used when neither a flag nor a config file names one.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from("mmw-sketch-out"), PathBuf::from)
}
