use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::Format;
use crate::config::ConfigFile;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub type Record = Map<String, Value>;

/// What a subcommand produced: one report or a table of rows.
#[derive(Debug, Clone)]
pub enum Body {
    Single(Record),
    Table(Vec<Record>),
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// `<command>/v<N>`; the CSV header and JSON record layout are fixed per schema.
    pub schema: String,
    pub parameters: ConfigFile,
    pub seed: Option<u64>,
    pub threads: usize,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn schema_for(command: &str) -> String {
        format!("{command}/v{SCHEMA_VERSION}")
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.to_string(),
            (_, Some(u)) => u.to_string(),
            // 17 significant digits round-trip any double
            _ => format!("{:.16e}", n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn render_csv(body: &Body) -> Result<String, CliError> {
    let rows: Vec<&Record> = match body {
        Body::Single(r) => vec![r],
        Body::Table(rows) => rows.iter().collect(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        w.write_record(first.keys())
            .map_err(|e| CliError::io(e.to_string()))?;
    }
    for row in rows {
        w.write_record(row.values().map(csv_cell))
            .map_err(|e| CliError::io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::io(e.to_string()))
}

/// A single report keeps its fields at the top level; tables go under
/// `records`. The manifest is embedded either way.
pub fn render_json(body: &Body, manifest: &Manifest) -> Result<String, CliError> {
    let mut doc = Map::new();
    doc.insert("schema".into(), Value::String(manifest.schema.clone()));
    match body {
        Body::Single(r) => doc.extend(r.clone()),
        Body::Table(rows) => {
            doc.insert(
                "records".into(),
                Value::Array(rows.iter().cloned().map(Value::Object).collect()),
            );
        }
    }
    doc.insert(
        "manifest".into(),
        serde_json::to_value(manifest).map_err(|e| CliError::io(e.to_string()))?,
    );
    let mut text = serde_json::to_string_pretty(&Value::Object(doc))
        .map_err(|e| CliError::io(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes the result to `out` (plus sidecar manifest) or to stdout.
pub fn emit(
    body: &Body,
    format: Format,
    out: Option<&Path>,
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    if let Some(path) = out {
        manifest.outputs = vec![path.to_path_buf(), sidecar_path(path)];
    }
    let text = match format {
        Format::Csv => render_csv(body)?,
        Format::Json => render_json(body, manifest)?,
    };
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => {
            write(path, &text)?;
            let mut side =
                serde_json::to_string_pretty(manifest).map_err(|e| CliError::io(e.to_string()))?;
            side.push('\n');
            write(&sidecar_path(path), &side)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}
