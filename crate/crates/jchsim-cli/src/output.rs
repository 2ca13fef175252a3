//! Artifact files. CSV data carries a '#'-prefixed provenance block and 15
//! significant digits; JSON holds the same content in one document. Nothing
//! time-dependent is written, so identical configs give identical bytes.

use std::path::{Path, PathBuf};

use jchsim::SystemParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::{Experiment, Format};
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// 15 significant digits.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.14e}")
    } else {
        x.to_string()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine: String,
    pub experiment: Experiment,
    pub operation: String,
    pub config: Option<String>,
    pub params: Option<SystemParams>,
    /// Resolved experiment options.
    pub settings: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub provenance: Provenance,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Value,
}

fn header_lines(p: &Provenance) -> Vec<String> {
    let mut lines = vec![
        format!("engine = {}", p.engine),
        format!("experiment = {}", p.experiment),
        format!("operation = {}", p.operation),
    ];
    if let Some(c) = &p.config {
        lines.push(format!("config = {c}"));
    }
    if let Some(params) = &p.params {
        if let Value::Object(m) = serde_json::to_value(params).expect("params serialize") {
            lines.extend(m.iter().map(|(k, v)| format!("param {k} = {v}")));
        }
    }
    lines.extend(p.settings.iter().map(|(k, v)| format!("setting {k} = {v}")));
    lines
}

pub fn render_csv(a: &Artifact) -> Result<String, CliError> {
    let mut out = String::new();
    for line in header_lines(&a.provenance) {
        out.push_str("# ");
        out.push_str(&line);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Output(e.to_string());
    w.write_record(&a.columns).map_err(err)?;
    for row in &a.rows {
        w.write_record(row.iter().map(Cell::render)).map_err(err)?;
    }
    let body = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(out)
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

/// Writes the artifact files and returns their paths.
pub fn write_artifact(a: &Artifact, dir: &Path, stem: &str, format: Format) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)?;
    let files = match format {
        Format::Csv => {
            let summary = serde_json::json!({ "provenance": a.provenance, "summary": a.summary });
            vec![
                (dir.join(format!("{stem}.csv")), render_csv(a)?),
                (dir.join(format!("{stem}.summary.json")), pretty(&summary)),
            ]
        }
        Format::Json => vec![(dir.join(format!("{stem}.json")), pretty(a))],
    };
    for (path, text) in &files {
        std::fs::write(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
