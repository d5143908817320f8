//! Report documents and atomic file output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use foldkit_core::{FoldError, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "foldkit";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Keys naming output destinations; they are not part of a run's identity.
pub const OUTPUT_KEYS: [&str; 6] = ["out", "csv", "plan_csv", "acts", "report", "config"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub kind: String,
    pub index_name: String,
    pub index: Vec<Value>,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(kind: &str, index_name: &str, index: Vec<Value>) -> Self {
        Table {
            kind: kind.into(),
            index_name: index_name.into(),
            index,
            columns: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<Value>) {
        self.columns.push(Column {
            name: name.into(),
            values,
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = csv_cell(&Value::String(self.index_name.clone()));
        for c in &self.columns {
            out.push(',');
            out.push_str(&csv_cell(&Value::String(c.name.clone())));
        }
        out.push('\n');
        for (row, idx) in self.index.iter().enumerate() {
            out.push_str(&csv_cell(idx));
            for c in &self.columns {
                out.push(',');
                out.push_str(&csv_cell(&c.values[row]));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::String(s) if s.contains([',', '"', '\n']) => {
            format!("\"{}\"", s.replace('"', "\"\""))
        }
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// A single command's output document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: BTreeMap<String, Value>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputRef>,
    pub table: Option<Table>,
    pub results: Value,
}

impl Report {
    pub fn new<A: Serialize>(command: &str, args: &A) -> Result<Self> {
        Ok(Report {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            config: effective_config(args)?,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            table: None,
            results: Value::Null,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// The argument struct as a flat map, minus output destinations.
pub fn effective_config<A: Serialize>(args: &A) -> Result<BTreeMap<String, Value>> {
    let Value::Object(map) =
        serde_json::to_value(args).map_err(|e| FoldError::argument(e.to_string()))?
    else {
        return Err(FoldError::argument("arguments did not serialize to a map"));
    };
    Ok(map
        .into_iter()
        .filter(|(k, _)| !OUTPUT_KEYS.contains(&k.as_str()))
        .collect())
}

/// Renders an effective config back into `key = value` lines.
pub fn config_to_text(config: &BTreeMap<String, Value>) -> String {
    let mut out = String::new();
    for (k, v) in config {
        let text = match v {
            Value::Null => continue,
            Value::String(s) => s.clone(),
            Value::Array(items) => {
                if items.is_empty() {
                    continue;
                }
                items.iter().map(csv_cell).collect::<Vec<_>>().join(",")
            }
            other => other.to_string(),
        };
        out.push_str(&format!("{k} = {text}\n"));
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// `std::fs::read` with the path in the error message.
pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        FoldError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn input_ref(path: &Path) -> Result<InputRef> {
    let bytes = read_file(path)?;
    Ok(InputRef {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| FoldError::Io(e.error))?;
    Ok(())
}

/// Writes to `path` when given, otherwise to stdout.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, contents.as_bytes()),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub path: String,
    pub sha256: String,
    pub command: String,
    pub config: BTreeMap<String, Value>,
    pub seeds: BTreeMap<String, u64>,
}

/// Several reports merged into one table per kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub sources: Vec<Source>,
    pub tables: Vec<Table>,
}

impl MergedReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

/// Merges reports column-wise. Tables of the same kind must share their
/// index; column names are prefixed with the file stem only when they
/// would otherwise collide.
pub fn merge_reports(paths: &[PathBuf]) -> Result<MergedReport> {
    if paths.is_empty() {
        return Err(FoldError::argument("report needs at least one input"));
    }
    let bad = |p: &Path, msg: String| FoldError::format(0, format!("{}: {msg}", p.display()));
    let mut sources = Vec::new();
    let mut tables: Vec<(Table, Vec<String>)> = Vec::new();
    for path in paths {
        let bytes = read_file(path)?;
        let report: Report =
            serde_json::from_slice(&bytes).map_err(|e| bad(path, format!("not a report: {e}")))?;
        if report.tool != TOOL {
            return Err(bad(
                path,
                format!("written by {:?}, not {TOOL}", report.tool),
            ));
        }
        let Some(table) = report.table.clone() else {
            return Err(bad(
                path,
                format!("`{}` report carries no table", report.command),
            ));
        };
        if table
            .columns
            .iter()
            .any(|c| c.values.len() != table.index.len())
        {
            return Err(bad(path, "column length differs from index length".into()));
        }
        sources.push(Source {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            command: report.command,
            config: report.config,
            seeds: report.seeds,
        });
        match tables.iter_mut().find(|(t, _)| t.kind == table.kind) {
            Some((t, owners)) => {
                if t.index_name != table.index_name || t.index != table.index {
                    return Err(bad(
                        path,
                        format!(
                            "{} index does not match earlier {} inputs",
                            table.index_name, table.kind
                        ),
                    ));
                }
                for c in table.columns {
                    t.columns.push(c);
                    owners.push(stem(path));
                }
            }
            None => {
                let owners = vec![stem(path); table.columns.len()];
                tables.push((table, owners));
            }
        }
    }
    let tables = tables
        .into_iter()
        .map(|(mut t, owners)| {
            let names: Vec<String> = t.columns.iter().map(|c| c.name.clone()).collect();
            for (i, c) in t.columns.iter_mut().enumerate() {
                if names.iter().filter(|n| **n == names[i]).count() > 1 {
                    c.name = format!("{}:{}", owners[i], names[i]);
                }
            }
            t
        })
        .collect();
    Ok(MergedReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        command: "report".into(),
        sources,
        tables,
    })
}
