//! Tabular reports rendered as CSV or JSON and written atomically.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Flag(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            // 17 significant digits round-trip every f64.
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Flag(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Flag(v) => Value::Bool(*v),
            Cell::Text(s) => Value::String(s.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }
}

/// A command's output: free-text notes plus named tables holding every number.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub notes: Vec<(String, String)>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.push((key.to_string(), value.into()));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn render_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.notes {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        for (i, t) in self.tables.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&format!("# table: {}\n", t.name));
            out.push_str(&t.columns.join(","));
            out.push('\n');
            for row in &t.rows {
                let line: Vec<String> = row.iter().map(Cell::csv).collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
        }
        out
    }

    fn render_json(&self) -> String {
        let mut root = Map::new();
        if !self.notes.is_empty() {
            let notes: Map<String, Value> =
                self.notes.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
            root.insert("notes".into(), Value::Object(notes));
        }
        for t in &self.tables {
            let rows = t
                .rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> =
                        t.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                    Value::Object(obj)
                })
                .collect();
            root.insert(t.name.clone(), Value::Array(rows));
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("JSON values always serialize");
        s.push('\n');
        s
    }
}

/// Writes `content` to `path`, or to stdout when `path` is `-`. Files are
/// written to a temporary sibling and renamed into place.
pub fn write_output(path: &str, content: &str) -> Result<()> {
    if path == "-" {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        lock.write_all(content.as_bytes())?;
        lock.flush()?;
        return Ok(());
    }
    let target = Path::new(path);
    let dir = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(content.as_bytes())?;
    tmp.flush()?;
    tmp.persist(target).with_context(|| format!("writing {path}"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::default();
        r.note("mechanism", "grr(d=3, lambda=2)");
        let mut t = Table::new("values", &["name", "x", "k", "ok"]);
        t.push(vec!["a,b".into(), 0.1.into(), 3usize.into(), true.into()]);
        t.push(vec!["c".into(), f64::NAN.into(), 4usize.into(), false.into()]);
        r.tables.push(t);
        r
    }

    #[test]
    fn csv_uses_seventeen_digits_and_quotes() {
        let s = sample().render(Format::Csv);
        assert!(s.contains("\"a,b\",1.0000000000000001e-1,3,true"), "{s}");
        assert!(s.starts_with("# mechanism: grr(d=3, lambda=2)\n# table: values\nname,x,k,ok\n"));
    }

    #[test]
    fn json_round_trips_floats() {
        let s = sample().render(Format::Json);
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["values"][0]["x"].as_f64(), Some(0.1));
        assert!(v["values"][1]["x"].is_null());
        assert_eq!(v["notes"]["mechanism"], "grr(d=3, lambda=2)");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        std::fs::write(&p, "old").unwrap();
        write_output(p.to_str().unwrap(), "new\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "new\n");
    }
}
