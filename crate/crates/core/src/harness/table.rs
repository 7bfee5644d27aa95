//! Result tables and their CSV / JSON forms.
//!
//! The CSV starts with `# key: value` metadata lines, followed by a header row
//! and one row per sweep point. Column units live in the `units` metadata line.
//! Everything in the CSV is a function of the config, so reruns produce
//! identical bytes; wall time only appears in the JSON mirror.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Float(x) => write!(f, "{x}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl FromStr for Cell {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if let Ok(i) = s.parse::<i64>() {
            return Ok(Cell::Int(i));
        }
        if let Ok(x) = s.parse::<f64>() {
            return Ok(Cell::Float(x));
        }
        Ok(Cell::Text(s.to_string()))
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(i64::from(x))
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// Empty for dimensionless columns.
    pub unit: String,
}

impl Column {
    pub fn new(name: &str, unit: &str) -> Self {
        Column {
            name: name.to_string(),
            unit: unit.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    /// Ordered `key: value` pairs written ahead of the header.
    pub metadata: Vec<(String, String)>,
}

fn csv_err(e: impl fmt::Display) -> Error {
    Error::DegenerateInput(format!("malformed result table: {e}"))
}

impl ResultTable {
    pub fn new(columns: Vec<Column>) -> Self {
        ResultTable {
            columns,
            rows: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the schema");
        self.rows.push(row);
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn get(&self, row: usize, column: &str) -> Option<&Cell> {
        self.rows.get(row)?.get(self.column_index(column)?)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let units: Vec<&str> = self.columns.iter().map(|c| c.unit.as_str()).collect();
        out.push_str(&format!("# units: {}\n", units.join(",")));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.column_names()).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string())).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 input"));
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut metadata = Vec::new();
        let mut units = None;
        let mut body = 0;
        for line in text.split_inclusive('\n') {
            let Some(rest) = line.strip_prefix("# ") else { break };
            body += line.len();
            let rest = rest.trim_end_matches('\n');
            let (k, v) = rest.split_once(": ").ok_or_else(|| csv_err(format!("bad metadata line `{rest}`")))?;
            if k == "units" {
                units = Some(v.split(',').map(str::to_string).collect::<Vec<_>>());
            } else {
                metadata.push((k.to_string(), v.to_string()));
            }
        }
        let mut r = csv::ReaderBuilder::new().from_reader(text[body..].as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        let units = units.unwrap_or_else(|| vec![String::new(); header.len()]);
        if units.len() != header.len() {
            return Err(csv_err("units line does not match the header"));
        }
        let columns = header.iter().zip(&units).map(|(n, u)| Column::new(n, u)).collect();
        let mut table = ResultTable {
            columns,
            rows: Vec::new(),
            metadata,
        };
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            table.rows.push(rec.iter().map(|f| f.parse().expect("infallible")).collect());
        }
        Ok(table)
    }

    /// JSON mirror of the table, with the run's wall time alongside.
    pub fn to_json(&self, wall_time_s: Option<f64>) -> String {
        let meta: serde_json::Map<String, serde_json::Value> =
            self.metadata.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect();
        let doc = serde_json::json!({
            "metadata": meta,
            "wall_time_s": wall_time_s,
            "columns": self.columns,
            "rows": self.rows,
        });
        serde_json::to_string_pretty(&doc).expect("table serialises to JSON")
    }
}
