//! Tabular run reports with the run configuration echoed into every output.

use std::fmt;
use std::str::FromStr;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::husimi::{Q_MAX, Q_MIN};
use crate::metric::{HS_KAPPA, KAPPA_CONVENTION};
use crate::quadrature::QuadratureResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(Error::domain(format!("unknown output format '{s}'"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        })
    }
}

/// Settings that determine an output. The thread count is deliberately absent: it
/// does not change any result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub tol: f64,
    pub q_range: (f64, f64),
    pub output_format: OutputFormat,
    pub hs_kappa: f64,
    pub kappa_convention: String,
    pub version: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tol: 1e-6,
            q_range: (Q_MIN, Q_MAX),
            output_format: OutputFormat::Json,
            hs_kappa: HS_KAPPA,
            kappa_convention: KAPPA_CONVENTION.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// A table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) if x.is_finite() => {
                serde_json::Number::from_f64(*x).map_or_else(String::new, |n| n.to_string())
            }
            Cell::Num(_) | Cell::Empty => String::new(),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Num(x) if x.is_finite() => s.serialize_f64(*x),
            Cell::Num(_) | Cell::Empty => s.serialize_none(),
            Cell::Int(n) => s.serialize_u64(*n),
            Cell::Text(t) => s.serialize_str(t),
            Cell::Bool(b) => s.serialize_bool(*b),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Value and error columns of a quadrature result.
pub fn with_error(r: Option<&QuadratureResult>) -> [Cell; 2] {
    match r {
        Some(r) => [r.value.into(), r.abs_error.into()],
        None => [Cell::Empty, Cell::Empty],
    }
}

/// Named table plus free-form summary entries and notes.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Descriptive tag of the tabulated quantity, e.g. `ar_bell.bures.sep_probability`.
    pub quantity: String,
    pub config: RunConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Vec<(String, Cell)>,
    pub notes: Vec<String>,
}

struct Row<'a>(&'a [String], &'a [Cell]);

impl Serialize for Row<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

struct Summary<'a>(&'a [(String, Cell)]);

impl Serialize for Summary<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl Serialize for Report {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Row> = self.rows.iter().map(|r| Row(&self.columns, r)).collect();
        let mut st = s.serialize_struct("Report", 5)?;
        st.serialize_field("quantity", &self.quantity)?;
        st.serialize_field("config", &self.config)?;
        st.serialize_field("summary", &Summary(&self.summary))?;
        st.serialize_field("notes", &self.notes)?;
        st.serialize_field("rows", &rows)?;
        st.end()
    }
}

impl Report {
    pub fn new(quantity: impl Into<String>, config: &RunConfig, columns: &[&str]) -> Self {
        Self {
            quantity: quantity.into(),
            config: config.clone(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Dimension {
                expected: format!("{} columns", self.columns.len()),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn summarize(&mut self, key: impl Into<String>, value: impl Into<Cell>) {
        self.summary.push((key.into(), value.into()));
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Renders in the configured format. CSV carries the metadata as leading `#` lines.
    pub fn render(&self) -> Result<String> {
        match self.config.output_format {
            OutputFormat::Json => serde_json::to_string_pretty(self)
                .map(|s| s + "\n")
                .map_err(|e| Error::domain(e.to_string())),
            OutputFormat::Csv => self.render_csv(),
        }
    }

    fn render_csv(&self) -> Result<String> {
        let io = |e: csv::Error| Error::domain(e.to_string());
        let mut out = String::new();
        out.push_str(&format!("# quantity: {}\n", self.quantity));
        let cfg = serde_json::to_string(&self.config).map_err(|e| Error::domain(e.to_string()))?;
        out.push_str(&format!("# config: {cfg}\n"));
        for (k, v) in &self.summary {
            out.push_str(&format!("# {k}: {}\n", v.csv()));
        }
        for n in &self.notes {
            out.push_str(&format!("# note: {n}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::domain(e.to_string()))?;
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(format: OutputFormat) -> Report {
        let cfg = RunConfig {
            output_format: format,
            ..RunConfig::default()
        };
        let mut r = Report::new("demo.quantity", &cfg, &["param", "value", "error"]);
        r.push(vec![0.5.into(), 0.25.into(), Cell::Empty]).unwrap();
        r.push(vec![1.0.into(), f64::NAN.into(), "bad, point".into()])
            .unwrap();
        r.summarize("max_deviation", 1e-9);
        r
    }

    #[test]
    fn json_keeps_column_order_and_config() {
        let s = sample(OutputFormat::Json).render().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["quantity"], "demo.quantity");
        assert_eq!(v["config"]["hs_kappa"], 0.5);
        assert!(v["rows"][1]["value"].is_null());
        let first = s.find("\"param\"").unwrap();
        assert!(first < s.find("\"value\"").unwrap());
    }

    #[test]
    fn csv_quotes_text_and_prefixes_metadata() {
        let s = sample(OutputFormat::Csv).render().unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# quantity: demo.quantity"));
        assert!(lines[1].starts_with("# config: {"));
        assert_eq!(lines[3], "param,value,error");
        assert_eq!(lines[4], "0.5,0.25,");
        assert_eq!(lines[5], "1.0,,\"bad, point\"");
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut r = sample(OutputFormat::Csv);
        assert!(r.push(vec![Cell::Empty]).is_err());
    }
}
