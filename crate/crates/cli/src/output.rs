//! Tables with a `#` metadata header, rendered as CSV or JSON.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(i64::from(x))
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Appended to the output stem; empty for the primary table.
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `# note:` header lines.
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Table { name, columns: columns.to_vec(), rows: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }
}

/// Provenance shared by every table of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub command: String,
    pub seed: Option<u64>,
    /// Effective configuration as TOML.
    pub config_toml: String,
    pub config_json: Value,
}

impl Header {
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update(b"\n");
        h.update(self.config_toml.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub const TOOL: &str = concat!("lep ", env!("CARGO_PKG_VERSION"));

/// Twelve significant digits, fixed notation for moderate exponents.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        trim_zeros(format!("{:.*}", (11 - exp).max(0) as usize, x))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn csv_field(c: &Cell) -> String {
    match c {
        Cell::Num(x) => format_number(*x),
        Cell::Int(i) => i.to_string(),
        Cell::Text(t) if t.contains([',', '"', '\n']) => format!("\"{}\"", t.replace('"', "\"\"")),
        Cell::Text(t) => t.clone(),
    }
}

fn json_cell(c: &Cell) -> Value {
    match c {
        Cell::Num(x) => format_number(*x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map(Value::Number).unwrap_or(Value::Null),
        Cell::Int(i) => json!(i),
        Cell::Text(t) => json!(t),
    }
}

pub fn render_csv(header: &Header, table: &Table) -> String {
    let mut out = String::new();
    out.push_str(&format!("# tool: {TOOL}\n# command: {}\n", header.command));
    if !table.name.is_empty() {
        out.push_str(&format!("# table: {}\n", table.name));
    }
    out.push_str(&format!("# config_sha256: {}\n", header.config_hash()));
    match header.seed {
        Some(s) => out.push_str(&format!("# seed: {s}\n")),
        None => out.push_str("# seed: none\n"),
    }
    for line in header.config_toml.lines().filter(|l| !l.trim().is_empty()) {
        out.push_str(&format!("# config: {line}\n"));
    }
    for note in &table.notes {
        out.push_str(&format!("# note: {note}\n"));
    }
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.iter().map(csv_field).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn render_json(header: &Header, table: &Table) -> String {
    let mut meta = Map::new();
    meta.insert("tool".into(), json!(TOOL));
    meta.insert("command".into(), json!(header.command));
    meta.insert("config_sha256".into(), json!(header.config_hash()));
    meta.insert("seed".into(), json!(header.seed));
    meta.insert("config".into(), header.config_json.clone());
    if !table.name.is_empty() {
        meta.insert("table".into(), json!(table.name));
    }
    if !table.notes.is_empty() {
        meta.insert("notes".into(), json!(table.notes));
    }
    let doc = json!({
        "meta": meta,
        "columns": table.columns,
        "rows": table.rows.iter().map(|r| r.iter().map(json_cell).collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable document");
    s.push('\n');
    s
}

/// Full configuration and provenance, written next to the tables.
pub fn render_sidecar(header: &Header) -> String {
    let doc = json!({
        "tool": TOOL,
        "command": header.command,
        "config_sha256": header.config_hash(),
        "seed": header.seed,
        "config": header.config_json,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable document");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(std::f64::consts::PI), "3.14159265359");
        assert_eq!(format_number(-1.2247448713915890), "-1.22474487139");
        assert_eq!(format_number(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_number(1.5e-7), "1.5e-7");
        assert_eq!(format_number(0.000123), "0.000123");
        assert_eq!(format_number(999999999999.0), "999999999999");
        assert_eq!(format_number(9.9999999999999e11), "1e12");
        assert_eq!(format_number(f64::NAN), "nan");
    }

    #[test]
    fn csv_quotes_text() {
        assert_eq!(csv_field(&Cell::Text("a,b".into())), "\"a,b\"");
        assert_eq!(csv_field(&Cell::Text("say \"x\"".into())), "\"say \"\"x\"\"\"");
    }
}
