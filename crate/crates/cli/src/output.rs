//! Tables and their three renderings: aligned text, CSV and JSON.

use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

/// Output unit for times. Computation is always in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    S,
    Ms,
}

impl Units {
    pub fn scale(self) -> f64 {
        match self {
            Units::S => 1.0,
            Units::Ms => 1e3,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Units::S => "s",
            Units::Ms => "ms",
        }
    }

    /// Column name for a time quantity, e.g. `EW_ms`.
    pub fn label(self, name: &str) -> String {
        format!("{name}_{}", self.suffix())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(u64),
    Bool(bool),
    Empty,
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(x) if x.is_nan() => String::new(),
            Cell::Num(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Num(x) => format!("{x}"),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn pretty(&self) -> String {
        match self {
            Cell::Num(x) => significant(*x, 6),
            Cell::Empty => "-".into(),
            other => other.csv(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Num(x) if x.is_finite() => Value::from(*x),
            Cell::Num(x) if x.is_infinite() => Value::String(if *x > 0.0 { "inf" } else { "-inf" }.into()),
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Int(n) => Value::from(*n),
            Cell::Bool(b) => Value::Bool(*b),
        }
    }

    fn numeric(&self) -> bool {
        matches!(self, Cell::Num(_) | Cell::Int(_) | Cell::Empty)
    }
}

/// `x` rounded to `digits` significant digits, switching to exponent form
/// outside `[1e-4, 1e9)`.
pub fn significant(x: f64, digits: i32) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..9).contains(&magnitude) {
        return format!("{:.*e}", (digits - 1) as usize, x);
    }
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "ragged row");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// A command's result: one table plus free-form notes and metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub title: String,
    pub table: Table,
    pub notes: Vec<String>,
    pub meta: Vec<(String, Value)>,
}

impl Report {
    pub fn new(title: impl Into<String>, table: Table) -> Self {
        Report { title: title.into(), table, ..Default::default() }
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn meta(&mut self, key: &str, value: impl Into<Value>) {
        self.meta.push((key.to_string(), value.into()));
    }

    /// Render in `format`. CSV carries only the table so it stays
    /// rectangular; notes are left for the caller to send elsewhere.
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => self.render_table(),
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn render_table(&self) -> String {
        let t = &self.table;
        let cells: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(Cell::pretty).collect()).collect();
        let widths: Vec<usize> = (0..t.columns.len())
            .map(|j| cells.iter().map(|r| r[j].len()).chain([t.columns[j].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&self.title);
            out.push_str("\n\n");
        }
        let header: Vec<String> =
            t.columns.iter().zip(&widths).enumerate().map(|(j, (c, w))| pad(c, *w, j > 0)).collect();
        out.push_str(header.join("  ").trim_end());
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for (row, raw) in cells.iter().zip(&t.rows) {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .zip(raw)
                .map(|((c, w), cell)| pad(c, *w, cell.numeric()))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        if !self.notes.is_empty() {
            out.push('\n');
            for n in &self.notes {
                out.push_str(n);
                out.push('\n');
            }
        }
        out
    }

    fn render_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.table.columns).expect("in-memory write");
        for row in &self.table.rows {
            w.write_record(row.iter().map(Cell::csv)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    fn render_json(&self) -> String {
        let rows: Vec<Value> = self
            .table
            .rows
            .iter()
            .map(|r| {
                let obj: Map<String, Value> =
                    self.table.columns.iter().cloned().zip(r.iter().map(Cell::json)).collect();
                Value::Object(obj)
            })
            .collect();
        let mut doc = Map::new();
        doc.insert("title".into(), Value::String(self.title.clone()));
        doc.insert("meta".into(), Value::Object(self.meta.iter().cloned().collect()));
        doc.insert("columns".into(), Value::from(self.table.columns.clone()));
        doc.insert("rows".into(), Value::Array(rows));
        doc.insert("notes".into(), Value::from(self.notes.clone()));
        let mut s = serde_json::to_string_pretty(&Value::Object(doc)).expect("serializable");
        s.push('\n');
        s
    }
}

fn pad(s: &str, width: usize, right: bool) -> String {
    if right {
        format!("{s:>width$}")
    } else {
        format!("{s:<width$}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut t = Table::new(["node", "EW_ms", "ok"]);
        t.push(vec![Cell::text("a,b"), Cell::Num(0.004016064257028112), Cell::Bool(true)]);
        t.push(vec![Cell::text("c"), Cell::Num(f64::INFINITY), Cell::Empty]);
        let mut r = Report::new("demo", t);
        r.note("note");
        r
    }

    #[test]
    fn significant_digits() {
        assert_eq!(significant(4.016064257, 6), "4.01606");
        assert_eq!(significant(22.0, 6), "22.0000");
        assert_eq!(significant(6.4e-7, 6), "6.40000e-7");
        assert_eq!(significant(-0.5, 6), "-0.500000");
    }

    #[test]
    fn csv_is_quoted_and_rectangular() {
        let csv = sample().render(Format::Csv);
        assert_eq!(csv, "node,EW_ms,ok\n\"a,b\",0.004016064257028112,true\nc,inf,\n");
    }

    #[test]
    fn json_keeps_column_order() {
        let v: Value = serde_json::from_str(&sample().render(Format::Json)).unwrap();
        let row = v["rows"][0].as_object().unwrap();
        assert_eq!(row.keys().collect::<Vec<_>>(), ["node", "EW_ms", "ok"]);
        assert_eq!(v["rows"][1]["EW_ms"], "inf");
    }

    #[test]
    fn table_aligns() {
        let text = sample().render(Format::Table);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "node       EW_ms    ok");
        assert_eq!(lines[4], "a,b   0.00401606  true");
        assert!(text.ends_with("note\n"));
    }
}
