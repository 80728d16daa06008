//! CSV tables and the plain-text run summary.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    U(usize),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::F(v.unwrap_or(f64::NAN))
    }
}

/// Seventeen significant digits, so every finite value reads back exactly.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format_float(*v),
            Cell::I(v) => v.to_string(),
            Cell::U(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width does not match {} schema",
            self.name
        );
        self.rows.push(row);
    }

    /// Columns holding at least one NaN.
    pub fn nan_columns(&self) -> Vec<&str> {
        (0..self.header.len())
            .filter(|&j| {
                self.rows
                    .iter()
                    .any(|r| matches!(r[j], Cell::F(v) if v.is_nan()))
            })
            .map(|j| self.header[j].as_str())
            .collect()
    }

    pub fn to_csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| io::Error::other(e.to_string()))
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::write(dir.join(&self.name), self.to_csv()?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Ordered `key: value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

impl Summary {
    pub fn put(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn put_f(&mut self, key: &str, value: f64) {
        self.put(key, format_float(value));
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self, tables: &[Table]) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}: {v}");
        }
        for c in &self.checks {
            let verdict = if c.pass { "pass" } else { "fail" };
            let _ = writeln!(s, "check.{}: {verdict} ({})", c.name, c.detail);
        }
        let nan: Vec<String> = tables
            .iter()
            .flat_map(|t| {
                t.nan_columns()
                    .into_iter()
                    .map(move |c| format!("{}:{c}", t.name))
            })
            .collect();
        let _ = writeln!(
            s,
            "nan_columns: {}",
            if nan.is_empty() {
                "none".into()
            } else {
                nan.join(" ")
            }
        );
        let _ = writeln!(s, "status: {}", if self.passed() { "pass" } else { "fail" });
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [
            0.1,
            1.0 / 3.0,
            8.0 * std::f64::consts::PI,
            -2.5e-300,
            1e300,
            0.0,
        ] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_float(f64::NAN), "nan");
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new("bounds.csv", &["sigma", "lhs", "rhs", "margin"]);
        assert_eq!(
            String::from_utf8(t.to_csv().unwrap()).unwrap(),
            "sigma,lhs,rhs,margin\r\n"
        );
    }

    #[test]
    fn nan_is_flagged() {
        let mut t = Table::new("x.csv", &["a", "margin"]);
        t.push(vec![Cell::U(1), Cell::F(f64::NAN)]);
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert!(csv.ends_with("1,nan\r\n"));
        let mut s = Summary::default();
        s.check("demo", true, "ok");
        let text = s.render(&[t]);
        assert!(text.contains("nan_columns: x.csv:margin"));
        assert!(text.contains("status: pass"));
    }
}
