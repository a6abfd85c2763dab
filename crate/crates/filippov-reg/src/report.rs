//! CSV tables with a `# key = value` header block, and number formatting.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// 17 significant digits, round-trippable.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV table preceded by a comment block echoing the configuration.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn with_meta(mut self, meta: &[(String, String)]) -> Self {
        self.meta.extend_from_slice(meta);
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| fmt17(v)).collect());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = w.into_inner().expect("in-memory flush");
        out.push_str(&String::from_utf8(body).expect("utf-8 csv"));
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(Error::from)
    }

    /// Parses a rendered table back (header block and rows as strings).
    pub fn parse(text: &str) -> Result<Table> {
        let mut meta = Vec::new();
        let mut body = String::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest.split_once('=').ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: "header line without '='".into(),
                })?;
                meta.push((k.trim().to_string(), v.trim().to_string()));
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let columns = r
            .headers()
            .map_err(|e| Error::Parse {
                line: 0,
                message: e.to_string(),
            })?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: 0,
                message: e.to_string(),
            })?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Table {
            meta,
            columns,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut t = Table::new(&["x", "y"]).meta("eps", 0.01);
        t.push_f64(&[0.1, -2.0 / 3.0]);
        let s = t.render();
        assert!(s.starts_with("# eps = 0.01\nx,y\n"));
        let back = Table::parse(&s).unwrap();
        assert_eq!(back.columns, vec!["x", "y"]);
        let v: f64 = back.rows[0][1].parse().unwrap();
        assert_eq!(v, -2.0 / 3.0);
    }
}
