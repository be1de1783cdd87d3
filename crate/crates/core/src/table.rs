//! CSV result tables.
//!
//! Layout: a `# ` line holding `key=value` metadata fields (CSV-quoted), a
//! header line of column names, then data rows. Floats are written with nine
//! significant digits and always contain `.` or `e` (or are `NaN`/`inf`), so a
//! cell's type survives a round trip; text cells must not look like numbers.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("row {row} has {found} cells, header has {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("missing `# ` metadata line")]
    MissingMetadata,
    #[error("missing header line")]
    MissingHeader,
    #[error("metadata field `{0}` has no `=`")]
    MetadataField(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(f) => Some(*f),
            Cell::Text(_) => None,
        }
    }

    fn infer(text: &str) -> Cell {
        if let Ok(i) = text.parse::<i64>() {
            return Cell::Int(i);
        }
        if let Ok(f) = text.parse::<f64>() {
            return Cell::Float(f);
        }
        Cell::Text(text.to_string())
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
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

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Float(x) => f.write_str(&format_float(*x)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

/// `%.9g`-style formatting that always marks the value as a float.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let fixed = format!("{x:.decimals$}");
    if fixed.contains('.') {
        trim_fraction(&fixed).to_string()
    } else {
        format!("{fixed}.0")
    }
}

fn trim_fraction(s: &str) -> &str {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0');
    if t.ends_with('.') {
        &s[..t.len() + 1]
    } else {
        t
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            metadata: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        // keep each field on the single metadata line
        let value = value.to_string().replace(['\n', '\r'], " ");
        self.metadata.push((key.to_string(), value));
        self
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column; `None` if absent or any cell is text.
    pub fn numbers(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column(name)?;
        self.rows.iter().map(|r| r[idx].as_f64()).collect()
    }

    fn check(&self) -> Result<(), TableError> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(TableError::Ragged {
                    row: i + 1,
                    expected: self.columns.len(),
                    found: row.len(),
                });
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), TableError> {
        self.check()?;
        let mut meta = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        meta.write_record(self.metadata.iter().map(|(k, v)| format!("{k}={v}")))?;
        let meta = meta.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        out.write_all(b"# ").map_err(csv::Error::from)?;
        out.write_all(&meta).map_err(csv::Error::from)?;

        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, TableError> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

pub fn emit_csv(table: &Table, path: &Path) -> Result<(), TableError> {
    let io_err = |source| TableError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    table.write(&mut out)?;
    out.flush().map_err(io_err)
}

pub fn parse_csv(text: &str) -> Result<Table, TableError> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let meta_line = first
        .strip_suffix('\r')
        .unwrap_or(first)
        .strip_prefix("# ")
        .ok_or(TableError::MissingMetadata)?;
    let mut metadata = Vec::new();
    if !meta_line.is_empty() {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(meta_line.as_bytes());
        if let Some(record) = r.records().next() {
            for field in record?.iter() {
                let (k, v) = field
                    .split_once('=')
                    .ok_or_else(|| TableError::MetadataField(field.to_string()))?;
                metadata.push((k.to_string(), v.to_string()));
            }
        }
    }

    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(rest.as_bytes());
    let mut records = r.records();
    let columns: Vec<String> = match records.next() {
        Some(rec) => rec?.iter().map(str::to_string).collect(),
        None => return Err(TableError::MissingHeader),
    };
    let mut rows = Vec::new();
    for rec in records {
        rows.push(rec?.iter().map(Cell::infer).collect());
    }
    let table = Table {
        metadata,
        columns,
        rows,
    };
    table.check()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn float_format() {
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(1.0), "1.0");
        assert_eq!(format_float(123456789.0), "123456789.0");
        assert_eq!(format_float(1234567890.0), "1.23456789e9");
        assert_eq!(format_float(0.000_012_345_678_91), "1.23456789e-5");
        assert_eq!(format_float(0.0001), "0.0001");
        assert_eq!(format_float(-2.5), "-2.5");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333");
        assert_eq!(format_float(0.995), "0.995");
        assert_eq!(format_float(99.99999999), "100.0");
        assert_eq!(format_float(0.0), "0.0");
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn layout() {
        let mut t = Table::new(&["tau_ms", "value", "label"]);
        t.meta("tool", "sensmat 0.1.0").meta("seed", 3).meta("note", "a, b");
        t.push(vec![Cell::Int(1), 0.5.into(), "sms".into()]);
        let text = t.to_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# tool=sensmat 0.1.0,seed=3,\"note=a, b\""));
        assert_eq!(lines.next(), Some("tau_ms,value,label"));
        assert_eq!(lines.next(), Some("1,0.5,sms"));
        assert_eq!(parse_csv(&text).unwrap(), t);
    }

    #[test]
    fn empty_rows_round_trip() {
        let mut t = Table::new(&["a", "b"]);
        t.meta("seed", 0);
        let text = t.to_csv_string().unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(parse_csv(&text).unwrap(), t);
    }

    #[test]
    fn rejects_malformed() {
        let mut t = Table::new(&["a"]);
        t.push(vec![Cell::Int(1), Cell::Int(2)]);
        assert!(matches!(t.to_csv_string(), Err(TableError::Ragged { row: 1, .. })));
        assert!(matches!(parse_csv("a,b\n1,2\n"), Err(TableError::MissingMetadata)));
        assert!(matches!(parse_csv("# x=1\n"), Err(TableError::MissingHeader)));
        assert!(matches!(parse_csv("# x\na\n"), Err(TableError::MetadataField(_))));
        assert!(matches!(parse_csv("# \na,b\n1\n"), Err(TableError::Ragged { .. })));
    }

    #[test]
    fn emit_reports_path() {
        let t = Table::new(&["a"]);
        let err = emit_csv(&t, Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }

    fn cell() -> impl Strategy<Value = Cell> {
        prop_oneof![
            any::<i64>().prop_map(Cell::Int),
            // values already at nine significant digits survive exactly
            (-999_999_999i64..=999_999_999, -12i32..12)
                .prop_map(|(m, e)| Cell::Float(format_float(m as f64 * 10f64.powi(e)).parse().unwrap())),
            "[a-hj-mo-z][a-z ,\"_]{0,8}".prop_map(Cell::Text),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(rows in proptest::collection::vec(proptest::collection::vec(cell(), 3), 0..6)) {
            let mut t = Table::new(&["x", "y", "z"]);
            t.meta("seed", 1).meta("digest", "abc");
            for r in rows {
                t.push(r);
            }
            let text = t.to_csv_string().unwrap();
            prop_assert_eq!(parse_csv(&text).unwrap(), t);
        }

        #[test]
        fn float_format_keeps_nine_digits(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let s = format_float(x);
            prop_assert!(s.contains('.') || s.contains('e'));
            let back: f64 = s.parse().unwrap();
            prop_assert!((back - x).abs() <= 5e-9 * x.abs());
            prop_assert_eq!(format_float(back), s);
        }

        #[test]
        fn parser_never_panics(text in "\\PC{0,200}") {
            let _ = parse_csv(&text);
        }
    }
}
