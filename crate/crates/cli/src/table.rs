//! Typed CSV tables with numbers fixed at 12 significant digits.

use std::path::Path;

use serde_json::Value;

use crate::error::CliError;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Shortest decimal rendering of `x` rounded to 12 significant digits.
/// Fixed notation for exponents in `-5..15`, scientific otherwise.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x.abs());
    let (mant, exp) = s.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if x < 0.0 { "-" } else { "" };
    if !(-5..15).contains(&exp) {
        let trimmed = digits.trim_end_matches('0');
        let (lead, rest) = trimmed.split_at(1);
        return if rest.is_empty() {
            format!("{sign}{lead}e{exp}")
        } else {
            format!("{sign}{lead}.{rest}e{exp}")
        };
    }
    let (int_part, frac_part) = if exp >= 0 {
        let split = exp as usize + 1;
        if split >= digits.len() {
            (format!("{digits}{}", "0".repeat(split - digits.len())), String::new())
        } else {
            (digits[..split].to_string(), digits[split..].to_string())
        }
    } else {
        ("0".to_string(), format!("{}{digits}", "0".repeat((-exp - 1) as usize)))
    };
    let frac = frac_part.trim_end_matches('0');
    if frac.is_empty() {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac}")
    }
}

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    fmt_sig(x).parse().expect("formatted number parses")
}

/// Rounds every non-integer number in a JSON document to 12 significant
/// digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_json).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Text,
    Int,
    Num,
}

#[derive(Debug, Clone)]
pub enum Cell {
    Text(String),
    Int(i64),
    Num(f64),
    Empty,
}

impl Cell {
    /// A numeric cell, rounded as it will be written.
    pub fn num(x: f64) -> Cell {
        Cell::Num(round_sig(x))
    }

    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => fmt_sig(*x),
            Cell::Empty => String::new(),
        }
    }

    fn parse(raw: &str, kind: Kind) -> Result<Cell, CliError> {
        if raw.is_empty() {
            return Ok(Cell::Empty);
        }
        let bad = || CliError::Failure(format!("cannot parse `{raw}` as {kind:?}"));
        Ok(match kind {
            Kind::Text => Cell::Text(raw.to_string()),
            Kind::Int => Cell::Int(raw.parse().map_err(|_| bad())?),
            Kind::Num => Cell::Num(raw.parse().map_err(|_| bad())?),
        })
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Text(a), Cell::Text(b)) => a == b,
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Num(a), Cell::Num(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            (Cell::Empty, Cell::Empty) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<(String, Kind)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[(&str, Kind)]) -> Self {
        Table {
            columns: columns.iter().map(|(n, k)| (n.to_string(), *k)).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(n, _)| n == name)
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|(n, _)| n.as_str()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Failure(format!("CSV error: {e}")))?;
        String::from_utf8(bytes).map_err(|e| CliError::Failure(format!("CSV is not UTF-8: {e}")))
    }

    /// Parses a table written by [`Table::to_csv`] with the given column kinds.
    pub fn from_csv(text: &str, kinds: &[Kind]) -> Result<Self, CliError> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() != kinds.len() {
            return Err(CliError::Failure("column kinds do not match the header".into()));
        }
        let mut table = Table {
            columns: header.into_iter().zip(kinds.iter().copied()).collect(),
            rows: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec?;
            let row = rec.iter().zip(kinds).map(|(raw, k)| Cell::parse(raw, *k)).collect::<Result<_, _>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn kinds(&self) -> Vec<Kind> {
        self.columns.iter().map(|(_, k)| *k).collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}
