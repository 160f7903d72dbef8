//! CSV ingestion for the authoring sheets and the stand description.
//!
//! Sheets are exported from a spreadsheet tool as `;`-separated UTF-8 text.
//! Numbers follow the export locale (`0,5` and `1,00E+06` in the default
//! decimal-comma dialect). Every error carries the file line and the column
//! header of the offending cell.

mod serialize;
mod sheets;
mod stand;

use std::fmt;

use thiserror::Error;

use crate::sheet_model::{is_bit_literal, CellValue};

pub use serialize::{
    write_connection_sheet, write_resource_sheet, write_signal_sheet, write_status_sheet,
    write_test_sheet,
};
pub use sheets::{parse_signal_sheet, parse_status_sheet, parse_test_sheet};
pub use stand::{parse_connection_sheet, parse_resource_sheet};

/// Separator between pins inside one signal-sheet cell.
pub const PIN_SEPARATOR: char = '|';

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvDialect {
    pub field_separator: char,
    pub decimal_separator: char,
}

impl Default for CsvDialect {
    fn default() -> Self {
        Self {
            field_separator: ';',
            decimal_separator: ',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DialectError {
    #[error("field and decimal separators must differ (both {0:?})")]
    SameSeparators(char),
    #[error("decimal separator must be ',' or '.', got {0:?}")]
    Decimal(char),
    #[error("field separator must be a single ASCII character, got {0:?}")]
    Field(char),
    #[error("invalid dialect spec {0:?}")]
    Spec(String),
}

impl CsvDialect {
    pub fn new(field_separator: char, decimal_separator: char) -> Result<Self, DialectError> {
        let d = Self {
            field_separator,
            decimal_separator,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn dot_decimal() -> Self {
        Self {
            field_separator: ';',
            decimal_separator: '.',
        }
    }

    pub fn validate(&self) -> Result<(), DialectError> {
        if !self.field_separator.is_ascii() || self.field_separator == '"' {
            return Err(DialectError::Field(self.field_separator));
        }
        if !matches!(self.decimal_separator, ',' | '.') {
            return Err(DialectError::Decimal(self.decimal_separator));
        }
        if self.field_separator == self.decimal_separator {
            return Err(DialectError::SameSeparators(self.field_separator));
        }
        Ok(())
    }

    /// Applies overrides of the form `field=<char>,decimal=<char>` on top of
    /// `self`. Either key may be omitted. Named characters are accepted:
    /// `dot`, `comma`, `semicolon`, `tab`.
    pub fn with_overrides(mut self, spec: &str) -> Result<Self, DialectError> {
        let bad = || DialectError::Spec(spec.to_string());
        let mut rest = spec.trim();
        while !rest.is_empty() {
            let (key, after) = rest.split_once('=').ok_or_else(bad)?;
            let key = key.trim();
            let named = [
                ("dot", '.'),
                ("comma", ','),
                ("semicolon", ';'),
                ("tab", '\t'),
            ];
            let (value, tail) = named
                .iter()
                .find(|(n, _)| after.starts_with(n))
                .map(|(n, c)| (*c, &after[n.len()..]))
                .or_else(|| {
                    let c = after.chars().next()?;
                    Some((c, &after[c.len_utf8()..]))
                })
                .ok_or_else(bad)?;
            match key {
                "field" => self.field_separator = value,
                "decimal" => self.decimal_separator = value,
                _ => return Err(bad()),
            }
            rest = match tail.strip_prefix(',') {
                Some(t) => t,
                None if tail.is_empty() => tail,
                None => return Err(bad()),
            };
        }
        self.validate()?;
        Ok(self)
    }

    /// Parses a locale number: optional sign, digits, optional fraction with
    /// this dialect's decimal separator, optional exponent.
    pub fn parse_number(&self, text: &str) -> Option<f64> {
        let t = text.trim();
        let other = if self.decimal_separator == ',' {
            '.'
        } else {
            ','
        };
        if t.contains(other) {
            return None;
        }
        let t = t.replace(self.decimal_separator, ".");
        let b = t.as_bytes();
        let mut i = 0;
        if matches!(b.first(), Some(b'+' | b'-')) {
            i += 1;
        }
        let digits = |i: &mut usize| {
            let s = *i;
            while *i < b.len() && b[*i].is_ascii_digit() {
                *i += 1;
            }
            *i - s
        };
        if digits(&mut i) == 0 {
            return None;
        }
        if i < b.len() && b[i] == b'.' {
            i += 1;
            if digits(&mut i) == 0 {
                return None;
            }
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            i += 1;
            if matches!(b.get(i), Some(b'+' | b'-')) {
                i += 1;
            }
            if digits(&mut i) == 0 {
                return None;
            }
        }
        if i != b.len() {
            return None;
        }
        t.parse::<f64>().ok().filter(|v| v.is_finite())
    }

    pub fn format_number(&self, v: f64) -> String {
        let s = crate::expr::format_number(v);
        if self.decimal_separator == '.' {
            s
        } else {
            s.replace('.', &self.decimal_separator.to_string())
        }
    }

    pub(crate) fn reader<'a>(&self, text: &'a str) -> csv::Reader<&'a [u8]> {
        csv::ReaderBuilder::new()
            .delimiter(self.field_separator as u8)
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes())
    }
}

impl fmt::Display for CsvDialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "field={},decimal={}",
            self.field_separator, self.decimal_separator
        )
    }
}

/// A failure while reading a sheet. `row` is the 1-based line in the file
/// (the header is line 1).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("row {row}, column {column}: {message}")]
pub struct IngestError {
    pub row: usize,
    pub column: String,
    pub message: String,
}

impl IngestError {
    pub(crate) fn new(row: usize, column: &str, message: impl Into<String>) -> Self {
        Self {
            row,
            column: column.to_string(),
            message: message.into(),
        }
    }
}

/// Canonical header key: lowercase with whitespace and punctuation removed,
/// so `var (x)`, `D 1` and `Res.` become `varx`, `d1`, `res`.
pub(crate) fn header_key(cell: &str) -> String {
    cell.chars()
        .filter(|c| !c.is_whitespace() && !matches!(c, '_' | '(' | ')' | '.' | '-'))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Data rows of a sheet with their file lines; blank rows are dropped.
pub(crate) struct Table {
    pub header: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn read(text: &str, dialect: &CsvDialect) -> Result<Self, IngestError> {
        dialect
            .validate()
            .map_err(|e| IngestError::new(1, "", e.to_string()))?;
        let mut reader = dialect.reader(text);
        let mut header: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
                IngestError::new(row, "", e.to_string())
            })?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            let cells: Vec<String> = record.iter().map(str::to_string).collect();
            if cells.iter().all(String::is_empty) {
                continue;
            }
            match header {
                None => header = Some(cells),
                Some(ref h) => {
                    if let Some(extra) = cells.iter().skip(h.len()).position(|c| !c.is_empty()) {
                        return Err(IngestError::new(
                            line,
                            &format!("#{}", h.len() + extra + 1),
                            "cell outside the header's columns",
                        ));
                    }
                    rows.push((line, cells));
                }
            }
        }
        let header = header.ok_or_else(|| IngestError::new(1, "", "missing header row"))?;
        Ok(Self { header, rows })
    }

    /// Maps each required key to its column index; `optional` keys may be
    /// absent. Unknown columns are rejected.
    pub fn columns(
        &self,
        required: &[&[&str]],
        optional: &[&[&str]],
    ) -> Result<Vec<Option<usize>>, IngestError> {
        let keys: Vec<String> = self.header.iter().map(|h| header_key(h)).collect();
        let mut out = Vec::new();
        let mut used = vec![false; keys.len()];
        for (aliases, is_required) in required
            .iter()
            .map(|a| (a, true))
            .chain(optional.iter().map(|a| (a, false)))
        {
            let found = keys.iter().position(|k| aliases.contains(&k.as_str()));
            match found {
                Some(i) => {
                    if used[i] {
                        return Err(IngestError::new(1, &self.header[i], "duplicate column"));
                    }
                    used[i] = true;
                    out.push(Some(i));
                }
                None if is_required => {
                    return Err(IngestError::new(
                        1,
                        aliases[0],
                        format!("missing column {:?}", aliases[0]),
                    ))
                }
                None => out.push(None),
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(IngestError::new(
                1,
                &self.header[i],
                format!("unexpected column {:?}", self.header[i]),
            ));
        }
        Ok(out)
    }
}

pub(crate) fn cell(cells: &[String], idx: usize) -> &str {
    cells.get(idx).map(String::as_str).unwrap_or("")
}

pub(crate) fn opt_cell(cells: &[String], idx: Option<usize>) -> Option<&str> {
    idx.map(|i| cell(cells, i)).filter(|c| !c.is_empty())
}

/// Name cells (statuses, signals) are non-empty and whitespace-free.
pub(crate) fn check_identifier(text: &str, row: usize, column: &str) -> Result<(), IngestError> {
    if text.is_empty() {
        return Err(IngestError::new(row, column, "empty name"));
    }
    if text.chars().any(char::is_whitespace) {
        return Err(IngestError::new(
            row,
            column,
            format!("name {text:?} contains whitespace"),
        ));
    }
    Ok(())
}

pub(crate) fn parse_number_cell(
    dialect: &CsvDialect,
    text: &str,
    row: usize,
    column: &str,
) -> Result<f64, IngestError> {
    dialect
        .parse_number(text)
        .ok_or_else(|| IngestError::new(row, column, format!("malformed number {text:?}")))
}

/// `INF` (any case), a bit literal, or a number.
pub(crate) fn parse_value_cell(
    dialect: &CsvDialect,
    text: &str,
    row: usize,
    column: &str,
) -> Result<CellValue, IngestError> {
    if text.eq_ignore_ascii_case("inf") {
        Ok(CellValue::Inf)
    } else if is_bit_literal(text) {
        Ok(CellValue::Bits(text.to_string()))
    } else {
        parse_number_cell(dialect, text, row, column).map(CellValue::Number)
    }
}
