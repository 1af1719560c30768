//! CSV and JSON loaders with per-column type inference.
//!
//! Inference scans every row. Each non-empty cell is classified as int,
//! float, bool (`true`/`false`), timestamp (ISO-8601) or string, and a
//! column's type is the join of its cells' classes (see [`DataType::join`]).
//! Empty CSV cells and JSON nulls are null; all-null columns are float.

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use indexmap::IndexMap;

use super::{Column, DataType, Table, TableError};

#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    pub header: bool,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            header: true,
            delimiter: b',',
        }
    }
}

fn is_int(s: &str) -> bool {
    let digits = s.strip_prefix(['-', '+']).unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

/// Plain decimal notation: sign, digits, optional fraction, optional exponent.
fn is_decimal(s: &str) -> bool {
    let b = s.strip_prefix(['-', '+']).unwrap_or(s).as_bytes();
    let mut i = 0;
    let mut digits = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
        digits += 1;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
            digits += 1;
        }
    }
    if digits == 0 {
        return false;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return false;
        }
    }
    i == b.len()
}

/// Parse an ISO-8601 date or date-time into epoch milliseconds. Values
/// without an offset are read as UTC.
pub fn parse_iso8601(s: &str) -> Option<i64> {
    let b = s.as_bytes();
    if b.len() < 10 || b[4] != b'-' || b[7] != b'-' || !b[..4].iter().all(u8::is_ascii_digit) {
        return None;
    }
    let date = NaiveDate::parse_from_str(&s[..10], "%Y-%m-%d").ok()?;
    if b.len() == 10 {
        return Some(date.and_time(NaiveTime::MIN).and_utc().timestamp_millis());
    }
    if b[10] != b'T' && b[10] != b' ' {
        return None;
    }
    let rest = &s[11..];
    let (time_text, offset_minutes) = if let Some(t) = rest.strip_suffix('Z') {
        (t, 0)
    } else if let Some(pos) = rest.rfind(['+', '-']).filter(|&p| p >= 5) {
        let (t, off) = rest.split_at(pos);
        let sign = if off.starts_with('-') { -1 } else { 1 };
        let digits: String = off[1..].chars().filter(|c| *c != ':').collect();
        if digits.len() != 4 || !digits.bytes().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let hours: i64 = digits[..2].parse().ok()?;
        let minutes: i64 = digits[2..].parse().ok()?;
        (t, sign * (hours * 60 + minutes))
    } else {
        (rest, 0)
    };
    let time = NaiveTime::parse_from_str(time_text, "%H:%M:%S%.f")
        .or_else(|_| NaiveTime::parse_from_str(time_text, "%H:%M"))
        .ok()?;
    let utc = NaiveDateTime::new(date, time).and_utc().timestamp_millis();
    Some(utc - offset_minutes * 60_000)
}

fn classify_text(s: &str) -> DataType {
    if is_int(s) && s.parse::<i64>().is_ok() {
        DataType::Int
    } else if is_decimal(s) {
        DataType::Float
    } else if s == "true" || s == "false" {
        DataType::Bool
    } else if parse_iso8601(s).is_some() {
        DataType::Timestamp
    } else {
        DataType::Str
    }
}

fn join(acc: &mut Option<DataType>, t: DataType) {
    *acc = Some(acc.map_or(t, |a| a.join(t)));
}

fn csv_error(err: csv::Error) -> TableError {
    match err.kind() {
        csv::ErrorKind::Utf8 { .. } => TableError::BadUtf8,
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => TableError::RaggedRow {
            row: pos.as_ref().map_or(0, |p| p.record() as usize),
            expected: *expected_len as usize,
            found: *len as usize,
        },
        _ => TableError::Csv(err.to_string()),
    }
}

fn csv_reader(bytes: &[u8], options: CsvOptions) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(options.header)
        .delimiter(options.delimiter)
        .flexible(false)
        .from_reader(bytes)
}

/// Parse delimited text. Two passes: the first infers column types, the
/// second builds typed columns.
pub fn ingest_csv(bytes: &[u8], options: CsvOptions) -> Result<Table, TableError> {
    if std::str::from_utf8(bytes).is_err() {
        return Err(TableError::BadUtf8);
    }
    let mut reader = csv_reader(bytes, options);
    let mut names: Vec<String> = if options.header {
        reader
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };

    let mut types: Vec<Option<DataType>> = vec![None; names.len()];
    let mut record = csv::StringRecord::new();
    let mut nrows = 0;
    while reader.read_record(&mut record).map_err(csv_error)? {
        if !options.header && nrows == 0 {
            names = (0..record.len()).map(|i| format!("col{i}")).collect();
            types = vec![None; names.len()];
        }
        if record.len() != names.len() {
            return Err(TableError::RaggedRow {
                row: nrows + usize::from(options.header),
                expected: names.len(),
                found: record.len(),
            });
        }
        for (acc, cell) in types.iter_mut().zip(record.iter()) {
            if !cell.is_empty() && *acc != Some(DataType::Str) {
                join(acc, classify_text(cell));
            }
        }
        nrows += 1;
    }
    let types: Vec<DataType> = types
        .into_iter()
        .map(|t| t.unwrap_or(DataType::Float))
        .collect();

    let mut columns: Vec<Column> = types.iter().map(|t| Column::nulls(*t, 0)).collect();
    let mut reader = csv_reader(bytes, options);
    while reader.read_record(&mut record).map_err(csv_error)? {
        for (col, cell) in columns.iter_mut().zip(record.iter()) {
            push_text(col, cell);
        }
    }
    Table::with_nrows(names.into_iter().zip(columns).collect(), nrows)
}

fn push_text(col: &mut Column, cell: &str) {
    let empty = cell.is_empty();
    match col {
        Column::Int(v) => v.push(if empty { None } else { cell.parse().ok() }),
        Column::Float(v) => v.push(if empty { None } else { cell.parse().ok() }),
        Column::Bool(v) => v.push(if empty { None } else { Some(cell == "true") }),
        Column::Timestamp(v) => v.push(if empty { None } else { parse_iso8601(cell) }),
        Column::Str(v) => v.push(if empty { None } else { Some(cell.to_string()) }),
    }
}

pub fn ingest_json(bytes: &[u8]) -> Result<Table, TableError> {
    let text = std::str::from_utf8(bytes).map_err(|_| TableError::BadUtf8)?;
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| TableError::NotAnArray(e.to_string()))?;
    ingest_json_value(&doc)
}

/// Build a table from an already parsed array of flat objects.
pub fn ingest_json_value(doc: &serde_json::Value) -> Result<Table, TableError> {
    let rows = doc
        .as_array()
        .ok_or_else(|| TableError::NotAnArray(format!("found {}", json_kind(doc))))?;
    let mut types: IndexMap<&str, Option<DataType>> = IndexMap::new();
    for row in rows {
        let obj = row
            .as_object()
            .ok_or_else(|| TableError::NotAnArray(format!("row is {}", json_kind(row))))?;
        for (key, value) in obj {
            let acc = types.entry(key.as_str()).or_insert(None);
            match value {
                serde_json::Value::Null => {}
                serde_json::Value::Array(_) | serde_json::Value::Object(_) => {
                    return Err(TableError::NestedValue(key.clone()))
                }
                serde_json::Value::Bool(_) => join(acc, DataType::Bool),
                serde_json::Value::Number(n) => join(
                    acc,
                    if n.is_i64() {
                        DataType::Int
                    } else {
                        DataType::Float
                    },
                ),
                serde_json::Value::String(s) => join(
                    acc,
                    if parse_iso8601(s).is_some() {
                        DataType::Timestamp
                    } else {
                        DataType::Str
                    },
                ),
            }
        }
    }
    let mut columns = Vec::with_capacity(types.len());
    for (name, dtype) in types {
        let dtype = dtype.unwrap_or(DataType::Float);
        let mut col = Column::nulls(dtype, 0);
        for row in rows {
            push_json(&mut col, row.get(name).unwrap_or(&serde_json::Value::Null));
        }
        columns.push((name.to_string(), col));
    }
    Table::with_nrows(columns, rows.len())
}

fn push_json(col: &mut Column, v: &serde_json::Value) {
    use serde_json::Value as J;
    match col {
        Column::Int(c) => c.push(v.as_i64()),
        Column::Float(c) => c.push(v.as_f64()),
        Column::Bool(c) => c.push(v.as_bool()),
        Column::Timestamp(c) => c.push(v.as_str().and_then(parse_iso8601)),
        Column::Str(c) => c.push(match v {
            J::Null => None,
            J::String(s) => Some(s.clone()),
            J::Number(n) => Some(n.to_string()),
            J::Bool(b) => Some(b.to_string()),
            other => Some(other.to_string()),
        }),
    }
}

fn json_kind(v: &serde_json::Value) -> &'static str {
    match v {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "a boolean",
        serde_json::Value::Number(_) => "a number",
        serde_json::Value::String(_) => "a string",
        serde_json::Value::Array(_) => "an array",
        serde_json::Value::Object(_) => "an object",
    }
}
