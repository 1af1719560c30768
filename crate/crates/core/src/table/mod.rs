//! Immutable, schema-carrying columnar tables.

mod ingest;
mod wire;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use ingest::{ingest_csv, ingest_json, ingest_json_value, parse_iso8601, CsvOptions};
pub use wire::{deserialize_table, serialize_table, serialized_len, table_digest};

use crate::expr::number_string;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataType {
    Int,
    Float,
    Str,
    Bool,
    Timestamp,
}

impl DataType {
    /// Tag used by the wire format.
    pub fn wire_name(self) -> &'static str {
        match self {
            DataType::Int => "i64",
            DataType::Float => "f64",
            DataType::Str => "str",
            DataType::Bool => "bool",
            DataType::Timestamp => "ts",
        }
    }

    pub fn from_wire_name(name: &str) -> Option<DataType> {
        Some(match name {
            "i64" => DataType::Int,
            "f64" => DataType::Float,
            "str" => DataType::Str,
            "bool" => DataType::Bool,
            "ts" => DataType::Timestamp,
            _ => return None,
        })
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int | DataType::Float)
    }

    /// Least upper bound in the lattice `int ⊂ float ⊂ string`; bool and
    /// timestamp only join with themselves, anything else widens to string.
    pub fn join(self, other: DataType) -> DataType {
        use DataType::*;
        match (self, other) {
            (a, b) if a == b => a,
            (Int, Float) | (Float, Int) => Float,
            _ => Str,
        }
    }

    /// Type of a non-null scalar value; `None` for null and lists.
    pub fn of_value(v: &Value) -> Option<DataType> {
        Some(match v {
            Value::Int(_) => DataType::Int,
            Value::Float(_) => DataType::Float,
            Value::Str(_) => DataType::Str,
            Value::Bool(_) => DataType::Bool,
            Value::Timestamp(_) => DataType::Timestamp,
            Value::Null | Value::List(_) => return None,
        })
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub dtype: DataType,
}

impl Field {
    pub fn new(name: impl Into<String>, dtype: DataType) -> Field {
        Field {
            name: name.into(),
            dtype,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableError {
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("input is not valid UTF-8")]
    BadUtf8,
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("expected a JSON array of objects: {0}")]
    NotAnArray(String),
    #[error("nested value in field `{0}`")]
    NestedValue(String),
    #[error("duplicate field `{0}`")]
    DuplicateField(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("column `{name}` has {found} rows, expected {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("value of type {found} does not fit column type {expected}")]
    CellType { expected: DataType, found: String },
    #[error("malformed table document: {0}")]
    Wire(String),
}

/// A single typed column with per-cell nullability.
#[derive(Debug, Clone)]
pub enum Column {
    Int(Vec<Option<i64>>),
    Float(Vec<Option<f64>>),
    Str(Vec<Option<String>>),
    Bool(Vec<Option<bool>>),
    Timestamp(Vec<Option<i64>>),
}

impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Column::Int(a), Column::Int(b)) => a == b,
            (Column::Timestamp(a), Column::Timestamp(b)) => a == b,
            (Column::Str(a), Column::Str(b)) => a == b,
            (Column::Bool(a), Column::Bool(b)) => a == b,
            (Column::Float(a), Column::Float(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| match (x, y) {
                        (Some(x), Some(y)) => x == y || (x.is_nan() && y.is_nan()),
                        (None, None) => true,
                        _ => false,
                    })
            }
            _ => false,
        }
    }
}

impl Column {
    pub fn dtype(&self) -> DataType {
        match self {
            Column::Int(_) => DataType::Int,
            Column::Float(_) => DataType::Float,
            Column::Str(_) => DataType::Str,
            Column::Bool(_) => DataType::Bool,
            Column::Timestamp(_) => DataType::Timestamp,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Int(v) | Column::Timestamp(v) => v.len(),
            Column::Float(v) => v.len(),
            Column::Str(v) => v.len(),
            Column::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nulls(dtype: DataType, len: usize) -> Column {
        match dtype {
            DataType::Int => Column::Int(vec![None; len]),
            DataType::Float => Column::Float(vec![None; len]),
            DataType::Str => Column::Str(vec![None; len]),
            DataType::Bool => Column::Bool(vec![None; len]),
            DataType::Timestamp => Column::Timestamp(vec![None; len]),
        }
    }

    pub fn get(&self, row: usize) -> Value {
        match self {
            Column::Int(v) => v[row].map_or(Value::Null, Value::Int),
            Column::Float(v) => v[row].map_or(Value::Null, Value::Float),
            Column::Str(v) => v[row].as_ref().map_or(Value::Null, |s| Value::Str(s.clone())),
            Column::Bool(v) => v[row].map_or(Value::Null, Value::Bool),
            Column::Timestamp(v) => v[row].map_or(Value::Null, Value::Timestamp),
        }
    }

    pub fn is_null(&self, row: usize) -> bool {
        match self {
            Column::Int(v) | Column::Timestamp(v) => v[row].is_none(),
            Column::Float(v) => v[row].is_none(),
            Column::Str(v) => v[row].is_none(),
            Column::Bool(v) => v[row].is_none(),
        }
    }

    /// Numeric view of a cell (timestamps as epoch-ms).
    pub fn f64_at(&self, row: usize) -> Option<f64> {
        match self {
            Column::Int(v) | Column::Timestamp(v) => v[row].map(|i| i as f64),
            Column::Float(v) => v[row],
            _ => None,
        }
    }

    pub fn take(&self, indices: &[usize]) -> Column {
        match self {
            Column::Int(v) => Column::Int(indices.iter().map(|&i| v[i]).collect()),
            Column::Float(v) => Column::Float(indices.iter().map(|&i| v[i]).collect()),
            Column::Str(v) => Column::Str(indices.iter().map(|&i| v[i].clone()).collect()),
            Column::Bool(v) => Column::Bool(indices.iter().map(|&i| v[i]).collect()),
            Column::Timestamp(v) => Column::Timestamp(indices.iter().map(|&i| v[i]).collect()),
        }
    }

    /// Build a column of the given type, converting each value into it.
    pub fn from_values_typed(dtype: DataType, values: &[Value]) -> Result<Column, TableError> {
        let mismatch = |v: &Value| TableError::CellType {
            expected: dtype,
            found: v.type_name().to_string(),
        };
        Ok(match dtype {
            DataType::Int => Column::Int(
                values
                    .iter()
                    .map(|v| match v {
                        Value::Null => Ok(None),
                        Value::Int(i) => Ok(Some(*i)),
                        other => Err(mismatch(other)),
                    })
                    .collect::<Result<_, _>>()?,
            ),
            DataType::Float => Column::Float(
                values
                    .iter()
                    .map(|v| match v {
                        Value::Null => Ok(None),
                        Value::Int(i) => Ok(Some(*i as f64)),
                        Value::Float(f) => Ok(Some(*f)),
                        other => Err(mismatch(other)),
                    })
                    .collect::<Result<_, _>>()?,
            ),
            DataType::Bool => Column::Bool(
                values
                    .iter()
                    .map(|v| match v {
                        Value::Null => Ok(None),
                        Value::Bool(b) => Ok(Some(*b)),
                        other => Err(mismatch(other)),
                    })
                    .collect::<Result<_, _>>()?,
            ),
            DataType::Timestamp => Column::Timestamp(
                values
                    .iter()
                    .map(|v| match v {
                        Value::Null => Ok(None),
                        Value::Timestamp(t) => Ok(Some(*t)),
                        other => Err(mismatch(other)),
                    })
                    .collect::<Result<_, _>>()?,
            ),
            DataType::Str => Column::Str(
                values
                    .iter()
                    .map(|v| match v {
                        Value::Null => Ok(None),
                        Value::List(_) => Err(mismatch(v)),
                        other => Ok(Some(cell_string(other))),
                    })
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    /// Build a column typed by the least upper bound of the values. An
    /// all-null (or empty) column is typed `fallback`.
    pub fn from_values(values: &[Value], fallback: DataType) -> Result<Column, TableError> {
        let mut dtype: Option<DataType> = None;
        for v in values {
            if let Value::List(_) = v {
                return Err(TableError::CellType {
                    expected: fallback,
                    found: "list".into(),
                });
            }
            if let Some(t) = DataType::of_value(v) {
                dtype = Some(dtype.map_or(t, |d| d.join(t)));
            }
        }
        Column::from_values_typed(dtype.unwrap_or(fallback), values)
    }
}

/// Text form of a scalar when widened into a string column.
pub(crate) fn cell_string(v: &Value) -> String {
    match v {
        Value::Str(s) => s.clone(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) => number_string(*f),
        Value::Bool(b) => b.to_string(),
        Value::Timestamp(_) => v.to_string(),
        Value::Null => String::new(),
        Value::List(items) => items.iter().map(cell_string).collect::<Vec<_>>().join(","),
    }
}

/// An immutable table. Columns are reference counted so derived tables
/// share unchanged columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    fields: Vec<Field>,
    columns: Vec<Arc<Column>>,
    nrows: usize,
}

impl Default for Table {
    fn default() -> Self {
        Table::empty()
    }
}

impl Table {
    pub fn empty() -> Table {
        Table {
            fields: Vec::new(),
            columns: Vec::new(),
            nrows: 0,
        }
    }

    pub fn new(columns: Vec<(String, Column)>) -> Result<Table, TableError> {
        Table::from_shared(
            columns
                .into_iter()
                .map(|(name, col)| (name, Arc::new(col)))
                .collect(),
        )
    }

    /// Build a table with an explicit row count; needed for zero-column
    /// tables that still have rows.
    pub fn with_nrows(columns: Vec<(String, Column)>, nrows: usize) -> Result<Table, TableError> {
        let mut table = Table::new(columns)?;
        if table.columns.is_empty() {
            table.nrows = nrows;
        } else if table.nrows != nrows {
            return Err(TableError::LengthMismatch {
                name: table.fields[0].name.clone(),
                expected: nrows,
                found: table.nrows,
            });
        }
        Ok(table)
    }

    pub(crate) fn from_shared(columns: Vec<(String, Arc<Column>)>) -> Result<Table, TableError> {
        let nrows = columns.first().map_or(0, |(_, c)| c.len());
        let mut fields = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        for (name, col) in columns {
            if fields.iter().any(|f: &Field| f.name == name) {
                return Err(TableError::DuplicateField(name));
            }
            if col.len() != nrows {
                return Err(TableError::LengthMismatch {
                    name,
                    expected: nrows,
                    found: col.len(),
                });
            }
            fields.push(Field::new(name, col.dtype()));
            cols.push(col);
        }
        Ok(Table {
            fields,
            columns: cols,
            nrows,
        })
    }

    /// Build from rows of values, inferring each column's type.
    pub fn from_rows(names: &[&str], rows: &[Vec<Value>]) -> Result<Table, TableError> {
        let mut columns = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let values: Vec<Value> = rows
                .iter()
                .map(|r| r.get(i).cloned().unwrap_or(Value::Null))
                .collect();
            columns.push((name.to_string(), Column::from_values(&values, DataType::Float)?));
        }
        Table::with_nrows(columns, rows.len())
    }

    pub fn schema(&self) -> &[Field] {
        &self.fields
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.fields.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_index(name).map(|i| self.columns[i].as_ref())
    }

    pub fn column_at(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn require_column(&self, name: &str) -> Result<&Column, TableError> {
        self.column(name)
            .ok_or_else(|| TableError::UnknownField(name.to_string()))
    }

    pub fn cell(&self, row: usize, col: usize) -> Value {
        self.columns[col].get(row)
    }

    /// One row as a field map (missing fields read as null).
    pub fn row(&self, row: usize) -> BTreeMap<String, Value> {
        self.fields
            .iter()
            .zip(&self.columns)
            .map(|(f, c)| (f.name.clone(), c.get(row)))
            .collect()
    }

    pub fn take_rows(&self, indices: &[usize]) -> Table {
        Table {
            fields: self.fields.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| Arc::new(c.take(indices)))
                .collect(),
            nrows: indices.len(),
        }
    }

    /// Add a column, replacing any existing column of the same name in place.
    pub fn with_column(&self, name: &str, column: Column) -> Result<Table, TableError> {
        if column.len() != self.nrows && !(self.columns.is_empty() && self.nrows == 0) {
            return Err(TableError::LengthMismatch {
                name: name.to_string(),
                expected: self.nrows,
                found: column.len(),
            });
        }
        let mut table = self.clone();
        let field = Field::new(name, column.dtype());
        let nrows = column.len();
        match table.column_index(name) {
            Some(i) => {
                table.fields[i] = field;
                table.columns[i] = Arc::new(column);
            }
            None => {
                table.fields.push(field);
                table.columns.push(Arc::new(column));
            }
        }
        if self.columns.is_empty() {
            table.nrows = nrows;
        }
        Ok(table)
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let header: Vec<String> = self
            .fields
            .iter()
            .map(|fd| format!("{}:{}", fd.name, fd.dtype))
            .collect();
        writeln!(f, "{}", header.join("\t"))?;
        for r in 0..self.nrows {
            let cells: Vec<String> = (0..self.ncols()).map(|c| self.cell(r, c).to_string()).collect();
            writeln!(f, "{}", cells.join("\t"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_join() {
        assert_eq!(DataType::Int.join(DataType::Float), DataType::Float);
        assert_eq!(DataType::Float.join(DataType::Str), DataType::Str);
        assert_eq!(DataType::Bool.join(DataType::Int), DataType::Str);
        assert_eq!(DataType::Timestamp.join(DataType::Timestamp), DataType::Timestamp);
    }

    #[test]
    fn from_values_widens() {
        let col = Column::from_values(&[Value::Int(1), Value::Float(2.5), Value::Null], DataType::Float).unwrap();
        assert_eq!(col, Column::Float(vec![Some(1.0), Some(2.5), None]));
        let col = Column::from_values(&[Value::Null], DataType::Float).unwrap();
        assert_eq!(col.dtype(), DataType::Float);
    }

    #[test]
    fn column_lengths_must_match() {
        let err = Table::new(vec![
            ("a".into(), Column::Int(vec![Some(1)])),
            ("b".into(), Column::Int(vec![])),
        ]);
        assert!(matches!(err, Err(TableError::LengthMismatch { .. })));
    }

    #[test]
    fn with_column_replaces_in_place() {
        let t = Table::new(vec![
            ("a".into(), Column::Int(vec![Some(1)])),
            ("b".into(), Column::Int(vec![Some(2)])),
        ])
        .unwrap();
        let t2 = t.with_column("a", Column::Str(vec![Some("x".into())])).unwrap();
        assert_eq!(t2.schema()[0], Field::new("a", DataType::Str));
        assert_eq!(t2.ncols(), 2);
    }
}
