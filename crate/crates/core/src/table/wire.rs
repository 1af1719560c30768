//! Table wire format:
//!
//! ```json
//! {"schema":[{"name":"a","type":"i64"}],"nrows":2,"columns":{"a":[1,null]}}
//! ```
//!
//! Types are `i64`, `f64`, `str`, `bool` and `ts` (integer epoch-ms).
//! Floats use the shortest round-trip representation; non-finite floats are
//! written as the strings `"NaN"`, `"Infinity"` and `"-Infinity"`.

use std::io;

use serde::de::Error as _;
use serde::ser::{SerializeMap, SerializeSeq, SerializeStruct};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Column, DataType, Table, TableError};

struct CellsOf<'a>(&'a Column);

impl Serialize for CellsOf<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        match self.0 {
            Column::Int(v) | Column::Timestamp(v) => {
                for c in v {
                    seq.serialize_element(c)?;
                }
            }
            Column::Float(v) => {
                for c in v {
                    match c {
                        Some(f) if f.is_finite() => seq.serialize_element(f)?,
                        Some(f) if f.is_nan() => seq.serialize_element("NaN")?,
                        Some(f) if *f > 0.0 => seq.serialize_element("Infinity")?,
                        Some(_) => seq.serialize_element("-Infinity")?,
                        None => seq.serialize_element(&())?,
                    }
                }
            }
            Column::Str(v) => {
                for c in v {
                    seq.serialize_element(c)?;
                }
            }
            Column::Bool(v) => {
                for c in v {
                    seq.serialize_element(c)?;
                }
            }
        }
        seq.end()
    }
}

struct SchemaEntry<'a> {
    name: &'a str,
    dtype: DataType,
}

impl Serialize for SchemaEntry<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Field", 2)?;
        st.serialize_field("name", self.name)?;
        st.serialize_field("type", self.dtype.wire_name())?;
        st.end()
    }
}

struct Columns<'a>(&'a Table);

impl Serialize for Columns<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.ncols()))?;
        for (i, field) in self.0.schema().iter().enumerate() {
            map.serialize_entry(&field.name, &CellsOf(self.0.column_at(i)))?;
        }
        map.end()
    }
}

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let schema: Vec<SchemaEntry> = self
            .schema()
            .iter()
            .map(|f| SchemaEntry {
                name: &f.name,
                dtype: f.dtype,
            })
            .collect();
        let mut st = s.serialize_struct("Table", 3)?;
        st.serialize_field("schema", &schema)?;
        st.serialize_field("nrows", &self.nrows())?;
        st.serialize_field("columns", &Columns(self))?;
        st.end()
    }
}

#[derive(Deserialize)]
struct WireField {
    name: String,
    #[serde(rename = "type")]
    dtype: String,
}

#[derive(Deserialize)]
struct WireTable {
    schema: Vec<WireField>,
    nrows: usize,
    columns: serde_json::Map<String, serde_json::Value>,
}

fn wire_err(msg: impl Into<String>) -> TableError {
    TableError::Wire(msg.into())
}

fn decode_column(dtype: DataType, name: &str, cells: &[serde_json::Value]) -> Result<Column, TableError> {
    use serde_json::Value as J;
    let bad = |cell: &J| wire_err(format!("bad {dtype} cell {cell} in `{name}`"));
    Ok(match dtype {
        DataType::Int | DataType::Timestamp => {
            let v = cells
                .iter()
                .map(|c| match c {
                    J::Null => Ok(None),
                    other => other.as_i64().map(Some).ok_or_else(|| bad(other)),
                })
                .collect::<Result<Vec<_>, _>>()?;
            if dtype == DataType::Int {
                Column::Int(v)
            } else {
                Column::Timestamp(v)
            }
        }
        DataType::Float => Column::Float(
            cells
                .iter()
                .map(|c| match c {
                    J::Null => Ok(None),
                    J::Number(n) => n.as_f64().map(Some).ok_or_else(|| bad(c)),
                    J::String(s) if s == "NaN" => Ok(Some(f64::NAN)),
                    J::String(s) if s == "Infinity" => Ok(Some(f64::INFINITY)),
                    J::String(s) if s == "-Infinity" => Ok(Some(f64::NEG_INFINITY)),
                    other => Err(bad(other)),
                })
                .collect::<Result<_, _>>()?,
        ),
        DataType::Str => Column::Str(
            cells
                .iter()
                .map(|c| match c {
                    J::Null => Ok(None),
                    J::String(s) => Ok(Some(s.clone())),
                    other => Err(bad(other)),
                })
                .collect::<Result<_, _>>()?,
        ),
        DataType::Bool => Column::Bool(
            cells
                .iter()
                .map(|c| match c {
                    J::Null => Ok(None),
                    J::Bool(b) => Ok(Some(*b)),
                    other => Err(bad(other)),
                })
                .collect::<Result<_, _>>()?,
        ),
    })
}

impl TryFrom<WireTable> for Table {
    type Error = TableError;

    fn try_from(wire: WireTable) -> Result<Table, TableError> {
        let mut columns = Vec::with_capacity(wire.schema.len());
        for field in &wire.schema {
            let dtype = DataType::from_wire_name(&field.dtype)
                .ok_or_else(|| wire_err(format!("unknown type `{}`", field.dtype)))?;
            let cells = wire
                .columns
                .get(&field.name)
                .and_then(|c| c.as_array())
                .ok_or_else(|| wire_err(format!("missing column `{}`", field.name)))?;
            columns.push((field.name.clone(), decode_column(dtype, &field.name, cells)?));
        }
        if wire.columns.len() != wire.schema.len() {
            return Err(wire_err("columns do not match schema"));
        }
        Table::with_nrows(columns, wire.nrows)
    }
}

impl<'de> Deserialize<'de> for Table {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = WireTable::deserialize(d)?;
        Table::try_from(wire).map_err(D::Error::custom)
    }
}

pub fn serialize_table(table: &Table) -> Vec<u8> {
    serde_json::to_vec(table).expect("tables always serialize")
}

pub fn deserialize_table(bytes: &[u8]) -> Result<Table, TableError> {
    let wire: WireTable = serde_json::from_slice(bytes).map_err(|e| wire_err(e.to_string()))?;
    Table::try_from(wire)
}

struct CountingWriter(usize);

impl io::Write for CountingWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0 += buf.len();
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Byte length of [`serialize_table`] without materializing the output.
pub fn serialized_len(table: &Table) -> usize {
    let mut counter = CountingWriter(0);
    serde_json::to_writer(&mut counter, table).expect("tables always serialize");
    counter.0
}

/// Stable 128-bit digest of the serialized table.
pub fn table_digest(table: &Table) -> u128 {
    let mut hasher = xxhash_rust::xxh3::Xxh3::new();
    serde_json::to_writer(HashWriter(&mut hasher), table).expect("tables always serialize");
    hasher.digest128()
}

struct HashWriter<'a>(&'a mut xxhash_rust::xxh3::Xxh3);

impl io::Write for HashWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Value;

    #[test]
    fn empty_table_document() {
        let bytes = serialize_table(&Table::empty());
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            r#"{"schema":[],"nrows":0,"columns":{}}"#
        );
    }

    #[test]
    fn timestamps_are_tagged_epoch_ms() {
        let t = Table::new(vec![("t".into(), Column::Timestamp(vec![Some(1_331_807_400_000)]))]).unwrap();
        assert_eq!(
            String::from_utf8(serialize_table(&t)).unwrap(),
            r#"{"schema":[{"name":"t","type":"ts"}],"nrows":1,"columns":{"t":[1331807400000]}}"#
        );
    }

    #[test]
    fn round_trip_with_nulls_and_specials() {
        let t = Table::new(vec![
            ("a".into(), Column::Int(vec![Some(1), None])),
            ("b".into(), Column::Float(vec![Some(f64::NAN), Some(0.1)])),
            ("c".into(), Column::Str(vec![None, Some("x\"y".into())])),
            ("d".into(), Column::Bool(vec![Some(true), None])),
        ])
        .unwrap();
        let bytes = serialize_table(&t);
        assert_eq!(serialized_len(&t), bytes.len());
        let back = deserialize_table(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.cell(1, 1), Value::Float(0.1));
    }

    #[test]
    fn rejects_mismatched_documents() {
        assert!(deserialize_table(br#"{"schema":[{"name":"a","type":"i64"}],"nrows":1,"columns":{}}"#).is_err());
        assert!(deserialize_table(br#"{"schema":[{"name":"a","type":"i64"}],"nrows":2,"columns":{"a":[1]}}"#).is_err());
        assert!(deserialize_table(br#"{"schema":[{"name":"a","type":"i64"}],"nrows":1,"columns":{"a":["x"]}}"#).is_err());
    }
}
