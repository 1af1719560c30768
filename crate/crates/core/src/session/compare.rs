//! Order-insensitive table comparison with a relative float tolerance.

use crate::table::{Column, Table};
use crate::transform::keys::sort_rows;
use crate::transform::SortOrder;
use crate::value::Value;

/// Relative tolerance used when comparing floats.
pub const FLOAT_RTOL: f64 = 1e-9;

/// Row indices of `table` in canonical order: ascending by every column,
/// columns taken in name order.
pub fn canonical_row_order(table: &Table) -> Vec<usize> {
    let mut names: Vec<&str> = table.schema().iter().map(|f| f.name.as_str()).collect();
    names.sort_unstable();
    let cols: Vec<(&Column, SortOrder)> = names
        .iter()
        .map(|n| (table.column(n).expect("schema names resolve"), SortOrder::Ascending))
        .collect();
    let mut rows: Vec<usize> = (0..table.nrows()).collect();
    sort_rows(&cols, &mut rows);
    rows
}

pub fn canonicalize(table: &Table) -> Table {
    table.take_rows(&canonical_row_order(table))
}

pub fn floats_close(a: f64, b: f64, rtol: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    if a == b {
        return true;
    }
    (a - b).abs() <= rtol * a.abs().max(b.abs())
}

pub fn values_close(a: &Value, b: &Value, rtol: f64) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => floats_close(*x, *y, rtol),
        (Value::List(xs), Value::List(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| values_close(x, y, rtol))
        }
        _ => a == b,
    }
}

/// First difference between two tables after canonical ordering, or
/// `None` when they match.
pub fn table_diff(expected: &Table, actual: &Table, rtol: f64) -> Option<String> {
    let mut want: Vec<(&str, _)> = expected.schema().iter().map(|f| (f.name.as_str(), f.dtype)).collect();
    let mut got: Vec<(&str, _)> = actual.schema().iter().map(|f| (f.name.as_str(), f.dtype)).collect();
    want.sort();
    got.sort();
    if want != got {
        return Some(format!("schema differs: expected {want:?}, got {got:?}"));
    }
    if expected.nrows() != actual.nrows() {
        return Some(format!("row count differs: expected {}, got {}", expected.nrows(), actual.nrows()));
    }
    let (e_rows, a_rows) = (canonical_row_order(expected), canonical_row_order(actual));
    for (i, (&er, &ar)) in e_rows.iter().zip(&a_rows).enumerate() {
        for (name, _) in &want {
            let ev = expected.column(name).expect("schema").get(er);
            let av = actual.column(name).expect("schema").get(ar);
            if !values_close(&ev, &av, rtol) {
                return Some(format!("row {i} field `{name}`: expected {ev}, got {av}"));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(a: Vec<Option<i64>>, b: Vec<Option<f64>>) -> Table {
        Table::new(vec![("a".into(), Column::Int(a)), ("b".into(), Column::Float(b))]).unwrap()
    }

    #[test]
    fn order_does_not_matter() {
        let x = t(vec![Some(1), Some(2)], vec![Some(0.5), None]);
        let y = t(vec![Some(2), Some(1)], vec![None, Some(0.5)]);
        assert_eq!(table_diff(&x, &y, FLOAT_RTOL), None);
    }

    #[test]
    fn tolerance_is_relative() {
        let x = t(vec![Some(1)], vec![Some(1e12)]);
        let near = t(vec![Some(1)], vec![Some(1e12 + 1e2)]);
        let far = t(vec![Some(1)], vec![Some(1e12 + 1e4)]);
        assert_eq!(table_diff(&x, &near, FLOAT_RTOL), None);
        assert!(table_diff(&x, &far, FLOAT_RTOL).unwrap().contains("row 0 field `b`"));
        assert!(floats_close(f64::NAN, f64::NAN, 0.0));
        assert!(!floats_close(0.0, 1e-300, FLOAT_RTOL));
    }

    #[test]
    fn ints_are_exact() {
        let x = t(vec![Some(1_000_000_000_000)], vec![None]);
        let y = t(vec![Some(1_000_000_000_001)], vec![None]);
        assert!(table_diff(&x, &y, FLOAT_RTOL).is_some());
    }

    #[test]
    fn schema_and_length() {
        let x = t(vec![Some(1)], vec![None]);
        let y = Table::new(vec![("a".into(), Column::Int(vec![Some(1)]))]).unwrap();
        assert!(table_diff(&x, &y, FLOAT_RTOL).unwrap().starts_with("schema"));
        let z = t(vec![Some(1), Some(1)], vec![None, None]);
        assert!(table_diff(&x, &z, FLOAT_RTOL).unwrap().starts_with("row count"));
    }
}
