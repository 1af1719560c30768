use rayon::prelude::*;

use super::TransformError;
use crate::expr::{CompiledExpr, EvalError, Expr, SignalValues};
use crate::table::{Column, DataType, Table};
use crate::value::Value;

/// Rows per parallel work unit. Chunks are concatenated in order, so results
/// are identical to a sequential scan.
const CHUNK_ROWS: usize = 16 * 1024;

/// Columns backing each slot of a compiled expression; missing fields read
/// as null.
fn slot_columns<'a>(table: &'a Table, compiled: &CompiledExpr) -> Vec<Option<&'a Column>> {
    compiled.fields().iter().map(|f| table.column(f)).collect()
}

fn eval_row(compiled: &CompiledExpr, cols: &[Option<&Column>], row: usize) -> Result<Value, EvalError> {
    compiled.eval(&|slot: usize| cols[slot].map_or(Value::Null, |c| c.get(row)))
}

fn chunks(nrows: usize) -> Vec<(usize, usize)> {
    (0..nrows)
        .step_by(CHUNK_ROWS)
        .map(|start| (start, (start + CHUNK_ROWS).min(nrows)))
        .collect()
}

pub fn transform_filter(
    table: &Table,
    predicate: &Expr,
    signals: &SignalValues,
) -> Result<Table, TransformError> {
    let compiled = CompiledExpr::compile(predicate, signals)?;
    if let Some(v) = compiled.as_constant() {
        return match keep(v)? {
            true => Ok(table.clone()),
            false => Ok(table.take_rows(&[])),
        };
    }
    let cols = slot_columns(table, &compiled);
    let parts: Vec<Result<Vec<usize>, EvalError>> = chunks(table.nrows())
        .into_par_iter()
        .map(|(start, end)| {
            let mut kept = Vec::new();
            for row in start..end {
                if keep(&eval_row(&compiled, &cols, row)?)? {
                    kept.push(row);
                }
            }
            Ok(kept)
        })
        .collect();
    let mut rows = Vec::new();
    for part in parts {
        rows.extend(part?);
    }
    if rows.len() == table.nrows() {
        return Ok(table.clone());
    }
    Ok(table.take_rows(&rows))
}

/// Null drops the row like false; any other non-boolean is an error.
fn keep(v: &Value) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(*b),
        Value::Null => Ok(false),
        other => Err(EvalError::TypeError(format!(
            "filter predicate produced {}",
            other.type_name()
        ))),
    }
}

pub fn transform_formula(
    table: &Table,
    expr: &Expr,
    as_: &str,
    signals: &SignalValues,
) -> Result<Table, TransformError> {
    let compiled = CompiledExpr::compile(expr, signals)?;
    let nrows = table.nrows();
    let values: Vec<Value> = match compiled.as_constant() {
        Some(v) => vec![v.clone(); nrows],
        None => {
            let cols = slot_columns(table, &compiled);
            let parts: Vec<Result<Vec<Value>, EvalError>> = chunks(nrows)
                .into_par_iter()
                .map(|(start, end)| (start..end).map(|row| eval_row(&compiled, &cols, row)).collect())
                .collect();
            let mut values = Vec::with_capacity(nrows);
            for part in parts {
                values.extend(part?);
            }
            values
        }
    };
    let column = Column::from_values(&values, DataType::Float)?;
    Ok(table.with_column(as_, column)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn xs(n: i64) -> Table {
        Table::new(vec![("x".into(), Column::Int((0..n).map(Some).collect()))]).unwrap()
    }

    fn brush(lo: i64, hi: i64) -> SignalValues {
        let mut s = SignalValues::new();
        s.insert("brush".into(), Value::List(vec![Value::Int(lo), Value::Int(hi)]));
        s
    }

    #[test]
    fn brush_filter_counts() {
        let pred = parse_expression("inrange(datum.x, brush)").unwrap();
        let t = xs(1000);
        assert_eq!(transform_filter(&t, &pred, &brush(0, 500)).unwrap().nrows(), 501);
        assert_eq!(transform_filter(&t, &pred, &brush(135, 275)).unwrap().nrows(), 141);
    }

    #[test]
    fn constant_true_is_identity() {
        let t = xs(10);
        let out = transform_filter(&t, &parse_expression("true").unwrap(), &SignalValues::new()).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn order_is_preserved_across_chunks() {
        let t = xs(100_000);
        let pred = parse_expression("datum.x % 3 == 0").unwrap();
        let out = transform_filter(&t, &pred, &SignalValues::new()).unwrap();
        assert_eq!(out.nrows(), 33_334);
        assert_eq!(out.cell(33_333, 0), Value::Int(99_999));
    }

    #[test]
    fn non_boolean_predicate_is_type_error() {
        let err = transform_filter(&xs(3), &parse_expression("datum.x").unwrap(), &SignalValues::new());
        assert!(matches!(err, Err(TransformError::Eval(EvalError::TypeError(_)))));
    }

    #[test]
    fn formula_examples() {
        let t = Table::new(vec![("a".into(), Column::Int(vec![Some(1), Some(2), Some(3)]))]).unwrap();
        let s = SignalValues::new();
        let out = transform_formula(&t, &parse_expression("datum.a*2").unwrap(), "b", &s).unwrap();
        assert_eq!(out.column("b"), Some(&Column::Int(vec![Some(2), Some(4), Some(6)])));
        let out = transform_formula(&t, &parse_expression("1").unwrap(), "c", &s).unwrap();
        assert_eq!(out.column("c"), Some(&Column::Int(vec![Some(1); 3])));
        let out = transform_formula(&t, &parse_expression("datum.zz").unwrap(), "d", &s).unwrap();
        assert_eq!(out.column("d").unwrap().dtype(), DataType::Float);
        assert!((0..3).all(|r| out.column("d").unwrap().is_null(r)));
    }

    #[test]
    fn formula_replaces_in_place() {
        let t = Table::new(vec![
            ("a".into(), Column::Int(vec![Some(1)])),
            ("b".into(), Column::Int(vec![Some(1)])),
        ])
        .unwrap();
        let out = transform_formula(&t, &parse_expression("datum.a + 0.5").unwrap(), "a", &SignalValues::new()).unwrap();
        assert_eq!(out.schema()[0].name, "a");
        assert_eq!(out.cell(0, 0), Value::Float(1.5));
    }
}
