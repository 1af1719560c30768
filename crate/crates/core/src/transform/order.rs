use super::keys::{group_rows, resolve_columns, sort_rows};
use super::{SortSpec, TransformError};
use crate::table::{Column, DataType, Table};
use crate::value::Value;

fn sort_columns<'a>(table: &'a Table, sort: &SortSpec) -> Result<Vec<(&'a Column, super::SortOrder)>, TransformError> {
    sort.iter()
        .map(|(f, o)| Ok((table.require_column(f)?, *o)))
        .collect()
}

/// Stable sort of the whole table.
pub fn transform_collect(table: &Table, sort: &SortSpec) -> Result<Table, TransformError> {
    let cols = sort_columns(table, sort)?;
    if cols.is_empty() {
        return Ok(table.clone());
    }
    let mut rows: Vec<usize> = (0..table.nrows()).collect();
    sort_rows(&cols, &mut rows);
    Ok(table.take_rows(&rows))
}

/// `[min, max]` over non-null, non-NaN values, or `[null, null]`.
pub fn transform_extent(table: &Table, field: &str) -> Result<Value, TransformError> {
    let col = table.require_column(field)?;
    let (lo, hi) = match col {
        Column::Int(v) | Column::Timestamp(v) => {
            let mut it = v.iter().flatten();
            let first = it.next().copied();
            let (lo, hi) = it.fold((first, first), |(lo, hi), &x| {
                (lo.map(|l| l.min(x)), hi.map(|h| h.max(x)))
            });
            let wrap = |x: Option<i64>| match (x, col.dtype()) {
                (None, _) => Value::Null,
                (Some(x), DataType::Timestamp) => Value::Timestamp(x),
                (Some(x), _) => Value::Int(x),
            };
            (wrap(lo), wrap(hi))
        }
        Column::Float(v) => {
            let mut lo: Option<f64> = None;
            let mut hi: Option<f64> = None;
            for &x in v.iter().flatten().filter(|x| !x.is_nan()) {
                lo = Some(lo.map_or(x, |l| l.min(x)));
                hi = Some(hi.map_or(x, |h| h.max(x)));
            }
            (lo.map_or(Value::Null, Value::Float), hi.map_or(Value::Null, Value::Float))
        }
        _ => return Err(TransformError::NonNumericField(field.to_string())),
    };
    Ok(Value::List(vec![lo, hi]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackOffset {
    Zero,
    Center,
    Normalize,
}

/// Stack `field` within each group. Rows are visited in `sort` order; null
/// values count as zero.
pub fn transform_stack(
    table: &Table,
    field: &str,
    groupby: &[String],
    sort: &SortSpec,
    offset: StackOffset,
    as_: &[String; 2],
) -> Result<Table, TransformError> {
    let col = table.require_column(field)?;
    if !col.dtype().is_numeric() {
        return Err(TransformError::NonNumericField(field.to_string()));
    }
    resolve_columns(table, groupby)?;
    let cols = sort_columns(table, sort)?;
    let grouping = group_rows(table, groupby)?;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); grouping.len()];
    for (row, &g) in grouping.group_of_row.iter().enumerate() {
        groups[g].push(row);
    }
    let value = |row: usize| col.f64_at(row).unwrap_or(0.0);
    let totals: Vec<f64> = groups
        .iter()
        .map(|rows| rows.iter().map(|&r| value(r).abs()).sum())
        .collect();
    let max_total = totals.iter().copied().fold(0.0, f64::max);

    let mut y0 = vec![None; table.nrows()];
    let mut y1 = vec![None; table.nrows()];
    for (g, rows) in groups.iter_mut().enumerate() {
        sort_rows(&cols, rows);
        match offset {
            StackOffset::Zero => {
                let (mut pos, mut neg) = (0.0, 0.0);
                for &r in rows.iter() {
                    let v = value(r);
                    let base = if v < 0.0 { &mut neg } else { &mut pos };
                    y0[r] = Some(*base);
                    *base += v;
                    y1[r] = Some(*base);
                }
            }
            StackOffset::Center | StackOffset::Normalize => {
                let (mut last, scale) = match offset {
                    StackOffset::Center => ((max_total - totals[g]) / 2.0, 1.0),
                    _ => (0.0, if totals[g] > 0.0 { 1.0 / totals[g] } else { 0.0 }),
                };
                for &r in rows.iter() {
                    let v = value(r).abs() * scale;
                    y0[r] = Some(last);
                    last += v;
                    y1[r] = Some(last);
                }
            }
        }
    }
    let out = table.with_column(&as_[0], Column::Float(y0))?;
    Ok(out.with_column(&as_[1], Column::Float(y1))?)
}
