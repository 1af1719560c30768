use std::cmp::Ordering;

use super::aggregate::{numeric_cmp, AggOp};
use super::keys::{compare_rows, group_rows, sort_rows};
use super::{SortSpec, TransformError};
use crate::table::{Column, DataType, Table};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowOp {
    RowNumber,
    Rank,
    DenseRank,
    Sum,
    Mean,
    Min,
    Max,
}

impl WindowOp {
    pub fn from_name(name: &str) -> Option<WindowOp> {
        Some(match name {
            "row_number" => WindowOp::RowNumber,
            "rank" => WindowOp::Rank,
            "dense_rank" => WindowOp::DenseRank,
            "sum" => WindowOp::Sum,
            "mean" => WindowOp::Mean,
            "min" => WindowOp::Min,
            "max" => WindowOp::Max,
            _ => return None,
        })
    }

    pub fn needs_field(self) -> bool {
        !matches!(self, WindowOp::RowNumber | WindowOp::Rank | WindowOp::DenseRank)
    }

    fn agg(self) -> Option<AggOp> {
        match self {
            WindowOp::Sum => Some(AggOp::Sum),
            WindowOp::Mean => Some(AggOp::Mean),
            WindowOp::Min => Some(AggOp::Min),
            WindowOp::Max => Some(AggOp::Max),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    pub op: WindowOp,
    pub field: Option<String>,
    pub as_: String,
}

/// Running aggregate over the frame from the partition start to the current
/// row. Nulls are skipped; min/max also skip NaN.
struct Running {
    op: AggOp,
    int_sum: i128,
    float_sum: f64,
    n: usize,
    best: Option<Value>,
}

impl Running {
    fn new(op: AggOp) -> Running {
        Running {
            op,
            int_sum: 0,
            float_sum: 0.0,
            n: 0,
            best: None,
        }
    }

    fn push(&mut self, v: Value) {
        if v.is_null() {
            return;
        }
        match self.op {
            AggOp::Sum | AggOp::Mean => {
                if let Value::Int(i) = v {
                    self.int_sum += i as i128;
                }
                self.float_sum += v.as_f64().expect("numeric");
                self.n += 1;
            }
            _ => {
                if matches!(v, Value::Float(f) if f.is_nan()) {
                    return;
                }
                let want = if self.op == AggOp::Min {
                    Ordering::Less
                } else {
                    Ordering::Greater
                };
                if self.best.as_ref().map_or(true, |b| numeric_cmp(&v, b) == Some(want)) {
                    self.best = Some(v);
                }
            }
        }
    }

    fn current(&self, dtype: DataType) -> Value {
        match self.op {
            _ if self.n == 0 && matches!(self.op, AggOp::Sum | AggOp::Mean) => Value::Null,
            AggOp::Sum if dtype == DataType::Int => match i64::try_from(self.int_sum) {
                Ok(i) => Value::Int(i),
                Err(_) => Value::Float(self.int_sum as f64),
            },
            AggOp::Sum => Value::Float(self.float_sum),
            AggOp::Mean => Value::Float(self.float_sum / self.n as f64),
            _ => self.best.clone().unwrap_or(Value::Null),
        }
    }
}

pub fn transform_window(
    table: &Table,
    groupby: &[String],
    sort: &SortSpec,
    ops: &[WindowSpec],
) -> Result<Table, TransformError> {
    let sort_cols = sort
        .iter()
        .map(|(f, o)| Ok((table.require_column(f)?, *o)))
        .collect::<Result<Vec<_>, TransformError>>()?;
    let grouping = group_rows(table, groupby)?;
    let mut partitions: Vec<Vec<usize>> = vec![Vec::new(); grouping.len()];
    for (row, &g) in grouping.group_of_row.iter().enumerate() {
        partitions[g].push(row);
    }
    for rows in &mut partitions {
        sort_rows(&sort_cols, rows);
    }

    let mut out = table.clone();
    for spec in ops {
        let nrows = table.nrows();
        let mut values = vec![Value::Null; nrows];
        let dtype = match spec.op.agg() {
            None => DataType::Int,
            Some(agg) => {
                let field = spec.field.as_deref().expect("parsed window ops carry fields");
                let col = table.require_column(field)?;
                agg.check_input(field, col.dtype())?;
                agg.output_type(Some(col.dtype()))
            }
        };
        let mut sum_overflowed = false;
        for rows in &partitions {
            match spec.op.agg() {
                None => {
                    let (mut rank, mut dense) = (0i64, 0i64);
                    for (i, &row) in rows.iter().enumerate() {
                        let peer = i > 0 && compare_rows(&sort_cols, rows[i - 1], row) == Ordering::Equal;
                        if !peer {
                            rank = i as i64 + 1;
                            dense += 1;
                        }
                        values[row] = Value::Int(match spec.op {
                            WindowOp::RowNumber => i as i64 + 1,
                            WindowOp::Rank => rank,
                            _ => dense,
                        });
                    }
                }
                Some(agg) => {
                    let col = table.require_column(spec.field.as_deref().expect("field"))?;
                    let mut running = Running::new(agg);
                    for &row in rows {
                        running.push(col.get(row));
                        let v = running.current(dtype);
                        sum_overflowed |= dtype == DataType::Int && matches!(v, Value::Float(_));
                        values[row] = v;
                    }
                }
            }
        }
        let column = if sum_overflowed {
            let floats: Vec<Value> = values
                .iter()
                .map(|v| v.as_f64().map_or(Value::Null, Value::Float))
                .collect();
            Column::from_values_typed(DataType::Float, &floats)?
        } else {
            Column::from_values_typed(dtype, &values)?
        };
        out = out.with_column(&spec.as_, column)?;
    }
    Ok(out)
}
