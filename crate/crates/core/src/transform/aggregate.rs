use super::keys::{group_rows, Grouping};
use super::TransformError;
use crate::table::{Column, DataType, Table};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggOp {
    Count,
    Valid,
    Sum,
    Mean,
    Min,
    Max,
    Variance,
    Stdev,
    Median,
}

impl AggOp {
    pub fn from_name(name: &str) -> Option<AggOp> {
        Some(match name {
            "count" => AggOp::Count,
            "valid" => AggOp::Valid,
            "sum" => AggOp::Sum,
            "mean" => AggOp::Mean,
            "min" => AggOp::Min,
            "max" => AggOp::Max,
            "variance" => AggOp::Variance,
            "stdev" => AggOp::Stdev,
            "median" => AggOp::Median,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AggOp::Count => "count",
            AggOp::Valid => "valid",
            AggOp::Sum => "sum",
            AggOp::Mean => "mean",
            AggOp::Min => "min",
            AggOp::Max => "max",
            AggOp::Variance => "variance",
            AggOp::Stdev => "stdev",
            AggOp::Median => "median",
        }
    }

    /// Output type for an input field of type `input` (`None` for count).
    pub(crate) fn output_type(self, input: Option<DataType>) -> DataType {
        match self {
            AggOp::Count | AggOp::Valid => DataType::Int,
            AggOp::Sum if input == Some(DataType::Int) => DataType::Int,
            AggOp::Min | AggOp::Max => input.unwrap_or(DataType::Float),
            _ => DataType::Float,
        }
    }

    /// Check the field type, erroring for non-numeric inputs.
    pub(crate) fn check_input(self, field: &str, dtype: DataType) -> Result<(), TransformError> {
        let ok = match self {
            AggOp::Count | AggOp::Valid => true,
            AggOp::Min | AggOp::Max => dtype.is_numeric() || dtype == DataType::Timestamp,
            _ => dtype.is_numeric(),
        };
        if ok {
            Ok(())
        } else {
            Err(TransformError::NonNumericAggregate {
                op: self.name().to_string(),
                field: field.to_string(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggSpec {
    pub op: AggOp,
    pub field: Option<String>,
    pub as_: String,
}

/// Sample variance by the two-pass formula; `None` below two values.
pub(crate) fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
}

/// Median ignoring NaN; `None` when nothing remains.
pub(crate) fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Order of two numeric or timestamp values, exact for integers.
pub(crate) fn numeric_cmp(a: &Value, b: &Value) -> Option<std::cmp::Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) | (Value::Timestamp(x), Value::Timestamp(y)) => Some(x.cmp(y)),
        _ => a.as_f64()?.partial_cmp(&b.as_f64()?),
    }
}

/// One value per group for a single aggregate op.
fn aggregate_groups(
    table: &Table,
    grouping: &Grouping,
    ngroups: usize,
    spec: &AggSpec,
) -> Result<Column, TransformError> {
    let Some(field) = &spec.field else {
        let mut counts = vec![0i64; ngroups];
        for &g in &grouping.group_of_row {
            counts[g] += 1;
        }
        return Ok(Column::Int(counts.into_iter().map(Some).collect()));
    };
    let col = table.require_column(field)?;
    let dtype = col.dtype();
    spec.op.check_input(field, dtype)?;
    let out_type = spec.op.output_type(Some(dtype));
    let rows = || grouping.group_of_row.iter().enumerate().filter(|(r, _)| !col.is_null(*r));
    let values: Vec<Value> = match spec.op {
        AggOp::Count | AggOp::Valid => {
            let mut counts = vec![0i64; ngroups];
            match spec.op {
                AggOp::Count => grouping.group_of_row.iter().for_each(|&g| counts[g] += 1),
                _ => rows().for_each(|(_, &g)| counts[g] += 1),
            }
            counts.into_iter().map(Value::Int).collect()
        }
        AggOp::Sum if dtype == DataType::Int => {
            let Column::Int(cells) = col else {
                unreachable!("dtype is int")
            };
            let mut sums: Vec<Option<i128>> = vec![None; ngroups];
            for (&cell, &g) in cells.iter().zip(&grouping.group_of_row) {
                if let Some(v) = cell {
                    sums[g] = Some(sums[g].unwrap_or(0) + v as i128);
                }
            }
            if sums.iter().flatten().all(|s| i64::try_from(*s).is_ok()) {
                sums.into_iter()
                    .map(|s| s.map_or(Value::Null, |s| Value::Int(s as i64)))
                    .collect()
            } else {
                let floats = sums
                    .into_iter()
                    .map(|s| s.map_or(Value::Null, |s| Value::Float(s as f64)))
                    .collect::<Vec<_>>();
                return Ok(Column::from_values_typed(DataType::Float, &floats)?);
            }
        }
        AggOp::Sum | AggOp::Mean => {
            let mut sums: Vec<Option<(f64, usize)>> = vec![None; ngroups];
            for (r, &g) in rows() {
                let v = col.f64_at(r).expect("numeric, non-null");
                let (s, n) = sums[g].unwrap_or((0.0, 0));
                sums[g] = Some((s + v, n + 1));
            }
            sums.into_iter()
                .map(|acc| match (acc, spec.op) {
                    (None, _) => Value::Null,
                    (Some((s, _)), AggOp::Sum) => Value::Float(s),
                    (Some((s, n)), _) => Value::Float(s / n as f64),
                })
                .collect()
        }
        AggOp::Min | AggOp::Max => {
            let mut best: Vec<Option<Value>> = vec![None; ngroups];
            let want = if spec.op == AggOp::Min {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            };
            for (r, &g) in rows() {
                let v = col.get(r);
                if matches!(v, Value::Float(f) if f.is_nan()) {
                    continue;
                }
                let replace = match &best[g] {
                    None => true,
                    Some(b) => numeric_cmp(&v, b) == Some(want),
                };
                if replace {
                    best[g] = Some(v);
                }
            }
            best.into_iter().map(|b| b.unwrap_or(Value::Null)).collect()
        }
        AggOp::Variance | AggOp::Stdev | AggOp::Median => {
            let mut groups: Vec<Vec<f64>> = vec![Vec::new(); ngroups];
            for (r, &g) in rows() {
                groups[g].push(col.f64_at(r).expect("numeric, non-null"));
            }
            groups
                .iter()
                .map(|vals| {
                    let out = match spec.op {
                        AggOp::Variance => sample_variance(vals),
                        AggOp::Stdev => sample_variance(vals).map(f64::sqrt),
                        _ => median(vals),
                    };
                    out.map_or(Value::Null, Value::Float)
                })
                .collect()
        }
    };
    Ok(Column::from_values_typed(out_type, &values)?)
}

fn check_output_names(groupby: &[String], ops: &[AggSpec]) -> Result<(), TransformError> {
    let mut seen = std::collections::BTreeSet::new();
    for name in groupby.iter().chain(ops.iter().map(|s| &s.as_)) {
        if !seen.insert(name) {
            return Err(crate::table::TableError::DuplicateField(name.clone()).into());
        }
    }
    Ok(())
}

pub fn transform_aggregate(
    table: &Table,
    groupby: &[String],
    ops: &[AggSpec],
) -> Result<Table, TransformError> {
    check_output_names(groupby, ops)?;
    let grouping = group_rows(table, groupby)?;
    // without groupby there is exactly one group, even over empty input
    let ngroups = if groupby.is_empty() { 1 } else { grouping.len() };
    let mut columns = Vec::with_capacity(groupby.len() + ops.len());
    for name in groupby {
        let col = table.require_column(name)?;
        columns.push((name.clone(), col.take(&grouping.first_rows)));
    }
    for spec in ops {
        columns.push((spec.as_.clone(), aggregate_groups(table, &grouping, ngroups, spec)?));
    }
    Ok(Table::with_nrows(columns, ngroups)?)
}

pub fn transform_joinaggregate(
    table: &Table,
    groupby: &[String],
    ops: &[AggSpec],
) -> Result<Table, TransformError> {
    let grouping = group_rows(table, groupby)?;
    let ngroups = grouping.len().max(1);
    let mut out = table.clone();
    for spec in ops {
        let per_group = aggregate_groups(table, &grouping, ngroups, spec)?;
        out = out.with_column(&spec.as_, per_group.take(&grouping.group_of_row))?;
    }
    Ok(out)
}
