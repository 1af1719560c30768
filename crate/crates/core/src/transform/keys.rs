//! Hashable, totally ordered cell keys used for grouping and sorting.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::table::{Column, Table, TableError};

/// A cell as a grouping/sorting key. Orders nulls first; floats use the
/// IEEE total order after folding `-0.0` into `0.0` and all NaNs into one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) enum KeyCell {
    Null,
    Int(i64),
    Float(u64),
    Str(String),
    Bool(bool),
}

impl KeyCell {
    pub(crate) fn from_column(col: &Column, row: usize) -> KeyCell {
        match col {
            Column::Int(v) | Column::Timestamp(v) => v[row].map_or(KeyCell::Null, KeyCell::Int),
            Column::Float(v) => v[row].map_or(KeyCell::Null, |f| KeyCell::Float(float_key(f))),
            Column::Str(v) => v[row]
                .as_ref()
                .map_or(KeyCell::Null, |s| KeyCell::Str(s.clone())),
            Column::Bool(v) => v[row].map_or(KeyCell::Null, KeyCell::Bool),
        }
    }
}

fn float_key(f: f64) -> u64 {
    if f.is_nan() {
        f64::NAN.to_bits()
    } else if f == 0.0 {
        0.0f64.to_bits()
    } else {
        f.to_bits()
    }
}

impl Ord for KeyCell {
    fn cmp(&self, other: &Self) -> Ordering {
        use KeyCell::*;
        match (self, other) {
            (Null, Null) => Ordering::Equal,
            (Null, _) => Ordering::Less,
            (_, Null) => Ordering::Greater,
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => f64::from_bits(*a).total_cmp(&f64::from_bits(*b)),
            (Str(a), Str(b)) => a.cmp(b),
            (Bool(a), Bool(b)) => a.cmp(b),
            // columns are homogeneous, so mixed variants only arise across
            // columns; order them by variant for totality
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl PartialOrd for KeyCell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KeyCell {
    fn rank(&self) -> u8 {
        match self {
            KeyCell::Null => 0,
            KeyCell::Bool(_) => 1,
            KeyCell::Int(_) => 2,
            KeyCell::Float(_) => 3,
            KeyCell::Str(_) => 4,
        }
    }
}

/// Rows grouped by a tuple of columns, groups in ascending key order.
pub(crate) struct Grouping {
    /// Representative row of each group (its first row in input order).
    pub first_rows: Vec<usize>,
    /// Group index of every input row.
    pub group_of_row: Vec<usize>,
}

impl Grouping {
    pub(crate) fn len(&self) -> usize {
        self.first_rows.len()
    }
}

pub(crate) fn resolve_columns<'a>(
    table: &'a Table,
    names: &[String],
) -> Result<Vec<&'a Column>, TableError> {
    names.iter().map(|n| table.require_column(n)).collect()
}

pub(crate) fn group_rows(table: &Table, groupby: &[String]) -> Result<Grouping, TableError> {
    let cols = resolve_columns(table, groupby)?;
    let nrows = table.nrows();
    if cols.is_empty() {
        return Ok(Grouping {
            first_rows: if nrows > 0 { vec![0] } else { Vec::new() },
            group_of_row: vec![0; nrows],
        });
    }
    let mut index: HashMap<Vec<KeyCell>, usize> = HashMap::new();
    let mut keys: Vec<Vec<KeyCell>> = Vec::new();
    let mut first_rows = Vec::new();
    let mut group_of_row = Vec::with_capacity(nrows);
    for row in 0..nrows {
        let key: Vec<KeyCell> = cols.iter().map(|c| KeyCell::from_column(c, row)).collect();
        let next = keys.len();
        let g = *index.entry(key.clone()).or_insert_with(|| {
            keys.push(key);
            first_rows.push(row);
            next
        });
        group_of_row.push(g);
    }
    // canonical group order: ascending by key tuple
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut remap = vec![0; keys.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    Ok(Grouping {
        first_rows: order.iter().map(|&g| first_rows[g]).collect(),
        group_of_row: group_of_row.into_iter().map(|g| remap[g]).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortOrder {
    Ascending,
    Descending,
}

/// Compare two rows by a list of sort columns. Nulls sort first when
/// ascending (and so last when descending).
pub(crate) fn compare_rows(cols: &[(&Column, SortOrder)], a: usize, b: usize) -> Ordering {
    for (col, order) in cols {
        let ord = KeyCell::from_column(col, a).cmp(&KeyCell::from_column(col, b));
        let ord = match order {
            SortOrder::Ascending => ord,
            SortOrder::Descending => ord.reverse(),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

/// Stable sort of `rows` by the given columns.
pub(crate) fn sort_rows(cols: &[(&Column, SortOrder)], rows: &mut [usize]) {
    if !cols.is_empty() {
        rows.sort_by(|&a, &b| compare_rows(cols, a, b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nulls_first_and_nan_last() {
        let mut keys = vec![
            KeyCell::Float(float_key(f64::NAN)),
            KeyCell::Float(float_key(1.0)),
            KeyCell::Null,
            KeyCell::Float(float_key(-1.0)),
        ];
        keys.sort();
        assert_eq!(keys[0], KeyCell::Null);
        assert_eq!(keys[1], KeyCell::Float(float_key(-1.0)));
        assert_eq!(keys[3], KeyCell::Float(float_key(f64::NAN)));
    }

    #[test]
    fn negative_zero_groups_with_zero() {
        assert_eq!(KeyCell::Float(float_key(-0.0)), KeyCell::Float(float_key(0.0)));
    }

    #[test]
    fn groups_are_key_ordered() {
        let t = Table::new(vec![(
            "g".into(),
            Column::Str(vec![Some("y".into()), None, Some("x".into()), Some("y".into())]),
        )])
        .unwrap();
        let g = group_rows(&t, &["g".to_string()]).unwrap();
        assert_eq!(g.first_rows, vec![1, 2, 0]);
        assert_eq!(g.group_of_row, vec![2, 0, 1, 2]);
    }
}
