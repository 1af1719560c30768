use std::collections::BTreeSet;

use super::ast::{Expr, Literal};

/// Names referenced by an expression.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefSet {
    pub signals: BTreeSet<String>,
    pub datasets: BTreeSet<String>,
    pub datum_fields: BTreeSet<String>,
}

impl RefSet {
    pub fn is_empty(&self) -> bool {
        self.signals.is_empty() && self.datasets.is_empty() && self.datum_fields.is_empty()
    }

    pub fn extend(&mut self, other: RefSet) {
        self.signals.extend(other.signals);
        self.datasets.extend(other.datasets);
        self.datum_fields.extend(other.datum_fields);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentKind {
    Datum,
    Constant,
    Signal,
}

pub const BUILTIN_CONSTANTS: [&str; 11] = [
    "NaN", "E", "LN2", "LN10", "LOG2E", "LOG10E", "PI", "SQRT1_2", "SQRT2", "MIN_VALUE",
    "MAX_VALUE",
];

/// Functions whose first (string) argument names a dataset.
const DATA_FUNCTIONS: [&str; 5] = [
    "data",
    "indata",
    "vlSelectionTest",
    "vlSelectionIdTest",
    "vlSelectionResolve",
];

pub fn classify_ident(name: &str) -> IdentKind {
    if name == "datum" {
        IdentKind::Datum
    } else if BUILTIN_CONSTANTS.contains(&name) {
        IdentKind::Constant
    } else {
        IdentKind::Signal
    }
}

/// The field named by `datum.x` / `datum["x"]`, if `expr` is such an access.
pub(crate) fn datum_field(expr: &Expr) -> Option<&str> {
    match expr {
        Expr::Member { object, property } if is_datum(object) => Some(property),
        Expr::Index { object, index } if is_datum(object) => match index.as_ref() {
            Expr::Literal(Literal::Str(s)) => Some(s),
            _ => None,
        },
        _ => None,
    }
}

pub(crate) fn is_datum(expr: &Expr) -> bool {
    matches!(expr, Expr::Ident(name) if name == "datum")
}

pub fn analyze(expr: &Expr) -> RefSet {
    let mut refs = RefSet::default();
    walk(expr, &mut refs);
    refs
}

fn walk(expr: &Expr, refs: &mut RefSet) {
    if let Some(field) = datum_field(expr) {
        refs.datum_fields.insert(field.to_string());
        return;
    }
    match expr {
        Expr::Literal(_) => {}
        Expr::Ident(name) => {
            if classify_ident(name) == IdentKind::Signal {
                refs.signals.insert(name.clone());
            }
        }
        Expr::Member { object, .. } => walk(object, refs),
        Expr::Index { object, index } => {
            walk(object, refs);
            walk(index, refs);
        }
        Expr::Unary { operand, .. } => walk(operand, refs),
        Expr::Binary { left, right, .. } => {
            walk(left, refs);
            walk(right, refs);
        }
        Expr::Ternary {
            cond,
            then,
            otherwise,
        } => {
            walk(cond, refs);
            walk(then, refs);
            walk(otherwise, refs);
        }
        Expr::Call { callee, args } => {
            if DATA_FUNCTIONS.contains(&callee.as_str()) {
                if let Some(Expr::Literal(Literal::Str(name))) = args.first() {
                    refs.datasets.insert(name.clone());
                }
            }
            for arg in args {
                walk(arg, refs);
            }
        }
        Expr::Array(items) => {
            for item in items {
                walk(item, refs);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_expression;
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn signal_and_field_refs() {
        let refs = analyze(&parse_expression("datum.x < brush[1]").unwrap());
        assert_eq!(refs.signals, set(&["brush"]));
        assert_eq!(refs.datum_fields, set(&["x"]));
        assert!(refs.datasets.is_empty());
    }

    #[test]
    fn dataset_refs() {
        let refs = analyze(&parse_expression("length(data('tbl'))").unwrap());
        assert_eq!(refs.datasets, set(&["tbl"]));
        assert!(refs.signals.is_empty());
    }

    #[test]
    fn constants_only() {
        assert!(analyze(&parse_expression("1+2").unwrap()).is_empty());
        assert!(analyze(&parse_expression("PI * 2").unwrap()).is_empty());
    }

    #[test]
    fn bracketed_datum_field() {
        let refs = analyze(&parse_expression("datum['a b'] + datum.c").unwrap());
        assert_eq!(refs.datum_fields, set(&["a b", "c"]));
    }
}
