//! The supported subset of the Vega expression language.
//!
//! Parsing is total over the grammar below; whether an expression can run on
//! the server is a separate question answered by [`is_supported`].

mod analyze;
mod ast;
mod eval;
mod parse;
mod print;

pub use analyze::{analyze, classify_ident, IdentKind, RefSet, BUILTIN_CONSTANTS};
pub use ast::{BinaryOp, Expr, Literal, UnaryOp};
pub use eval::{
    compare, evaluate, strict_equals, CompiledExpr, EvalError, NoDatum, Row, RowContext,
    SignalValues,
};
pub use parse::{parse_expression, SyntaxError};
pub use print::to_canonical_string;

pub(crate) use eval::number_string;

/// Functions the evaluator implements. Any other call makes an expression
/// unsupported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Abs,
    Ceil,
    Floor,
    Round,
    Sqrt,
    Pow,
    Exp,
    Log,
    Min,
    Max,
    Length,
    IsValid,
    IsFinite,
    InRange,
    Year,
    Month,
    Date,
    Hours,
    Minutes,
    Time,
    ToNumber,
    ToString,
    If,
}

pub const SUPPORTED_FUNCTIONS: [&str; 23] = [
    "abs", "ceil", "floor", "round", "sqrt", "pow", "exp", "log", "min", "max", "length",
    "isValid", "isFinite", "inrange", "year", "month", "date", "hours", "minutes", "time",
    "toNumber", "toString", "if",
];

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "ceil" => Func::Ceil,
            "floor" => Func::Floor,
            "round" => Func::Round,
            "sqrt" => Func::Sqrt,
            "pow" => Func::Pow,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "min" => Func::Min,
            "max" => Func::Max,
            "length" => Func::Length,
            "isValid" => Func::IsValid,
            "isFinite" => Func::IsFinite,
            "inrange" => Func::InRange,
            "year" => Func::Year,
            "month" => Func::Month,
            "date" => Func::Date,
            "hours" => Func::Hours,
            "minutes" => Func::Minutes,
            "time" => Func::Time,
            "toNumber" => Func::ToNumber,
            "toString" => Func::ToString,
            "if" => Func::If,
            _ => return None,
        })
    }

    pub fn accepts_arity(self, n: usize) -> bool {
        match self {
            Func::Pow => n == 2,
            Func::Min | Func::Max => n >= 1,
            Func::InRange => (2..=4).contains(&n),
            Func::If => n == 3,
            _ => n == 1,
        }
    }
}

/// True iff every node is in the evaluable grammar, every call is to a
/// supported function with a valid arity, and no dataset is referenced.
pub fn is_supported(expr: &Expr) -> bool {
    if analyze::datum_field(expr).is_some() {
        return true;
    }
    match expr {
        Expr::Literal(_) => true,
        Expr::Ident(name) => classify_ident(name) != IdentKind::Datum,
        // member access is only meaningful on `datum`, handled above
        Expr::Member { .. } => false,
        Expr::Index { object, index } => {
            !analyze::is_datum(object) && is_supported(object) && is_supported(index)
        }
        Expr::Unary { operand, .. } => is_supported(operand),
        Expr::Binary { left, right, .. } => is_supported(left) && is_supported(right),
        Expr::Ternary {
            cond,
            then,
            otherwise,
        } => is_supported(cond) && is_supported(then) && is_supported(otherwise),
        Expr::Call { callee, args } => {
            Func::from_name(callee).is_some_and(|f| f.accepts_arity(args.len()))
                && args.iter().all(is_supported)
        }
        Expr::Array(items) => items.iter().all(is_supported),
    }
}
