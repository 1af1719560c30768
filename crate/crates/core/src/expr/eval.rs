//! Evaluation of supported expressions.
//!
//! Expressions are first compiled against a signal environment: signal
//! references become constants, datum fields become numbered slots, and
//! constant subtrees are folded. The compiled form is then evaluated once per
//! row.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Datelike, Timelike, Utc};

use super::analyze::{classify_ident, datum_field, IdentKind};
use super::ast::{BinaryOp, Expr, Literal, UnaryOp};
use super::Func;
use crate::value::Value;

pub type SignalValues = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("type error: {0}")]
    TypeError(String),
    #[error("unbound signal `{0}`")]
    UnboundSignal(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
}

fn type_error(msg: impl Into<String>) -> EvalError {
    EvalError::TypeError(msg.into())
}

/// Field lookup for a single datum.
pub trait RowContext {
    fn field(&self, name: &str) -> Option<Value>;
}

impl RowContext for BTreeMap<String, Value> {
    fn field(&self, name: &str) -> Option<Value> {
        self.get(name).cloned()
    }
}

impl RowContext for HashMap<String, Value> {
    fn field(&self, name: &str) -> Option<Value> {
        self.get(name).cloned()
    }
}

/// An empty datum: every field is missing.
pub struct NoDatum;

impl RowContext for NoDatum {
    fn field(&self, _: &str) -> Option<Value> {
        None
    }
}

/// Evaluate `expr` for one datum under the given signal bindings.
pub fn evaluate(
    expr: &Expr,
    datum: &dyn RowContext,
    signals: &SignalValues,
) -> Result<Value, EvalError> {
    let compiled = CompiledExpr::compile(expr, signals)?;
    let values: Vec<Value> = compiled
        .fields()
        .iter()
        .map(|name| datum.field(name).unwrap_or(Value::Null))
        .collect();
    compiled.eval(&|slot: usize| values[slot].clone())
}

/// Slot-indexed access to the fields of the current row.
pub trait Row {
    fn get(&self, slot: usize) -> Value;
}

impl<F: Fn(usize) -> Value> Row for F {
    fn get(&self, slot: usize) -> Value {
        self(slot)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Const(Value),
    Field(usize),
    Index(Box<Node>, Box<Node>),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Ternary(Box<Node>, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
    Array(Vec<Node>),
}

#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
    fields: Vec<String>,
}

impl CompiledExpr {
    pub fn compile(expr: &Expr, signals: &SignalValues) -> Result<CompiledExpr, EvalError> {
        let mut fields = Vec::new();
        let root = compile_node(expr, signals, &mut fields)?;
        Ok(CompiledExpr { root, fields })
    }

    /// Datum field names, indexed by slot.
    pub fn fields(&self) -> &[String] {
        &self.fields
    }

    /// The folded value when the expression does not depend on the datum.
    pub fn as_constant(&self) -> Option<&Value> {
        match &self.root {
            Node::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn eval(&self, row: &dyn Row) -> Result<Value, EvalError> {
        eval_node(&self.root, row)
    }
}

fn compile_node(
    expr: &Expr,
    signals: &SignalValues,
    fields: &mut Vec<String>,
) -> Result<Node, EvalError> {
    if let Some(name) = datum_field(expr) {
        let slot = match fields.iter().position(|f| f == name) {
            Some(slot) => slot,
            None => {
                fields.push(name.to_string());
                fields.len() - 1
            }
        };
        return Ok(Node::Field(slot));
    }
    let node = match expr {
        Expr::Literal(lit) => Node::Const(match lit {
            Literal::Null => Value::Null,
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Int(i) => Value::Int(*i),
            Literal::Float(f) => Value::Float(*f),
            Literal::Str(s) => Value::Str(s.clone()),
        }),
        Expr::Ident(name) => match classify_ident(name) {
            IdentKind::Datum => {
                return Err(EvalError::Unsupported("bare `datum` reference".into()))
            }
            IdentKind::Constant => Node::Const(builtin_constant(name)),
            IdentKind::Signal => Node::Const(
                signals
                    .get(name)
                    .cloned()
                    .ok_or_else(|| EvalError::UnboundSignal(name.clone()))?,
            ),
        },
        Expr::Member { property, .. } => {
            return Err(EvalError::Unsupported(format!(
                "member access `.{property}` outside datum"
            )))
        }
        Expr::Index { object, index } => {
            if super::analyze::is_datum(object) {
                return Err(EvalError::Unsupported("dynamic datum field".into()));
            }
            Node::Index(
                Box::new(compile_node(object, signals, fields)?),
                Box::new(compile_node(index, signals, fields)?),
            )
        }
        Expr::Unary { op, operand } => {
            Node::Unary(*op, Box::new(compile_node(operand, signals, fields)?))
        }
        Expr::Binary { op, left, right } => Node::Binary(
            *op,
            Box::new(compile_node(left, signals, fields)?),
            Box::new(compile_node(right, signals, fields)?),
        ),
        Expr::Ternary {
            cond,
            then,
            otherwise,
        } => Node::Ternary(
            Box::new(compile_node(cond, signals, fields)?),
            Box::new(compile_node(then, signals, fields)?),
            Box::new(compile_node(otherwise, signals, fields)?),
        ),
        Expr::Call { callee, args } => {
            let func = Func::from_name(callee)
                .ok_or_else(|| EvalError::Unsupported(format!("function `{callee}`")))?;
            if !func.accepts_arity(args.len()) {
                return Err(EvalError::Unsupported(format!(
                    "`{callee}` called with {} arguments",
                    args.len()
                )));
            }
            Node::Call(
                func,
                args.iter()
                    .map(|a| compile_node(a, signals, fields))
                    .collect::<Result<_, _>>()?,
            )
        }
        Expr::Array(items) => Node::Array(
            items
                .iter()
                .map(|a| compile_node(a, signals, fields))
                .collect::<Result<_, _>>()?,
        ),
    };
    Ok(fold(node))
}

/// Replace a node whose children are all constants by its value. Nodes that
/// fail to evaluate are left in place so the error surfaces per row.
fn fold(node: Node) -> Node {
    let foldable = match &node {
        Node::Const(_) | Node::Field(_) => return node,
        Node::Index(a, b) | Node::Binary(_, a, b) => is_const(a) && is_const(b),
        Node::Unary(_, a) => is_const(a),
        Node::Ternary(a, b, c) => is_const(a) && is_const(b) && is_const(c),
        Node::Call(_, args) | Node::Array(args) => args.iter().all(is_const),
    };
    if !foldable {
        return node;
    }
    let no_row = |_: usize| Value::Null;
    match eval_node(&node, &no_row) {
        Ok(v) => Node::Const(v),
        Err(_) => node,
    }
}

fn is_const(node: &Node) -> bool {
    matches!(node, Node::Const(_))
}

pub(crate) fn builtin_constant(name: &str) -> Value {
    use std::f64::consts;
    Value::Float(match name {
        "NaN" => f64::NAN,
        "E" => consts::E,
        "LN2" => consts::LN_2,
        "LN10" => consts::LN_10,
        "LOG2E" => consts::LOG2_E,
        "LOG10E" => consts::LOG10_E,
        "PI" => consts::PI,
        "SQRT1_2" => consts::FRAC_1_SQRT_2,
        "SQRT2" => consts::SQRT_2,
        "MIN_VALUE" => 5e-324,
        "MAX_VALUE" => f64::MAX,
        _ => f64::NAN,
    })
}

fn eval_node(node: &Node, row: &dyn Row) -> Result<Value, EvalError> {
    match node {
        Node::Const(v) => Ok(v.clone()),
        Node::Field(slot) => Ok(row.get(*slot)),
        Node::Index(object, index) => {
            let idx = eval_node(index, row)?;
            // avoid cloning a constant list per row
            if let Node::Const(obj) = object.as_ref() {
                return index_value(obj, &idx);
            }
            index_value(&eval_node(object, row)?, &idx)
        }
        Node::Unary(op, operand) => unary(*op, eval_node(operand, row)?),
        Node::Binary(BinaryOp::And, left, right) => {
            match truth(eval_node(left, row)?, "&&")? {
                Some(false) => Ok(Value::Bool(false)),
                Some(true) => Ok(opt_bool(truth(eval_node(right, row)?, "&&")?)),
                None => Ok(match truth(eval_node(right, row)?, "&&")? {
                    Some(false) => Value::Bool(false),
                    _ => Value::Null,
                }),
            }
        }
        Node::Binary(BinaryOp::Or, left, right) => match truth(eval_node(left, row)?, "||")? {
            Some(true) => Ok(Value::Bool(true)),
            Some(false) => Ok(opt_bool(truth(eval_node(right, row)?, "||")?)),
            None => Ok(match truth(eval_node(right, row)?, "||")? {
                Some(true) => Value::Bool(true),
                _ => Value::Null,
            }),
        },
        Node::Binary(op, left, right) => binary(*op, &eval_node(left, row)?, &eval_node(right, row)?),
        Node::Ternary(cond, then, otherwise) => match truth(eval_node(cond, row)?, "?:")? {
            Some(true) => eval_node(then, row),
            Some(false) => eval_node(otherwise, row),
            None => Ok(Value::Null),
        },
        Node::Call(Func::If, args) => match truth(eval_node(&args[0], row)?, "if")? {
            Some(true) => eval_node(&args[1], row),
            Some(false) => eval_node(&args[2], row),
            None => Ok(Value::Null),
        },
        Node::Call(Func::InRange, args) => {
            let v = eval_node(&args[0], row)?;
            let flags = args[2..]
                .iter()
                .map(|a| Ok(truth(eval_node(a, row)?, "inrange")?.unwrap_or(false)))
                .collect::<Result<Vec<bool>, EvalError>>()?;
            let exclude_left = flags.first().copied().unwrap_or(false);
            let exclude_right = flags.get(1).copied().unwrap_or(false);
            if let Node::Const(range) = &args[1] {
                return inrange(&v, range, exclude_left, exclude_right);
            }
            inrange(&v, &eval_node(&args[1], row)?, exclude_left, exclude_right)
        }
        Node::Call(func, args) => {
            let vals = args
                .iter()
                .map(|a| eval_node(a, row))
                .collect::<Result<Vec<_>, _>>()?;
            call(*func, vals)
        }
        Node::Array(items) => Ok(Value::List(
            items
                .iter()
                .map(|a| eval_node(a, row))
                .collect::<Result<_, _>>()?,
        )),
    }
}

fn opt_bool(b: Option<bool>) -> Value {
    b.map_or(Value::Null, Value::Bool)
}

/// Booleans only; `null` is the unknown truth value.
fn truth(v: Value, ctx: &str) -> Result<Option<bool>, EvalError> {
    match v {
        Value::Bool(b) => Ok(Some(b)),
        Value::Null => Ok(None),
        other => Err(type_error(format!(
            "`{ctx}` expects a boolean, got {}",
            other.type_name()
        ))),
    }
}

fn index_value(object: &Value, index: &Value) -> Result<Value, EvalError> {
    let position = match index {
        Value::Null => return Ok(Value::Null),
        Value::Int(i) => *i,
        Value::Float(f) if f.fract() == 0.0 => *f as i64,
        Value::Float(_) => return Ok(Value::Null),
        other => return Err(type_error(format!("cannot index with {}", other.type_name()))),
    };
    match object {
        Value::Null => Ok(Value::Null),
        Value::List(items) => Ok(usize::try_from(position)
            .ok()
            .and_then(|i| items.get(i))
            .cloned()
            .unwrap_or(Value::Null)),
        Value::Str(s) => Ok(usize::try_from(position)
            .ok()
            .and_then(|i| s.chars().nth(i))
            .map_or(Value::Null, |c| Value::Str(c.to_string()))),
        other => Err(type_error(format!("cannot index into {}", other.type_name()))),
    }
}

fn unary(op: UnaryOp, v: Value) -> Result<Value, EvalError> {
    match (op, v) {
        (_, Value::Null) => Ok(Value::Null),
        (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
        (UnaryOp::Neg, Value::Int(i)) | (UnaryOp::Neg, Value::Timestamp(i)) => {
            Ok(i.checked_neg().map_or(Value::Float(-(i as f64)), Value::Int))
        }
        (UnaryOp::Neg, Value::Float(f)) => Ok(Value::Float(-f)),
        (op, v) => Err(type_error(format!(
            "unary `{}` on {}",
            op.symbol(),
            v.type_name()
        ))),
    }
}

enum Num {
    Int(i64),
    Float(f64),
}

fn num(v: &Value) -> Option<Num> {
    match *v {
        Value::Int(i) | Value::Timestamp(i) => Some(Num::Int(i)),
        Value::Float(f) => Some(Num::Float(f)),
        _ => None,
    }
}

pub(crate) fn binary(op: BinaryOp, a: &Value, b: &Value) -> Result<Value, EvalError> {
    match op {
        BinaryOp::Eq | BinaryOp::StrictEq => return Ok(Value::Bool(strict_equals(a, b))),
        BinaryOp::NotEq | BinaryOp::StrictNotEq => return Ok(Value::Bool(!strict_equals(a, b))),
        BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq => {
            let ord = compare(a, b)?;
            return Ok(Value::Bool(match ord {
                None => false,
                Some(o) => match op {
                    BinaryOp::Lt => o == Ordering::Less,
                    BinaryOp::LtEq => o != Ordering::Greater,
                    BinaryOp::Gt => o == Ordering::Greater,
                    _ => o != Ordering::Less,
                },
            }));
        }
        BinaryOp::And | BinaryOp::Or => unreachable!("logical operators short-circuit in eval_node"),
        _ => {}
    }
    if a.is_null() || b.is_null() {
        return Ok(Value::Null);
    }
    if op == BinaryOp::Add && (matches!(a, Value::Str(_)) || matches!(b, Value::Str(_))) {
        let (Some(l), Some(r)) = (display_string(a), display_string(b)) else {
            return Err(type_error(format!(
                "cannot concatenate {} and {}",
                a.type_name(),
                b.type_name()
            )));
        };
        return Ok(Value::Str(l + &r));
    }
    let (Some(x), Some(y)) = (num(a), num(b)) else {
        return Err(type_error(format!(
            "arithmetic `{}` on {} and {}",
            op.symbol(),
            a.type_name(),
            b.type_name()
        )));
    };
    Ok(match (x, y) {
        (Num::Int(x), Num::Int(y)) => match op {
            BinaryOp::Add => x.checked_add(y).map_or(Value::Float(x as f64 + y as f64), Value::Int),
            BinaryOp::Sub => x.checked_sub(y).map_or(Value::Float(x as f64 - y as f64), Value::Int),
            BinaryOp::Mul => x.checked_mul(y).map_or(Value::Float(x as f64 * y as f64), Value::Int),
            BinaryOp::Div => Value::Float(x as f64 / y as f64),
            BinaryOp::Rem if y == 0 => Value::Float(f64::NAN),
            BinaryOp::Rem => Value::Int(x.wrapping_rem(y)),
            _ => unreachable!("non-arithmetic op"),
        },
        (x, y) => {
            let x = match x {
                Num::Int(i) => i as f64,
                Num::Float(f) => f,
            };
            let y = match y {
                Num::Int(i) => i as f64,
                Num::Float(f) => f,
            };
            Value::Float(match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div => x / y,
                BinaryOp::Rem => x % y,
                _ => unreachable!("non-arithmetic op"),
            })
        }
    })
}

/// `==` and `===`: equal tags, except ints and floats compare numerically.
pub fn strict_equals(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Int(x), Value::Float(y)) | (Value::Float(y), Value::Int(x)) => *x as f64 == *y,
        (Value::Float(x), Value::Float(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Timestamp(x), Value::Timestamp(y)) => x == y,
        (Value::List(x), Value::List(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(a, b)| strict_equals(a, b))
        }
        _ => false,
    }
}

/// Ordering for `<`-style operators. `None` when either side is null or NaN.
pub fn compare(a: &Value, b: &Value) -> Result<Option<Ordering>, EvalError> {
    Ok(match (a, b) {
        (Value::Null, _) | (_, Value::Null) => None,
        (Value::Int(x), Value::Int(y)) | (Value::Timestamp(x), Value::Timestamp(y)) => {
            Some(x.cmp(y))
        }
        (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => x.partial_cmp(&y),
            _ => {
                return Err(type_error(format!(
                    "cannot compare {} with {}",
                    a.type_name(),
                    b.type_name()
                )))
            }
        },
    })
}

fn inrange(
    v: &Value,
    range: &Value,
    exclude_left: bool,
    exclude_right: bool,
) -> Result<Value, EvalError> {
    let items = match range {
        Value::Null => return Ok(Value::Bool(false)),
        Value::List(items) if !items.is_empty() => items,
        other => {
            return Err(type_error(format!(
                "inrange expects a [lo, hi] range, got {}",
                other.type_name()
            )))
        }
    };
    let (mut lo, mut hi) = (&items[0], &items[items.len() - 1]);
    if compare(lo, hi)? == Some(Ordering::Greater) {
        std::mem::swap(&mut lo, &mut hi);
    }
    let (Some(lo_ord), Some(hi_ord)) = (compare(v, lo)?, compare(v, hi)?) else {
        return Ok(Value::Bool(false));
    };
    let above = if exclude_left {
        lo_ord == Ordering::Greater
    } else {
        lo_ord != Ordering::Less
    };
    let below = if exclude_right {
        hi_ord == Ordering::Less
    } else {
        hi_ord != Ordering::Greater
    };
    Ok(Value::Bool(above && below))
}

fn datetime(v: &Value) -> Result<Option<DateTime<Utc>>, EvalError> {
    let ms = match *v {
        Value::Null => return Ok(None),
        Value::Timestamp(t) | Value::Int(t) => t,
        Value::Float(f) if f.is_finite() => f.floor() as i64,
        Value::Float(_) => return Ok(None),
        ref other => {
            return Err(type_error(format!(
                "expected a timestamp, got {}",
                other.type_name()
            )))
        }
    };
    Ok(DateTime::from_timestamp_millis(ms))
}

/// JavaScript-style number to string.
pub(crate) fn number_string(f: f64) -> String {
    if f.is_nan() {
        "NaN".into()
    } else if f.is_infinite() {
        if f > 0.0 { "Infinity" } else { "-Infinity" }.into()
    } else if f == 0.0 {
        "0".into()
    } else {
        format!("{f}")
    }
}

fn display_string(v: &Value) -> Option<String> {
    match v {
        Value::Str(s) => Some(s.clone()),
        Value::Int(i) => Some(i.to_string()),
        Value::Float(f) => Some(number_string(*f)),
        Value::Bool(b) => Some(b.to_string()),
        Value::Timestamp(_) => Some(v.to_string()),
        Value::List(items) => items
            .iter()
            .map(|i| if i.is_null() { Some(String::new()) } else { display_string(i) })
            .collect::<Option<Vec<_>>>()
            .map(|parts| parts.join(",")),
        Value::Null => None,
    }
}

fn unary_float(v: &Value, name: &str, f: impl Fn(f64) -> f64) -> Result<Value, EvalError> {
    match num(v) {
        _ if v.is_null() => Ok(Value::Null),
        Some(Num::Int(i)) => Ok(Value::Float(f(i as f64))),
        Some(Num::Float(x)) => Ok(Value::Float(f(x))),
        None => Err(type_error(format!("{name} on {}", v.type_name()))),
    }
}

/// Integer-preserving rounding functions.
fn unary_round(v: &Value, name: &str, f: impl Fn(f64) -> f64) -> Result<Value, EvalError> {
    match num(v) {
        _ if v.is_null() => Ok(Value::Null),
        Some(Num::Int(i)) => Ok(Value::Int(i)),
        Some(Num::Float(x)) => Ok(Value::Float(f(x))),
        None => Err(type_error(format!("{name} on {}", v.type_name()))),
    }
}

fn call(func: Func, args: Vec<Value>) -> Result<Value, EvalError> {
    let a0 = &args[0];
    match func {
        Func::Abs => match num(a0) {
            _ if a0.is_null() => Ok(Value::Null),
            Some(Num::Int(i)) => Ok(i.checked_abs().map_or(Value::Float((i as f64).abs()), Value::Int)),
            Some(Num::Float(f)) => Ok(Value::Float(f.abs())),
            None => Err(type_error(format!("abs on {}", a0.type_name()))),
        },
        Func::Ceil => unary_round(a0, "ceil", f64::ceil),
        Func::Floor => unary_round(a0, "floor", f64::floor),
        // round half up, as in JavaScript
        Func::Round => unary_round(a0, "round", |x| {
            if x - x.floor() >= 0.5 {
                x.ceil()
            } else {
                x.floor()
            }
        }),
        Func::Sqrt => unary_float(a0, "sqrt", f64::sqrt),
        Func::Exp => unary_float(a0, "exp", f64::exp),
        Func::Log => unary_float(a0, "log", f64::ln),
        Func::Pow => {
            if a0.is_null() || args[1].is_null() {
                return Ok(Value::Null);
            }
            match (a0.as_f64(), args[1].as_f64()) {
                (Some(x), Some(y)) if !matches!(a0, Value::Bool(_)) => Ok(Value::Float(x.powf(y))),
                _ => Err(type_error("pow expects numbers")),
            }
        }
        Func::Min | Func::Max => {
            if args.iter().any(Value::is_null) {
                return Ok(Value::Null);
            }
            let nums = args
                .iter()
                .map(|v| num(v).ok_or_else(|| type_error(format!("min/max on {}", v.type_name()))))
                .collect::<Result<Vec<_>, _>>()?;
            let pick_max = func == Func::Max;
            if nums.iter().all(|n| matches!(n, Num::Int(_))) {
                let ints = nums.iter().map(|n| match n {
                    Num::Int(i) => *i,
                    Num::Float(_) => unreachable!(),
                });
                let v = if pick_max { ints.max() } else { ints.min() };
                return Ok(Value::Int(v.expect("arity checked")));
            }
            let floats: Vec<f64> = nums
                .iter()
                .map(|n| match n {
                    Num::Int(i) => *i as f64,
                    Num::Float(f) => *f,
                })
                .collect();
            if floats.iter().any(|f| f.is_nan()) {
                return Ok(Value::Float(f64::NAN));
            }
            let v = floats
                .into_iter()
                .reduce(|a, b| if pick_max { a.max(b) } else { a.min(b) })
                .expect("arity checked");
            Ok(Value::Float(v))
        }
        Func::Length => match a0 {
            Value::Null => Ok(Value::Null),
            Value::Str(s) => Ok(Value::Int(s.encode_utf16().count() as i64)),
            Value::List(items) => Ok(Value::Int(items.len() as i64)),
            other => Err(type_error(format!("length of {}", other.type_name()))),
        },
        Func::IsValid => Ok(Value::Bool(match a0 {
            Value::Null => false,
            Value::Float(f) => !f.is_nan(),
            _ => true,
        })),
        Func::IsFinite => Ok(Value::Bool(match a0 {
            Value::Int(_) | Value::Timestamp(_) => true,
            Value::Float(f) => f.is_finite(),
            _ => false,
        })),
        Func::Year | Func::Month | Func::Date | Func::Hours | Func::Minutes => {
            let Some(dt) = datetime(a0)? else {
                return Ok(Value::Null);
            };
            Ok(Value::Int(match func {
                Func::Year => dt.year() as i64,
                Func::Month => dt.month0() as i64,
                Func::Date => dt.day() as i64,
                Func::Hours => dt.hour() as i64,
                _ => dt.minute() as i64,
            }))
        }
        Func::Time => match a0 {
            Value::Null => Ok(Value::Null),
            Value::Timestamp(t) | Value::Int(t) => Ok(Value::Int(*t)),
            Value::Float(f) => Ok(Value::Float(*f)),
            other => Err(type_error(format!("time of {}", other.type_name()))),
        },
        Func::ToNumber => match a0 {
            Value::Null => Ok(Value::Null),
            Value::Int(i) | Value::Timestamp(i) => Ok(Value::Int(*i)),
            Value::Float(f) => Ok(Value::Float(*f)),
            Value::Bool(b) => Ok(Value::Int(*b as i64)),
            Value::Str(s) if s.is_empty() => Ok(Value::Null),
            Value::Str(s) => Ok(Value::Float(s.trim().parse().unwrap_or(f64::NAN))),
            Value::List(_) => Err(type_error("toNumber of list")),
        },
        Func::ToString => Ok(match a0 {
            Value::Null => Value::Null,
            other => Value::Str(display_string(other).unwrap_or_default()),
        }),
        Func::If | Func::InRange => unreachable!("handled lazily"),
    }
}
