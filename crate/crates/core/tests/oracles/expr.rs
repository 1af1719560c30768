//! A tree-walking reference for the expression language.
//!
//! Expressions are generated as a typed tree, printed to source text,
//! parsed and evaluated by the library, then compared with the reference
//! evaluation of the same tree. Generation is type directed, so no case is
//! expected to error.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use proptest::prelude::*;
use specfission::expr::{evaluate, parse_expression, SignalValues};
use specfission::Value;

#[derive(Debug, Clone)]
pub enum E {
    Int(i64),
    Float(f64),
    Bool(bool),
    Null,
    /// `datum.<name>`
    Field(&'static str),
    Signal(&'static str),
    Neg(Box<E>),
    Not(Box<E>),
    Bin(&'static str, Box<E>, Box<E>),
    Tern(Box<E>, Box<E>, Box<E>),
    Call(&'static str, Vec<E>),
    InRange(Box<E>, Box<E>, Box<E>),
}

fn print(e: &E) -> String {
    match e {
        E::Int(v) if *v < 0 => format!("(-{})", v.unsigned_abs()),
        E::Int(v) => v.to_string(),
        E::Float(v) if *v < 0.0 => format!("(-{:?})", -v),
        E::Float(v) => format!("{v:?}"),
        E::Bool(b) => b.to_string(),
        E::Null => "null".into(),
        E::Field(f) => format!("datum.{f}"),
        E::Signal(s) => s.to_string(),
        E::Neg(x) => format!("(-{})", print(x)),
        E::Not(x) => format!("(!{})", print(x)),
        E::Bin(op, a, b) => format!("({} {op} {})", print(a), print(b)),
        E::Tern(c, a, b) => format!("({} ? {} : {})", print(c), print(a), print(b)),
        E::Call(f, args) => format!("{f}({})", args.iter().map(print).collect::<Vec<_>>().join(", ")),
        E::InRange(v, lo, hi) => format!("inrange({}, [{}, {}])", print(v), print(lo), print(hi)),
    }
}

fn datum() -> BTreeMap<String, Value> {
    BTreeMap::from([
        ("a".to_string(), Value::Int(7)),
        ("b".to_string(), Value::Float(-2.5)),
        ("n".to_string(), Value::Null),
        ("t".to_string(), Value::Bool(true)),
    ])
}

fn signals() -> SignalValues {
    BTreeMap::from([
        ("si".to_string(), Value::Int(-3)),
        ("sf".to_string(), Value::Float(0.125)),
        ("sn".to_string(), Value::Null),
        ("sb".to_string(), Value::Bool(false)),
    ])
}

// ---- reference semantics ----

fn f(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(x) => *x,
        other => panic!("not a number: {other:?}"),
    }
}

fn arith(op: &str, a: Value, b: Value) -> Value {
    if a.is_null() || b.is_null() {
        return Value::Null;
    }
    if let (Value::Int(x), Value::Int(y)) = (&a, &b) {
        let (x, y) = (*x, *y);
        let promote = |r: Option<i64>, g: f64| r.map_or(Value::Float(g), Value::Int);
        return match op {
            "+" => promote(x.checked_add(y), x as f64 + y as f64),
            "-" => promote(x.checked_sub(y), x as f64 - y as f64),
            "*" => promote(x.checked_mul(y), x as f64 * y as f64),
            "/" => Value::Float(x as f64 / y as f64),
            "%" if y == 0 => Value::Float(f64::NAN),
            "%" => Value::Int(x.checked_rem(y).unwrap_or(0)),
            _ => unreachable!(),
        };
    }
    let (x, y) = (f(&a), f(&b));
    Value::Float(match op {
        "+" => x + y,
        "-" => x - y,
        "*" => x * y,
        "/" => x / y,
        "%" => x % y,
        _ => unreachable!(),
    })
}

fn order(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Null, _) | (_, Value::Null) => None,
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        _ => f(a).partial_cmp(&f(b)),
    }
}

fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => f(a) == f(b),
        _ => false,
    }
}

fn tri(v: Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(b),
        Value::Null => None,
        other => panic!("not a boolean: {other:?}"),
    }
}

fn from_tri(t: Option<bool>) -> Value {
    t.map_or(Value::Null, Value::Bool)
}

fn reference(e: &E) -> Value {
    match e {
        E::Int(v) => Value::Int(*v),
        E::Float(v) => Value::Float(*v),
        E::Bool(b) => Value::Bool(*b),
        E::Null => Value::Null,
        E::Field(name) => datum()[*name].clone(),
        E::Signal(name) => signals()[*name].clone(),
        E::Neg(x) => match reference(x) {
            Value::Null => Value::Null,
            Value::Int(i) => i.checked_neg().map_or(Value::Float(-(i as f64)), Value::Int),
            v => Value::Float(-f(&v)),
        },
        E::Not(x) => from_tri(tri(reference(x)).map(|b| !b)),
        E::Bin(op, a, b) => {
            let (a, b) = (reference(a), reference(b));
            match *op {
                "&&" => from_tri(match (tri(a), tri(b)) {
                    (Some(false), _) | (_, Some(false)) => Some(false),
                    (Some(true), Some(true)) => Some(true),
                    _ => None,
                }),
                "||" => from_tri(match (tri(a), tri(b)) {
                    (Some(true), _) | (_, Some(true)) => Some(true),
                    (Some(false), Some(false)) => Some(false),
                    _ => None,
                }),
                "==" | "===" => Value::Bool(same(&a, &b)),
                "!=" | "!==" => Value::Bool(!same(&a, &b)),
                "<" => Value::Bool(order(&a, &b) == Some(Ordering::Less)),
                "<=" => Value::Bool(matches!(order(&a, &b), Some(Ordering::Less | Ordering::Equal))),
                ">" => Value::Bool(order(&a, &b) == Some(Ordering::Greater)),
                ">=" => Value::Bool(matches!(order(&a, &b), Some(Ordering::Greater | Ordering::Equal))),
                op => arith(op, a, b),
            }
        }
        E::Tern(c, a, b) => match tri(reference(c)) {
            Some(true) => reference(a),
            Some(false) => reference(b),
            None => Value::Null,
        },
        E::Call(name, args) => {
            let vals: Vec<Value> = args.iter().map(reference).collect();
            call(name, &vals, args)
        }
        E::InRange(v, lo, hi) => {
            let (v, mut lo, mut hi) = (reference(v), reference(lo), reference(hi));
            if order(&lo, &hi) == Some(Ordering::Greater) {
                std::mem::swap(&mut lo, &mut hi);
            }
            Value::Bool(match (order(&v, &lo), order(&v, &hi)) {
                (Some(l), Some(h)) => l != Ordering::Less && h != Ordering::Greater,
                _ => false,
            })
        }
    }
}

fn round_half_up(x: f64) -> f64 {
    let fl = x.floor();
    let r = if x - fl >= 0.5 { fl + 1.0 } else { fl };
    // negative inputs that round to zero give -0, as in JS
    if r == 0.0 && x.is_sign_negative() {
        -0.0
    } else {
        r
    }
}

fn call(name: &str, vals: &[Value], args: &[E]) -> Value {
    let a = &vals[0];
    let keep_int = |g: fn(f64) -> f64| match a {
        Value::Null => Value::Null,
        Value::Int(i) => Value::Int(*i),
        v => Value::Float(g(f(v))),
    };
    match name {
        "abs" => match a {
            Value::Null => Value::Null,
            Value::Int(i) => i.checked_abs().map_or(Value::Float((*i as f64).abs()), Value::Int),
            v => Value::Float(f(v).abs()),
        },
        "floor" => keep_int(f64::floor),
        "ceil" => keep_int(f64::ceil),
        "round" => keep_int(round_half_up),
        "sqrt" => if a.is_null() { Value::Null } else { Value::Float(f(a).sqrt()) },
        "pow" => {
            if a.is_null() || vals[1].is_null() {
                Value::Null
            } else {
                Value::Float(f(a).powf(f(&vals[1])))
            }
        }
        "min" | "max" => {
            if vals.iter().any(Value::is_null) {
                return Value::Null;
            }
            let want = if name == "min" { Ordering::Less } else { Ordering::Greater };
            if vals.iter().all(|v| matches!(v, Value::Int(_))) {
                let mut best = vals[0].clone();
                for v in &vals[1..] {
                    if order(v, &best) == Some(want) {
                        best = v.clone();
                    }
                }
                return best;
            }
            let xs: Vec<f64> = vals.iter().map(f).collect();
            if xs.iter().any(|x| x.is_nan()) {
                return Value::Float(f64::NAN);
            }
            let mut best = xs[0];
            for &x in &xs[1..] {
                if x.partial_cmp(&best) == Some(want) {
                    best = x;
                }
            }
            Value::Float(best)
        }
        "isValid" => Value::Bool(match a {
            Value::Null => false,
            Value::Float(x) => !x.is_nan(),
            _ => true,
        }),
        "isFinite" => Value::Bool(match a {
            Value::Int(_) => true,
            Value::Float(x) => x.is_finite(),
            _ => false,
        }),
        "if" => match tri(a.clone()) {
            Some(true) => reference(&args[1]),
            Some(false) => reference(&args[2]),
            None => Value::Null,
        },
        other => panic!("unknown function {other}"),
    }
}

fn agree(lib: &Value, reference: &Value) -> bool {
    match (lib, reference) {
        (Value::Float(x), Value::Float(y)) => (x.is_nan() && y.is_nan()) || x == y,
        _ => lib == reference,
    }
}

// ---- generators ----

fn num_leaf() -> impl Strategy<Value = E> {
    prop_oneof![
        4 => (-20i64..20).prop_map(E::Int),
        1 => prop_oneof![Just(i64::MAX), Just(i64::MIN + 1), Just(1i64 << 40)].prop_map(E::Int),
        3 => (-80i32..80).prop_map(|q| E::Float(q as f64 / 4.0 + 0.125)),
        1 => Just(E::Float(0.0)),
        1 => Just(E::Null),
        3 => prop_oneof![Just("a"), Just("b"), Just("n")].prop_map(E::Field),
        2 => prop_oneof![Just("si"), Just("sf"), Just("sn")].prop_map(E::Signal),
    ]
}

fn bool_leaf() -> impl Strategy<Value = E> {
    prop_oneof![
        any::<bool>().prop_map(E::Bool),
        Just(E::Null),
        Just(E::Field("t")),
        Just(E::Signal("sb")),
    ]
}

/// A pair of strategies, numeric and boolean, built over `depth` levels.
fn typed(depth: u32) -> (BoxedStrategy<E>, BoxedStrategy<E>) {
    if depth == 0 {
        return (num_leaf().boxed(), bool_leaf().boxed());
    }
    let (n, b) = typed(depth - 1);
    let b2 = |x: &BoxedStrategy<E>| (x.clone(), x.clone());
    let num = prop_oneof![
        3 => num_leaf(),
        4 => (prop_oneof![Just("+"), Just("-"), Just("*"), Just("/"), Just("%")], n.clone(), n.clone())
            .prop_map(|(op, a, c)| E::Bin(op, Box::new(a), Box::new(c))),
        1 => n.clone().prop_map(|x| E::Neg(Box::new(x))),
        2 => (prop_oneof![Just("abs"), Just("floor"), Just("ceil"), Just("round"), Just("sqrt")], n.clone())
            .prop_map(|(name, x)| E::Call(name, vec![x])),
        1 => b2(&n).prop_map(|(x, y)| E::Call("pow", vec![x, y])),
        2 => (prop_oneof![Just("min"), Just("max")], proptest::collection::vec(n.clone(), 1..4))
            .prop_map(|(name, xs)| E::Call(name, xs)),
        1 => (b.clone(), n.clone(), n.clone())
            .prop_map(|(c, x, y)| E::Tern(Box::new(c), Box::new(x), Box::new(y))),
        1 => (b.clone(), n.clone(), n.clone()).prop_map(|(c, x, y)| E::Call("if", vec![c, x, y])),
    ]
    .boxed();
    let boolean = prop_oneof![
        2 => bool_leaf(),
        4 => (
            prop_oneof![Just("<"), Just("<="), Just(">"), Just(">="), Just("=="), Just("!="), Just("==="), Just("!==")],
            n.clone(),
            n.clone()
        )
            .prop_map(|(op, a, c)| E::Bin(op, Box::new(a), Box::new(c))),
        3 => (prop_oneof![Just("&&"), Just("||")], b.clone(), b.clone())
            .prop_map(|(op, a, c)| E::Bin(op, Box::new(a), Box::new(c))),
        1 => b.clone().prop_map(|x| E::Not(Box::new(x))),
        2 => (n.clone(), n.clone(), n.clone())
            .prop_map(|(v, lo, hi)| E::InRange(Box::new(v), Box::new(lo), Box::new(hi))),
        1 => (prop_oneof![Just("isValid"), Just("isFinite")], n.clone())
            .prop_map(|(name, x)| E::Call(name, vec![x])),
        1 => (b.clone(), b.clone(), b.clone())
            .prop_map(|(c, x, y)| E::Tern(Box::new(c), Box::new(x), Box::new(y))),
    ]
    .boxed();
    (num, boolean)
}

pub fn any_expr() -> impl Strategy<Value = E> {
    let (n, b) = typed(4);
    prop_oneof![n, b]
}

pub fn check(e: &E) -> Result<(), TestCaseError> {
    let text = print(e);
    let ast = parse_expression(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
    let lib = evaluate(&ast, &datum(), &signals()).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
    let want = reference(e);
    prop_assert!(agree(&lib, &want), "{text}: library {lib:?}, reference {want:?}");
    Ok(())
}
