use super::ast::{Expr, Literal, UnaryOp, TERNARY_PREC, UNARY_PREC, POSTFIX_PREC};

/// Canonical text form: single spaces around binary operators and only the
/// parentheses the grammar needs. Re-parsing yields an equal AST.
pub fn to_canonical_string(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr, TERNARY_PREC);
    out
}

fn write_expr(out: &mut String, expr: &Expr, min_prec: u8) {
    let needs_parens = expr.precedence() < min_prec;
    if needs_parens {
        out.push('(');
    }
    match expr {
        Expr::Literal(lit) => write_literal(out, lit),
        Expr::Ident(name) => out.push_str(name),
        Expr::Member { object, property } => {
            write_expr(out, object, POSTFIX_PREC);
            out.push('.');
            out.push_str(property);
        }
        Expr::Index { object, index } => {
            write_expr(out, object, POSTFIX_PREC);
            out.push('[');
            write_expr(out, index, TERNARY_PREC);
            out.push(']');
        }
        Expr::Unary { op, operand } => {
            out.push_str(op.symbol());
            let mut inner = String::new();
            write_expr(&mut inner, operand, UNARY_PREC);
            // keep `- -x` from lexing differently
            if *op == UnaryOp::Neg && inner.starts_with('-') {
                out.push(' ');
            }
            out.push_str(&inner);
        }
        Expr::Binary { op, left, right } => {
            let prec = op.precedence();
            write_expr(out, left, prec);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(out, right, prec + 1);
        }
        Expr::Ternary {
            cond,
            then,
            otherwise,
        } => {
            write_expr(out, cond, TERNARY_PREC + 1);
            out.push_str(" ? ");
            write_expr(out, then, TERNARY_PREC);
            out.push_str(" : ");
            write_expr(out, otherwise, TERNARY_PREC);
        }
        Expr::Call { callee, args } => {
            out.push_str(callee);
            out.push('(');
            write_list(out, args);
            out.push(')');
        }
        Expr::Array(items) => {
            out.push('[');
            write_list(out, items);
            out.push(']');
        }
    }
    if needs_parens {
        out.push(')');
    }
}

fn write_list(out: &mut String, items: &[Expr]) {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, item, TERNARY_PREC);
    }
}

fn write_literal(out: &mut String, lit: &Literal) {
    match lit {
        Literal::Null => out.push_str("null"),
        Literal::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Literal::Int(i) => out.push_str(&i.to_string()),
        // Debug keeps a fractional part or exponent, so the literal re-lexes as a float
        Literal::Float(f) => out.push_str(&format!("{f:?}")),
        Literal::Str(s) => {
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    '\r' => out.push_str("\\r"),
                    c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
                    c => out.push(c),
                }
            }
            out.push('"');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_expression;
    use super::*;

    #[test]
    fn canonical_spacing_and_parens() {
        let ast = parse_expression("(datum.a+2)*3").unwrap();
        assert_eq!(to_canonical_string(&ast), "(datum.a + 2) * 3");
        let ast = parse_expression("1-(2-3)").unwrap();
        assert_eq!(to_canonical_string(&ast), "1 - (2 - 3)");
        let ast = parse_expression("inrange(datum.x,brush)").unwrap();
        assert_eq!(to_canonical_string(&ast), "inrange(datum.x, brush)");
        let ast = parse_expression("-(-1)").unwrap();
        assert_eq!(to_canonical_string(&ast), "- -1");
        assert_eq!(parse_expression("- -1").unwrap(), ast);
    }

    #[test]
    fn float_literals_stay_floats() {
        let ast = parse_expression("2.0 + 1e21").unwrap();
        let text = to_canonical_string(&ast);
        assert_eq!(parse_expression(&text).unwrap(), ast);
    }
}
