//! Tokenizer and recursive-descent parser.
//!
//! | level | operators            | assoc |
//! |-------|----------------------|-------|
//! | 1     | `?:`                 | right |
//! | 2     | `\|\|`               | left  |
//! | 3     | `&&`                 | left  |
//! | 4     | `== != === !==`      | left  |
//! | 5     | `< <= > >=`          | left  |
//! | 6     | `+ -`                | left  |
//! | 7     | `* / %`              | left  |
//! | 8     | unary `! -`          | right |
//! | 9     | member, index, call  | left  |

use super::ast::{BinaryOp, Expr, Literal, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct SyntaxError {
    /// Byte offset into the source text.
    pub offset: usize,
    pub message: String,
}

impl SyntaxError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        SyntaxError {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    Punct(&'static str),
}

const PUNCTS: [&str; 24] = [
    "===", "!==", "==", "!=", "<=", ">=", "&&", "||", "(", ")", "[", "]", ",", ".", "?", ":", "!",
    "-", "+", "*", "/", "%", "<", ">",
];

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let (tok, end) = lex_number(src, i)?;
            out.push((tok, start));
            i = end;
        } else if c == b'\'' || c == b'"' {
            let (s, end) = lex_string(src, i)?;
            out.push((Tok::Str(s), start));
            i = end;
        } else if c.is_ascii_alphabetic() || c == b'_' || c == b'$' {
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$')
            {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if let Some(p) = PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            out.push((Tok::Punct(p), start));
            i += p.len();
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(SyntaxError::new(i, format!("unexpected character {ch:?}")));
        }
    }
    Ok(out)
}

fn lex_number(src: &str, start: usize) -> Result<(Tok, usize), SyntaxError> {
    let bytes = src.as_bytes();
    let mut i = start;
    let mut is_float = false;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        is_float = true;
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            is_float = true;
            i = j;
        } else {
            return Err(SyntaxError::new(i, "malformed exponent"));
        }
    }
    if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
        return Err(SyntaxError::new(i, "identifier directly after number"));
    }
    let text = &src[start..i];
    let tok = if is_float {
        Tok::Float(
            text.parse()
                .map_err(|_| SyntaxError::new(start, "malformed number"))?,
        )
    } else {
        match text.parse::<i64>() {
            Ok(v) => Tok::Int(v),
            Err(_) => Tok::Float(
                text.parse()
                    .map_err(|_| SyntaxError::new(start, "malformed number"))?,
            ),
        }
    };
    Ok((tok, i))
}

fn lex_string(src: &str, start: usize) -> Result<(String, usize), SyntaxError> {
    let quote = src.as_bytes()[start] as char;
    let mut out = String::new();
    let mut chars = src[start + 1..].char_indices();
    while let Some((off, c)) = chars.next() {
        match c {
            c if c == quote => return Ok((out, start + 1 + off + 1)),
            '\\' => {
                let Some((eoff, e)) = chars.next() else {
                    break;
                };
                match e {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    'b' => out.push('\u{8}'),
                    'f' => out.push('\u{c}'),
                    'v' => out.push('\u{b}'),
                    '0' => out.push('\0'),
                    'u' => {
                        let hex: String = chars.by_ref().take(4).map(|(_, h)| h).collect();
                        let code = u32::from_str_radix(&hex, 16)
                            .ok()
                            .filter(|_| hex.len() == 4)
                            .and_then(char::from_u32)
                            .ok_or_else(|| {
                                SyntaxError::new(start + 1 + eoff, "malformed unicode escape")
                            })?;
                        out.push(code);
                    }
                    other => out.push(other),
                }
            }
            c => out.push(c),
        }
    }
    Err(SyntaxError::new(start, "unterminated string"))
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn peek_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.peek_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Error at the current token; at end of input, points at the last token.
    fn error_here(&self, message: &str) -> SyntaxError {
        match self.tokens.get(self.pos) {
            Some((tok, off)) => SyntaxError::new(*off, format!("{message}, found {tok:?}")),
            None => {
                let off = self.tokens.last().map_or(0, |(_, o)| *o);
                SyntaxError::new(off, format!("{message}, found end of input"))
            }
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), SyntaxError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error_here(&format!("expected `{p}`")))
        }
    }

    fn ternary(&mut self) -> Result<Expr, SyntaxError> {
        let cond = self.binary(2)?;
        if self.eat_punct("?") {
            let then = self.ternary()?;
            self.expect_punct(":")?;
            let otherwise = self.ternary()?;
            Ok(Expr::Ternary {
                cond: Box::new(cond),
                then: Box::new(then),
                otherwise: Box::new(otherwise),
            })
        } else {
            Ok(cond)
        }
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        let Some(Tok::Punct(p)) = self.peek() else {
            return None;
        };
        Some(match *p {
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Rem,
            "==" => BinaryOp::Eq,
            "!=" => BinaryOp::NotEq,
            "===" => BinaryOp::StrictEq,
            "!==" => BinaryOp::StrictNotEq,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::LtEq,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::GtEq,
            "&&" => BinaryOp::And,
            "||" => BinaryOp::Or,
            _ => return None,
        })
    }

    /// Precedence climbing over the left-associative binary levels.
    fn binary(&mut self, min_prec: u8) -> Result<Expr, SyntaxError> {
        let mut left = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let right = self.binary(prec + 1)?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        let op = if self.eat_punct("!") {
            UnaryOp::Not
        } else if self.eat_punct("-") {
            UnaryOp::Neg
        } else if self.eat_punct("+") {
            // unary plus is a no-op on numbers; keep the operand as-is
            return self.unary();
        } else {
            return self.postfix();
        };
        let operand = self.unary()?;
        Ok(Expr::Unary {
            op,
            operand: Box::new(operand),
        })
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut expr = self.primary()?;
        loop {
            if self.eat_punct(".") {
                match self.peek().cloned() {
                    Some(Tok::Ident(name)) => {
                        self.pos += 1;
                        expr = Expr::Member {
                            object: Box::new(expr),
                            property: name,
                        };
                    }
                    _ => return Err(self.error_here("expected property name")),
                }
            } else if self.eat_punct("[") {
                let index = self.ternary()?;
                self.expect_punct("]")?;
                expr = Expr::Index {
                    object: Box::new(expr),
                    index: Box::new(index),
                };
            } else if self.peek_punct("(") {
                let Expr::Ident(callee) = expr else {
                    return Err(self.error_here("only named functions can be called"));
                };
                self.pos += 1;
                let args = self.list(")")?;
                expr = Expr::Call { callee, args };
            } else {
                return Ok(expr);
            }
        }
    }

    fn list(&mut self, close: &str) -> Result<Vec<Expr>, SyntaxError> {
        let mut items = Vec::new();
        if self.eat_punct(close) {
            return Ok(items);
        }
        loop {
            items.push(self.ternary()?);
            if self.eat_punct(close) {
                return Ok(items);
            }
            self.expect_punct(",")?;
        }
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let Some((tok, _)) = self.tokens.get(self.pos).cloned() else {
            return Err(self.error_here("expected expression"));
        };
        let expr = match tok {
            Tok::Int(v) => Expr::Literal(Literal::Int(v)),
            Tok::Float(v) => Expr::Literal(Literal::Float(v)),
            Tok::Str(s) => Expr::Literal(Literal::Str(s)),
            Tok::Ident(name) => match name.as_str() {
                "true" => Expr::Literal(Literal::Bool(true)),
                "false" => Expr::Literal(Literal::Bool(false)),
                "null" => Expr::Literal(Literal::Null),
                _ => Expr::Ident(name),
            },
            Tok::Punct("(") => {
                self.pos += 1;
                let inner = self.ternary()?;
                self.expect_punct(")")?;
                return Ok(inner);
            }
            Tok::Punct("[") => {
                self.pos += 1;
                return Ok(Expr::Array(self.list("]")?));
            }
            Tok::Punct(_) => return Err(self.error_here("expected expression")),
        };
        self.pos += 1;
        Ok(expr)
    }
}

/// Parse expression text into an [`Expr`].
pub fn parse_expression(text: &str) -> Result<Expr, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.ternary()?;
    if parser.pos < parser.tokens.len() {
        return Err(parser.error_here("unexpected trailing input"));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn member(obj: &str, prop: &str) -> Expr {
        Expr::member(Expr::ident(obj), prop)
    }

    #[test]
    fn multiplication_binds_tighter_than_addition() {
        let ast = parse_expression("datum.a + 2 * 3").unwrap();
        assert_eq!(
            ast,
            Expr::binary(
                BinaryOp::Add,
                member("datum", "a"),
                Expr::binary(BinaryOp::Mul, Expr::int(2), Expr::int(3)),
            )
        );
    }

    #[test]
    fn brush_predicate() {
        let ast = parse_expression("inrange(datum.x, brush)").unwrap();
        assert_eq!(
            ast,
            Expr::call("inrange", vec![member("datum", "x"), Expr::ident("brush")])
        );
    }

    #[test]
    fn truncated_ternary_reports_offset() {
        let err = parse_expression("datum.a ? 1 :").unwrap_err();
        assert_eq!(err.offset, 12);
    }

    #[test]
    fn left_associative_subtraction() {
        let ast = parse_expression("1 - 2 - 3").unwrap();
        assert_eq!(
            ast,
            Expr::binary(
                BinaryOp::Sub,
                Expr::binary(BinaryOp::Sub, Expr::int(1), Expr::int(2)),
                Expr::int(3)
            )
        );
    }

    #[test]
    fn ternary_is_right_associative() {
        let a = parse_expression("a ? 1 : b ? 2 : 3").unwrap();
        let b = parse_expression("a ? 1 : (b ? 2 : 3)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn logical_precedence() {
        let a = parse_expression("a || b && c == d < e").unwrap();
        let b = parse_expression("a || (b && (c == (d < e)))").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn literals() {
        assert_eq!(
            parse_expression("2.5").unwrap(),
            Expr::Literal(Literal::Float(2.5))
        );
        assert_eq!(
            parse_expression("'a\\'b'").unwrap(),
            Expr::Literal(Literal::Str("a'b".into()))
        );
        assert_eq!(
            parse_expression("[1, null]").unwrap(),
            Expr::Array(vec![Expr::int(1), Expr::Literal(Literal::Null)])
        );
    }

    #[test]
    fn errors() {
        assert_eq!(parse_expression("").unwrap_err().offset, 0);
        assert_eq!(parse_expression("1 +* 2").unwrap_err().offset, 3);
        assert_eq!(parse_expression("'abc").unwrap_err().offset, 0);
        assert_eq!(parse_expression("a # b").unwrap_err().offset, 2);
        assert!(parse_expression("a.b(1)").is_err());
        assert!(parse_expression("f(1,)").is_err());
        assert!(parse_expression("1 2").is_err());
    }
}
