use super::ast::{BinOp, Expr, Func, Var};
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseDiagnostic;

const MAX_DEPTH: usize = 200;

/// Parses one expression of the system DSL.
///
/// Grammar, loosest binding first:
///
/// ```text
/// expr  := term (('+' | '-') term)*
/// term  := unary (('*' | '/') unary)*
/// unary := '-' unary | power
/// power := atom ('^' unary)?
/// atom  := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
/// ```
///
/// `^` is right-associative and binds tighter than a leading minus, so
/// `-x1^2` is `-(x1^2)` while `2^-1` is still accepted.
pub fn parse_expression(src: &str) -> Result<Expr, ParseDiagnostic> {
    let tokens = tokenize(src)?;
    let mut p = Parser { src, tokens, pos: 0, depth: 0 };
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Byte-level entry point; invalid UTF-8 becomes a diagnostic.
pub fn parse_expression_bytes(bytes: &[u8]) -> Result<Expr, ParseDiagnostic> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse_expression(s),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or("");
            Err(ParseDiagnostic::at(valid, e.valid_up_to(), "input is not valid UTF-8".into(), &[]))
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, tok: &Token, expected: &[&str]) -> ParseDiagnostic {
        ParseDiagnostic::at(self.src, tok.offset, format!("unexpected {}", tok.kind.describe()), expected)
    }

    fn enter(&mut self) -> Result<(), ParseDiagnostic> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let off = self.peek().offset;
            return Err(ParseDiagnostic::at(self.src, off, format!("nesting deeper than {MAX_DEPTH}"), &[]));
        }
        Ok(())
    }

    fn expect_eof(&mut self) -> Result<(), ParseDiagnostic> {
        let t = self.peek().clone();
        if t.kind == TokenKind::Eof {
            Ok(())
        } else {
            Err(self.error(&t, &["operator", "end of input"]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseDiagnostic> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinOp::Add,
                TokenKind::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseDiagnostic> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinOp::Mul,
                TokenKind::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseDiagnostic> {
        if self.peek().kind == TokenKind::Minus {
            self.enter()?;
            self.bump();
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::neg(inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseDiagnostic> {
        let base = self.atom()?;
        if self.peek().kind == TokenKind::Caret {
            self.enter()?;
            self.bump();
            let exp = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseDiagnostic> {
        let tok = self.bump();
        match tok.kind {
            TokenKind::Number(v) => Ok(Expr::Num(v)),
            TokenKind::LParen => {
                let e = self.expr()?;
                let close = self.bump();
                if close.kind != TokenKind::RParen {
                    return Err(self.error(&close, &["`)`", "operator"]));
                }
                Ok(e)
            }
            TokenKind::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    return self.call(func, tok.offset);
                }
                if self.peek().kind == TokenKind::LParen {
                    return Err(ParseDiagnostic::at(
                        self.src,
                        tok.offset,
                        format!("unknown function `{name}`"),
                        &["sin", "cos", "tan", "exp", "ln", "sqrt", "abs", "tanh", "sign", "min", "max"],
                    ));
                }
                classify_ident(&name).map(Expr::Var).map_err(|msg| ParseDiagnostic::at(self.src, tok.offset, msg, &[]))
            }
            _ => Err(self.error(&tok, &["number", "identifier", "`(`", "`-`"])),
        }
    }

    fn call(&mut self, func: Func, offset: usize) -> Result<Expr, ParseDiagnostic> {
        let open = self.bump();
        if open.kind != TokenKind::LParen {
            return Err(ParseDiagnostic::at(
                self.src,
                open.offset,
                format!("function `{}` must be called with `(`", func.name()),
                &["`(`"],
            ));
        }
        let mut args = vec![self.expr()?];
        loop {
            let t = self.bump();
            match t.kind {
                TokenKind::Comma => args.push(self.expr()?),
                TokenKind::RParen => break,
                _ => return Err(self.error(&t, &["`,`", "`)`", "operator"])),
            }
        }
        if args.len() != func.arity() {
            return Err(ParseDiagnostic::at(
                self.src,
                offset,
                format!("`{}` takes {} argument(s), got {}", func.name(), func.arity(), args.len()),
                &[],
            ));
        }
        Ok(Expr::Call(func, args))
    }
}

fn classify_ident(name: &str) -> Result<Var, String> {
    if name == "T" {
        return Ok(Var::Period);
    }
    for (prefix, make) in [("x", Var::State as fn(usize) -> Var), ("u", Var::Input)] {
        if let Some(rest) = name.strip_prefix(prefix) {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                if rest.starts_with('0') {
                    return Err(format!("`{name}`: indices start at 1 and have no leading zeros"));
                }
                let k: usize = rest.parse().map_err(|_| format!("`{name}`: index too large"))?;
                return Ok(make(k - 1));
            }
        }
    }
    Ok(Var::Param(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysdsl::ast::MapEnv;

    fn x(i: usize) -> Expr {
        Expr::Var(Var::State(i))
    }

    #[test]
    fn sum_with_product() {
        let e = parse_expression("x1 + T*u1").unwrap();
        let expected = Expr::binary(
            BinOp::Add,
            x(0),
            Expr::binary(BinOp::Mul, Expr::Var(Var::Period), Expr::Var(Var::Input(0))),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn minus_binds_looser_than_power() {
        let e = parse_expression("-x1^2").unwrap();
        assert_eq!(e, Expr::neg(Expr::binary(BinOp::Pow, x(0), Expr::num(2.0))));
        let env = MapEnv::new().with("x1", 3.0);
        assert_eq!(e.eval(&env).unwrap(), -9.0);
    }

    #[test]
    fn power_is_right_associative() {
        let e = parse_expression("2^3^2").unwrap();
        assert_eq!(e.eval(&MapEnv::new()).unwrap(), 512.0);
        let e = parse_expression("2^-1").unwrap();
        assert_eq!(e.eval(&MapEnv::new()).unwrap(), 0.5);
    }

    #[test]
    fn min_is_binary() {
        let d = parse_expression("min(x1, x2, x3)").unwrap_err();
        assert_eq!(d.offset, 0);
        assert!(d.message.contains("min"), "{}", d.message);
        assert!(parse_expression("min(x1, x2)").is_ok());
        assert!(parse_expression("sin(x1, x2)").is_err());
    }

    #[test]
    fn syntax_errors_carry_expected_sets() {
        let d = parse_expression("x1 + * 2").unwrap_err();
        assert_eq!(d.offset, 5);
        assert!(d.expected.iter().any(|e| e == "number"));
        let d = parse_expression("(x1 + 2").unwrap_err();
        assert_eq!(d.offset, 7);
        assert!(parse_expression("x1 x2").is_err());
        assert!(parse_expression("").is_err());
        assert!(parse_expression("foo(1)").is_err());
        assert!(parse_expression("x0").is_err());
        assert!(parse_expression("sin").is_err());
    }

    #[test]
    fn deep_nesting_is_a_diagnostic() {
        let src = "(".repeat(10_000) + "1" + &")".repeat(10_000);
        assert!(parse_expression(&src).is_err());
        let src = "-".repeat(10_000) + "1";
        assert!(parse_expression(&src).is_err());
        let src = "2^".repeat(10_000) + "1";
        assert!(parse_expression(&src).is_err());
    }

    #[test]
    fn invalid_utf8_is_a_diagnostic() {
        let d = parse_expression_bytes(&[b'x', b'1', 0xff]).unwrap_err();
        assert_eq!(d.offset, 2);
    }

    #[test]
    fn display_reparses() {
        for src in ["x1 + T*u1", "-x1^2", "min(a, -b)/3e-7", "((x1))", "sqrt(abs(x2)) - sign(u1)^2^x1"] {
            let e = parse_expression(src).unwrap();
            assert_eq!(parse_expression(&e.to_string()).unwrap(), e, "{src}");
        }
    }
}
