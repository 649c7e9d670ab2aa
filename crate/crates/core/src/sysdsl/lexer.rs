use super::ParseDiagnostic;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Caret => "`^`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub offset: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseDiagnostic> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let simple = match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'+' => Some(TokenKind::Plus),
            b'-' => Some(TokenKind::Minus),
            b'*' => Some(TokenKind::Star),
            b'/' => Some(TokenKind::Slash),
            b'^' => Some(TokenKind::Caret),
            b'(' => Some(TokenKind::LParen),
            b')' => Some(TokenKind::RParen),
            b',' => Some(TokenKind::Comma),
            _ => None,
        };
        if let Some(kind) = simple {
            tokens.push(Token { kind, offset: start });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            i = scan_number(bytes, i).map_err(|msg| ParseDiagnostic::at(src, start, msg, &["number"]))?;
            let text = &src[start..i];
            let value: f64 = text
                .parse()
                .map_err(|_| ParseDiagnostic::at(src, start, format!("malformed number `{text}`"), &["number"]))?;
            if !value.is_finite() {
                return Err(ParseDiagnostic::at(src, start, format!("number `{text}` overflows binary64"), &["number"]));
            }
            tokens.push(Token { kind: TokenKind::Number(value), offset: start });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token { kind: TokenKind::Ident(src[start..i].to_string()), offset: start });
            continue;
        }
        let ch = src[start..].chars().next().unwrap_or('?');
        return Err(ParseDiagnostic::at(
            src,
            start,
            format!("unexpected character {ch:?}"),
            &["number", "identifier", "operator", "`(`"],
        ));
    }
    tokens.push(Token { kind: TokenKind::Eof, offset: src.len() });
    Ok(tokens)
}

fn scan_number(bytes: &[u8], mut i: usize) -> Result<usize, String> {
    let digits = |i: &mut usize| {
        let s = *i;
        while *i < bytes.len() && bytes[*i].is_ascii_digit() {
            *i += 1;
        }
        *i - s
    };
    let int_digits = digits(&mut i);
    let mut frac_digits = 0;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        frac_digits = digits(&mut i);
    }
    if int_digits + frac_digits == 0 {
        return Err("expected digits".into());
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        i += 1;
        if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
            i += 1;
        }
        if digits(&mut i) == 0 {
            return Err("exponent has no digits".into());
        }
    }
    if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_' || bytes[i] == b'.') {
        return Err("malformed number".into());
    }
    Ok(i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &str) -> Vec<TokenKind> {
        tokenize(s).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn numbers_in_all_forms() {
        assert_eq!(
            kinds("1 2.5 .5 3e2 1.5E-3"),
            vec![
                TokenKind::Number(1.0),
                TokenKind::Number(2.5),
                TokenKind::Number(0.5),
                TokenKind::Number(300.0),
                TokenKind::Number(1.5e-3),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn bad_numbers_are_lexical_errors() {
        for src in ["1e", "1.2.3", "2x", "1e400", "."] {
            assert!(tokenize(src).is_err(), "{src}");
        }
    }

    #[test]
    fn stray_character_reports_offset() {
        let d = tokenize("x1 + $").unwrap_err();
        assert_eq!(d.offset, 5);
        assert_eq!((d.line, d.column), (1, 6));
    }
}
