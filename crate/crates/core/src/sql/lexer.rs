use super::SqlError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Integer literal; `wide` is set by an `i64` suffix.
    Int { value: i128, wide: bool },
    Float(f64),
    /// String literal with an optional explicit `:n` width.
    Str { bytes: Vec<u8>, width: Option<u16> },
    Sym(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub offset: usize,
}

const SYMBOLS: [&str; 15] = ["<=", ">=", "<>", "!=", "(", ")", ",", ".", "*", "+", "-", "/", "<", "=", ">"];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SqlError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() || c == b';' {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(src[start..i].to_string()), offset: start });
        } else if c.is_ascii_digit() {
            let (tok, end) = number(src, start)?;
            i = end;
            out.push(Token { tok, offset: start });
        } else if c == b'\'' {
            let mut text = Vec::new();
            i += 1;
            loop {
                match bytes.get(i) {
                    None => return Err(SqlError::new(start, "unterminated string literal")),
                    Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        text.push(b'\'');
                        i += 2;
                    }
                    Some(b'\'') => {
                        i += 1;
                        break;
                    }
                    Some(&b) => {
                        text.push(b);
                        i += 1;
                    }
                }
            }
            let mut width = None;
            if bytes.get(i) == Some(&b':') {
                let ws = i + 1;
                let mut we = ws;
                while we < bytes.len() && bytes[we].is_ascii_digit() {
                    we += 1;
                }
                let n: u16 = src[ws..we]
                    .parse()
                    .map_err(|_| SqlError::new(i, "expected a width after `:`"))?;
                width = Some(n);
                i = we;
            }
            out.push(Token { tok: Tok::Str { bytes: text, width }, offset: start });
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            i += sym.len();
            out.push(Token { tok: Tok::Sym(sym), offset: start });
        } else {
            let ch = src[i..].chars().next().unwrap();
            return Err(SqlError::new(start, format!("unexpected character `{ch}`")));
        }
    }
    Ok(out)
}

fn number(src: &str, start: usize) -> Result<(Tok, usize), SqlError> {
    let b = src.as_bytes();
    let mut i = start;
    let digits = |i: &mut usize| {
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
    };
    digits(&mut i);
    let mut float = false;
    if i < b.len() && b[i] == b'.' && b.get(i + 1).is_some_and(|c| c.is_ascii_digit()) {
        float = true;
        i += 1;
        digits(&mut i);
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            float = true;
            i = j;
            digits(&mut i);
        }
    }
    let text = &src[start..i];
    if float {
        let v: f64 = text.parse().map_err(|_| SqlError::new(start, "bad float literal"))?;
        return Ok((Tok::Float(v), i));
    }
    let value: i128 = text.parse().map_err(|_| SqlError::new(start, "integer literal too large"))?;
    if src[i..].starts_with("i64") {
        return Ok((Tok::Int { value, wide: true }, i + 3));
    }
    if i < b.len() && (b[i].is_ascii_alphabetic() || b[i] == b'_') {
        return Err(SqlError::new(i, "unexpected suffix on number"));
    }
    Ok((Tok::Int { value, wide: false }, i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basics() {
        assert_eq!(
            toks("R.x<=3.14"),
            vec![Tok::Ident("R".into()), Tok::Sym("."), Tok::Ident("x".into()), Tok::Sym("<="), Tok::Float(3.14)]
        );
        assert_eq!(toks("5i64 7"), vec![Tok::Int { value: 5, wide: true }, Tok::Int { value: 7, wide: false }]);
        assert_eq!(toks("1e999"), vec![Tok::Float(f64::INFINITY)]);
        assert_eq!(toks("'it''s':9"), vec![Tok::Str { bytes: b"it's".to_vec(), width: Some(9) }]);
        assert_eq!(toks("a -- note\n b"), vec![Tok::Ident("a".into()), Tok::Ident("b".into())]);
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(tokenize("a # b").unwrap_err().offset, 2);
        assert_eq!(tokenize("x = 'abc").unwrap_err().offset, 4);
        assert_eq!(tokenize("12ab").unwrap_err().offset, 2);
    }
}
