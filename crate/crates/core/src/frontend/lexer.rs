use std::fmt;

use super::{Pos, SyntaxError};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(v) => write!(f, "integer `{v}`"),
            Tok::Float(v) => write!(f, "float `{v:?}`"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

// Longest first so that `<=` wins over `<`.
const PUNCTS: &[&str] = &[
    "->", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "+", "-", "*", "/", "%", "&", "|",
    "^", "!", "<", ">", "=", "(", ")", "{", "}", "[", "]", ",", ";", ":",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut line_start = 0usize;

    while i < bytes.len() {
        let c = bytes[i];
        let pos = Pos {
            line,
            col: (i - line_start) as u32 + 1,
        };
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                pos,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let (tok, len) = lex_number(&src[i..], pos)?;
            out.push(Token { tok, pos });
            i += len;
            continue;
        }
        if c == b'"' {
            let (s, len) = lex_string(&src[i..], pos)?;
            out.push(Token { tok: Tok::Str(s), pos });
            i += len;
            continue;
        }
        match PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            Some(p) => {
                out.push(Token { tok: Tok::Punct(p), pos });
                i += p.len();
            }
            None => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(SyntaxError {
                    pos,
                    expected: vec!["token".into()],
                    found: format!("character `{ch}`"),
                });
            }
        }
    }
    let pos = Pos {
        line,
        col: (i - line_start) as u32 + 1,
    };
    out.push(Token { tok: Tok::Eof, pos });
    Ok(out)
}

fn lex_number(s: &str, pos: Pos) -> Result<(Tok, usize), SyntaxError> {
    let b = s.as_bytes();
    if b.len() > 2 && b[0] == b'0' && (b[1] == b'x' || b[1] == b'X') {
        let mut n = 2;
        while n < b.len() && b[n].is_ascii_hexdigit() {
            n += 1;
        }
        let v = u64::from_str_radix(&s[2..n], 16).map_err(|_| bad_number(pos, &s[..n]))?;
        return Ok((Tok::Int(v as i64), n));
    }
    let mut n = 0;
    while n < b.len() && b[n].is_ascii_digit() {
        n += 1;
    }
    let mut is_float = false;
    if n < b.len() && b[n] == b'.' && b.get(n + 1).is_some_and(|c| c.is_ascii_digit()) {
        is_float = true;
        n += 1;
        while n < b.len() && b[n].is_ascii_digit() {
            n += 1;
        }
    }
    if n < b.len() && (b[n] == b'e' || b[n] == b'E') {
        let mut m = n + 1;
        if m < b.len() && (b[m] == b'+' || b[m] == b'-') {
            m += 1;
        }
        if m < b.len() && b[m].is_ascii_digit() {
            while m < b.len() && b[m].is_ascii_digit() {
                m += 1;
            }
            is_float = true;
            n = m;
        }
    }
    let text = &s[..n];
    if is_float {
        let v: f64 = text.parse().map_err(|_| bad_number(pos, text))?;
        Ok((Tok::Float(v), n))
    } else {
        // Allow the full u64 range so `-9223372036854775808` style literals and
        // bit patterns can be written.
        let v: u64 = text.parse().map_err(|_| bad_number(pos, text))?;
        Ok((Tok::Int(v as i64), n))
    }
}

fn bad_number(pos: Pos, text: &str) -> SyntaxError {
    SyntaxError {
        pos,
        expected: vec!["number literal".into()],
        found: format!("`{text}`"),
    }
}

fn lex_string(s: &str, pos: Pos) -> Result<(String, usize), SyntaxError> {
    let mut out = String::new();
    let mut chars = s.char_indices().skip(1);
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => return Ok((out, i + 1)),
            '\\' => match chars.next() {
                Some((_, 'n')) => out.push('\n'),
                Some((_, 't')) => out.push('\t'),
                Some((_, '\\')) => out.push('\\'),
                Some((_, '"')) => out.push('"'),
                Some((_, '0')) => out.push('\0'),
                _ => {
                    return Err(SyntaxError {
                        pos,
                        expected: vec!["escape sequence".into()],
                        found: "invalid escape".into(),
                    })
                }
            },
            '\n' => break,
            c => out.push(c),
        }
    }
    Err(SyntaxError {
        pos,
        expected: vec!["`\"`".into()],
        found: "unterminated string".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_punctuation() {
        assert_eq!(
            toks("a<=0x10 -> 1.5e3"),
            vec![
                Tok::Ident("a".into()),
                Tok::Punct("<="),
                Tok::Int(16),
                Tok::Punct("->"),
                Tok::Float(1500.0),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn string_escapes() {
        assert_eq!(toks(r#""x=%d\n""#)[0], Tok::Str("x=%d\n".into()));
    }

    #[test]
    fn positions_track_lines() {
        let t = tokenize("fn\n  main").unwrap();
        assert_eq!(t[1].pos, Pos { line: 2, col: 3 });
    }

    #[test]
    fn unknown_character_is_an_error() {
        let e = tokenize("let x = @;").unwrap_err();
        assert_eq!(e.pos.col, 9);
    }
}
