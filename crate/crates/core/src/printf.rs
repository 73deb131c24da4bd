//! Format strings of the `print` builtin.
//!
//! Supported conversions: `%d` (i64), `%x` (i64 as unsigned hex), `%c`
//! (low byte of an i64), `%f` (f64 with six decimals) and `%%`.

use std::io::Write;

use crate::frontend::ir::NumTy;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conversion {
    Dec,
    Hex,
    Char,
    Float,
}

impl Conversion {
    pub fn arg_type(self) -> NumTy {
        match self {
            Conversion::Float => NumTy::F64,
            _ => NumTy::I64,
        }
    }
}

pub fn conversions(format: &str) -> Result<Vec<Conversion>, String> {
    let mut out = Vec::new();
    let mut chars = format.chars();
    while let Some(c) = chars.next() {
        if c != '%' {
            continue;
        }
        match chars.next() {
            Some('d') => out.push(Conversion::Dec),
            Some('x') => out.push(Conversion::Hex),
            Some('c') => out.push(Conversion::Char),
            Some('f') => out.push(Conversion::Float),
            Some('%') => {}
            Some(other) => return Err(format!("unsupported conversion `%{other}`")),
            None => return Err("dangling `%` at end of format".into()),
        }
    }
    Ok(out)
}

/// Renders `format` with raw 64-bit argument words. Missing arguments read as
/// zero; the type checker guarantees counts match for compiled programs.
pub fn render(format: &str, args: &[u64], out: &mut Vec<u8>) {
    let mut next = args.iter().copied();
    let mut chars = format.chars();
    let mut buf = [0u8; 4];
    while let Some(c) = chars.next() {
        if c != '%' {
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            continue;
        }
        match chars.next() {
            Some('d') => {
                let _ = write!(out, "{}", next.next().unwrap_or(0) as i64);
            }
            Some('x') => {
                let _ = write!(out, "{:x}", next.next().unwrap_or(0));
            }
            Some('c') => out.push(next.next().unwrap_or(0) as u8),
            Some('f') => {
                let _ = write!(out, "{:.6}", f64::from_bits(next.next().unwrap_or(0)));
            }
            Some('%') => out.push(b'%'),
            Some(other) => {
                out.push(b'%');
                out.extend_from_slice(other.encode_utf8(&mut buf).as_bytes());
            }
            None => out.push(b'%'),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_conversions() {
        let mut out = Vec::new();
        render(
            "%d %x %c %f 100%%\n",
            &[(-3i64) as u64, 255, b'A' as u64, 1.5f64.to_bits()],
            &mut out,
        );
        assert_eq!(out, b"-3 ff A 1.500000 100%\n");
    }

    #[test]
    fn rejects_unknown_conversion() {
        assert!(conversions("%s").is_err());
        assert_eq!(
            conversions("x=%d y=%f").unwrap(),
            vec![Conversion::Dec, Conversion::Float]
        );
    }
}
