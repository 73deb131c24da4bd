//! Mini source language: parsing, type checking and the typed IR.

pub mod ast;
pub mod ir;
mod lexer;
mod lower;
mod parser;
mod validate;

use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ir::TypedModule;
pub use validate::{validate, Diagnostic, DiagnosticKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("syntax error at {pos}: expected {}, found {found}", .expected.join(" or "))]
pub struct SyntaxError {
    pub pos: Pos,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("type error at {pos}: {message}")]
pub struct TypeError {
    pub pos: Pos,
    pub message: String,
}

impl TypeError {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        TypeError {
            pos,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum FrontendError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Type(#[from] TypeError),
}

pub fn parse_ast(source: &str) -> Result<ast::Program, SyntaxError> {
    parser::parse_program(source)
}

/// Parses and type-checks a program.
pub fn parse(source: &str) -> Result<TypedModule, FrontendError> {
    let prog = parse_ast(source)?;
    Ok(lower::lower_program(&prog, false)?)
}

/// Like [`parse`], but marks every function as library code.
pub fn parse_library(source: &str) -> Result<TypedModule, FrontendError> {
    let prog = parse_ast(source)?;
    Ok(lower::lower_program(&prog, true)?)
}

/// Parses several source files as one module, in order.
pub fn parse_files(sources: &[&str], library: bool) -> Result<TypedModule, FrontendError> {
    let mut items = Vec::new();
    for s in sources {
        items.extend(parse_ast(s)?.items);
    }
    Ok(lower::lower_program(&ast::Program { items }, library)?)
}

/// Deterministic textual dump of a module, without source positions.
pub fn dump_module(m: &TypedModule) -> String {
    let mut out = String::new();
    if let Some(e) = &m.entry {
        let _ = writeln!(out, "entry {e}");
    }
    for g in &m.globals {
        let _ = writeln!(out, "global {} {:?} sig={:?} init={:?}", g.name, g.ty, g.fn_sig, g.init);
    }
    for e in &m.externs {
        let _ = writeln!(out, "extern {} {}", e.name, e.sig);
    }
    for f in &m.functions {
        out.push_str(&dump_function(f));
    }
    out
}

pub fn dump_function(f: &ir::FunctionIR) -> String {
    let mut out = String::new();
    let _ = write!(out, "fn {}(", f.name);
    for (i, p) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{}: {}", p.name, p.ty);
    }
    let _ = write!(out, ") -> {}", f.ret);
    if f.is_library {
        out.push_str(" library");
    }
    if let Some(o) = &f.outlined_from {
        let _ = write!(out, " outlined_from={o}");
    }
    out.push_str(" {\n");
    for (i, t) in f.vreg_types.iter().enumerate() {
        let _ = writeln!(out, "  v{i}: {t}");
    }
    for (b, block) in f.blocks.iter().enumerate() {
        let _ = writeln!(out, " b{b}:");
        for inst in &block.insts {
            let _ = writeln!(out, "  {}", fmt_inst(inst));
        }
    }
    out.push_str("}\n");
    out
}

fn join(regs: &[ir::VReg]) -> String {
    regs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn fmt_inst(inst: &ir::Inst) -> String {
    use ir::Inst::*;
    match inst {
        Const { dst, value } => format!("{dst} = const {value}"),
        Move { dst, src } => format!("{dst} = {src}"),
        Binary { op, ty, dst, lhs, rhs } => format!("{dst} = {}.{ty:?} {lhs}, {rhs}", op.mnemonic()),
        Compare { cond, ty, dst, lhs, rhs } => {
            format!("{dst} = cmp.{}.{ty:?} {lhs}, {rhs}", cond.mnemonic())
        }
        Unary { op, dst, src } => format!("{dst} = {op:?} {src}"),
        Load { dst, addr } => format!("{dst} = load [{addr}]"),
        Store { addr, value } => format!("store [{addr}], {value}"),
        Index { dst, base, index } => format!("{dst} = index {base}, {index}"),
        GlobalAddr { dst, name } => format!("{dst} = getglobal @{name}"),
        FuncAddr { dst, name } => format!("{dst} = funcaddr @{name}"),
        Call { dst, callee, args, sig } => {
            let target = match callee {
                ir::Callee::Direct(n) => format!("@{n}"),
                ir::Callee::Indirect(r) => format!("*{r}"),
            };
            let lhs = dst.map(|d| format!("{d} = ")).unwrap_or_default();
            format!("{lhs}call {target}({}) : {sig}", join(args))
        }
        Print { format, args } => format!("vararg-call print({format:?}, {})", join(args)),
        GuestAsm { dst, op } => {
            let lhs = dst.map(|d| format!("{d} = ")).unwrap_or_default();
            format!("{lhs}guestasm {op:?}")
        }
        Exit { code } => format!("exit {code}"),
        Jump { target } => format!("jump {target}"),
        Branch { cond, then_to, else_to } => format!("branch {cond}, {then_to}, {else_to}"),
        Return { value: Some(v) } => format!("return {v}"),
        Return { value: None } => "return".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::ir::*;
    use super::*;

    #[test]
    fn minimal_program() {
        let m = parse("fn main() -> i64 { return 0; }").unwrap();
        assert_eq!(m.functions.len(), 1);
        assert_eq!(m.entry.as_deref(), Some("main"));
        assert_eq!(m.functions[0].ret, Type::I64);
    }

    #[test]
    fn print_call_is_marked_variadic() {
        let m = parse(r#"fn main() -> i64 { let x = 3; print("x=%d", x); return 0; }"#).unwrap();
        let f = &m.functions[0];
        assert_eq!(f.variadic_sites().len(), 1);
        assert!(f.has_guest_bound());
    }

    #[test]
    fn guestasm_is_guest_bound() {
        let m = parse(r#"fn main() -> i64 { guestasm("nop"); return 0; }"#).unwrap();
        let f = &m.functions[0];
        assert_eq!(f.guest_asm_sites().len(), 1);
        let (_, inst) = f.sites().find(|(_, i)| i.is_guest_bound()).unwrap();
        assert!(matches!(inst, Inst::GuestAsm { .. }));
    }

    #[test]
    fn arity_mismatch_is_a_type_error() {
        let src = "fn f(a: i64, b: i64, c: i64) -> i64 { return a; } fn main() -> i64 { return f(1, 2); }";
        let err = parse(src).unwrap_err();
        let FrontendError::Type(t) = err else { panic!("{err:?}") };
        assert!(t.message.contains("expected 3 arguments"), "{}", t.message);
        assert_eq!(t.pos.line, 1);
    }

    #[test]
    fn undeclared_name() {
        let err = parse("fn main() -> i64 { return y; }").unwrap_err();
        assert!(matches!(err, FrontendError::Type(ref t) if t.message.contains("undeclared")));
    }

    #[test]
    fn syntax_error_carries_position_and_expectations() {
        let err = parse("fn main() -> i64 {\n  let = 4;\n}").unwrap_err();
        let FrontendError::Syntax(s) = err else { panic!() };
        assert_eq!(s.pos, Pos { line: 2, col: 7 });
        assert_eq!(s.expected, vec!["identifier".to_string()]);
    }

    #[test]
    fn missing_return_rejected() {
        let err = parse("fn f(x: i64) -> i64 { if (x) { return 1; } }").unwrap_err();
        assert!(matches!(err, FrontendError::Type(_)));
    }

    #[test]
    fn unreachable_tail_is_dropped() {
        let m = parse("fn f(x: i64) -> i64 { if (x) { return 1; } else { return 2; } }").unwrap();
        assert!(validate(&m).is_empty());
        assert_eq!(m.functions[0].blocks.len(), 3);
    }

    #[test]
    fn indirect_calls_through_fn_params() {
        let src = "fn twice(f: fn(i64) -> i64, x: i64) -> i64 { return f(f(x)); }
                   fn inc(x: i64) -> i64 { return x + 1; }
                   fn main() -> i64 { return twice(&inc, 1); }";
        let m = parse(src).unwrap();
        let calls = m.functions[0]
            .sites()
            .filter(|(_, i)| matches!(i, Inst::Call { callee: Callee::Indirect(_), .. }))
            .count();
        assert_eq!(calls, 2);
    }

    #[test]
    fn dump_is_deterministic() {
        let src = "global g: [f64; 4] = [1.0, 2.5]; fn main() -> i64 { g[1] = g[0] * 2.0; return i64(g[1]); }";
        assert_eq!(dump_module(&parse(src).unwrap()), dump_module(&parse(src).unwrap()));
    }
}
