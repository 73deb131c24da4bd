//! Surface syntax tree and its pretty-printer.
//!
//! The printer fully parenthesizes binary expressions, so printing and
//! re-parsing yields the same tree up to source positions.

use std::fmt::{self, Write};

use super::ir::{Elem, Type};
use super::Pos;

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub items: Vec<Item>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Item {
    Global(GlobalItem),
    Func(FnItem),
    Extern(ExternItem),
}

#[derive(Clone, Debug, PartialEq)]
pub enum GlobalTy {
    Scalar(Type),
    Array(Elem, u32),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lit {
    Int(i64),
    Float(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum GlobalInit {
    Lit(Lit),
    FnRef(String),
    Array(Vec<Lit>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalItem {
    pub name: String,
    pub ty: GlobalTy,
    pub init: Option<GlobalInit>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub ty: Type,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FnItem {
    pub name: String,
    pub params: Vec<ParamDecl>,
    pub ret: Type,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExternItem {
    pub name: String,
    pub params: Vec<ParamDecl>,
    pub ret: Type,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Let {
        name: String,
        ty: Option<Type>,
        value: Expr,
        pos: Pos,
    },
    Assign {
        target: Expr,
        value: Expr,
        pos: Pos,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Option<Vec<Stmt>>,
        pos: Pos,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
        pos: Pos,
    },
    Return {
        value: Option<Expr>,
        pos: Pos,
    },
    Expr(Expr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::BitAnd => "&",
            BinaryOp::BitOr => "|",
            BinaryOp::BitXor => "^",
            BinaryOp::Shl => "<<",
            BinaryOp::Shr => ">>",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    Str(String),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call { callee: Box<Expr>, args: Vec<Expr> },
    Index { base: Box<Expr>, index: Box<Expr> },
    AddrOf(Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

fn write_float(f: &mut impl Write, v: f64) -> fmt::Result {
    if v.is_infinite() {
        // No literal spelling for infinity; an overflowing exponent parses back to it.
        let sign = if v < 0.0 { "-" } else { "" };
        write!(f, "{sign}1e999")
    } else {
        let s = format!("{v:?}");
        if s.contains('.') || s.contains('e') || s.contains("NaN") {
            f.write_str(&s)
        } else {
            write!(f, "{s}.0")
        }
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Lit::Int(v) => write!(f, "{v}"),
            Lit::Float(v) => write_float(f, v),
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\0' => out.push_str("\\0"),
            c => out.push(c),
        }
    }
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Int(v) => write!(f, "{v}"),
            ExprKind::Float(v) => write_float(f, *v),
            ExprKind::Str(s) => write!(f, "\"{}\"", escape(s)),
            ExprKind::Var(n) => f.write_str(n),
            ExprKind::Unary(UnaryOp::Neg, e) => write!(f, "(-{e})"),
            ExprKind::Unary(UnaryOp::Not, e) => write!(f, "(!{e})"),
            ExprKind::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            ExprKind::Call { callee, args } => {
                write!(f, "{callee}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            ExprKind::Index { base, index } => write!(f, "{base}[{index}]"),
            ExprKind::AddrOf(e) => write!(f, "&{e}"),
        }
    }
}

fn write_params(out: &mut String, params: &[ParamDecl]) {
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{}: {}", p.name, p.ty);
    }
}

fn write_block(out: &mut String, body: &[Stmt], depth: usize) {
    out.push_str("{\n");
    for s in body {
        write_stmt(out, s, depth + 1);
    }
    out.push_str(&"    ".repeat(depth));
    out.push('}');
}

fn write_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    let pad = "    ".repeat(depth);
    out.push_str(&pad);
    match stmt {
        Stmt::Let { name, ty, value, .. } => {
            match ty {
                Some(t) => {
                    let _ = write!(out, "let {name}: {t} = {value};");
                }
                None => {
                    let _ = write!(out, "let {name} = {value};");
                }
            }
        }
        Stmt::Assign { target, value, .. } => {
            let _ = write!(out, "{target} = {value};");
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
            ..
        } => {
            let _ = write!(out, "if ({cond}) ");
            write_block(out, then_body, depth);
            if let Some(e) = else_body {
                out.push_str(" else ");
                write_block(out, e, depth);
            }
        }
        Stmt::While { cond, body, .. } => {
            let _ = write!(out, "while ({cond}) ");
            write_block(out, body, depth);
        }
        Stmt::Return { value: Some(v), .. } => {
            let _ = write!(out, "return {v};");
        }
        Stmt::Return { value: None, .. } => out.push_str("return;"),
        Stmt::Expr(e) => {
            let _ = write!(out, "{e};");
        }
    }
    out.push('\n');
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for item in &self.items {
            match item {
                Item::Global(g) => {
                    out.push_str("global ");
                    out.push_str(&g.name);
                    out.push_str(": ");
                    match &g.ty {
                        GlobalTy::Scalar(t) => {
                            let _ = write!(out, "{t}");
                        }
                        GlobalTy::Array(e, n) => {
                            let _ = write!(out, "[{}; {n}]", e.scalar());
                        }
                    }
                    match &g.init {
                        None => {}
                        Some(GlobalInit::Lit(l)) => {
                            let _ = write!(out, " = {l}");
                        }
                        Some(GlobalInit::FnRef(n)) => {
                            let _ = write!(out, " = &{n}");
                        }
                        Some(GlobalInit::Array(items)) => {
                            out.push_str(" = [");
                            for (i, l) in items.iter().enumerate() {
                                if i > 0 {
                                    out.push_str(", ");
                                }
                                let _ = write!(out, "{l}");
                            }
                            out.push(']');
                        }
                    }
                    out.push_str(";\n");
                }
                Item::Extern(e) => {
                    let _ = write!(out, "extern fn {}(", e.name);
                    write_params(&mut out, &e.params);
                    let _ = writeln!(out, ") -> {};", e.ret);
                }
                Item::Func(func) => {
                    let _ = write!(out, "fn {}(", func.name);
                    write_params(&mut out, &func.params);
                    let _ = write!(out, ") -> {} ", func.ret);
                    write_block(&mut out, &func.body, 0);
                    out.push('\n');
                }
            }
        }
        f.write_str(&out)
    }
}
