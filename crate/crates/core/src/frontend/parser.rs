use super::ast::*;
use super::ir::{Elem, Signature, Type};
use super::lexer::{tokenize, Tok, Token};
use super::{Pos, SyntaxError};

pub fn parse_program(src: &str) -> Result<Program, SyntaxError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, at: 0 };
    let mut items = Vec::new();
    while !p.check_eof() {
        items.push(p.item()?);
    }
    Ok(Program { items })
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.at + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn check_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        SyntaxError {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &'static str) -> Result<(), SyntaxError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(&[&format!("`{p}`")]))
        }
    }

    fn expect_keyword(&mut self, k: &str) -> Result<(), SyntaxError> {
        if self.is_keyword(k) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[&format!("`{k}`")]))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn item(&mut self) -> Result<Item, SyntaxError> {
        let pos = self.pos();
        if self.is_keyword("global") {
            self.bump();
            let name = self.ident()?;
            self.expect_punct(":")?;
            let ty = if self.eat_punct("[") {
                let elem = self.elem()?;
                self.expect_punct(";")?;
                let n = match self.bump().tok {
                    Tok::Int(n) if (0..=u32::MAX as i64).contains(&n) => n as u32,
                    _ => {
                        self.at -= 1;
                        return Err(self.error(&["array length"]));
                    }
                };
                self.expect_punct("]")?;
                GlobalTy::Array(elem, n)
            } else {
                GlobalTy::Scalar(self.ty()?)
            };
            let init = if self.eat_punct("=") {
                Some(self.global_init()?)
            } else {
                None
            };
            self.expect_punct(";")?;
            Ok(Item::Global(GlobalItem { name, ty, init, pos }))
        } else if self.is_keyword("extern") {
            self.bump();
            self.expect_keyword("fn")?;
            let name = self.ident()?;
            let params = self.params()?;
            self.expect_punct("->")?;
            let ret = self.ty()?;
            self.expect_punct(";")?;
            Ok(Item::Extern(ExternItem {
                name,
                params,
                ret,
                pos,
            }))
        } else if self.is_keyword("fn") {
            self.bump();
            let name = self.ident()?;
            let params = self.params()?;
            self.expect_punct("->")?;
            let ret = self.ty()?;
            let body = self.block()?;
            Ok(Item::Func(FnItem {
                name,
                params,
                ret,
                body,
                pos,
            }))
        } else {
            Err(self.error(&["`global`", "`fn`", "`extern`"]))
        }
    }

    fn lit(&mut self) -> Result<Lit, SyntaxError> {
        let neg = self.eat_punct("-");
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Lit::Int(if neg { v.wrapping_neg() } else { v }))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Lit::Float(if neg { -v } else { v }))
            }
            _ => Err(self.error(&["literal"])),
        }
    }

    fn global_init(&mut self) -> Result<GlobalInit, SyntaxError> {
        if self.eat_punct("&") {
            return Ok(GlobalInit::FnRef(self.ident()?));
        }
        if self.eat_punct("[") {
            let mut items = Vec::new();
            if !self.is_punct("]") {
                loop {
                    items.push(self.lit()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
            }
            self.expect_punct("]")?;
            return Ok(GlobalInit::Array(items));
        }
        Ok(GlobalInit::Lit(self.lit()?))
    }

    fn elem(&mut self) -> Result<Elem, SyntaxError> {
        if self.is_keyword("i64") {
            self.bump();
            Ok(Elem::I64)
        } else if self.is_keyword("f64") {
            self.bump();
            Ok(Elem::F64)
        } else {
            Err(self.error(&["`i64`", "`f64`"]))
        }
    }

    fn ty(&mut self) -> Result<Type, SyntaxError> {
        if self.eat_punct("*") {
            return Ok(Type::Ptr(self.elem()?));
        }
        if self.is_keyword("fn") {
            self.bump();
            self.expect_punct("(")?;
            let mut params = Vec::new();
            if !self.is_punct(")") {
                loop {
                    params.push(self.ty()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
            }
            self.expect_punct(")")?;
            self.expect_punct("->")?;
            let ret = self.ty()?;
            return Ok(Type::Fn(Box::new(Signature { params, ret })));
        }
        match self.peek() {
            Tok::Ident(s) if s == "i64" => {
                self.bump();
                Ok(Type::I64)
            }
            Tok::Ident(s) if s == "f64" => {
                self.bump();
                Ok(Type::F64)
            }
            Tok::Ident(s) if s == "void" => {
                self.bump();
                Ok(Type::Void)
            }
            _ => Err(self.error(&["type"])),
        }
    }

    fn params(&mut self) -> Result<Vec<ParamDecl>, SyntaxError> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let name = self.ident()?;
                self.expect_punct(":")?;
                let ty = self.ty()?;
                params.push(ParamDecl { name, ty });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(params)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.is_punct("}") {
            if self.check_eof() {
                return Err(self.error(&["`}`"]));
            }
            body.push(self.stmt()?);
        }
        self.bump();
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let pos = self.pos();
        if self.is_keyword("let") {
            self.bump();
            let name = self.ident()?;
            let ty = if self.eat_punct(":") {
                Some(self.ty()?)
            } else {
                None
            };
            self.expect_punct("=")?;
            let value = self.expr()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Let {
                name,
                ty,
                value,
                pos,
            });
        }
        if self.is_keyword("if") {
            return self.if_stmt();
        }
        if self.is_keyword("while") {
            self.bump();
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let body = self.block()?;
            return Ok(Stmt::While { cond, body, pos });
        }
        if self.is_keyword("return") {
            self.bump();
            let value = if self.is_punct(";") {
                None
            } else {
                Some(self.expr()?)
            };
            self.expect_punct(";")?;
            return Ok(Stmt::Return { value, pos });
        }
        let e = self.expr()?;
        if self.eat_punct("=") {
            let value = self.expr()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Assign {
                target: e,
                value,
                pos,
            });
        }
        self.expect_punct(";")?;
        Ok(Stmt::Expr(e))
    }

    fn if_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let pos = self.pos();
        self.expect_keyword("if")?;
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let then_body = self.block()?;
        let else_body = if self.is_keyword("else") {
            self.bump();
            if self.is_keyword("if") {
                Some(vec![self.if_stmt()?])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt::If {
            cond,
            then_body,
            else_body,
            pos,
        })
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(0)
    }

    fn binary(&mut self, min_level: usize) -> Result<Expr, SyntaxError> {
        const LEVELS: &[&[(&str, BinaryOp)]] = &[
            &[("||", BinaryOp::Or)],
            &[("&&", BinaryOp::And)],
            &[("|", BinaryOp::BitOr)],
            &[("^", BinaryOp::BitXor)],
            &[("&", BinaryOp::BitAnd)],
            &[("==", BinaryOp::Eq), ("!=", BinaryOp::Ne)],
            &[
                ("<", BinaryOp::Lt),
                ("<=", BinaryOp::Le),
                (">", BinaryOp::Gt),
                (">=", BinaryOp::Ge),
            ],
            &[("<<", BinaryOp::Shl), (">>", BinaryOp::Shr)],
            &[("+", BinaryOp::Add), ("-", BinaryOp::Sub)],
            &[("*", BinaryOp::Mul), ("/", BinaryOp::Div), ("%", BinaryOp::Rem)],
        ];
        if min_level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(min_level + 1)?;
        loop {
            let op = LEVELS[min_level]
                .iter()
                .find(|(sym, _)| self.is_punct(sym))
                .map(|(_, op)| *op);
            let Some(op) = op else { break };
            let pos = self.pos();
            self.bump();
            let rhs = self.binary(min_level + 1)?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        if self.eat_punct("-") {
            // Fold negative literals so they print and re-parse identically.
            match self.peek().clone() {
                Tok::Int(v) if !matches!(self.peek_at(1), Tok::Punct("[") | Tok::Punct("(")) => {
                    self.bump();
                    return self.postfix(Expr {
                        kind: ExprKind::Int(v.wrapping_neg()),
                        pos,
                    });
                }
                Tok::Float(v) if !matches!(self.peek_at(1), Tok::Punct("[") | Tok::Punct("(")) => {
                    self.bump();
                    return self.postfix(Expr {
                        kind: ExprKind::Float(-v),
                        pos,
                    });
                }
                _ => {}
            }
            let e = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Unary(UnaryOp::Neg, Box::new(e)),
                pos,
            });
        }
        if self.eat_punct("!") {
            let e = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Unary(UnaryOp::Not, Box::new(e)),
                pos,
            });
        }
        if self.eat_punct("&") {
            let e = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::AddrOf(Box::new(e)),
                pos,
            });
        }
        let p = self.primary()?;
        self.postfix(p)
    }

    fn postfix(&mut self, mut e: Expr) -> Result<Expr, SyntaxError> {
        loop {
            let pos = self.pos();
            if self.eat_punct("(") {
                let mut args = Vec::new();
                if !self.is_punct(")") {
                    loop {
                        args.push(self.expr()?);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                }
                self.expect_punct(")")?;
                e = Expr {
                    kind: ExprKind::Call {
                        callee: Box::new(e),
                        args,
                    },
                    pos,
                };
            } else if self.eat_punct("[") {
                let index = self.expr()?;
                self.expect_punct("]")?;
                e = Expr {
                    kind: ExprKind::Index {
                        base: Box::new(e),
                        index: Box::new(index),
                    },
                    pos,
                };
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Int(v) => ExprKind::Int(v),
            Tok::Float(v) => ExprKind::Float(v),
            Tok::Str(s) => ExprKind::Str(s),
            Tok::Ident(s) if !is_reserved(&s) => ExprKind::Var(s),
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                return Ok(e);
            }
            _ => return Err(self.error(&["expression"])),
        };
        self.bump();
        Ok(Expr { kind, pos })
    }
}

fn is_reserved(s: &str) -> bool {
    matches!(
        s,
        "fn" | "let" | "if" | "else" | "while" | "return" | "global" | "extern" | "void"
    )
}
