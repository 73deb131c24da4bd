//! Type checking and lowering from the syntax tree to [`TypedModule`].

use std::collections::{HashMap, HashSet};

use super::ast::{self, BinaryOp, Expr, ExprKind, Item, Stmt, UnaryOp};
use super::ir::*;
use super::{Pos, TypeError};
use crate::printf;
use crate::semantics::guest_asm_code;

pub fn lower_program(prog: &ast::Program, library: bool) -> Result<TypedModule, TypeError> {
    let mut names = HashSet::new();
    let mut globals = Vec::new();
    let mut sigs: HashMap<String, Signature> = HashMap::new();
    let mut externs = Vec::new();

    for item in &prog.items {
        let (name, pos) = match item {
            Item::Global(g) => (&g.name, g.pos),
            Item::Func(f) => (&f.name, f.pos),
            Item::Extern(e) => (&e.name, e.pos),
        };
        if is_builtin(name) {
            return Err(TypeError::new(pos, format!("`{name}` is a builtin and cannot be redefined")));
        }
        if !names.insert(name.clone()) {
            return Err(TypeError::new(pos, format!("duplicate definition of `{name}`")));
        }
        match item {
            Item::Func(f) => {
                sigs.insert(f.name.clone(), fn_signature(&f.params, &f.ret, f.pos)?);
            }
            Item::Extern(e) => {
                let sig = fn_signature(&e.params, &e.ret, e.pos)?;
                sigs.insert(e.name.clone(), sig.clone());
                externs.push(ExternDecl {
                    name: e.name.clone(),
                    sig,
                });
            }
            Item::Global(_) => {}
        }
    }

    for item in &prog.items {
        if let Item::Global(g) = item {
            globals.push(lower_global(g, &sigs)?);
        }
    }

    let ctx = ModuleCtx {
        globals: &globals,
        sigs: &sigs,
    };
    let mut functions = Vec::new();
    for item in &prog.items {
        if let Item::Func(f) = item {
            functions.push(FnBuilder::lower(&ctx, f, library)?);
        }
    }

    let entry = functions.iter().find(|f| f.name == "main").map(|f| f.name.clone());
    if let Some(main) = functions.iter().find(|f| f.name == "main") {
        let params_ok = main.params.iter().all(|p| p.ty == Type::I64);
        let ret_ok = matches!(main.ret, Type::I64 | Type::Void);
        if !params_ok || !ret_ok {
            return Err(TypeError::new(
                main.pos,
                "`main` must take i64 parameters and return i64 or void",
            ));
        }
    }

    Ok(TypedModule {
        functions,
        globals,
        externs,
        entry,
    })
}

fn is_builtin(name: &str) -> bool {
    matches!(name, "print" | "guestasm" | "exit" | "i64" | "f64")
}

fn fn_signature(params: &[ast::ParamDecl], ret: &Type, pos: Pos) -> Result<Signature, TypeError> {
    let mut seen = HashSet::new();
    for p in params {
        if p.ty == Type::Void {
            return Err(TypeError::new(pos, format!("parameter `{}` cannot be void", p.name)));
        }
        if !seen.insert(&p.name) {
            return Err(TypeError::new(pos, format!("duplicate parameter `{}`", p.name)));
        }
    }
    Ok(Signature {
        params: params.iter().map(|p| p.ty.clone()).collect(),
        ret: ret.clone(),
    })
}

fn lit_const(l: ast::Lit, want: Elem, pos: Pos) -> Result<Const, TypeError> {
    match (l, want) {
        (ast::Lit::Int(v), Elem::I64) => Ok(Const::I64(v)),
        (ast::Lit::Float(v), Elem::F64) => Ok(Const::f64(v)),
        _ => Err(TypeError::new(pos, "initializer type does not match the global")),
    }
}

fn lower_global(g: &ast::GlobalItem, sigs: &HashMap<String, Signature>) -> Result<GlobalDef, TypeError> {
    let (ty, fn_sig) = match &g.ty {
        ast::GlobalTy::Array(e, n) => (GlobalType::Array(*e, *n), None),
        ast::GlobalTy::Scalar(t) => match t {
            Type::I64 => (GlobalType::Scalar(ScalarGlobal::I64), None),
            Type::F64 => (GlobalType::Scalar(ScalarGlobal::F64), None),
            Type::Ptr(e) => (GlobalType::Scalar(ScalarGlobal::Ptr(*e)), None),
            Type::Fn(sig) => (GlobalType::Scalar(ScalarGlobal::Fn), Some((**sig).clone())),
            Type::Void => return Err(TypeError::new(g.pos, "global cannot be void")),
        },
    };
    let init = match (&g.init, &ty) {
        (None, _) => GlobalInit::Zero,
        (Some(ast::GlobalInit::Lit(l)), GlobalType::Scalar(ScalarGlobal::I64)) => {
            GlobalInit::Scalar(lit_const(*l, Elem::I64, g.pos)?)
        }
        (Some(ast::GlobalInit::Lit(l)), GlobalType::Scalar(ScalarGlobal::F64)) => {
            GlobalInit::Scalar(lit_const(*l, Elem::F64, g.pos)?)
        }
        (Some(ast::GlobalInit::FnRef(name)), GlobalType::Scalar(ScalarGlobal::Fn)) => {
            match sigs.get(name) {
                Some(sig) if Some(sig) == fn_sig.as_ref() => GlobalInit::Func(name.clone()),
                Some(_) => {
                    return Err(TypeError::new(
                        g.pos,
                        format!("`{name}` does not match the signature of `{}`", g.name),
                    ))
                }
                None => return Err(TypeError::new(g.pos, format!("undeclared function `{name}`"))),
            }
        }
        (Some(ast::GlobalInit::Array(items)), GlobalType::Array(e, n)) => {
            if items.len() > *n as usize {
                return Err(TypeError::new(g.pos, "too many array initializers"));
            }
            GlobalInit::Array(
                items
                    .iter()
                    .map(|l| lit_const(*l, *e, g.pos))
                    .collect::<Result<_, _>>()?,
            )
        }
        _ => return Err(TypeError::new(g.pos, format!("invalid initializer for `{}`", g.name))),
    };
    Ok(GlobalDef {
        name: g.name.clone(),
        ty,
        fn_sig,
        init,
    })
}

struct ModuleCtx<'a> {
    globals: &'a [GlobalDef],
    sigs: &'a HashMap<String, Signature>,
}

impl ModuleCtx<'_> {
    fn global(&self, name: &str) -> Option<&GlobalDef> {
        self.globals.iter().find(|g| g.name == name)
    }
}

struct FnBuilder<'a> {
    ctx: &'a ModuleCtx<'a>,
    func: FunctionIR,
    cur: usize,
    scopes: Vec<HashMap<String, VReg>>,
}

type Value = (Option<VReg>, Type);

impl<'a> FnBuilder<'a> {
    fn lower(ctx: &'a ModuleCtx<'a>, f: &ast::FnItem, library: bool) -> Result<FunctionIR, TypeError> {
        let params: Vec<Param> = f
            .params
            .iter()
            .map(|p| Param {
                name: p.name.clone(),
                ty: p.ty.clone(),
            })
            .collect();
        let vreg_types = params.iter().map(|p| p.ty.clone()).collect();
        let mut b = FnBuilder {
            ctx,
            func: FunctionIR {
                name: f.name.clone(),
                params,
                ret: f.ret.clone(),
                blocks: vec![Block::default()],
                vreg_types,
                is_library: library,
                outlined_from: None,
                pos: f.pos,
            },
            cur: 0,
            scopes: vec![HashMap::new()],
        };
        for (i, p) in f.params.iter().enumerate() {
            b.scopes[0].insert(p.name.clone(), VReg(i as u32));
        }
        b.stmts(&f.body)?;
        b.finish()
    }

    fn finish(mut self) -> Result<FunctionIR, TypeError> {
        let n = self.func.blocks.len();
        let mut reachable = vec![false; n];
        let mut stack = vec![0usize];
        while let Some(b) = stack.pop() {
            if std::mem::replace(&mut reachable[b], true) {
                continue;
            }
            if let Some(t) = self.func.blocks[b].terminator() {
                stack.extend(t.successors().into_iter().map(|s| s.index()));
            }
        }
        for (b, block) in self.func.blocks.iter_mut().enumerate() {
            if reachable[b] && block.terminator().is_none() {
                if self.func.ret != Type::Void {
                    return Err(TypeError::new(
                        self.func.pos,
                        format!("function `{}` can reach its end without returning a value", self.func.name),
                    ));
                }
                block.insts.push(Inst::Return { value: None });
            }
        }
        let mut remap = vec![0u32; n];
        let mut next = 0u32;
        for b in 0..n {
            if reachable[b] {
                remap[b] = next;
                next += 1;
            }
        }
        let blocks = std::mem::take(&mut self.func.blocks);
        self.func.blocks = blocks
            .into_iter()
            .enumerate()
            .filter(|(b, _)| reachable[*b])
            .map(|(_, mut block)| {
                if let Some(last) = block.insts.last_mut() {
                    match last {
                        Inst::Jump { target } => *target = BlockId(remap[target.index()]),
                        Inst::Branch { then_to, else_to, .. } => {
                            *then_to = BlockId(remap[then_to.index()]);
                            *else_to = BlockId(remap[else_to.index()]);
                        }
                        _ => {}
                    }
                }
                block
            })
            .collect();
        Ok(self.func)
    }

    fn new_block(&mut self) -> BlockId {
        self.func.blocks.push(Block::default());
        BlockId(self.func.blocks.len() as u32 - 1)
    }

    fn switch_to(&mut self, b: BlockId) {
        self.cur = b.index();
    }

    fn emit(&mut self, inst: Inst) {
        if self.func.blocks[self.cur].terminator().is_some() {
            // Code after a return lands in a fresh block that nothing jumps to.
            let b = self.new_block();
            self.switch_to(b);
        }
        self.func.blocks[self.cur].insts.push(inst);
    }

    fn vreg(&mut self, ty: Type) -> VReg {
        self.func.new_vreg(ty)
    }

    fn lookup_local(&self, name: &str) -> Option<VReg> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn stmts(&mut self, body: &[Stmt]) -> Result<(), TypeError> {
        self.scopes.push(HashMap::new());
        for s in body {
            self.stmt(s)?;
        }
        self.scopes.pop();
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), TypeError> {
        match s {
            Stmt::Let { name, ty, value, pos } => {
                if is_builtin(name) {
                    return Err(TypeError::new(*pos, format!("`{name}` is a builtin")));
                }
                let (v, vt) = self.value(value)?;
                if let Some(t) = ty {
                    if *t != vt {
                        return Err(TypeError::new(*pos, format!("expected {t}, found {vt}")));
                    }
                }
                let dst = self.vreg(vt);
                self.emit(Inst::Move { dst, src: v });
                self.scopes.last_mut().expect("scope").insert(name.clone(), dst);
            }
            Stmt::Assign { target, value, pos } => self.assign(target, value, *pos)?,
            Stmt::If {
                cond,
                then_body,
                else_body,
                pos,
            } => {
                let c = self.condition(cond, *pos)?;
                let then_b = self.new_block();
                let else_b = self.new_block();
                let join = if else_body.is_some() { self.new_block() } else { else_b };
                self.emit(Inst::Branch {
                    cond: c,
                    then_to: then_b,
                    else_to: else_b,
                });
                self.switch_to(then_b);
                self.stmts(then_body)?;
                self.emit(Inst::Jump { target: join });
                if let Some(e) = else_body {
                    self.switch_to(else_b);
                    self.stmts(e)?;
                    self.emit(Inst::Jump { target: join });
                }
                self.switch_to(join);
            }
            Stmt::While { cond, body, pos } => {
                let header = self.new_block();
                self.emit(Inst::Jump { target: header });
                self.switch_to(header);
                let c = self.condition(cond, *pos)?;
                let body_b = self.new_block();
                let exit = self.new_block();
                self.emit(Inst::Branch {
                    cond: c,
                    then_to: body_b,
                    else_to: exit,
                });
                self.switch_to(body_b);
                self.stmts(body)?;
                self.emit(Inst::Jump { target: header });
                self.switch_to(exit);
            }
            Stmt::Return { value, pos } => {
                let ret = self.func.ret.clone();
                match (value, &ret) {
                    (None, Type::Void) => self.emit(Inst::Return { value: None }),
                    (Some(e), t) if *t != Type::Void => {
                        let (v, vt) = self.value(e)?;
                        if vt != *t {
                            return Err(TypeError::new(*pos, format!("expected {t}, found {vt}")));
                        }
                        self.emit(Inst::Return { value: Some(v) });
                    }
                    _ => {
                        return Err(TypeError::new(
                            *pos,
                            format!("return does not match function type {ret}"),
                        ))
                    }
                }
            }
            Stmt::Expr(e) => {
                self.expr(e)?;
            }
        }
        Ok(())
    }

    fn condition(&mut self, e: &Expr, pos: Pos) -> Result<VReg, TypeError> {
        let (v, t) = self.value(e)?;
        if t != Type::I64 {
            return Err(TypeError::new(pos, format!("condition must be i64, found {t}")));
        }
        Ok(v)
    }

    fn assign(&mut self, target: &Expr, value: &Expr, pos: Pos) -> Result<(), TypeError> {
        match &target.kind {
            ExprKind::Var(name) => {
                if let Some(local) = self.lookup_local(name) {
                    let lt = self.func.vreg_type(local).clone();
                    let (v, vt) = self.value(value)?;
                    if vt != lt {
                        return Err(TypeError::new(pos, format!("expected {lt}, found {vt}")));
                    }
                    self.emit(Inst::Move { dst: local, src: v });
                    return Ok(());
                }
                let Some(g) = self.ctx.global(name) else {
                    return Err(TypeError::new(target.pos, format!("undeclared name `{name}`")));
                };
                if matches!(g.ty, GlobalType::Array(..)) {
                    return Err(TypeError::new(pos, format!("cannot assign to array `{name}`")));
                }
                let gt = g.value_type();
                let (v, vt) = self.value(value)?;
                if vt != gt {
                    return Err(TypeError::new(pos, format!("expected {gt}, found {vt}")));
                }
                let addr = self.vreg(Type::Ptr(Elem::I64));
                self.emit(Inst::GlobalAddr {
                    dst: addr,
                    name: name.clone(),
                });
                self.emit(Inst::Store { addr, value: v });
                Ok(())
            }
            ExprKind::Index { base, index } => {
                let (addr, elem) = self.element_addr(base, index, target.pos)?;
                let (v, vt) = self.value(value)?;
                if vt != elem.scalar() {
                    return Err(TypeError::new(pos, format!("expected {}, found {vt}", elem.scalar())));
                }
                self.emit(Inst::Store { addr, value: v });
                Ok(())
            }
            _ => Err(TypeError::new(pos, "invalid assignment target")),
        }
    }

    fn element_addr(&mut self, base: &Expr, index: &Expr, pos: Pos) -> Result<(VReg, Elem), TypeError> {
        let (b, bt) = self.value(base)?;
        let Type::Ptr(elem) = bt else {
            return Err(TypeError::new(pos, format!("cannot index a value of type {bt}")));
        };
        let (i, it) = self.value(index)?;
        if it != Type::I64 {
            return Err(TypeError::new(pos, format!("index must be i64, found {it}")));
        }
        let dst = self.vreg(Type::Ptr(elem));
        self.emit(Inst::Index { dst, base: b, index: i });
        Ok((dst, elem))
    }

    /// Lowers an expression that must produce a value.
    fn value(&mut self, e: &Expr) -> Result<(VReg, Type), TypeError> {
        match self.expr(e)? {
            (Some(v), t) => Ok((v, t)),
            (None, _) => Err(TypeError::new(e.pos, "void expression used as a value")),
        }
    }

    fn konst(&mut self, c: Const) -> VReg {
        let ty = match c {
            Const::I64(_) => Type::I64,
            Const::F64(_) => Type::F64,
        };
        let dst = self.vreg(ty);
        self.emit(Inst::Const { dst, value: c });
        dst
    }

    fn expr(&mut self, e: &Expr) -> Result<Value, TypeError> {
        match &e.kind {
            ExprKind::Int(v) => Ok((Some(self.konst(Const::I64(*v))), Type::I64)),
            ExprKind::Float(v) => Ok((Some(self.konst(Const::f64(*v))), Type::F64)),
            ExprKind::Str(_) => Err(TypeError::new(
                e.pos,
                "string literals are only allowed as the first argument of print or guestasm",
            )),
            ExprKind::Var(name) => self.var(name, e.pos),
            ExprKind::Unary(op, inner) => {
                let (v, t) = self.value(inner)?;
                let (op, rt) = match (op, &t) {
                    (UnaryOp::Neg, Type::I64) => (UnOp::Neg(NumTy::I64), Type::I64),
                    (UnaryOp::Neg, Type::F64) => (UnOp::Neg(NumTy::F64), Type::F64),
                    (UnaryOp::Not, Type::I64) => (UnOp::Not, Type::I64),
                    _ => return Err(TypeError::new(e.pos, format!("invalid operand type {t}"))),
                };
                let dst = self.vreg(rt.clone());
                self.emit(Inst::Unary { op, dst, src: v });
                Ok((Some(dst), rt))
            }
            ExprKind::Binary(op, l, r) => self.binary(*op, l, r, e.pos),
            ExprKind::Call { callee, args } => self.call(callee, args, e.pos),
            ExprKind::Index { base, index } => {
                let (addr, elem) = self.element_addr(base, index, e.pos)?;
                let dst = self.vreg(elem.scalar());
                self.emit(Inst::Load { dst, addr });
                Ok((Some(dst), elem.scalar()))
            }
            ExprKind::AddrOf(inner) => match &inner.kind {
                ExprKind::Var(name) if self.lookup_local(name).is_none() => {
                    let Some(sig) = self.ctx.sigs.get(name) else {
                        return Err(TypeError::new(e.pos, format!("`{name}` is not a function")));
                    };
                    let t = Type::Fn(Box::new(sig.clone()));
                    let dst = self.vreg(t.clone());
                    self.emit(Inst::FuncAddr {
                        dst,
                        name: name.clone(),
                    });
                    Ok((Some(dst), t))
                }
                ExprKind::Index { base, index } => {
                    let (addr, elem) = self.element_addr(base, index, e.pos)?;
                    Ok((Some(addr), Type::Ptr(elem)))
                }
                _ => Err(TypeError::new(e.pos, "`&` applies to a function name or an element")),
            },
        }
    }

    fn var(&mut self, name: &str, pos: Pos) -> Result<Value, TypeError> {
        if let Some(v) = self.lookup_local(name) {
            return Ok((Some(v), self.func.vreg_type(v).clone()));
        }
        if let Some(g) = self.ctx.global(name) {
            let vt = g.value_type();
            let addr = self.vreg(match g.ty {
                GlobalType::Array(e, _) => Type::Ptr(e),
                _ => Type::Ptr(Elem::I64),
            });
            self.emit(Inst::GlobalAddr {
                dst: addr,
                name: name.to_string(),
            });
            if matches!(g.ty, GlobalType::Array(..)) {
                return Ok((Some(addr), vt));
            }
            let dst = self.vreg(vt.clone());
            self.emit(Inst::Load { dst, addr });
            return Ok((Some(dst), vt));
        }
        if self.ctx.sigs.contains_key(name) {
            return Err(TypeError::new(pos, format!("use `&{name}` to take a function's address")));
        }
        Err(TypeError::new(pos, format!("undeclared name `{name}`")))
    }

    fn binary(&mut self, op: BinaryOp, l: &Expr, r: &Expr, pos: Pos) -> Result<Value, TypeError> {
        if matches!(op, BinaryOp::And | BinaryOp::Or) {
            return self.short_circuit(op, l, r, pos);
        }
        let (a, at) = self.value(l)?;
        let (b, bt) = self.value(r)?;
        if at != bt || !at.is_numeric() {
            return Err(TypeError::new(
                pos,
                format!("operator `{}` cannot combine {at} and {bt}", op.symbol()),
            ));
        }
        let ty = at.num().expect("numeric");
        let arith = match op {
            BinaryOp::Add => Some(BinOp::Add),
            BinaryOp::Sub => Some(BinOp::Sub),
            BinaryOp::Mul => Some(BinOp::Mul),
            BinaryOp::Div => Some(BinOp::Div),
            BinaryOp::Rem => Some(BinOp::Rem),
            BinaryOp::BitAnd => Some(BinOp::And),
            BinaryOp::BitOr => Some(BinOp::Or),
            BinaryOp::BitXor => Some(BinOp::Xor),
            BinaryOp::Shl => Some(BinOp::Shl),
            BinaryOp::Shr => Some(BinOp::Shr),
            _ => None,
        };
        if let Some(bop) = arith {
            if bop.is_bitwise() && ty != NumTy::I64 {
                return Err(TypeError::new(pos, format!("operator `{}` requires i64", op.symbol())));
            }
            let dst = self.vreg(at.clone());
            self.emit(Inst::Binary {
                op: bop,
                ty,
                dst,
                lhs: a,
                rhs: b,
            });
            return Ok((Some(dst), at));
        }
        let cond = match op {
            BinaryOp::Eq => Cond::Eq,
            BinaryOp::Ne => Cond::Ne,
            BinaryOp::Lt => Cond::Lt,
            BinaryOp::Le => Cond::Le,
            BinaryOp::Gt => Cond::Gt,
            BinaryOp::Ge => Cond::Ge,
            _ => unreachable!("logical operators handled above"),
        };
        let dst = self.vreg(Type::I64);
        self.emit(Inst::Compare {
            cond,
            ty,
            dst,
            lhs: a,
            rhs: b,
        });
        Ok((Some(dst), Type::I64))
    }

    fn short_circuit(&mut self, op: BinaryOp, l: &Expr, r: &Expr, pos: Pos) -> Result<Value, TypeError> {
        let result = self.vreg(Type::I64);
        let a = self.condition(l, pos)?;
        let zero = self.konst(Const::I64(0));
        let a_bool = self.vreg(Type::I64);
        self.emit(Inst::Compare {
            cond: Cond::Ne,
            ty: NumTy::I64,
            dst: a_bool,
            lhs: a,
            rhs: zero,
        });
        self.emit(Inst::Move { dst: result, src: a_bool });
        let rhs_b = self.new_block();
        let join = self.new_block();
        let (then_to, else_to) = match op {
            BinaryOp::And => (rhs_b, join),
            _ => (join, rhs_b),
        };
        self.emit(Inst::Branch {
            cond: a_bool,
            then_to,
            else_to,
        });
        self.switch_to(rhs_b);
        let b = self.condition(r, pos)?;
        let zero = self.konst(Const::I64(0));
        self.emit(Inst::Compare {
            cond: Cond::Ne,
            ty: NumTy::I64,
            dst: result,
            lhs: b,
            rhs: zero,
        });
        self.emit(Inst::Jump { target: join });
        self.switch_to(join);
        Ok((Some(result), Type::I64))
    }

    fn call(&mut self, callee: &Expr, args: &[Expr], pos: Pos) -> Result<Value, TypeError> {
        if let ExprKind::Var(name) = &callee.kind {
            if self.lookup_local(name).is_none() {
                match name.as_str() {
                    "print" => return self.print(args, pos),
                    "guestasm" => return self.guest_asm(args, pos),
                    "exit" => {
                        let [code] = args else {
                            return Err(TypeError::new(pos, "exit takes one argument"));
                        };
                        let (v, t) = self.value(code)?;
                        if t != Type::I64 {
                            return Err(TypeError::new(pos, "exit code must be i64"));
                        }
                        self.emit(Inst::Exit { code: v });
                        return Ok((None, Type::Void));
                    }
                    "i64" | "f64" => return self.convert(name, args, pos),
                    _ => {}
                }
                if let Some(sig) = self.ctx.sigs.get(name).cloned() {
                    let argv = self.args(&sig, args, pos)?;
                    return Ok(self.emit_call(Callee::Direct(name.clone()), argv, sig));
                }
            }
        }
        let (target, t) = self.value(callee)?;
        let Type::Fn(sig) = t else {
            return Err(TypeError::new(pos, format!("cannot call a value of type {t}")));
        };
        let argv = self.args(&sig, args, pos)?;
        Ok(self.emit_call(Callee::Indirect(target), argv, *sig))
    }

    fn emit_call(&mut self, callee: Callee, args: Vec<VReg>, sig: Signature) -> Value {
        let ret = sig.ret.clone();
        let dst = (ret != Type::Void).then(|| self.vreg(ret.clone()));
        self.emit(Inst::Call { dst, callee, args, sig });
        (dst, ret)
    }

    fn args(&mut self, sig: &Signature, args: &[Expr], pos: Pos) -> Result<Vec<VReg>, TypeError> {
        if sig.params.len() != args.len() {
            return Err(TypeError::new(
                pos,
                format!("expected {} arguments, found {}", sig.params.len(), args.len()),
            ));
        }
        let mut out = Vec::with_capacity(args.len());
        for (i, (a, want)) in args.iter().zip(&sig.params).enumerate() {
            let (v, t) = self.value(a)?;
            if t != *want {
                return Err(TypeError::new(
                    a.pos,
                    format!("argument {} expected {want}, found {t}", i + 1),
                ));
            }
            out.push(v);
        }
        Ok(out)
    }

    fn convert(&mut self, name: &str, args: &[Expr], pos: Pos) -> Result<Value, TypeError> {
        let [arg] = args else {
            return Err(TypeError::new(pos, format!("{name} takes one argument")));
        };
        let (v, t) = self.value(arg)?;
        let (op, rt) = match (name, &t) {
            ("i64", Type::I64) | ("f64", Type::F64) => return Ok((Some(v), t)),
            ("i64", Type::F64) => (UnOp::FloatToInt, Type::I64),
            ("f64", Type::I64) => (UnOp::IntToFloat, Type::F64),
            _ => return Err(TypeError::new(pos, format!("cannot convert {t} with {name}"))),
        };
        let dst = self.vreg(rt.clone());
        self.emit(Inst::Unary { op, dst, src: v });
        Ok((Some(dst), rt))
    }

    fn print(&mut self, args: &[Expr], pos: Pos) -> Result<Value, TypeError> {
        let Some(Expr {
            kind: ExprKind::Str(format),
            ..
        }) = args.first()
        else {
            return Err(TypeError::new(pos, "print requires a string literal format"));
        };
        let convs = printf::conversions(format).map_err(|m| TypeError::new(pos, m))?;
        if convs.len() != args.len() - 1 {
            return Err(TypeError::new(
                pos,
                format!("format expects {} arguments, found {}", convs.len(), args.len() - 1),
            ));
        }
        let mut argv = Vec::new();
        for (conv, a) in convs.iter().zip(&args[1..]) {
            let (v, t) = self.value(a)?;
            if t.num() != Some(conv.arg_type()) {
                return Err(TypeError::new(a.pos, format!("format conversion does not accept {t}")));
            }
            argv.push(v);
        }
        self.emit(Inst::Print {
            format: format.clone(),
            args: argv,
        });
        Ok((None, Type::Void))
    }

    fn guest_asm(&mut self, args: &[Expr], pos: Pos) -> Result<Value, TypeError> {
        let [Expr {
            kind: ExprKind::Str(op),
            ..
        }] = args
        else {
            return Err(TypeError::new(pos, "guestasm takes one string literal"));
        };
        if guest_asm_code(op).is_none() {
            return Err(TypeError::new(pos, format!("unknown guest intrinsic `{op}`")));
        }
        let dst = self.vreg(Type::I64);
        self.emit(Inst::GuestAsm {
            dst: Some(dst),
            op: op.clone(),
        });
        Ok((Some(dst), Type::I64))
    }
}
