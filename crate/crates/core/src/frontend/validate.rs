use std::collections::HashSet;
use std::fmt;

use super::ir::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    TypeError,
    CfgError,
    NameError,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub function: Option<String>,
    pub site: Option<Site>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.kind)?;
        if let Some(func) = &self.function {
            write!(f, " in {func}")?;
        }
        if let Some(s) = self.site {
            write!(f, " at {s}")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Checks module invariants. Returns one diagnostic per violation, in module
/// order; an empty list means the module is well formed.
pub fn validate(m: &TypedModule) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut names = HashSet::new();
    let all_names = m
        .globals
        .iter()
        .map(|g| &g.name)
        .chain(m.functions.iter().map(|f| &f.name))
        .chain(m.externs.iter().map(|e| &e.name));
    for n in all_names {
        if !names.insert(n.as_str()) {
            out.push(Diagnostic {
                kind: DiagnosticKind::NameError,
                function: None,
                site: None,
                message: format!("duplicate name `{n}`"),
            });
        }
    }
    if let Some(e) = &m.entry {
        if m.function(e).is_none() {
            out.push(Diagnostic {
                kind: DiagnosticKind::NameError,
                function: None,
                site: None,
                message: format!("entry `{e}` is not a function"),
            });
        }
    }
    for g in &m.globals {
        if let GlobalInit::Func(name) = &g.init {
            if m.callee_signature(name).as_ref() != g.fn_sig.as_ref() {
                out.push(Diagnostic {
                    kind: DiagnosticKind::TypeError,
                    function: None,
                    site: None,
                    message: format!("global `{}` initializer `{name}` has the wrong signature", g.name),
                });
            }
        }
    }
    for f in &m.functions {
        validate_function(m, f, &mut out);
    }
    out
}

fn validate_function(m: &TypedModule, f: &FunctionIR, out: &mut Vec<Diagnostic>) {
    let diag = |kind, site: Option<Site>, message: String| Diagnostic {
        kind,
        function: Some(f.name.clone()),
        site,
        message,
    };

    if f.blocks.is_empty() {
        out.push(diag(DiagnosticKind::CfgError, None, "function has no blocks".into()));
        return;
    }
    for (i, p) in f.params.iter().enumerate() {
        if f.vreg_types.get(i) != Some(&p.ty) {
            out.push(diag(
                DiagnosticKind::TypeError,
                None,
                format!("parameter `{}` does not occupy v{i} with type {}", p.name, p.ty),
            ));
        }
    }
    let nregs = f.vreg_types.len();
    let nblocks = f.blocks.len();
    let ty = |r: VReg| f.vreg_types.get(r.index());

    for (b, block) in f.blocks.iter().enumerate() {
        let block_id = BlockId(b as u32);
        let term_count = block.insts.iter().filter(|i| i.is_terminator()).count();
        let ends_with_term = block.insts.last().is_some_and(|i| i.is_terminator());
        if term_count != 1 || !ends_with_term {
            out.push(diag(
                DiagnosticKind::CfgError,
                Some(Site {
                    block: block_id,
                    index: 0,
                }),
                format!("block must end in exactly one terminator, found {term_count}"),
            ));
        }
        for (i, inst) in block.insts.iter().enumerate() {
            let site = Some(Site {
                block: block_id,
                index: i,
            });
            let regs = inst.uses().into_iter().chain(inst.def());
            if let Some(bad) = regs.clone().find(|r| r.index() >= nregs) {
                out.push(diag(DiagnosticKind::CfgError, site, format!("unknown register {bad}")));
                continue;
            }
            for t in inst.successors() {
                if t.index() >= nblocks {
                    out.push(diag(DiagnosticKind::CfgError, site, format!("branch to missing block {t}")));
                }
            }
            match inst {
                Inst::Call { dst, callee, args, sig } => {
                    match callee {
                        Callee::Direct(name) => match m.callee_signature(name) {
                            None => out.push(diag(
                                DiagnosticKind::NameError,
                                site,
                                format!("call to undeclared function `{name}`"),
                            )),
                            Some(decl) if decl != *sig => out.push(diag(
                                DiagnosticKind::TypeError,
                                site,
                                format!("call signature {sig} does not match `{name}`: {decl}"),
                            )),
                            Some(_) => {}
                        },
                        Callee::Indirect(r) => {
                            if ty(*r) != Some(&Type::Fn(Box::new(sig.clone()))) {
                                out.push(diag(
                                    DiagnosticKind::TypeError,
                                    site,
                                    format!("indirect call through {r} does not have type {sig}"),
                                ));
                            }
                        }
                    }
                    if args.len() != sig.params.len() {
                        out.push(diag(
                            DiagnosticKind::TypeError,
                            site,
                            format!("call passes {} arguments to a {}-parameter function", args.len(), sig.params.len()),
                        ));
                    } else if let Some((k, _)) = args
                        .iter()
                        .zip(&sig.params)
                        .enumerate()
                        .find(|(_, (a, p))| ty(**a) != Some(*p))
                    {
                        out.push(diag(
                            DiagnosticKind::TypeError,
                            site,
                            format!("argument {} has the wrong type", k + 1),
                        ));
                    }
                    match (dst, &sig.ret) {
                        (None, Type::Void) => {}
                        (Some(d), t) if ty(*d) == Some(t) => {}
                        _ => out.push(diag(
                            DiagnosticKind::TypeError,
                            site,
                            "call result register does not match the return type".into(),
                        )),
                    }
                }
                Inst::GlobalAddr { name, .. } => {
                    if m.global(name).is_none() {
                        out.push(diag(DiagnosticKind::NameError, site, format!("unknown global `{name}`")));
                    }
                }
                Inst::FuncAddr { name, .. } => {
                    if m.callee_signature(name).is_none() {
                        out.push(diag(DiagnosticKind::NameError, site, format!("unknown function `{name}`")));
                    }
                }
                Inst::Return { value } => {
                    let ok = match value {
                        None => f.ret == Type::Void,
                        Some(v) => ty(*v) == Some(&f.ret),
                    };
                    if !ok {
                        out.push(diag(
                            DiagnosticKind::TypeError,
                            site,
                            format!("return does not match type {}", f.ret),
                        ));
                    }
                }
                Inst::Binary { ty: nt, dst, lhs, rhs, .. } | Inst::Compare { ty: nt, dst, lhs, rhs, .. } => {
                    let want = match nt {
                        NumTy::I64 => Type::I64,
                        NumTy::F64 => Type::F64,
                    };
                    if ty(*lhs) != Some(&want) || ty(*rhs) != Some(&want) {
                        out.push(diag(DiagnosticKind::TypeError, site, "operand type mismatch".into()));
                    }
                    let dst_want = if matches!(inst, Inst::Compare { .. }) { Type::I64 } else { want };
                    if ty(*dst) != Some(&dst_want) {
                        out.push(diag(DiagnosticKind::TypeError, site, "result type mismatch".into()));
                    }
                }
                _ => {}
            }
        }
    }
}
