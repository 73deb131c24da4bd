//! IR to guest bytecode.
//!
//! Deliberately unoptimised: every virtual register lives in a frame slot at
//! `fp - 8 * (v + 1)` and each IR instruction loads its operands into scratch
//! registers, operates, and stores the result back. This is the emulation
//! baseline host execution is compared against.
//!
//! Frame layout after the prologue:
//!
//! ```text
//! fp + 16 + 8k   stack-passed argument 6 + k
//! fp + 8         saved lr
//! fp + 0         saved fp
//! fp - 8(v+1)    slot of virtual register v
//! ```

use std::collections::HashSet;

use thiserror::Error;

use super::isa::{hcall, Instr, Op, ARG0, ARG_REGS, FP, LR, R0, SP, T0, T1};
use crate::frontend::ir::{BinOp, Callee, Const, FunctionIR, Inst, NumTy, UnOp, VReg};
use crate::semantics::guest_asm_code;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum LoweringError {
    #[error("function `{function}`: frame of {slots} slots is too large")]
    FrameTooLarge { function: String, slots: usize },
    #[error("function `{function}`: unknown guestasm operation `{op}`")]
    UnknownGuestAsm { function: String, op: String },
    #[error("function `{function}`: bitwise operation on f64")]
    FloatBitwise { function: String },
}

/// Symbolic target patched by the linker into a pc-relative immediate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Reloc {
    Block(u32),
    Func(String),
    Global(String),
    /// Index into the body's string list.
    Str(usize),
    /// Load-time slot holding the absolute address of a symbol.
    Slot(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CodeBody {
    pub code: Vec<Instr>,
    pub relocs: Vec<(usize, Reloc)>,
    /// Instruction index where each IR block starts.
    pub blocks: Vec<usize>,
    /// NUL-terminated at link time.
    pub strings: Vec<String>,
}

impl CodeBody {
    pub(crate) fn emit(&mut self, op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32) {
        self.code.push(Instr::new(op, rd, rs1, rs2, imm));
    }

    fn emit_reloc(&mut self, op: Op, rd: u8, rs1: u8, target: Reloc) {
        self.relocs.push((self.code.len(), target));
        self.emit(op, rd, rs1, 0, 0);
    }

    pub(crate) fn load_const(&mut self, rd: u8, bits: u64) {
        let v = bits as i64;
        self.emit(Op::Movi, rd, 0, 0, v as i32);
        if v != v as i32 as i64 {
            self.emit(Op::Movhi, rd, 0, 0, (bits >> 32) as i32);
        }
    }
}

fn slot(v: VReg) -> i32 {
    -8 * (v.0 as i32 + 1)
}

struct Lowerer<'a> {
    f: &'a FunctionIR,
    locals: &'a HashSet<String>,
    out: CodeBody,
}

impl Lowerer<'_> {
    fn ld(&mut self, r: u8, v: VReg) {
        self.out.emit(Op::Ld, r, FP, 0, slot(v));
    }

    fn st(&mut self, r: u8, v: VReg) {
        self.out.emit(Op::St, r, FP, 0, slot(v));
    }

    fn prologue(&mut self) {
        let o = &mut self.out;
        o.emit(Op::Addi, SP, SP, 0, -16);
        o.emit(Op::St, LR, SP, 0, 8);
        o.emit(Op::St, FP, SP, 0, 0);
        o.emit(Op::Mov, FP, SP, 0, 0);
        let frame = 8 * self.f.vreg_types.len() as i32;
        if frame > 0 {
            o.emit(Op::Addi, SP, SP, 0, -frame);
        }
        for k in 0..self.f.params.len() {
            let v = VReg(k as u32);
            if k < ARG_REGS {
                self.st(ARG0 + k as u8, v);
            } else {
                self.out.emit(Op::Ld, T0, FP, 0, 16 + 8 * (k - ARG_REGS) as i32);
                self.st(T0, v);
            }
        }
    }

    fn epilogue(&mut self) {
        let o = &mut self.out;
        o.emit(Op::Mov, SP, FP, 0, 0);
        o.emit(Op::Ld, FP, SP, 0, 0);
        o.emit(Op::Ld, LR, SP, 0, 8);
        o.emit(Op::Addi, SP, SP, 0, 16);
        o.emit(Op::Ret, 0, 0, 0, 0);
    }

    fn call(&mut self, dst: Option<VReg>, callee: &Callee, args: &[VReg]) {
        let stacked = args.len().saturating_sub(ARG_REGS) as i32;
        if stacked > 0 {
            self.out.emit(Op::Addi, SP, SP, 0, -8 * stacked);
            for (k, a) in args[ARG_REGS..].iter().enumerate() {
                self.ld(T0, *a);
                self.out.emit(Op::St, T0, SP, 0, 8 * k as i32);
            }
        }
        for (k, a) in args.iter().take(ARG_REGS).enumerate() {
            self.ld(ARG0 + k as u8, *a);
        }
        match callee {
            Callee::Direct(name) if self.locals.contains(name) => {
                self.out.emit_reloc(Op::Call, 0, 0, Reloc::Func(name.clone()));
            }
            Callee::Direct(name) => {
                self.out.emit_reloc(Op::Lea, T0, 0, Reloc::Slot(name.clone()));
                self.out.emit(Op::Ld, T0, T0, 0, 0);
                self.out.emit(Op::Callr, 0, T0, 0, 0);
            }
            Callee::Indirect(r) => {
                self.ld(T0, *r);
                self.out.emit(Op::Callr, 0, T0, 0, 0);
            }
        }
        if stacked > 0 {
            self.out.emit(Op::Addi, SP, SP, 0, 8 * stacked);
        }
        if let Some(d) = dst {
            self.st(R0, d);
        }
    }

    fn inst(&mut self, inst: &Inst, next_block: Option<u32>) -> Result<(), LoweringError> {
        match inst {
            Inst::Const { dst, value } => {
                let bits = match value {
                    Const::I64(v) => *v as u64,
                    Const::F64(b) => *b,
                };
                self.out.load_const(T0, bits);
                self.st(T0, *dst);
            }
            Inst::Move { dst, src } => {
                self.ld(T0, *src);
                self.st(T0, *dst);
            }
            Inst::Binary { op, ty, dst, lhs, rhs } => {
                let opc = match (ty, op) {
                    (NumTy::I64, BinOp::Add) => Op::Add,
                    (NumTy::I64, BinOp::Sub) => Op::Sub,
                    (NumTy::I64, BinOp::Mul) => Op::Mul,
                    (NumTy::I64, BinOp::Div) => Op::Div,
                    (NumTy::I64, BinOp::Rem) => Op::Rem,
                    (NumTy::I64, BinOp::And) => Op::And,
                    (NumTy::I64, BinOp::Or) => Op::Or,
                    (NumTy::I64, BinOp::Xor) => Op::Xor,
                    (NumTy::I64, BinOp::Shl) => Op::Shl,
                    (NumTy::I64, BinOp::Shr) => Op::Shr,
                    (NumTy::F64, BinOp::Add) => Op::Fadd,
                    (NumTy::F64, BinOp::Sub) => Op::Fsub,
                    (NumTy::F64, BinOp::Mul) => Op::Fmul,
                    (NumTy::F64, BinOp::Div) => Op::Fdiv,
                    (NumTy::F64, BinOp::Rem) => Op::Frem,
                    (NumTy::F64, _) => {
                        return Err(LoweringError::FloatBitwise {
                            function: self.f.name.clone(),
                        })
                    }
                };
                self.ld(T0, *lhs);
                self.ld(T1, *rhs);
                self.out.emit(opc, T0, T0, T1, 0);
                self.st(T0, *dst);
            }
            Inst::Compare { cond, ty, dst, lhs, rhs } => {
                let opc = match ty {
                    NumTy::I64 => Op::Cmp,
                    NumTy::F64 => Op::Fcmp,
                };
                self.ld(T0, *lhs);
                self.ld(T1, *rhs);
                self.out.emit(opc, T0, T0, T1, super::isa::cond_code(*cond));
                self.st(T0, *dst);
            }
            Inst::Unary { op, dst, src } => {
                let opc = match op {
                    UnOp::Neg(NumTy::I64) => Op::Neg,
                    UnOp::Neg(NumTy::F64) => Op::Fneg,
                    UnOp::Not => Op::Not,
                    UnOp::IntToFloat => Op::Itof,
                    UnOp::FloatToInt => Op::Ftoi,
                };
                self.ld(T0, *src);
                self.out.emit(opc, T0, T0, 0, 0);
                self.st(T0, *dst);
            }
            Inst::Load { dst, addr } => {
                self.ld(T0, *addr);
                self.out.emit(Op::Ld, T0, T0, 0, 0);
                self.st(T0, *dst);
            }
            Inst::Store { addr, value } => {
                self.ld(T0, *addr);
                self.ld(T1, *value);
                self.out.emit(Op::St, T1, T0, 0, 0);
            }
            Inst::Index { dst, base, index } => {
                self.ld(T0, *base);
                self.ld(T1, *index);
                self.out.emit(Op::Shli, T1, T1, 0, 3);
                self.out.emit(Op::Add, T0, T0, T1, 0);
                self.st(T0, *dst);
            }
            Inst::GlobalAddr { dst, name } => {
                self.out.emit_reloc(Op::Lea, T0, 0, Reloc::Global(name.clone()));
                self.st(T0, *dst);
            }
            Inst::FuncAddr { dst, name } => {
                if self.locals.contains(name) {
                    self.out.emit_reloc(Op::Lea, T0, 0, Reloc::Func(name.clone()));
                } else {
                    self.out.emit_reloc(Op::Lea, T0, 0, Reloc::Slot(name.clone()));
                    self.out.emit(Op::Ld, T0, T0, 0, 0);
                }
                self.st(T0, *dst);
            }
            Inst::Call { dst, callee, args, .. } => self.call(*dst, callee, args),
            Inst::Print { format, args } => {
                let n = args.len() as i32;
                if n > 0 {
                    self.out.emit(Op::Addi, SP, SP, 0, -8 * n);
                    for (k, a) in args.iter().enumerate() {
                        self.ld(T0, *a);
                        self.out.emit(Op::St, T0, SP, 0, 8 * k as i32);
                    }
                }
                let s = self.out.strings.len();
                self.out.strings.push(format.clone());
                self.out.emit_reloc(Op::Lea, ARG0, 0, Reloc::Str(s));
                self.out.emit(Op::Movi, ARG0 + 1, 0, 0, n);
                self.out.emit(Op::Mov, ARG0 + 2, SP, 0, 0);
                self.out.emit(Op::Hcall, 0, 0, 0, hcall::PRINT);
                if n > 0 {
                    self.out.emit(Op::Addi, SP, SP, 0, 8 * n);
                }
            }
            Inst::GuestAsm { dst, op } => {
                let code = guest_asm_code(op).ok_or_else(|| LoweringError::UnknownGuestAsm {
                    function: self.f.name.clone(),
                    op: op.clone(),
                })?;
                self.out.emit(Op::Gasm, T0, 0, 0, code as i32);
                if let Some(d) = dst {
                    self.st(T0, *d);
                }
            }
            Inst::Exit { code } => {
                self.ld(ARG0, *code);
                self.out.emit(Op::Hcall, 0, 0, 0, hcall::EXIT);
            }
            Inst::Jump { target } => {
                if Some(target.0) != next_block {
                    self.out.emit_reloc(Op::Jmp, 0, 0, Reloc::Block(target.0));
                }
            }
            Inst::Branch { cond, then_to, else_to } => {
                self.ld(T0, *cond);
                if Some(then_to.0) == next_block {
                    self.out.emit_reloc(Op::Bz, 0, T0, Reloc::Block(else_to.0));
                } else {
                    self.out.emit_reloc(Op::Bnz, 0, T0, Reloc::Block(then_to.0));
                    if Some(else_to.0) != next_block {
                        self.out.emit_reloc(Op::Jmp, 0, 0, Reloc::Block(else_to.0));
                    }
                }
            }
            Inst::Return { value } => {
                match value {
                    Some(v) => self.ld(R0, *v),
                    None => self.out.emit(Op::Movi, R0, 0, 0, 0),
                }
                self.epilogue();
            }
        }
        Ok(())
    }
}

/// Lowers one function. `locals` names the functions defined in the same
/// image; calls to anything else go through a load-time address slot.
pub fn lower_function(f: &FunctionIR, locals: &HashSet<String>) -> Result<CodeBody, LoweringError> {
    if f.vreg_types.len() > (i32::MAX as usize / 8) - 1 {
        return Err(LoweringError::FrameTooLarge {
            function: f.name.clone(),
            slots: f.vreg_types.len(),
        });
    }
    let mut l = Lowerer {
        f,
        locals,
        out: CodeBody::default(),
    };
    l.prologue();
    for (b, block) in f.blocks.iter().enumerate() {
        l.out.blocks.push(l.out.code.len());
        let next = (b + 1 < f.blocks.len()).then_some(b as u32 + 1);
        for inst in &block.insts {
            l.inst(inst, next)?;
        }
    }
    Ok(l.out)
}
