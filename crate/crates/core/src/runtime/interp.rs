//! The guest instruction loop.

use std::sync::Arc;

use super::Runtime;
use crate::fault::{FaultKind, GuestFault, Trap};
use crate::frontend::ir::BinOp;
use crate::guest::isa::{cond_from_code, hcall, Instr, Op, ARG0, LR, SP};
use crate::semantics::{float_binop, float_cmp, guest_asm_result, int_binop, int_cmp};

/// Longest format string a print hypercall may reference.
const MAX_FORMAT: u64 = 1 << 16;

/// Code of one image, decoded once at load.
pub(super) type Decoded = Arc<[Option<Instr>]>;

pub(super) fn decode_all(code: &[u8]) -> Decoded {
    code.chunks_exact(8)
        .map(|w| Instr::decode(u64::from_le_bytes(w.try_into().unwrap())))
        .collect()
}

#[cold]
fn trap(kind: FaultKind, pc: u64) -> Trap {
    Trap::Fault(GuestFault::at(kind, pc))
}

#[cold]
fn mem_trap(e: GuestFault, pc: u64) -> Trap {
    Trap::Fault(GuestFault { pc: Some(pc), ..e })
}

impl Runtime {
    /// Interprets from `self.pc` until control returns to `sentinel`.
    pub(super) fn emulate(&mut self, sentinel: u64) -> Result<(), Trap> {
        let mut n = self.counters.interpreted_instructions;
        let r = self.interpret(sentinel, &mut n);
        self.counters.interpreted_instructions = n;
        r
    }

    /// The dispatch loop. `n` is the running instruction count; it is written
    /// back to the counters around hypercalls, which may nest emulation.
    fn interpret(&mut self, sentinel: u64, n: &mut u64) -> Result<(), Trap> {
        let (mut lo, mut hi, mut img) = self.cur_code;
        let mut code: Decoded = if hi > lo { self.images[img].decoded.clone() } else { Arc::from([]) };
        let budget = self.budget;
        let mut pc = self.pc;
        loop {
            let mut off = pc.wrapping_sub(lo);
            if off >= hi - lo {
                if pc == sentinel {
                    self.pc = pc;
                    return Ok(());
                }
                let Some(k) = self.images.iter().position(|i| pc >= i.base && pc < i.code_end) else {
                    self.pc = pc;
                    return Err(trap(FaultKind::BadJump { addr: pc }, pc));
                };
                img = k;
                lo = self.images[k].base;
                hi = self.images[k].code_end;
                code = self.images[k].decoded.clone();
                self.cur_code = (lo, hi, img);
                off = pc - lo;
            }
            if off & 7 != 0 {
                self.pc = pc;
                return Err(trap(FaultKind::BadJump { addr: pc }, pc));
            }
            let Some(i) = code[(off >> 3) as usize] else {
                self.pc = pc;
                let word = self.mem.read_u64(pc).unwrap_or(0);
                return Err(trap(FaultKind::BadInstruction { addr: pc, word }, pc));
            };
            if *n >= budget {
                self.pc = pc;
                return Err(trap(
                    FaultKind::InstructionBudget {
                        budget: self.config.budget,
                    },
                    pc,
                ));
            }
            *n += 1;
            let rd = (i.rd & 15) as usize;
            let a = self.regs[(i.rs1 & 15) as usize];
            let b = self.regs[(i.rs2 & 15) as usize];
            let imm = i.imm as i64 as u64;
            let mut next = pc + 8;
            match i.op {
                Op::Nop => {}
                Op::Movi => self.regs[rd] = imm,
                Op::Movhi => self.regs[rd] = (self.regs[rd] & 0xFFFF_FFFF) | ((i.imm as u32 as u64) << 32),
                Op::Mov => self.regs[rd] = a,
                Op::Add => self.regs[rd] = a.wrapping_add(b),
                Op::Sub => self.regs[rd] = a.wrapping_sub(b),
                Op::Mul => self.regs[rd] = a.wrapping_mul(b),
                Op::Div | Op::Rem => {
                    let op = if i.op == Op::Div { BinOp::Div } else { BinOp::Rem };
                    match int_binop(op, a as i64, b as i64) {
                        Ok(v) => self.regs[rd] = v as u64,
                        Err(_) => {
                            self.pc = pc;
                            return Err(trap(FaultKind::DivideByZero, pc));
                        }
                    }
                }
                Op::And => self.regs[rd] = a & b,
                Op::Or => self.regs[rd] = a | b,
                Op::Xor => self.regs[rd] = a ^ b,
                Op::Shl => self.regs[rd] = a.wrapping_shl((b & 63) as u32),
                Op::Shr => self.regs[rd] = (a as i64).wrapping_shr((b & 63) as u32) as u64,
                Op::Addi => {
                    let v = a.wrapping_add(imm);
                    if rd == SP as usize && v < self.stack_limit {
                        self.pc = pc;
                        return Err(trap(FaultKind::StackOverflow, pc));
                    }
                    self.regs[rd] = v;
                }
                Op::Shli => self.regs[rd] = a.wrapping_shl(i.imm as u32 & 63),
                Op::Fadd => self.regs[rd] = float_binop(BinOp::Add, f64::from_bits(a), f64::from_bits(b)).to_bits(),
                Op::Fsub => self.regs[rd] = float_binop(BinOp::Sub, f64::from_bits(a), f64::from_bits(b)).to_bits(),
                Op::Fmul => self.regs[rd] = float_binop(BinOp::Mul, f64::from_bits(a), f64::from_bits(b)).to_bits(),
                Op::Fdiv => self.regs[rd] = float_binop(BinOp::Div, f64::from_bits(a), f64::from_bits(b)).to_bits(),
                Op::Frem => self.regs[rd] = float_binop(BinOp::Rem, f64::from_bits(a), f64::from_bits(b)).to_bits(),
                Op::Neg => self.regs[rd] = (a as i64).wrapping_neg() as u64,
                Op::Fneg => self.regs[rd] = (-f64::from_bits(a)).to_bits(),
                Op::Not => self.regs[rd] = (a == 0) as u64,
                Op::Itof => self.regs[rd] = (a as i64 as f64).to_bits(),
                Op::Ftoi => self.regs[rd] = f64::from_bits(a) as i64 as u64,
                Op::Cmp | Op::Fcmp => {
                    let Some(c) = cond_from_code(i.imm) else {
                        self.pc = pc;
                        return Err(trap(FaultKind::BadInstruction { addr: pc, word: i.encode() }, pc));
                    };
                    self.regs[rd] = match i.op {
                        Op::Cmp => int_cmp(c, a as i64, b as i64),
                        _ => float_cmp(c, f64::from_bits(a), f64::from_bits(b)),
                    } as u64;
                }
                Op::Ld => match self.mem.read_u64(a.wrapping_add(imm)) {
                    Ok(v) => self.regs[rd] = v,
                    Err(e) => {
                        self.pc = pc;
                        return Err(mem_trap(e, pc));
                    }
                },
                Op::St => {
                    if let Err(e) = self.mem.write_u64(a.wrapping_add(imm), self.regs[rd]) {
                        self.pc = pc;
                        return Err(mem_trap(e, pc));
                    }
                }
                Op::Lea => self.regs[rd] = pc.wrapping_add(imm),
                Op::Jmp => next = pc.wrapping_add(imm),
                Op::Bnz => {
                    if a != 0 {
                        next = pc.wrapping_add(imm);
                    }
                }
                Op::Bz => {
                    if a == 0 {
                        next = pc.wrapping_add(imm);
                    }
                }
                Op::Call => {
                    self.regs[LR as usize] = pc + 8;
                    next = pc.wrapping_add(imm);
                }
                Op::Callr => {
                    self.regs[LR as usize] = pc + 8;
                    next = a;
                }
                Op::Ret => next = self.regs[LR as usize],
                Op::Hcall => {
                    self.pc = pc;
                    self.counters.interpreted_instructions = *n;
                    let r = self.hypercall(i.imm, pc, img, sentinel);
                    *n = self.counters.interpreted_instructions;
                    match r {
                        Ok(Some(to)) => next = to,
                        Ok(None) => {}
                        Err(t) => {
                            self.pc = pc;
                            return Err(t);
                        }
                    }
                }
                Op::Gasm => match guest_asm_result(i.imm as u32) {
                    Some(v) => self.regs[rd] = v as u64,
                    None => {
                        self.pc = pc;
                        return Err(trap(FaultKind::BadInstruction { addr: pc, word: i.encode() }, pc));
                    }
                },
            }
            pc = next;
        }
    }

    /// Services `HCALL number`. Returns a pc to continue at instead of the
    /// next instruction, if any.
    fn hypercall(&mut self, number: i32, pc: u64, img: usize, sentinel: u64) -> Result<Option<u64>, Trap> {
        let arg = |k: u8| self.regs[(ARG0 + k) as usize];
        match number {
            hcall::PRINT => {
                let (fmt_at, n, args_at) = (arg(0), arg(1), arg(2));
                let format = match self.mem.read_cstr(fmt_at, MAX_FORMAT) {
                    Ok(s) => String::from_utf8_lossy(s).into_owned(),
                    Err(e) => return Err(mem_trap(e, pc)),
                };
                let mut args = Vec::with_capacity(n.min(256) as usize);
                for k in 0..n.min(256) {
                    args.push(self.mem.read_u64(args_at.wrapping_add(8 * k)).map_err(|e| mem_trap(e, pc))?);
                }
                crate::printf::render(&format, &args, &mut self.output);
                Ok(None)
            }
            hcall::EXIT => Err(Trap::Exit(arg(0) as i64)),
            // Faults raised in host code keep `pc: None`.
            hcall::TRAMPOLINE => self.trampoline_in(arg(0), img).map(|()| None),
            hcall::SENTINEL if self.regs[LR as usize] == sentinel => Ok(Some(sentinel)),
            number => Err(trap(FaultKind::BadHypercall { number: number as u32 }, pc)),
        }
    }
}
