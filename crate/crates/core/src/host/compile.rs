//! Host-executable function bodies.
//!
//! A [`HostFunction`] is the IR flattened into a compact operation list and
//! evaluated directly over host-local registers. It stands in for natively
//! compiled code: there is no guest fetch, decode or register file, and the
//! only contact with the emulated world is guest memory and out-calls.

use std::sync::Arc;

use thiserror::Error;

use super::grt::{references, RefSpec};
use crate::fault::{FaultKind, GuestFault, Trap};
use crate::frontend::ir::{BinOp, Callee, Cond, FunctionIR, Inst, NumTy, Signature, Site, Type, UnOp};
use crate::semantics::{float_binop, float_cmp, guest_asm_code, guest_asm_result, int_binop, int_cmp};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HostMode {
    /// Guest-bound instructions are rejected.
    Offload,
    /// Guest-bound instructions are serviced by the host environment.
    Native,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CompileError {
    #[error("`{function}` contains a guest-bound instruction at {site}")]
    GuestBound { function: String, site: Site },
    #[error("`{function}`: unknown guestasm operation `{op}`")]
    UnknownGuestAsm { function: String, op: String },
}

/// A value crossing the guest/host boundary, tagged by ABI class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    I64(i64),
    F64(f64),
    Ptr(u64),
    FnPtr(u64),
    Void,
}

impl Value {
    /// The 64-bit pattern the value occupies in a guest register or slot.
    pub fn bits(self) -> u64 {
        match self {
            Value::I64(v) => v as u64,
            Value::F64(v) => v.to_bits(),
            Value::Ptr(a) | Value::FnPtr(a) => a,
            Value::Void => 0,
        }
    }

    pub fn from_bits(ty: &Type, bits: u64) -> Value {
        match ty {
            Type::I64 => Value::I64(bits as i64),
            Type::F64 => Value::F64(f64::from_bits(bits)),
            Type::Ptr(_) => Value::Ptr(bits),
            Type::Fn(_) => Value::FnPtr(bits),
            Type::Void => Value::Void,
        }
    }

    /// Bitwise equality, so NaN payloads compare exactly.
    pub fn same(self, other: Value) -> bool {
        std::mem::discriminant(&self) == std::mem::discriminant(&other) && self.bits() == other.bits()
    }
}

/// Services a host body needs from the runtime.
pub trait HostEnv {
    fn load(&mut self, addr: u64) -> Result<u64, GuestFault>;
    fn store(&mut self, addr: u64, value: u64) -> Result<(), GuestFault>;
    /// Calls the guest-visible function at `target`. The runtime decides
    /// between a direct host call and re-entering emulation.
    fn out_call(&mut self, target: u64, args: &[Value], sig: &Signature) -> Result<Value, Trap>;
    /// Formatted output; only native-mode bodies issue it.
    fn print(&mut self, format: &str, args: &[u64]) -> Result<(), Trap>;
}

type R = u32;

#[derive(Clone, Debug)]
enum HOp {
    Const { dst: R, bits: u64 },
    Mov { dst: R, src: R },
    IBin { op: BinOp, dst: R, a: R, b: R },
    FBin { op: BinOp, dst: R, a: R, b: R },
    ICmp { cond: Cond, dst: R, a: R, b: R },
    FCmp { cond: Cond, dst: R, a: R, b: R },
    Un { op: UnOp, dst: R, src: R },
    Load { dst: R, addr: R },
    Store { addr: R, value: R },
    Index { dst: R, base: R, index: R },
    /// Address of reference `slot` in the function's reference list.
    Ref { dst: R, slot: u32 },
    CallRef { dst: Option<R>, slot: u32, args: Box<[R]>, sig: u32 },
    CallReg { dst: Option<R>, target: R, args: Box<[R]>, sig: u32 },
    Print { format: u32, args: Box<[R]> },
    Set { dst: R, value: i64 },
    Exit { code: R },
    Jump { to: u32 },
    Branch { cond: R, then_to: u32, else_to: u32 },
    Return { value: R },
    ReturnVoid,
    Nop,
}

#[derive(Clone, Debug)]
pub struct HostFunction {
    pub name: String,
    pub sig: Signature,
    pub refs: Vec<RefSpec>,
    nregs: usize,
    reg_types: Vec<Type>,
    ops: Vec<HOp>,
    sigs: Vec<Signature>,
    strings: Vec<String>,
}

pub fn compile_host(f: &FunctionIR, mode: HostMode) -> Result<HostFunction, CompileError> {
    let refs = references(f);
    let slot_of = |name: &str| refs.iter().position(|r| r.name == name).expect("reference collected") as u32;
    let mut block_start = Vec::with_capacity(f.blocks.len());
    let mut n = 0u32;
    for b in &f.blocks {
        block_start.push(n);
        n += b.insts.len() as u32;
    }
    let mut sigs: Vec<Signature> = Vec::new();
    let mut sig_id = |s: &Signature| -> u32 {
        match sigs.iter().position(|x| x == s) {
            Some(i) => i as u32,
            None => {
                sigs.push(s.clone());
                sigs.len() as u32 - 1
            }
        }
    };
    let mut strings = Vec::new();
    let mut ops = Vec::with_capacity(n as usize);
    for (site, inst) in f.sites() {
        if inst.is_guest_bound() && mode == HostMode::Offload {
            return Err(CompileError::GuestBound {
                function: f.name.clone(),
                site,
            });
        }
        let regs = |v: &[crate::frontend::ir::VReg]| v.iter().map(|r| r.0).collect::<Box<[R]>>();
        let op = match inst {
            Inst::Const { dst, value } => HOp::Const {
                dst: dst.0,
                bits: value.bits(),
            },
            Inst::Move { dst, src } => HOp::Mov { dst: dst.0, src: src.0 },
            Inst::Binary { op, ty: NumTy::I64, dst, lhs, rhs } => HOp::IBin {
                op: *op,
                dst: dst.0,
                a: lhs.0,
                b: rhs.0,
            },
            Inst::Binary { op, ty: NumTy::F64, dst, lhs, rhs } => HOp::FBin {
                op: *op,
                dst: dst.0,
                a: lhs.0,
                b: rhs.0,
            },
            Inst::Compare { cond, ty: NumTy::I64, dst, lhs, rhs } => HOp::ICmp {
                cond: *cond,
                dst: dst.0,
                a: lhs.0,
                b: rhs.0,
            },
            Inst::Compare { cond, ty: NumTy::F64, dst, lhs, rhs } => HOp::FCmp {
                cond: *cond,
                dst: dst.0,
                a: lhs.0,
                b: rhs.0,
            },
            Inst::Unary { op, dst, src } => HOp::Un {
                op: *op,
                dst: dst.0,
                src: src.0,
            },
            Inst::Load { dst, addr } => HOp::Load { dst: dst.0, addr: addr.0 },
            Inst::Store { addr, value } => HOp::Store {
                addr: addr.0,
                value: value.0,
            },
            Inst::Index { dst, base, index } => HOp::Index {
                dst: dst.0,
                base: base.0,
                index: index.0,
            },
            Inst::GlobalAddr { dst, name } | Inst::FuncAddr { dst, name } => HOp::Ref {
                dst: dst.0,
                slot: slot_of(name),
            },
            Inst::Call { dst, callee, args, sig } => {
                let dst = dst.map(|d| d.0);
                let sig = sig_id(sig);
                match callee {
                    Callee::Direct(name) => HOp::CallRef {
                        dst,
                        slot: slot_of(name),
                        args: regs(args),
                        sig,
                    },
                    Callee::Indirect(r) => HOp::CallReg {
                        dst,
                        target: r.0,
                        args: regs(args),
                        sig,
                    },
                }
            }
            Inst::Print { format, args } => {
                strings.push(format.clone());
                HOp::Print {
                    format: strings.len() as u32 - 1,
                    args: regs(args),
                }
            }
            Inst::GuestAsm { dst, op } => {
                let value = guest_asm_code(op)
                    .and_then(guest_asm_result)
                    .ok_or_else(|| CompileError::UnknownGuestAsm {
                        function: f.name.clone(),
                        op: op.clone(),
                    })?;
                match dst {
                    Some(d) => HOp::Set { dst: d.0, value },
                    None => HOp::Nop,
                }
            }
            Inst::Exit { code } => HOp::Exit { code: code.0 },
            Inst::Jump { target } => HOp::Jump {
                to: block_start[target.index()],
            },
            Inst::Branch { cond, then_to, else_to } => HOp::Branch {
                cond: cond.0,
                then_to: block_start[then_to.index()],
                else_to: block_start[else_to.index()],
            },
            Inst::Return { value: Some(v) } => HOp::Return { value: v.0 },
            Inst::Return { value: None } => HOp::ReturnVoid,
        };
        ops.push(op);
    }
    Ok(HostFunction {
        name: f.name.clone(),
        sig: f.signature(),
        refs,
        nregs: f.vreg_types.len(),
        reg_types: f.vreg_types.clone(),
        ops,
        sigs,
        strings,
    })
}

#[inline]
fn fault(kind: FaultKind) -> Trap {
    Trap::Fault(GuestFault::host(kind))
}

impl HostFunction {
    /// Runs the body. `refs` holds the resolved address of each entry of
    /// `self.refs`, in order.
    pub fn invoke<E: HostEnv + ?Sized>(&self, env: &mut E, refs: &[u64], args: &[Value]) -> Result<Value, Trap> {
        debug_assert_eq!(refs.len(), self.refs.len());
        debug_assert_eq!(args.len(), self.sig.params.len());
        let mut r = vec![0u64; self.nregs];
        for (k, a) in args.iter().enumerate() {
            r[k] = a.bits();
        }
        let f = |b: u64| f64::from_bits(b);
        let mut pc = 0usize;
        loop {
            let op = &self.ops[pc];
            pc += 1;
            match op {
                HOp::Const { dst, bits } => r[*dst as usize] = *bits,
                HOp::Mov { dst, src } => r[*dst as usize] = r[*src as usize],
                HOp::IBin { op, dst, a, b } => {
                    r[*dst as usize] = int_binop(*op, r[*a as usize] as i64, r[*b as usize] as i64)
                        .map_err(|_| fault(FaultKind::DivideByZero))? as u64;
                }
                HOp::FBin { op, dst, a, b } => {
                    r[*dst as usize] = float_binop(*op, f(r[*a as usize]), f(r[*b as usize])).to_bits();
                }
                HOp::ICmp { cond, dst, a, b } => {
                    r[*dst as usize] = int_cmp(*cond, r[*a as usize] as i64, r[*b as usize] as i64) as u64;
                }
                HOp::FCmp { cond, dst, a, b } => {
                    r[*dst as usize] = float_cmp(*cond, f(r[*a as usize]), f(r[*b as usize])) as u64;
                }
                HOp::Un { op, dst, src } => {
                    let s = r[*src as usize];
                    r[*dst as usize] = match op {
                        UnOp::Neg(NumTy::I64) => (s as i64).wrapping_neg() as u64,
                        UnOp::Neg(NumTy::F64) => (-f(s)).to_bits(),
                        UnOp::Not => (s == 0) as u64,
                        UnOp::IntToFloat => (s as i64 as f64).to_bits(),
                        UnOp::FloatToInt => f(s) as i64 as u64,
                    };
                }
                HOp::Load { dst, addr } => r[*dst as usize] = env.load(r[*addr as usize])?,
                HOp::Store { addr, value } => env.store(r[*addr as usize], r[*value as usize])?,
                HOp::Index { dst, base, index } => {
                    r[*dst as usize] = r[*base as usize].wrapping_add(r[*index as usize].wrapping_mul(8));
                }
                HOp::Ref { dst, slot } => r[*dst as usize] = refs[*slot as usize],
                HOp::CallRef { dst, slot, args, sig } => {
                    let v = self.out_call(env, &r, refs[*slot as usize], args, *sig)?;
                    if let Some(d) = dst {
                        r[*d as usize] = v;
                    }
                }
                HOp::CallReg { dst, target, args, sig } => {
                    let v = self.out_call(env, &r, r[*target as usize], args, *sig)?;
                    if let Some(d) = dst {
                        r[*d as usize] = v;
                    }
                }
                HOp::Print { format, args } => {
                    let vals: Vec<u64> = args.iter().map(|a| r[*a as usize]).collect();
                    env.print(&self.strings[*format as usize], &vals)?;
                }
                HOp::Set { dst, value } => r[*dst as usize] = *value as u64,
                HOp::Exit { code } => return Err(Trap::Exit(r[*code as usize] as i64)),
                HOp::Jump { to } => pc = *to as usize,
                HOp::Branch { cond, then_to, else_to } => {
                    pc = if r[*cond as usize] != 0 { *then_to } else { *else_to } as usize;
                }
                HOp::Return { value } => return Ok(Value::from_bits(&self.sig.ret, r[*value as usize])),
                HOp::ReturnVoid => return Ok(Value::Void),
                HOp::Nop => {}
            }
        }
    }

    fn out_call<E: HostEnv + ?Sized>(&self, env: &mut E, r: &[u64], target: u64, args: &[R], sig: u32) -> Result<u64, Trap> {
        let sig = &self.sigs[sig as usize];
        let vals: Vec<Value> = args
            .iter()
            .zip(&sig.params)
            .map(|(a, t)| Value::from_bits(t, r[*a as usize]))
            .collect();
        Ok(env.out_call(target, &vals, sig)?.bits())
    }

    pub fn register_types(&self) -> &[Type] {
        &self.reg_types
    }
}

/// Shared handle used by the runtime's function table.
pub type HostFunctionRef = Arc<HostFunction>;
