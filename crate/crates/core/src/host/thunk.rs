//! Reverse stubs: calling guest code from host code.

use super::compile::Value;
use crate::frontend::ir::Signature;
use crate::guest::isa::{ARG0, ARG_REGS};

/// Guest register and stack state that carries one call's arguments.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GuestArgs {
    /// `(register, bits)` for the register-passed arguments.
    pub regs: Vec<(u8, u64)>,
    /// Stack-passed arguments; element 0 ends up at `[sp + 0]` on entry.
    pub stack: Vec<u64>,
}

/// Bridges a host-side call to the guest function at `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct CallbackThunk {
    pub target: u64,
    pub sig: Signature,
}

pub fn make_reverse_stub(target: u64, sig: &Signature) -> CallbackThunk {
    CallbackThunk {
        target,
        sig: sig.clone(),
    }
}

impl CallbackThunk {
    pub fn marshal(&self, args: &[Value]) -> GuestArgs {
        let mut out = GuestArgs::default();
        for (k, a) in args.iter().enumerate() {
            if k < ARG_REGS {
                out.regs.push((ARG0 + k as u8, a.bits()));
            } else {
                out.stack.push(a.bits());
            }
        }
        out
    }

    /// Interprets the guest's r0 according to the return type.
    pub fn unmarshal(&self, r0: u64) -> Value {
        Value::from_bits(&self.sig.ret, r0)
    }
}
