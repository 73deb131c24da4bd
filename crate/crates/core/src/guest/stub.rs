//! Guest-side bridge that replaces the body of an offloaded function.
//!
//! The stub builds a trampoline descriptor in its own stack frame and traps
//! into the runtime with `HCALL 2`:
//!
//! ```text
//! sp + 0        offload id (local to the image)
//! sp + 8        argument count
//! sp + 16       result slot, written by the runtime
//! sp + 24 + 8k  argument k, raw 64-bit pattern
//! ```
//!
//! r1 holds the descriptor address. Only r0, r1 and r7 are clobbered.

use super::image::ImageError;
use super::isa::{hcall, Op, ARG0, ARG_REGS, R0, SP, T0};
use super::lower::CodeBody;
use crate::frontend::ir::Signature;

pub const MAX_STUB_ARITY: usize = 64;

pub const DESC_ID: u64 = 0;
pub const DESC_ARGC: u64 = 8;
pub const DESC_RESULT: u64 = 16;
pub const DESC_ARGS: u64 = 24;

pub fn descriptor_size(argc: usize) -> u64 {
    DESC_ARGS + 8 * argc as u64
}

pub fn emit_stub(name: &str, sig: &Signature, offload_id: u32) -> Result<CodeBody, ImageError> {
    let argc = sig.params.len();
    if argc > MAX_STUB_ARITY {
        return Err(ImageError::TooManyArguments {
            function: name.to_string(),
            arity: argc,
        });
    }
    let size = descriptor_size(argc) as i32;
    let mut b = CodeBody::default();
    b.emit(Op::Addi, SP, SP, 0, -size);
    b.load_const(T0, offload_id as u64);
    b.emit(Op::St, T0, SP, 0, DESC_ID as i32);
    b.emit(Op::Movi, T0, 0, 0, argc as i32);
    b.emit(Op::St, T0, SP, 0, DESC_ARGC as i32);
    for k in 0..argc {
        let dst = DESC_ARGS as i32 + 8 * k as i32;
        if k < ARG_REGS {
            b.emit(Op::St, ARG0 + k as u8, SP, 0, dst);
        } else {
            // Caller-pushed arguments sit just above the descriptor.
            b.emit(Op::Ld, T0, SP, 0, size + 8 * (k - ARG_REGS) as i32);
            b.emit(Op::St, T0, SP, 0, dst);
        }
    }
    b.emit(Op::Mov, ARG0, SP, 0, 0);
    b.emit(Op::Hcall, 0, 0, 0, hcall::TRAMPOLINE);
    b.emit(Op::Ld, R0, SP, 0, DESC_RESULT as i32);
    b.emit(Op::Addi, SP, SP, 0, size);
    b.emit(Op::Ret, 0, 0, 0, 0);
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::ir::Type;

    #[test]
    fn two_argument_stub_shape() {
        let sig = Signature {
            params: vec![Type::I64, Type::I64],
            ret: Type::I64,
        };
        let b = emit_stub("add", &sig, 3).unwrap();
        let ops: Vec<Op> = b.code.iter().map(|i| i.op).collect();
        assert_eq!(
            ops,
            [Op::Addi, Op::Movi, Op::St, Op::Movi, Op::St, Op::St, Op::St, Op::Mov, Op::Hcall, Op::Ld, Op::Addi, Op::Ret]
        );
        assert!(b.relocs.is_empty());
    }

    #[test]
    fn arity_limit() {
        let sig = Signature {
            params: vec![Type::I64; 65],
            ret: Type::Void,
        };
        assert!(matches!(emit_stub("f", &sig, 0), Err(ImageError::TooManyArguments { arity: 65, .. })));
    }
}
