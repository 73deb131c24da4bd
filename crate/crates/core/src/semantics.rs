//! Scalar operation semantics shared by the guest interpreter and host
//! evaluation, so both sides agree bit for bit.

use crate::frontend::ir::{BinOp, Cond};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DivideByZero;

#[inline]
pub fn int_binop(op: BinOp, a: i64, b: i64) -> Result<i64, DivideByZero> {
    Ok(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div => {
            if b == 0 {
                return Err(DivideByZero);
            }
            a.wrapping_div(b)
        }
        BinOp::Rem => {
            if b == 0 {
                return Err(DivideByZero);
            }
            a.wrapping_rem(b)
        }
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a.wrapping_shl((b & 63) as u32),
        BinOp::Shr => a.wrapping_shr((b & 63) as u32),
    })
}

#[inline]
pub fn float_binop(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
        BinOp::Rem => a % b,
        // Rejected by the type checker.
        BinOp::And | BinOp::Or | BinOp::Xor | BinOp::Shl | BinOp::Shr => f64::NAN,
    }
}

#[inline]
pub fn int_cmp(c: Cond, a: i64, b: i64) -> bool {
    match c {
        Cond::Eq => a == b,
        Cond::Ne => a != b,
        Cond::Lt => a < b,
        Cond::Le => a <= b,
        Cond::Gt => a > b,
        Cond::Ge => a >= b,
    }
}

#[inline]
pub fn float_cmp(c: Cond, a: f64, b: f64) -> bool {
    match c {
        Cond::Eq => a == b,
        Cond::Ne => a != b,
        Cond::Lt => a < b,
        Cond::Le => a <= b,
        Cond::Gt => a > b,
        Cond::Ge => a >= b,
    }
}

/// Target-specific intrinsics recognised by `guestasm("...")`, with the
/// value each one leaves in its destination.
pub const GUEST_ASM_OPS: &[(&str, i64)] = &[
    ("nop", 0),
    ("pause", 0),
    ("fence", 0),
    // "HVM1" read back as a little-endian word.
    ("cpuid", 0x314D_5648),
];

pub fn guest_asm_code(name: &str) -> Option<u32> {
    GUEST_ASM_OPS
        .iter()
        .position(|(n, _)| *n == name)
        .map(|i| i as u32)
}

pub fn guest_asm_result(code: u32) -> Option<i64> {
    GUEST_ASM_OPS.get(code as usize).map(|(_, v)| *v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn division_edge_cases() {
        assert_eq!(int_binop(BinOp::Div, i64::MIN, -1), Ok(i64::MIN));
        assert_eq!(int_binop(BinOp::Rem, 7, 0), Err(DivideByZero));
        assert_eq!(int_binop(BinOp::Rem, -7, 3), Ok(-1));
    }

    #[test]
    fn shifts_mask_their_amount() {
        assert_eq!(int_binop(BinOp::Shl, 1, 65), Ok(2));
        assert_eq!(int_binop(BinOp::Shr, -8, 1), Ok(-4));
    }

    #[test]
    fn cpuid_is_stable() {
        let code = guest_asm_code("cpuid").unwrap();
        assert_eq!(guest_asm_result(code), Some(0x314D_5648));
        assert_eq!(guest_asm_code("rdtsc"), None);
    }
}
