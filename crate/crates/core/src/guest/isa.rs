//! The toy guest instruction set.
//!
//! Every instruction is one little-endian 8-byte word:
//! `op:u8 | rd:u8 | rs1:u8 | rs2:u8 | imm:i32`. Control transfers and `LEA`
//! are relative to the address of the instruction itself, so code is
//! position independent.

use std::fmt;

use crate::frontend::ir::Cond;

pub const NUM_REGS: usize = 16;
/// Return value.
pub const R0: u8 = 0;
/// First argument register; arguments go in r1..=r6.
pub const ARG0: u8 = 1;
pub const ARG_REGS: usize = 6;
/// Scratch registers used by generated code.
pub const T0: u8 = 7;
pub const T1: u8 = 8;
pub const FP: u8 = 13;
pub const LR: u8 = 14;
pub const SP: u8 = 15;

pub const INSTR_BYTES: u64 = 8;

pub mod hcall {
    pub const PRINT: i32 = 0;
    pub const EXIT: i32 = 1;
    pub const TRAMPOLINE: i32 = 2;
    pub const SENTINEL: i32 = 3;
}

macro_rules! opcodes {
    ($($(#[$doc:meta])* $name:ident = $val:literal),* $(,)?) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        #[repr(u8)]
        pub enum Op { $($(#[$doc])* $name = $val),* }

        impl Op {
            pub fn from_u8(v: u8) -> Option<Op> {
                match v {
                    $($val => Some(Op::$name),)*
                    _ => None,
                }
            }

            pub const ALL: &'static [Op] = &[$(Op::$name),*];
        }
    };
}

opcodes! {
    Nop = 0,
    /// rd = sign-extended imm
    Movi = 1,
    /// Replace the upper 32 bits of rd with imm.
    Movhi = 2,
    Mov = 3,
    Add = 4,
    Sub = 5,
    Mul = 6,
    Div = 7,
    Rem = 8,
    And = 9,
    Or = 10,
    Xor = 11,
    Shl = 12,
    Shr = 13,
    /// rd = rs1 + imm
    Addi = 14,
    /// rd = rs1 << imm
    Shli = 15,
    Fadd = 16,
    Fsub = 17,
    Fmul = 18,
    Fdiv = 19,
    Frem = 20,
    Neg = 21,
    Fneg = 22,
    /// Logical not.
    Not = 23,
    Itof = 24,
    Ftoi = 25,
    /// rd = (rs1 <cond> rs2), cond in imm
    Cmp = 26,
    Fcmp = 27,
    /// rd = mem[rs1 + imm]
    Ld = 28,
    /// mem[rs1 + imm] = rd
    St = 29,
    /// rd = pc + imm
    Lea = 30,
    Jmp = 31,
    Bnz = 32,
    Bz = 33,
    /// lr = pc + 8; pc += imm
    Call = 34,
    /// lr = pc + 8; pc = rs1
    Callr = 35,
    Ret = 36,
    Hcall = 37,
    /// rd = result of target-specific operation imm
    Gasm = 38,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Instr {
    pub op: Op,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i32,
}

impl Instr {
    pub fn new(op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32) -> Self {
        Instr { op, rd, rs1, rs2, imm }
    }

    pub fn encode(self) -> u64 {
        self.op as u64
            | (self.rd as u64) << 8
            | (self.rs1 as u64) << 16
            | (self.rs2 as u64) << 24
            | (self.imm as u32 as u64) << 32
    }

    /// Decodes a word; `None` for unknown opcodes or register numbers.
    #[inline]
    pub fn decode(word: u64) -> Option<Instr> {
        let op = Op::from_u8(word as u8)?;
        let rd = (word >> 8) as u8;
        let rs1 = (word >> 16) as u8;
        let rs2 = (word >> 24) as u8;
        if (rd | rs1 | rs2) as usize >= NUM_REGS {
            return None;
        }
        Some(Instr {
            op,
            rd,
            rs1,
            rs2,
            imm: (word >> 32) as i32,
        })
    }
}

pub fn cond_code(c: Cond) -> i32 {
    match c {
        Cond::Eq => 0,
        Cond::Ne => 1,
        Cond::Lt => 2,
        Cond::Le => 3,
        Cond::Gt => 4,
        Cond::Ge => 5,
    }
}

pub fn cond_from_code(c: i32) -> Option<Cond> {
    Some(match c {
        0 => Cond::Eq,
        1 => Cond::Ne,
        2 => Cond::Lt,
        3 => Cond::Le,
        4 => Cond::Gt,
        5 => Cond::Ge,
        _ => return None,
    })
}

fn reg(r: u8) -> String {
    match r {
        FP => "fp".into(),
        LR => "lr".into(),
        SP => "sp".into(),
        _ => format!("r{r}"),
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (d, a, b, i) = (reg(self.rd), reg(self.rs1), reg(self.rs2), self.imm);
        let m = format!("{:?}", self.op).to_lowercase();
        match self.op {
            Op::Nop | Op::Ret => f.write_str(&m),
            Op::Movi | Op::Movhi | Op::Lea | Op::Gasm => write!(f, "{m} {d}, {i}"),
            Op::Mov | Op::Neg | Op::Fneg | Op::Not | Op::Itof | Op::Ftoi => write!(f, "{m} {d}, {a}"),
            Op::Addi | Op::Shli => write!(f, "{m} {d}, {a}, {i}"),
            Op::Cmp | Op::Fcmp => {
                let c = cond_from_code(i).map(|c| c.mnemonic()).unwrap_or("?");
                write!(f, "{m}.{c} {d}, {a}, {b}")
            }
            Op::Ld => write!(f, "ld {d}, [{a}{i:+}]"),
            Op::St => write!(f, "st [{a}{i:+}], {d}"),
            Op::Jmp | Op::Call | Op::Hcall => write!(f, "{m} {i}"),
            Op::Bnz | Op::Bz => write!(f, "{m} {a}, {i}"),
            Op::Callr => write!(f, "callr {a}"),
            _ => write!(f, "{m} {d}, {a}, {b}"),
        }
    }
}

/// Disassembles a code segment, one instruction per line.
pub fn disassemble(code: &[u8]) -> String {
    let mut out = String::new();
    for (k, w) in code.chunks_exact(8).enumerate() {
        let word = u64::from_le_bytes(w.try_into().unwrap());
        let text = Instr::decode(word).map_or_else(|| format!(".word {word:#018x}"), |i| i.to_string());
        out.push_str(&format!("{:6x}: {text}\n", k * 8));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn any_instr() -> impl Strategy<Value = Instr> {
        (0..Op::ALL.len(), 0u8..16, 0u8..16, 0u8..16, any::<i32>())
            .prop_map(|(o, rd, rs1, rs2, imm)| Instr::new(Op::ALL[o], rd, rs1, rs2, imm))
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(i in any_instr()) {
            prop_assert_eq!(Instr::decode(i.encode()), Some(i));
        }

        #[test]
        fn decode_rejects_or_reencodes(word in any::<u64>()) {
            if let Some(i) = Instr::decode(word) {
                prop_assert_eq!(i.encode(), word);
            }
        }
    }

    #[test]
    fn unknown_opcode_and_register_rejected() {
        assert_eq!(Instr::decode(0xff), None);
        assert_eq!(Instr::decode(Op::Mov as u64 | 16 << 8), None);
    }

    #[test]
    fn conds_round_trip() {
        for c in [Cond::Eq, Cond::Ne, Cond::Lt, Cond::Le, Cond::Gt, Cond::Ge] {
            assert_eq!(cond_from_code(cond_code(c)), Some(c));
        }
    }
}
