//! Contained guest faults and the unwinding signal shared by the
//! interpreter and host execution.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    /// Access outside mapped guest memory, including the null guard page.
    OutOfBounds { addr: u64, len: u64 },
    /// Control transfer to an address that holds no code.
    BadJump { addr: u64 },
    /// Undecodable instruction word.
    BadInstruction { addr: u64, word: u64 },
    BadHypercall { number: u32 },
    /// Trampoline entered with an offload id the image does not define.
    UnknownOffload { id: u64 },
    StackOverflow,
    DivideByZero,
    /// Host-side call nesting exceeded its limit.
    HostRecursion,
    InstructionBudget { budget: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
pub struct GuestFault {
    pub kind: FaultKind,
    /// Guest pc when raised by the interpreter; `None` inside host code.
    pub pc: Option<u64>,
}

impl GuestFault {
    pub fn host(kind: FaultKind) -> Self {
        GuestFault { kind, pc: None }
    }

    pub fn at(kind: FaultKind, pc: u64) -> Self {
        GuestFault { kind, pc: Some(pc) }
    }

    /// Process exit code reported for a run that ends with this fault,
    /// following the shell convention of 128 + signal number.
    pub fn exit_code(&self) -> i64 {
        match self.kind {
            FaultKind::DivideByZero => 136,
            FaultKind::BadInstruction { .. } => 132,
            FaultKind::InstructionBudget { .. } => 137,
            _ => 139,
        }
    }
}

impl fmt::Display for GuestFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FaultKind::OutOfBounds { addr, len } => write!(f, "guest fault: {len}-byte access at {addr:#x}")?,
            FaultKind::BadJump { addr } => write!(f, "guest fault: jump to non-code address {addr:#x}")?,
            FaultKind::BadInstruction { addr, word } => {
                write!(f, "guest fault: bad instruction {word:#018x} at {addr:#x}")?
            }
            FaultKind::BadHypercall { number } => write!(f, "guest fault: unknown hypercall {number}")?,
            FaultKind::UnknownOffload { id } => write!(f, "trampoline error: unknown offload id {id}")?,
            FaultKind::StackOverflow => f.write_str("guest fault: stack overflow")?,
            FaultKind::DivideByZero => f.write_str("guest fault: integer divide by zero")?,
            FaultKind::HostRecursion => f.write_str("guest fault: host call depth exceeded")?,
            FaultKind::InstructionBudget { budget } => {
                write!(f, "instruction budget of {budget} exhausted")?
            }
        }
        match self.pc {
            Some(pc) => write!(f, " (pc {pc:#x})"),
            None => f.write_str(" (in host code)"),
        }
    }
}

/// Reason execution stopped early. Both variants unwind every host frame of
/// the current crossing back to the runtime.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trap {
    Fault(GuestFault),
    Exit(i64),
}

impl From<GuestFault> for Trap {
    fn from(f: GuestFault) -> Self {
        Trap::Fault(f)
    }
}
