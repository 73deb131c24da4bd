//! Typed intermediate representation.
//!
//! Functions are lists of basic blocks over mutable virtual registers. Every
//! virtual register has a fixed type recorded in `FunctionIR::vreg_types`;
//! parameter `i` always lives in virtual register `i`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::Pos;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Elem {
    I64,
    F64,
}

impl Elem {
    pub fn scalar(self) -> Type {
        match self {
            Elem::I64 => Type::I64,
            Elem::F64 => Type::F64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Type {
    I64,
    F64,
    /// Pointer to 8-byte cells of the given element type.
    Ptr(Elem),
    Fn(Box<Signature>),
    Void,
}

/// Register class a value occupies when it crosses an ABI boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AbiClass {
    I64,
    F64,
    Ptr,
    FnPtr,
}

impl Type {
    pub fn abi_class(&self) -> Option<AbiClass> {
        match self {
            Type::I64 => Some(AbiClass::I64),
            Type::F64 => Some(AbiClass::F64),
            Type::Ptr(_) => Some(AbiClass::Ptr),
            Type::Fn(_) => Some(AbiClass::FnPtr),
            Type::Void => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Type::I64 | Type::F64)
    }

    pub fn num(&self) -> Option<NumTy> {
        match self {
            Type::I64 => Some(NumTy::I64),
            Type::F64 => Some(NumTy::F64),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::I64 => f.write_str("i64"),
            Type::F64 => f.write_str("f64"),
            Type::Ptr(Elem::I64) => f.write_str("*i64"),
            Type::Ptr(Elem::F64) => f.write_str("*f64"),
            Type::Fn(sig) => write!(f, "{sig}"),
            Type::Void => f.write_str("void"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub params: Vec<Type>,
    pub ret: Type,
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("fn(")?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ") -> {}", self.ret)
    }
}

/// Numeric operand type of an arithmetic or comparison instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NumTy {
    I64,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl BinOp {
    pub fn is_bitwise(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Xor | BinOp::Shl | BinOp::Shr)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Rem => "rem",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::Shr => "shr",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cond {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cond {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Cond::Eq => "eq",
            Cond::Ne => "ne",
            Cond::Lt => "lt",
            Cond::Le => "le",
            Cond::Gt => "gt",
            Cond::Ge => "ge",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Neg(NumTy),
    /// Logical not: 1 if the operand is zero, else 0.
    Not,
    IntToFloat,
    FloatToInt,
}

/// Scalar constant. Floats are kept as raw bits so constants compare exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Const {
    I64(i64),
    F64(u64),
}

impl Const {
    pub fn f64(v: f64) -> Self {
        Const::F64(v.to_bits())
    }

    pub fn bits(self) -> u64 {
        match self {
            Const::I64(v) => v as u64,
            Const::F64(b) => b,
        }
    }
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Const::I64(v) => write!(f, "{v}"),
            Const::F64(b) => write!(f, "{:?}", f64::from_bits(b)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VReg(pub u32);

impl VReg {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub u32);

impl BlockId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Callee {
    Direct(String),
    Indirect(VReg),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Inst {
    Const {
        dst: VReg,
        value: Const,
    },
    Move {
        dst: VReg,
        src: VReg,
    },
    Binary {
        op: BinOp,
        ty: NumTy,
        dst: VReg,
        lhs: VReg,
        rhs: VReg,
    },
    Compare {
        cond: Cond,
        ty: NumTy,
        dst: VReg,
        lhs: VReg,
        rhs: VReg,
    },
    Unary {
        op: UnOp,
        dst: VReg,
        src: VReg,
    },
    /// 64-bit load from the address held in `addr`.
    Load {
        dst: VReg,
        addr: VReg,
    },
    Store {
        addr: VReg,
        value: VReg,
    },
    /// `dst = base + index * 8`
    Index {
        dst: VReg,
        base: VReg,
        index: VReg,
    },
    /// Address of a data global.
    GlobalAddr {
        dst: VReg,
        name: String,
    },
    FuncAddr {
        dst: VReg,
        name: String,
    },
    Call {
        dst: Option<VReg>,
        callee: Callee,
        args: Vec<VReg>,
        sig: Signature,
    },
    /// Variadic builtin `print(format, ...)`; guest-bound.
    Print {
        format: String,
        args: Vec<VReg>,
    },
    /// Target-specific intrinsic; guest-bound.
    GuestAsm {
        dst: Option<VReg>,
        op: String,
    },
    Exit {
        code: VReg,
    },
    Jump {
        target: BlockId,
    },
    Branch {
        cond: VReg,
        then_to: BlockId,
        else_to: BlockId,
    },
    Return {
        value: Option<VReg>,
    },
}

impl Inst {
    pub fn is_terminator(&self) -> bool {
        matches!(self, Inst::Jump { .. } | Inst::Branch { .. } | Inst::Return { .. })
    }

    /// Instructions that can only execute on the emulated side.
    pub fn is_guest_bound(&self) -> bool {
        matches!(self, Inst::Print { .. } | Inst::GuestAsm { .. })
    }

    pub fn is_variadic_call(&self) -> bool {
        matches!(self, Inst::Print { .. })
    }

    pub fn def(&self) -> Option<VReg> {
        match self {
            Inst::Const { dst, .. }
            | Inst::Move { dst, .. }
            | Inst::Binary { dst, .. }
            | Inst::Compare { dst, .. }
            | Inst::Unary { dst, .. }
            | Inst::Load { dst, .. }
            | Inst::Index { dst, .. }
            | Inst::GlobalAddr { dst, .. }
            | Inst::FuncAddr { dst, .. } => Some(*dst),
            Inst::Call { dst, .. } | Inst::GuestAsm { dst, .. } => *dst,
            _ => None,
        }
    }

    pub fn uses(&self) -> Vec<VReg> {
        match self {
            Inst::Const { .. }
            | Inst::GlobalAddr { .. }
            | Inst::FuncAddr { .. }
            | Inst::GuestAsm { .. }
            | Inst::Jump { .. } => Vec::new(),
            Inst::Move { src, .. } | Inst::Unary { src, .. } => vec![*src],
            Inst::Binary { lhs, rhs, .. } | Inst::Compare { lhs, rhs, .. } => vec![*lhs, *rhs],
            Inst::Load { addr, .. } => vec![*addr],
            Inst::Store { addr, value } => vec![*addr, *value],
            Inst::Index { base, index, .. } => vec![*base, *index],
            Inst::Call { callee, args, .. } => {
                let mut v = Vec::with_capacity(args.len() + 1);
                if let Callee::Indirect(r) = callee {
                    v.push(*r);
                }
                v.extend_from_slice(args);
                v
            }
            Inst::Print { args, .. } => args.clone(),
            Inst::Exit { code } => vec![*code],
            Inst::Branch { cond, .. } => vec![*cond],
            Inst::Return { value } => value.iter().copied().collect(),
        }
    }

    pub fn successors(&self) -> Vec<BlockId> {
        match self {
            Inst::Jump { target } => vec![*target],
            Inst::Branch { then_to, else_to, .. } => vec![*then_to, *else_to],
            _ => Vec::new(),
        }
    }

    /// Rewrites every virtual register mentioned by the instruction.
    pub fn map_vregs(&mut self, mut f: impl FnMut(VReg) -> VReg) {
        match self {
            Inst::Const { dst, .. }
            | Inst::GlobalAddr { dst, .. }
            | Inst::FuncAddr { dst, .. } => *dst = f(*dst),
            Inst::Move { dst, src } | Inst::Unary { dst, src, .. } => {
                *src = f(*src);
                *dst = f(*dst);
            }
            Inst::Binary { dst, lhs, rhs, .. } | Inst::Compare { dst, lhs, rhs, .. } => {
                *lhs = f(*lhs);
                *rhs = f(*rhs);
                *dst = f(*dst);
            }
            Inst::Load { dst, addr } => {
                *addr = f(*addr);
                *dst = f(*dst);
            }
            Inst::Store { addr, value } => {
                *addr = f(*addr);
                *value = f(*value);
            }
            Inst::Index { dst, base, index } => {
                *base = f(*base);
                *index = f(*index);
                *dst = f(*dst);
            }
            Inst::Call { dst, callee, args, .. } => {
                if let Callee::Indirect(r) = callee {
                    *r = f(*r);
                }
                for a in args.iter_mut() {
                    *a = f(*a);
                }
                if let Some(d) = dst {
                    *d = f(*d);
                }
            }
            Inst::Print { args, .. } => {
                for a in args.iter_mut() {
                    *a = f(*a);
                }
            }
            Inst::GuestAsm { dst, .. } => {
                if let Some(d) = dst {
                    *d = f(*d);
                }
            }
            Inst::Exit { code } => *code = f(*code),
            Inst::Branch { cond, .. } => *cond = f(*cond),
            Inst::Return { value } => {
                if let Some(v) = value {
                    *v = f(*v);
                }
            }
            Inst::Jump { .. } => {}
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub insts: Vec<Inst>,
}

impl Block {
    pub fn terminator(&self) -> Option<&Inst> {
        self.insts.last().filter(|i| i.is_terminator())
    }

    pub fn body(&self) -> &[Inst] {
        match self.insts.last() {
            Some(last) if last.is_terminator() => &self.insts[..self.insts.len() - 1],
            _ => &self.insts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionIR {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Type,
    pub blocks: Vec<Block>,
    pub vreg_types: Vec<Type>,
    pub is_library: bool,
    /// Set on helpers produced by partial function outlining.
    pub outlined_from: Option<String>,
    pub pos: Pos,
}

/// Location of one instruction inside a function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub block: BlockId,
    pub index: usize,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.block, self.index)
    }
}

impl FunctionIR {
    pub fn signature(&self) -> Signature {
        Signature {
            params: self.params.iter().map(|p| p.ty.clone()).collect(),
            ret: self.ret.clone(),
        }
    }

    pub fn vreg_type(&self, r: VReg) -> &Type {
        &self.vreg_types[r.index()]
    }

    pub fn new_vreg(&mut self, ty: Type) -> VReg {
        self.vreg_types.push(ty);
        VReg(self.vreg_types.len() as u32 - 1)
    }

    pub fn sites(&self) -> impl Iterator<Item = (Site, &Inst)> {
        self.blocks.iter().enumerate().flat_map(|(b, block)| {
            block.insts.iter().enumerate().map(move |(i, inst)| {
                (
                    Site {
                        block: BlockId(b as u32),
                        index: i,
                    },
                    inst,
                )
            })
        })
    }

    /// Call sites of the variadic builtin.
    pub fn variadic_sites(&self) -> Vec<Site> {
        self.sites()
            .filter(|(_, i)| i.is_variadic_call())
            .map(|(s, _)| s)
            .collect()
    }

    pub fn guest_asm_sites(&self) -> Vec<Site> {
        self.sites()
            .filter(|(_, i)| matches!(i, Inst::GuestAsm { .. }))
            .map(|(s, _)| s)
            .collect()
    }

    pub fn has_guest_bound(&self) -> bool {
        self.sites().any(|(_, i)| i.is_guest_bound())
    }

    /// Number of non-terminator instructions.
    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.body().len()).sum()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_synthetic(&self) -> bool {
        self.outlined_from.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GlobalType {
    Scalar(ScalarGlobal),
    Array(Elem, u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScalarGlobal {
    I64,
    F64,
    Ptr(Elem),
    /// Function-pointer cell; the signature lives in `GlobalDef::fn_sig`.
    Fn,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GlobalInit {
    Zero,
    Scalar(Const),
    Func(String),
    Array(Vec<Const>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlobalDef {
    pub name: String,
    pub ty: GlobalType,
    pub fn_sig: Option<Signature>,
    pub init: GlobalInit,
}

impl GlobalDef {
    pub fn size_bytes(&self) -> u64 {
        match self.ty {
            GlobalType::Scalar(_) => 8,
            GlobalType::Array(_, n) => 8 * n as u64,
        }
    }

    /// Type of the value obtained by reading the global by name in source.
    pub fn value_type(&self) -> Type {
        match self.ty {
            GlobalType::Scalar(ScalarGlobal::I64) => Type::I64,
            GlobalType::Scalar(ScalarGlobal::F64) => Type::F64,
            GlobalType::Scalar(ScalarGlobal::Ptr(e)) => Type::Ptr(e),
            GlobalType::Scalar(ScalarGlobal::Fn) => {
                Type::Fn(Box::new(self.fn_sig.clone().expect("fn global has a signature")))
            }
            GlobalType::Array(e, _) => Type::Ptr(e),
        }
    }
}

/// A function implemented by another image and resolved by name at load time.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExternDecl {
    pub name: String,
    pub sig: Signature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypedModule {
    pub functions: Vec<FunctionIR>,
    pub globals: Vec<GlobalDef>,
    pub externs: Vec<ExternDecl>,
    pub entry: Option<String>,
}

impl TypedModule {
    pub fn function(&self, name: &str) -> Option<&FunctionIR> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&GlobalDef> {
        self.globals.iter().find(|g| g.name == name)
    }

    /// Signature of a direct-call target, whether local or external.
    pub fn callee_signature(&self, name: &str) -> Option<Signature> {
        self.function(name)
            .map(|f| f.signature())
            .or_else(|| self.externs.iter().find(|e| e.name == name).map(|e| e.sig.clone()))
    }
}
