//! Miniature SSA intermediate representation.
//!
//! Functions are lists of basic blocks; the first block is the entry. Values
//! are named (`%name`), blocks are labelled, and every instruction carries an
//! explicit instruction type so constants can be typed from context.

mod cfg;
mod parser;
mod printer;
mod validate;

use std::collections::HashMap;
use std::fmt;

pub use cfg::{Cfg, DomTree};
pub use parser::{parse_module, parse_unvalidated, ParseError};
pub use printer::{print_function, print_module};
pub use validate::{validate, validate_function, Violation, ViolationKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IrType {
    I1,
    I32,
    I64,
    F32,
    F64,
    /// Opaque address into a flat memory region.
    Addr,
}

impl IrType {
    pub fn is_int(self) -> bool {
        matches!(self, IrType::I1 | IrType::I32 | IrType::I64)
    }

    pub fn is_float(self) -> bool {
        matches!(self, IrType::F32 | IrType::F64)
    }

    pub fn bit_width(self) -> u32 {
        match self {
            IrType::I1 => 1,
            IrType::I32 | IrType::F32 => 32,
            IrType::I64 | IrType::F64 | IrType::Addr => 64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IrType::I1 => "i1",
            IrType::I32 => "i32",
            IrType::I64 => "i64",
            IrType::F32 => "f32",
            IrType::F64 => "f64",
            IrType::Addr => "addr",
        }
    }

    pub fn from_name(s: &str) -> Option<IrType> {
        Some(match s {
            "i1" => IrType::I1,
            "i32" => IrType::I32,
            "i64" => IrType::I64,
            "f32" => IrType::F32,
            "f64" => IrType::F64,
            "addr" => IrType::Addr,
            _ => return None,
        })
    }

    /// The zero value of this type, used for placeholders and fresh slots.
    pub fn zero(self) -> Constant {
        match self {
            IrType::Addr => Constant::Null,
            t if t.is_float() => Constant::Float(0.0),
            _ => Constant::Int(0),
        }
    }
}

impl fmt::Display for IrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpcodeClass {
    Arithmetic,
    Memory,
    Control,
    Other,
}

macro_rules! opcodes {
    ($($variant:ident => $name:literal, $class:ident;)*) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Opcode {
            $($variant,)*
        }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$(Opcode::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Opcode::$variant => $name,)*
                }
            }

            pub fn from_name(s: &str) -> Option<Opcode> {
                match s {
                    $($name => Some(Opcode::$variant),)*
                    _ => None,
                }
            }

            pub fn class(self) -> OpcodeClass {
                match self {
                    $(Opcode::$variant => OpcodeClass::$class,)*
                }
            }
        }
    };
}

opcodes! {
    Add => "add", Arithmetic;
    Sub => "sub", Arithmetic;
    Mul => "mul", Arithmetic;
    SDiv => "sdiv", Arithmetic;
    FAdd => "fadd", Arithmetic;
    FSub => "fsub", Arithmetic;
    FMul => "fmul", Arithmetic;
    FDiv => "fdiv", Arithmetic;
    And => "and", Arithmetic;
    Or => "or", Arithmetic;
    Xor => "xor", Arithmetic;
    Shl => "shl", Arithmetic;
    LShr => "lshr", Arithmetic;
    AShr => "ashr", Arithmetic;
    ICmp => "icmp", Control;
    FCmp => "fcmp", Control;
    SExt => "sext", Arithmetic;
    ZExt => "zext", Arithmetic;
    Trunc => "trunc", Arithmetic;
    Select => "select", Arithmetic;
    Load => "load", Memory;
    Store => "store", Memory;
    Alloca => "alloca", Memory;
    Gep => "gep", Memory;
    Br => "br", Control;
    CondBr => "condbr", Control;
    Switch => "switch", Control;
    Phi => "phi", Control;
    Ret => "ret", Control;
    Call => "call", Other;
}

impl Opcode {
    pub const COUNT: usize = Opcode::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_terminator(self) -> bool {
        matches!(self, Opcode::Br | Opcode::CondBr | Opcode::Switch | Opcode::Ret)
    }

    pub fn is_int_binary(self) -> bool {
        matches!(
            self,
            Opcode::Add
                | Opcode::Sub
                | Opcode::Mul
                | Opcode::SDiv
                | Opcode::And
                | Opcode::Or
                | Opcode::Xor
                | Opcode::Shl
                | Opcode::LShr
                | Opcode::AShr
        )
    }

    pub fn is_float_binary(self) -> bool {
        matches!(self, Opcode::FAdd | Opcode::FSub | Opcode::FMul | Opcode::FDiv)
    }

    pub fn is_cast(self) -> bool {
        matches!(self, Opcode::SExt | Opcode::ZExt | Opcode::Trunc)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Comparison predicate carried by `icmp` / `fcmp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Predicate {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
    Ult,
    Ule,
    Ugt,
    Uge,
    Oeq,
    One,
    Olt,
    Ole,
    Ogt,
    Oge,
}

impl Predicate {
    pub fn name(self) -> &'static str {
        match self {
            Predicate::Eq => "eq",
            Predicate::Ne => "ne",
            Predicate::Slt => "slt",
            Predicate::Sle => "sle",
            Predicate::Sgt => "sgt",
            Predicate::Sge => "sge",
            Predicate::Ult => "ult",
            Predicate::Ule => "ule",
            Predicate::Ugt => "ugt",
            Predicate::Uge => "uge",
            Predicate::Oeq => "oeq",
            Predicate::One => "one",
            Predicate::Olt => "olt",
            Predicate::Ole => "ole",
            Predicate::Ogt => "ogt",
            Predicate::Oge => "oge",
        }
    }

    pub fn from_name(s: &str) -> Option<Predicate> {
        const ALL: [Predicate; 16] = [
            Predicate::Eq,
            Predicate::Ne,
            Predicate::Slt,
            Predicate::Sle,
            Predicate::Sgt,
            Predicate::Sge,
            Predicate::Ult,
            Predicate::Ule,
            Predicate::Ugt,
            Predicate::Uge,
            Predicate::Oeq,
            Predicate::One,
            Predicate::Olt,
            Predicate::Ole,
            Predicate::Ogt,
            Predicate::Oge,
        ];
        ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn is_float(self) -> bool {
        matches!(
            self,
            Predicate::Oeq
                | Predicate::One
                | Predicate::Olt
                | Predicate::Ole
                | Predicate::Ogt
                | Predicate::Oge
        )
    }
}

/// Literal constant. The type comes from the operand position.
#[derive(Clone, Copy, Debug)]
pub enum Constant {
    Int(i64),
    Float(f64),
    Null,
}

impl PartialEq for Constant {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Constant::Int(a), Constant::Int(b)) => a == b,
            (Constant::Float(a), Constant::Float(b)) => a.to_bits() == b.to_bits(),
            (Constant::Null, Constant::Null) => true,
            _ => false,
        }
    }
}

impl Eq for Constant {}

impl std::hash::Hash for Constant {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            Constant::Int(v) => (0u8, *v).hash(state),
            Constant::Float(v) => (1u8, v.to_bits()).hash(state),
            Constant::Null => 2u8.hash(state),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    /// SSA value or parameter, by name (without the `%`).
    Value(String),
    Const(Constant),
    /// Block label (branch targets, phi incoming blocks).
    Label(String),
    /// Base address of a module memory region (`@name`).
    Global(String),
}

impl Operand {
    pub fn value(name: impl Into<String>) -> Operand {
        Operand::Value(name.into())
    }

    pub fn label(name: impl Into<String>) -> Operand {
        Operand::Label(name.into())
    }

    pub fn int(v: i64) -> Operand {
        Operand::Const(Constant::Int(v))
    }

    pub fn as_value(&self) -> Option<&str> {
        match self {
            Operand::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            Operand::Label(l) => Some(l),
            _ => None,
        }
    }
}

/// One instruction.
///
/// `ty` is the type printed after the opcode: the operand type for
/// arithmetic, compares, selects, stores and switches; the element type for
/// `load`, `alloca` and `gep`; the source type for casts; the return type for
/// `ret` and `call`. `br` and `condbr` carry none.
///
/// Operand layout per opcode:
/// - binary ops, compares: `[lhs, rhs]`
/// - casts, load: `[src]`
/// - select: `[cond, if_true, if_false]`
/// - store: `[value, addr]`
/// - gep: `[base, index]`
/// - br: `[label]`, condbr: `[cond, then, else]`
/// - switch: `[value, default, (case_const, case_label)*]`
/// - phi: `[(value, label)*]`
/// - ret: `[value]`, call: arguments
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instruction {
    pub result: Option<(String, IrType)>,
    pub opcode: Opcode,
    pub ty: Option<IrType>,
    pub operands: Vec<Operand>,
    pub predicate: Option<Predicate>,
    pub callee: Option<String>,
}

impl Instruction {
    pub fn new(opcode: Opcode, ty: Option<IrType>, operands: Vec<Operand>) -> Self {
        Instruction {
            result: None,
            opcode,
            ty,
            operands,
            predicate: None,
            callee: None,
        }
    }

    pub fn with_result(mut self, name: impl Into<String>, ty: IrType) -> Self {
        self.result = Some((name.into(), ty));
        self
    }

    pub fn with_predicate(mut self, p: Predicate) -> Self {
        self.predicate = Some(p);
        self
    }

    pub fn result_name(&self) -> Option<&str> {
        self.result.as_ref().map(|(n, _)| n.as_str())
    }

    pub fn result_type(&self) -> Option<IrType> {
        self.result.as_ref().map(|(_, t)| *t)
    }

    pub fn is_terminator(&self) -> bool {
        self.opcode.is_terminator()
    }

    pub fn is_phi(&self) -> bool {
        self.opcode == Opcode::Phi
    }

    /// Incoming `(value, block)` pairs of a phi.
    pub fn phi_incoming(&self) -> impl Iterator<Item = (&Operand, &str)> {
        self.operands
            .chunks(2)
            .filter(|_| self.opcode == Opcode::Phi)
            .filter_map(|c| match c {
                [v, Operand::Label(l)] => Some((v, l.as_str())),
                _ => None,
            })
    }

    /// Successor labels of a terminator, in operand order (duplicates kept).
    pub fn successors(&self) -> Vec<&str> {
        match self.opcode {
            Opcode::Br | Opcode::CondBr | Opcode::Switch => {
                self.operands.iter().filter_map(Operand::as_label).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Names of all values this instruction reads.
    pub fn used_values(&self) -> impl Iterator<Item = &str> {
        self.operands.iter().filter_map(Operand::as_value)
    }

    /// Mutable references to every value operand.
    pub fn value_operands_mut(&mut self) -> impl Iterator<Item = &mut Operand> {
        self.operands
            .iter_mut()
            .filter(|o| matches!(o, Operand::Value(_)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub instrs: Vec<Instruction>,
}

impl BasicBlock {
    pub fn new(label: impl Into<String>) -> Self {
        BasicBlock {
            label: label.into(),
            instrs: Vec::new(),
        }
    }

    pub fn terminator(&self) -> Option<&Instruction> {
        self.instrs.last().filter(|i| i.is_terminator())
    }

    /// Index of the first non-phi instruction.
    pub fn first_non_phi(&self) -> usize {
        self.instrs.iter().take_while(|i| i.is_phi()).count()
    }

    pub fn phis(&self) -> &[Instruction] {
        &self.instrs[..self.first_non_phi()]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: IrType,
}

impl Param {
    pub fn new(name: impl Into<String>, ty: IrType) -> Self {
        Param {
            name: name.into(),
            ty,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrFunction {
    pub name: String,
    pub params: Vec<Param>,
    pub ret_ty: IrType,
    pub blocks: Vec<BasicBlock>,
}

impl IrFunction {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn block_map(&self) -> HashMap<&str, usize> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.label.as_str(), i))
            .collect()
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.blocks.iter().flat_map(|b| b.instrs.iter())
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.instrs.len()).sum()
    }

    pub fn count_opcode(&self, op: Opcode) -> usize {
        self.instructions().filter(|i| i.opcode == op).count()
    }

    /// Per-opcode static instruction counts, indexed by `Opcode::index`.
    pub fn opcode_counts(&self) -> [u32; Opcode::COUNT] {
        let mut counts = [0u32; Opcode::COUNT];
        for i in self.instructions() {
            counts[i.opcode.index()] += 1;
        }
        counts
    }

    /// Static types of all parameters and instruction results.
    pub fn value_types(&self) -> HashMap<String, IrType> {
        let mut types: HashMap<String, IrType> =
            self.params.iter().map(|p| (p.name.clone(), p.ty)).collect();
        for i in self.instructions() {
            if let Some((n, t)) = &i.result {
                types.insert(n.clone(), *t);
            }
        }
        types
    }

    /// Flat position (program order over all blocks) of `(block, index)`.
    pub fn flat_index(&self, block: usize, index: usize) -> usize {
        self.blocks[..block].iter().map(|b| b.instrs.len()).sum::<usize>() + index
    }

    /// Returns a copy with every value and label renamed by appending
    /// `suffix`, and the function itself renamed to `new_name`.
    pub fn alpha_renamed(&self, new_name: &str, suffix: &str) -> IrFunction {
        let mut f = self.clone();
        f.name = new_name.to_string();
        for p in &mut f.params {
            p.name.push_str(suffix);
        }
        for b in &mut f.blocks {
            b.label.push_str(suffix);
            for i in &mut b.instrs {
                if let Some((n, _)) = &mut i.result {
                    n.push_str(suffix);
                }
                for o in &mut i.operands {
                    match o {
                        Operand::Value(v) | Operand::Label(v) => v.push_str(suffix),
                        _ => {}
                    }
                }
            }
        }
        f
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryDecl {
    pub name: String,
    pub elem_ty: IrType,
    pub len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IrModule {
    pub memories: Vec<MemoryDecl>,
    pub functions: Vec<IrFunction>,
}

impl IrModule {
    pub fn function(&self, name: &str) -> Option<&IrFunction> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut IrFunction> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn memory(&self, name: &str) -> Option<&MemoryDecl> {
        self.memories.iter().find(|m| m.name == name)
    }
}

/// Static type expected at each operand position, given the types of values
/// in scope. `None` marks label positions and positions whose type is
/// unconstrained (a `gep` index accepts any integer type).
pub fn operand_types(
    instr: &Instruction,
    value_ty: &dyn Fn(&str) -> Option<IrType>,
    callee_params: Option<&[IrType]>,
) -> Vec<Option<IrType>> {
    let ty = instr.ty;
    let n = instr.operands.len();
    match instr.opcode {
        op if op.is_int_binary() || op.is_float_binary() => vec![ty; n],
        Opcode::ICmp | Opcode::FCmp => vec![ty; n],
        Opcode::SExt | Opcode::ZExt | Opcode::Trunc => vec![ty; n],
        Opcode::Select => {
            let mut v = vec![ty; n];
            if n > 0 {
                v[0] = Some(IrType::I1);
            }
            v
        }
        Opcode::Load => vec![Some(IrType::Addr); n],
        Opcode::Store => {
            let mut v = vec![Some(IrType::Addr); n];
            if n > 0 {
                v[0] = ty;
            }
            v
        }
        Opcode::Alloca => vec![None; n],
        Opcode::Gep => {
            let mut v = vec![None; n];
            if n > 0 {
                v[0] = Some(IrType::Addr);
            }
            if n > 1 {
                v[1] = match &instr.operands[1] {
                    Operand::Value(name) => value_ty(name).filter(|t| t.is_int()),
                    _ => Some(IrType::I64),
                };
            }
            v
        }
        Opcode::Br => vec![None; n],
        Opcode::CondBr => {
            let mut v = vec![None; n];
            if n > 0 {
                v[0] = Some(IrType::I1);
            }
            v
        }
        Opcode::Switch => instr
            .operands
            .iter()
            .enumerate()
            .map(|(k, o)| match o {
                Operand::Label(_) => None,
                _ if k == 0 || k >= 2 => ty,
                _ => None,
            })
            .collect(),
        Opcode::Phi => instr
            .operands
            .iter()
            .map(|o| match o {
                Operand::Label(_) => None,
                _ => ty,
            })
            .collect(),
        Opcode::Ret => vec![ty; n],
        Opcode::Call => match callee_params {
            Some(ps) => (0..n).map(|k| ps.get(k).copied()).collect(),
            None => vec![None; n],
        },
        _ => vec![None; n],
    }
}
