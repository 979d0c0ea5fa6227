//! Reference interpreter for the IR.

mod diff;

use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::ir::{
    operand_types, Constant, IrModule, IrType, Opcode, Operand, Predicate,
};

pub use diff::{
    differential_check, equivalence_check, random_inputs, CheckConfig, DiffReport, Inputs,
    Mismatch, Subject,
};

pub const DEFAULT_STEP_LIMIT: u64 = 1_000_000;
const MAX_CALL_DEPTH: usize = 64;

/// Index of a memory region inside a [`Memory`].
pub type RegionId = u32;

/// A runtime scalar. Integers are kept sign-normalised to their width
/// (`i1` as 0/1); `f32` values are kept rounded to single precision.
#[derive(Clone, Copy, Debug)]
pub enum RuntimeValue {
    Int(i64),
    Float(f64),
    /// Element offset into a region; `region: None` is the null address.
    Addr { region: Option<RegionId>, offset: i64 },
}

impl RuntimeValue {
    pub fn zero(ty: IrType) -> RuntimeValue {
        match ty {
            IrType::Addr => RuntimeValue::Addr {
                region: None,
                offset: 0,
            },
            t if t.is_float() => RuntimeValue::Float(0.0),
            _ => RuntimeValue::Int(0),
        }
    }

    pub fn from_const(c: Constant, ty: Option<IrType>) -> RuntimeValue {
        match c {
            Constant::Int(v) => RuntimeValue::Int(ty.map_or(v, |t| wrap(v, t))),
            Constant::Float(v) if ty == Some(IrType::F32) => RuntimeValue::Float(v as f32 as f64),
            Constant::Float(v) => RuntimeValue::Float(v),
            Constant::Null => RuntimeValue::Addr {
                region: None,
                offset: 0,
            },
        }
    }

    /// Bitwise identity (floats compared by bit pattern).
    pub fn same(&self, other: &RuntimeValue) -> bool {
        match (self, other) {
            (RuntimeValue::Int(a), RuntimeValue::Int(b)) => a == b,
            (RuntimeValue::Float(a), RuntimeValue::Float(b)) => a.to_bits() == b.to_bits(),
            (
                RuntimeValue::Addr { region: r1, offset: o1 },
                RuntimeValue::Addr { region: r2, offset: o2 },
            ) => r1 == r2 && o1 == o2,
            _ => false,
        }
    }

    fn fits(&self, ty: IrType) -> bool {
        match self {
            RuntimeValue::Int(_) => ty.is_int(),
            RuntimeValue::Float(_) => ty.is_float(),
            RuntimeValue::Addr { .. } => ty == IrType::Addr,
        }
    }
}

impl fmt::Display for RuntimeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeValue::Int(v) => write!(f, "{v}"),
            RuntimeValue::Float(v) => write!(f, "{v:?}"),
            RuntimeValue::Addr { region: None, offset } => write!(f, "null+{offset}"),
            RuntimeValue::Addr {
                region: Some(r),
                offset,
            } => write!(f, "region{r}+{offset}"),
        }
    }
}

/// Truncate to `ty`'s width and sign-extend back (i1 stays 0/1).
pub fn wrap(v: i64, ty: IrType) -> i64 {
    match ty {
        IrType::I1 => v & 1,
        IrType::I32 => v as i32 as i64,
        _ => v,
    }
}

fn unsigned(v: i64, ty: IrType) -> u64 {
    match ty {
        IrType::I1 => (v & 1) as u64,
        IrType::I32 => v as u32 as u64,
        _ => v as u64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegionKind {
    Global,
    Arg,
    Stack,
}

#[derive(Clone, Debug)]
pub struct Region {
    pub name: String,
    pub elem_ty: IrType,
    pub kind: RegionKind,
    pub cells: Vec<RuntimeValue>,
}

/// Flat, named memory regions.
#[derive(Clone, Debug, Default)]
pub struct Memory {
    regions: Vec<Region>,
}

impl Memory {
    pub fn new() -> Self {
        Memory::default()
    }

    /// Adds a region and returns the address of its first element.
    pub fn add_region(
        &mut self,
        name: impl Into<String>,
        elem_ty: IrType,
        kind: RegionKind,
        cells: Vec<RuntimeValue>,
    ) -> RuntimeValue {
        let id = self.regions.len() as RegionId;
        self.regions.push(Region {
            name: name.into(),
            elem_ty,
            kind,
            cells,
        });
        RuntimeValue::Addr {
            region: Some(id),
            offset: 0,
        }
    }

    pub fn zeroed(&mut self, name: impl Into<String>, elem_ty: IrType, kind: RegionKind, len: usize) -> RuntimeValue {
        self.add_region(name, elem_ty, kind, vec![RuntimeValue::zero(elem_ty); len])
    }

    pub fn id(&self, name: &str) -> Option<RegionId> {
        self.regions
            .iter()
            .position(|r| r.name == name)
            .map(|i| i as RegionId)
    }

    pub fn region(&self, id: RegionId) -> &Region {
        &self.regions[id as usize]
    }

    pub fn by_name(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Global and argument regions (stack frames excluded).
    pub fn snapshot(&self) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(|r| r.kind != RegionKind::Stack)
    }

    /// Region name of an address, or `None` for null.
    pub fn region_name(&self, v: &RuntimeValue) -> Option<&str> {
        match v {
            RuntimeValue::Addr {
                region: Some(r), ..
            } => Some(self.regions[*r as usize].name.as_str()),
            _ => None,
        }
    }

    fn cell(&mut self, addr: RuntimeValue) -> Result<&mut RuntimeValue, ExecError> {
        let RuntimeValue::Addr { region, offset } = addr else {
            return Err(ExecError::TypeFault("address expected".into()));
        };
        let Some(r) = region else {
            return Err(ExecError::NullDeref);
        };
        let region = &mut self.regions[r as usize];
        if offset < 0 || offset as usize >= region.cells.len() {
            return Err(ExecError::OutOfBounds {
                region: region.name.clone(),
                offset,
            });
        }
        Ok(&mut region.cells[offset as usize])
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("step limit of {0} exceeded")]
    StepLimitExceeded(u64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("out-of-bounds access to @{region} at offset {offset}")]
    OutOfBounds { region: String, offset: i64 },
    #[error("null dereference")]
    NullDeref,
    #[error("type fault: {0}")]
    TypeFault(String),
    #[error("call depth limit exceeded")]
    CallDepth,
    #[error("unknown function @{0}")]
    UnknownFunction(String),
    #[error("@{name} expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub function: String,
    pub block: String,
    pub index: usize,
    pub opcode: Opcode,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{} {}", self.block, self.index, self.opcode)
    }
}

#[derive(Clone, Debug)]
pub struct ExecResult {
    pub ret: RuntimeValue,
    pub memory: Memory,
    /// Executed instructions, phis included.
    pub steps: u64,
    pub trace: Option<Vec<TraceEntry>>,
}

impl ExecResult {
    /// One "block:index opcode" line per step.
    pub fn trace_dump(&self) -> String {
        let mut s = String::new();
        for t in self.trace.iter().flatten() {
            s.push_str(&t.to_string());
            s.push('\n');
        }
        s
    }
}

/// Runs `fname` with the given arguments against `mem`. Module memories
/// missing from `mem` are added zero-initialised.
pub fn run_function(
    m: &IrModule,
    fname: &str,
    args: &[RuntimeValue],
    mem: Memory,
    step_limit: u64,
) -> Result<ExecResult, ExecError> {
    Interpreter::new(m).step_limit(step_limit).run(fname, args, mem)
}

pub struct Interpreter<'m> {
    module: &'m IrModule,
    step_limit: u64,
    trace: bool,
}

impl<'m> Interpreter<'m> {
    pub fn new(module: &'m IrModule) -> Self {
        Interpreter {
            module,
            step_limit: DEFAULT_STEP_LIMIT,
            trace: false,
        }
    }

    pub fn step_limit(mut self, limit: u64) -> Self {
        self.step_limit = limit;
        self
    }

    pub fn trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }

    pub fn run(&self, fname: &str, args: &[RuntimeValue], mut mem: Memory) -> Result<ExecResult, ExecError> {
        for decl in &self.module.memories {
            if mem.id(&decl.name).is_none() {
                mem.zeroed(decl.name.clone(), decl.elem_ty, RegionKind::Global, decl.len);
            }
        }
        let fi = self
            .module
            .functions
            .iter()
            .position(|f| f.name == fname)
            .ok_or_else(|| ExecError::UnknownFunction(fname.to_string()))?;
        let globals: HashMap<String, RegionId> = self
            .module
            .memories
            .iter()
            .filter_map(|d| mem.id(&d.name).map(|id| (d.name.clone(), id)))
            .collect();
        let mut m = Machine {
            module: self.module,
            compiled: vec![None; self.module.functions.len()],
            globals,
            mem,
            steps: 0,
            limit: self.step_limit,
            trace: self.trace.then(Vec::new),
            stack_regions: 0,
        };
        let ret = m.call(fi, args.to_vec(), 0)?;
        Ok(ExecResult {
            ret,
            memory: m.mem,
            steps: m.steps,
            trace: m.trace,
        })
    }
}

#[derive(Clone, Debug)]
enum COp {
    Slot(u32),
    Imm(RuntimeValue),
    Block(u32),
    Global(String),
}

#[derive(Debug)]
struct CInst {
    op: Opcode,
    ty: Option<IrType>,
    rty: Option<IrType>,
    dst: Option<u32>,
    args: Vec<COp>,
    pred: Option<Predicate>,
    callee: Option<usize>,
    callee_name: Option<String>,
}

#[derive(Debug)]
struct CPhi {
    dst: u32,
    incoming: Vec<(u32, COp)>,
}

#[derive(Debug)]
struct CBlock {
    label: String,
    phis: Vec<CPhi>,
    body: Vec<CInst>,
}

#[derive(Debug)]
struct CFunc {
    name: String,
    nslots: usize,
    params: Vec<IrType>,
    blocks: Vec<CBlock>,
}

fn compile(m: &IrModule, fi: usize) -> CFunc {
    let f = &m.functions[fi];
    let mut slots: HashMap<&str, u32> = HashMap::new();
    for p in &f.params {
        let n = slots.len() as u32;
        slots.entry(p.name.as_str()).or_insert(n);
    }
    for i in f.instructions() {
        if let Some(n) = i.result_name() {
            let k = slots.len() as u32;
            slots.entry(n).or_insert(k);
        }
    }
    let labels = f.block_map();
    let types = f.value_types();
    let lookup = |n: &str| types.get(n).copied();
    let conv = |o: &Operand, ty: Option<IrType>| -> COp {
        match o {
            Operand::Value(v) => COp::Slot(slots.get(v.as_str()).copied().unwrap_or(u32::MAX)),
            Operand::Const(c) => COp::Imm(RuntimeValue::from_const(*c, ty)),
            Operand::Label(l) => COp::Block(labels.get(l.as_str()).copied().unwrap_or(usize::MAX) as u32),
            Operand::Global(g) => COp::Global(g.clone()),
        }
    };
    let blocks = f
        .blocks
        .iter()
        .map(|b| {
            let np = b.first_non_phi();
            let phis = b.instrs[..np]
                .iter()
                .map(|i| CPhi {
                    dst: slots[i.result_name().unwrap()],
                    incoming: i
                        .phi_incoming()
                        .map(|(v, l)| (labels.get(l).copied().unwrap_or(usize::MAX) as u32, conv(v, i.ty)))
                        .collect(),
                })
                .collect();
            let body = b.instrs[np..]
                .iter()
                .map(|i| {
                    let callee = i
                        .callee
                        .as_deref()
                        .and_then(|c| m.functions.iter().position(|g| g.name == c));
                    let cparams: Option<Vec<IrType>> =
                        callee.map(|c| m.functions[c].params.iter().map(|p| p.ty).collect());
                    let tys = operand_types(i, &lookup, cparams.as_deref());
                    CInst {
                        op: i.opcode,
                        ty: i.ty,
                        rty: i.result_type(),
                        dst: i.result_name().map(|n| slots[n]),
                        args: i
                            .operands
                            .iter()
                            .zip(tys)
                            .map(|(o, t)| conv(o, t))
                            .collect(),
                        pred: i.predicate,
                        callee,
                        callee_name: i.callee.clone(),
                    }
                })
                .collect();
            CBlock {
                label: b.label.clone(),
                phis,
                body,
            }
        })
        .collect();
    CFunc {
        name: f.name.clone(),
        nslots: slots.len(),
        params: f.params.iter().map(|p| p.ty).collect(),
        blocks,
    }
}

struct Machine<'m> {
    module: &'m IrModule,
    compiled: Vec<Option<Rc<CFunc>>>,
    globals: HashMap<String, RegionId>,
    mem: Memory,
    steps: u64,
    limit: u64,
    trace: Option<Vec<TraceEntry>>,
    stack_regions: usize,
}

enum Flow {
    Next,
    Jump(u32),
    Return(RuntimeValue),
}

fn fault(msg: &str) -> ExecError {
    ExecError::TypeFault(msg.to_string())
}

impl Machine<'_> {
    fn step(&mut self, f: &CFunc, block: usize, index: usize, op: Opcode) -> Result<(), ExecError> {
        self.steps += 1;
        if self.steps > self.limit {
            self.steps = self.limit;
            return Err(ExecError::StepLimitExceeded(self.limit));
        }
        if let Some(t) = &mut self.trace {
            t.push(TraceEntry {
                function: f.name.clone(),
                block: f.blocks[block].label.clone(),
                index,
                opcode: op,
            });
        }
        Ok(())
    }

    fn call(&mut self, fi: usize, args: Vec<RuntimeValue>, depth: usize) -> Result<RuntimeValue, ExecError> {
        if depth >= MAX_CALL_DEPTH {
            return Err(ExecError::CallDepth);
        }
        let f = match &self.compiled[fi] {
            Some(f) => f.clone(),
            None => {
                let f = Rc::new(compile(self.module, fi));
                self.compiled[fi] = Some(f.clone());
                f
            }
        };
        if args.len() != f.params.len() {
            return Err(ExecError::Arity {
                name: f.name.clone(),
                expected: f.params.len(),
                got: args.len(),
            });
        }
        let mut slots = vec![RuntimeValue::Int(0); f.nslots];
        for (k, (a, t)) in args.iter().zip(&f.params).enumerate() {
            if !a.fits(*t) {
                return Err(fault("argument type does not match parameter"));
            }
            slots[k] = *a;
        }
        let mut cur = 0usize;
        let mut prev: Option<u32> = None;
        let mut incoming = Vec::new();
        loop {
            let block = &f.blocks[cur];
            if !block.phis.is_empty() {
                let p = prev.ok_or_else(|| fault("phi in entry block"))?;
                incoming.clear();
                for (k, phi) in block.phis.iter().enumerate() {
                    self.step(&f, cur, k, Opcode::Phi)?;
                    let v = phi
                        .incoming
                        .iter()
                        .find(|(b, _)| *b == p)
                        .map(|(_, v)| v)
                        .ok_or_else(|| fault("phi has no incoming value for predecessor"))?;
                    incoming.push(self.eval(&slots, v)?);
                }
                for (phi, v) in block.phis.iter().zip(&incoming) {
                    slots[phi.dst as usize] = *v;
                }
            }
            let np = block.phis.len();
            let mut next = None;
            for (k, inst) in block.body.iter().enumerate() {
                self.step(&f, cur, np + k, inst.op)?;
                match self.exec(&mut slots, inst, depth)? {
                    Flow::Next => {}
                    Flow::Jump(b) => {
                        next = Some(b);
                        break;
                    }
                    Flow::Return(v) => return Ok(v),
                }
            }
            let Some(n) = next else {
                return Err(fault("fell off the end of a block"));
            };
            prev = Some(cur as u32);
            cur = n as usize;
        }
    }

    fn eval(&self, slots: &[RuntimeValue], o: &COp) -> Result<RuntimeValue, ExecError> {
        match o {
            COp::Slot(s) => slots.get(*s as usize).copied().ok_or_else(|| fault("undefined value")),
            COp::Imm(v) => Ok(*v),
            COp::Global(g) => self
                .globals
                .get(g)
                .map(|&r| RuntimeValue::Addr {
                    region: Some(r),
                    offset: 0,
                })
                .ok_or_else(|| fault("unknown memory")),
            COp::Block(_) => Err(fault("label used as value")),
        }
    }

    fn int(&self, slots: &[RuntimeValue], o: &COp) -> Result<i64, ExecError> {
        match self.eval(slots, o)? {
            RuntimeValue::Int(v) => Ok(v),
            _ => Err(fault("integer expected")),
        }
    }

    fn float(&self, slots: &[RuntimeValue], o: &COp) -> Result<f64, ExecError> {
        match self.eval(slots, o)? {
            RuntimeValue::Float(v) => Ok(v),
            _ => Err(fault("float expected")),
        }
    }

    fn block(o: &COp) -> Result<u32, ExecError> {
        match o {
            COp::Block(b) if *b != u32::MAX => Ok(*b),
            _ => Err(fault("label expected")),
        }
    }

    fn exec(&mut self, slots: &mut [RuntimeValue], i: &CInst, depth: usize) -> Result<Flow, ExecError> {
        use Opcode::*;
        let ty = i.ty.unwrap_or(IrType::I64);
        let a = &i.args;
        let v = match i.op {
            op if op.is_int_binary() => {
                let x = self.int(slots, &a[0])?;
                let y = self.int(slots, &a[1])?;
                let w = ty.bit_width();
                let r = match op {
                    Add => x.wrapping_add(y),
                    Sub => x.wrapping_sub(y),
                    Mul => x.wrapping_mul(y),
                    SDiv => {
                        if y == 0 {
                            return Err(ExecError::DivisionByZero);
                        }
                        x.wrapping_div(y)
                    }
                    And => x & y,
                    Or => x | y,
                    Xor => x ^ y,
                    Shl => x.wrapping_shl(unsigned(y, ty) as u32 % w),
                    LShr => (unsigned(x, ty) >> (unsigned(y, ty) as u32 % w)) as i64,
                    AShr => x >> (unsigned(y, ty) as u32 % w),
                    _ => unreachable!(),
                };
                RuntimeValue::Int(wrap(r, ty))
            }
            op if op.is_float_binary() => {
                let x = self.float(slots, &a[0])?;
                let y = self.float(slots, &a[1])?;
                let r = match op {
                    FAdd => x + y,
                    FSub => x - y,
                    FMul => x * y,
                    FDiv => x / y,
                    _ => unreachable!(),
                };
                RuntimeValue::Float(if ty == IrType::F32 { r as f32 as f64 } else { r })
            }
            ICmp => {
                let x = self.int(slots, &a[0])?;
                let y = self.int(slots, &a[1])?;
                let (ux, uy) = (unsigned(x, ty), unsigned(y, ty));
                let r = match i.pred.ok_or_else(|| fault("icmp without predicate"))? {
                    Predicate::Eq => x == y,
                    Predicate::Ne => x != y,
                    Predicate::Slt => x < y,
                    Predicate::Sle => x <= y,
                    Predicate::Sgt => x > y,
                    Predicate::Sge => x >= y,
                    Predicate::Ult => ux < uy,
                    Predicate::Ule => ux <= uy,
                    Predicate::Ugt => ux > uy,
                    Predicate::Uge => ux >= uy,
                    _ => return Err(fault("float predicate on icmp")),
                };
                RuntimeValue::Int(r as i64)
            }
            FCmp => {
                let x = self.float(slots, &a[0])?;
                let y = self.float(slots, &a[1])?;
                let ordered = !x.is_nan() && !y.is_nan();
                let r = ordered
                    && match i.pred.ok_or_else(|| fault("fcmp without predicate"))? {
                        Predicate::Oeq => x == y,
                        Predicate::One => x != y,
                        Predicate::Olt => x < y,
                        Predicate::Ole => x <= y,
                        Predicate::Ogt => x > y,
                        Predicate::Oge => x >= y,
                        _ => return Err(fault("integer predicate on fcmp")),
                    };
                RuntimeValue::Int(r as i64)
            }
            SExt => {
                let x = self.int(slots, &a[0])?;
                let x = if ty == IrType::I1 { -(x & 1) } else { x };
                RuntimeValue::Int(wrap(x, i.rty.unwrap_or(IrType::I64)))
            }
            ZExt => {
                let x = self.int(slots, &a[0])?;
                RuntimeValue::Int(wrap(unsigned(x, ty) as i64, i.rty.unwrap_or(IrType::I64)))
            }
            Trunc => {
                let x = self.int(slots, &a[0])?;
                RuntimeValue::Int(wrap(x, i.rty.unwrap_or(IrType::I64)))
            }
            Select => {
                let c = self.int(slots, &a[0])?;
                self.eval(slots, if c & 1 != 0 { &a[1] } else { &a[2] })?
            }
            Load => {
                let addr = self.eval(slots, &a[0])?;
                let v = *self.mem.cell(addr)?;
                match v {
                    RuntimeValue::Int(x) if ty.is_int() => RuntimeValue::Int(wrap(x, ty)),
                    RuntimeValue::Float(x) if ty == IrType::F32 => RuntimeValue::Float(x as f32 as f64),
                    v if v.fits(ty) => v,
                    _ => return Err(fault("load type does not match stored value")),
                }
            }
            Store => {
                let v = self.eval(slots, &a[0])?;
                let addr = self.eval(slots, &a[1])?;
                *self.mem.cell(addr)? = v;
                return Ok(Flow::Next);
            }
            Alloca => {
                self.stack_regions += 1;
                let name = format!("stack.{}", self.stack_regions);
                self.mem.zeroed(name, ty, RegionKind::Stack, 1)
            }
            Gep => {
                let base = self.eval(slots, &a[0])?;
                let idx = self.int(slots, &a[1])?;
                match base {
                    RuntimeValue::Addr { region, offset } => RuntimeValue::Addr {
                        region,
                        offset: offset.wrapping_add(idx),
                    },
                    _ => return Err(fault("gep base is not an address")),
                }
            }
            Br => return Ok(Flow::Jump(Self::block(&a[0])?)),
            CondBr => {
                let c = self.int(slots, &a[0])?;
                let t = if c & 1 != 0 { &a[1] } else { &a[2] };
                return Ok(Flow::Jump(Self::block(t)?));
            }
            Switch => {
                let x = self.int(slots, &a[0])?;
                let mut target = Self::block(&a[1])?;
                for case in a[2..].chunks(2) {
                    if let COp::Imm(RuntimeValue::Int(c)) = case[0] {
                        if wrap(c, ty) == x {
                            target = Self::block(&case[1])?;
                            break;
                        }
                    }
                }
                return Ok(Flow::Jump(target));
            }
            Ret => return Ok(Flow::Return(self.eval(slots, &a[0])?)),
            Call => {
                let callee = i.callee.ok_or_else(|| {
                    ExecError::UnknownFunction(i.callee_name.clone().unwrap_or_default())
                })?;
                let args = a
                    .iter()
                    .map(|o| self.eval(slots, o))
                    .collect::<Result<Vec<_>, _>>()?;
                self.call(callee, args, depth + 1)?
            }
            Phi => return Err(fault("phi after non-phi instruction")),
            _ => unreachable!(),
        };
        if let Some(d) = i.dst {
            slots[d as usize] = v;
        }
        Ok(Flow::Next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    fn run(src: &str, f: &str, args: &[RuntimeValue]) -> Result<ExecResult, ExecError> {
        run_function(&parse_module(src).unwrap(), f, args, Memory::new(), 10_000)
    }

    fn int(r: &ExecResult) -> i64 {
        match r.ret {
            RuntimeValue::Int(v) => v,
            other => panic!("not an int: {other}"),
        }
    }

    const SUM: &str = "func @sum(%n: i32) -> i32 {
        entry: br head
        head:
          %i = phi i32 [1, entry], [%i2, body]
          %s = phi i32 [0, entry], [%s2, body]
          %c = icmp sle i32 %i, %n
          condbr %c, body, exit
        body:
          %s2 = add i32 %s, %i
          %i2 = add i32 %i, 1
          br head
        exit: ret i32 %s
      }";

    #[test]
    fn identity() {
        let r = run("func @id(%a: i32) -> i32 { entry: ret i32 %a }", "id", &[RuntimeValue::Int(7)]).unwrap();
        assert_eq!(int(&r), 7);
        assert_eq!(r.steps, 1);
    }

    #[test]
    fn sum_loop() {
        let r = run(SUM, "sum", &[RuntimeValue::Int(4)]).unwrap();
        assert_eq!(int(&r), 10);
    }

    #[test]
    fn infinite_loop_hits_the_limit() {
        let m = parse_module("func @spin() -> i32 { entry: br l l: br l }").unwrap();
        let e = run_function(&m, "spin", &[], Memory::new(), 1000).unwrap_err();
        assert_eq!(e, ExecError::StepLimitExceeded(1000));
    }

    #[test]
    fn division_by_zero_and_bounds_are_distinct() {
        let e = run(
            "func @d(%a: i32) -> i32 { entry: %x = sdiv i32 %a, 0 ret i32 %x }",
            "d",
            &[RuntimeValue::Int(1)],
        )
        .unwrap_err();
        assert_eq!(e, ExecError::DivisionByZero);
        let e = run(
            "mem @A: i32[4]
             func @o() -> i32 { entry: %p = gep i32 @A, 4 %x = load i32 %p ret i32 %x }",
            "o",
            &[],
        )
        .unwrap_err();
        assert!(matches!(e, ExecError::OutOfBounds { offset: 4, .. }));
    }

    #[test]
    fn integers_wrap() {
        let r = run(
            "func @w(%a: i32) -> i32 { entry: %x = add i32 %a, 1 ret i32 %x }",
            "w",
            &[RuntimeValue::Int(i32::MAX as i64)],
        )
        .unwrap();
        assert_eq!(int(&r), i32::MIN as i64);
        let r = run(
            "func @s(%a: i32) -> i32 { entry: %x = lshr i32 %a, 28 ret i32 %x }",
            "s",
            &[RuntimeValue::Int(-1)],
        )
        .unwrap();
        assert_eq!(int(&r), 15);
    }

    #[test]
    fn casts() {
        let src = "func @c(%b: i1) -> i64 { entry:
            %s = sext i1 %b to i32
            %z = zext i32 %s to i64
            ret i64 %z }";
        let r = run(src, "c", &[RuntimeValue::Int(1)]).unwrap();
        assert_eq!(int(&r), u32::MAX as i64);
    }

    #[test]
    fn phis_read_old_values() {
        let src = "func @swap(%n: i32) -> i32 {
          entry: br l
          l:
            %a = phi i32 [1, entry], [%b, l2]
            %b = phi i32 [2, entry], [%a, l2]
            %k = phi i32 [0, entry], [%k2, l2]
            %c = icmp slt i32 %k, %n
            condbr %c, l2, out
          l2:
            %k2 = add i32 %k, 1
            br l
          out:
            %r = mul i32 %a, 10
            %r2 = add i32 %r, %b
            ret i32 %r2 }";
        assert_eq!(int(&run(src, "swap", &[RuntimeValue::Int(1)]).unwrap()), 21);
        assert_eq!(int(&run(src, "swap", &[RuntimeValue::Int(2)]).unwrap()), 12);
    }

    #[test]
    fn memory_and_calls() {
        let src = "mem @A: i32[8]
          func @put(%p: addr, %v: i32) -> i32 { entry: store i32 %v, %p ret i32 %v }
          func @main(%v: i32) -> i32 { entry:
            %q = gep i32 @A, 3
            %r = call i32 @put(%q, %v)
            %x = load i32 %q
            ret i32 %x }";
        let r = run(src, "main", &[RuntimeValue::Int(-5)]).unwrap();
        assert_eq!(int(&r), -5);
        let a = r.memory.by_name("A").unwrap();
        assert!(a.cells[3].same(&RuntimeValue::Int(-5)));
    }

    #[test]
    fn trace_is_deterministic() {
        let m = parse_module(SUM).unwrap();
        let go = || {
            Interpreter::new(&m)
                .trace(true)
                .run("sum", &[RuntimeValue::Int(3)], Memory::new())
                .unwrap()
        };
        let (a, b) = (go(), go());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.as_ref().unwrap().len() as u64, a.steps);
        assert!(a.trace_dump().starts_with("entry:0 br\nhead:0 phi\nhead:1 phi\nhead:2 icmp\n"));
    }

    #[test]
    fn null_deref() {
        let e = run(
            "func @n() -> i32 { entry: %x = load i32 null ret i32 %x }",
            "n",
            &[],
        )
        .unwrap_err();
        assert_eq!(e, ExecError::NullDeref);
    }
}
