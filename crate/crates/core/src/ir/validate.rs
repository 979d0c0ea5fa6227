use std::collections::{HashMap, HashSet};
use std::fmt;

use super::cfg::{Cfg, DomTree};
use super::{operand_types, Constant, IrFunction, IrModule, IrType, Opcode, Operand};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    MissingTerminator,
    MultipleTerminators,
    PhiPlacement,
    EntryPredecessor,
    UnknownLabel,
    DuplicateLabel,
    DuplicateDefinition,
    UndefinedValue,
    Dominance,
    TypeMismatch,
    PhiIncoming,
    Malformed,
    UnknownCallee,
    UnknownMemory,
    DuplicateSymbol,
}

/// One broken invariant, located by function, block and instruction index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub function: String,
    pub block: Option<String>,
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)?;
        match (&self.block, self.index) {
            (Some(b), Some(i)) => write!(f, " in @{}:{}[{}]", self.function, b, i),
            (Some(b), None) => write!(f, " in @{}:{}", self.function, b),
            _ => write!(f, " in @{}", self.function),
        }
    }
}

struct Ctx<'a> {
    f: &'a IrFunction,
    out: Vec<Violation>,
}

impl Ctx<'_> {
    fn report(&mut self, kind: ViolationKind, block: Option<usize>, index: Option<usize>, msg: String) {
        self.out.push(Violation {
            kind,
            function: self.f.name.clone(),
            block: block.map(|b| self.f.blocks[b].label.clone()),
            index,
            message: msg,
        });
    }
}

/// Checks every structural, typing and SSA invariant of a module.
/// Returns an empty list iff the module is valid.
pub fn validate(m: &IrModule) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for f in &m.functions {
        if !seen.insert(f.name.as_str()) {
            out.push(Violation {
                kind: ViolationKind::DuplicateSymbol,
                function: f.name.clone(),
                block: None,
                index: None,
                message: format!("duplicate function @{}", f.name),
            });
        }
    }
    let mut mems = HashSet::new();
    for mem in &m.memories {
        if !mems.insert(mem.name.as_str()) {
            out.push(Violation {
                kind: ViolationKind::DuplicateSymbol,
                function: String::new(),
                block: None,
                index: None,
                message: format!("duplicate memory @{}", mem.name),
            });
        }
    }
    for f in &m.functions {
        out.extend(validate_function(f, Some(m)));
    }
    out
}

#[derive(Clone, Copy)]
enum Def {
    Param,
    At(usize, usize),
}

/// Checks one function. With `module = None` calls and globals are not
/// resolved.
pub fn validate_function(f: &IrFunction, module: Option<&IrModule>) -> Vec<Violation> {
    use ViolationKind as K;
    let mut cx = Ctx { f, out: Vec::new() };

    if f.blocks.is_empty() {
        cx.report(K::Malformed, None, None, "function has no blocks".into());
        return cx.out;
    }

    // labels
    let mut labels: HashMap<&str, usize> = HashMap::new();
    for (b, block) in f.blocks.iter().enumerate() {
        if labels.insert(block.label.as_str(), b).is_some() {
            cx.report(K::DuplicateLabel, Some(b), None, format!("duplicate block label {}", block.label));
        }
    }

    // block shape
    for (b, block) in f.blocks.iter().enumerate() {
        if block.instrs.is_empty() {
            cx.report(K::MissingTerminator, Some(b), None, "empty block".into());
            continue;
        }
        let terms = block.instrs.iter().filter(|i| i.is_terminator()).count();
        if terms > 1 {
            cx.report(K::MultipleTerminators, Some(b), None, "multiple terminators".into());
        } else if !block.instrs.last().is_some_and(|i| i.is_terminator()) {
            cx.report(K::MissingTerminator, Some(b), None, "missing terminator".into());
        }
        let prefix = block.first_non_phi();
        if let Some(k) = block.instrs[prefix..].iter().position(|i| i.is_phi()) {
            cx.report(K::PhiPlacement, Some(b), Some(prefix + k), "phi after non-phi instruction".into());
        }
        if b == 0 && prefix > 0 {
            cx.report(K::PhiPlacement, Some(0), Some(0), "phi in entry block".into());
        }
        for (k, i) in block.instrs.iter().enumerate() {
            for o in &i.operands {
                if let Operand::Label(l) = o {
                    if !labels.contains_key(l.as_str()) {
                        cx.report(K::UnknownLabel, Some(b), Some(k), format!("unknown block label {l}"));
                    }
                }
            }
        }
    }

    // definitions
    let mut defs: HashMap<&str, Def> = HashMap::new();
    let mut types: HashMap<&str, IrType> = HashMap::new();
    for p in &f.params {
        if defs.insert(p.name.as_str(), Def::Param).is_some() {
            cx.report(K::DuplicateDefinition, None, None, format!("duplicate definition of %{}", p.name));
        }
        types.insert(p.name.as_str(), p.ty);
    }
    for (b, block) in f.blocks.iter().enumerate() {
        for (k, i) in block.instrs.iter().enumerate() {
            if let Some((n, t)) = &i.result {
                if defs.insert(n.as_str(), Def::At(b, k)).is_some() {
                    cx.report(K::DuplicateDefinition, Some(b), Some(k), format!("duplicate definition of %{n}"));
                }
                types.insert(n.as_str(), *t);
            }
        }
    }

    check_types(&mut cx, module, &types);

    let cfg = Cfg::new(f);
    if !cfg.preds[0].is_empty() {
        cx.report(K::EntryPredecessor, Some(0), None, "entry block has predecessors".into());
    }
    let dom = DomTree::new(&cfg);

    // phi incoming sets
    for (b, block) in f.blocks.iter().enumerate() {
        let preds: HashSet<&str> = cfg.preds[b].iter().map(|&p| f.blocks[p].label.as_str()).collect();
        for (k, i) in block.phis().iter().enumerate() {
            let mut incoming = HashSet::new();
            let mut dup = false;
            for (_, l) in i.phi_incoming() {
                dup |= !incoming.insert(l);
            }
            if dup || incoming != preds {
                cx.report(
                    K::PhiIncoming,
                    Some(b),
                    Some(k),
                    "phi incoming blocks do not match predecessors".into(),
                );
            }
        }
    }

    // uses: defined, and dominated by their definition
    for (b, block) in f.blocks.iter().enumerate() {
        for (k, i) in block.instrs.iter().enumerate() {
            if i.is_phi() {
                for (v, l) in i.phi_incoming() {
                    let Operand::Value(name) = v else { continue };
                    match defs.get(name.as_str()) {
                        None => cx.report(K::UndefinedValue, Some(b), Some(k), format!("undefined value %{name}")),
                        Some(Def::Param) => {}
                        Some(Def::At(db, _)) => {
                            let Some(&p) = labels.get(l) else { continue };
                            if dom.is_reachable(p) && !dom.dominates(*db, p) {
                                cx.report(
                                    K::Dominance,
                                    Some(b),
                                    Some(k),
                                    format!("%{name} does not dominate the end of {l}"),
                                );
                            }
                        }
                    }
                }
                continue;
            }
            for name in i.used_values() {
                match defs.get(name) {
                    None => cx.report(K::UndefinedValue, Some(b), Some(k), format!("undefined value %{name}")),
                    Some(Def::Param) => {}
                    Some(&Def::At(db, dk)) => {
                        if !dom.is_reachable(b) {
                            continue;
                        }
                        let ok = if db == b { dk < k } else { dom.dominates(db, b) };
                        if !ok {
                            cx.report(K::Dominance, Some(b), Some(k), format!("%{name} does not dominate its use"));
                        }
                    }
                }
            }
        }
    }
    cx.out
}

fn check_types(cx: &mut Ctx<'_>, module: Option<&IrModule>, types: &HashMap<&str, IrType>) {
    use ViolationKind as K;
    let f = cx.f;
    for (b, block) in f.blocks.iter().enumerate() {
        for (k, i) in block.instrs.iter().enumerate() {
            let bad = |cx: &mut Ctx<'_>, kind: K, msg: String| cx.report(kind, Some(b), Some(k), msg);
            let n = i.operands.len();
            let arity_ok = match i.opcode {
                op if op.is_int_binary() || op.is_float_binary() => n == 2,
                Opcode::ICmp | Opcode::FCmp | Opcode::Store | Opcode::Gep => n == 2,
                Opcode::SExt | Opcode::ZExt | Opcode::Trunc | Opcode::Load | Opcode::Ret | Opcode::Br => n == 1,
                Opcode::Select | Opcode::CondBr => n == 3,
                Opcode::Alloca => n == 0,
                Opcode::Switch => n >= 2 && n % 2 == 0,
                Opcode::Phi => n >= 4 && n % 2 == 0,
                Opcode::Call => true,
                _ => true,
            };
            if !arity_ok {
                bad(cx, K::Malformed, format!("wrong operand count for {}", i.opcode));
                continue;
            }
            let needs_ty = !matches!(i.opcode, Opcode::Br | Opcode::CondBr);
            if needs_ty && i.ty.is_none() {
                bad(cx, K::Malformed, format!("{} without a type", i.opcode));
                continue;
            }
            let ty = i.ty;
            let expect_result = match i.opcode {
                op if op.is_int_binary() || op.is_float_binary() => ty,
                Opcode::ICmp | Opcode::FCmp => Some(IrType::I1),
                Opcode::SExt | Opcode::ZExt | Opcode::Trunc => i.result_type(),
                Opcode::Select | Opcode::Load | Opcode::Phi | Opcode::Call => ty,
                Opcode::Alloca | Opcode::Gep => Some(IrType::Addr),
                _ => None,
            };
            if i.result_type() != expect_result {
                bad(cx, K::TypeMismatch, format!("{} result has the wrong type", i.opcode));
            }
            let ty_ok = match i.opcode {
                op if op.is_int_binary() => ty.is_some_and(IrType::is_int),
                op if op.is_float_binary() => ty.is_some_and(IrType::is_float),
                Opcode::ICmp => {
                    ty.is_some_and(IrType::is_int) && i.predicate.is_some_and(|p| !p.is_float())
                }
                Opcode::FCmp => {
                    ty.is_some_and(IrType::is_float) && i.predicate.is_some_and(|p| p.is_float())
                }
                Opcode::SExt | Opcode::ZExt => match (ty, i.result_type()) {
                    (Some(s), Some(d)) => s.is_int() && d.is_int() && d.bit_width() > s.bit_width(),
                    _ => false,
                },
                Opcode::Trunc => match (ty, i.result_type()) {
                    (Some(s), Some(d)) => s.is_int() && d.is_int() && d.bit_width() < s.bit_width(),
                    _ => false,
                },
                Opcode::Switch => ty.is_some_and(IrType::is_int),
                Opcode::Ret => ty == Some(f.ret_ty),
                _ => true,
            };
            if !ty_ok {
                bad(cx, K::TypeMismatch, format!("ill-typed {}", i.opcode));
            }

            let mut callee_params: Option<Vec<IrType>> = None;
            if i.opcode == Opcode::Call {
                if let Some(m) = module {
                    match i.callee.as_deref().and_then(|c| m.function(c)) {
                        None => bad(
                            cx,
                            K::UnknownCallee,
                            format!("unknown callee @{}", i.callee.as_deref().unwrap_or("?")),
                        ),
                        Some(callee) => {
                            if callee.params.len() != n {
                                bad(cx, K::TypeMismatch, format!("call to @{} has wrong arity", callee.name));
                            }
                            if ty != Some(callee.ret_ty) {
                                bad(cx, K::TypeMismatch, format!("call to @{} has wrong return type", callee.name));
                            }
                            callee_params = Some(callee.params.iter().map(|p| p.ty).collect());
                        }
                    }
                }
            }

            let lookup = |name: &str| types.get(name).copied();
            let expected = operand_types(i, &lookup, callee_params.as_deref());
            let label_slot = |idx: usize| match i.opcode {
                Opcode::Br => true,
                Opcode::CondBr => idx >= 1,
                Opcode::Switch => idx == 1 || (idx >= 2 && idx % 2 == 1),
                Opcode::Phi => idx % 2 == 1,
                _ => false,
            };
            for (idx, o) in i.operands.iter().enumerate() {
                let want = expected.get(idx).copied().flatten();
                match o {
                    Operand::Label(_) if label_slot(idx) => {}
                    Operand::Label(l) => bad(cx, K::Malformed, format!("unexpected label {l}")),
                    _ if label_slot(idx) => bad(cx, K::Malformed, "expected a block label".into()),
                    Operand::Value(v) => {
                        if let (Some(have), Some(want)) = (types.get(v.as_str()), want) {
                            if *have != want {
                                bad(cx, K::TypeMismatch, format!("type mismatch: %{v} is {have}, expected {want}"));
                            }
                        } else if i.opcode == Opcode::Gep && idx == 1
                            && types.get(v.as_str()).is_some_and(|t| !t.is_int()) {
                                bad(cx, K::TypeMismatch, format!("gep index %{v} is not an integer"));
                            }
                    }
                    Operand::Const(c) => {
                        let fits = match (c, want) {
                            (_, None) => true,
                            (Constant::Int(_), Some(t)) => t.is_int(),
                            (Constant::Float(_), Some(t)) => t.is_float(),
                            (Constant::Null, Some(t)) => t == IrType::Addr,
                        };
                        if !fits {
                            bad(cx, K::TypeMismatch, format!("constant does not fit {}", want.unwrap()));
                        }
                        if i.opcode == Opcode::Switch && idx >= 2 && !matches!(c, Constant::Int(_)) {
                            bad(cx, K::Malformed, "switch case must be an integer".into());
                        }
                    }
                    Operand::Global(g) => {
                        if want.is_some_and(|t| t != IrType::Addr) {
                            bad(cx, K::TypeMismatch, format!("@{g} is an address"));
                        }
                        if let Some(m) = module {
                            if m.memory(g).is_none() {
                                bad(cx, K::UnknownMemory, format!("unknown memory @{g}"));
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse_unvalidated;
    use super::*;

    fn violations(src: &str) -> Vec<Violation> {
        validate(&parse_unvalidated(src).unwrap())
    }

    #[test]
    fn valid_module_has_no_violations() {
        assert!(violations("func @id(%a: i32) -> i32 { entry: ret i32 %a }").is_empty());
    }

    #[test]
    fn two_returns() {
        let v = violations("func @f() -> i32 { entry: ret i32 1 ret i32 2 }");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "multiple terminators in @f:entry");
    }

    #[test]
    fn diamond_without_phi_is_a_dominance_violation() {
        let v = violations(
            "func @f(%c: i1) -> i32 {
             entry: condbr %c, l, r
             l: %x = add i32 1, 2
                br j
             r: br j
             j: ret i32 %x }",
        );
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::Dominance);
        assert_eq!(v[0].block.as_deref(), Some("j"));
    }

    #[test]
    fn phi_must_cover_predecessors() {
        let v = violations(
            "func @f(%c: i1) -> i32 {
             entry: condbr %c, l, r
             l: br j
             r: br j
             j: %p = phi i32 [1, l], [2, entry]
                ret i32 %p }",
        );
        assert!(v.iter().any(|x| x.kind == ViolationKind::PhiIncoming), "{v:?}");
    }

    #[test]
    fn unknown_label_and_callee() {
        let v = violations("func @f() -> i32 { entry: %x = call i32 @g() br nowhere }");
        let kinds: Vec<_> = v.iter().map(|x| x.kind).collect();
        assert!(kinds.contains(&ViolationKind::UnknownLabel));
        assert!(kinds.contains(&ViolationKind::UnknownCallee));
    }

    #[test]
    fn entry_with_predecessor() {
        let v = violations("func @f() -> i32 { entry: br entry }");
        assert!(v.iter().any(|x| x.kind == ViolationKind::EntryPredecessor));
    }
}
