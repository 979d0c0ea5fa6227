//! Needleman-Wunsch alignment of linearized functions.

use std::fmt;

use thiserror::Error;

use crate::ir::{Instruction, IrType, Opcode, OpcodeClass, Operand};
use crate::linearize::{ItemRef, LinearSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Uniform,
    Control,
    Memory,
    Arithmetic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Uniform, ModelKind::Control, ModelKind::Memory, ModelKind::Arithmetic];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Uniform => "uniform",
            ModelKind::Control => "control",
            ModelKind::Memory => "memory",
            ModelKind::Arithmetic => "arithmetic",
        }
    }

    pub fn from_name(s: &str) -> Option<ModelKind> {
        ModelKind::ALL.into_iter().find(|m| m.name() == s)
    }

    fn emphasised(self) -> Option<OpcodeClass> {
        match self {
            ModelKind::Uniform => None,
            ModelKind::Control => Some(OpcodeClass::Control),
            ModelKind::Memory => Some(OpcodeClass::Memory),
            ModelKind::Arithmetic => Some(OpcodeClass::Arithmetic),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-class match weights: the emphasised class scores `emphasis`,
/// everything else 1, block markers 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentModel {
    pub kind: ModelKind,
    pub emphasis: f64,
}

impl AlignmentModel {
    pub const DEFAULT_EMPHASIS: f64 = 2.0;

    pub fn new(kind: ModelKind) -> Self {
        AlignmentModel {
            kind,
            emphasis: Self::DEFAULT_EMPHASIS,
        }
    }

    pub fn uniform() -> Self {
        Self::new(ModelKind::Uniform)
    }

    pub fn control() -> Self {
        Self::new(ModelKind::Control)
    }

    pub fn memory() -> Self {
        Self::new(ModelKind::Memory)
    }

    pub fn arithmetic() -> Self {
        Self::new(ModelKind::Arithmetic)
    }

    pub fn weight(&self, class: OpcodeClass) -> f64 {
        if self.kind.emphasised() == Some(class) {
            self.emphasis
        } else {
            1.0
        }
    }

    pub fn opcode_weight(&self, op: Opcode) -> f64 {
        self.weight(op.class())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlignEntry {
    Match(usize, usize),
    GapA(usize),
    GapB(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub entries: Vec<AlignEntry>,
    pub score: f64,
}

impl Alignment {
    pub fn matches(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.iter().filter_map(|e| match *e {
            AlignEntry::Match(i, j) => Some((i, j)),
            _ => None,
        })
    }

    /// One "M i j opcode", "A i opcode" or "B j opcode" line per entry.
    pub fn dump(&self, a: &LinearSeq<'_>, b: &LinearSeq<'_>) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let line = match *e {
                AlignEntry::Match(i, j) => format!("M {i} {j} {}", a.describe(i)),
                AlignEntry::GapA(i) => format!("A {i} {}", a.describe(i)),
                AlignEntry::GapB(j) => format!("B {j} {}", b.describe(j)),
            };
            s.push_str(&line);
            s.push('\n');
        }
        s
    }
}

fn gep_index_type(i: &Instruction, types: &dyn Fn(&str) -> Option<IrType>) -> Option<IrType> {
    match i.operands.get(1)? {
        Operand::Value(v) => types(v),
        _ => Some(IrType::I64),
    }
}

/// Whether two instructions can be emitted as one: same opcode, result type,
/// instruction type, operand count and predicate; calls need the same
/// callee, switches the same case constants, geps the same index type.
/// Phis never fuse.
pub fn fusable(
    x: &Instruction,
    x_types: &dyn Fn(&str) -> Option<IrType>,
    y: &Instruction,
    y_types: &dyn Fn(&str) -> Option<IrType>,
) -> bool {
    if x.is_phi() || y.is_phi() {
        return false;
    }
    if x.opcode != y.opcode
        || x.result_type() != y.result_type()
        || x.ty != y.ty
        || x.operands.len() != y.operands.len()
        || x.predicate != y.predicate
    {
        return false;
    }
    match x.opcode {
        Opcode::Call => x.callee == y.callee,
        Opcode::Switch => x
            .operands
            .iter()
            .zip(&y.operands)
            .skip(2)
            .step_by(2)
            .all(|(a, b)| a == b),
        Opcode::Gep => gep_index_type(x, x_types) == gep_index_type(y, y_types),
        _ => true,
    }
}

/// Whether item `i` of `a` may be fused with item `j` of `b`.
pub fn matchable(a: &LinearSeq<'_>, i: usize, b: &LinearSeq<'_>, j: usize) -> bool {
    match (a.get(i), b.get(j)) {
        (ItemRef::Marker(_), ItemRef::Marker(_)) => true,
        (ItemRef::Instr(x), ItemRef::Instr(y)) => fusable(x, &|n| a.value_type(n), y, &|n| b.value_type(n)),
        _ => false,
    }
}

/// Score of fusing item `i` of `a` with item `j` of `b`; markers score 0.
pub fn match_score(a: &LinearSeq<'_>, i: usize, m: &AlignmentModel) -> f64 {
    match a.get(i) {
        ItemRef::Marker(_) => 0.0,
        ItemRef::Instr(x) => m.opcode_weight(x.opcode),
    }
}

/// Optimal order-preserving alignment, gap penalty 0. The traceback prefers
/// a match, then a gap in `a`, then a gap in `b`.
pub fn nw_align(a: &LinearSeq<'_>, b: &LinearSeq<'_>, m: &AlignmentModel) -> Alignment {
    let (n, k) = (a.len(), b.len());
    let w = k + 1;
    let mut score = vec![0.0f64; (n + 1) * w];
    let mut can = vec![false; n * k];
    for i in 1..=n {
        let wi = match_score(a, i - 1, m);
        for j in 1..=k {
            let c = matchable(a, i - 1, b, j - 1);
            can[(i - 1) * k + (j - 1)] = c;
            let mut best = score[(i - 1) * w + j].max(score[i * w + j - 1]);
            if c {
                best = best.max(score[(i - 1) * w + j - 1] + wi);
            }
            score[i * w + j] = best;
        }
    }
    let mut entries = Vec::with_capacity(n + k);
    let (mut i, mut j) = (n, k);
    while i > 0 || j > 0 {
        let here = score[i * w + j];
        if i > 0 && j > 0 && can[(i - 1) * k + (j - 1)] && here == score[(i - 1) * w + j - 1] + match_score(a, i - 1, m) {
            entries.push(AlignEntry::Match(i - 1, j - 1));
            i -= 1;
            j -= 1;
        } else if i > 0 && here == score[(i - 1) * w + j] {
            entries.push(AlignEntry::GapA(i - 1));
            i -= 1;
        } else {
            entries.push(AlignEntry::GapB(j - 1));
            j -= 1;
        }
    }
    entries.reverse();
    Alignment {
        entries,
        score: score[n * w + k],
    }
}

pub const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("brute-force alignment is limited to {BRUTE_FORCE_LIMIT} items per side (got {0} and {1})")]
pub struct TooLong(pub usize, pub usize);

/// Exhaustive search over every order-preserving matching.
pub fn brute_force_align(a: &LinearSeq<'_>, b: &LinearSeq<'_>, m: &AlignmentModel) -> Result<Alignment, TooLong> {
    if a.len() > BRUTE_FORCE_LIMIT || b.len() > BRUTE_FORCE_LIMIT {
        return Err(TooLong(a.len(), b.len()));
    }
    fn go(
        a: &LinearSeq<'_>,
        b: &LinearSeq<'_>,
        m: &AlignmentModel,
        i: usize,
        next_j: usize,
        cur: &mut Vec<(usize, usize)>,
        score: f64,
        best: &mut (f64, Vec<(usize, usize)>),
    ) {
        if i == a.len() {
            if score > best.0 {
                *best = (score, cur.clone());
            }
            return;
        }
        go(a, b, m, i + 1, next_j, cur, score, best);
        for j in next_j..b.len() {
            if matchable(a, i, b, j) {
                cur.push((i, j));
                go(a, b, m, i + 1, j + 1, cur, score + match_score(a, i, m), best);
                cur.pop();
            }
        }
    }
    let mut best = (0.0, Vec::new());
    go(a, b, m, 0, 0, &mut Vec::new(), 0.0, &mut best);

    let mut entries = Vec::new();
    let (mut i, mut j) = (0, 0);
    for &(mi, mj) in &best.1 {
        entries.extend((i..mi).map(AlignEntry::GapA));
        entries.extend((j..mj).map(AlignEntry::GapB));
        entries.push(AlignEntry::Match(mi, mj));
        i = mi + 1;
        j = mj + 1;
    }
    entries.extend((i..a.len()).map(AlignEntry::GapA));
    entries.extend((j..b.len()).map(AlignEntry::GapB));
    Ok(Alignment { entries, score: best.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{BasicBlock, IrFunction, Predicate};
    use crate::linearize::LinearItem;

    fn func(ops: &[Instruction]) -> IrFunction {
        let mut b = BasicBlock::new("entry");
        b.instrs = ops.to_vec();
        IrFunction {
            name: "f".into(),
            params: Vec::new(),
            ret_ty: IrType::I32,
            blocks: vec![b],
        }
    }

    fn bin(op: Opcode) -> Instruction {
        Instruction::new(op, Some(IrType::I32), vec![Operand::int(1), Operand::int(2)]).with_result("x", IrType::I32)
    }

    fn br() -> Instruction {
        Instruction::new(Opcode::Br, None, vec![Operand::label("entry")])
    }

    fn ret() -> Instruction {
        Instruction::new(Opcode::Ret, Some(IrType::I32), vec![Operand::int(0)])
    }

    fn seq(f: &IrFunction) -> LinearSeq<'_> {
        LinearSeq::new(f, (0..f.blocks[0].instrs.len()).map(|i| LinearItem::Instr(0, i)).collect())
    }

    #[test]
    fn matchability() {
        let f = func(&[
            bin(Opcode::Mul),
            bin(Opcode::Mul),
            bin(Opcode::Add),
            bin(Opcode::ICmp).with_predicate(Predicate::Slt),
            bin(Opcode::ICmp).with_predicate(Predicate::Eq),
        ]);
        let s = seq(&f);
        assert!(matchable(&s, 0, &s, 1));
        assert!(!matchable(&s, 0, &s, 2));
        assert!(!matchable(&s, 3, &s, 4));
    }

    #[test]
    fn model_weights() {
        let f = func(&[br(), Instruction::new(Opcode::Load, Some(IrType::I32), vec![Operand::Const(crate::ir::Constant::Null)]).with_result("l", IrType::I32)]);
        let s = seq(&f);
        assert_eq!(match_score(&s, 0, &AlignmentModel::control()), 2.0);
        assert_eq!(match_score(&s, 0, &AlignmentModel::memory()), 1.0);
        assert_eq!(match_score(&s, 1, &AlignmentModel::memory()), 2.0);
    }

    #[test]
    fn spec_examples() {
        let fa = func(&[bin(Opcode::Add), bin(Opcode::Mul), ret()]);
        let fb = func(&[bin(Opcode::Add), ret()]);
        let al = nw_align(&seq(&fa), &seq(&fb), &AlignmentModel::uniform());
        assert_eq!(al.entries, [AlignEntry::Match(0, 0), AlignEntry::GapA(1), AlignEntry::Match(2, 1)]);
        assert_eq!(al.score, 2.0);

        let fa = func(&[bin(Opcode::Mul), br()]);
        let fb = func(&[br()]);
        let al = nw_align(&seq(&fa), &seq(&fb), &AlignmentModel::control());
        assert_eq!(al.entries, [AlignEntry::GapA(0), AlignEntry::Match(1, 0)]);
        assert_eq!(al.score, 2.0);
        let bf = brute_force_align(&seq(&fa), &seq(&fb), &AlignmentModel::control()).unwrap();
        assert_eq!(bf.score, 2.0);
    }

    #[test]
    fn empty_sequences() {
        let fa = func(&[]);
        let fb = func(&[bin(Opcode::Add)]);
        let al = nw_align(&seq(&fa), &seq(&fb), &AlignmentModel::uniform());
        assert_eq!(al.entries, [AlignEntry::GapB(0)]);
        assert_eq!(brute_force_align(&seq(&fa), &seq(&fb), &AlignmentModel::uniform()).unwrap().score, 0.0);
    }

    #[test]
    fn brute_force_refuses_long_input() {
        let f = func(&vec![bin(Opcode::Add); 9]);
        assert!(brute_force_align(&seq(&f), &seq(&f), &AlignmentModel::uniform()).is_err());
    }
}
