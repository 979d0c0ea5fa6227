//! Merged-function code generation.
//!
//! All modes reduce to one builder that takes a set of fused instruction
//! pairs. Every block of each input is cut into chunks: maximal runs of
//! consecutive fused pairs become shared merged blocks, maximal unfused runs
//! become blocks of their own function. Control reaches the right chunk
//! through the function identifier (`%fid`, slot 0: 0 selects f1, 1 f2).

mod build;
mod callsite;
mod hyfm;
mod names;
mod params;
mod repair;
mod simplify;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::align::{nw_align, AlignEntry, Alignment, AlignmentModel};
use crate::ir::{validate_function, IrFunction, IrModule, IrType, Opcode, Violation};
use crate::linearize::{linearize, reg2mem_tracked, mem2reg_with, LinearItem, LinearSeq};

pub use callsite::{install_merged, rewrite_call_sites};
pub use hyfm::{fingerprint, hyfm_merge, pair_blocks, BlockPairing, Fingerprint};
pub use names::NameAllocator;
pub use params::{merge_parameters, ParamMap, Side};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MergeMode {
    SsaGlobal,
    NonSsaGlobal,
    Local,
    Concat,
}

impl MergeMode {
    pub const ALL: [MergeMode; 4] = [MergeMode::SsaGlobal, MergeMode::NonSsaGlobal, MergeMode::Local, MergeMode::Concat];

    pub fn name(self) -> &'static str {
        match self {
            MergeMode::SsaGlobal => "ssa-global",
            MergeMode::NonSsaGlobal => "nonssa-global",
            MergeMode::Local => "local",
            MergeMode::Concat => "concat",
        }
    }

    pub fn from_name(s: &str) -> Option<MergeMode> {
        MergeMode::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for MergeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a merged instruction came from. Indices are flat positions in the
/// original inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    F1(usize),
    F2(usize),
    Fused(usize, usize),
    /// A funcid branch standing in for the fused terminators `f1:i` and
    /// `f2:j`, whose targets differ. Counts as overhead.
    Dispatch(usize, usize),
    Overhead,
}

impl Origin {
    pub fn is_overhead(self) -> bool {
        matches!(self, Origin::Overhead | Origin::Dispatch(..))
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::F1(i) => write!(f, "f1:{i}"),
            Origin::F2(j) => write!(f, "f2:{j}"),
            Origin::Fused(i, j) => write!(f, "fused:{i},{j}"),
            Origin::Dispatch(i, j) => write!(f, "dispatch:{i},{j}"),
            Origin::Overhead => write!(f, "overhead"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MergeResult {
    pub merged: IrFunction,
    pub param_map: ParamMap,
    /// One entry per merged instruction, in flat order.
    pub provenance: Vec<Origin>,
    pub mode: MergeMode,
}

impl MergeResult {
    /// One "idx origin opcode" line per merged instruction.
    pub fn provenance_dump(&self) -> String {
        let mut s = String::new();
        for (k, (o, i)) in self.provenance.iter().zip(self.merged.instructions()).enumerate() {
            s.push_str(&format!("{k} {o} {}\n", i.opcode));
        }
        s
    }

    pub fn overhead_count(&self) -> usize {
        self.provenance.iter().filter(|o| o.is_overhead()).count()
    }

    /// Instructions paired with their origin.
    pub fn annotated(&self) -> impl Iterator<Item = (&crate::ir::Instruction, Origin)> {
        self.merged.instructions().zip(self.provenance.iter().copied())
    }

    /// `base` with the merged function added (replacing any namesake).
    pub fn attach(&self, base: &IrModule) -> IrModule {
        let mut m = base.clone();
        m.functions.retain(|f| f.name != self.merged.name);
        m.functions.push(self.merged.clone());
        m
    }

    pub fn count_overhead_opcode(&self, op: Opcode) -> usize {
        self.annotated().filter(|(i, o)| i.opcode == op && o.is_overhead()).count()
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MergeError {
    #[error("return types differ ({0} vs {1})")]
    ReturnTypeMismatch(IrType, IrType),
    #[error("invalid alignment: {0}")]
    InvalidAlignment(String),
    #[error("no signature known for callee @{0}")]
    UnknownCallee(String),
    #[error("merged function is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Internal(Vec<Violation>),
}

/// Parameter types of callable functions, used to type constant call
/// arguments that need a select.
#[derive(Clone, Debug, Default)]
pub struct Signatures(HashMap<String, Vec<IrType>>);

impl Signatures {
    pub fn of(m: &IrModule) -> Self {
        Signatures(
            m.functions
                .iter()
                .map(|f| (f.name.clone(), f.params.iter().map(|p| p.ty).collect()))
                .collect(),
        )
    }

    pub fn params(&self, callee: &str) -> Option<&[IrType]> {
        self.0.get(callee).map(|v| v.as_slice())
    }
}

/// Default name of the merged function.
pub fn merged_name(f1: &IrFunction, f2: &IrFunction) -> String {
    format!("merged.{}.{}", f1.name, f2.name)
}

type Pos = (usize, usize);

fn instr_pairs(a: &LinearSeq<'_>, b: &LinearSeq<'_>, alg: &Alignment) -> Result<Vec<(Pos, Pos)>, MergeError> {
    let mut pairs = Vec::new();
    for e in &alg.entries {
        let AlignEntry::Match(i, j) = *e else { continue };
        if i >= a.len() || j >= b.len() {
            return Err(MergeError::InvalidAlignment(format!("match ({i}, {j}) out of range")));
        }
        match (a.items[i], b.items[j]) {
            (LinearItem::Instr(b1, i1), LinearItem::Instr(b2, i2)) => pairs.push(((b1, i1), (b2, i2))),
            (LinearItem::BlockMarker(_), LinearItem::BlockMarker(_)) => {}
            _ => {
                return Err(MergeError::InvalidAlignment(format!("match ({i}, {j}) pairs a marker with an instruction")));
            }
        }
    }
    Ok(pairs)
}

fn finish(
    f1: &IrFunction,
    f2: &IrFunction,
    pairs: &[(Pos, Pos)],
    mode: MergeMode,
    sigs: &Signatures,
) -> Result<MergeResult, MergeError> {
    if f1.ret_ty != f2.ret_ty {
        return Err(MergeError::ReturnTypeMismatch(f1.ret_ty, f2.ret_ty));
    }
    let param_map = merge_parameters(f1, f2);
    let (merged, origins) = build::build(f1, f2, pairs, &param_map, &merged_name(f1, f2), sigs)?;
    check(merged, origins, param_map, mode)
}

fn check(mut merged: IrFunction, mut origins: Vec<Vec<Origin>>, param_map: ParamMap, mode: MergeMode) -> Result<MergeResult, MergeError> {
    simplify::simplify(&mut merged, &mut origins);
    let v = validate_function(&merged, None);
    if !v.is_empty() {
        return Err(MergeError::Internal(v));
    }
    Ok(MergeResult {
        merged,
        param_map,
        provenance: origins.into_iter().flatten().collect(),
        mode,
    })
}

/// Merges `f1` and `f2` according to `alg`.
///
/// For `SsaGlobal` the alignment must be over `linearize(f, false)`; for
/// `NonSsaGlobal` over `linearize(reg2mem(f), _)`. `Concat` ignores it.
/// `Local` aligns per block pair and goes through [`hyfm_merge`].
pub fn merge_functions(
    f1: &IrFunction,
    f2: &IrFunction,
    alg: &Alignment,
    mode: MergeMode,
    sigs: &Signatures,
) -> Result<MergeResult, MergeError> {
    match mode {
        MergeMode::Concat => finish(f1, f2, &[], mode, sigs),
        MergeMode::SsaGlobal => {
            let (a, b) = (linearize(f1, false), linearize(f2, false));
            let pairs = instr_pairs(&a, &b, alg)?;
            finish(f1, f2, &pairs, mode, sigs)
        }
        MergeMode::NonSsaGlobal => {
            let (d1, o1) = reg2mem_tracked(f1);
            let (d2, o2) = reg2mem_tracked(f2);
            let (a, b) = (linearize(&d1, true), linearize(&d2, true));
            let pairs = instr_pairs(&a, &b, alg)?;
            if d1.ret_ty != d2.ret_ty {
                return Err(MergeError::ReturnTypeMismatch(d1.ret_ty, d2.ret_ty));
            }
            let param_map = merge_parameters(&d1, &d2);
            let (merged, origins) = build::build(&d1, &d2, &pairs, &param_map, &merged_name(f1, f2), sigs)?;
            // back to indices of the undemoted inputs; demotion code is overhead
            let flat1: Vec<Option<usize>> = o1.into_iter().flatten().collect();
            let flat2: Vec<Option<usize>> = o2.into_iter().flatten().collect();
            let origins: Vec<Vec<Origin>> = origins
                .into_iter()
                .map(|b| {
                    b.into_iter()
                        .map(|o| match o {
                            Origin::F1(i) => flat1[i].map_or(Origin::Overhead, Origin::F1),
                            Origin::F2(j) => flat2[j].map_or(Origin::Overhead, Origin::F2),
                            Origin::Fused(i, j) => match (flat1[i], flat2[j]) {
                                (Some(i), Some(j)) => Origin::Fused(i, j),
                                (Some(i), None) => Origin::F1(i),
                                (None, Some(j)) => Origin::F2(j),
                                (None, None) => Origin::Overhead,
                            },
                            Origin::Dispatch(i, j) => match (flat1[i], flat2[j]) {
                                (Some(i), Some(j)) => Origin::Dispatch(i, j),
                                _ => Origin::Overhead,
                            },
                            Origin::Overhead => Origin::Overhead,
                        })
                        .collect()
                })
                .collect();
            let (merged, origins) = mem2reg_with(&merged, &origins, Origin::Overhead);
            check(merged, origins, param_map, mode)
        }
        MergeMode::Local => Err(MergeError::InvalidAlignment(
            "local mode aligns block pairs itself; use hyfm_merge".into(),
        )),
    }
}

/// Aligns under `model` as the mode requires and merges.
pub fn merge(
    f1: &IrFunction,
    f2: &IrFunction,
    mode: MergeMode,
    model: &AlignmentModel,
    sigs: &Signatures,
) -> Result<MergeResult, MergeError> {
    match mode {
        MergeMode::SsaGlobal => {
            let alg = nw_align(&linearize(f1, false), &linearize(f2, false), model);
            merge_functions(f1, f2, &alg, mode, sigs)
        }
        MergeMode::NonSsaGlobal => {
            let (d1, d2) = (reg2mem_tracked(f1).0, reg2mem_tracked(f2).0);
            let alg = nw_align(&linearize(&d1, true), &linearize(&d2, true), model);
            merge_functions(f1, f2, &alg, mode, sigs)
        }
        MergeMode::Local => hyfm_merge(f1, f2, model, sigs),
        MergeMode::Concat => merge_functions(f1, f2, &Alignment { entries: Vec::new(), score: 0.0 }, mode, sigs),
    }
}

pub(crate) fn build_local(
    f1: &IrFunction,
    f2: &IrFunction,
    pairs: &[(Pos, Pos)],
    sigs: &Signatures,
) -> Result<MergeResult, MergeError> {
    finish(f1, f2, pairs, MergeMode::Local, sigs)
}
