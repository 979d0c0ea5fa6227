#![allow(dead_code)]

use std::path::PathBuf;

use cgfm::align::AlignmentModel;
use cgfm::codegen::{merge, MergeMode, MergeResult, Signatures};
use cgfm::interp::{differential_check, CheckConfig, DiffReport, Subject};
use cgfm::ir::{parse_module, IrFunction, IrModule};

pub struct Pair {
    pub name: String,
    pub module: IrModule,
}

impl Pair {
    pub fn f1(&self) -> &IrFunction {
        &self.module.functions[0]
    }

    pub fn f2(&self) -> &IrFunction {
        &self.module.functions[1]
    }

    pub fn merge(&self, mode: MergeMode, model: &AlignmentModel) -> MergeResult {
        merge(self.f1(), self.f2(), mode, model, &Signatures::of(&self.module))
            .unwrap_or_else(|e| panic!("{} {mode}: {e}", self.name))
    }

    pub fn check(&self, r: &MergeResult, cfg: &CheckConfig) -> DiffReport {
        let merged = r.attach(&self.module);
        differential_check(
            Subject::new(&self.module, &self.f1().name),
            Subject::new(&self.module, &self.f2().name),
            Subject::new(&merged, &r.merged.name),
            &r.param_map,
            cfg,
        )
    }
}

/// The pair fixtures, found from either workspace crate.
pub fn fixture_dir() -> PathBuf {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let own = here.join("fixtures/pairs");
    if own.is_dir() {
        own
    } else {
        here.join("../core/fixtures/pairs")
    }
}

/// Every pair fixture: the first two functions of each file.
pub fn pairs() -> Vec<Pair> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "ir"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let module = parse_module(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            Pair { name, module }
        })
        .collect()
}

pub fn pair(name: &str) -> Pair {
    pairs().into_iter().find(|p| p.name == name).expect("fixture")
}

pub fn phi_heavy() -> Vec<Pair> {
    pairs().into_iter().filter(|p| p.name.starts_with("phi_")).collect()
}

use cgfm::codegen::Origin;
use cgfm::ir::{Constant, Opcode, Operand, Predicate};

/// Deliberate corruptions of a merged function, each named. Only the
/// applicable ones are returned.
pub fn mutants(r: &MergeResult) -> Vec<(&'static str, IrFunction)> {
    let f = &r.merged;
    let find = |pred: &dyn Fn(&cgfm::ir::Instruction, Origin) -> bool| -> Option<(usize, usize)> {
        let mut k = 0;
        for (bi, b) in f.blocks.iter().enumerate() {
            for (ii, i) in b.instrs.iter().enumerate() {
                if pred(i, r.provenance[k]) {
                    return Some((bi, ii));
                }
                k += 1;
            }
        }
        None
    };
    let mut out = Vec::new();
    let mut edit = |name: &'static str, at: Option<(usize, usize)>, g: &dyn Fn(&mut cgfm::ir::Instruction)| {
        if let Some((bi, ii)) = at {
            let mut m = f.clone();
            g(&mut m.blocks[bi].instrs[ii]);
            out.push((name, m));
        }
    };
    let is_fid = |o: &Operand| o.as_value() == Some(r.param_map.params[0].name.as_str());

    edit(
        "swap-select-arms",
        find(&|i, _| i.opcode == Opcode::Select && is_fid(&i.operands[0]) && i.operands[1] != i.operands[2]),
        &|i| i.operands.swap(1, 2),
    );
    edit(
        "swap-funcid-branch",
        find(&|i, _| i.opcode == Opcode::CondBr && is_fid(&i.operands[0])),
        &|i| i.operands.swap(1, 2),
    );
    edit(
        "add-becomes-sub",
        find(&|i, o| i.opcode == Opcode::Add && matches!(o, Origin::Fused(..))),
        &|i| i.opcode = Opcode::Sub,
    );
    edit(
        "flip-compare",
        find(&|i, _| i.opcode == Opcode::ICmp && i.predicate == Some(Predicate::Slt)),
        &|i| i.predicate = Some(Predicate::Sge),
    );
    edit(
        "bump-constant",
        find(&|i, _| i.opcode.is_int_binary() && i.operands.iter().any(|o| matches!(o, Operand::Const(Constant::Int(_))))),
        &|i| {
            for o in &mut i.operands {
                if let Operand::Const(Constant::Int(v)) = o {
                    *v += 1;
                    break;
                }
            }
        },
    );
    edit(
        "store-wrong-value",
        find(&|i, _| i.opcode == Opcode::Store && i.ty == Some(cgfm::ir::IrType::I32)),
        &|i| i.operands[0] = Operand::Const(Constant::Int(12345)),
    );
    out
}

impl Pair {
    /// Differential check of an arbitrary replacement for the merged function.
    pub fn check_function(&self, r: &MergeResult, f: &IrFunction, cfg: &CheckConfig) -> DiffReport {
        let mut m = r.clone();
        m.merged = f.clone();
        self.check(&m, cfg)
    }
}
