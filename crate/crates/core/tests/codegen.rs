mod common;

use cgfm::align::{matchable, AlignmentModel};
use cgfm::codegen::{
    install_merged, merge, merge_parameters, pair_blocks, MergeMode, Origin, Side, Signatures,
};
use cgfm::interp::{equivalence_check, CheckConfig, Subject};
use cgfm::ir::{parse_module, IrFunction, IrType, Opcode};
use cgfm::linearize::LinearSeq;
use common::{mutants, pair, pairs, Pair};

fn self_pair(p: &Pair) -> Pair {
    let f = p.f1().clone();
    let g = f.alpha_renamed(&format!("{}_copy", f.name), "_c");
    let mut module = p.module.clone();
    module.functions.retain(|x| x.name != p.f2().name);
    module.functions.insert(1, g);
    Pair { name: format!("{}-self", p.name), module }
}

#[test]
fn self_merge_fuses_everything() {
    for p in pairs() {
        let s = self_pair(&p);
        let r = s.merge(MergeMode::SsaGlobal, &AlignmentModel::uniform());
        assert_eq!(r.overhead_count(), 0, "{}", s.name);
        assert!(
            r.provenance.iter().all(|o| matches!(o, Origin::Fused(..))),
            "{}:\n{}",
            s.name,
            r.provenance_dump()
        );
        assert_eq!(r.merged.instruction_count(), s.f1().instruction_count(), "{}", s.name);
        assert!(s.check(&r, &CheckConfig::default()).passed(), "{}", s.name);
    }
}

fn counts(f: &IrFunction) -> [u32; Opcode::COUNT] {
    f.opcode_counts()
}

#[test]
fn concat_is_both_bodies_plus_one_branch() {
    for p in pairs() {
        let r = p.merge(MergeMode::Concat, &AlignmentModel::uniform());
        let mut want = counts(p.f1());
        for (w, c) in want.iter_mut().zip(counts(p.f2())) {
            *w += c;
        }
        want[Opcode::CondBr.index()] += 1;
        assert_eq!(counts(&r.merged), want, "{}", p.name);
        assert_eq!(r.overhead_count(), 1, "{}", p.name);
    }
}

#[test]
fn savings_identity_and_no_ssa_allocas() {
    for p in pairs() {
        for mode in MergeMode::ALL {
            let r = p.merge(mode, &AlignmentModel::uniform());
            let (c1, c2, cm) = (counts(p.f1()), counts(p.f2()), counts(&r.merged));
            for op in Opcode::ALL {
                let k = op.index();
                let overhead = r.count_overhead_opcode(*op) as u32;
                assert!(cm[k] <= c1[k] + c2[k] + overhead, "{} {mode} {op}", p.name);
            }
            if mode == MergeMode::SsaGlobal {
                assert_eq!(r.count_overhead_opcode(Opcode::Alloca), 0, "{}", p.name);
            }
        }
    }
}

#[test]
fn parameter_sharing_by_type() {
    let m = parse_module(
        "func @f(%a: i32, %x: f32) -> i32 { e: ret i32 %a }
         func @g(%y: f32, %b: i32) -> i32 { e: ret i32 %b }
         func @h(%c: f64) -> i32 { e: ret i32 0 }
         func @u() -> i32 { e: ret i32 0 }
         func @v() -> i32 { e: ret i32 1 }",
    )
    .unwrap();
    let pm = merge_parameters(&m.functions[0], &m.functions[1]);
    let tys: Vec<IrType> = pm.params.iter().map(|p| p.ty).collect();
    assert_eq!(tys, vec![IrType::I1, IrType::I32, IrType::F32]);
    assert_eq!(pm.slots(Side::F2), &[2, 1]);
    let pm = merge_parameters(&m.functions[0], &m.functions[2]);
    assert_eq!(pm.params.iter().map(|p| p.ty).collect::<Vec<_>>(), vec![IrType::I1, IrType::I32, IrType::F32, IrType::F64]);
    let pm = merge_parameters(&m.functions[3], &m.functions[4]);
    assert_eq!(pm.params.len(), 1);
}

fn fused_opcodes(r: &cgfm::codegen::MergeResult) -> Vec<Opcode> {
    r.annotated().filter(|(_, o)| matches!(o, Origin::Fused(..))).map(|(i, _)| i.opcode).collect()
}

#[test]
fn rotate_models_keep_different_parts() {
    let p = pair("rotate");
    for mode in [MergeMode::SsaGlobal, MergeMode::Local] {
        let fused = |m: AlignmentModel| fused_opcodes(&p.merge(mode, &m));
        let (c, m, a) = (fused(AlignmentModel::control()), fused(AlignmentModel::memory()), fused(AlignmentModel::arithmetic()));
        assert!(c.contains(&Opcode::ICmp) && !c.contains(&Opcode::Mul), "{mode} control {c:?}");
        assert!(m.contains(&Opcode::Store) && m.contains(&Opcode::Gep) && !m.contains(&Opcode::Mul), "{mode} memory {m:?}");
        assert!(a.contains(&Opcode::Mul) && !a.contains(&Opcode::ICmp), "{mode} arithmetic {a:?}");
    }
}

#[test]
fn nonssa_keeps_memory_on_crossed_phis() {
    let p = pair("phi_swap_order");
    let r = p.merge(MergeMode::NonSsaGlobal, &AlignmentModel::uniform());
    let ssa = p.merge(MergeMode::SsaGlobal, &AlignmentModel::uniform());
    let mem = |f: &IrFunction| [Opcode::Load, Opcode::Store, Opcode::Alloca].iter().map(|&o| f.count_opcode(o)).sum::<usize>();
    assert!(r.merged.count_opcode(Opcode::Alloca) >= 1);
    assert!(mem(&r.merged) > mem(&ssa.merged));
}

/// Merged terminators that stem from either input terminator of each
/// block pair with matchable terminators.
fn paired_terminator_counts(p: &Pair, model: &AlignmentModel) -> Vec<(usize, usize)> {
    let r = p.merge(MergeMode::Local, model);
    let (f1, f2) = (p.f1(), p.f2());
    let mut out = Vec::new();
    for (a, b) in pair_blocks(f1, f2).pairs {
        let (x, y) = (LinearSeq::block(f1, a, false), LinearSeq::block(f2, b, false));
        if !matchable(&x, x.len() - 1, &y, y.len() - 1) {
            continue;
        }
        let t1 = f1.flat_index(a, f1.blocks[a].instrs.len() - 1);
        let t2 = f2.flat_index(b, f2.blocks[b].instrs.len() - 1);
        let n = r
            .annotated()
            .filter(|(i, o)| {
                i.is_terminator()
                    && match *o {
                        Origin::F1(i) => i == t1,
                        Origin::F2(j) => j == t2,
                        Origin::Fused(i, j) | Origin::Dispatch(i, j) => i == t1 || j == t2,
                        Origin::Overhead => false,
                    }
            })
            .count();
        out.push((n, 2));
    }
    out
}

#[test]
fn hyfm_reduces_branches_per_pair() {
    let mut seen = 0;
    for p in pairs() {
        for (merged, sum) in paired_terminator_counts(&p, &AlignmentModel::uniform()) {
            assert!(merged < sum, "{}", p.name);
            seen += 1;
        }
    }
    assert!(seen >= 20);
}

#[test]
fn call_sites_follow_the_merge() {
    let src = "
mem @M: i32[4]
func @f(%a: i32, %b: i32) -> i32 {
entry:
  %x = mul i32 %a, %b
  %p = gep i32 @M, 1
  store i32 %x, %p
  ret i32 %x
}
func @g(%a: i32, %y: f64) -> i32 {
entry:
  %x = mul i32 %a, 7
  ret i32 %x
}
func @main(%a: i32, %b: i32, %y: f64) -> i32 {
entry:
  %r = call i32 @f(%a, %b)
  %s = call i32 @g(%b, %y)
  %t = call i32 @f(%s, 3)
  %u = add i32 %r, %t
  ret i32 %u
}
";
    let m = parse_module(src).unwrap();
    let r = merge(&m.functions[0], &m.functions[1], MergeMode::SsaGlobal, &AlignmentModel::uniform(), &Signatures::of(&m)).unwrap();
    let mut after = m.clone();
    install_merged(&mut after, &r, "f", "g");
    assert!(after.function("f").is_none() && after.function("g").is_none());
    assert!(cgfm::ir::validate(&after).is_empty());
    let calls: Vec<_> = after.function("main").unwrap().instructions().filter(|i| i.opcode == Opcode::Call).collect();
    assert_eq!(calls.len(), 3);
    assert!(calls.iter().all(|c| c.callee.as_deref() == Some(r.merged.name.as_str())));
    let rep = equivalence_check(Subject::new(&m, "main"), Subject::new(&after, "main"), &CheckConfig::default());
    assert!(rep.passed(), "{:?}", rep.mismatches);
}

#[test]
fn mutations_are_caught() {
    let cfg = CheckConfig::default();
    let mut names = std::collections::BTreeSet::new();
    for name in ["rotate", "diamond_abs_max", "loop_sum_prod", "switch_cases", "phi_gcd"] {
        let p = pair(name);
        let r = p.merge(MergeMode::SsaGlobal, &AlignmentModel::uniform());
        for (what, f) in mutants(&r) {
            assert!(cgfm::ir::validate_function(&f, Some(&p.module)).is_empty(), "{name} {what}");
            let rep = p.check_function(&r, &f, &cfg);
            assert!(!rep.passed(), "{name}: mutant {what} survived");
            names.insert(what);
        }
    }
    assert!(names.len() >= 5, "{names:?}");
}

#[test]
fn disjoint_pair_behaves_like_dispatch() {
    let p = pair("disjoint_int_float");
    let r = p.merge(MergeMode::Local, &AlignmentModel::uniform());
    assert!(p.check(&r, &CheckConfig::default()).passed());
    let fused = fused_opcodes(&r);
    assert!(fused.iter().all(|o| *o == Opcode::Ret), "{fused:?}");
}
