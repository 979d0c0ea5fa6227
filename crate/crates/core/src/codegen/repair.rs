//! Restores dominance of definitions over uses after code motion.

use std::collections::{HashMap, HashSet};

use super::names::NameAllocator;
use crate::ir::{Cfg, DomTree, Instruction, IrFunction, IrType, Opcode, Operand};
use crate::linearize::mem2reg_only;

/// Each value with a use its definition does not dominate is demoted to a
/// fresh stack slot (zero on paths that skip the definition) and promoted
/// again. `side` follows the instructions; inserted phis get `filler`.
pub(crate) fn repair_ssa<T: Clone>(f: &mut IrFunction, side: &mut Vec<Vec<T>>, filler: T, names: &mut NameAllocator) {
    let cfg = Cfg::new(f);
    let dom = DomTree::new(&cfg);
    let mut def: HashMap<String, (usize, usize, IrType)> = HashMap::new();
    for (b, block) in f.blocks.iter().enumerate() {
        for (i, ins) in block.instrs.iter().enumerate() {
            if let Some((n, t)) = &ins.result {
                def.insert(n.clone(), (b, i, *t));
            }
        }
    }
    let dominates_use = |d: (usize, usize), b: usize, i: usize, phi_pred: Option<usize>| match phi_pred {
        Some(p) => cfg.reachable[d.0] && (d.0 == p || dom.dominates(d.0, p)),
        None => cfg.reachable[d.0] && ((d.0 == b && d.1 < i) || (d.0 != b && dom.dominates(d.0, b))),
    };

    // (block, index, operand position) of every bad use
    let mut bad: Vec<(usize, usize, usize)> = Vec::new();
    let mut broken: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    let map: HashMap<String, usize> = f.blocks.iter().enumerate().map(|(b, blk)| (blk.label.clone(), b)).collect();
    for (b, block) in f.blocks.iter().enumerate() {
        if !cfg.reachable[b] {
            continue;
        }
        for (i, ins) in block.instrs.iter().enumerate() {
            for (pos, o) in ins.operands.iter().enumerate() {
                let Operand::Value(v) = o else { continue };
                let Some(&(db, di, _)) = def.get(v) else { continue };
                let pred = ins.is_phi().then(|| map[ins.operands[pos + 1].as_label().expect("phi label")]);
                if pred.is_some_and(|p| !cfg.reachable[p]) {
                    continue;
                }
                if !dominates_use((db, di), b, i, pred) {
                    bad.push((b, i, pos));
                    if seen.insert(v.clone()) {
                        broken.push(v.clone());
                    }
                }
            }
        }
    }
    if bad.is_empty() {
        return;
    }

    let sides = side_reach(f);
    let slot_of: HashMap<String, String> = broken.iter().map(|v| (v.clone(), names.fresh(&format!("{v}.addr")))).collect();
    let slot = |v: &str| Operand::Value(slot_of[v].clone());
    // inserts per block: (before index, instruction); stable for equal indices
    let mut inserts: Vec<Vec<(usize, Instruction)>> = vec![Vec::new(); f.blocks.len()];
    for v in &broken {
        let (b, i, t) = def[v];
        inserts[0].push((0, Instruction::new(Opcode::Alloca, Some(t), Vec::new()).with_result(slot_of[v].clone(), IrType::Addr)));
        let at = if f.blocks[b].instrs[i].is_phi() { f.blocks[b].first_non_phi() } else { i + 1 };
        inserts[b].push((at, Instruction::new(Opcode::Store, Some(t), vec![Operand::Value(v.clone()), slot(v)])));
        // blocks the defining side never runs through: v is dead there
        for (other, &mask) in sides.iter().enumerate() {
            if mask != 0 && mask & sides[b] == 0 {
                let at = f.blocks[other].first_non_phi();
                let zero = Operand::Const(t.zero());
                inserts[other].push((at, Instruction::new(Opcode::Store, Some(t), vec![zero, slot(v)])));
            }
        }
    }
    for &(b, i, pos) in &bad {
        let ins = &f.blocks[b].instrs[i];
        let v = ins.operands[pos].as_value().unwrap().to_string();
        let t = def[&v].2;
        let tmp = names.fresh(&format!("{v}.r"));
        let load = Instruction::new(Opcode::Load, Some(t), vec![slot(&v)]).with_result(tmp.clone(), t);
        if ins.is_phi() {
            let p = map[ins.operands[pos + 1].as_label().unwrap()];
            let end = f.blocks[p].instrs.len() - 1;
            inserts[p].push((end, load));
        } else {
            inserts[b].push((i, load));
        }
        f.blocks[b].instrs[i].operands[pos] = Operand::Value(tmp);
    }

    let mut tmp_side: Vec<Vec<Option<T>>> = Vec::with_capacity(f.blocks.len());
    for (b, block) in f.blocks.iter_mut().enumerate() {
        let mut add = std::mem::take(&mut inserts[b]);
        add.sort_by_key(|(at, _)| *at);
        let old = std::mem::take(&mut block.instrs);
        let mut tags: Vec<Option<T>> = Vec::with_capacity(old.len() + add.len());
        let mut add = add.into_iter().peekable();
        for (i, ins) in old.into_iter().enumerate() {
            while let Some((_, new)) = add.next_if(|(at, _)| *at == i) {
                block.instrs.push(new);
                tags.push(None);
            }
            block.instrs.push(ins);
            tags.push(Some(side[b][i].clone()));
        }
        tmp_side.push(tags);
    }
    let slots: HashSet<&str> = slot_of.values().map(String::as_str).collect();
    let (out, out_side) = mem2reg_only(f, &tmp_side, Some(filler.clone()), &|n| slots.contains(n));
    *f = out;
    *side = out_side
        .into_iter()
        .map(|b| b.into_iter().map(|t| t.unwrap_or_else(|| filler.clone())).collect())
        .collect();
}

/// Bit k set when the block runs for some call with `%fid` = k.
fn side_reach(f: &IrFunction) -> Vec<u8> {
    let fid = f.params.first().map(|p| p.name.as_str());
    let map = f.block_map();
    let mut mask = vec![0u8; f.blocks.len()];
    for k in 0..2u8 {
        let mut stack = vec![0usize];
        while let Some(b) = stack.pop() {
            if mask[b] & (1 << k) != 0 {
                continue;
            }
            mask[b] |= 1 << k;
            let Some(t) = f.blocks[b].terminator() else { continue };
            let targets: Vec<&str> = if t.opcode == Opcode::CondBr && t.operands[0].as_value() == fid {
                vec![t.operands[if k == 1 { 1 } else { 2 }].as_label().unwrap()]
            } else {
                t.successors()
            };
            stack.extend(targets.into_iter().filter_map(|l| map.get(l).copied()));
        }
    }
    mask
}
