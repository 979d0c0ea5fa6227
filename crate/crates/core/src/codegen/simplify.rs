//! Removes jumps the builder introduced. Original instructions are never
//! touched.

use super::Origin;
use crate::ir::{Cfg, IrFunction, Opcode, Operand};

fn is_overhead_jump(f: &IrFunction, side: &[Vec<Origin>], b: usize) -> Option<usize> {
    let t = f.blocks[b].instrs.last()?;
    if t.opcode != Opcode::Br || *side[b].last()? != Origin::Overhead {
        return None;
    }
    f.block_index(t.operands[0].as_label()?)
}

fn relabel_phis(f: &mut IrFunction, block: usize, from: &str, to: &[String]) {
    for phi in f.blocks[block].instrs.iter_mut().take_while(|i| i.is_phi()) {
        let mut ops = Vec::with_capacity(phi.operands.len() + 2 * to.len());
        for pair in phi.operands.chunks(2) {
            if pair[1].as_label() == Some(from) {
                for t in to {
                    ops.push(pair[0].clone());
                    ops.push(Operand::Label(t.clone()));
                }
            } else {
                ops.extend_from_slice(pair);
            }
        }
        phi.operands = ops;
    }
}

fn remove_block(f: &mut IrFunction, side: &mut Vec<Vec<Origin>>, b: usize) {
    f.blocks.remove(b);
    side.remove(b);
}

/// Threads jumps through blocks that hold nothing but an overhead `br`, and
/// folds a block into its single predecessor when that predecessor ends in
/// an overhead `br` to it.
pub(crate) fn simplify(f: &mut IrFunction, side: &mut Vec<Vec<Origin>>) {
    loop {
        let cfg = Cfg::new(f);
        let mut changed = false;
        for b in 1..f.blocks.len() {
            let Some(x) = is_overhead_jump(f, side, b) else { continue };
            if f.blocks[b].instrs.len() != 1 || x == b {
                continue;
            }
            let preds = &cfg.preds[b];
            if preds.iter().any(|p| cfg.preds[x].contains(p)) {
                continue;
            }
            let (from, target) = (f.blocks[b].label.clone(), f.blocks[x].label.clone());
            let pred_labels: Vec<String> = preds.iter().map(|&p| f.blocks[p].label.clone()).collect();
            for &p in preds {
                let t = f.blocks[p].instrs.last_mut().expect("terminator");
                for o in &mut t.operands {
                    if o.as_label() == Some(from.as_str()) {
                        *o = Operand::Label(target.clone());
                    }
                }
            }
            relabel_phis(f, x, &from, &pred_labels);
            remove_block(f, side, b);
            changed = true;
            break;
        }
        if changed {
            continue;
        }
        for a in 0..f.blocks.len() {
            let Some(b) = is_overhead_jump(f, side, a) else { continue };
            if b == a || b == 0 || cfg.preds[b] != [a] || f.blocks[b].instrs[0].is_phi() {
                continue;
            }
            let moved = std::mem::take(&mut f.blocks[b].instrs);
            let tags = std::mem::take(&mut side[b]);
            f.blocks[a].instrs.pop();
            side[a].pop();
            f.blocks[a].instrs.extend(moved);
            side[a].extend(tags);
            let (from, to) = (f.blocks[b].label.clone(), f.blocks[a].label.clone());
            let succs: Vec<usize> = cfg.succs[b].clone();
            for s in succs {
                relabel_phis(f, s, &from, std::slice::from_ref(&to));
            }
            remove_block(f, side, b);
            changed = true;
            break;
        }
        if !changed {
            return;
        }
    }
}
