//! Redirecting callers to a merged function.

use super::{MergeResult, ParamMap, Side};
use crate::ir::{Constant, IrModule, Opcode, Operand};

/// Rewrites every call of `f1` or `f2` in `module` into a call of `merged`.
/// Returns the number of rewritten calls.
pub fn rewrite_call_sites(module: &mut IrModule, f1: &str, f2: &str, merged: &str, pm: &ParamMap) -> usize {
    let mut n = 0;
    for f in &mut module.functions {
        for i in f.blocks.iter_mut().flat_map(|b| b.instrs.iter_mut()) {
            if i.opcode != Opcode::Call {
                continue;
            }
            let side = match i.callee.as_deref() {
                Some(c) if c == f1 => Side::F1,
                Some(c) if c == f2 => Side::F2,
                _ => continue,
            };
            let mut args: Vec<Operand> = pm.params.iter().map(|p| Operand::Const(p.ty.zero())).collect();
            args[ParamMap::FUNCID] = Operand::Const(Constant::Int(side.funcid()));
            for (k, &slot) in pm.slots(side).iter().enumerate() {
                args[slot] = i.operands[k].clone();
            }
            i.operands = args;
            i.callee = Some(merged.to_string());
            n += 1;
        }
    }
    n
}

/// Adds the merged function in place of `f1`, redirects calls and drops both
/// inputs.
pub fn install_merged(module: &mut IrModule, result: &MergeResult, f1: &str, f2: &str) {
    let at = module.functions.iter().position(|f| f.name == f1).unwrap_or(module.functions.len());
    module.functions.insert(at, result.merged.clone());
    rewrite_call_sites(module, f1, f2, &result.merged.name, &result.param_map);
    module.functions.retain(|f| f.name != f1 && f.name != f2);
}
