use crate::interp::RuntimeValue;
use crate::ir::{IrFunction, IrType, Param};

use super::names::NameAllocator;

/// Which input function of a merge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    F1,
    F2,
}

impl Side {
    /// Value of the function identifier selecting this side.
    pub fn funcid(self) -> i64 {
        match self {
            Side::F1 => 0,
            Side::F2 => 1,
        }
    }

    pub fn index(self) -> usize {
        self.funcid() as usize
    }
}

/// Merged parameter list and where each input parameter landed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamMap {
    /// Merged parameters; slot 0 is the `i1` function identifier.
    pub params: Vec<Param>,
    /// `f1[k]` is the merged slot of f1's k-th parameter.
    pub f1: Vec<usize>,
    pub f2: Vec<usize>,
}

impl ParamMap {
    pub const FUNCID: usize = 0;

    pub fn slots(&self, side: Side) -> &[usize] {
        match side {
            Side::F1 => &self.f1,
            Side::F2 => &self.f2,
        }
    }

    /// Arguments for the merged function that reproduce a call of one input.
    /// Slots not used by that side get the zero of their type.
    pub fn merged_args(&self, side: Side, args: &[RuntimeValue]) -> Vec<RuntimeValue> {
        let mut out: Vec<RuntimeValue> = self
            .params
            .iter()
            .map(|p| RuntimeValue::zero(p.ty))
            .collect();
        out[Self::FUNCID] = RuntimeValue::Int(side.funcid());
        for (k, &slot) in self.slots(side).iter().enumerate() {
            out[slot] = args[k];
        }
        out
    }
}

/// Greedy first-fit parameter sharing: each parameter of `f2` takes the first
/// slot of the same type that came from `f1` and is not yet claimed.
pub fn merge_parameters(f1: &IrFunction, f2: &IrFunction) -> ParamMap {
    let mut names = NameAllocator::new();
    let mut params = vec![Param::new(names.fresh("fid"), IrType::I1)];
    let mut m1 = Vec::with_capacity(f1.params.len());
    for p in &f1.params {
        m1.push(params.len());
        params.push(Param::new(names.fresh(&p.name), p.ty));
    }
    let mut claimed = vec![false; params.len()];
    let mut m2 = Vec::with_capacity(f2.params.len());
    for p in &f2.params {
        let slot = m1
            .iter()
            .copied()
            .find(|&s| !claimed[s] && params[s].ty == p.ty);
        match slot {
            Some(s) => {
                claimed[s] = true;
                m2.push(s);
            }
            None => {
                m2.push(params.len());
                params.push(Param::new(names.fresh(&p.name), p.ty));
                claimed.push(true);
            }
        }
    }
    ParamMap {
        params,
        f1: m1,
        f2: m2,
    }
}
