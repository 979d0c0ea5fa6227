//! Block-paired local merging.

use super::{build_local, instr_pairs, MergeError, MergeResult, Signatures};
use crate::align::{nw_align, AlignmentModel};
use crate::ir::{BasicBlock, IrFunction, Opcode};
use crate::linearize::LinearSeq;

/// Opcode histogram of a block, phis and terminator included.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fingerprint {
    pub counts: [u32; Opcode::COUNT],
}

impl Fingerprint {
    pub fn get(&self, op: Opcode) -> u32 {
        self.counts[op.index()]
    }

    /// Manhattan distance.
    pub fn distance(&self, other: &Fingerprint) -> u32 {
        self.counts.iter().zip(&other.counts).map(|(a, b)| a.abs_diff(*b)).sum()
    }
}

pub fn fingerprint(b: &BasicBlock) -> Fingerprint {
    let mut counts = [0; Opcode::COUNT];
    for i in &b.instrs {
        counts[i.opcode.index()] += 1;
    }
    Fingerprint { counts }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPairing {
    /// (block of f1, block of f2) in pairing order.
    pub pairs: Vec<(usize, usize)>,
    pub leftover1: Vec<usize>,
    pub leftover2: Vec<usize>,
}

/// Greedy global minimum-distance pairing, ties to the earlier f1 block and
/// then the earlier f2 block. Pairs farther apart than the smaller block's
/// size stay unpaired.
pub fn pair_blocks(f1: &IrFunction, f2: &IrFunction) -> BlockPairing {
    let fp1: Vec<Fingerprint> = f1.blocks.iter().map(fingerprint).collect();
    let fp2: Vec<Fingerprint> = f2.blocks.iter().map(fingerprint).collect();
    let mut cands: Vec<(u32, usize, usize)> = Vec::with_capacity(fp1.len() * fp2.len());
    for (a, x) in fp1.iter().enumerate() {
        for (b, y) in fp2.iter().enumerate() {
            let d = x.distance(y);
            if d as usize <= f1.blocks[a].instrs.len().min(f2.blocks[b].instrs.len()) {
                cands.push((d, a, b));
            }
        }
    }
    cands.sort_unstable();
    let mut used1 = vec![false; fp1.len()];
    let mut used2 = vec![false; fp2.len()];
    let mut pairs = Vec::new();
    for (_, a, b) in cands {
        if !used1[a] && !used2[b] {
            used1[a] = true;
            used2[b] = true;
            pairs.push((a, b));
        }
    }
    BlockPairing {
        pairs,
        leftover1: (0..fp1.len()).filter(|&a| !used1[a]).collect(),
        leftover2: (0..fp2.len()).filter(|&b| !used2[b]).collect(),
    }
}

/// Aligns each paired block's instructions (phis excluded) and merges.
pub fn hyfm_merge(f1: &IrFunction, f2: &IrFunction, model: &AlignmentModel, sigs: &Signatures) -> Result<MergeResult, MergeError> {
    let mut pairs = Vec::new();
    for (a, b) in pair_blocks(f1, f2).pairs {
        let (x, y) = (LinearSeq::block(f1, a, false), LinearSeq::block(f2, b, false));
        let alg = nw_align(&x, &y, model);
        pairs.extend(instr_pairs(&x, &y, &alg)?);
    }
    build_local(f1, f2, &pairs, sigs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    fn funcs(src: &str) -> Vec<IrFunction> {
        parse_module(src).unwrap().functions
    }

    #[test]
    fn fingerprint_counts() {
        let fs = funcs("func @f(%a: i32) -> i32 { entry:\n %x = add i32 %a, 1\n %y = add i32 %x, 1\n ret i32 %y }");
        let fp = fingerprint(&fs[0].blocks[0]);
        assert_eq!(fp.get(Opcode::Add), 2);
        assert_eq!(fp.get(Opcode::Ret), 1);
        assert_eq!(fp.counts.iter().sum::<u32>(), 3);
    }

    #[test]
    fn closest_blocks_pair_first() {
        let fs = funcs(
            "func @f(%a: i32) -> i32 {
              x:
                %s = add i32 %a, 1
                br y
              y:
                %m = mul i32 %s, 2
                %n = mul i32 %m, 2
                br z
              z: ret i32 %n
            }
            func @g(%a: i32) -> i32 {
              p:
                %m = mul i32 %a, 2
                %n = mul i32 %m, 2
                br q
              q: ret i32 %n
            }",
        );
        let bp = pair_blocks(&fs[0], &fs[1]);
        assert_eq!(fingerprint(&fs[0].blocks[0]).distance(&fingerprint(&fs[1].blocks[0])), 3);
        assert_eq!(bp.pairs, vec![(1, 0), (2, 1)]);
        assert_eq!(bp.leftover1, vec![0]);
        assert!(bp.leftover2.is_empty());
    }

    #[test]
    fn distant_blocks_stay_unpaired() {
        let fs = funcs(
            "func @f(%a: i32) -> i32 { e:\n %x = add i32 %a, 1\n %y = add i32 %x, 1\n %z = add i32 %y, 1\n ret i32 %z }
             func @g(%a: i32) -> i32 { e:\n %x = mul i32 %a, 1\n %y = mul i32 %x, 1\n %z = mul i32 %y, 1\n ret i32 %z }",
        );
        let bp = pair_blocks(&fs[0], &fs[1]);
        assert!(bp.pairs.is_empty());
        assert_eq!((bp.leftover1, bp.leftover2), (vec![0], vec![0]));
    }
}
