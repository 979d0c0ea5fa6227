use std::collections::HashMap;

use super::names::NameAllocator;
use super::params::ParamMap;
use super::repair::repair_ssa;
use super::{MergeError, Origin, Pos, Signatures};
use crate::align::fusable;
use crate::ir::{operand_types, BasicBlock, Instruction, IrFunction, IrType, Opcode, Operand};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ChunkKind {
    Solo(usize),
    Shared,
}

/// A run of instructions emitted as one merged block. For shared chunks
/// `block`/`start` are valid on both sides, for solo chunks only on `side`.
#[derive(Clone, Debug)]
struct Chunk {
    kind: ChunkKind,
    block: [usize; 2],
    start: [usize; 2],
    len: usize,
}

#[derive(Clone, Debug)]
struct PInst {
    instr: Instruction,
    origin: Origin,
    /// Operand positions whose f2 value differs: `(position, f2 operand)`.
    diffs: Vec<(usize, Operand)>,
    /// The instruction in f1 to type operands against (fused only).
    typing: Option<Pos>,
}

impl PInst {
    fn plain(instr: Instruction, origin: Origin) -> Self {
        PInst {
            instr,
            origin,
            diffs: Vec::new(),
            typing: None,
        }
    }
}

#[derive(Clone, Debug)]
struct PPhi {
    side: usize,
    name: String,
    ty: IrType,
    origin: Origin,
    /// Incoming value per original predecessor label.
    by_pred: HashMap<String, Operand>,
    /// Incoming value per merged predecessor; `None` where the phi's
    /// function never flows in.
    incoming: Vec<(Option<Operand>, usize)>,
    alive: bool,
}

#[derive(Clone, Debug, Default)]
struct MBlock {
    label: String,
    phis: Vec<usize>,
    body: Vec<PInst>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Flow {
    from: usize,
    to: usize,
    side: usize,
    /// Original predecessor block, for edges that cross original blocks.
    pred: Option<usize>,
}

struct Builder<'a> {
    fs: [&'a IrFunction; 2],
    types: [HashMap<String, IrType>; 2],
    partner: [Vec<Vec<Option<Pos>>>; 2],
    rename: [HashMap<String, String>; 2],
    fid: String,
    values: NameAllocator,
    labels: NameAllocator,
    chunks: Vec<Chunk>,
    /// chunk ids of each block's non-phi part, per side
    chunks_of: [Vec<Vec<usize>>; 2],
    blocks: Vec<MBlock>,
    phis: Vec<PPhi>,
    flows: Vec<Flow>,
    merged_types: HashMap<String, IrType>,
}

fn side_origin(side: usize, flat: usize) -> Origin {
    if side == 0 {
        Origin::F1(flat)
    } else {
        Origin::F2(flat)
    }
}

const ENTRY: usize = 0;

pub(super) fn build(
    f1: &IrFunction,
    f2: &IrFunction,
    pairs: &[(Pos, Pos)],
    pm: &ParamMap,
    name: &str,
    sigs: &Signatures,
) -> Result<(IrFunction, Vec<Vec<Origin>>), MergeError> {
    let fs = [f1, f2];
    let types = [f1.value_types(), f2.value_types()];
    let mut partner: [Vec<Vec<Option<Pos>>>; 2] =
        fs.map(|f| f.blocks.iter().map(|b| vec![None; b.instrs.len()]).collect());
    for &(p, q) in pairs {
        let x = f1.blocks.get(p.0).and_then(|b| b.instrs.get(p.1));
        let y = f2.blocks.get(q.0).and_then(|b| b.instrs.get(q.1));
        let (Some(x), Some(y)) = (x, y) else {
            return Err(MergeError::InvalidAlignment(format!("pair {p:?}/{q:?} out of range")));
        };
        if !fusable(x, &|n| types[0].get(n).copied(), y, &|n| types[1].get(n).copied()) {
            return Err(MergeError::InvalidAlignment(format!("{} and {} are not matchable", x.opcode, y.opcode)));
        }
        if partner[0][p.0][p.1].is_some() || partner[1][q.0][q.1].is_some() {
            return Err(MergeError::InvalidAlignment("instruction fused twice".into()));
        }
        partner[0][p.0][p.1] = Some(q);
        partner[1][q.0][q.1] = Some(p);
    }

    let mut b = Builder {
        fs,
        types,
        partner,
        rename: [HashMap::new(), HashMap::new()],
        fid: pm.params[ParamMap::FUNCID].name.clone(),
        values: NameAllocator::new(),
        labels: NameAllocator::new(),
        chunks: Vec::new(),
        chunks_of: [Vec::new(), Vec::new()],
        blocks: Vec::new(),
        phis: Vec::new(),
        flows: Vec::new(),
        merged_types: HashMap::new(),
    };
    b.assign_names(pm);
    b.cut_chunks();
    b.emit_bodies();
    b.emit_control();
    b.place_phis();
    b.coalesce_phis();
    b.finalize(pm, name, sigs)
}

impl<'a> Builder<'a> {
    fn assign_names(&mut self, pm: &ParamMap) {
        for p in &pm.params {
            self.values.reserve(&p.name);
            self.merged_types.insert(p.name.clone(), p.ty);
        }
        for (k, slots) in [&pm.f1, &pm.f2].into_iter().enumerate() {
            for (p, &s) in self.fs[k].params.iter().zip(slots) {
                self.rename[k].insert(p.name.clone(), pm.params[s].name.clone());
            }
        }
        for k in 0..2 {
            for (bi, block) in self.fs[k].blocks.iter().enumerate() {
                for (ii, i) in block.instrs.iter().enumerate() {
                    let Some((n, t)) = &i.result else { continue };
                    let merged = match (k, self.partner[k][bi][ii]) {
                        (1, Some(p)) => {
                            let other = self.fs[0].blocks[p.0].instrs[p.1].result_name().expect("fused results");
                            self.rename[0][other].clone()
                        }
                        _ => self.values.fresh(n),
                    };
                    self.merged_types.insert(merged.clone(), *t);
                    self.rename[k].insert(n.clone(), merged);
                }
            }
        }
    }

    fn cut_chunks(&mut self) {
        let entry = self.labels.fresh("entry");
        self.blocks.push(MBlock {
            label: entry,
            ..MBlock::default()
        });
        let mut shared_at: HashMap<Pos, usize> = HashMap::new();
        for k in 0..2 {
            let f = self.fs[k];
            for (bi, block) in f.blocks.iter().enumerate() {
                let mut list = Vec::new();
                let mut i = block.first_non_phi();
                while i < block.instrs.len() {
                    let c = match self.partner[k][bi][i] {
                        Some(q) if k == 0 => {
                            let other = &self.fs[1].blocks[q.0];
                            let mut len = 1;
                            while i + len < block.instrs.len()
                                && q.1 + len < other.instrs.len()
                                && self.partner[0][bi][i + len] == Some((q.0, q.1 + len))
                            {
                                len += 1;
                            }
                            let id = self.chunks.len();
                            self.chunks.push(Chunk {
                                kind: ChunkKind::Shared,
                                block: [bi, q.0],
                                start: [i, q.1],
                                len,
                            });
                            shared_at.insert(q, id);
                            self.new_block(&block.label);
                            id
                        }
                        Some(_) => {
                            
                            shared_at[&(bi, i)]
                        }
                        None => {
                            let mut len = 1;
                            while i + len < block.instrs.len() && self.partner[k][bi][i + len].is_none() {
                                len += 1;
                            }
                            let id = self.chunks.len();
                            let mut blk = [0; 2];
                            blk[k] = bi;
                            let mut start = [0; 2];
                            start[k] = i;
                            self.chunks.push(Chunk {
                                kind: ChunkKind::Solo(k),
                                block: blk,
                                start,
                                len,
                            });
                            self.new_block(&block.label);
                            id
                        }
                    };
                    i += self.chunks[c].len;
                    list.push(c);
                }
                self.chunks_of[k].push(list);
            }
        }
    }

    fn new_block(&mut self, base: &str) -> usize {
        let label = self.labels.fresh(base);
        self.blocks.push(MBlock {
            label,
            ..MBlock::default()
        });
        self.blocks.len() - 1
    }

    /// Merged block of a chunk.
    fn mb(c: usize) -> usize {
        c + 1
    }

    fn first(&self, k: usize, block: usize) -> usize {
        Self::mb(self.chunks_of[k][block][0])
    }

    fn target(&self, k: usize, label: &str) -> usize {
        let b = self.fs[k].block_index(label).expect("validated label");
        self.first(k, b)
    }

    fn renamed(&self, k: usize, o: &Operand) -> Operand {
        match o {
            Operand::Value(v) => Operand::Value(self.rename[k].get(v).cloned().unwrap_or_else(|| v.clone())),
            other => other.clone(),
        }
    }

    fn renamed_instr(&self, k: usize, i: &Instruction) -> Instruction {
        let mut out = i.clone();
        if let Some((n, _)) = &mut out.result {
            *n = self.rename[k][n.as_str()].clone();
        }
        for o in &mut out.operands {
            *o = self.renamed(k, o);
        }
        out
    }

    fn flat(&self, k: usize, p: Pos) -> usize {
        self.fs[k].flat_index(p.0, p.1)
    }

    fn emit_bodies(&mut self) {
        for c in 0..self.chunks.len() {
            let ch = self.chunks[c].clone();
            for t in 0..ch.len {
                let item = match ch.kind {
                    ChunkKind::Solo(k) => {
                        let pos = (ch.block[k], ch.start[k] + t);
                        let x = &self.fs[k].blocks[pos.0].instrs[pos.1];
                        if x.is_terminator() {
                            continue;
                        }
                        let p = PInst::plain(self.renamed_instr(k, x), side_origin(k, self.flat(k, pos)));
                        (p, x.opcode == Opcode::Alloca && pos.0 == 0)
                    }
                    ChunkKind::Shared => {
                        let p1 = (ch.block[0], ch.start[0] + t);
                        let p2 = (ch.block[1], ch.start[1] + t);
                        let x = &self.fs[0].blocks[p1.0].instrs[p1.1];
                        let y = &self.fs[1].blocks[p2.0].instrs[p2.1];
                        if x.is_terminator() {
                            continue;
                        }
                        let p = self.fused(x, y, p1, p2);
                        (p, x.opcode == Opcode::Alloca && p1.0 == 0 && p2.0 == 0)
                    }
                };
                let at = if item.1 { ENTRY } else { Self::mb(c) };
                self.blocks[at].body.push(item.0);
            }
        }
    }

    fn fused(&self, x: &Instruction, y: &Instruction, p1: Pos, p2: Pos) -> PInst {
        let instr = self.renamed_instr(0, x);
        let mut diffs = Vec::new();
        for (pos, o2) in y.operands.iter().enumerate() {
            if matches!(o2, Operand::Label(_)) {
                continue;
            }
            let o2 = self.renamed(1, o2);
            if o2 != instr.operands[pos] {
                diffs.push((pos, o2));
            }
        }
        PInst {
            instr,
            origin: Origin::Fused(self.flat(0, p1), self.flat(1, p2)),
            diffs,
            typing: Some(p1),
        }
    }

    fn flow(&mut self, from: usize, to: usize, side: usize, pred: Option<usize>) {
        let f = Flow { from, to, side, pred };
        if !self.flows.contains(&f) {
            self.flows.push(f);
        }
    }

    fn fid_branch(&self, t2: usize, t1: usize) -> Instruction {
        Instruction::new(
            Opcode::CondBr,
            None,
            vec![
                Operand::Value(self.fid.clone()),
                Operand::Label(self.blocks[t2].label.clone()),
                Operand::Label(self.blocks[t1].label.clone()),
            ],
        )
    }

    fn jump(&self, t: usize) -> Instruction {
        Instruction::new(Opcode::Br, None, vec![Operand::Label(self.blocks[t].label.clone())])
    }

    /// Branch to `t1` for f1 and `t2` for f2.
    fn split_branch(&self, t1: usize, t2: usize) -> Instruction {
        if t1 == t2 {
            self.jump(t1)
        } else {
            self.fid_branch(t2, t1)
        }
    }

    fn emit_control(&mut self) {
        let (e1, e2) = (self.first(0, 0), self.first(1, 0));
        let entry_term = self.split_branch(e1, e2);
        self.blocks[ENTRY].body.push(PInst::plain(entry_term, Origin::Overhead));
        self.flow(ENTRY, e1, 0, None);
        self.flow(ENTRY, e2, 1, None);

        for c in 0..self.chunks.len() {
            let ch = self.chunks[c].clone();
            let m = Self::mb(c);
            let sides: Vec<usize> = match ch.kind {
                ChunkKind::Solo(k) => vec![k],
                ChunkKind::Shared => vec![0, 1],
            };
            let ends = sides.iter().map(|&k| ch.start[k] + ch.len == self.fs[k].blocks[ch.block[k]].instrs.len());
            let is_last = ends.clone().all(|e| e);
            debug_assert_eq!(is_last, ends.clone().any(|e| e));
            if !is_last {
                let next: Vec<usize> = sides
                    .iter()
                    .map(|&k| {
                        let list = &self.chunks_of[k][ch.block[k]];
                        let at = list.iter().position(|&x| x == c).expect("chunk in its block");
                        Self::mb(list[at + 1])
                    })
                    .collect();
                let term = match ch.kind {
                    ChunkKind::Solo(_) => self.jump(next[0]),
                    ChunkKind::Shared => self.split_branch(next[0], next[1]),
                };
                self.blocks[m].body.push(PInst::plain(term, Origin::Overhead));
                for (s, &k) in sides.iter().enumerate() {
                    self.flow(m, next[s], k, None);
                }
                continue;
            }
            match ch.kind {
                ChunkKind::Solo(k) => self.solo_terminator(c, k),
                ChunkKind::Shared => self.shared_terminator(c),
            }
        }
    }

    fn solo_terminator(&mut self, c: usize, k: usize) {
        let ch = &self.chunks[c];
        let (bi, ti) = (ch.block[k], ch.start[k] + ch.len - 1);
        let t = &self.fs[k].blocks[bi].instrs[ti];
        let mut instr = self.renamed_instr(k, t);
        let m = Self::mb(c);
        let mut targets = Vec::new();
        for o in &mut instr.operands {
            if let Operand::Label(l) = o {
                let to = self.target(k, l);
                targets.push(to);
                *l = self.blocks[to].label.clone();
            }
        }
        for to in targets {
            self.flow(m, to, k, Some(bi));
        }
        let origin = side_origin(k, self.flat(k, (bi, ti)));
        self.blocks[m].body.push(PInst::plain(instr, origin));
    }

    fn shared_terminator(&mut self, c: usize) {
        let ch = self.chunks[c].clone();
        let p1 = (ch.block[0], ch.start[0] + ch.len - 1);
        let p2 = (ch.block[1], ch.start[1] + ch.len - 1);
        let x = &self.fs[0].blocks[p1.0].instrs[p1.1];
        let y = &self.fs[1].blocks[p2.0].instrs[p2.1];
        let m = Self::mb(c);
        let mut p = self.fused(x, y, p1, p2);

        if x.opcode == Opcode::Br {
            let (l1, l2) = (x.operands[0].as_label().unwrap(), y.operands[0].as_label().unwrap());
            let (t1, t2) = (self.target(0, l1), self.target(1, l2));
            p.instr = self.split_branch(t1, t2);
            if t1 != t2 {
                p.origin = Origin::Dispatch(self.flat(0, p1), self.flat(1, p2));
            }
            self.flow(m, t1, 0, Some(p1.0));
            self.flow(m, t2, 1, Some(p2.0));
            self.blocks[m].body.push(p);
            return;
        }

        if !matches!(x.opcode, Opcode::CondBr | Opcode::Switch) {
            self.blocks[m].body.push(p);
            return;
        }
        // targets per side, default (or false) first
        let label_pos: Vec<usize> = match x.opcode {
            Opcode::CondBr => vec![2, 1],
            _ => std::iter::once(1).chain((3..x.operands.len()).step_by(2)).collect(),
        };
        let targets: [Vec<usize>; 2] = [(0, x), (1, y)].map(|(k, i)| {
            label_pos.iter().map(|&pos| self.target(k, i.operands[pos].as_label().unwrap())).collect()
        });
        for k in 0..2 {
            let pred = Some(if k == 0 { p1.0 } else { p2.0 });
            for &t in &targets[k] {
                self.flow(m, t, k, pred);
            }
        }
        if targets[0] == targets[1] {
            for (&pos, &t) in label_pos.iter().zip(&targets[0]) {
                p.instr.operands[pos] = Operand::Label(self.blocks[t].label.clone());
            }
            self.blocks[m].body.push(p);
            return;
        }
        let term = self.indexed_switch(m, &p, x, &targets);
        let origin = Origin::Dispatch(self.flat(0, p1), self.flat(1, p2));
        self.blocks[m].body.push(PInst::plain(term, origin));
    }

    /// One switch standing in for a fused condbr or switch whose targets
    /// differ between the sides: the case index (0 for the default or
    /// false edge) is offset by the number of targets for f2.
    fn indexed_switch(&mut self, m: usize, p: &PInst, x: &Instruction, targets: &[Vec<usize>; 2]) -> Instruction {
        let vty = match x.opcode {
            Opcode::CondBr => IrType::I1,
            _ => x.ty.expect("typed switch"),
        };
        let mut v = p.instr.operands[0].clone();
        if let Some((_, o2)) = p.diffs.iter().find(|(pos, _)| *pos == 0) {
            let sel = self.values.fresh("sel");
            self.merged_types.insert(sel.clone(), vty);
            let i = Instruction::new(Opcode::Select, Some(vty), vec![Operand::Value(self.fid.clone()), o2.clone(), v])
                .with_result(sel.clone(), vty);
            self.blocks[m].body.push(PInst::plain(i, Origin::Overhead));
            v = Operand::Value(sel);
        }
        let emit = |b: &mut Self, base: &str, i: Instruction| -> Operand {
            let n = b.values.fresh(base);
            b.merged_types.insert(n.clone(), IrType::I32);
            b.blocks[m].body.push(PInst::plain(i.with_result(n.clone(), IrType::I32), Origin::Overhead));
            Operand::Value(n)
        };
        let mut j = match x.opcode {
            Opcode::CondBr => emit(self, "case", Instruction::new(Opcode::ZExt, Some(IrType::I1), vec![v.clone()])),
            _ => Operand::int(0),
        };
        if x.opcode == Opcode::Switch {
            for (k, c) in x.operands.iter().skip(2).step_by(2).enumerate() {
                let e = self.values.fresh("is");
                self.merged_types.insert(e.clone(), IrType::I1);
                let cmp = Instruction::new(Opcode::ICmp, Some(vty), vec![v.clone(), c.clone()])
                    .with_predicate(crate::ir::Predicate::Eq)
                    .with_result(e.clone(), IrType::I1);
                self.blocks[m].body.push(PInst::plain(cmp, Origin::Overhead));
                let sel = Instruction::new(
                    Opcode::Select,
                    Some(IrType::I32),
                    vec![Operand::Value(e), Operand::int(k as i64 + 1), j],
                );
                j = emit(self, "case", sel);
            }
        }
        let n = targets[0].len() as i64;
        let off = emit(
            self,
            "off",
            Instruction::new(Opcode::Select, Some(IrType::I32), vec![Operand::Value(self.fid.clone()), Operand::int(n), Operand::int(0)]),
        );
        let idx = emit(self, "idx", Instruction::new(Opcode::Add, Some(IrType::I32), vec![j, off]));
        let label = |b: &Self, t: usize| Operand::Label(b.blocks[t].label.clone());
        let mut ops = vec![idx, label(self, targets[0][0])];
        for (k, side) in targets.iter().enumerate() {
            for (c, &t) in side.iter().enumerate() {
                if k == 0 && c == 0 {
                    continue;
                }
                ops.push(Operand::int(k as i64 * n + c as i64));
                ops.push(label(self, t));
            }
        }
        Instruction::new(Opcode::Switch, Some(IrType::I32), ops)
    }

    fn place_phis(&mut self) {
        for k in 0..2 {
            let f = self.fs[k];
            for (bi, block) in f.blocks.iter().enumerate() {
                let m = self.first(k, bi);
                for (ii, phi) in block.phis().iter().enumerate() {
                    let (n, ty) = phi.result.clone().expect("phi result");
                    let by_pred = phi
                        .phi_incoming()
                        .map(|(v, l)| (l.to_string(), self.renamed(k, v)))
                        .collect();
                    let id = self.phis.len();
                    self.phis.push(PPhi {
                        side: k,
                        name: self.rename[k][&n].clone(),
                        ty,
                        origin: side_origin(k, self.flat(k, (bi, ii))),
                        by_pred,
                        incoming: Vec::new(),
                        alive: true,
                    });
                    self.blocks[m].phis.push(id);
                }
            }
        }
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); self.blocks.len()];
        for fl in &self.flows {
            if !preds[fl.to].contains(&fl.from) {
                preds[fl.to].push(fl.from);
            }
        }
        for m in 0..self.blocks.len() {
            for &id in &self.blocks[m].phis.clone() {
                let k = self.phis[id].side;
                let incoming = preds[m]
                    .iter()
                    .map(|&p| {
                        let v = self
                            .flows
                            .iter()
                            .find(|fl| fl.from == p && fl.to == m && fl.side == k && fl.pred.is_some())
                            .map(|fl| {
                                let label = &self.fs[k].blocks[fl.pred.unwrap()].label;
                                self.phis[id].by_pred[label].clone()
                            });
                        (v, p)
                    })
                    .collect();
                self.phis[id].incoming = incoming;
            }
        }
    }

    fn coalesce_phis(&mut self) {
        let mut alias: HashMap<String, String> = HashMap::new();
        let mut changed = true;
        while changed {
            changed = false;
            for m in 0..self.blocks.len() {
                let ids = self.blocks[m].phis.clone();
                let ones: Vec<usize> = ids.iter().copied().filter(|&i| self.phis[i].side == 0).collect();
                let twos: Vec<usize> = ids
                    .iter()
                    .copied()
                    .filter(|&i| self.phis[i].side == 1 && self.phis[i].alive)
                    .collect();
                for &q in &twos {
                    for &p in &ones {
                        if self.phis[p].ty != self.phis[q].ty || self.claimed(p) {
                            continue;
                        }
                        if self.compatible(p, q, &alias) {
                            let merged: Vec<(Option<Operand>, usize)> = self.phis[p]
                                .incoming
                                .iter()
                                .zip(&self.phis[q].incoming)
                                .map(|((a, pb), (b, _))| (a.clone().or_else(|| b.clone()), *pb))
                                .collect();
                            self.phis[p].incoming = merged;
                            if let (Origin::F1(i), Origin::F2(j)) = (self.phis[p].origin, self.phis[q].origin) {
                                self.phis[p].origin = Origin::Fused(i, j);
                            }
                            self.phis[q].alive = false;
                            self.phis[p].side = 2;
                            alias.insert(self.phis[q].name.clone(), self.phis[p].name.clone());
                            changed = true;
                            break;
                        }
                    }
                }
            }
        }
        for p in &mut self.phis {
            if p.side == 2 {
                p.side = 0;
            }
        }
        if alias.is_empty() {
            return;
        }
        let resolve = |o: &Operand| resolve_alias(&alias, o);
        for blk in &mut self.blocks {
            for pi in &mut blk.body {
                for o in pi.instr.value_operands_mut() {
                    *o = resolve(o);
                }
                for (_, o) in &mut pi.diffs {
                    *o = resolve(o);
                }
            }
        }
        for p in &mut self.phis {
            for (v, _) in &mut p.incoming {
                if let Some(v) = v {
                    *v = resolve(v);
                }
            }
        }
    }

    /// A side-0 phi that already absorbed a side-1 phi (marked side 2).
    fn claimed(&self, p: usize) -> bool {
        self.phis[p].side == 2
    }

    fn compatible(&self, p: usize, q: usize, alias: &HashMap<String, String>) -> bool {
        self.phis[p]
            .incoming
            .iter()
            .zip(&self.phis[q].incoming)
            .all(|((a, _), (b, _))| match (a, b) {
                (Some(a), Some(b)) => resolve_alias(alias, a) == resolve_alias(alias, b),
                _ => true,
            })
    }

    fn select_type(&self, pi: &PInst, pos: usize, o1: &Operand, o2: &Operand, sigs: &Signatures) -> Result<IrType, MergeError> {
        for o in [o1, o2] {
            if let Operand::Value(v) = o {
                if let Some(t) = self.merged_types.get(v) {
                    return Ok(*t);
                }
            }
        }
        let at = pi.typing.expect("fused instruction");
        let x = &self.fs[0].blocks[at.0].instrs[at.1];
        let callee_params = match &x.callee {
            Some(c) => Some(sigs.params(c).ok_or_else(|| MergeError::UnknownCallee(c.clone()))?),
            None => None,
        };
        let tys = operand_types(x, &|n| self.types[0].get(n).copied(), callee_params);
        tys.get(pos)
            .copied()
            .flatten()
            .ok_or_else(|| MergeError::InvalidAlignment(format!("cannot type operand {pos} of {}", x.opcode)))
    }

    fn finalize(mut self, pm: &ParamMap, name: &str, sigs: &Signatures) -> Result<(IrFunction, Vec<Vec<Origin>>), MergeError> {
        let mut out_blocks = Vec::with_capacity(self.blocks.len());
        let mut origins = Vec::with_capacity(self.blocks.len());
        let labels: Vec<String> = self.blocks.iter().map(|b| b.label.clone()).collect();
        for blk in std::mem::take(&mut self.blocks) {
            let mut instrs = Vec::new();
            let mut orig = Vec::new();
            for &id in &blk.phis {
                let p = &self.phis[id];
                if !p.alive {
                    continue;
                }
                let mut ops = Vec::with_capacity(p.incoming.len() * 2);
                for (v, pred) in &p.incoming {
                    ops.push(v.clone().unwrap_or(Operand::Const(p.ty.zero())));
                    ops.push(Operand::Label(labels[*pred].clone()));
                }
                instrs.push(Instruction::new(Opcode::Phi, Some(p.ty), ops).with_result(p.name.clone(), p.ty));
                orig.push(p.origin);
            }
            for mut pi in blk.body {
                for (pos, o2) in std::mem::take(&mut pi.diffs) {
                    let o1 = pi.instr.operands[pos].clone();
                    if o1 == o2 {
                        continue;
                    }
                    let ty = self.select_type(&pi, pos, &o1, &o2, sigs)?;
                    let sel = self.values.fresh("sel");
                    self.merged_types.insert(sel.clone(), ty);
                    instrs.push(
                        Instruction::new(
                            Opcode::Select,
                            Some(ty),
                            vec![Operand::Value(self.fid.clone()), o2, o1],
                        )
                        .with_result(sel.clone(), ty),
                    );
                    orig.push(Origin::Overhead);
                    pi.instr.operands[pos] = Operand::Value(sel);
                }
                instrs.push(pi.instr);
                orig.push(pi.origin);
            }
            out_blocks.push(BasicBlock {
                label: blk.label,
                instrs,
            });
            origins.push(orig);
        }
        let mut f = IrFunction {
            name: name.to_string(),
            params: pm.params.clone(),
            ret_ty: self.fs[0].ret_ty,
            blocks: out_blocks,
        };
        repair_ssa(&mut f, &mut origins, Origin::Overhead, &mut self.values);
        Ok((f, origins))
    }
}

fn resolve_alias(alias: &HashMap<String, String>, o: &Operand) -> Operand {
    let mut cur = o.clone();
    while let Operand::Value(v) = &cur {
        match alias.get(v) {
            Some(n) => cur = Operand::Value(n.clone()),
            None => break,
        }
    }
    cur
}
