//! CFG linearization and the reg2mem / mem2reg pair.

use std::collections::HashMap;

use crate::codegen::NameAllocator;
use crate::ir::{
    BasicBlock, Cfg, DomTree, Instruction, IrFunction, IrType, Opcode, Operand,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LinearItem {
    /// Start of block `b`.
    BlockMarker(usize),
    /// Instruction `i` of block `b`.
    Instr(usize, usize),
}

/// A function (or part of one) as a flat item sequence.
#[derive(Clone, Debug)]
pub struct LinearSeq<'a> {
    pub func: &'a IrFunction,
    pub items: Vec<LinearItem>,
    types: HashMap<String, IrType>,
}

/// Borrowed view of one sequence item.
#[derive(Clone, Copy, Debug)]
pub enum ItemRef<'a> {
    Marker(&'a BasicBlock),
    Instr(&'a Instruction),
}

impl<'a> LinearSeq<'a> {
    pub fn new(func: &'a IrFunction, items: Vec<LinearItem>) -> Self {
        LinearSeq {
            func,
            items,
            types: func.value_types(),
        }
    }

    /// Instructions of a single block, without a marker.
    pub fn block(func: &'a IrFunction, b: usize, include_phis: bool) -> Self {
        let block = &func.blocks[b];
        let start = if include_phis { 0 } else { block.first_non_phi() };
        let items = (start..block.instrs.len()).map(|i| LinearItem::Instr(b, i)).collect();
        LinearSeq::new(func, items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, k: usize) -> ItemRef<'a> {
        match self.items[k] {
            LinearItem::BlockMarker(b) => ItemRef::Marker(&self.func.blocks[b]),
            LinearItem::Instr(b, i) => ItemRef::Instr(&self.func.blocks[b].instrs[i]),
        }
    }

    pub fn value_type(&self, name: &str) -> Option<IrType> {
        self.types.get(name).copied()
    }

    /// Opcode name, or "block" for a marker.
    pub fn describe(&self, k: usize) -> &'static str {
        match self.get(k) {
            ItemRef::Marker(_) => "block",
            ItemRef::Instr(i) => i.opcode.name(),
        }
    }
}

/// Blocks in order, each a marker followed by its instructions.
pub fn linearize(f: &IrFunction, include_phis: bool) -> LinearSeq<'_> {
    let mut items = Vec::with_capacity(f.blocks.len() + f.instruction_count());
    for (b, block) in f.blocks.iter().enumerate() {
        items.push(LinearItem::BlockMarker(b));
        for (i, instr) in block.instrs.iter().enumerate() {
            if include_phis || !instr.is_phi() {
                items.push(LinearItem::Instr(b, i));
            }
        }
    }
    LinearSeq::new(f, items)
}

fn all_names(f: &IrFunction) -> NameAllocator {
    let mut names = NameAllocator::new();
    for p in &f.params {
        names.reserve(&p.name);
    }
    for i in f.instructions() {
        if let Some(n) = i.result_name() {
            names.reserve(n);
        }
    }
    names
}

/// Replaces every phi by an entry-block alloca, a store at the end of each
/// predecessor and a load where the phi was.
pub fn reg2mem(f: &IrFunction) -> IrFunction {
    reg2mem_tracked(f).0
}

/// Like [`reg2mem`], also returning for every instruction of the result its
/// flat index in `f`, or `None` for inserted instructions and the loads that
/// replace phis.
pub fn reg2mem_tracked(f: &IrFunction) -> (IrFunction, Vec<Vec<Option<usize>>>) {
    let mut names = all_names(f);
    let mut origin: Vec<Vec<Option<usize>>> = f
        .blocks
        .iter()
        .enumerate()
        .map(|(b, block)| (0..block.instrs.len()).map(|i| Some(f.flat_index(b, i))).collect())
        .collect();
    let mut out = f.clone();
    let map = f.block_map();
    let mut allocas = Vec::new();
    let mut stores: Vec<Vec<Instruction>> = vec![Vec::new(); f.blocks.len()];

    for (b, block) in f.blocks.iter().enumerate() {
        for (i, phi) in block.phis().iter().enumerate() {
            let (name, ty) = phi.result.clone().expect("phi has a result");
            let slot = names.fresh(&format!("{name}.addr"));
            allocas.push(
                Instruction::new(Opcode::Alloca, Some(ty), Vec::new()).with_result(slot.clone(), IrType::Addr),
            );
            for (v, pred) in phi.phi_incoming() {
                stores[map[pred]].push(Instruction::new(
                    Opcode::Store,
                    Some(ty),
                    vec![v.clone(), Operand::Value(slot.clone())],
                ));
            }
            out.blocks[b].instrs[i] =
                Instruction::new(Opcode::Load, Some(ty), vec![Operand::Value(slot)]).with_result(name, ty);
            origin[b][i] = None;
        }
    }

    for (b, new) in stores.into_iter().enumerate() {
        if new.is_empty() {
            continue;
        }
        let at = out.blocks[b].instrs.len() - 1;
        let n = new.len();
        out.blocks[b].instrs.splice(at..at, new);
        origin[b].splice(at..at, std::iter::repeat_n(None, n));
    }
    let n = allocas.len();
    out.blocks[0].instrs.splice(0..0, allocas);
    origin[0].splice(0..0, std::iter::repeat_n(None, n));
    (out, origin)
}

/// Promotes entry-block allocas that are only loaded and stored (at their
/// own type) to SSA values.
pub fn mem2reg(f: &IrFunction) -> IrFunction {
    let side: Vec<Vec<()>> = f.blocks.iter().map(|b| vec![(); b.instrs.len()]).collect();
    mem2reg_with(f, &side, ()).0
}

struct NewPhi {
    var: usize,
    block: usize,
    name: String,
    incoming: Vec<(Operand, String)>,
    dead: bool,
}

fn resolve(subst: &HashMap<String, Operand>, o: &Operand) -> Operand {
    let mut cur = o.clone();
    let mut guard = 0;
    while let Operand::Value(n) = &cur {
        match subst.get(n) {
            Some(next) if guard < 1_000_000 => {
                cur = next.clone();
                guard += 1;
            }
            _ => break,
        }
    }
    cur
}

/// [`mem2reg`] carrying a per-instruction side table along: surviving
/// instructions keep their entry, inserted phis get `inserted`.
pub fn mem2reg_with<T: Clone>(f: &IrFunction, side: &[Vec<T>], inserted: T) -> (IrFunction, Vec<Vec<T>>) {
    mem2reg_only(f, side, inserted, &|_| true)
}

/// [`mem2reg_with`] restricted to the allocas named by `only`.
pub(crate) fn mem2reg_only<T: Clone>(
    f: &IrFunction,
    side: &[Vec<T>],
    inserted: T,
    only: &dyn Fn(&str) -> bool,
) -> (IrFunction, Vec<Vec<T>>) {
    let entry = &f.blocks[0];
    let mut var_of: HashMap<&str, usize> = HashMap::new();
    let mut vars: Vec<(String, IrType)> = Vec::new();
    for i in &entry.instrs {
        if i.opcode == Opcode::Alloca {
            if let (Some(n), Some(t)) = (i.result_name(), i.ty) {
                var_of.insert(n, vars.len());
                vars.push((n.to_string(), t));
            }
        }
    }
    // disqualify escaping or mistyped allocas
    let mut ok: Vec<bool> = vars.iter().map(|(n, _)| only(n)).collect();
    for i in f.instructions() {
        for (pos, o) in i.operands.iter().enumerate() {
            let Some(&v) = o.as_value().and_then(|n| var_of.get(n)) else { continue };
            let fine = match i.opcode {
                Opcode::Load => pos == 0 && i.ty == Some(vars[v].1),
                Opcode::Store => pos == 1 && i.ty == Some(vars[v].1),
                _ => false,
            };
            ok[v] &= fine;
        }
    }
    let promoted = |n: &str| var_of.get(n).copied().filter(|&v| ok[v]);
    if !ok.iter().any(|&x| x) {
        return (f.clone(), side.to_vec());
    }

    let cfg = Cfg::new(f);
    let dom = DomTree::new(&cfg);
    // dropped loads keep their names reserved: they are substitution keys
    let mut names = all_names(f);

    // phi placement
    let mut phis: Vec<NewPhi> = Vec::new();
    let mut phi_at: HashMap<(usize, usize), usize> = HashMap::new();
    for (v, (vname, _)) in vars.iter().enumerate() {
        if !ok[v] {
            continue;
        }
        let defs: Vec<usize> = f
            .blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| {
                b.instrs
                    .iter()
                    .any(|i| i.opcode == Opcode::Store && i.operands[1].as_value() == Some(vname))
            })
            .map(|(b, _)| b)
            .collect();
        for b in dom.iterated_frontier(defs) {
            let base = vname.strip_suffix(".addr").unwrap_or(vname);
            phi_at.insert((v, b), phis.len());
            phis.push(NewPhi {
                var: v,
                block: b,
                name: names.fresh(base),
                incoming: Vec::new(),
                dead: false,
            });
        }
    }

    // reaching definitions, blocks in reverse post-order
    let zero = |v: usize| Operand::Const(vars[v].1.zero());
    let mut subst: HashMap<String, Operand> = HashMap::new();
    let mut rd_end: Vec<Vec<Option<Operand>>> = vec![vec![None; vars.len()]; f.blocks.len()];
    for &b in &cfg.rpo {
        let mut cur: Vec<Operand> = (0..vars.len())
            .map(|v| {
                if let Some(&p) = phi_at.get(&(v, b)) {
                    Operand::Value(phis[p].name.clone())
                } else if let Some(d) = dom.idom[b] {
                    rd_end[d][v].clone().unwrap_or_else(|| zero(v))
                } else {
                    zero(v)
                }
            })
            .collect();
        for i in &f.blocks[b].instrs {
            match i.opcode {
                Opcode::Load => {
                    if let Some(v) = i.operands[0].as_value().and_then(promoted) {
                        subst.insert(i.result_name().unwrap().to_string(), cur[v].clone());
                    }
                }
                Opcode::Store => {
                    if let Some(v) = i.operands[1].as_value().and_then(promoted) {
                        cur[v] = i.operands[0].clone();
                    }
                }
                _ => {}
            }
        }
        for (v, c) in cur.into_iter().enumerate() {
            rd_end[b][v] = Some(c);
        }
    }
    // loads in unreachable blocks read zero
    for (b, block) in f.blocks.iter().enumerate() {
        if cfg.reachable[b] {
            continue;
        }
        for i in &block.instrs {
            if i.opcode == Opcode::Load {
                if let Some(v) = i.operands[0].as_value().and_then(promoted) {
                    subst.insert(i.result_name().unwrap().to_string(), zero(v));
                }
            }
        }
    }
    for p in &mut phis {
        p.incoming = cfg.preds[p.block]
            .iter()
            .map(|&q| {
                let v = rd_end[q][p.var].clone().unwrap_or_else(|| zero(p.var));
                (v, f.blocks[q].label.clone())
            })
            .collect();
    }

    // fold phis whose incoming values are all one value (or the phi itself)
    let mut changed = true;
    while changed {
        changed = false;
        for k in 0..phis.len() {
            if phis[k].dead {
                continue;
            }
            let me = Operand::Value(phis[k].name.clone());
            let mut unique: Option<Operand> = None;
            let mut trivial = true;
            for (v, _) in &phis[k].incoming {
                let r = resolve(&subst, v);
                if r == me {
                    continue;
                }
                match &unique {
                    None => unique = Some(r),
                    Some(u) if *u == r => {}
                    Some(_) => {
                        trivial = false;
                        break;
                    }
                }
            }
            if trivial {
                let with = unique.unwrap_or_else(|| zero(phis[k].var));
                subst.insert(phis[k].name.clone(), with);
                phis[k].dead = true;
                changed = true;
            }
        }
    }

    // liveness of the remaining inserted phis
    let phi_by_name: HashMap<&str, usize> = phis
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.dead)
        .map(|(k, p)| (p.name.as_str(), k))
        .collect();
    let keep_instr = |i: &Instruction| -> bool {
        match i.opcode {
            Opcode::Alloca => i.result_name().and_then(promoted).is_none(),
            Opcode::Load => i.operands[0].as_value().and_then(promoted).is_none(),
            Opcode::Store => i.operands[1].as_value().and_then(promoted).is_none(),
            _ => true,
        }
    };
    let mut live = vec![false; phis.len()];
    let mut work = Vec::new();
    for i in f.instructions().filter(|i| keep_instr(i)) {
        for o in &i.operands {
            if let Operand::Value(n) = resolve(&subst, o) {
                if let Some(&k) = phi_by_name.get(n.as_str()) {
                    if !live[k] {
                        live[k] = true;
                        work.push(k);
                    }
                }
            }
        }
    }
    while let Some(k) = work.pop() {
        for (v, _) in &phis[k].incoming {
            if let Operand::Value(n) = resolve(&subst, v) {
                if let Some(&j) = phi_by_name.get(n.as_str()) {
                    if !live[j] {
                        live[j] = true;
                        work.push(j);
                    }
                }
            }
        }
    }

    // rebuild
    let mut out = f.clone();
    let mut out_side = Vec::with_capacity(f.blocks.len());
    for (b, block) in f.blocks.iter().enumerate() {
        let mut instrs = Vec::with_capacity(block.instrs.len());
        let mut tags = Vec::with_capacity(block.instrs.len());
        let np = block.first_non_phi();
        let rewrite = |i: &Instruction| {
            let mut i = i.clone();
            for o in i.value_operands_mut() {
                *o = resolve(&subst, o);
            }
            i
        };
        for (k, i) in block.instrs[..np].iter().enumerate() {
            instrs.push(rewrite(i));
            tags.push(side[b][k].clone());
        }
        for (k, p) in phis.iter().enumerate() {
            if p.block != b || p.dead || !live[k] {
                continue;
            }
            let ty = vars[p.var].1;
            let mut ops = Vec::with_capacity(p.incoming.len() * 2);
            for (v, l) in &p.incoming {
                ops.push(resolve(&subst, v));
                ops.push(Operand::Label(l.clone()));
            }
            instrs.push(Instruction::new(Opcode::Phi, Some(ty), ops).with_result(p.name.clone(), ty));
            tags.push(inserted.clone());
        }
        for (k, i) in block.instrs.iter().enumerate().skip(np) {
            if keep_instr(i) {
                instrs.push(rewrite(i));
                tags.push(side[b][k].clone());
            }
        }
        out.blocks[b].instrs = instrs;
        out_side.push(tags);
    }
    (out, out_side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{equivalence_check, CheckConfig, Subject};
    use crate::ir::{parse_module, validate_function, IrModule};

    const LOOP: &str = "func @f(%n: i32) -> i32 {
      entry: br head
      head:
        %i = phi i32 [0, entry], [%i2, head]
        %i2 = add i32 %i, 1
        %c = icmp slt i32 %i2, %n
        condbr %c, head, exit
      exit: ret i32 %i2
    }";

    const DIAMOND: &str = "func @g(%a: i32, %b: i32) -> i32 {
      entry:
        %c = icmp slt i32 %a, %b
        condbr %c, l, r
      l:
        %x = mul i32 %a, 3
        br j
      r:
        %y = sub i32 %b, %a
        br j
      j:
        %p = phi i32 [%x, l], [%y, r]
        ret i32 %p
    }";

    fn one(src: &str) -> IrFunction {
        parse_module(src).unwrap().functions.remove(0)
    }

    fn equivalent(a: &IrFunction, b: &IrFunction) -> bool {
        assert!(validate_function(b, None).is_empty(), "{:?}", validate_function(b, None));
        let mut m = IrModule::default();
        m.functions.push(a.clone());
        let mut b = b.clone();
        b.name = format!("{}.x", a.name);
        let name = b.name.clone();
        m.functions.push(b);
        equivalence_check(Subject::new(&m, &a.name), Subject::new(&m, &name), &CheckConfig::default()).passed()
    }

    #[test]
    fn single_block() {
        let f = one("func @id(%a: i32) -> i32 { entry: ret i32 %a }");
        let s = linearize(&f, true);
        assert_eq!(s.items, [LinearItem::BlockMarker(0), LinearItem::Instr(0, 0)]);
    }

    #[test]
    fn phis_are_optional() {
        let f = one(LOOP);
        let without = linearize(&f, false);
        let with = linearize(&f, true);
        assert_eq!(with.len(), f.blocks.len() + f.instruction_count());
        assert_eq!(with.len(), without.len() + 1);
        assert!((0..without.len()).all(|k| !matches!(without.get(k), ItemRef::Instr(i) if i.is_phi())));
        assert_eq!(without.items.iter().filter(|i| matches!(i, LinearItem::BlockMarker(_))).count(), 3);
    }

    #[test]
    fn reg2mem_counts() {
        let f = one(DIAMOND);
        let g = reg2mem(&f);
        assert_eq!(g.count_opcode(Opcode::Phi), 0);
        assert_eq!(g.count_opcode(Opcode::Alloca), 1);
        assert_eq!(g.count_opcode(Opcode::Store), 2);
        assert_eq!(g.count_opcode(Opcode::Load), 1);
        assert_eq!(g.instruction_count(), f.instruction_count() + 3);
        assert!(equivalent(&f, &g));
    }

    #[test]
    fn reg2mem_leaves_phi_free_functions_alone() {
        let f = one("func @id(%a: i32) -> i32 { entry: ret i32 %a }");
        assert_eq!(reg2mem(&f), f);
    }

    #[test]
    fn round_trip_restores_the_phi() {
        for src in [LOOP, DIAMOND] {
            let f = one(src);
            let g = reg2mem(&f);
            let h = mem2reg(&g);
            assert_eq!(h.count_opcode(Opcode::Phi), f.count_opcode(Opcode::Phi));
            assert_eq!(h.count_opcode(Opcode::Alloca), 0);
            assert!(equivalent(&f, &h));
        }
    }

    #[test]
    fn escaping_alloca_is_kept() {
        let src = "func @sink(%p: addr) -> i32 { entry: ret i32 0 }
          func @f(%a: i32) -> i32 { entry:
            %s = alloca i32
            store i32 %a, %s
            %r = call i32 @sink(%s)
            %v = load i32 %s
            ret i32 %v }";
        let m = parse_module(src).unwrap();
        let f = m.function("f").unwrap();
        assert_eq!(mem2reg(f), *f);
    }

    #[test]
    fn stores_on_both_arms_make_one_phi() {
        let f = one(
            "func @f(%a: i32) -> i32 {
              entry:
                %s = alloca i32
                %c = icmp sgt i32 %a, 0
                condbr %c, l, r
              l:
                store i32 %a, %s
                br j
              r:
                %n = sub i32 0, %a
                store i32 %n, %s
                br j
              j:
                %v = load i32 %s
                ret i32 %v }",
        );
        let g = mem2reg(&f);
        assert_eq!(g.count_opcode(Opcode::Phi), 1);
        assert_eq!(g.blocks[3].instrs[0].opcode, Opcode::Phi);
        assert_eq!(g.count_opcode(Opcode::Load) + g.count_opcode(Opcode::Store), 0);
        assert!(equivalent(&f, &g));
    }

    #[test]
    fn side_table_follows_instructions() {
        let f = one(LOOP);
        let (g, origin) = reg2mem_tracked(&f);
        // alloca, two stores and the load standing in for the phi
        let inserted: usize = origin.iter().flatten().filter(|o| o.is_none()).count();
        assert_eq!(inserted, 4);
        let (h, tags) = mem2reg_with(&g, &origin, None);
        for (block, t) in h.blocks.iter().zip(&tags) {
            assert_eq!(block.instrs.len(), t.len());
        }
        // the re-formed phi is new; everything else maps back to the original
        let originals: Vec<usize> = tags.iter().flatten().flatten().copied().collect();
        assert_eq!(originals.len(), f.instruction_count() - 1);
    }
}
