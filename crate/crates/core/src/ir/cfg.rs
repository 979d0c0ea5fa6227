use std::collections::BTreeSet;

use super::IrFunction;

/// Successor/predecessor structure of a function, by block index.
///
/// Edge lists are deduplicated: a `condbr` with both arms on the same block
/// contributes one edge.
#[derive(Clone, Debug)]
pub struct Cfg {
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    /// Reverse post-order of the blocks reachable from the entry.
    pub rpo: Vec<usize>,
    pub reachable: Vec<bool>,
}

impl Cfg {
    /// Builds the CFG. Unknown labels are ignored (the validator reports them).
    pub fn new(f: &IrFunction) -> Cfg {
        let n = f.blocks.len();
        let map = f.block_map();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for (b, block) in f.blocks.iter().enumerate() {
            if let Some(term) = block.terminator() {
                for l in term.successors() {
                    if let Some(&s) = map.get(l) {
                        if !succs[b].contains(&s) {
                            succs[b].push(s);
                            preds[s].push(b);
                        }
                    }
                }
            }
        }

        let mut reachable = vec![false; n];
        let mut post = Vec::with_capacity(n);
        if n > 0 {
            // iterative DFS producing post-order
            let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
            reachable[0] = true;
            while let Some(top) = stack.last_mut() {
                let b = top.0;
                if top.1 < succs[b].len() {
                    let s = succs[b][top.1];
                    top.1 += 1;
                    if !reachable[s] {
                        reachable[s] = true;
                        stack.push((s, 0));
                    }
                } else {
                    post.push(b);
                    stack.pop();
                }
            }
        }
        post.reverse();
        Cfg {
            succs,
            preds,
            rpo: post,
            reachable,
        }
    }

    pub fn len(&self) -> usize {
        self.succs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succs.is_empty()
    }
}

/// Dominator tree over the reachable part of a CFG.
#[derive(Clone, Debug)]
pub struct DomTree {
    /// Immediate dominator; `None` for the entry and unreachable blocks.
    pub idom: Vec<Option<usize>>,
    rpo_index: Vec<usize>,
    pub frontiers: Vec<BTreeSet<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl DomTree {
    /// Cooper, Harvey & Kennedy's iterative algorithm.
    pub fn new(cfg: &Cfg) -> DomTree {
        let n = cfg.len();
        let mut rpo_index = vec![usize::MAX; n];
        for (i, &b) in cfg.rpo.iter().enumerate() {
            rpo_index[b] = i;
        }
        let mut idom: Vec<Option<usize>> = vec![None; n];
        if n == 0 {
            return DomTree {
                idom,
                rpo_index,
                frontiers: Vec::new(),
                children: Vec::new(),
            };
        }
        idom[0] = Some(0);
        let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| {
            while a != b {
                while rpo_index[a] > rpo_index[b] {
                    a = idom[a].expect("processed");
                }
                while rpo_index[b] > rpo_index[a] {
                    b = idom[b].expect("processed");
                }
            }
            a
        };
        let mut changed = true;
        while changed {
            changed = false;
            for &b in cfg.rpo.iter().skip(1) {
                let mut new_idom: Option<usize> = None;
                for &p in &cfg.preds[b] {
                    if idom[p].is_none() {
                        continue;
                    }
                    new_idom = Some(match new_idom {
                        None => p,
                        Some(cur) => intersect(&idom, p, cur),
                    });
                }
                if new_idom.is_some() && idom[b] != new_idom {
                    idom[b] = new_idom;
                    changed = true;
                }
            }
        }
        idom[0] = None;

        let mut children = vec![Vec::new(); n];
        for &b in &cfg.rpo {
            if let Some(d) = idom[b] {
                children[d].push(b);
            }
        }

        let mut frontiers = vec![BTreeSet::new(); n];
        for &b in &cfg.rpo {
            let reachable_preds: Vec<usize> = cfg.preds[b]
                .iter()
                .copied()
                .filter(|&p| cfg.reachable[p])
                .collect();
            if reachable_preds.len() < 2 {
                continue;
            }
            for p in reachable_preds {
                let mut runner = p;
                while Some(runner) != idom[b] {
                    frontiers[runner].insert(b);
                    match idom[runner] {
                        Some(d) => runner = d,
                        None => break,
                    }
                }
            }
        }

        DomTree {
            idom,
            rpo_index,
            frontiers,
            children,
        }
    }

    pub fn is_reachable(&self, b: usize) -> bool {
        self.rpo_index[b] != usize::MAX
    }

    /// Whether `a` dominates `b` (reflexive). False when either is unreachable.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        if !self.is_reachable(a) || !self.is_reachable(b) {
            return false;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom[cur] {
                Some(d) => cur = d,
                None => return false,
            }
        }
    }

    /// Iterated dominance frontier of a set of blocks.
    pub fn iterated_frontier(&self, defs: impl IntoIterator<Item = usize>) -> BTreeSet<usize> {
        let mut result = BTreeSet::new();
        let mut work: Vec<usize> = defs.into_iter().collect();
        let mut seen: BTreeSet<usize> = work.iter().copied().collect();
        while let Some(b) = work.pop() {
            for &y in &self.frontiers[b] {
                if result.insert(y) && seen.insert(y) {
                    work.push(y);
                }
            }
        }
        result
    }
}
