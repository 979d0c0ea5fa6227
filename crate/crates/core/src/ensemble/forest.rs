//! Regression forests: CART trees grown on bootstrap samples.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::costmodel::SavingsVector;
use crate::ir::Opcode;
use crate::par::{self, Parallelism};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestParams {
    pub max_depth: usize,
    pub n_estimators: usize,
    /// Fraction of the features tried at each split (rounded up).
    pub max_features: f64,
}

impl ForestParams {
    pub fn features_per_split(&self, n_features: usize) -> usize {
        ((self.max_features * n_features as f64).ceil() as usize).clamp(1, n_features.max(1))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes to the next node, otherwise to `right`.
    Split { feature: usize, threshold: f64, right: usize },
    Leaf(f64),
}

/// A regression tree, nodes in pre-order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Tree {
        Tree { nodes: vec![Node::Leaf(value)] }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, right } => {
                    k = if x[feature] <= threshold { k + 1 } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> (usize, usize) {
            match t.nodes[k] {
                Node::Leaf(_) => (0, k + 1),
                Node::Split { right, .. } => {
                    let (l, _) = go(t, k + 1);
                    let (r, end) = go(t, right);
                    (1 + l.max(r), end)
                }
            }
        }
        go(self, 0).0
    }

    pub fn leaves(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(v) => Some(*v),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub features: Vec<Opcode>,
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("expected {expected} features, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
}

impl ForestModel {
    /// Mean of the trees' predictions.
    pub fn predict(&self, x: &[f64]) -> Result<f64, ForestError> {
        if x.len() != self.features.len() {
            return Err(ForestError::Arity {
                expected: self.features.len(),
                got: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn features_of(&self, v: &SavingsVector) -> Vec<f64> {
        self.features.iter().map(|&op| v.get(op) as f64).collect()
    }

    pub fn predict_savings(&self, v: &SavingsVector) -> f64 {
        self.predict(&self.features_of(v)).expect("arity fixed by feature list")
    }

    pub fn save(&self) -> String {
        let names: Vec<&str> = self.features.iter().map(|o| o.name()).collect();
        let mut s = format!("forest v1 seed={} features={}\n", self.seed, names.join(","));
        let p = &self.params;
        writeln!(s, "params max_depth={} n_estimators={} max_features={}", p.max_depth, p.n_estimators, p.max_features).unwrap();
        for t in &self.trees {
            s.push_str("tree\n");
            for n in &t.nodes {
                match n {
                    Node::Split { feature, threshold, .. } => writeln!(s, "node {feature} {threshold}").unwrap(),
                    Node::Leaf(v) => writeln!(s, "leaf {v}").unwrap(),
                }
            }
        }
        s
    }

    pub fn load(text: &str) -> Result<ForestModel, ForestError> {
        let err = |line: usize, message: String| ForestError::Format { line: line + 1, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

        let (n, header) = lines.next().ok_or_else(|| err(0, "empty file".into()))?;
        let mut words = header.split_whitespace();
        if words.next() != Some("forest") || words.next() != Some("v1") {
            return Err(err(n, "expected `forest v1`".into()));
        }
        let mut seed = None;
        let mut features = None;
        for w in words {
            match w.split_once('=') {
                Some(("seed", v)) => seed = Some(v.parse::<u64>().map_err(|e| err(n, e.to_string()))?),
                Some(("features", v)) => {
                    features = Some(
                        v.split(',')
                            .filter(|s| !s.is_empty())
                            .map(|s| Opcode::from_name(s).ok_or_else(|| err(n, format!("unknown opcode {s}"))))
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                _ => return Err(err(n, format!("unexpected `{w}`"))),
            }
        }
        let seed = seed.ok_or_else(|| err(n, "missing seed".into()))?;
        let features = features.ok_or_else(|| err(n, "missing features".into()))?;

        let (n, line) = lines.next().ok_or_else(|| err(n + 1, "missing params".into()))?;
        let mut words = line.split_whitespace();
        if words.next() != Some("params") {
            return Err(err(n, "expected params".into()));
        }
        let (mut depth, mut trees_n, mut frac) = (None, None, None);
        for w in words {
            match w.split_once('=') {
                Some(("max_depth", v)) => depth = v.parse().ok(),
                Some(("n_estimators", v)) => trees_n = v.parse().ok(),
                Some(("max_features", v)) => frac = v.parse().ok(),
                _ => return Err(err(n, format!("unexpected `{w}`"))),
            }
        }
        let params = ForestParams {
            max_depth: depth.ok_or_else(|| err(n, "bad max_depth".into()))?,
            n_estimators: trees_n.ok_or_else(|| err(n, "bad n_estimators".into()))?,
            max_features: frac.ok_or_else(|| err(n, "bad max_features".into()))?,
        };

        let mut flat: Vec<Vec<(usize, Node)>> = Vec::new();
        for (n, line) in lines {
            let mut words = line.split_whitespace();
            let kind = words.next().unwrap_or("");
            let num = |w: Option<&str>| -> Result<f64, ForestError> {
                w.ok_or_else(|| err(n, "missing number".into()))?
                    .parse::<f64>()
                    .map_err(|e| err(n, e.to_string()))
            };
            let node = match kind {
                "tree" => {
                    flat.push(Vec::new());
                    continue;
                }
                "node" => {
                    let feature: usize = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .filter(|&f| f < features.len())
                        .ok_or_else(|| err(n, "bad feature index".into()))?;
                    Node::Split { feature, threshold: num(words.next())?, right: 0 }
                }
                "leaf" => Node::Leaf(num(words.next())?),
                _ => return Err(err(n, format!("unexpected `{kind}`"))),
            };
            flat.last_mut().ok_or_else(|| err(n, "node outside a tree".into()))?.push((n, node));
        }
        let trees = flat
            .into_iter()
            .map(|nodes| link(nodes).map_err(|(line, m)| err(line, m)))
            .collect::<Result<Vec<_>, _>>()?;
        if trees.len() != params.n_estimators {
            return Err(err(n, format!("{} trees, params say {}", trees.len(), params.n_estimators)));
        }
        Ok(ForestModel { features, params, seed, trees })
    }
}

/// Fills in right-child indices of a pre-order node list.
fn link(nodes: Vec<(usize, Node)>) -> Result<Tree, (usize, String)> {
    fn go(nodes: &mut [(usize, Node)], k: usize) -> Result<usize, (usize, String)> {
        let Some((line, node)) = nodes.get(k).cloned() else {
            let line = nodes.last().map_or(0, |l| l.0);
            return Err((line, "truncated tree".into()));
        };
        match node {
            Node::Leaf(_) => Ok(k + 1),
            Node::Split { .. } => {
                let right = go(nodes, k + 1)?;
                if let Node::Split { right: r, .. } = &mut nodes[k].1 {
                    *r = right;
                }
                go(nodes, right).map_err(|(_, m)| (line, m))
            }
        }
    }
    let mut nodes = nodes;
    if nodes.is_empty() {
        return Err((0, "empty tree".into()));
    }
    let end = go(&mut nodes, 0)?;
    if end != nodes.len() {
        return Err((nodes[end].0, "trailing nodes".into()));
    }
    Ok(Tree {
        nodes: nodes.into_iter().map(|(_, n)| n).collect(),
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn tree_seed(seed: u64, index: usize) -> u64 {
    splitmix(splitmix(seed) ^ index as u64)
}

/// Row-major feature matrix with targets.
#[derive(Clone, Copy)]
pub(crate) struct Data<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
}

/// A grown tree in which every node keeps its mean target, so it can be
/// cut at any depth. Split choices depend only on the node's samples and
/// its position, which makes the cut tree identical to one grown with the
/// smaller depth limit.
#[derive(Clone, Debug)]
pub(crate) struct Grown {
    nodes: Vec<GrownNode>,
}

#[derive(Clone, Debug)]
struct GrownNode {
    value: f64,
    split: Option<(usize, f64, usize)>,
}

impl Grown {
    pub fn cut(&self, depth: usize) -> Tree {
        fn go(g: &Grown, k: usize, depth: usize, out: &mut Vec<Node>) -> usize {
            let n = &g.nodes[k];
            match n.split {
                Some((feature, threshold, right)) if depth > 0 => {
                    let at = out.len();
                    out.push(Node::Split { feature, threshold, right: 0 });
                    let end = go(g, k + 1, depth - 1, out);
                    let r = out.len();
                    if let Node::Split { right: slot, .. } = &mut out[at] {
                        *slot = r;
                    }
                    go(g, right, depth - 1, out);
                    end
                }
                _ => {
                    out.push(Node::Leaf(n.value));
                    k + 1
                }
            }
        }
        let mut out = Vec::new();
        go(self, 0, depth, &mut out);
        Tree { nodes: out }
    }

    /// Predictions of the tree cut at each depth `0..=max`.
    pub fn predict_by_depth(&self, x: &[f64], out: &mut [f64]) {
        let mut k = 0;
        for slot in out.iter_mut() {
            let n = &self.nodes[k];
            *slot = n.value;
            if let Some((feature, threshold, right)) = n.split {
                k = if x[feature] <= threshold { k + 1 } else { right };
            }
        }
    }
}

fn mean(idx: &[usize], y: &[f64]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

/// Best threshold on one feature by total squared error, if the feature
/// is not constant on `idx`.
fn best_threshold(idx: &[usize], d: Data<'_>, f: usize, scratch: &mut Vec<(f64, f64)>) -> Option<(f64, f64)> {
    scratch.clear();
    scratch.extend(idx.iter().map(|&i| (d.x[i][f], d.y[i])));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    if scratch[0].0 == scratch[scratch.len() - 1].0 {
        return None;
    }
    let n = scratch.len() as f64;
    let total: f64 = scratch.iter().map(|p| p.1).sum();
    let mut left = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..scratch.len() - 1 {
        left += scratch[k].1;
        if scratch[k].0 == scratch[k + 1].0 {
            continue;
        }
        let nl = (k + 1) as f64;
        let right = total - left;
        // maximising this minimises the children's squared error
        let gain = left * left / nl + right * right / (n - nl);
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, (scratch[k].0 + scratch[k + 1].0) / 2.0));
        }
    }
    best
}

pub(crate) fn grow(d: Data<'_>, params: &ForestParams, seed: u64) -> Grown {
    let n_features = d.x.first().map_or(0, |r| r.len());
    let mtry = params.features_per_split(n_features);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample: Vec<usize> = (0..d.y.len()).map(|_| rng.gen_range(0..d.y.len())).collect();
    let mut g = Grown { nodes: Vec::new() };
    let mut scratch = Vec::new();
    grow_node(d, &sample, 0, 1, params.max_depth, mtry, seed, &mut g, &mut scratch);
    g
}

#[allow(clippy::too_many_arguments)]
fn grow_node(
    d: Data<'_>,
    idx: &[usize],
    depth: usize,
    id: u64,
    max_depth: usize,
    mtry: usize,
    seed: u64,
    g: &mut Grown,
    scratch: &mut Vec<(f64, f64)>,
) {
    let at = g.nodes.len();
    let value = mean(idx, d.y);
    g.nodes.push(GrownNode { value, split: None });
    let first = d.y[idx[0]];
    if depth >= max_depth || idx.len() < 2 || idx.iter().all(|&i| d.y[i] == first) {
        return;
    }
    let n_features = d.x[0].len();
    let mut order: Vec<usize> = (0..n_features).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(id))));
    let mut best: Option<(f64, usize, f64)> = None;
    let mut tried = 0;
    for &f in &order {
        if tried >= mtry {
            break;
        }
        if let Some((gain, thr)) = best_threshold(idx, d, f, scratch) {
            tried += 1;
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, f, thr));
            }
        }
    }
    let Some((_, feature, threshold)) = best else { return };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| d.x[i][feature] <= threshold);
    grow_node(d, &l, depth + 1, id.wrapping_mul(2), max_depth, mtry, seed, g, scratch);
    let right = g.nodes.len();
    grow_node(d, &r, depth + 1, id.wrapping_mul(2) | 1, max_depth, mtry, seed, g, scratch);
    g.nodes[at].split = Some((feature, threshold, right));
}

/// Grows `n` trees with seeds derived from `(seed, tree index)`.
pub(crate) fn grow_many(d: Data<'_>, params: &ForestParams, seed: u64, n: usize, par: Parallelism) -> Vec<Grown> {
    par::map_range(par, n, |t| grow(d, params, tree_seed(seed, t)))
}

/// Fits a forest with fixed hyperparameters.
pub fn fit_forest(
    features: &[Opcode],
    x: &[Vec<f64>],
    y: &[f64],
    params: ForestParams,
    seed: u64,
    par: Parallelism,
) -> ForestModel {
    let d = Data { x, y };
    let trees = grow_many(d, &params, seed, params.n_estimators, par)
        .iter()
        .map(|g| g.cut(params.max_depth))
        .collect();
    ForestModel {
        features: features.to_vec(),
        params,
        seed,
        trees,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize, n: usize) -> ForestParams {
        ForestParams {
            max_depth: depth,
            n_estimators: n,
            max_features: 0.5,
        }
    }

    fn model(trees: Vec<Tree>) -> ForestModel {
        ForestModel {
            features: vec![Opcode::Add, Opcode::Mul],
            params: params(3, trees.len()),
            seed: 1,
            trees,
        }
    }

    #[test]
    fn single_leaf_and_mean_of_trees() {
        assert_eq!(model(vec![Tree::leaf(7.0)]).predict(&[1.0, 2.0]).unwrap(), 7.0);
        assert_eq!(model(vec![Tree::leaf(4.0), Tree::leaf(6.0)]).predict(&[0.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn arity_mismatch() {
        let m = model(vec![Tree::leaf(1.0)]);
        assert_eq!(m.predict(&[1.0]), Err(ForestError::Arity { expected: 2, got: 1 }));
    }

    #[test]
    fn split_routes_by_threshold() {
        let t = Tree {
            nodes: vec![
                Node::Split { feature: 1, threshold: 2.5, right: 2 },
                Node::Leaf(-1.0),
                Node::Leaf(1.0),
            ],
        };
        assert_eq!(t.predict(&[0.0, 2.0]), -1.0);
        assert_eq!(t.predict(&[0.0, 3.0]), 1.0);
        assert_eq!(t.depth(), 1);
    }

    fn toy() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 5) as f64 - 2.0]).collect();
        let y = x.iter().map(|r| 3.0 * r[0] - r[1] * r[1]).collect();
        (x, y)
    }

    #[test]
    fn constant_target_gives_constant_leaves() {
        let (x, _) = toy();
        let y = vec![4.25; x.len()];
        let m = fit_forest(&[Opcode::Add, Opcode::Mul], &x, &y, params(10, 5), 3, Parallelism::Sequential);
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1 && t.leaves().all(|v| v == 4.25)));
    }

    #[test]
    fn depth_limit_respected_and_cut_matches_regrowth() {
        let (x, y) = toy();
        let d = Data { x: &x, y: &y };
        let deep = grow(d, &params(30, 1), 11);
        for depth in [0, 1, 2, 4] {
            let shallow = grow(d, &params(depth, 1), 11).cut(depth);
            assert_eq!(deep.cut(depth), shallow);
            assert!(shallow.depth() <= depth);
            let mut by_depth = vec![0.0; depth + 1];
            for r in &x {
                deep.predict_by_depth(r, &mut by_depth);
                assert_eq!(by_depth[depth], shallow.predict(r));
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let (x, y) = toy();
        let m = fit_forest(&[Opcode::Add, Opcode::Mul], &x, &y, params(4, 6), 9, Parallelism::Sequential);
        let text = m.save();
        let back = ForestModel::load(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.save(), text);
    }

    #[test]
    fn parallel_growth_is_deterministic() {
        let (x, y) = toy();
        let a = fit_forest(&[Opcode::Add, Opcode::Mul], &x, &y, params(6, 8), 5, Parallelism::Sequential);
        let b = fit_forest(&[Opcode::Add, Opcode::Mul], &x, &y, params(6, 8), 5, Parallelism::Parallel);
        assert_eq!(a.save(), b.save());
    }

    #[test]
    fn load_rejects_garbage() {
        assert!(ForestModel::load("").is_err());
        assert!(ForestModel::load("forest v2 seed=1 features=add").is_err());
        let bad = "forest v1 seed=1 features=add\nparams max_depth=1 n_estimators=1 max_features=0.5\ntree\nnode 0 1\nleaf 2\n";
        assert!(ForestModel::load(bad).is_err());
        let bad_feature = "forest v1 seed=1 features=add\nparams max_depth=1 n_estimators=1 max_features=0.5\ntree\nnode 3 1\nleaf 2\nleaf 3\n";
        assert!(ForestModel::load(bad_feature).is_err());
    }
}
