use std::fmt::Display;
use std::io::Write;
use std::path::Path;

use cgfm::align::{AlignmentModel, ModelKind};
use cgfm::codegen::{merge, MergeMode, MergeResult, Signatures};
use cgfm::costmodel::{ResourceEstimate, ResourceWeights};
use cgfm::ensemble::{generate_candidates, select_ensemble_index, select_exhaustive, ForestModel, MODELS};
use cgfm::ir::{parse_module, IrFunction, IrModule};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn verification(seeds: Vec<u64>) -> Self {
        let s: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
        Failure { code: 1, message: format!("verification failed; mismatching seeds: {}", s.join(" ")) }
    }

    pub fn usage(m: impl Display) -> Self {
        Failure { code: 2, message: m.to_string() }
    }

    pub fn input(m: impl Display) -> Self {
        Failure { code: 3, message: m.to_string() }
    }
}

/// Writes to stdout; a closed pipe is not an error.
pub fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("cgfm: stdout: {e}");
        }
    }
}

pub fn read_file(p: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

pub fn write_file(p: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

pub fn load_module(p: &Path) -> Result<IrModule, Failure> {
    parse_module(&read_file(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

pub fn load_weights(p: &Path) -> Result<ResourceWeights, Failure> {
    ResourceWeights::parse(&read_file(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

pub fn load_forest(p: &Path) -> Result<ForestModel, Failure> {
    ForestModel::load(&read_file(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

/// Union of two modules. Shared names must have identical definitions.
pub fn combine(a: &IrModule, b: &IrModule) -> Result<IrModule, String> {
    let mut m = a.clone();
    for d in &b.memories {
        match m.memory(&d.name) {
            Some(x) if x == d => {}
            Some(_) => return Err(format!("memory @{} is declared differently", d.name)),
            None => m.memories.push(d.clone()),
        }
    }
    for f in &b.functions {
        match m.function(&f.name) {
            Some(x) if x == f => {}
            Some(_) => return Err(format!("function @{} is defined differently", f.name)),
            None => m.functions.push(f.clone()),
        }
    }
    Ok(m)
}

fn nth_name(m: &IrModule, k: usize, path: &Path) -> Result<String, Failure> {
    m.functions
        .get(k)
        .map(|f| f.name.clone())
        .ok_or_else(|| Failure::usage(format!("{}: has no function #{}; pass --f1/--f2", path.display(), k + 1)))
}

/// Loads both files and resolves the two function names.
pub fn pick_pair(a: &Path, b: &Path, f1: Option<&str>, f2: Option<&str>) -> Result<(IrModule, String, String), Failure> {
    let ma = load_module(a)?;
    let same = a == b;
    let mb = if same { ma.clone() } else { load_module(b)? };
    let n1 = match f1 {
        Some(n) => n.to_string(),
        None => nth_name(&ma, 0, a)?,
    };
    let n2 = match f2 {
        Some(n) => n.to_string(),
        None => nth_name(&mb, usize::from(same), b)?,
    };
    for (m, n, p) in [(&ma, &n1, a), (&mb, &n2, b)] {
        if m.function(n).is_none() {
            return Err(Failure::input(format!("{}: no function @{n}", p.display())));
        }
    }
    if n1 == n2 {
        return Err(Failure::usage(format!("cannot merge @{n1} with itself")));
    }
    let module = combine(&ma, &mb).map_err(|e| Failure::input(format!("{} and {}: {e}", a.display(), b.display())))?;
    Ok((module, n1, n2))
}

pub enum Selector {
    Model(ModelKind),
    Ensemble(Box<ForestModel>),
    Exhaustive,
}

impl Selector {
    pub fn name(&self) -> String {
        match self {
            Selector::Model(m) => format!("model:{m}"),
            Selector::Ensemble(_) => "ensemble".into(),
            Selector::Exhaustive => "exhaustive".into(),
        }
    }
}

pub struct Picked {
    pub result: MergeResult,
    /// Model that produced the result, or "concat".
    pub label: String,
    /// Estimates of all three candidates, for exhaustive selection.
    pub estimates: Option<[ResourceEstimate; 3]>,
}

pub fn run_selection(
    f1: &IrFunction,
    f2: &IrFunction,
    mode: MergeMode,
    sel: &Selector,
    w: &ResourceWeights,
    sigs: &Signatures,
) -> Result<Picked, String> {
    if let Selector::Model(kind) = sel {
        let result = merge(f1, f2, mode, &AlignmentModel::new(*kind), sigs).map_err(|e| e.to_string())?;
        let label = if mode == MergeMode::Concat { "concat".into() } else { kind.to_string() };
        return Ok(Picked { result, label, estimates: None });
    }
    let cs = generate_candidates(f1, f2, mode, sigs).map_err(|e| e.to_string())?;
    let (index, estimates) = match sel {
        Selector::Ensemble(forest) => (select_ensemble_index(&cs, forest.as_ref()), None),
        _ => {
            let ex = select_exhaustive(&cs, w);
            (ex.index, Some(ex.estimates))
        }
    };
    let result = cs.candidates.into_iter().nth(index).unwrap().result;
    Ok(Picked { result, label: MODELS[index].to_string(), estimates })
}
