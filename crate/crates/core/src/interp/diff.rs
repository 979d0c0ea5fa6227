use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ExecError, ExecResult, Interpreter, Memory, RegionKind, RuntimeValue, DEFAULT_STEP_LIMIT};
use crate::codegen::{ParamMap, Side};
use crate::ir::{IrFunction, IrModule, IrType, Opcode, Operand};
use crate::par::{self, Parallelism};

/// Length of the fresh region behind every `addr` argument.
pub const ARG_REGION_LEN: usize = 64;

/// A function inside its module.
#[derive(Clone, Copy, Debug)]
pub struct Subject<'a> {
    pub module: &'a IrModule,
    pub name: &'a str,
}

impl<'a> Subject<'a> {
    pub fn new(module: &'a IrModule, name: &'a str) -> Self {
        Subject { module, name }
    }

    pub fn function(&self) -> Option<&'a IrFunction> {
        self.module.function(self.name)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub step_limit: u64,
    pub parallelism: Parallelism,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            trials: 100,
            seed: 0,
            step_limit: DEFAULT_STEP_LIMIT,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub seed: u64,
    pub side: Side,
    pub detail: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "seed {} ({:?}): {}", self.seed, self.side, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DiffReport {
    pub trials: usize,
    /// Sorted by (seed, side).
    pub mismatches: Vec<Mismatch>,
    /// Per side, dynamic instruction counts `(reference, merged)` summed over
    /// the trials where both runs returned normally.
    pub steps: [(u64, u64); 2],
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn mismatching_seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.mismatches.iter().map(|m| m.seed).collect();
        s.dedup();
        s
    }

    /// Latency-proxy overhead in percent from the summed dynamic counts, or
    /// `None` when a side has no completed trial.
    pub fn latency_overhead(&self) -> Option<f64> {
        let [(m1, m1m), (m2, m2m)] = self.steps;
        crate::costmodel::latency_overhead(m1m as f64, m1 as f64, m2m as f64, m2 as f64).ok()
    }
}

/// Random arguments plus the memory they point into.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub args: Vec<RuntimeValue>,
    pub memory: Memory,
}

fn name_hash(s: &str) -> u64 {
    // FNV-1a; stable across runs and platforms.
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn random_scalar(rng: &mut ChaCha8Rng, ty: IrType) -> RuntimeValue {
    match ty {
        IrType::Addr => RuntimeValue::zero(IrType::Addr),
        IrType::F32 => RuntimeValue::Float(rng.gen_range(-1e3f64..1e3) as f32 as f64),
        IrType::F64 => RuntimeValue::Float(rng.gen_range(-1e3..1e3)),
        t => RuntimeValue::Int(super::wrap(rng.gen_range(-(1i64 << 15)..(1i64 << 15)), t)),
    }
}

fn small_cell(rng: &mut ChaCha8Rng, ty: IrType) -> RuntimeValue {
    match ty {
        IrType::Addr => RuntimeValue::zero(IrType::Addr),
        IrType::F32 => RuntimeValue::Float(rng.gen_range(-10.0f64..10.0) as f32 as f64),
        IrType::F64 => RuntimeValue::Float(rng.gen_range(-10.0..10.0)),
        t => RuntimeValue::Int(super::wrap(rng.gen_range(-64..64), t)),
    }
}

fn fill(seed: u64, name: &str, ty: IrType, len: usize) -> Vec<RuntimeValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_hash(name));
    (0..len).map(|_| small_cell(&mut rng, ty)).collect()
}

/// Element type an `addr` parameter is accessed at, judged from the first
/// load, store or gep through it. Defaults to i32.
fn pointee_type(f: &IrFunction, param: &str) -> IrType {
    for i in f.instructions() {
        let addr_pos = match i.opcode {
            Opcode::Load | Opcode::Gep => 0,
            Opcode::Store => 1,
            _ => continue,
        };
        if i.operands.get(addr_pos).and_then(Operand::as_value) == Some(param) {
            if let Some(t) = i.ty {
                return t;
            }
        }
    }
    IrType::I32
}

fn add_globals(mem: &mut Memory, module: &IrModule, seed: u64) {
    for d in &module.memories {
        if mem.id(&d.name).is_none() {
            mem.add_region(d.name.clone(), d.elem_ty, RegionKind::Global, fill(seed, &d.name, d.elem_ty, d.len));
        }
    }
}

/// Draws arguments and memory for one trial of `s`. Module memories are
/// filled from `(seed, region name)` so that two modules declaring the same
/// memory see the same contents.
pub fn random_inputs(s: Subject<'_>, seed: u64) -> Inputs {
    let f = s.function().expect("subject function exists");
    let mut memory = Memory::new();
    add_globals(&mut memory, s.module, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut args = Vec::with_capacity(f.params.len());
    for (k, p) in f.params.iter().enumerate() {
        if p.ty == IrType::Addr {
            let et = pointee_type(f, &p.name);
            let cells = (0..ARG_REGION_LEN).map(|_| small_cell(&mut rng, et)).collect();
            args.push(memory.add_region(format!("arg{k}"), et, RegionKind::Arg, cells));
        } else {
            args.push(random_scalar(&mut rng, p.ty));
        }
    }
    Inputs { args, memory }
}

fn same_value(a: &RuntimeValue, ma: &Memory, b: &RuntimeValue, mb: &Memory) -> bool {
    match (a, b) {
        (RuntimeValue::Addr { offset: o1, .. }, RuntimeValue::Addr { offset: o2, .. }) => {
            o1 == o2 && ma.region_name(a) == mb.region_name(b)
        }
        _ => a.same(b),
    }
}

fn compare(
    reference: &Result<ExecResult, ExecError>,
    candidate: &Result<ExecResult, ExecError>,
    candidate_initial: &Memory,
) -> Option<String> {
    let (r, c) = match (reference, candidate) {
        (Err(ExecError::DivisionByZero), Err(ExecError::DivisionByZero)) => return None,
        (Err(e), Ok(_)) => return Some(format!("reference failed ({e}), merged did not")),
        (Ok(_), Err(e)) => return Some(format!("merged failed: {e}")),
        (Err(e1), Err(e2)) => return Some(format!("both failed: {e1} / {e2}")),
        (Ok(r), Ok(c)) => (r, c),
    };
    if !same_value(&r.ret, &r.memory, &c.ret, &c.memory) {
        return Some(format!("return value {} vs {}", r.ret, c.ret));
    }
    for region in r.memory.snapshot() {
        let Some(other) = c.memory.by_name(&region.name) else {
            return Some(format!("region @{} missing", region.name));
        };
        for (k, (x, y)) in region.cells.iter().zip(&other.cells).enumerate() {
            if !same_value(x, &r.memory, y, &c.memory) {
                return Some(format!("@{}[{k}] is {x} vs {y}", region.name));
            }
        }
    }
    for region in c.memory.snapshot() {
        if r.memory.by_name(&region.name).is_some() {
            continue;
        }
        if let Some(init) = candidate_initial.by_name(&region.name) {
            let changed = region.cells.iter().zip(&init.cells).any(|(x, y)| !x.same(y));
            if changed {
                return Some(format!("region @{} written by merged function only", region.name));
            }
        }
    }
    None
}

fn trial_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}

struct Trial {
    detail: Option<String>,
    steps: Option<(u64, u64)>,
}

fn run_trial<F>(reference: Subject<'_>, candidate: Subject<'_>, seed: u64, step_limit: u64, map_args: F) -> Trial
where
    F: Fn(&[RuntimeValue]) -> Vec<RuntimeValue>,
{
    let inputs = random_inputs(reference, seed);
    let mut cmem = inputs.memory.clone();
    add_globals(&mut cmem, candidate.module, seed);
    let cargs = map_args(&inputs.args);
    let initial = cmem.clone();
    let r = Interpreter::new(reference.module)
        .step_limit(step_limit)
        .run(reference.name, &inputs.args, inputs.memory);
    let c = Interpreter::new(candidate.module)
        .step_limit(step_limit)
        .run(candidate.name, &cargs, cmem);
    let steps = match (&r, &c) {
        (Ok(r), Ok(c)) => Some((r.steps, c.steps)),
        _ => None,
    };
    Trial {
        detail: compare(&r, &c, &initial),
        steps,
    }
}

fn collect(trials: usize, found: Vec<Vec<(Side, Trial, u64)>>) -> DiffReport {
    let mut rep = DiffReport {
        trials,
        ..DiffReport::default()
    };
    for (side, t, seed) in found.into_iter().flatten() {
        let k = side.index();
        if let Some((a, b)) = t.steps {
            rep.steps[k].0 += a;
            rep.steps[k].1 += b;
        }
        if let Some(detail) = t.detail {
            rep.mismatches.push(Mismatch { seed, side, detail });
        }
    }
    rep.mismatches.sort_by_key(|a| (a.seed, a.side));
    rep
}

/// Runs `f1` and `f2` against the merged function (funcid 0 and 1) on
/// random inputs, comparing return values and final memory.
pub fn differential_check(
    f1: Subject<'_>,
    f2: Subject<'_>,
    merged: Subject<'_>,
    params: &ParamMap,
    cfg: &CheckConfig,
) -> DiffReport {
    let seeds = trial_seeds(cfg.seed, cfg.trials);
    let found = par::map(cfg.parallelism, &seeds, |&s| {
        [(Side::F1, f1), (Side::F2, f2)]
            .into_iter()
            .map(|(side, subject)| (side, run_trial(subject, merged, s, cfg.step_limit, |a| params.merged_args(side, a)), s))
            .collect()
    });
    collect(cfg.trials, found)
}

/// Checks two functions with the same signature for equivalence.
pub fn equivalence_check(reference: Subject<'_>, candidate: Subject<'_>, cfg: &CheckConfig) -> DiffReport {
    let seeds = trial_seeds(cfg.seed, cfg.trials);
    let found = par::map(cfg.parallelism, &seeds, |&s| {
        vec![(Side::F1, run_trial(reference, candidate, s, cfg.step_limit, |a| a.to_vec()), s)]
    });
    collect(cfg.trials, found)
}
