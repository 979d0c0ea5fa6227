//! Two-stage selection: merge under the control, memory and arithmetic
//! alignment models, then pick one candidate either with a predictor over
//! savings vectors or by estimating all three.

mod forest;
mod train;

use thiserror::Error;

pub use forest::{fit_forest, ForestError, ForestModel, ForestParams, Node, Tree};
pub use train::{cross_validate, equidistant, train_forest, CvReport, GridPoint, TrainConfig, TrainError, TrainingRow, TrainingSet};

use crate::align::{AlignmentModel, ModelKind};
use crate::codegen::{merge, MergeError, MergeMode, MergeResult, Signatures};
use crate::costmodel::{estimate_resources, savings_vector, ResourceEstimate, ResourceWeights, SavingsVector};
use crate::interp::{differential_check, CheckConfig, DiffReport, Subject};
use crate::ir::{IrFunction, IrModule};
use crate::par::{self, Parallelism};
use crate::synth::{random_pair, SynthConfig};

/// Candidate order, which is also the tie-break order.
pub const MODELS: [ModelKind; 3] = [ModelKind::Control, ModelKind::Memory, ModelKind::Arithmetic];

#[derive(Clone, Debug)]
pub struct Candidate {
    pub model: ModelKind,
    pub result: MergeResult,
    pub savings: SavingsVector,
}

#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub candidates: [Candidate; 3],
}

impl CandidateSet {
    pub fn get(&self, model: ModelKind) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.model == model)
    }

    /// Differential check of each candidate against the inputs, which must
    /// be functions of `module`.
    pub fn verify(&self, module: &IrModule, f1: &str, f2: &str, cfg: &CheckConfig) -> Vec<(ModelKind, DiffReport)> {
        self.candidates
            .iter()
            .map(|c| {
                let merged = c.result.attach(module);
                let rep = differential_check(
                    Subject::new(module, f1),
                    Subject::new(module, f2),
                    Subject::new(&merged, &c.result.merged.name),
                    &c.result.param_map,
                    cfg,
                );
                (c.model, rep)
            })
            .collect()
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("mode {0} does not align with a model")]
    UnsupportedMode(MergeMode),
    #[error(transparent)]
    Merge(#[from] MergeError),
}

pub fn generate_candidates(
    f1: &IrFunction,
    f2: &IrFunction,
    mode: MergeMode,
    sigs: &Signatures,
) -> Result<CandidateSet, EnsembleError> {
    if mode == MergeMode::Concat {
        return Err(EnsembleError::UnsupportedMode(mode));
    }
    let one = |model: ModelKind| -> Result<Candidate, EnsembleError> {
        let result = merge(f1, f2, mode, &AlignmentModel::new(model), sigs)?;
        let savings = savings_vector(f1, f2, &result.merged);
        Ok(Candidate { model, result, savings })
    };
    Ok(CandidateSet {
        candidates: [one(MODELS[0])?, one(MODELS[1])?, one(MODELS[2])?],
    })
}

/// Scores a candidate; larger means more expected savings.
pub trait SavingsPredictor {
    fn predict(&self, c: &Candidate) -> f64;
}

impl SavingsPredictor for ForestModel {
    fn predict(&self, c: &Candidate) -> f64 {
        self.predict_savings(&c.savings)
    }
}

/// The negated energy proxy of the merged function.
#[derive(Clone, Debug, Default)]
pub struct OraclePredictor {
    pub weights: ResourceWeights,
}

impl SavingsPredictor for OraclePredictor {
    fn predict(&self, c: &Candidate) -> f64 {
        -estimate_resources(&c.result.merged, &self.weights).energy_proxy
    }
}

/// Index of the candidate with the highest prediction, earliest on ties.
pub fn select_ensemble_index(cs: &CandidateSet, p: &dyn SavingsPredictor) -> usize {
    let scores: Vec<f64> = cs.candidates.iter().map(|c| p.predict(c)).collect();
    let mut best = 0;
    for k in 1..scores.len() {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    best
}

pub fn select_ensemble<'a>(cs: &'a CandidateSet, p: &dyn SavingsPredictor) -> &'a Candidate {
    &cs.candidates[select_ensemble_index(cs, p)]
}

#[derive(Clone, Debug)]
pub struct Exhaustive<'a> {
    pub chosen: &'a Candidate,
    pub index: usize,
    /// Per candidate, in [`MODELS`] order.
    pub estimates: [ResourceEstimate; 3],
}

/// Estimates every candidate and keeps the lowest energy proxy, earliest
/// on ties.
pub fn select_exhaustive<'a>(cs: &'a CandidateSet, w: &ResourceWeights) -> Exhaustive<'a> {
    let estimates = cs.candidates.each_ref().map(|c| estimate_resources(&c.result.merged, w));
    let mut best = 0;
    for k in 1..3 {
        if estimates[k].energy_proxy < estimates[best].energy_proxy {
            best = k;
        }
    }
    Exhaustive {
        chosen: &cs.candidates[best],
        index: best,
        estimates,
    }
}

/// One training row per candidate. The target is the energy-proxy saving
/// of the merge over the two separate functions.
pub fn training_rows(f1: &IrFunction, f2: &IrFunction, cs: &CandidateSet, w: &ResourceWeights, columns: &[crate::ir::Opcode]) -> Vec<TrainingRow> {
    let (e1, e2) = (estimate_resources(f1, w), estimate_resources(f2, w));
    cs.candidates
        .iter()
        .map(|c| {
            let m = estimate_resources(&c.result.merged, w);
            let energy = e1.energy_proxy + e2.energy_proxy - m.energy_proxy;
            TrainingRow {
                features: columns.iter().map(|&op| c.savings.get(op) as f64).collect(),
                lut: e1.lut + e2.lut - m.lut,
                ff: e1.ff + e2.ff - m.ff,
                dsp: e1.dsp + e2.dsp - m.dsp,
                energy,
                target: energy,
            }
        })
        .collect()
}

/// Candidate sets for generated pairs `seeds`, skipping pairs that fail to
/// merge. Each entry keeps its module and seed.
pub fn synthetic_candidates(
    seeds: std::ops::Range<u64>,
    synth: &SynthConfig,
    mode: MergeMode,
    par: Parallelism,
) -> Vec<(u64, IrModule, CandidateSet)> {
    let seeds: Vec<u64> = seeds.collect();
    par::map(par, &seeds, |&s| {
        let m = random_pair(s, synth);
        let cs = generate_candidates(&m.functions[0], &m.functions[1], mode, &Signatures::of(&m)).ok()?;
        Some((s, m, cs))
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Training rows for a set of generated pairs.
pub fn synthetic_dataset(sets: &[(u64, IrModule, CandidateSet)], w: &ResourceWeights) -> TrainingSet {
    let mut d = TrainingSet::new();
    for (_, m, cs) in sets {
        let rows = training_rows(&m.functions[0], &m.functions[1], cs, w, &d.columns);
        d.rows.extend(rows);
    }
    d
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Agreement {
    pub pairs: usize,
    /// Pairs where the predictor's choice has the exhaustive choice's
    /// energy proxy.
    pub matches: usize,
    /// Pairs whose candidates do not all share one energy proxy.
    pub contested: usize,
    pub contested_matches: usize,
}

impl Agreement {
    pub fn rate(&self) -> f64 {
        if self.pairs == 0 {
            1.0
        } else {
            self.matches as f64 / self.pairs as f64
        }
    }

    pub fn contested_rate(&self) -> f64 {
        if self.contested == 0 {
            1.0
        } else {
            self.contested_matches as f64 / self.contested as f64
        }
    }
}

/// How often the predictor picks a candidate as good as the exhaustive one.
pub fn agreement<'a>(sets: impl IntoIterator<Item = &'a CandidateSet>, p: &dyn SavingsPredictor, w: &ResourceWeights) -> Agreement {
    let mut a = Agreement::default();
    for cs in sets {
        let ex = select_exhaustive(cs, w);
        let pick = select_ensemble_index(cs, p);
        let hit = pick == ex.index || ex.estimates[pick].energy_proxy == ex.estimates[ex.index].energy_proxy;
        let contested = ex.estimates.iter().any(|e| e.energy_proxy != ex.estimates[0].energy_proxy);
        a.pairs += 1;
        a.matches += usize::from(hit);
        a.contested += usize::from(contested);
        a.contested_matches += usize::from(hit && contested);
    }
    a
}
