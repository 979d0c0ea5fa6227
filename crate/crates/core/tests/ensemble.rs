mod common;

use cgfm::align::ModelKind;
use cgfm::codegen::{MergeMode, Signatures};
use cgfm::costmodel::{estimate_resources, ResourceWeights};
use cgfm::ensemble::{
    agreement, fit_forest, generate_candidates, select_ensemble, select_exhaustive, synthetic_candidates,
    synthetic_dataset, CandidateSet, ForestModel, ForestParams, Node, OraclePredictor, Tree,
};
use cgfm::interp::CheckConfig;
use cgfm::ir::{print_function, Opcode};
use cgfm::par::Parallelism;
use cgfm::synth::SynthConfig;
use common::{pair, pairs, Pair};

fn candidates(p: &Pair, mode: MergeMode) -> CandidateSet {
    generate_candidates(p.f1(), p.f2(), mode, &Signatures::of(&p.module)).unwrap()
}

#[test]
fn oracle_agrees_with_exhaustive_on_fixtures() {
    let w = ResourceWeights::default();
    let oracle = OraclePredictor::default();
    for mode in [MergeMode::SsaGlobal, MergeMode::NonSsaGlobal, MergeMode::Local] {
        let sets: Vec<CandidateSet> = pairs().iter().map(|p| candidates(p, mode)).collect();
        for (p, cs) in pairs().iter().zip(&sets) {
            let ex = select_exhaustive(cs, &w);
            assert_eq!(select_ensemble(cs, &oracle).model, ex.chosen.model, "{} {mode}", p.name);
        }
        let a = agreement(&sets, &oracle, &w);
        assert_eq!(a.matches, a.pairs);
    }
}

#[test]
fn rotate_candidates_are_correct_and_differ_on_mul() {
    let p = pair("rotate");
    let cs = candidates(&p, MergeMode::SsaGlobal);
    let cfg = CheckConfig::default();
    for (model, rep) in cs.verify(&p.module, &p.f1().name, &p.f2().name, &cfg) {
        assert!(rep.passed(), "{model}: {:?}", rep.mismatches.first());
    }
    let mul = |m: ModelKind| cs.get(m).unwrap().savings.get(Opcode::Mul);
    assert_eq!(mul(ModelKind::Arithmetic), 1);
    assert!(mul(ModelKind::Control) < mul(ModelKind::Arithmetic));
}

/// One tree: `delta(mul) <= 0.5` predicts 0, anything above 2.
fn planted_mul_model() -> ForestModel {
    ForestModel {
        features: vec![Opcode::Mul],
        params: ForestParams { max_depth: 1, n_estimators: 1, max_features: 1.0 },
        seed: 0,
        trees: vec![Tree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.5, right: 2 },
                Node::Leaf(0.0),
                Node::Leaf(2.0),
            ],
        }],
    }
}

#[test]
fn planted_mul_model_picks_arithmetic_on_rotate() {
    let cs = candidates(&pair("rotate"), MergeMode::SsaGlobal);
    let m = planted_mul_model();
    let back = ForestModel::load(&m.save()).unwrap();
    assert_eq!(back, m);
    assert_eq!(select_ensemble(&cs, &m).model, ModelKind::Arithmetic);
}

#[test]
fn self_merge_candidates_are_identical() {
    let p = pair("loop_sum_prod");
    let f = p.f1().clone();
    let g = f.alpha_renamed("copy", "_c");
    let mut module = p.module.clone();
    module.functions = vec![f.clone(), g.clone()];
    let cs = generate_candidates(&f, &g, MergeMode::SsaGlobal, &Signatures::of(&module)).unwrap();
    let text: Vec<String> = cs.candidates.iter().map(|c| print_function(&c.result.merged)).collect();
    assert!(text.iter().all(|t| *t == text[0]));
    let ex = select_exhaustive(&cs, &ResourceWeights::default());
    assert_eq!(ex.chosen.model, ModelKind::Control);
    assert!(ex.estimates.iter().all(|e| *e == ex.estimates[0]));
}

#[test]
fn disjoint_candidates_are_correct() {
    let p = pair("disjoint_int_float");
    let cs = candidates(&p, MergeMode::SsaGlobal);
    for (model, rep) in cs.verify(&p.module, &p.f1().name, &p.f2().name, &CheckConfig::default()) {
        assert!(rep.passed(), "{model}");
    }
}

#[test]
fn exhaustive_returns_the_lowest_proxy() {
    let w = ResourceWeights::default();
    for p in pairs() {
        let cs = candidates(&p, MergeMode::Local);
        let ex = select_exhaustive(&cs, &w);
        for (c, e) in cs.candidates.iter().zip(&ex.estimates) {
            assert_eq!(*e, estimate_resources(&c.result.merged, &w));
            assert!(ex.estimates[ex.index].energy_proxy <= e.energy_proxy);
        }
    }
}

#[test]
fn synthetic_forest_round_trips() {
    let sets = synthetic_candidates(0..40, &SynthConfig::default(), MergeMode::SsaGlobal, Parallelism::default());
    let d = synthetic_dataset(&sets, &ResourceWeights::default());
    assert_eq!(d.len(), 3 * sets.len());
    let params = ForestParams { max_depth: 6, n_estimators: 20, max_features: 0.25 };
    let m = fit_forest(&d.columns, &d.x(), &d.y(), params, 11, Parallelism::default());
    let back = ForestModel::load(&m.save()).unwrap();
    for (_, _, cs) in &sets {
        for c in &cs.candidates {
            assert_eq!(back.predict_savings(&c.savings).to_bits(), m.predict_savings(&c.savings).to_bits());
        }
    }
}
