mod common;

use cgfm::align::{AlignmentModel, ModelKind};
use cgfm::codegen::MergeMode;
use cgfm::interp::CheckConfig;
use cgfm::synth::{random_pair, SynthConfig};
use common::Pair;

#[test]
fn random_pairs_merge_correctly_in_every_mode() {
    let cfg = CheckConfig { trials: 30, ..CheckConfig::default() };
    let models = [ModelKind::Uniform, ModelKind::Control, ModelKind::Memory, ModelKind::Arithmetic];
    let n: u64 = std::env::var("RANDOM_PAIRS").ok().and_then(|s| s.parse().ok()).unwrap_or(60);
    let mut failures = Vec::new();
    for seed in 0..n {
        let p = Pair { name: format!("seed{seed}"), module: random_pair(seed, &SynthConfig::default()) };
        for mode in MergeMode::ALL {
            let model = AlignmentModel::new(models[seed as usize % 4]);
            let r = match cgfm::codegen::merge(p.f1(), p.f2(), mode, &model, &cgfm::codegen::Signatures::of(&p.module)) {
                Ok(r) => r,
                Err(e) => {
                    failures.push(format!("{} {mode}: {e}", p.name));
                    continue;
                }
            };
            let rep = p.check(&r, &cfg);
            if !rep.passed() {
                failures.push(format!("{} {mode}: {:?}", p.name, rep.mismatching_seeds()));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
