mod common;

use cgfm::align::{AlignmentModel, ModelKind};
use cgfm::codegen::MergeMode;
use cgfm::interp::CheckConfig;

#[test]
fn every_fixture_merges_correctly_in_every_mode() {
    let cfg = CheckConfig::default();
    let mut failures = Vec::new();
    for p in common::pairs() {
        for mode in MergeMode::ALL {
            for kind in ModelKind::ALL {
                let r = p.merge(mode, &AlignmentModel::new(kind));
                let rep = p.check(&r, &cfg);
                if !rep.passed() {
                    failures.push(format!("{} {mode} {}: {}", p.name, kind.name(), rep.mismatches[0].detail));
                }
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
