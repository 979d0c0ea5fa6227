use cgfm::align::AlignmentModel;
use cgfm::codegen::{merge, MergeMode, Signatures};
use cgfm::costmodel::ResourceWeights;
use cgfm::ensemble::{fit_forest, synthetic_candidates, synthetic_dataset, ForestParams};
use cgfm::interp::{differential_check, CheckConfig, Subject};
use cgfm::par::Parallelism;
use cgfm::synth::{random_pair, SynthConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn forest(c: &mut Criterion) {
    let sets = synthetic_candidates(0..100, &SynthConfig::default(), MergeMode::SsaGlobal, Parallelism::default());
    let d = synthetic_dataset(&sets, &ResourceWeights::default());
    let (x, y) = (d.x(), d.y());
    let params = ForestParams { max_depth: 12, n_estimators: 64, max_features: 0.25 };
    let mut g = c.benchmark_group("fit_forest");
    for (name, par) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit_forest(&d.columns, &x, &y, params, 1, par))
        });
    }
    g.finish();
}

fn differential(c: &mut Criterion) {
    let m = random_pair(3, &SynthConfig::default());
    let r = merge(&m.functions[0], &m.functions[1], MergeMode::SsaGlobal, &AlignmentModel::uniform(), &Signatures::of(&m)).unwrap();
    let merged = r.attach(&m);
    let mut g = c.benchmark_group("differential_check");
    for (name, par) in MODES {
        let cfg = CheckConfig { trials: 400, parallelism: par, ..CheckConfig::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                differential_check(
                    Subject::new(&m, "a"),
                    Subject::new(&m, "b"),
                    Subject::new(&merged, &r.merged.name),
                    &r.param_map,
                    &cfg,
                )
            })
        });
    }
    g.finish();
}

criterion_group!(benches, forest, differential);
criterion_main!(benches);
