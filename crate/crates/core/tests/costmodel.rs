use cgfm::costmodel::{
    estimate_counts, estimate_resources, fit_ols, fit_weights, Coeffs, EnergyWeights, FitDataset, FitError, FitRow,
    OpcodeCounts, ResourceEstimate, ResourceWeights,
};
use cgfm::ir::{parse_module, Opcode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const COLUMNS: [Opcode; 5] = [Opcode::Br, Opcode::Load, Opcode::Store, Opcode::Add, Opcode::Mul];

fn planted() -> ResourceWeights {
    let mut w = ResourceWeights::zero();
    w.set(Opcode::Br, Coeffs::new(133.0, 51.0, 1.0 / 6.0));
    w.set(Opcode::Load, Coeffs::new(19.0, 21.0, 1.0 / 44.0));
    w.set(Opcode::Store, Coeffs::new(37.0, 16.0, 0.0));
    w.set(Opcode::Add, Coeffs::new(32.0, 3.0, 0.0));
    w.set(Opcode::Mul, Coeffs::new(4.5, 70.0, 3.0));
    w.intercept = Coeffs::new(250.0, 80.0, 0.5);
    w
}

/// `n` rows of random counts over [`COLUMNS`] with resources computed by
/// hand from the planted weights, plus optional gaussian noise.
fn dataset(n: usize, seed: u64, sigma: f64) -> FitDataset {
    let w = planted();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut d = FitDataset { columns: COLUMNS.to_vec(), rows: Vec::new() };
    for _ in 0..n {
        let features: Vec<f64> = COLUMNS.iter().map(|_| rng.gen_range(0..40) as f64).collect();
        let mut y = [w.intercept.lut, w.intercept.ff, w.intercept.dsp];
        for (op, x) in COLUMNS.iter().zip(&features) {
            let c = w.get(*op);
            y[0] += c.lut * x;
            y[1] += c.ff * x;
            y[2] += c.dsp * x;
        }
        if sigma > 0.0 {
            for v in &mut y {
                *v += noise.sample(&mut rng);
            }
        }
        d.rows.push(FitRow { features, lut: y[0], ff: y[1], dsp: y[2], energy: 0.0 });
    }
    d
}

fn coeff_pairs(a: &ResourceWeights, b: &ResourceWeights) -> Vec<(String, f64, f64)> {
    let mut out = Vec::new();
    let mut push = |name: String, x: Coeffs, y: Coeffs| {
        out.push((format!("{name}.lut"), x.lut, y.lut));
        out.push((format!("{name}.ff"), x.ff, y.ff));
        out.push((format!("{name}.dsp"), x.dsp, y.dsp));
    };
    push("intercept".into(), a.intercept, b.intercept);
    for op in Opcode::ALL {
        push(op.name().into(), a.get(*op), b.get(*op));
    }
    out
}

#[test]
fn noiseless_planted_weights_are_recovered() {
    let fit = fit_weights(&dataset(50, 1, 0.0)).unwrap();
    for (name, got, want) in coeff_pairs(&fit, &planted()) {
        assert!((got - want).abs() <= 1e-6, "{name}: {got} vs {want}");
    }
}

#[test]
fn noisy_fit_lands_within_three_standard_errors() {
    let fit = fit_ols(&dataset(500, 2, 1.0)).unwrap();
    let want = planted();
    for ((name, got, w), (_, se, _)) in coeff_pairs(&fit.weights, &want).into_iter().zip(coeff_pairs(&fit.std_errors, &want)) {
        if name.starts_with("intercept") || COLUMNS.iter().any(|c| name.starts_with(&format!("{}.", c.name()))) {
            assert!(se > 0.0, "{name}");
            assert!((got - w).abs() <= 3.0 * se, "{name}: {got} vs {w} (se {se})");
        }
    }
    assert!(fit.rss.iter().all(|r| *r > 0.0));
}

#[test]
fn collinear_columns_are_named() {
    let mut d = dataset(50, 3, 0.0);
    for r in &mut d.rows {
        r.features[4] = 2.0 * r.features[3];
    }
    match fit_ols(&d) {
        Err(FitError::RankDeficient(cols)) => assert!(cols.contains(&"mul".to_string()), "{cols:?}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(fit_ols(&dataset(3, 3, 0.0)), Err(FitError::TooFewRows { needed: 6, have: 3 })));
}

#[test]
fn csv_then_fit_matches_direct_fit() {
    let d = dataset(50, 4, 0.0);
    let mut buf = Vec::new();
    d.write_csv(&mut buf).unwrap();
    let back = FitDataset::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, d);
    assert_eq!(fit_weights(&back).unwrap(), fit_weights(&d).unwrap());
}

#[test]
fn estimate_is_linear_in_counts() {
    let w = ResourceWeights::default();
    let e = EnergyWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let mut a: OpcodeCounts = [0; Opcode::COUNT];
        let mut b: OpcodeCounts = [0; Opcode::COUNT];
        for k in 0..Opcode::COUNT {
            a[k] = rng.gen_range(0..10);
            b[k] = rng.gen_range(0..10);
        }
        let sum: OpcodeCounts = std::array::from_fn(|k| a[k] + b[k]);
        let (ea, eb, es) = (estimate_counts(&a, &w, &e), estimate_counts(&b, &w, &e), estimate_counts(&sum, &w, &e));
        for (x, y) in [(ea.lut + eb.lut, es.lut), (ea.ff + eb.ff, es.ff), (ea.dsp + eb.dsp, es.dsp)] {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }
}

#[test]
fn table_row_examples() {
    let m = parse_module(
        "mem @M: i32[4]
         func @b() -> i32 { e: br x
         x: ret i32 0 }
         func @l() -> i32 { e: %p = gep i32 @M, 0
         %v = load i32 %p
         ret i32 %v }",
    )
    .unwrap();
    let w = ResourceWeights::default();
    let base = |f: &str| {
        let m = parse_module(&format!("func @{f}() -> i32 {{ e: ret i32 0 }}")).unwrap();
        estimate_resources(&m.functions[0], &w)
    };
    let delta = |f: usize, extra: ResourceEstimate| {
        let r = estimate_resources(&m.functions[f], &w);
        (r.lut - extra.lut, r.ff - extra.ff, r.dsp - extra.dsp)
    };
    assert_eq!(delta(0, base("x")), (133.0, 51.0, 1.0 / 6.0));
    let gep = w.get(Opcode::Gep);
    let (l, f, d) = delta(1, base("x"));
    assert_eq!((l - gep.lut, f - gep.ff, d - gep.dsp), (19.0, 21.0, 1.0 / 44.0));
}
