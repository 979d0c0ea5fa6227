use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cgfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgfm")).args(args).output().expect("runs")
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn pairs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/pairs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn merge_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let a = pairs_dir().join("rotate.ir");
    let out = dir.path().join("m.ir");
    let prov = dir.path().join("m.prov");
    let o = cgfm(&["merge", s(&a), s(&a), "--select", "exhaustive", "-o", s(&out), "--provenance", s(&prov)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout(&o);
    assert!(report.contains("verified yes"), "{report}");
    assert!(report.contains("candidate arithmetic"));
    let merged = std::fs::read_to_string(&out).unwrap();
    assert!(merged.contains("func @merged.rotl.scale"));
    let lines = std::fs::read_to_string(&prov).unwrap();
    assert!(lines.lines().all(|l| l.split(' ').count() == 3));
    let o = cgfm(&["verify", s(&a), s(&a), s(&out), "--trials", "50"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("mismatches 0"));
}

#[test]
fn install_redirects_callers() {
    let dir = tempfile::tempdir().unwrap();
    let a = pairs_dir().join("calls.ir");
    let out = dir.path().join("m.ir");
    let o = cgfm(&["merge", s(&a), s(&a), "--install", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("func @merged."));
    assert!(!text.contains("func @c1("));
}

#[test]
fn corrupted_merge_fails_verification_with_seeds() {
    let a = fixtures().join("abs_max.ir");
    let bad = fixtures().join("abs_max_merged_bad.ir");
    let o = cgfm(&["verify", s(&a), s(&a), s(&bad), "--trials", "20", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mismatching seeds: "), "{err}");
    let seed = err.trim().rsplit(' ').next().unwrap();
    assert!(seed.parse::<u64>().is_ok(), "{err}");
    assert!(stdout(&o).contains(&format!("mismatch seed {seed}")));
}

#[test]
fn exit_codes() {
    let a = pairs_dir().join("rotate.ir");
    assert_eq!(cgfm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cgfm(&["merge", s(&a), s(&a), "--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(cgfm(&["merge", s(&a), s(&a), "--select", "ensemble"]).status.code(), Some(2));
    assert_eq!(cgfm(&["merge", s(&a), s(&a), "--mode", "concat", "--select", "exhaustive"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.ir");
    std::fs::write(&broken, "func @f() -> i32 { entry: ret i32 %nope }").unwrap();
    let o = cgfm(&["estimate", s(&broken)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.ir"));
    assert_eq!(cgfm(&["merge", s(&a), s(&a), "--f1", "nope"]).status.code(), Some(3));
    assert_eq!(cgfm(&["estimate", s(&dir.path().join("missing.ir"))]).status.code(), Some(3));
    let f = pairs_dir().join("params_mixed.ir");
    let r = pairs_dir().join("rotate.ir");
    assert_eq!(cgfm(&["merge", s(&f), s(&r), "--f1", "pf1", "--f2", "rotl"]).status.code(), Some(3));
}

#[test]
fn estimate_and_align() {
    let a = pairs_dir().join("rotate.ir");
    let o = cgfm(&["estimate", s(&a), "--function", "rotl"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("@rotl lut="));

    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.txt");
    std::fs::write(&w, "#intercept 100 0 0\n").unwrap();
    let o2 = cgfm(&["estimate", s(&a), "--function", "rotl", "--weights", s(&w)]);
    let lut = |t: &str| t.split("lut=").nth(1).unwrap().split(' ').next().unwrap().parse::<f64>().unwrap();
    assert_eq!(lut(&stdout(&o2)), lut(&out) + 100.0);

    let o = cgfm(&["align", s(&a), s(&a), "--model", "arithmetic"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().last().unwrap().starts_with("score "));
    assert!(text.lines().any(|l| l.starts_with("M ") && l.ends_with(" mul")));
}

#[test]
fn batch_counts_pairs_and_is_deterministic() {
    let corpus = fixtures().join("corpus");
    let before: Vec<Vec<u8>> = ["one.ir", "two.ir"].iter().map(|f| std::fs::read(corpus.join(f)).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
    for out in [&x, &y] {
        let o = cgfm(&["batch", s(&corpus), "--all-pairs", "--modes", "ssa-global,local", "--trials", "20", "-o", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("rows 12 verified 12"), "{}", stdout(&o));
    }
    let a = std::fs::read(&x).unwrap();
    assert_eq!(a, std::fs::read(&y).unwrap());
    let mut rd = csv::Reader::from_reader(a.as_slice());
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6 * 2);
    let after: Vec<Vec<u8>> = ["one.ir", "two.ir"].iter().map(|f| std::fs::read(corpus.join(f)).unwrap()).collect();
    assert_eq!(before, after);

    let o = cgfm(&["batch", s(&corpus), "--no-verify"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 2);
    assert!(text.lines().skip(1).all(|l| l.contains(",skipped,")));
}

#[test]
fn batch_skips_identical_functions_unless_asked() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("twins.ir"),
        "func @p(%a: i32) -> i32 { entry: %b = add i32 %a, 1 ret i32 %b }
         func @q(%a: i32) -> i32 { entry: %b = add i32 %a, 1 ret i32 %b }",
    )
    .unwrap();
    let o = cgfm(&["batch", s(dir.path())]);
    assert_eq!(stdout(&o).lines().count(), 1);
    let o = cgfm(&["batch", s(dir.path()), "--allow-identical"]);
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn gen_data_train_and_ensemble_merge() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("forest.txt");
    let o = cgfm(&["gen-data", "--pairs", "30", "-o", s(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = cgfm(&["train", "--data", s(&data), "-o", s(&model), "--depths", "2,6", "--estimators", "5,10", "--features", "0.25"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("grid 4 best"));
    let report = std::fs::read_to_string(dir.path().join("forest.txt.cv.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 4);
    assert!(std::fs::read_to_string(&model).unwrap().starts_with("forest v1 seed=0 features="));

    let again = dir.path().join("again.txt");
    cgfm(&["train", "--data", s(&data), "-o", s(&again), "--depths", "2,6", "--estimators", "5,10", "--features", "0.25"]);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());

    let a = pairs_dir().join("rotate.ir");
    let o = cgfm(&["merge", s(&a), s(&a), "--select", "ensemble", "--forest", s(&model), "-o", s(&dir.path().join("m.ir"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("selector ensemble"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "add,target\n1,2\n").unwrap();
    assert_eq!(cgfm(&["train", "--data", s(&bad), "-o", s(&model)]).status.code(), Some(3));
}
