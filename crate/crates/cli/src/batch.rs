use std::path::{Path, PathBuf};

use cgfm::codegen::{MergeMode, Signatures};
use cgfm::costmodel::{estimate_resources, improvement, savings_vector, ResourceWeights};
use cgfm::interp::{differential_check, Subject};
use cgfm::ir::{print_function, IrFunction, IrModule};
use cgfm::par::{self, Parallelism};

use crate::common::{combine, load_module, run_selection, write_file, Failure, Selector};
use crate::{selector, weights, BatchArgs};

pub const COLUMNS_HELP: &str = "\
CSV columns:
  f1, f2                  functions as <file>:<name>, f1 before f2 in corpus order
  mode                    merge mode
  selector                model:<name>, ensemble or exhaustive
  model                   alignment model of the chosen merge (concat for concat mode)
  savings                 total and nonzero per-opcode savings (count f1 + f2 - merged)
  lut, ff, dsp            estimate of the merged function
  energy_improvement_pct  energy-proxy improvement of the merge over both inputs
  latency_overhead_pct    mean dynamic-instruction overhead of the merged function
  verified                yes, no, skipped or error
  note                    mismatch seeds or the error message

Rows are sorted by (f1, f2, mode). Failing and unverified rows are left out of
the summary's mean improvement. The command exits 1 if any row fails
verification.";

const HEADER: [&str; 13] = [
    "f1",
    "f2",
    "mode",
    "selector",
    "model",
    "savings",
    "lut",
    "ff",
    "dsp",
    "energy_improvement_pct",
    "latency_overhead_pct",
    "verified",
    "note",
];

struct Unit {
    file: usize,
    name: String,
    label: String,
}

#[derive(Clone, Debug)]
struct Row {
    f1: String,
    f2: String,
    mode: MergeMode,
    model: String,
    savings: String,
    lut: String,
    ff: String,
    dsp: String,
    energy: Option<f64>,
    latency: Option<f64>,
    verified: &'static str,
    note: String,
}

impl Row {
    fn error(f1: &str, f2: &str, mode: MergeMode, note: String) -> Row {
        Row {
            f1: f1.into(),
            f2: f2.into(),
            mode,
            model: String::new(),
            savings: String::new(),
            lut: String::new(),
            ff: String::new(),
            dsp: String::new(),
            energy: None,
            latency: None,
            verified: "error",
            note,
        }
    }
}

fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let rd = std::fs::read_dir(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "ir"))
        .collect();
    files.sort();
    Ok(files)
}

fn identical(a: &IrFunction, b: &IrFunction) -> bool {
    let mut b = b.clone();
    b.name = a.name.clone();
    print_function(a) == print_function(&b)
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

struct Job<'a> {
    a: &'a Unit,
    b: &'a Unit,
    mode: MergeMode,
}

fn merge_row(job: &Job<'_>, modules: &[IrModule], sel: &Selector, w: &ResourceWeights, args: &BatchArgs) -> Row {
    let (ua, ub, mode) = (job.a, job.b, job.mode);
    let module = match combine(&modules[ua.file], &modules[ub.file]) {
        Ok(m) => m,
        Err(e) => return Row::error(&ua.label, &ub.label, mode, e),
    };
    let (f1, f2) = (module.function(&ua.name).unwrap(), module.function(&ub.name).unwrap());
    let picked = match run_selection(f1, f2, mode, sel, w, &Signatures::of(&module)) {
        Ok(p) => p,
        Err(e) => return Row::error(&ua.label, &ub.label, mode, e),
    };
    let r = &picked.result;
    let v = savings_vector(f1, f2, &r.merged);
    let (e1, e2, em) = (estimate_resources(f1, w), estimate_resources(f2, w), estimate_resources(&r.merged, w));
    let mut row = Row {
        f1: ua.label.clone(),
        f2: ub.label.clone(),
        mode,
        model: picked.label.clone(),
        savings: format!("total={} {}", v.total(), v.compact()),
        lut: format!("{:.4}", em.lut),
        ff: format!("{:.4}", em.ff),
        dsp: format!("{:.4}", em.dsp),
        energy: improvement(e1.energy_proxy, e2.energy_proxy, em.energy_proxy).ok(),
        latency: None,
        verified: "skipped",
        note: String::new(),
    };
    if !args.no_verify {
        let mut cfg = args.check.config();
        cfg.parallelism = Parallelism::Sequential;
        let attached = r.attach(&module);
        let rep = differential_check(
            Subject::new(&module, &ua.name),
            Subject::new(&module, &ub.name),
            Subject::new(&attached, &r.merged.name),
            &r.param_map,
            &cfg,
        );
        row.latency = rep.latency_overhead();
        if rep.passed() {
            row.verified = "yes";
        } else {
            row.verified = "no";
            let seeds: Vec<String> = rep.mismatching_seeds().iter().map(|s| s.to_string()).collect();
            row.note = format!("mismatching seeds: {}", seeds.join(" "));
        }
    }
    row
}

fn write_csv(rows: &[Row], sel: &Selector) -> Result<String, Failure> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::input(e.to_string());
    out.write_record(HEADER).map_err(io)?;
    let sel = sel.name();
    for r in rows {
        out.write_record([
            r.f1.as_str(),
            &r.f2,
            r.mode.name(),
            &sel,
            &r.model,
            &r.savings,
            &r.lut,
            &r.ff,
            &r.dsp,
            &fmt(r.energy),
            &fmt(r.latency),
            r.verified,
            &r.note,
        ])
        .map_err(io)?;
    }
    let bytes = out.into_inner().map_err(|e| Failure::input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn table(rows: &[Row]) -> String {
    let mut s = format!("{:<28} {:<28} {:<14} {:<10} {:>9} {:>9} {}\n", "f1", "f2", "mode", "model", "energy%", "latency%", "verified");
    for r in rows {
        s.push_str(&format!(
            "{:<28} {:<28} {:<14} {:<10} {:>9} {:>9} {}\n",
            r.f1,
            r.f2,
            r.mode.name(),
            r.model,
            r.energy.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into()),
            r.latency.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into()),
            r.verified
        ));
    }
    let good: Vec<f64> = rows.iter().filter(|r| r.verified == "yes").filter_map(|r| r.energy).collect();
    let count = |v: &str| rows.iter().filter(|r| r.verified == v).count();
    s.push_str(&format!(
        "rows {} verified {} failed {} skipped {} errors {}",
        rows.len(),
        count("yes"),
        count("no"),
        count("skipped"),
        count("error")
    ));
    if !good.is_empty() {
        s.push_str(&format!(" mean_verified_energy_improvement_pct {:.4}", good.iter().sum::<f64>() / good.len() as f64));
    }
    s.push('\n');
    s
}

pub fn run(args: BatchArgs) -> Result<(), Failure> {
    let sel = selector(args.select, args.model, args.forest.as_deref())?;
    if args.modes.contains(&MergeMode::Concat) && !matches!(sel, Selector::Model(_)) {
        return Err(Failure::usage("concat mode needs --select model"));
    }
    let w = weights(args.weights.as_deref())?;
    let files = corpus_files(&args.corpus)?;
    let modules = files.iter().map(|p| load_module(p)).collect::<Result<Vec<_>, _>>()?;
    let mut units = Vec::new();
    for (k, (p, m)) in files.iter().zip(&modules).enumerate() {
        let stem = p.file_name().unwrap().to_string_lossy();
        for f in &m.functions {
            units.push(Unit { file: k, name: f.name.clone(), label: format!("{stem}:{}", f.name) });
        }
    }
    let mut jobs = Vec::new();
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            let (a, b) = (&units[i], &units[j]);
            if a.file != b.file && !args.all_pairs {
                continue;
            }
            let (fa, fb) = (modules[a.file].function(&a.name).unwrap(), modules[b.file].function(&b.name).unwrap());
            if !args.allow_identical && identical(fa, fb) {
                continue;
            }
            for &mode in &args.modes {
                jobs.push(Job { a, b, mode });
            }
        }
    }
    let mut rows = par::map(Parallelism::default(), &jobs, |job| merge_row(job, &modules, &sel, &w, &args));
    rows.sort_by(|x, y| (&x.f1, &x.f2, x.mode.name()).cmp(&(&y.f1, &y.f2, y.mode.name())));
    let csv = write_csv(&rows, &sel)?;
    match &args.output {
        Some(p) => {
            write_file(p, &csv)?;
            out!("{}", table(&rows));
        }
        None => out!("{csv}"),
    }
    if rows.iter().any(|r| r.verified == "no") {
        return Err(Failure { code: 1, message: "some merges failed verification".into() });
    }
    Ok(())
}
