macro_rules! out {
    ($($t:tt)*) => {
        $crate::common::emit(&format!($($t)*))
    };
}

macro_rules! outln {
    ($($t:tt)*) => {
        $crate::common::emit(&format!("{}\n", format_args!($($t)*)))
    };
}

mod batch;
mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cgfm::align::{nw_align, AlignmentModel, ModelKind};
use cgfm::codegen::{install_merged, merge_parameters, MergeMode, Signatures};
use cgfm::costmodel::{estimate_resources, improvement, ResourceWeights};
use cgfm::ensemble::{synthetic_candidates, synthetic_dataset, train_forest, TrainConfig, TrainingSet};
use cgfm::interp::{differential_check, CheckConfig, Subject};
use cgfm::ir::print_module;
use cgfm::linearize::{linearize, reg2mem};
use cgfm::par::Parallelism;
use cgfm::synth::SynthConfig;

use common::{combine, load_forest, load_module, load_weights, pick_pair, read_file, run_selection, write_file, Failure, Selector};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  verification failure (a differential check found a mismatch)
  2  usage error
  3  input error (unreadable file, parse or validation error, unmergeable pair, bad data)";

#[derive(Parser)]
#[command(name = "cgfm", version, about = "Coarse-grained function merging for HLS-style IR", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge two functions and write the resulting module.
    Merge(MergeArgs),
    /// Print the alignment of two linearized functions.
    Align(AlignArgs),
    /// Print the resource estimate of every function in a file.
    Estimate(EstimateArgs),
    /// Differentially check a merged function against its inputs.
    Verify(VerifyArgs),
    /// Grid-search a regression forest on a training CSV.
    Train(TrainArgs),
    /// Merge every function pair of a corpus and write a CSV report.
    #[command(after_help = batch::COLUMNS_HELP)]
    Batch(BatchArgs),
    /// Write a synthetic training CSV from generated function pairs.
    GenData(GenDataArgs),
}

fn parse_mode(s: &str) -> Result<MergeMode, String> {
    MergeMode::from_name(s).ok_or_else(|| format!("unknown mode '{s}' (ssa-global, nonssa-global, local, concat)"))
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    ModelKind::from_name(s).ok_or_else(|| format!("unknown model '{s}' (uniform, control, memory, arithmetic)"))
}

#[derive(Args, Clone)]
struct PairArgs {
    /// File holding the first function.
    a: PathBuf,
    /// File holding the second function (may equal A).
    b: PathBuf,
    /// First function; defaults to the first function of A.
    #[arg(long)]
    f1: Option<String>,
    /// Second function; defaults to the first function of B, or the second
    /// one when B is A.
    #[arg(long)]
    f2: Option<String>,
}

#[derive(Args, Clone)]
struct CheckArgs {
    /// Random trials per input function.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CheckArgs {
    fn config(&self) -> CheckConfig {
        CheckConfig { trials: self.trials, seed: self.seed, ..CheckConfig::default() }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectKind {
    /// A single alignment model (--model).
    Model,
    /// The candidate a regression forest predicts to save the most.
    Ensemble,
    /// The candidate with the lowest estimated energy proxy.
    Exhaustive,
}

#[derive(Args)]
struct MergeArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_parser = parse_mode, default_value = "ssa-global")]
    mode: MergeMode,
    #[arg(long, value_enum, default_value = "model")]
    select: SelectKind,
    /// Alignment model for --select model.
    #[arg(long, value_parser = parse_model, default_value = "uniform")]
    model: ModelKind,
    /// Forest model file, required by --select ensemble.
    #[arg(long)]
    forest: Option<PathBuf>,
    /// Resource weights file; defaults to the built-in table.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Output IR file; the module is printed to stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write the provenance dump here.
    #[arg(long)]
    provenance: Option<PathBuf>,
    /// Redirect callers to the merged function and drop both inputs.
    #[arg(long)]
    install: bool,
    #[command(flatten)]
    check: CheckArgs,
    #[arg(long)]
    no_verify: bool,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_parser = parse_model, default_value = "uniform")]
    model: ModelKind,
    /// Include phis in the sequences.
    #[arg(long)]
    phis: bool,
    /// Demote phis to memory first (implies --phis).
    #[arg(long)]
    demote: bool,
}

#[derive(Args)]
struct EstimateArgs {
    file: PathBuf,
    /// Only this function.
    #[arg(long)]
    function: Option<String>,
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    a: PathBuf,
    b: PathBuf,
    /// File holding the merged function.
    merged: PathBuf,
    #[arg(long)]
    f1: Option<String>,
    #[arg(long)]
    f2: Option<String>,
    /// Merged function; defaults to the first `merged.*` function of the file.
    #[arg(long = "merged-name")]
    merged_name: Option<String>,
    #[command(flatten)]
    check: CheckArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Training CSV: opcode columns, optional lut/ff/dsp/energy, and target.
    #[arg(long)]
    data: PathBuf,
    /// Model file to write.
    #[arg(short, long)]
    output: PathBuf,
    /// Cross-validation report; defaults to <output>.cv.csv.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum depths to search (default: ten equidistant values in 1..=30).
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// Estimator counts to search (default: ten equidistant values in 10..=250).
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<usize>>,
    /// Feature fractions to search (default: 0.125,0.25,0.5).
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<f64>>,
}

#[derive(Args)]
struct BatchArgs {
    /// Directory of .ir files.
    corpus: PathBuf,
    /// Pair functions across files too, not only within each file.
    #[arg(long)]
    all_pairs: bool,
    #[arg(long, value_parser = parse_mode, value_delimiter = ',', default_value = "ssa-global")]
    modes: Vec<MergeMode>,
    #[arg(long, value_enum, default_value = "exhaustive")]
    select: SelectKind,
    #[arg(long, value_parser = parse_model, default_value = "uniform")]
    model: ModelKind,
    #[arg(long)]
    forest: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// CSV report; printed to stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    check: CheckArgs,
    #[arg(long)]
    no_verify: bool,
    /// Also merge functions that are identical up to their name.
    #[arg(long)]
    allow_identical: bool,
}

#[derive(Args)]
struct GenDataArgs {
    /// Number of generated pairs.
    #[arg(long, default_value_t = 250)]
    pairs: u64,
    /// Seed of the first pair.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_mode, default_value = "ssa-global")]
    mode: MergeMode,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

fn selector(kind: SelectKind, model: ModelKind, forest: Option<&Path>) -> Result<Selector, Failure> {
    Ok(match kind {
        SelectKind::Model => Selector::Model(model),
        SelectKind::Exhaustive => Selector::Exhaustive,
        SelectKind::Ensemble => {
            let path = forest.ok_or_else(|| Failure::usage("--select ensemble needs --forest"))?;
            Selector::Ensemble(Box::new(load_forest(path)?))
        }
    })
}

fn weights(path: Option<&Path>) -> Result<ResourceWeights, Failure> {
    path.map_or_else(|| Ok(ResourceWeights::default()), load_weights)
}

fn cmd_merge(a: MergeArgs) -> Result<(), Failure> {
    let sel = selector(a.select, a.model, a.forest.as_deref())?;
    if a.mode == MergeMode::Concat && !matches!(sel, Selector::Model(_)) {
        return Err(Failure::usage("concat mode has no candidates to select from"));
    }
    let w = weights(a.weights.as_deref())?;
    let (module, f1, f2) = pick_pair(&a.pair.a, &a.pair.b, a.pair.f1.as_deref(), a.pair.f2.as_deref())?;
    let (fa, fb) = (module.function(&f1).unwrap(), module.function(&f2).unwrap());
    let picked = run_selection(fa, fb, a.mode, &sel, &w, &Signatures::of(&module)).map_err(Failure::input)?;
    let r = &picked.result;

    let mut report = String::new();
    report.push_str(&format!("merged @{}\nmode {}\nselector {}\nmodel {}\n", r.merged.name, a.mode, sel.name(), picked.label));
    report.push_str(&format!("savings {}\n", r_savings(fa, fb, &r.merged)));
    if let Some(est) = &picked.estimates {
        for (k, e) in est.iter().enumerate() {
            report.push_str(&format!("candidate {} {e}\n", cgfm::ensemble::MODELS[k]));
        }
    }
    let (e1, e2, em) = (estimate_resources(fa, &w), estimate_resources(fb, &w), estimate_resources(&r.merged, &w));
    report.push_str(&format!("estimate @{} {e1}\nestimate @{} {e2}\nestimate merged {em}\n", fa.name, fb.name));
    match improvement(e1.energy_proxy, e2.energy_proxy, em.energy_proxy) {
        Ok(v) => report.push_str(&format!("energy_improvement_pct {v:.4}\n")),
        Err(e) => report.push_str(&format!("energy_improvement_pct n/a ({e})\n")),
    }

    let mut failed = None;
    if a.no_verify {
        report.push_str("verified skipped\n");
    } else {
        let attached = r.attach(&module);
        let rep = differential_check(
            Subject::new(&module, &f1),
            Subject::new(&module, &f2),
            Subject::new(&attached, &r.merged.name),
            &r.param_map,
            &a.check.config(),
        );
        if rep.passed() {
            report.push_str(&format!("verified yes ({} trials, seed {})\n", rep.trials, a.check.seed));
            if let Some(l) = rep.latency_overhead() {
                report.push_str(&format!("latency_overhead_pct {l:.4}\n"));
            }
        } else {
            report.push_str(&format!("verified no: {} mismatches\n", rep.mismatches.len()));
            for m in &rep.mismatches {
                report.push_str(&format!("mismatch {m}\n"));
            }
            failed = Some(rep.mismatching_seeds());
        }
    }

    let mut out = module.clone();
    if a.install {
        install_merged(&mut out, r, &f1, &f2);
    } else {
        out = r.attach(&out);
    }
    let text = print_module(&out);
    if let Some(p) = &a.provenance {
        write_file(p, &r.provenance_dump())?;
    }
    match &a.output {
        Some(p) => {
            write_file(p, &text)?;
            out!("{report}");
        }
        None => {
            out!("{text}");
            eprint!("{report}");
        }
    }
    match failed {
        Some(seeds) => Err(Failure::verification(seeds)),
        None => Ok(()),
    }
}

fn r_savings(f1: &cgfm::ir::IrFunction, f2: &cgfm::ir::IrFunction, m: &cgfm::ir::IrFunction) -> String {
    let v = cgfm::costmodel::savings_vector(f1, f2, m);
    format!("total={} {}", v.total(), v.compact())
}

fn cmd_align(a: AlignArgs) -> Result<(), Failure> {
    let (module, f1, f2) = pick_pair(&a.pair.a, &a.pair.b, a.pair.f1.as_deref(), a.pair.f2.as_deref())?;
    let (mut fa, mut fb) = (module.function(&f1).unwrap().clone(), module.function(&f2).unwrap().clone());
    if a.demote {
        fa = reg2mem(&fa);
        fb = reg2mem(&fb);
    }
    let phis = a.phis || a.demote;
    let (x, y) = (linearize(&fa, phis), linearize(&fb, phis));
    let al = nw_align(&x, &y, &AlignmentModel::new(a.model));
    out!("{}", al.dump(&x, &y));
    outln!("score {}", al.score);
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> Result<(), Failure> {
    let w = weights(a.weights.as_deref())?;
    let m = load_module(&a.file)?;
    if let Some(name) = &a.function {
        if m.function(name).is_none() {
            return Err(Failure::input(format!("{}: no function @{name}", a.file.display())));
        }
    }
    for f in m.functions.iter().filter(|f| a.function.as_ref().is_none_or(|n| *n == f.name)) {
        outln!("@{} {}", f.name, estimate_resources(f, &w));
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    let (module, f1, f2) = pick_pair(&a.a, &a.b, a.f1.as_deref(), a.f2.as_deref())?;
    let merged_file = load_module(&a.merged)?;
    let name = match &a.merged_name {
        Some(n) => n.clone(),
        None => merged_file
            .functions
            .iter()
            .find(|f| f.name.starts_with("merged."))
            .map(|f| f.name.clone())
            .ok_or_else(|| Failure::usage(format!("{}: no merged.* function; pass --merged-name", a.merged.display())))?,
    };
    let all = combine(&module, &merged_file).map_err(|e| Failure::input(format!("{}: {e}", a.merged.display())))?;
    let m = all.function(&name).ok_or_else(|| Failure::input(format!("{}: no function @{name}", a.merged.display())))?;
    let pm = merge_parameters(module.function(&f1).unwrap(), module.function(&f2).unwrap());
    let want: Vec<_> = pm.params.iter().map(|p| p.ty).collect();
    let have: Vec<_> = m.params.iter().map(|p| p.ty).collect();
    if want != have {
        return Err(Failure::input(format!(
            "@{name} takes ({}) but merging @{f1} and @{f2} gives ({})",
            join(&have),
            join(&want)
        )));
    }
    let rep = differential_check(
        Subject::new(&all, &f1),
        Subject::new(&all, &f2),
        Subject::new(&all, &name),
        &pm,
        &a.check.config(),
    );
    outln!("trials {} seed {} mismatches {}", rep.trials, a.check.seed, rep.mismatches.len());
    for m in &rep.mismatches {
        outln!("mismatch {m}");
    }
    if rep.passed() {
        Ok(())
    } else {
        Err(Failure::verification(rep.mismatching_seeds()))
    }
}

fn join(t: &[cgfm::ir::IrType]) -> String {
    t.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let text = read_file(&a.data)?;
    let d = TrainingSet::read_csv(text.as_bytes()).map_err(|e| Failure::input(format!("{}: {e}", a.data.display())))?;
    let mut cfg = TrainConfig { cv_folds: a.folds, seed: a.seed, ..TrainConfig::default() };
    if let Some(v) = a.depths {
        cfg.max_depths = v;
    }
    if let Some(v) = a.estimators {
        cfg.n_estimators = v;
    }
    if let Some(v) = a.features {
        cfg.max_features = v;
    }
    let (model, report) = train_forest(&d, &cfg).map_err(|e| Failure::input(format!("{}: {e}", a.data.display())))?;
    write_file(&a.output, &model.save())?;
    let report_path = a.report.unwrap_or_else(|| {
        let mut p = a.output.clone().into_os_string();
        p.push(".cv.csv");
        PathBuf::from(p)
    });
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(|e| Failure::input(e.to_string()))?;
    write_file(&report_path, &String::from_utf8_lossy(&buf))?;
    let best = report.best();
    outln!(
        "rows {} grid {} best max_depth={} n_estimators={} max_features={} cv_mse={:.6}",
        d.len(),
        report.points.len(),
        best.params.max_depth,
        best.params.n_estimators,
        best.params.max_features,
        best.mse
    );
    Ok(())
}

fn cmd_gen_data(a: GenDataArgs) -> Result<(), Failure> {
    if a.mode == MergeMode::Concat {
        return Err(Failure::usage("concat mode has no candidates"));
    }
    let w = weights(a.weights.as_deref())?;
    let sets = synthetic_candidates(a.seed..a.seed + a.pairs, &SynthConfig::default(), a.mode, Parallelism::default());
    let d = synthetic_dataset(&sets, &w);
    let mut buf = Vec::new();
    d.write_csv(&mut buf).map_err(|e| Failure::input(e.to_string()))?;
    write_file(&a.output, &String::from_utf8_lossy(&buf))?;
    outln!("pairs {} rows {}", sets.len(), d.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Merge(a) => cmd_merge(a),
        Command::Align(a) => cmd_align(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Train(a) => cmd_train(a),
        Command::Batch(a) => batch::run(a),
        Command::GenData(a) => cmd_gen_data(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("cgfm: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
