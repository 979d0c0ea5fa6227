//! Linear instruction-to-resource estimation, least-squares fitting and the
//! improvement metrics.

use std::fmt;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::ir::{IrFunction, Opcode};

/// Coefficients for the three FPGA resources.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Coeffs {
    pub lut: f64,
    pub ff: f64,
    pub dsp: f64,
}

impl Coeffs {
    pub const fn new(lut: f64, ff: f64, dsp: f64) -> Self {
        Coeffs { lut, ff, dsp }
    }

    fn get(&self, k: usize) -> f64 {
        [self.lut, self.ff, self.dsp][k]
    }

    fn set(&mut self, k: usize, v: f64) {
        *[&mut self.lut, &mut self.ff, &mut self.dsp][k] = v;
    }
}

/// Coefficients shipped for opcodes the published table does not cover.
pub const NON_PAPER_DEFAULT: Coeffs = Coeffs::new(10.0, 10.0, 0.0);

/// Published per-instruction weights (LUT, FF, DSP), DSPs as 1/N ratios.
pub const TABLE1: [(Opcode, Coeffs); 6] = [
    (Opcode::Load, Coeffs::new(19.0, 21.0, 1.0 / 44.0)),
    (Opcode::Store, Coeffs::new(37.0, 16.0, 0.0)),
    (Opcode::Phi, Coeffs::new(15.0, 19.0, 1.0 / 197.0)),
    (Opcode::Br, Coeffs::new(133.0, 51.0, 1.0 / 6.0)),
    (Opcode::Alloca, Coeffs::new(120.0, 0.0, 0.0)),
    (Opcode::Select, Coeffs::new(65.0, 64.0, 1.0 / 4.0)),
];

/// Opcodes that take the branch row of the table.
pub fn table_row(op: Opcode) -> Opcode {
    match op {
        Opcode::CondBr | Opcode::Switch => Opcode::Br,
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResourceWeights {
    pub per_opcode: [Coeffs; Opcode::COUNT],
    pub intercept: Coeffs,
}

impl Default for ResourceWeights {
    fn default() -> Self {
        ResourceWeights::table1()
    }
}

impl ResourceWeights {
    /// The published table; conditional branches and switches use the
    /// branch row, opcodes outside the table [`NON_PAPER_DEFAULT`].
    pub fn table1() -> Self {
        let mut per_opcode = [NON_PAPER_DEFAULT; Opcode::COUNT];
        for &op in Opcode::ALL {
            if let Some((_, c)) = TABLE1.iter().find(|(o, _)| *o == table_row(op)) {
                per_opcode[op.index()] = *c;
            }
        }
        ResourceWeights {
            per_opcode,
            intercept: Coeffs::default(),
        }
    }

    pub fn zero() -> Self {
        ResourceWeights {
            per_opcode: [Coeffs::default(); Opcode::COUNT],
            intercept: Coeffs::default(),
        }
    }

    pub fn get(&self, op: Opcode) -> Coeffs {
        self.per_opcode[op.index()]
    }

    pub fn set(&mut self, op: Opcode, c: Coeffs) {
        self.per_opcode[op.index()] = c;
    }

    /// Line format: `#intercept lut ff dsp`, then `opcode lut ff dsp`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# cgfm resource weights: opcode lut ff dsp\n");
        s.push_str("# opcodes outside load/store/phi/br/condbr/switch/alloca/select use fallback defaults\n");
        let c = self.intercept;
        s.push_str(&format!("#intercept {} {} {}\n", c.lut, c.ff, c.dsp));
        for &op in Opcode::ALL {
            let c = self.get(op);
            s.push_str(&format!("{} {} {} {}\n", op.name(), c.lut, c.ff, c.dsp));
        }
        s
    }

    /// Parses the line format. Missing opcodes keep their Table 1 defaults.
    /// Numbers may be written as fractions (`1/44`).
    pub fn parse(text: &str) -> Result<Self, WeightsError> {
        let mut w = ResourceWeights::table1();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            let (is_intercept, rest) = match line.strip_prefix("#intercept") {
                Some(r) => (true, r),
                None if line.is_empty() || line.starts_with('#') => continue,
                None => (false, line),
            };
            let fields: Vec<&str> = rest.split_whitespace().collect();
            let bad = |msg: &str| WeightsError { line: n + 1, message: msg.to_string() };
            let (target, nums) = if is_intercept {
                (None, &fields[..])
            } else {
                let op = Opcode::from_name(fields[0]).ok_or_else(|| bad(&format!("unknown opcode '{}'", fields[0])))?;
                (Some(op), &fields[1..])
            };
            if nums.len() != 3 {
                return Err(bad("expected three numbers"));
            }
            let mut c = Coeffs::default();
            for (k, t) in nums.iter().enumerate() {
                let v = parse_number(t).ok_or_else(|| bad(&format!("bad number '{t}'")))?;
                if !v.is_finite() {
                    return Err(bad("coefficients must be finite"));
                }
                c.set(k, v);
            }
            match target {
                Some(op) => w.set(op, c),
                None => w.intercept = c,
            }
        }
        Ok(w)
    }
}

fn parse_number(t: &str) -> Option<f64> {
    match t.split_once('/') {
        Some((a, b)) => Some(a.parse::<f64>().ok()? / b.parse::<f64>().ok()?),
        None => t.parse().ok(),
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("weights line {line}: {message}")]
pub struct WeightsError {
    pub line: usize,
    pub message: String,
}

/// Weights combining resources into the energy proxy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyWeights {
    pub lut: f64,
    pub ff: f64,
    pub dsp: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights { lut: 1.0, ff: 1.0, dsp: 100.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResourceEstimate {
    pub lut: f64,
    pub ff: f64,
    pub dsp: f64,
    pub energy_proxy: f64,
}

impl fmt::Display for ResourceEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lut={:.3} ff={:.3} dsp={:.4} energy_proxy={:.3}",
            self.lut, self.ff, self.dsp, self.energy_proxy
        )
    }
}

pub type OpcodeCounts = [u32; Opcode::COUNT];

pub fn estimate_counts(counts: &OpcodeCounts, w: &ResourceWeights, e: &EnergyWeights) -> ResourceEstimate {
    let mut r = [w.intercept.lut, w.intercept.ff, w.intercept.dsp];
    for (k, slot) in r.iter_mut().enumerate() {
        for (i, &n) in counts.iter().enumerate() {
            *slot += n as f64 * w.per_opcode[i].get(k);
        }
        *slot = slot.max(0.0);
    }
    ResourceEstimate {
        lut: r[0],
        ff: r[1],
        dsp: r[2],
        energy_proxy: e.lut * r[0] + e.ff * r[1] + e.dsp * r[2],
    }
}

pub fn estimate_with(f: &IrFunction, w: &ResourceWeights, e: &EnergyWeights) -> ResourceEstimate {
    estimate_counts(&f.opcode_counts(), w, e)
}

/// Estimate under the default energy weights.
pub fn estimate_resources(f: &IrFunction, w: &ResourceWeights) -> ResourceEstimate {
    estimate_with(f, w, &EnergyWeights::default())
}

/// Per-opcode `count_f1 + count_f2 - count_merged`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SavingsVector(pub [i64; Opcode::COUNT]);

impl SavingsVector {
    pub fn get(&self, op: Opcode) -> i64 {
        self.0[op.index()]
    }

    pub fn total(&self) -> i64 {
        self.0.iter().sum()
    }

    /// Nonzero entries as `opcode:delta`, in opcode order.
    pub fn compact(&self) -> String {
        let parts: Vec<String> = Opcode::ALL
            .iter()
            .filter(|op| self.get(**op) != 0)
            .map(|op| format!("{}:{}", op.name(), self.get(*op)))
            .collect();
        parts.join(",")
    }
}

pub fn savings_vector(f1: &IrFunction, f2: &IrFunction, merged: &IrFunction) -> SavingsVector {
    let (a, b, m) = (f1.opcode_counts(), f2.opcode_counts(), merged.opcode_counts());
    let mut v = [0i64; Opcode::COUNT];
    for i in 0..Opcode::COUNT {
        v[i] = a[i] as i64 + b[i] as i64 - m[i] as i64;
    }
    SavingsVector(v)
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

/// `((c_i + c_j) / c_merged - 1) * 100`.
pub fn improvement(c_base_i: f64, c_base_j: f64, c_merged: f64) -> Result<f64, MetricError> {
    if c_merged <= 0.0 {
        return Err(MetricError::NonPositive("merged cost"));
    }
    Ok((c_base_i + c_base_j - c_merged) * 100.0 / c_merged)
}

/// `(c_concat / c_cgma - 1) * 100`.
pub fn cgma_improvement(c_concat: f64, c_cgma: f64) -> Result<f64, MetricError> {
    if c_cgma <= 0.0 {
        return Err(MetricError::NonPositive("merged accelerator cost"));
    }
    Ok((c_concat - c_cgma) * 100.0 / c_cgma)
}

/// Mean relative slowdown of both functions on the merged design, in percent.
pub fn latency_overhead(l_merged_i: f64, l_mono_i: f64, l_merged_j: f64, l_mono_j: f64) -> Result<f64, MetricError> {
    if l_mono_i <= 0.0 || l_mono_j <= 0.0 {
        return Err(MetricError::NonPositive("monolithic latency"));
    }
    let base = 2.0 * l_mono_i * l_mono_j;
    Ok((l_merged_i * l_mono_j + l_merged_j * l_mono_i - base) * 100.0 / base)
}

/// One function's opcode counts and measured resources.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRow {
    pub features: Vec<f64>,
    pub lut: f64,
    pub ff: f64,
    pub dsp: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitDataset {
    pub columns: Vec<Opcode>,
    pub rows: Vec<FitRow>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("missing column '{0}'")]
    MissingColumn(&'static str),
    #[error("row {row}: bad number '{value}'")]
    BadNumber { row: usize, value: String },
}

const TARGETS: [&str; 4] = ["lut", "ff", "dsp", "energy"];

impl FitDataset {
    /// A dataset over every opcode.
    pub fn new() -> Self {
        FitDataset {
            columns: Opcode::ALL.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push_counts(&mut self, counts: &OpcodeCounts, measured: ResourceEstimate) {
        let features = self.columns.iter().map(|op| counts[op.index()] as f64).collect();
        self.rows.push(FitRow {
            features,
            lut: measured.lut,
            ff: measured.ff,
            dsp: measured.dsp,
            energy: measured.energy_proxy,
        });
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<&str> = self.columns.iter().map(|o| o.name()).chain(TARGETS).collect();
        out.write_record(&header)?;
        for r in &self.rows {
            let rec: Vec<String> = r
                .features
                .iter()
                .chain([&r.lut, &r.ff, &r.dsp, &r.energy])
                .map(|v| v.to_string())
                .collect();
            out.write_record(&rec)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, DatasetError> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let mut columns = Vec::new();
        let mut col_idx = Vec::new();
        let mut target_idx = [None; 4];
        for (i, h) in header.iter().enumerate() {
            let h = h.trim();
            if let Some(t) = TARGETS.iter().position(|t| *t == h) {
                target_idx[t] = Some(i);
            } else {
                columns.push(Opcode::from_name(h).ok_or_else(|| DatasetError::UnknownColumn(h.to_string()))?);
                col_idx.push(i);
            }
        }
        let mut ti = [0usize; 4];
        for k in 0..4 {
            ti[k] = target_idx[k].ok_or(DatasetError::MissingColumn(TARGETS[k]))?;
        }
        let mut rows = Vec::new();
        for (n, rec) in rd.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64, DatasetError> {
                let s = rec.get(i).unwrap_or("").trim();
                s.parse().map_err(|_| DatasetError::BadNumber { row: n + 1, value: s.to_string() })
            };
            let features = col_idx.iter().map(|&i| num(i)).collect::<Result<_, _>>()?;
            rows.push(FitRow {
                features,
                lut: num(ti[0])?,
                ff: num(ti[1])?,
                dsp: num(ti[2])?,
                energy: num(ti[3])?,
            });
        }
        Ok(FitDataset { columns, rows })
    }
}

impl Default for FitDataset {
    fn default() -> Self {
        FitDataset::new()
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum FitError {
    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("need at least {needed} rows, have {have}")]
    TooFewRows { needed: usize, have: usize },
}

/// Full least-squares result. Standard errors follow the weight layout;
/// they are 0 when the fit has no residual degrees of freedom.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub weights: ResourceWeights,
    pub std_errors: ResourceWeights,
    /// Residual sum of squares per resource.
    pub rss: [f64; 3],
}

/// Ordinary least squares per resource with an intercept, via the normal
/// equations. Opcodes that are not dataset columns get zero coefficients.
pub fn fit_ols(d: &FitDataset) -> Result<OlsFit, FitError> {
    let p = d.columns.len() + 1;
    let n = d.rows.len();
    if n < p {
        return Err(FitError::TooFewRows { needed: p, have: n });
    }
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { d.rows[i].features[j - 1] });
    let xtx = x.transpose() * &x;

    // relative pivot test on the LU of X'X; columns are never permuted, so a
    // vanishing pivot names a column spanned by the ones before it
    let lu = xtx.clone().lu();
    let u = lu.u();
    let scale = (0..p).map(|j| xtx[(j, j)].abs()).fold(0.0f64, f64::max).max(1.0);
    let collinear: Vec<String> = (0..p)
        .filter(|&j| u[(j, j)].abs() <= 1e-10 * scale)
        .map(|j| if j == 0 { "intercept".to_string() } else { d.columns[j - 1].name().to_string() })
        .collect();
    if !collinear.is_empty() {
        return Err(FitError::RankDeficient(collinear));
    }
    let inv = lu.try_inverse().ok_or_else(|| FitError::RankDeficient(vec!["(singular)".into()]))?;

    let mut weights = ResourceWeights::zero();
    let mut std_errors = ResourceWeights::zero();
    let mut rss = [0.0; 3];
    for k in 0..3 {
        let y = DVector::from_fn(n, |i, _| [d.rows[i].lut, d.rows[i].ff, d.rows[i].dsp][k]);
        let beta = &inv * (x.transpose() * &y);
        let resid = &y - &x * &beta;
        rss[k] = resid.norm_squared();
        let dof = n - p;
        let sigma2 = if dof > 0 { rss[k] / dof as f64 } else { 0.0 };
        for j in 0..p {
            let se = (sigma2 * inv[(j, j)]).max(0.0).sqrt();
            if j == 0 {
                weights.intercept.set(k, beta[0]);
                std_errors.intercept.set(k, se);
            } else {
                let op = d.columns[j - 1];
                weights.per_opcode[op.index()].set(k, beta[j]);
                std_errors.per_opcode[op.index()].set(k, se);
            }
        }
    }
    Ok(OlsFit { weights, std_errors, rss })
}

pub fn fit_weights(d: &FitDataset) -> Result<ResourceWeights, FitError> {
    fit_ols(d).map(|f| f.weights)
}
