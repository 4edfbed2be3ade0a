//! Command-line front end: `simulate`, `bispec`, `pac`, `features`, `schema`.
//!
//! Every command is described by a [`RunConfig`]; each output file carries
//! the SHA-256 of that configuration's JSON as its provenance.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use num_complex::Complex64;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arrayfile::{self, ArrayFile, Axis, Data, Dtype};
use crate::demod::{design_bank_spaced, BandSpec, Signal, WindowKind};
use crate::error::{invalid, Error, Result};
use crate::features::{analyze, FeatureConfig, FeatureReport, Thresholds};
use crate::pac::{phase_power_coherence, variable_bandwidth_pac, Envelope, PacGrid, Scaling};
use crate::polyspec::{
    bias_correct, bispectrum_of, normalize, Bicoherence, BispecRequest, Domain, EstimatorKind, Normalization, Variant,
};
use crate::simgen::{gen, SimRecipe};

#[derive(Parser, Debug)]
#[command(name = "bicoh", version, about = "Bispectral analysis and phase-amplitude coupling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Render a recipe to a signal file.
    Simulate(SimulateArgs),
    /// Bicoherence of a signal.
    Bispec(BispecArgs),
    /// Phase-power coherence of a signal.
    Pac(PacArgs),
    /// Region scores, lattice score and delay of a bicoherence file.
    Features(FeaturesArgs),
    /// Print a JSON schema.
    Schema(SchemaArgs),
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl From<Precision> for Dtype {
    fn from(p: Precision) -> Dtype {
        match p {
            Precision::F32 => Dtype::F32,
            Precision::F64 => Dtype::F64,
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    #[default]
    Auto,
    Csv,
    Raw,
    Array,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct InputArgs {
    /// Signal file: CSV (t, value), raw little-endian f32, or an array file stem.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    #[serde(default)]
    pub format: InputFormat,
    /// Sampling rate for raw input.
    #[arg(long)]
    #[serde(default)]
    pub fs: Option<f64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SimulateArgs {
    pub recipe: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Override the recipe seed.
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    #[serde(default)]
    pub precision: Precision,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').or_else(|| s.split_once(':')).ok_or("expected LO,HI")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Bbb,
    Nnb,
    Bbn,
    Nbb,
}

impl From<KindArg> for Variant {
    fn from(k: KindArg) -> Variant {
        match k {
            KindArg::Bbb => Variant::Bbb,
            KindArg::Nnb => Variant::Nnb,
            KindArg::Bbn => Variant::Bbn,
            KindArg::Nbb => Variant::Nbb,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum NormArg {
    Rms,
    Magsum,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Normalization {
        match n {
            NormArg::Rms => Normalization::Rms,
            NormArg::Magsum => Normalization::MagnitudeSum,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum WindowArg {
    Gaussian,
    Hann,
}

impl From<WindowArg> for WindowKind {
    fn from(w: WindowArg) -> WindowKind {
        match w {
            WindowArg::Gaussian => WindowKind::Gaussian,
            WindowArg::Hann => WindowKind::Hann,
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BispecArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Bbb)]
    pub kind: KindArg,
    /// Narrow-leg bandwidth, Hz.
    #[arg(long, default_value_t = 1.0)]
    pub bw_narrow: f64,
    /// Broad-leg bandwidth (the only one used by bbb), Hz.
    #[arg(long, default_value_t = 2.0)]
    pub bw_broad: f64,
    #[arg(long, value_enum, default_value_t = NormArg::Magsum)]
    pub norm: NormArg,
    #[arg(long, default_value_t = false)]
    pub bias_correct: bool,
    /// Frequency range of both axes, LO,HI in Hz. Defaults to 0 up to Nyquist.
    #[arg(long, value_parser = parse_range)]
    #[serde(default)]
    pub range: Option<(f64, f64)>,
    /// Separate range for the second axis.
    #[arg(long, value_parser = parse_range)]
    #[serde(default)]
    pub range2: Option<(f64, f64)>,
    /// Axis spacing, Hz. Defaults to half of each leg's bandwidth.
    #[arg(long)]
    #[serde(default)]
    pub step: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub hop: Option<usize>,
    #[arg(long, value_enum, default_value_t = WindowArg::Gaussian)]
    pub window: WindowArg,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    #[serde(default)]
    pub precision: Precision,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PacArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Phase-providing range, Hz.
    #[arg(long, value_parser = parse_range, default_value = "2,14")]
    pub theta_range: (f64, f64),
    #[arg(long, default_value_t = 0.5)]
    pub theta_step: f64,
    /// Amplitude-providing range, Hz.
    #[arg(long, value_parser = parse_range, default_value = "30,120")]
    pub gamma_range: (f64, f64),
    #[arg(long, default_value_t = 5.0)]
    pub gamma_step: f64,
    #[arg(long, default_value_t = 1.0)]
    pub theta_bw: f64,
    #[arg(long, default_value_t = 40.0, conflicts_with = "proportional")]
    pub gamma_bw: f64,
    /// Scale each row's gamma bandwidth to RATIO times its theta.
    #[arg(long)]
    #[serde(default)]
    pub proportional: Option<f64>,
    #[arg(long, value_enum, default_value_t = NormArg::Magsum)]
    pub norm: NormArg,
    #[arg(long, default_value_t = false)]
    pub bias_correct: bool,
    /// Use the envelope amplitude rather than power.
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    pub amplitude: bool,
    #[arg(long)]
    #[serde(default)]
    pub hop: Option<usize>,
    #[arg(long, value_enum, default_value_t = WindowArg::Gaussian)]
    pub window: WindowArg,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    #[serde(default)]
    pub precision: Precision,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FeaturesArgs {
    /// Bicoherence array file stem written by `bispec` or `pac`.
    pub input: PathBuf,
    #[arg(long, value_parser = parse_range)]
    pub so_range: (f64, f64),
    #[arg(long, value_parser = parse_range)]
    pub fo_range: (f64, f64),
    #[arg(long)]
    #[serde(default)]
    pub fundamental: Option<f64>,
    /// Thresholds JSON replacing the bundled defaults.
    #[arg(long)]
    #[serde(default)]
    pub thresholds: Option<PathBuf>,
    /// Output stem: `<out>_report.json` and the `<out>_irf` array file.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SchemaName {
    Recipe,
    RunConfig,
    FeatureReport,
    ArrayHeader,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SchemaArgs {
    #[arg(value_enum)]
    pub name: SchemaName,
}

/// A complete, reproducible description of one command run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RunConfig {
    pub tool_version: String,
    #[serde(flatten)]
    pub command: Command,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig { tool_version: env!("CARGO_PKG_VERSION").into(), command }
    }

    pub fn provenance(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

// ---------------------------------------------------------------------------
// Signal input
// ---------------------------------------------------------------------------

pub fn read_signal(args: &InputArgs) -> Result<Signal> {
    let path = &args.input;
    let format = match args.format {
        InputFormat::Auto => {
            if !path.exists() && !arrayfile::exists(path) {
                return Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("{} not found", path.display())).into());
            }
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if ext.eq_ignore_ascii_case("csv") {
                InputFormat::Csv
            } else if arrayfile::exists(path) {
                InputFormat::Array
            } else if args.fs.is_some() {
                InputFormat::Raw
            } else {
                return invalid(format!("cannot tell the format of {}; pass --format", path.display()));
            }
        }
        f => f,
    };
    match format {
        InputFormat::Csv => read_csv(path),
        InputFormat::Raw => {
            let fs = args.fs.ok_or_else(|| Error::InvalidParameter("raw input needs --fs".into()))?;
            read_raw_f32(path, fs)
        }
        InputFormat::Array => read_array_signal(path),
        InputFormat::Auto => unreachable!("resolved above"),
    }
}

/// Two columns, time in seconds and value. Lines starting with `#` and a
/// non-numeric header line are skipped.
pub fn read_csv(path: &Path) -> Result<Signal> {
    let text = fs::read_to_string(path)?;
    let mut t = Vec::new();
    let mut x = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split([',', ';', '\t']).map(str::trim);
        let (a, b) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(ti), Ok(xi)) => {
                t.push(ti);
                x.push(xi);
            }
            _ if t.is_empty() => continue,
            _ => return Err(Error::Format(format!("{}:{}: expected two numbers", path.display(), line_no + 1))),
        }
    }
    if t.len() < 2 {
        return Err(Error::Format("CSV needs at least two samples".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Format("time column must increase".into()));
    }
    for (i, w) in t.windows(2).enumerate() {
        let d = w[1] - w[0];
        if ((d - dt) / dt).abs() > 1e-6 {
            return Err(Error::Format(format!("non-uniform sampling at row {}: dt {d} vs {dt}", i + 1)));
        }
    }
    Signal::new(x, 1.0 / dt)
}

pub fn read_raw_f32(path: &Path, fs: f64) -> Result<Signal> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format("raw f32 input length is not a multiple of 4".into()));
    }
    let x = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
    Signal::new(x, fs)
}

pub fn read_array_signal(path: &Path) -> Result<Signal> {
    let f = ArrayFile::read(path)?;
    let Data::Real(x) = f.data else {
        return Err(Error::Format("signal file must be real-valued".into()));
    };
    if f.header.shape.len() != 1 {
        return Err(Error::Format("signal file must be one-dimensional".into()));
    }
    let fs = match f.header.meta.get("fs").and_then(|v| v.as_f64()) {
        Some(fs) => fs,
        None => match &f.header.axes[0].coords {
            arrayfile::Coords::Uniform { step, .. } if *step > 0.0 => 1.0 / step,
            _ => return Err(Error::Format("signal file has no sampling rate".into())),
        },
    };
    Signal::new(x, fs)
}

pub fn signal_file(sig: &Signal, dtype: Dtype) -> Result<ArrayFile> {
    let n = sig.len();
    let axis = Axis {
        name: "time".into(),
        unit: "s".into(),
        coords: arrayfile::Coords::Uniform { start: 0.0, step: 1.0 / sig.fs(), len: n },
    };
    Ok(ArrayFile::new(Data::Real(sig.samples().to_vec()), vec![axis], dtype)?
        .with_meta(serde_json::json!({ "kind": "signal", "fs": sig.fs() })))
}

// ---------------------------------------------------------------------------
// Bicoherence files
// ---------------------------------------------------------------------------

/// What a bicoherence file needs beyond its values to be analysed again.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PlaneMeta {
    pub kind: EstimatorKind,
    pub power: u32,
    pub normalization: Normalization,
    pub bias_corrected: bool,
    pub domain: Domain,
    pub fs: f64,
    pub hop: usize,
    pub leg_templates: [BandSpec; 3],
    #[serde(default)]
    pub scaling: Option<Scaling>,
}

impl PlaneMeta {
    pub fn of(b: &Bicoherence) -> Self {
        PlaneMeta {
            kind: b.kind,
            power: b.power,
            normalization: b.normalization,
            bias_corrected: b.bias_corrected,
            domain: b.domain,
            fs: b.fs,
            hop: b.hop,
            leg_templates: b.leg_templates.clone(),
            scaling: None,
        }
    }
}

/// Writes `<stem>` (complex β) and `<stem>_mag` (signed magnitude).
pub fn write_bicoherence(b: &Bicoherence, stem: &Path, names: [&str; 2], dtype: Dtype, config: &RunConfig, scaling: Option<Scaling>) -> Result<()> {
    let mut meta = PlaneMeta::of(b);
    meta.scaling = scaling;
    let meta_json = serde_json::to_value(&meta)?;
    let axes = vec![Axis::new(names[0], "Hz", &b.axis1), Axis::new(names[1], "Hz", &b.axis2)];
    let valid: Vec<bool> = b.valid.iter().copied().collect();
    let hash = config.provenance();
    ArrayFile::new(Data::Complex(b.beta.iter().copied().collect()), axes.clone(), dtype)?
        .with_mask(&valid)?
        .with_provenance(hash.clone())
        .with_meta(meta_json.clone())
        .write(stem)?;
    ArrayFile::new(Data::Real(b.magnitude.iter().copied().collect()), axes, dtype)?
        .with_mask(&valid)?
        .with_provenance(hash)
        .with_meta(meta_json)
        .write(&suffixed(stem, "_mag"))
}

pub fn read_bicoherence(stem: &Path) -> Result<Bicoherence> {
    let f = ArrayFile::read(stem)?;
    let meta: PlaneMeta = serde_json::from_value(f.header.meta.clone())
        .map_err(|e| Error::Format(format!("{}: not a bicoherence file ({e})", stem.display())))?;
    let Data::Complex(beta) = &f.data else {
        return Err(Error::Format("bicoherence values must be complex".into()));
    };
    let shape = (f.header.shape[0], f.header.shape[1]);
    let beta = Array2::from_shape_vec(shape, beta.clone()).map_err(|e| Error::Format(e.to_string()))?;
    let valid = match f.mask()? {
        Some(m) => Array2::from_shape_vec(shape, m).map_err(|e| Error::Format(e.to_string()))?,
        None => Array2::from_elem(shape, true),
    };
    let mag_stem = suffixed(stem, "_mag");
    let magnitude = if arrayfile::exists(&mag_stem) {
        match ArrayFile::read(&mag_stem)?.data {
            Data::Real(m) => Array2::from_shape_vec(shape, m).map_err(|e| Error::Format(e.to_string()))?,
            Data::Complex(_) => return Err(Error::Format("magnitude file must be real".into())),
        }
    } else {
        beta.mapv(|v: Complex64| v.norm())
    };
    Ok(Bicoherence {
        beta,
        magnitude,
        valid,
        normalization: meta.normalization,
        bias_corrected: meta.bias_corrected,
        axis1: f.axis_values(0),
        axis2: f.axis_values(1),
        domain: meta.domain,
        kind: meta.kind,
        power: meta.power,
        fs: meta.fs,
        hop: meta.hop,
        leg_templates: meta.leg_templates,
    })
}

fn suffixed(stem: &Path, suffix: &str) -> PathBuf {
    let (bin, _) = arrayfile::paths(stem);
    let base = bin.with_extension("");
    let mut s = base.into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs, config: &RunConfig) -> Result<()> {
    let text = fs::read_to_string(&args.recipe)?;
    let mut recipe = SimRecipe::from_json(&text)?;
    if let Some(seed) = args.seed {
        recipe.seed = seed;
    }
    let sig = gen(&recipe)?;
    ensure_parent(&args.out)?;
    signal_file(&sig, args.precision.into())?
        .with_provenance(config.provenance())
        .with_meta(serde_json::json!({ "kind": "signal", "fs": sig.fs(), "recipe": recipe }))
        .write(&args.out)
}

pub fn bispec_request(args: &BispecArgs, fs: f64) -> Result<BispecRequest> {
    let kind = EstimatorKind::new(args.kind.into(), args.bw_narrow, args.bw_broad)?;
    let r1 = args.range.unwrap_or((0.0, fs / 2.0));
    let r2 = args.range2.unwrap_or(r1);
    Ok(BispecRequest { kind, window: args.window.into(), range1: r1, range2: r2, step: args.step, hop: args.hop })
}

pub fn cmd_bispec(args: &BispecArgs, config: &RunConfig) -> Result<()> {
    let sig = read_signal(&args.input)?;
    let req = bispec_request(args, sig.fs())?;
    if args.bias_correct && args.norm != NormArg::Magsum {
        return invalid("--bias-correct needs --norm magsum");
    }
    let grid = bispectrum_of(&sig, &req)?;
    let mut bic = normalize(&grid, args.norm.into())?;
    if args.bias_correct {
        bic = bias_correct(&bic, &grid)?;
    }
    ensure_parent(&args.out)?;
    write_bicoherence(&bic, &args.out, ["omega1", "omega2"], args.precision.into(), config, None)
}

fn lattice(range: (f64, f64), step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(range.0 <= range.1) {
        return invalid(format!("bad range {range:?} or step {step}"));
    }
    let n = ((range.1 - range.0) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| range.0 + i as f64 * step).collect())
}

pub fn compute_pac(sig: &Signal, args: &PacArgs) -> Result<PacGrid> {
    let window: WindowKind = args.window.into();
    let theta_centers = lattice(args.theta_range, args.theta_step)?;
    let theta: Vec<BandSpec> = theta_centers
        .iter()
        .enumerate()
        .map(|(i, &c)| BandSpec { index: i, ..BandSpec::new(c, args.theta_bw, window) })
        .collect();
    let gamma_centers = lattice(args.gamma_range, args.gamma_step)?;
    match args.proportional {
        Some(ratio) => variable_bandwidth_pac(sig, &theta, &gamma_centers, ratio, args.hop),
        None => {
            if args.theta_bw >= args.gamma_bw {
                return invalid(format!("--theta-bw {} must be below --gamma-bw {}", args.theta_bw, args.gamma_bw));
            }
            let gamma = design_bank_spaced(sig.fs(), args.gamma_range.0, args.gamma_range.1, args.gamma_bw, args.gamma_step, window)?;
            let env = if args.amplitude { Envelope::Amplitude } else { Envelope::Power };
            phase_power_coherence(sig, &theta, &gamma, args.hop, env)
        }
    }
}

pub fn cmd_pac(args: &PacArgs, config: &RunConfig) -> Result<()> {
    let sig = read_signal(&args.input)?;
    if args.bias_correct && args.norm != NormArg::Magsum {
        return invalid("--bias-correct needs --norm magsum");
    }
    let pac = compute_pac(&sig, args)?;
    let mut bic = normalize(&pac.grid, args.norm.into())?;
    if args.bias_correct {
        bic = bias_correct(&bic, &pac.grid)?;
    }
    ensure_parent(&args.out)?;
    write_bicoherence(&bic, &args.out, ["theta", "gamma"], args.precision.into(), config, Some(pac.scaling))
}

pub fn cmd_features(args: &FeaturesArgs, config: &RunConfig) -> Result<FeatureReport> {
    let bic = read_bicoherence(&args.input)?;
    let thresholds = match &args.thresholds {
        Some(p) => Some(serde_json::from_str::<Thresholds>(&fs::read_to_string(p)?)?),
        None => None,
    };
    let cfg = FeatureConfig { so_range: args.so_range, fo_range: args.fo_range, fundamental: args.fundamental, thresholds };
    let (report, irf) = analyze(&bic, &cfg)?;
    ensure_parent(&args.out)?;
    let hash = config.provenance();
    let doc = serde_json::json!({ "provenance": hash, "report": report });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    arrayfile::atomic_write(&suffixed(&args.out, "_report.json"), text.as_bytes())?;
    if let Some(ir) = irf {
        let axes = vec![Axis::new("tau", "s", &ir.tau), Axis::new("omega2", "Hz", &ir.omega2)];
        ArrayFile::new(Data::Complex(ir.values.iter().copied().collect()), axes, Dtype::F64)?
            .with_provenance(hash)
            .with_meta(serde_json::json!({
                "kind": "impulse_response",
                "delay": ir.delay,
                "frame_period": ir.frame_period,
                "taper": ir.taper,
                "profile": ir.profile,
            }))
            .write(&suffixed(&args.out, "_irf"))?;
    }
    Ok(report)
}

pub fn schema_json(name: SchemaName) -> String {
    let schema = match name {
        SchemaName::Recipe => schemars::schema_for!(SimRecipe),
        SchemaName::RunConfig => schemars::schema_for!(RunConfig),
        SchemaName::FeatureReport => schemars::schema_for!(FeatureReport),
        SchemaName::ArrayHeader => schemars::schema_for!(arrayfile::Header),
    };
    serde_json::to_string_pretty(&schema).expect("schema serializes")
}

/// Runs one command line. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => 1,
                _ => 2,
            }
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    let config = RunConfig::new(command.clone());
    match command {
        Command::Simulate(a) => cmd_simulate(a, &config),
        Command::Bispec(a) => cmd_bispec(a, &config),
        Command::Pac(a) => cmd_pac(a, &config),
        Command::Features(a) => {
            let report = cmd_features(a, &config)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Schema(a) => {
            println!("{}", schema_json(a.name));
            Ok(())
        }
    }
}
