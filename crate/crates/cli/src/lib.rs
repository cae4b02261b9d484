//! Batch command-line surface of the `holov` binary.
//!
//! Every subcommand is a plain function over parsed arguments so tests can
//! drive the same code path as the binary through [`run`].

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use holov::cost::{decode_flops_per_token, flops_reduction, prefill_flops, CostParams};
use holov::io::{
    config_digest, encode_pgm, load_tensors, render_mask, save_token_sets, write_atomic, MaskFile, MaskRecord,
};
use holov::lab::{
    generate_synthetic, measure, run_lab, run_method, Budget, LabConfig, Method, MethodMetrics, SyntheticSpec,
};
use holov::{Error, PartitionMode, PruneConfig};

/// Exit code for invalid input or configuration.
pub const EXIT_INVALID: i32 = 2;
/// Exit code for I/O failures.
pub const EXIT_IO: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "holov", version, about = "Holistic visual token pruning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prune every image of a tensor container and write a mask file.
    Prune(PruneArgs),
    /// Render one image of a mask file as a binary PGM.
    RenderMask(RenderArgs),
    /// Print the analytic FLOPs model for a pruning ratio.
    Flops(FlopsArgs),
    /// Run seeded synthetic trials and report per-method metrics.
    Lab(LabArgs),
    /// Write synthetic token sets to a tensor container.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Holov,
    Random,
    AttnTopk,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Holov => Method::Holov,
            MethodArg::Random => Method::Random,
            MethodArg::AttnTopk => Method::AttnTopk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartitionArg {
    Grid,
    Rows,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct BudgetArgs {
    /// Number of tokens to keep.
    #[arg(long)]
    pub retain: Option<usize>,
    /// Fraction of tokens to remove; keeps round((1 - R) * N_v).
    #[arg(long)]
    pub ratio: Option<f64>,
}

impl BudgetArgs {
    fn budget(&self) -> Budget {
        match (self.retain, self.ratio) {
            (Some(n), _) => Budget::Count(n),
            (None, Some(r)) => Budget::Ratio(r),
            (None, None) => unreachable!("clap requires one of --retain/--ratio"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, default_value_t = holov::model::DEFAULT_TAU)]
    pub tau: f32,
    /// Crop count; defaults to round(1024 / retain).
    #[arg(long)]
    pub crops: Option<usize>,
    #[arg(long, value_enum, default_value_t = PartitionArg::Grid)]
    pub partition: PartitionArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Holov)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mask file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the metrics record here.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub mask: PathBuf,
    /// Image id; defaults to the first image.
    #[arg(long)]
    pub image: Option<String>,
    /// Expected grid as HxW; must match the mask.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FlopsArgs {
    #[arg(long, default_value_t = 576)]
    pub n: usize,
    #[arg(long, default_value_t = 4096)]
    pub d: usize,
    #[arg(long, default_value_t = 11008)]
    pub m: usize,
    #[arg(long, default_value_t = 32)]
    pub layers: usize,
    #[arg(long, default_value_t = 2.0)]
    pub a: f64,
    #[arg(long, default_value_t = 4.0)]
    pub b: f64,
    #[arg(long, default_value_t = 6.0)]
    pub c: f64,
    /// Pruning ratio R in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub ratio: f64,
}

#[derive(Debug, Clone, Args)]
pub struct LabArgs {
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synthetic spec (JSON); built-in defaults when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Holov, MethodArg::Random, MethodArg::AttnTopk])]
    pub methods: Vec<MethodArg>,
    #[arg(long, conflicts_with = "ratio")]
    pub retain: Option<usize>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, default_value_t = holov::model::DEFAULT_TAU)]
    pub tau: f32,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub images: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } => EXIT_IO,
            _ => EXIT_INVALID,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs `f` on a pool capped by `HOLOV_THREADS` when that variable is set.
fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match std::env::var("HOLOV_THREADS") {
        Ok(v) => {
            let threads: usize = v
                .parse()
                .ok()
                .filter(|&t| t > 0)
                .ok_or_else(|| invalid(format!("HOLOV_THREADS must be a positive integer, got `{v}`")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| invalid(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

fn json_line<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub image_id: String,
    pub n_v: usize,
    pub pruning_ratio: f64,
    pub flops_reduction_approx: f64,
    #[serde(flatten)]
    pub metrics: MethodMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneReport {
    pub images: Vec<ImageMetrics>,
}

pub fn cmd_prune(args: &PruneArgs) -> CliResult<String> {
    let sets = load_tensors(&args.input)?;
    let method = Method::from(args.method);
    let mode = match args.partition {
        PartitionArg::Grid => PartitionMode::GridTiles,
        PartitionArg::Rows => PartitionMode::RowMajorBlocks,
    };
    let budget = args.budget.budget();
    let results = with_thread_cap(|| {
        use rayon::prelude::*;
        sets.par_iter()
            .map(|(id, ts)| -> CliResult<(MaskRecord, ImageMetrics)> {
                let retain = budget.resolve(ts.len())?;
                let mut cfg = PruneConfig::new(retain)
                    .with_tau(args.tau)
                    .with_partition_mode(mode)
                    .with_seed(args.seed);
                cfg.crop_count = args.crops;
                let retained = run_method(ts, method, &cfg)?;
                let metrics = measure(ts, method, &cfg, &retained, None)?;
                let pruning_ratio = 1.0 - retain as f64 / ts.len() as f64;
                let record = MaskRecord {
                    image_id: id.clone(),
                    n_v: ts.len(),
                    grid_h: ts.grid_h,
                    grid_w: ts.grid_w,
                    retain_count: retain,
                    method,
                    config_digest: config_digest(method, &cfg),
                    retained,
                };
                let image = ImageMetrics {
                    image_id: id.clone(),
                    n_v: ts.len(),
                    pruning_ratio,
                    flops_reduction_approx: 2.0 * pruning_ratio - pruning_ratio * pruning_ratio,
                    metrics,
                };
                Ok((record, image))
            })
            .collect::<CliResult<Vec<_>>>()
    })??;
    let (records, images): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    MaskFile::new(records).write(&args.out)?;
    let report = json_line(&PruneReport { images })?;
    if let Some(path) = &args.metrics {
        write_atomic(path, report.as_bytes())?;
    }
    Ok(report)
}

/// Parses `HxW`.
pub fn parse_grid(s: &str) -> CliResult<(usize, usize)> {
    let parsed = s
        .split_once(['x', 'X'])
        .and_then(|(h, w)| Some((h.trim().parse().ok()?, w.trim().parse().ok()?)));
    parsed.ok_or_else(|| invalid(format!("grid must look like 24x24, got `{s}`")))
}

pub fn cmd_render_mask(args: &RenderArgs) -> CliResult<String> {
    let file = MaskFile::read(&args.mask)?;
    let record = file.image(args.image.as_deref())?;
    if let Some(grid) = &args.grid {
        let (h, w) = parse_grid(grid)?;
        if (h, w) != (record.grid_h, record.grid_w) {
            return Err(Error::GridMismatch(format!(
                "requested {h}x{w}, mask `{}` is {}x{}",
                record.image_id, record.grid_h, record.grid_w
            ))
            .into());
        }
    }
    let pixmap = render_mask(record.grid_h, record.grid_w, &record.retained)?;
    write_atomic(&args.out, &encode_pgm(&pixmap))?;
    Ok(format!(
        "wrote {}x{} mask of `{}` to {}\n",
        record.grid_h,
        record.grid_w,
        record.image_id,
        args.out.display()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsReport {
    pub params: CostParams,
    pub ratio: f64,
    pub n_hat: usize,
    pub flops_reduction_exact: f64,
    pub flops_reduction_approx: f64,
    pub prefill_flops_full: f64,
    pub prefill_flops_pruned: f64,
    pub decode_flops_per_token_full: f64,
    pub decode_flops_per_token_pruned: f64,
}

pub fn flops_report(args: &FlopsArgs) -> CliResult<FlopsReport> {
    let params = CostParams {
        n: args.n,
        d: args.d,
        m: args.m,
        layers: args.layers,
        a: args.a,
        b: args.b,
        c: args.c,
    };
    params.validate()?;
    let reduction = flops_reduction(&params, args.ratio)?;
    Ok(FlopsReport {
        params,
        ratio: args.ratio,
        n_hat: reduction.n_hat,
        flops_reduction_exact: reduction.exact,
        flops_reduction_approx: reduction.approx,
        prefill_flops_full: prefill_flops(&params),
        prefill_flops_pruned: prefill_flops(&params.with_n(reduction.n_hat)),
        decode_flops_per_token_full: decode_flops_per_token(&params, params.n),
        decode_flops_per_token_pruned: decode_flops_per_token(&params, reduction.n_hat),
    })
}

pub fn cmd_flops(args: &FlopsArgs) -> CliResult<String> {
    json_line(&flops_report(args)?)
}

fn read_spec(path: Option<&PathBuf>) -> CliResult<SyntheticSpec> {
    let spec = match path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| {
                CliError::from(Error::Io {
                    path: p.clone(),
                    source: e,
                })
            })?;
            serde_json::from_slice(&bytes).map_err(|e| invalid(format!("bad spec {}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_lab(args: &LabArgs) -> CliResult<String> {
    let spec = read_spec(args.spec.as_ref())?;
    let budget = match (args.retain, args.ratio) {
        (Some(n), _) => Budget::Count(n),
        (None, Some(r)) => Budget::Ratio(r),
        (None, None) => Budget::Count(64.min(spec.token_count())),
    };
    let mut methods: Vec<Method> = Vec::new();
    for m in &args.methods {
        let m = Method::from(*m);
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let cfg = LabConfig {
        trials: args.trials,
        seed: args.seed,
        spec,
        methods,
        budget,
        tau: args.tau,
    };
    let report = with_thread_cap(|| run_lab(&cfg))??;
    let text = json_line(&report)?;
    match &args.out {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            Ok(format!("wrote {} trials to {}\n", report.trials.len(), path.display()))
        }
        None => Ok(text),
    }
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<String> {
    let spec = read_spec(args.spec.as_ref())?;
    if args.images == 0 {
        return Err(invalid("--images must be ≥ 1"));
    }
    let sets = (0..args.images)
        .map(|i| {
            let seed = holov::rng::derive_seed(args.seed, i as u64);
            let (ts, _) = generate_synthetic(&spec.with_seed(seed))?;
            Ok((format!("img{i}"), ts))
        })
        .collect::<holov::Result<Vec<_>>>()?;
    save_token_sets(&args.out, &sets)?;
    Ok(format!("wrote {} token sets to {}\n", sets.len(), args.out.display()))
}

pub fn execute(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Prune(a) => cmd_prune(a),
        Command::RenderMask(a) => cmd_render_mask(a),
        Command::Flops(a) => cmd_flops(a),
        Command::Lab(a) => cmd_lab(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
