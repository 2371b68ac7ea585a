//! `synthsim` subcommands.
//!
//! Exit codes: 0 on success, 2 when the inputs cannot produce a result, 3
//! when a required external tool is unavailable.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use synthsim_core::corpus::{write_component_archive, ComponentLibrary, Corpus, CorpusError, LIBRARY_FILE};
use synthsim_core::evaluator::{import_external_scores, score_pairs, EvalError, EvaluationReport};
use synthsim_core::generator::{
    capacity_lower_bound, generate, BuildOptions, DatasetManifest, GenerateError, GeneratorConfig, MANIFEST_FILE,
};
use synthsim_core::model::{Blueprint, ModelError};
use synthsim_core::recipe::Recipe;
use synthsim_core::slicer::{extract_components, SliceError};
use synthsim_core::toolchain::{SlicingStrategy, ToolError, ToolchainConfig, DEFAULT_TIMEOUT_S};
use synthsim_metrics::{lzjd, tlsh, Metric, MetricError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_ENVIRONMENT: i32 = 3;

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Parser)]
#[command(name = "synthsim", version, about = "Synthetic binary similarity datasets")]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Slice static libraries into labeled components.
    Extract(ExtractArgs),
    /// Build a dataset of sample programs from a component corpus.
    Generate(GenerateArgs),
    /// Score a dataset with similarity metrics and report MAE.
    Evaluate(EvaluateArgs),
    /// Show the contents of a component archive, corpus or dataset.
    Inspect(InspectArgs),
    /// Number of ways to pick n of a corpus's libraries.
    Capacity(CapacityArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    /// Recipe files (TOML).
    #[arg(long, required = true, num_args = 1..)]
    pub recipes: Vec<PathBuf>,
    /// Directory that receives one component archive per library.
    #[arg(long)]
    pub out: PathBuf,
    /// Dead-code elimination used for probe builds: gc-sections or lto.
    #[arg(long, default_value = "gc-sections")]
    pub strategy: SlicingStrategy,
    /// Concurrent probe builds (default: logical CPUs).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Per-build timeout in seconds.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_S)]
    pub timeout: u64,
    /// Replace existing component archives.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Directory written by `extract`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Components per sample.
    #[arg(short = 'n', long = "components")]
    pub n: usize,
    /// Fraction of components that may change between consecutive samples.
    #[arg(short = 'p', long = "mutation")]
    pub p: f64,
    /// Samples to build.
    #[arg(long)]
    pub count: usize,
    /// Chain seed; equal seeds give identical datasets.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Built-in blueprint (cc-c, cmake-c) or a blueprint directory.
    #[arg(long, default_value = "cc-c")]
    pub blueprint: String,
    /// Build attempts before giving up (default: 4 x count).
    #[arg(long)]
    pub max_attempts: Option<usize>,
    /// Concurrent sample builds (default: logical CPUs).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Per-build timeout in seconds.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_S)]
    pub timeout: u64,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated metric names.
    #[arg(long, default_value = "ctph,tlsh,lzjd,naive", value_delimiter = ',')]
    pub metrics: Vec<String>,
    /// Extra score column from a CSV file: NAME=PATH.
    #[arg(long = "external", value_parser = parse_external)]
    pub external: Vec<(String, PathBuf)>,
    /// Report path (default: <dataset>/report.json).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Ground-truth histogram bins.
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// TLSH distance that maps to similarity 0.
    #[arg(long, default_value_t = tlsh::DEFAULT_MAX_DISTANCE)]
    pub tlsh_max_distance: u32,
    /// LZJD sketch size.
    #[arg(long, default_value_t = lzjd::DEFAULT_SKETCH_SIZE)]
    pub lzjd_k: usize,
    /// Threads used for digests (default: logical CPUs).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Replace an existing report.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct InspectArgs {
    /// Component archive, corpus or dataset directory.
    pub path: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CapacityArgs {
    /// Libraries in the corpus.
    pub libraries: u64,
    /// Components per sample.
    pub n: u64,
}

fn parse_external(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=PATH")?;
    if name.is_empty() || path.is_empty() {
        return Err("expected NAME=PATH".into());
    }
    Ok((name.to_owned(), PathBuf::from(path)))
}

/// A failed command with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn domain(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_DOMAIN,
            message: message.to_string(),
        }
    }

    fn environment(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_ENVIRONMENT,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::domain(e)
    }
}

impl From<ToolError> for Failure {
    fn from(e: ToolError) -> Self {
        match e {
            ToolError::Missing { .. } => Failure::environment(e),
            ToolError::Io(e) => Failure::domain(e),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::ToolMissing { .. } => Failure::environment(e),
            e => Failure::domain(e),
        }
    }
}

impl From<SliceError> for Failure {
    fn from(e: SliceError) -> Self {
        if e.is_environment() {
            Failure::environment(e)
        } else {
            Failure::domain(e)
        }
    }
}

impl From<GenerateError> for Failure {
    fn from(e: GenerateError) -> Self {
        if e.is_environment() {
            Failure::environment(e)
        } else {
            Failure::domain(e)
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::domain(e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::domain(e)
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        Failure::domain(e)
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Serialize)]
struct RunEcho<'a> {
    command: &'a Command,
    toolchain: Option<&'a ToolchainConfig>,
    working_dir: PathBuf,
    version: &'static str,
}

fn write_run_file(path: &Path, command: &Command, toolchain: Option<&ToolchainConfig>) -> CmdResult {
    let echo = RunEcho {
        command,
        toolchain,
        working_dir: std::env::current_dir()?,
        version: env!("CARGO_PKG_VERSION"),
    };
    let mut text = serde_json::to_string_pretty(&serde_json::to_value(&echo).expect("run echo serializes"))
        .expect("run echo serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn toolchain(strategy: SlicingStrategy, timeout: u64) -> ToolchainConfig {
    ToolchainConfig {
        slicing_strategy: strategy,
        timeout_s: timeout,
        ..ToolchainConfig::from_env()
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}

fn dispatch(command: &Command) -> CmdResult {
    match command {
        Command::Extract(a) => cmd_extract(command, a),
        Command::Generate(a) => cmd_generate(command, a),
        Command::Evaluate(a) => cmd_evaluate(command, a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Capacity(a) => cmd_capacity(a),
    }
}

pub fn cmd_extract(command: &Command, args: &ExtractArgs) -> CmdResult {
    let tc = toolchain(args.strategy, args.timeout);
    tc.check_compiler()?;
    let jobs = args.jobs.unwrap_or_else(default_jobs).max(1);

    let run_file = args.out.join(RUN_FILE);
    if run_file.exists() && !args.force {
        return Err(Failure::domain(format!(
            "{} already exists (pass --force to overwrite)",
            args.out.display()
        )));
    }
    fs::create_dir_all(&args.out)?;
    write_run_file(&run_file, command, Some(&tc))?;

    let scratch = args.out.join(".build");
    let mut produced = 0;
    for path in &args.recipes {
        let recipe = match Recipe::load(path) {
            Ok(r) => r,
            Err(e) => {
                println!("recipe {}: skipped: {e}", path.display());
                continue;
            }
        };
        let outcome = recipe
            .prepare(&tc, &scratch.join(&recipe.name))
            .and_then(|lib| extract_components(&lib, &tc, jobs));
        match outcome {
            Ok(ex) => {
                write_component_archive(&ex, &args.out, args.force)?;
                println!(
                    "library {}: {} components, {} discarded",
                    ex.library.name,
                    ex.components.len(),
                    ex.discarded().count()
                );
                for (export, reason) in ex.discarded() {
                    log::info!("{}: discarded {export}: {reason}", ex.library.name);
                }
                produced += 1;
            }
            Err(e) if e.is_environment() => return Err(e.into()),
            Err(e) => println!("library {}: 0 components, failed: {e}", recipe.name),
        }
    }
    fs::remove_dir_all(&scratch).ok();
    if produced == 0 {
        return Err(Failure::domain("no library yielded components"));
    }
    Ok(())
}

fn load_blueprint(spec: &str) -> Result<Blueprint, Failure> {
    if let Some(bp) = Blueprint::builtin(spec) {
        return Ok(bp);
    }
    let dir = Path::new(spec);
    if dir.is_dir() {
        return Ok(Blueprint::from_dir(dir)?);
    }
    Err(Failure::domain(format!(
        "unknown blueprint `{spec}` (built-in: {})",
        Blueprint::BUILTIN.join(", ")
    )))
}

/// Clears `dir` for a fresh run, refusing if it holds anything unless
/// `force` is set.
fn claim_dir(dir: &Path, force: bool) -> CmdResult {
    let occupied = dir.exists() && fs::read_dir(dir)?.next().is_some();
    if occupied {
        if !force {
            return Err(Failure::domain(format!(
                "{} is not empty (pass --force to overwrite)",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn cmd_generate(command: &Command, args: &GenerateArgs) -> CmdResult {
    let tc = toolchain(SlicingStrategy::default(), args.timeout);
    let mut config = GeneratorConfig::new(args.n, args.p, args.count, args.seed)?;
    if let Some(max) = args.max_attempts {
        config = config.with_max_attempts(max)?;
    }
    let blueprint = load_blueprint(&args.blueprint)?;
    let corpus = Corpus::load(&args.corpus)?;
    tc.check_compiler()?;

    claim_dir(&args.out, args.force)?;
    write_run_file(&args.out.join(RUN_FILE), command, Some(&tc))?;
    let opts = BuildOptions {
        blueprint,
        toolchain: tc,
        jobs: args.jobs.unwrap_or_else(default_jobs).max(1),
    };
    let start = Instant::now();
    let manifest = generate(&corpus, &config, &opts, &args.out)?;
    println!(
        "{} samples, {} discarded, {:.1}s",
        manifest.samples.len(),
        manifest.discarded_count,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn parse_metrics(args: &EvaluateArgs) -> Result<Vec<Metric>, Failure> {
    args.metrics
        .iter()
        .map(|name| {
            Ok(match name.trim().parse::<Metric>()? {
                Metric::Tlsh { .. } => Metric::Tlsh {
                    max_distance: args.tlsh_max_distance,
                },
                Metric::Lzjd { .. } => {
                    if args.lzjd_k == 0 {
                        return Err(Failure::domain("--lzjd-k must be positive"));
                    }
                    Metric::Lzjd { k: args.lzjd_k }
                }
                m => m,
            })
        })
        .collect()
}

pub fn cmd_evaluate(command: &Command, args: &EvaluateArgs) -> CmdResult {
    let metrics = parse_metrics(args)?;
    if args.bins == 0 {
        return Err(Failure::domain("--bins must be positive"));
    }
    let report_path = args.report.clone().unwrap_or_else(|| args.dataset.join("report.json"));
    let run_path = report_path.with_extension("run.json");
    if report_path.exists() && !args.force {
        return Err(Failure::domain(format!(
            "{} already exists (pass --force to overwrite)",
            report_path.display()
        )));
    }
    let manifest = DatasetManifest::load(&args.dataset)?;
    if let Some(jobs) = args.jobs {
        // fails only if the global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }

    let mut table = score_pairs(&manifest, &args.dataset, &metrics)?;
    for (name, path) in &args.external {
        table = import_external_scores(&table, name, path)?;
    }
    let report = EvaluationReport::new(&table, &manifest, args.bins)?.with_tlsh_max_distance(args.tlsh_max_distance);
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&report_path, report.to_json())?;
    write_run_file(&run_path, command, None)?;
    print!("{}", report.text_table());
    println!("{} pairs; report written to {}", report.pair_count, report_path.display());
    Ok(())
}

pub fn cmd_inspect(args: &InspectArgs) -> CmdResult {
    let path = &args.path;
    if path.join(LIBRARY_FILE).is_file() {
        let lib = ComponentLibrary::load(path)?;
        print_library(&lib, true);
    } else if path.join(MANIFEST_FILE).is_file() {
        let m = DatasetManifest::load(path)?;
        let c = &m.config;
        println!(
            "dataset: {} samples, {} discarded (n = {}, p = {}, seed = {}, rng = {})",
            m.samples.len(),
            m.discarded_count,
            c.n,
            c.p,
            c.seed,
            c.rng
        );
        println!("corpus fingerprint: {}", m.corpus_fingerprint);
        for s in &m.samples {
            println!("{}  {} labels  {}", s.id, s.labels.len(), s.components.join(" "));
        }
    } else if path.is_dir() {
        let corpus = Corpus::load(path).map_err(|_| unrecognized(path))?;
        println!(
            "corpus: {} libraries, {} components",
            corpus.libraries.len(),
            corpus.component_count()
        );
        for lib in &corpus.libraries {
            print_library(lib, false);
        }
    } else {
        return Err(unrecognized(path));
    }
    Ok(())
}

fn unrecognized(path: &Path) -> Failure {
    Failure::domain(format!(
        "{} is not a component archive, corpus or dataset",
        path.display()
    ))
}

fn print_library(lib: &ComponentLibrary, labels: bool) {
    println!(
        "library {} {}: {} components, {} discarded (prefix {})",
        lib.name,
        lib.version,
        lib.components.len(),
        lib.discarded.len(),
        lib.prefix
    );
    for c in &lib.components {
        println!("  {}  {} labels", c.id(), c.labels().len());
        if labels {
            for l in c.labels().iter() {
                println!("    {l}");
            }
        }
    }
    if labels {
        for d in &lib.discarded {
            println!("  discarded {}: {}", d.export, d.reason);
        }
    }
}

/// `C(libraries, n)` rendered exactly when small, otherwise as
/// `≈ m.mme<exp>`.
pub fn format_capacity(libraries: u64, n: u64) -> Result<String, Failure> {
    let log10 = capacity_lower_bound(libraries, n)?;
    if log10 < 15.0 {
        let k = n.min(libraries - n);
        let mut c: u128 = 1;
        for i in 1..=u128::from(k) {
            c = c * (u128::from(libraries - k) + i) / i;
        }
        return Ok(c.to_string());
    }
    let mut exp = log10.floor();
    let mut mantissa = 10f64.powf(log10 - exp);
    if (mantissa * 100.0).round() >= 1000.0 {
        mantissa /= 10.0;
        exp += 1.0;
    }
    Ok(format!("≈ {mantissa:.2}e{exp}"))
}

pub fn cmd_capacity(args: &CapacityArgs) -> CmdResult {
    println!("{}", format_capacity(args.libraries, args.n)?);
    Ok(())
}
