//! Command-line front end.
//!
//! Everything except the parallelism degree lives in a TOML config file:
//!
//! ```toml
//! output_dir = "quadratic"        # relative to $PROJFL_OUTPUT_ROOT (or the cwd)
//! rounds = 200
//! seeds = { start = 0, count = 50 }   # or an explicit list: [0, 1, 2]
//!
//! [objective]
//! kind = "quadratic-shifted"
//! centers = [[0.0, 0.0], [2.0, 0.0]]
//!
//! [algorithm]
//! kind = "projfl"
//! eta = "cap"                     # a number, or the cap of [verify].item
//! compressor = { kind = "rand-k", k_fraction = 0.5 }
//!
//! [noise]
//! sigma = 0.1
//!
//! [verify]
//! item = "t1.1"
//! ```
//!
//! Exit codes: [`EXIT_OK`], [`EXIT_ERROR`], [`EXIT_DIVERGED`], [`EXIT_FAIL`],
//! [`EXIT_SKIPPED`].

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::accounting::{CostModel, TrafficLedger};
use crate::algorithms::{write_snapshot, AlgorithmConfig};
use crate::certificate::certify;
use crate::compressors::{CompressorKind, CompressorSpec};
use crate::error::{Error, Result};
use crate::harness::{
    eta_cap, group_by_seed, read_metrics_csv, run, verify, ExecOptions, Item, ObjectiveSpec,
    OutputRule, RunConfig, Simulation, Status, VerifyContext,
};
use crate::objectives::{FederatedObjective, NoiseModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_FAIL: i32 = 3;
pub const EXIT_SKIPPED: i32 = 4;

/// Root for relative `output_dir` values.
pub const OUTPUT_ROOT_ENV: &str = "PROJFL_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "projfl", version, about = "Compressed federated optimization simulator and bound checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write metrics.csv, ledger.json and effective_config.toml.
    Run {
        /// TOML config file.
        config: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Run (or reload) an experiment and check a bound; writes report.json.
    Verify {
        /// TOML config file.
        config: PathBuf,
        /// t1.1, t1.2, t1.3, t2.1, t2.2, t2.3 or lemmaA1; defaults to [verify].item.
        #[arg(long)]
        item: Option<String>,
        /// Verify metrics from an earlier run instead of simulating.
        #[arg(long, value_name = "CSV")]
        from_csv: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Print the certified beta and delta of a compressor with evidence.
    Certify {
        /// Compressor family.
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Fraction of coordinates kept by rand-k and top-k.
        #[arg(long, default_value_t = 1.0)]
        k_fraction: f64,
        /// QSGD quantization levels.
        #[arg(long, default_value_t = 1)]
        s_levels: u32,
        /// Vector dimension.
        #[arg(long)]
        dim: usize,
        /// Print the certificate as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write artifacts derived from a config.
    Export {
        #[command(subcommand)]
        what: ExportCommand,
    },
}

#[derive(Debug, Subcommand)]
enum ExportCommand {
    /// Per-client datasets in the binary dataset format.
    Dataset {
        /// TOML config file.
        config: PathBuf,
        /// Directory for client_<i>.pfld files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Full client and server state of one seed after some rounds.
    Snapshot {
        /// TOML config file.
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Rounds to simulate before writing.
        #[arg(long)]
        round: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ExecArgs {
    /// Worker threads; defaults to the seed count capped at the hardware parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Identity,
    RandK,
    TopK,
    Qsgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eta {
    Value(f64),
    /// Only `"cap"` is accepted.
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { start, count } => (*start..start + count).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub item: Option<String>,
    #[serde(default)]
    pub allow_empirical: bool,
    #[serde(default)]
    pub tail_rounds: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct AlgorithmSection {
    eta: Spanned<Eta>,
    #[serde(flatten)]
    rest: toml::Table,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    output_dir: Option<PathBuf>,
    rounds: usize,
    seeds: Spanned<Seeds>,
    #[serde(default = "one")]
    metric_every: usize,
    #[serde(default)]
    output_rule: OutputRule,
    #[serde(default)]
    w0: Option<Vec<f64>>,
    #[serde(default = "yes")]
    check_mirrors: bool,
    objective: Spanned<ObjectiveSpec>,
    algorithm: Spanned<AlgorithmSection>,
    #[serde(default)]
    noise: NoiseModel,
    #[serde(default)]
    cost_model: CostModel,
    #[serde(default)]
    verify: VerifySection,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// A parsed config file. `eta` may still be the `"cap"` keyword.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub source: PathBuf,
    pub output_dir: Option<PathBuf>,
    pub run: RunConfig,
    pub eta: Eta,
    pub verify: VerifySection,
    text: String,
    eta_span: Range<usize>,
    algorithm_span: Range<usize>,
    objective_span: Range<usize>,
}

/// Echo of a resolved config, itself a valid config file.
#[derive(Debug, Serialize)]
struct EffectiveConfig<'a> {
    output_dir: &'a Path,
    rounds: usize,
    seeds: &'a [u64],
    metric_every: usize,
    output_rule: OutputRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    w0: &'a Option<Vec<f64>>,
    check_mirrors: bool,
    objective: &'a ObjectiveSpec,
    algorithm: &'a AlgorithmConfig,
    noise: &'a NoiseModel,
    cost_model: &'a CostModel,
    verify: &'a VerifySection,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidRun(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            Error::InvalidRun(format!("{}:{line}:{col}: {}", source.display(), e.message().trim()))
        })?;
        let algorithm_span = raw.algorithm.span();
        let AlgorithmSection { eta, mut rest } = raw.algorithm.into_inner();
        let eta_span = eta.span();
        let eta = eta.into_inner();
        let placeholder = match &eta {
            Eta::Value(v) => *v,
            Eta::Keyword(k) if k == "cap" => 1.0,
            Eta::Keyword(k) => {
                let (line, col) = line_col(text, eta_span.start);
                return Err(Error::InvalidRun(format!(
                    "{}:{line}:{col}: eta must be a number or \"cap\", got {k:?}",
                    source.display()
                )));
            }
        };
        rest.insert("eta".into(), toml::Value::Float(placeholder));
        let algorithm: AlgorithmConfig = toml::Value::Table(rest).try_into().map_err(|e: toml::de::Error| {
            let (line, col) = line_col(text, algorithm_span.start);
            Error::InvalidRun(format!("{}:{line}:{col}: [algorithm]: {}", source.display(), e.message().trim()))
        })?;
        let seeds_span = raw.seeds.span();
        let run = RunConfig {
            objective: raw.objective.get_ref().clone(),
            algorithm,
            noise: raw.noise,
            rounds: raw.rounds,
            seeds: raw.seeds.into_inner().expand(),
            metric_every: raw.metric_every,
            output_rule: raw.output_rule,
            w0: raw.w0,
            cost_model: raw.cost_model,
            check_mirrors: raw.check_mirrors,
        };
        let cfg = Self {
            source: source.to_path_buf(),
            output_dir: raw.output_dir,
            run,
            eta,
            verify: raw.verify,
            text: text.to_owned(),
            eta_span,
            algorithm_span,
            objective_span: raw.objective.span(),
        };
        if cfg.run.seeds.is_empty() {
            return Err(cfg.anchored(seeds_span, "seeds must be non-empty"));
        }
        cfg.run
            .validate()
            .map_err(|e| cfg.anchored(cfg.algorithm_span.clone(), &e.to_string()))?;
        if let Some(item) = &cfg.verify.item {
            item.parse::<Item>().map_err(|e| Error::InvalidRun(e.to_string()))?;
        }
        Ok(cfg)
    }

    fn anchored(&self, span: Range<usize>, msg: &str) -> Error {
        let (line, col) = line_col(&self.text, span.start);
        Error::InvalidRun(format!("{}:{line}:{col}: {msg}", self.source.display()))
    }

    pub fn build_objective(&self) -> Result<FederatedObjective> {
        self.run
            .objective
            .build()
            .map_err(|e| self.anchored(self.objective_span.clone(), &e.to_string()))
    }

    /// Replaces `eta = "cap"` by the cap of `item`.
    pub fn resolve_eta(&mut self, obj: &FederatedObjective, item: Option<Item>) -> Result<()> {
        if let Eta::Value(v) = self.eta {
            self.run.algorithm.eta = v;
            return Ok(());
        }
        let item = item.ok_or_else(|| self.anchored(self.eta_span.clone(), "eta = \"cap\" needs [verify].item"))?;
        let ctx = VerifyContext::new(&self.run, obj);
        let cap = eta_cap(item, &ctx).map_err(|e| self.anchored(self.eta_span.clone(), &e.to_string()))?;
        if !cap.is_finite() {
            return Err(self.anchored(self.eta_span.clone(), &format!("{item} has no step-size cap")));
        }
        self.run.algorithm.eta = cap;
        self.eta = Eta::Value(self.run.algorithm.eta);
        Ok(())
    }

    /// `output_dir` as written, defaulting to the config file's stem.
    fn configured_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            let stem = self.source.file_stem().map_or("run".into(), |s| s.to_owned());
            PathBuf::from(stem)
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        let dir = self.configured_output_dir();
        if dir.is_absolute() {
            return dir;
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(dir),
            None => dir,
        }
    }

    pub fn effective_toml(&self) -> Result<String> {
        let dir = self.configured_output_dir();
        let eff = EffectiveConfig {
            output_dir: &dir,
            rounds: self.run.rounds,
            seeds: &self.run.seeds,
            metric_every: self.run.metric_every,
            output_rule: self.run.output_rule,
            w0: &self.run.w0,
            check_mirrors: self.run.check_mirrors,
            objective: &self.run.objective,
            algorithm: &self.run.algorithm,
            noise: &self.run.noise,
            cost_model: &self.run.cost_model,
            verify: &self.verify,
        };
        toml::to_string(&eff).map_err(|e| Error::InvalidRun(format!("effective config: {e}")))
    }
}

fn default_jobs(seeds: usize) -> usize {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    seeds.clamp(1, hw)
}

fn exec_options(cfg: &CliConfig, exec: &ExecArgs) -> ExecOptions {
    ExecOptions {
        jobs: Some(exec.jobs.unwrap_or_else(|| default_jobs(cfg.run.seeds.len()))),
        ..ExecOptions::default()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T, pretty: bool) -> Result<()> {
    let text = if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    }.map_err(|e| Error::InvalidRun(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

#[derive(Serialize)]
struct SeedLedger<'a> {
    seed: u64,
    #[serde(flatten)]
    ledger: &'a TrafficLedger,
}

fn parse_item(s: &str) -> Result<Item> {
    s.parse::<Item>().map_err(|e| Error::InvalidRun(e.to_string()))
}

/// Prints a warning when `eta` exceeds the cap of the configured item.
fn warn_above_cap(cfg: &CliConfig, obj: &FederatedObjective) {
    let Some(item) = cfg.verify.item.as_deref().and_then(|s| s.parse::<Item>().ok()) else {
        return;
    };
    let ctx = VerifyContext::new(&cfg.run, obj);
    if let Ok(cap) = eta_cap(item, &ctx) {
        let eta = cfg.run.algorithm.eta;
        if eta > cap * (1.0 + 1e-12) {
            eprintln!("warning: eta {eta} exceeds the {item} cap {cap}; verification would reject this run");
        }
    }
}

/// Simulates and writes the run artifacts. Returns the exit code and metrics.
fn simulate(cfg: &CliConfig, obj: &FederatedObjective, exec: &ExecArgs) -> Result<(i32, crate::harness::RunResult)> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;
    write_text(&dir.join("effective_config.toml"), &cfg.effective_toml()?)?;
    let result = run(&cfg.run, obj, exec_options(cfg, exec))?;
    let mut csv = create(&dir.join("metrics.csv"))?;
    result.write_csv(&mut csv)?;
    csv.flush()?;
    let ledgers: Vec<_> = result
        .runs
        .iter()
        .map(|r| SeedLedger {
            seed: r.seed,
            ledger: &r.ledger,
        })
        .collect();
    write_json(&dir.join("ledger.json"), &ledgers, false)?;
    let code = match result.divergence() {
        Some((seed, round)) => {
            eprintln!("diverged: seed {seed} at round {round}");
            EXIT_DIVERGED
        }
        None => EXIT_OK,
    };
    println!("wrote {}", dir.display());
    Ok((code, result))
}

fn cmd_run(config: &Path, exec: &ExecArgs) -> Result<i32> {
    let mut cfg = CliConfig::load(config)?;
    let obj = cfg.build_objective()?;
    let item = cfg.verify.item.as_deref().map(parse_item).transpose()?;
    cfg.resolve_eta(&obj, item)?;
    warn_above_cap(&cfg, &obj);
    Ok(simulate(&cfg, &obj, exec)?.0)
}

fn cmd_verify(config: &Path, item: Option<&str>, from_csv: Option<&Path>, exec: &ExecArgs) -> Result<i32> {
    let mut cfg = CliConfig::load(config)?;
    let name = item
        .map(str::to_owned)
        .or_else(|| cfg.verify.item.clone())
        .ok_or_else(|| Error::InvalidRun("no item: pass --item or set [verify].item".into()))?;
    let item = parse_item(&name)?;
    let obj = cfg.build_objective()?;
    // The run itself is defined by the file, so its own item picks the cap.
    let cap_item = cfg.verify.item.as_deref().map(parse_item).transpose()?;
    cfg.resolve_eta(&obj, cap_item.or(Some(item)))?;
    let mut ctx = VerifyContext::new(&cfg.run, &obj).allow_empirical(cfg.verify.allow_empirical);
    ctx.tail_rounds = cfg.verify.tail_rounds;
    let metrics = match from_csv {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::InvalidRun(format!("{}: {e}", path.display())))?;
            group_by_seed(read_metrics_csv(std::io::BufReader::new(file))?)
        }
        None => {
            let (code, result) = simulate(&cfg, &obj, exec)?;
            if code != EXIT_OK {
                return Ok(code);
            }
            result.metrics()
        }
    };
    let report = verify(item, &metrics, &ctx)?;
    let path = cfg.output_dir().join("report.json");
    write_json(&path, &report, true)?;
    println!("{item} {}: {}", report.status, report.reason);
    for c in &report.caveats {
        println!("caveat: {c}");
    }
    println!("wrote {}", path.display());
    Ok(match report.status {
        Status::Pass => EXIT_OK,
        Status::Fail => EXIT_FAIL,
        Status::Skipped => EXIT_SKIPPED,
    })
}

fn cmd_certify(kind: KindArg, k_fraction: f64, s_levels: u32, dim: usize, json: bool) -> Result<i32> {
    let spec = CompressorSpec {
        kind: match kind {
            KindArg::Identity => CompressorKind::Identity,
            KindArg::RandK => CompressorKind::RandK,
            KindArg::TopK => CompressorKind::TopK,
            KindArg::Qsgd => CompressorKind::Qsgd,
        },
        k_fraction,
        s_levels,
        layerwise: false,
    };
    let cert = certify(&spec, dim)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&cert).map_err(|e| Error::InvalidRun(e.to_string()))?);
    } else {
        for line in cert.summary() {
            println!("{line}");
        }
    }
    Ok(EXIT_OK)
}

fn cmd_export(what: &ExportCommand) -> Result<i32> {
    match what {
        ExportCommand::Dataset { config, out } => {
            let cfg = CliConfig::load(config)?;
            let obj = cfg.build_objective()?;
            if obj.datasets().is_empty() {
                return Err(Error::InvalidRun(format!("{:?} objective has no datasets", obj.kind())));
            }
            fs::create_dir_all(out)?;
            for (i, ds) in obj.datasets().iter().enumerate() {
                let path = out.join(format!("client_{i}.pfld"));
                let mut f = create(&path)?;
                ds.write_to(&mut f)?;
                f.flush()?;
                println!("wrote {} ({} samples)", path.display(), ds.len());
            }
        }
        ExportCommand::Snapshot {
            config,
            seed,
            round,
            out,
        } => {
            let mut cfg = CliConfig::load(config)?;
            let obj = cfg.build_objective()?;
            let item = cfg.verify.item.as_deref().map(parse_item).transpose()?;
            cfg.resolve_eta(&obj, item)?;
            let mut sim = Simulation::new(&cfg.run, &obj, *seed)?;
            for _ in 0..*round {
                sim.step()?;
            }
            let mut f = create(out)?;
            write_snapshot(&sim.snapshot(), &mut f)?;
            f.flush()?;
            println!("wrote {} (seed {seed}, round {round})", out.display());
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Run { config, exec } => cmd_run(config, exec),
        Command::Verify {
            config,
            item,
            from_csv,
            exec,
        } => cmd_verify(config, item.as_deref(), from_csv.as_deref(), exec),
        Command::Certify {
            kind,
            k_fraction,
            s_levels,
            dim,
            json,
        } => cmd_certify(*kind, *k_fraction, *s_levels, *dim, *json),
        Command::Export { what } => cmd_export(what),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}
