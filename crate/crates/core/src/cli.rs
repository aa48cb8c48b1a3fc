//! The `herald` command-line frontend.
//!
//! Every flag may also be given in a flat `key = value` file passed with
//! `--config`; keys are flag names without the leading dashes, and flags on
//! the command line win. Exit codes: 0 success, 1 I/O failure, 2 invalid
//! arguments, 3 failed comparison report.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::certification::{self as cert, SourceConfig};
use crate::detector::{DetectorKind, DetectorSpec};
use crate::error::HeraldError;
use crate::experiments::{self, Fig2Row};
use crate::format::{round12, sig12};
use crate::montecarlo::{
    default_workers, run_trials_with, Quantity, RunOptions, DEFAULT_CHUNK_SIZE,
};
use crate::photon_stats::DistributionKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REPORT_FAILED: i32 = 3;

const DEFAULT_N_BAR: f64 = 1.0;
const DEFAULT_ETA: f64 = 1.0;
const DEFAULT_DELAYS: u32 = 8;
const DEFAULT_TRIALS: u64 = 1_000_000;
const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(
    name = "herald",
    version,
    about = "Delay-multiplexed heralded single-photon source model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Certification of one delay, or the full fan of one system
    Certify,
    /// Run the pulse simulator and print its estimators
    Simulate,
    /// Compare every closed form against the simulator
    Compare,
    /// Certification fans and single-photon curves for N_D = 1..max-delays
    Fig2,
    /// Mean pair number maximizing the heralded single-photon rate
    Optimize,
    /// Figures of merit over a grid (comma-separated --n-bar, --eta, --delays)
    Sweep,
}

#[derive(Debug, Default, Args)]
struct Flags {
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "F")]
    n_bar: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "F")]
    eta: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "U")]
    delays: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "U")]
    delay: Option<String>,
    #[arg(long, global = true, value_name = "thermal|poisson")]
    kind: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "U")]
    trials: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "U64")]
    seed: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "U")]
    workers: Option<String>,
    /// Use a photon-number-resolving trigger detector
    #[arg(long, global = true)]
    pnr: bool,
    /// Photon number heralded by the resolving detector
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "U")]
    target: Option<String>,
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "csv|json")]
    format: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "F")]
    tol: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "U")]
    max_delays: Option<String>,
    /// Flat key=value file whose keys mirror the flags
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(std::io::Error),
}

impl From<HeraldError> for CliError {
    fn from(e: HeraldError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Fully resolved and validated settings.
#[derive(Debug, Clone)]
struct Settings {
    n_bar: Vec<f64>,
    eta: Vec<f64>,
    delays: Vec<u32>,
    delay: Option<u32>,
    kind: DistributionKind,
    trials: u64,
    trials_given: bool,
    seed: u64,
    workers: usize,
    pnr: bool,
    target: Option<u64>,
    out: Option<PathBuf>,
    format: OutputFormat,
    tol: f64,
    max_delays: u32,
}

impl Settings {
    fn single<T: Copy>(values: &[T], flag: &str) -> Result<T, CliError> {
        match values {
            [v] => Ok(*v),
            _ => Err(usage(format!(
                "--{flag} takes a single value for this subcommand"
            ))),
        }
    }

    fn n_bar(&self) -> Result<f64, CliError> {
        Self::single(&self.n_bar, "n-bar")
    }

    fn eta(&self) -> Result<f64, CliError> {
        Self::single(&self.eta, "eta")
    }

    fn delays(&self) -> Result<u32, CliError> {
        Self::single(&self.delays, "delays")
    }

    fn source(&self) -> Result<SourceConfig, CliError> {
        Ok(SourceConfig::new(
            self.n_bar()?,
            self.eta()?,
            self.delays()?,
            self.kind,
        )?)
    }

    fn run_options(&self) -> RunOptions {
        RunOptions::new(self.trials, self.seed)
            .workers(self.workers)
            .chunk_size(DEFAULT_CHUNK_SIZE)
            .target(self.target)
    }

    fn mc_meta(&self) -> Value {
        json!({
            "seed": self.seed,
            "trials": self.trials,
            "chunk_size": DEFAULT_CHUNK_SIZE,
        })
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, flag: &str) -> Result<Vec<T>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("invalid value '{}' for --{flag}", s.trim())))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(raw: &str, flag: &str) -> Result<T, CliError> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| usage(format!("invalid value '{}' for --{flag}", raw.trim())))
}

fn parse_bool(raw: &str, key: &str) -> Result<bool, CliError> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(usage(format!("invalid boolean '{other}' for {key}"))),
    }
}

/// Read a flat `key = value` file. Blank lines and `#` comments are skipped;
/// underscores in keys are treated as dashes.
fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!(
                "{}:{}: expected key=value",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

const CONFIG_KEYS: &[&str] = &[
    "n-bar",
    "eta",
    "delays",
    "delay",
    "kind",
    "trials",
    "seed",
    "workers",
    "pnr",
    "target",
    "out",
    "format",
    "tol",
    "max-delays",
];

fn resolve(flags: Flags) -> Result<Settings, CliError> {
    let file = match &flags.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    if let Some(bad) = file.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(usage(format!("unknown config key '{bad}'")));
    }
    let pick = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get(key).cloned());

    let n_bar = match pick(&flags.n_bar, "n-bar") {
        Some(raw) => parse_list::<f64>(&raw, "n-bar")?,
        None => vec![DEFAULT_N_BAR],
    };
    if let Some(bad) = n_bar.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(usage(format!("--n-bar must be positive, got {bad}")));
    }
    let eta = match pick(&flags.eta, "eta") {
        Some(raw) => parse_list::<f64>(&raw, "eta")?,
        None => vec![DEFAULT_ETA],
    };
    if let Some(bad) = eta.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
        return Err(usage(format!("--eta must lie in [0, 1], got {bad}")));
    }
    let delays = match pick(&flags.delays, "delays") {
        Some(raw) => parse_list::<u32>(&raw, "delays")?,
        None => vec![DEFAULT_DELAYS],
    };
    if delays.contains(&0) {
        return Err(usage("--delays must be at least 1"));
    }
    let delay = pick(&flags.delay, "delay")
        .map(|raw| parse_one::<u32>(&raw, "delay"))
        .transpose()?;
    let kind = match pick(&flags.kind, "kind") {
        Some(raw) => raw.parse::<DistributionKind>()?,
        None => DistributionKind::Thermal,
    };
    let trials_raw = pick(&flags.trials, "trials");
    let trials_given = trials_raw.is_some();
    let trials = match trials_raw {
        Some(raw) => parse_one::<u64>(&raw, "trials")?,
        None => DEFAULT_TRIALS,
    };
    if trials < 1 {
        return Err(usage("--trials must be at least 1"));
    }
    let seed = match pick(&flags.seed, "seed") {
        Some(raw) => parse_seed(&raw)?,
        None => DEFAULT_SEED,
    };
    let workers = match pick(&flags.workers, "workers") {
        Some(raw) => parse_one::<usize>(&raw, "workers")?,
        None => default_workers(),
    };
    if workers < 1 {
        return Err(usage("--workers must be at least 1"));
    }
    let pnr = flags.pnr
        || match file.get("pnr") {
            Some(raw) => parse_bool(raw, "pnr")?,
            None => false,
        };
    let target = pick(&flags.target, "target")
        .map(|raw| parse_one::<u64>(&raw, "target"))
        .transpose()?;
    if target.is_some() && !pnr {
        return Err(usage("--target requires --pnr"));
    }
    let target = if pnr { Some(target.unwrap_or(1)) } else { None };
    let out = flags
        .out
        .clone()
        .or_else(|| file.get("out").map(PathBuf::from));
    let format = match pick(&flags.format, "format").as_deref().map(str::trim) {
        None | Some("csv") => OutputFormat::Csv,
        Some("json") => OutputFormat::Json,
        Some(other) => return Err(usage(format!("unknown format '{other}'"))),
    };
    let tol = match pick(&flags.tol, "tol") {
        Some(raw) => parse_one::<f64>(&raw, "tol")?,
        None => cert::DEFAULT_OPTIMIZE_TOL,
    };
    if tol.is_nan() || tol <= 0.0 {
        return Err(usage(format!("--tol must be positive, got {tol}")));
    }
    let max_delays = match pick(&flags.max_delays, "max-delays") {
        Some(raw) => parse_one::<u32>(&raw, "max-delays")?,
        None => experiments::DEFAULT_MAX_DELAYS,
    };
    if max_delays < 1 {
        return Err(usage("--max-delays must be at least 1"));
    }
    Ok(Settings {
        n_bar,
        eta,
        delays,
        delay,
        kind,
        trials,
        trials_given,
        seed,
        workers,
        pnr,
        target,
        out,
        format,
        tol,
        max_delays,
    })
}

/// Seeds accept any 64-bit integer; negative values wrap to their two's
/// complement.
fn parse_seed(raw: &str) -> Result<u64, CliError> {
    let raw = raw.trim();
    raw.parse::<u64>()
        .or_else(|_| raw.parse::<i64>().map(|v| v as u64))
        .map_err(|_| usage(format!("invalid value '{raw}' for --seed")))
}

fn to_json_text(value: &Value) -> Vec<u8> {
    let mut text = serde_json::to_vec_pretty(value).expect("json serialization");
    text.push(b'\n');
    text
}

fn emit(settings: &Settings, bytes: &[u8]) -> Result<(), CliError> {
    match &settings.out {
        Some(path) => fs::write(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn certify(s: &Settings) -> Result<Vec<u8>, CliError> {
    let config = s.source()?;
    if let Some(i) = s.delay {
        let value = cert::certification_at_delay(&config, i)?;
        return Ok(match s.format {
            OutputFormat::Csv => format!("{}\n", sig12(value)).into_bytes(),
            OutputFormat::Json => to_json_text(&json!({
                "meta": { "kind": config.kind().as_str() },
                "n_bar": round12(config.n_bar()),
                "eta": round12(config.eta()),
                "n_delays": config.n_delays(),
                "delay_index": i,
                "value": round12(value),
            })),
        });
    }
    let rows: Vec<Fig2Row> = experiments::fig2_dataset(
        config.kind(),
        config.eta(),
        config.n_bar(),
        config.n_delays(),
    )?
    .into_iter()
    .filter(|r| r.n_delays == config.n_delays())
    .collect();
    fig2_output(s, &rows, json!({}))
}

fn fig2_output(s: &Settings, rows: &[Fig2Row], meta: Value) -> Result<Vec<u8>, CliError> {
    Ok(match s.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            experiments::write_fig2_csv(rows, &mut buf)?;
            buf
        }
        OutputFormat::Json => to_json_text(&experiments::fig2_json(rows, meta)),
    })
}

fn fig2(s: &Settings) -> Result<Vec<u8>, CliError> {
    let (eta, n_bar) = (s.eta()?, s.n_bar()?);
    if s.trials_given {
        let rows = experiments::fig2_with_mc(s.kind, eta, n_bar, s.max_delays, &s.run_options())?;
        fig2_output(s, &rows, s.mc_meta())
    } else {
        let rows = experiments::fig2_dataset(s.kind, eta, n_bar, s.max_delays)?;
        fig2_output(s, &rows, json!({}))
    }
}

fn meta_comment(meta: &Value) -> String {
    let fields: Vec<String> = meta
        .as_object()
        .expect("meta object")
        .iter()
        .map(|(k, v)| {
            let text = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) if n.is_f64() => sig12(n.as_f64().expect("finite")),
                other => other.to_string(),
            };
            format!("{k}={text}")
        })
        .collect();
    format!("# {}\n", fields.join(" "))
}

fn simulate(s: &Settings) -> Result<Vec<u8>, CliError> {
    let config = s.source()?;
    let detector = if s.pnr {
        DetectorSpec::new(config.eta(), DetectorKind::NumberResolving)?
    } else {
        DetectorSpec::threshold(config.eta())?
    };
    let tally = run_trials_with(&config, &detector, &s.run_options())?;
    let n = config.n_delays();
    let mut quantities: Vec<Quantity> = (1..=n).map(Quantity::Certification).collect();
    quantities.extend((1..=n).map(Quantity::DelayRate));
    quantities.extend([Quantity::P1, Quantity::P1GivenTrigger, Quantity::NoFireRate]);
    if s.pnr {
        quantities.push(Quantity::TargetRate);
    }

    let mut meta = s.mc_meta();
    meta["kind"] = json!(config.kind().as_str());
    meta["n_bar"] = json!(round12(config.n_bar()));
    meta["eta"] = json!(round12(config.eta()));
    meta["n_delays"] = json!(n);
    meta["detector"] = json!(detector.kind().to_string());
    if let Some(m) = s.target {
        meta["target"] = json!(m);
    }

    let mut records = Vec::with_capacity(quantities.len());
    for q in quantities {
        let est = match tally.estimate(q) {
            Ok(est) => Some(est),
            Err(HeraldError::DegenerateCondition(_)) => None,
            Err(e) => return Err(e.into()),
        };
        records.push((q, est));
    }

    Ok(match s.format {
        OutputFormat::Csv => {
            let mut buf = meta_comment(&meta).into_bytes();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record([
                    "quantity",
                    "delay_index",
                    "successes",
                    "denominator",
                    "value",
                    "stderr",
                ])
                .map_err(std::io::Error::other)?;
                for (q, est) in &records {
                    let idx = q.delay_index().map(|i| i.to_string()).unwrap_or_default();
                    let row = match est {
                        Some(e) => [
                            q.name().to_string(),
                            idx,
                            e.successes.to_string(),
                            e.trials.to_string(),
                            sig12(e.value),
                            sig12(e.stderr),
                        ],
                        None => [
                            q.name().to_string(),
                            idx,
                            String::new(),
                            "0".into(),
                            String::new(),
                            String::new(),
                        ],
                    };
                    w.write_record(row).map_err(std::io::Error::other)?;
                }
                w.flush()?;
            }
            buf
        }
        OutputFormat::Json => {
            let rows: Vec<Value> = records
                .iter()
                .map(|(q, est)| {
                    json!({
                        "quantity": q.name(),
                        "delay_index": q.delay_index(),
                        "successes": est.map(|e| e.successes),
                        "denominator": est.map(|e| e.trials).unwrap_or(0),
                        "value": est.map(|e| round12(e.value)),
                        "stderr": est.map(|e| round12(e.stderr)),
                    })
                })
                .collect();
            to_json_text(&json!({ "meta": meta, "tally": tally, "rows": rows }))
        }
    })
}

fn compare(s: &Settings) -> Result<(Vec<u8>, bool), CliError> {
    let config = s.source()?;
    let report = experiments::compare_analytic_mc_with(&config, &s.run_options().target(None))?;
    let mut meta = s.mc_meta();
    meta["kind"] = json!(config.kind().as_str());
    meta["n_bar"] = json!(round12(config.n_bar()));
    meta["eta"] = json!(round12(config.eta()));
    meta["n_delays"] = json!(config.n_delays());
    meta["pass"] = json!(report.pass);
    let bytes = match s.format {
        OutputFormat::Csv => {
            let mut buf = meta_comment(&meta).into_bytes();
            experiments::write_comparison_csv(&report, &mut buf)?;
            buf
        }
        OutputFormat::Json => to_json_text(&experiments::comparison_json(&report, meta)),
    };
    Ok((bytes, report.pass))
}

fn optimize(s: &Settings) -> Result<Vec<u8>, CliError> {
    let (eta, n_delays) = (s.eta()?, s.delays()?);
    let best = cert::optimize_mean(eta, n_delays, s.kind, s.tol)?;
    let p1 = cert::heralded_single_prob(&SourceConfig::new(best, eta, n_delays, s.kind)?);
    Ok(match s.format {
        OutputFormat::Csv => format!(
            "kind,eta,n_delays,n_bar,p1\n{},{},{},{},{}\n",
            s.kind,
            sig12(eta),
            n_delays,
            sig12(best),
            sig12(p1)
        )
        .into_bytes(),
        OutputFormat::Json => to_json_text(&json!({
            "meta": { "tol": s.tol },
            "kind": s.kind.as_str(),
            "eta": round12(eta),
            "n_delays": n_delays,
            "n_bar": round12(best),
            "p1": round12(p1),
        })),
    })
}

fn sweep(s: &Settings) -> Result<Vec<u8>, CliError> {
    let rows = experiments::sweep(&s.n_bar, &s.eta, &s.delays, s.kind)?;
    Ok(match s.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            experiments::write_sweep_csv(&rows, &mut buf)?;
            buf
        }
        OutputFormat::Json => to_json_text(&experiments::sweep_json(&rows, json!({}))),
    })
}

fn dispatch(command: Command, settings: &Settings) -> Result<i32, CliError> {
    if settings.pnr && command != Command::Simulate {
        return Err(usage("--pnr is only supported by the simulate subcommand"));
    }
    let (bytes, code) = match command {
        Command::Certify => (certify(settings)?, EXIT_OK),
        Command::Simulate => (simulate(settings)?, EXIT_OK),
        Command::Compare => {
            let (bytes, pass) = compare(settings)?;
            (bytes, if pass { EXIT_OK } else { EXIT_REPORT_FAILED })
        }
        Command::Fig2 => (fig2(settings)?, EXIT_OK),
        Command::Optimize => (optimize(settings)?, EXIT_OK),
        Command::Sweep => (sweep(settings)?, EXIT_OK),
    };
    emit(settings, &bytes)?;
    Ok(code)
}

/// Run the CLI on `args` (including the program name) and return the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = resolve(cli.flags).and_then(|settings| dispatch(cli.command, &settings));
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run 'herald --help' for usage");
            EXIT_USAGE
        }
        Err(CliError::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
    }
}
