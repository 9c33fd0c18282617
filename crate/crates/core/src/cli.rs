//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the exit code with captured output, so it can be driven from
//! tests without spawning a process.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    identity_residual, iterated_identity_residual, maximize_f, sweep, write_jsonl, MaximizeConfig,
    SweepSummary, MAX_SWEEP_LEN,
};
use crate::certify::{
    certify_x_with, certify_y_with, CertifyOptions, ProductMode, RealVectorX, RealVectorY,
};
use crate::error::{Error, Result};
use crate::partition::{
    build_eta_with_fallback, build_pi, greedy_pi, search_partition, validate_partition,
    ConstructionTrace, GoodPartition, Target, ValidationReport,
};
use crate::regulator::{regulator_report, RegulatorQuery};
use crate::signs::{alpha_beta, classify_pairs, heavy_target, PairInfo, SignVector};

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const PARTITION: i32 = 3;
    pub const VIOLATION: i32 = 4;
    pub const SWEEP_INVALID: i32 = 5;
}

/// Residual above which an identity check fails.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "pohst",
    version,
    about = "Sign-pattern partitions and product bounds"
)]
pub struct Cli {
    /// Indent JSON output.
    #[arg(long, global = true)]
    pub pretty: bool,

    /// Write a run manifest to this path.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SetArg {
    J,
    K,
}

impl From<SetArg> for Target {
    fn from(s: SetArg) -> Target {
        match s {
            SetArg::J => Target::J,
            SetArg::K => Target::K,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ladder,
    Search,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum IdentityArg {
    Single,
    Iterated,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Canonical and non-canonical pairs of a sign pattern.
    Classify {
        #[arg(allow_hyphen_values = true)]
        signs: SignVector,
    },
    /// Good partition of J or K.
    Partition {
        #[arg(allow_hyphen_values = true)]
        signs: SignVector,
        #[arg(long, value_enum, default_value = "k")]
        set: SetArg,
        #[arg(long, value_enum, default_value = "ladder")]
        mode: ModeArg,
    },
    /// Certificate for the product bound at a point.
    Certify {
        /// Comma-separated x values.
        #[arg(
            long,
            allow_hyphen_values = true,
            conflicts_with = "y",
            required_unless_present = "y"
        )]
        x: Option<NumList>,
        /// Comma-separated y values.
        #[arg(long, allow_hyphen_values = true)]
        y: Option<NumList>,
        #[arg(long, default_value_t = crate::certify::DEFAULT_TOLERANCE)]
        tolerance: f64,
        /// Accumulate products as sums of logarithms.
        #[arg(long)]
        log_space: bool,
    },
    /// Build and validate partitions for every pattern of length n (sampled above 2^20).
    Sweep {
        n: usize,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Multi-start search for the maximum of the product over a sign orthant.
    Maximize {
        #[arg(allow_hyphen_values = true)]
        signs: SignVector,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, default_value_t = 40)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        delta: f64,
    },
    /// Discriminant bound from degree, min(p, m) and regulator.
    Regbound {
        n: u32,
        min_pm: u32,
        #[arg(value_name = "R")]
        regulator: f64,
    },
    /// Residual of the leave-one-out (or leave-two-out) product identity.
    Identity {
        #[arg(long, allow_hyphen_values = true)]
        y: NumList,
        #[arg(value_enum, default_value = "single")]
        which: IdentityArg,
    },
}

/// Comma-separated decimals, e.g. `-0.5,0.5`.
#[derive(Clone, Debug, PartialEq)]
pub struct NumList(pub Vec<f64>);

impl std::str::FromStr for NumList {
    type Err = String;

    fn from_str(text: &str) -> std::result::Result<Self, String> {
        if text.trim().is_empty() {
            return Ok(NumList(Vec::new()));
        }
        text.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<std::result::Result<_, _>>()
            .map(NumList)
    }
}

/// Reproducibility record for one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub seeds: Vec<u64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// SHA-256 of the command and arguments.
    pub input_digest: String,
    /// SHA-256 of the JSON payload (or the JSONL file for sweeps).
    pub output_digest: String,
}

impl RunManifest {
    fn new(command: &str, args: &[String], seeds: Vec<u64>, output: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        for a in args {
            h.update([0u8]);
            h.update(a.as_bytes());
        }
        RunManifest {
            command: command.to_string(),
            args: args.to_vec(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            input_digest: hex::encode(h.finalize()),
            output_digest: hex::encode(Sha256::digest(output)),
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Exit code and captured streams of one invocation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Json(_) => exit::IO,
        Error::LadderStuck { .. } | Error::SearchExhausted { .. } => exit::PARTITION,
        _ => exit::USAGE,
    }
}

struct Report {
    payload: String,
    code: i32,
    seeds: Vec<u64>,
    /// Bytes the output digest covers when not the payload itself.
    digest_of: Option<Vec<u8>>,
}

impl Report {
    fn new(payload: String, code: i32) -> Self {
        Report {
            payload,
            code,
            seeds: Vec::new(),
            digest_of: None,
        }
    }
}

fn to_json<T: Serialize>(v: &T, pretty: bool) -> Result<String> {
    Ok(if pretty {
        serde_json::to_string_pretty(v)?
    } else {
        serde_json::to_string(v)?
    })
}

pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code: exit::USAGE,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                Outcome {
                    code: exit::SUCCESS,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    let echo: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let name = command_name(&cli.command);

    let report = match execute(&cli, &echo) {
        Ok(r) => r,
        Err(e) => return failure(&e),
    };
    let mut out = Outcome {
        code: report.code,
        stdout: report.payload.clone() + "\n",
        stderr: String::new(),
    };
    if let Some(path) = &cli.manifest {
        let digest_input = report
            .digest_of
            .as_deref()
            .unwrap_or(report.payload.as_bytes());
        let manifest = RunManifest::new(name, &echo, report.seeds.clone(), digest_input);
        if let Err(e) = manifest.write(path) {
            out.code = exit::IO;
            out.stderr = format!("error: cannot write manifest {}: {e}\n", path.display());
        }
    }
    out
}

fn failure(e: &Error) -> Outcome {
    let code = exit_code(e);
    let mut out = Outcome {
        code,
        stdout: String::new(),
        stderr: format!("error: {e}\n"),
    };
    if let Error::LadderStuck { sigma, .. } | Error::SearchExhausted { sigma, .. } = e {
        #[derive(Serialize)]
        struct Witness<'a> {
            error: String,
            sigma: &'a SignVector,
        }
        if let Ok(text) = serde_json::to_string(&Witness {
            error: e.to_string(),
            sigma,
        }) {
            out.stdout = text + "\n";
        }
    }
    out
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Classify { .. } => "classify",
        Command::Partition { .. } => "partition",
        Command::Certify { .. } => "certify",
        Command::Sweep { .. } => "sweep",
        Command::Maximize { .. } => "maximize",
        Command::Regbound { .. } => "regbound",
        Command::Identity { .. } => "identity",
    }
}

fn execute(cli: &Cli, echo: &[String]) -> Result<Report> {
    let pretty = cli.pretty;
    match &cli.command {
        Command::Classify { signs } => cmd_classify(signs, pretty),
        Command::Partition { signs, set, mode } => {
            cmd_partition(signs, (*set).into(), *mode, pretty)
        }
        Command::Certify {
            x,
            y,
            tolerance,
            log_space,
        } => {
            let opts = CertifyOptions {
                tolerance: *tolerance,
                mode: if *log_space {
                    ProductMode::Log
                } else {
                    ProductMode::Plain
                },
            };
            cmd_certify(
                x.as_ref().map(|l| &l.0[..]),
                y.as_ref().map(|l| &l.0[..]),
                opts,
                pretty,
            )
        }
        Command::Sweep { n, out, jobs, seed } => cmd_sweep(*n, out, *jobs, *seed, echo, pretty),
        Command::Maximize {
            signs,
            restarts,
            iters,
            seed,
            delta,
        } => {
            let cfg = MaximizeConfig {
                restarts: *restarts,
                iterations: *iters,
                seed: *seed,
                delta: *delta,
                ..MaximizeConfig::default()
            };
            cmd_maximize(signs, &cfg, pretty)
        }
        Command::Regbound {
            n,
            min_pm,
            regulator,
        } => cmd_regbound(
            &RegulatorQuery {
                n: *n,
                min_pm: *min_pm,
                regulator: *regulator,
            },
            pretty,
        ),
        Command::Identity { y, which } => cmd_identity(&y.0, *which, pretty),
    }
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    sigma: &'a SignVector,
    n: usize,
    alpha: usize,
    beta: usize,
    target: usize,
    #[serde(rename = "J")]
    j: Vec<PairInfo>,
    #[serde(rename = "K")]
    k: Vec<PairInfo>,
}

fn cmd_classify(sigma: &SignVector, pretty: bool) -> Result<Report> {
    let (j, k) = classify_pairs(sigma);
    let (alpha, beta) = alpha_beta(sigma);
    let report = ClassifyReport {
        sigma,
        n: sigma.len(),
        alpha,
        beta,
        target: heavy_target(sigma),
        j,
        k,
    };
    Ok(Report::new(to_json(&report, pretty)?, exit::SUCCESS))
}

#[derive(Serialize)]
struct PartitionRun {
    /// "ladder", "greedy", or "search".
    method: &'static str,
    heavy_count: usize,
    partition: GoodPartition,
    validation: ValidationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<ConstructionTrace>,
}

impl PartitionRun {
    fn new(
        sigma: &SignVector,
        method: &'static str,
        partition: GoodPartition,
        trace: Option<ConstructionTrace>,
    ) -> Self {
        let validation = validate_partition(sigma, &partition);
        PartitionRun {
            method,
            heavy_count: partition.heavy_count,
            partition,
            validation,
            trace,
        }
    }
}

#[derive(Serialize)]
struct PartitionReport<'a> {
    sigma: &'a SignVector,
    set: Target,
    /// Required heavy count: `min(alpha + 1, beta)` for K, 0 for J.
    target: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    ladder: Option<PartitionRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    search: Option<PartitionRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<bool>,
}

fn constructive_run(sigma: &SignVector, set: Target) -> Result<PartitionRun> {
    Ok(match set {
        Target::K => {
            let out = build_eta_with_fallback(sigma)?;
            PartitionRun::new(
                sigma,
                if out.ladder { "ladder" } else { "search" },
                out.partition,
                out.trace,
            )
        }
        Target::J => match greedy_pi(sigma) {
            Some(p) => PartitionRun::new(sigma, "greedy", p, None),
            None => PartitionRun::new(sigma, "search", build_pi(sigma)?, None),
        },
    })
}

fn search_run(sigma: &SignVector, set: Target) -> Result<PartitionRun> {
    let budget = match set {
        Target::K => heavy_target(sigma),
        Target::J => 0,
    };
    let p = search_partition(sigma, set, budget).ok_or_else(|| Error::SearchExhausted {
        sigma: sigma.clone(),
        target: set.name(),
    })?;
    Ok(PartitionRun::new(sigma, "search", p, None))
}

fn cmd_partition(sigma: &SignVector, set: Target, mode: ModeArg, pretty: bool) -> Result<Report> {
    let target = match set {
        Target::K => heavy_target(sigma),
        Target::J => 0,
    };
    let ladder = match mode {
        ModeArg::Ladder | ModeArg::Both => Some(constructive_run(sigma, set)?),
        ModeArg::Search => None,
    };
    let search = match mode {
        ModeArg::Search | ModeArg::Both => Some(search_run(sigma, set)?),
        ModeArg::Ladder => None,
    };
    let agreement = match (&ladder, &search) {
        (Some(a), Some(b)) => Some(a.heavy_count == b.heavy_count),
        _ => None,
    };
    let all_valid = ladder.iter().chain(search.iter()).all(|r| r.validation.ok);
    let code = if all_valid && agreement != Some(false) {
        exit::SUCCESS
    } else {
        exit::PARTITION
    };
    let report = PartitionReport {
        sigma,
        set,
        target,
        ladder,
        search,
        agreement,
    };
    Ok(Report::new(to_json(&report, pretty)?, code))
}

fn cmd_certify(
    x: Option<&[f64]>,
    y: Option<&[f64]>,
    opts: CertifyOptions,
    pretty: bool,
) -> Result<Report> {
    if !(opts.tolerance.is_finite() && opts.tolerance >= 0.0) {
        return Err(Error::Domain(format!(
            "tolerance {} must be nonnegative",
            opts.tolerance
        )));
    }
    let cert = match (x, y) {
        (Some(x), None) => certify_x_with(&RealVectorX::new(x.to_vec())?, opts)?,
        (None, Some(y)) => certify_y_with(&RealVectorY::new(y.to_vec())?, opts)?,
        _ => return Err(Error::Domain("give exactly one of --x or --y".into())),
    };
    let code = if cert.ok {
        exit::SUCCESS
    } else {
        exit::VIOLATION
    };
    Ok(Report::new(to_json(&cert, pretty)?, code))
}

fn cmd_sweep(
    n: usize,
    out: &Path,
    jobs: usize,
    seed: u64,
    echo: &[String],
    pretty: bool,
) -> Result<Report> {
    if n > MAX_SWEEP_LEN {
        return Err(Error::Domain(format!(
            "sweep length {n} exceeds {MAX_SWEEP_LEN}"
        )));
    }
    let records = sweep(n, jobs, seed)?;
    let mut bytes = Vec::new();
    write_jsonl(&mut bytes, &records)?;
    {
        use std::io::Write;
        let mut w = BufWriter::new(fs::File::create(out)?);
        w.write_all(&bytes)?;
        w.flush()?;
    }
    let summary = SweepSummary::of(n, &records);
    let manifest = RunManifest::new("sweep", echo, vec![seed], &bytes);
    manifest.write(&sweep_manifest_path(out))?;
    let code = if summary.invalid == 0 {
        exit::SUCCESS
    } else {
        exit::SWEEP_INVALID
    };
    Ok(Report {
        payload: to_json(&summary, pretty)?,
        code,
        seeds: vec![seed],
        digest_of: Some(bytes),
    })
}

/// `<out>.manifest.json`, written next to every sweep output.
pub fn sweep_manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn cmd_maximize(sigma: &SignVector, cfg: &MaximizeConfig, pretty: bool) -> Result<Report> {
    let report = maximize_f(sigma, cfg)?;
    let code = if report.exceeds_bound {
        exit::VIOLATION
    } else {
        exit::SUCCESS
    };
    Ok(Report {
        payload: to_json(&report, pretty)?,
        code,
        seeds: vec![cfg.seed],
        digest_of: None,
    })
}

fn cmd_regbound(q: &RegulatorQuery, pretty: bool) -> Result<Report> {
    Ok(Report::new(
        to_json(&regulator_report(q)?, pretty)?,
        exit::SUCCESS,
    ))
}

#[derive(Serialize)]
struct IdentityReport<'a> {
    y: &'a [f64],
    which: &'static str,
    residual: f64,
    tolerance: f64,
    ok: bool,
}

fn cmd_identity(y: &[f64], which: IdentityArg, pretty: bool) -> Result<Report> {
    let (name, residual) = match which {
        IdentityArg::Single => ("single", identity_residual(y)?),
        IdentityArg::Iterated => ("iterated", iterated_identity_residual(y)?),
    };
    let ok = residual <= IDENTITY_TOLERANCE;
    let report = IdentityReport {
        y,
        which: name,
        residual,
        tolerance: IDENTITY_TOLERANCE,
        ok,
    };
    Ok(Report::new(
        to_json(&report, pretty)?,
        if ok { exit::SUCCESS } else { exit::VIOLATION },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> Outcome {
        run(std::iter::once("pohst").chain(args.iter().copied()))
    }

    fn json(o: &Outcome) -> serde_json::Value {
        serde_json::from_str(&o.stdout).unwrap_or_else(|e| panic!("{e}: {:?}", o.stdout))
    }

    #[test]
    fn classify_examples() {
        let o = call(&["classify", "-+-"]);
        assert_eq!(o.code, 0);
        let v = json(&o);
        assert_eq!(v["J"].as_array().unwrap().len(), 4);
        assert_eq!(v["K"].as_array().unwrap().len(), 2);

        let v = json(&call(&["classify", "+"]));
        assert_eq!(
            v["J"],
            serde_json::json!([{"pair": [1, 1], "product_sign": 1, "canonical": false}])
        );
        assert_eq!(v["K"], serde_json::json!([]));

        assert_eq!(call(&["classify", "x+"]).code, 2);
    }

    #[test]
    fn parse_list_forms() {
        assert_eq!("-0.5, 0.5".parse::<NumList>().unwrap().0, vec![-0.5, 0.5]);
        assert!("".parse::<NumList>().unwrap().0.is_empty());
        assert!("1,,2".parse::<NumList>().is_err());
    }

    #[test]
    fn exit_codes_follow_errors() {
        assert_eq!(exit_code(&Error::Domain("x".into())), 2);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 1);
        let s: SignVector = "-".parse().unwrap();
        assert_eq!(
            exit_code(&Error::SearchExhausted {
                sigma: s,
                target: "J"
            }),
            3
        );
    }

    #[test]
    fn search_failure_prints_witness() {
        let s: SignVector = "-+".parse().unwrap();
        let o = failure(&Error::SearchExhausted {
            sigma: s,
            target: "J",
        });
        assert_eq!(o.code, 3);
        assert_eq!(json(&o)["sigma"], "-+");
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(
            sweep_manifest_path(Path::new("/tmp/a.jsonl")),
            PathBuf::from("/tmp/a.jsonl.manifest.json")
        );
    }
}
