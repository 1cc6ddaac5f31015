//! Command-line front end. Every command writes one JSON document to
//! standard output (or CSV rows under `--csv` for tables and sweeps).
//!
//! CSV columns per command:
//! - `bounds`: `n,criterion,t,value,value_f64,applicable,saturating_state,assignment`
//! - `ghz-moments`: `n,r2,r2_f64,r4,r4_f64,sector_length,noisy_r2`
//! - `threshold`: `n,k,p_star`
//! - `plan`: `n,gamma,p,criterion,method,delta,k,m,m_tot,status`

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bounds::{
    assignment_blocks, check_applicable, fullsep_bounds, global_r4_cap, ksep_bound_r2,
    ksep_bound_r4, mprod_bound_r2, mprod_bound_r4, noise_threshold, noise_threshold_asymptotic,
    wclass_bound_r2, CriterionKind, GHZ_R4_ASSUMPTION, GLOBAL_R4_FALLBACK,
};
use crate::certify::{applicable_criteria, certify_criteria};
use crate::confidence::{error_bar, Method};
use crate::error::{Error, Result};
use crate::estimation::{moment_estimate, variance_upper_bound, Hypothesis};
use crate::moments::{ghz_moment_closed, noisy_ghz_r2};
use crate::planner::{
    certification_budget, min_total_budget, required_m, BudgetPlan, DEFAULT_K_CAP,
};
use crate::rational::ExactRational;
use crate::sampling::{
    read_records, run_experiment, write_records, RecordHeader, RecordMode, RECORD_VERSION,
};
use crate::states::{fidelity_to_p, make_noisy_ghz, Block, BlockProduct, StateModel};

#[derive(Parser, Debug)]
#[command(
    name = "randcert",
    version,
    about = "Entanglement certification from randomized local measurements"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Omit the timestamp so equal inputs give byte-identical output.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Emit CSV rows instead of JSON (tables and sweeps only).
    #[arg(long, global = true)]
    csv: bool,
    /// Cap on worker threads.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// TOML file with defaults; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact bounds on R^(2) or R^(4) for separability classes.
    #[command(args_override_self = true)]
    Bounds(BoundsArgs),
    /// Closed-form GHZ moments.
    #[command(args_override_self = true)]
    GhzMoments(GhzArgs),
    /// Noise threshold p* for k-separability violation by noisy GHZ states.
    #[command(args_override_self = true)]
    Threshold(ThresholdArgs),
    /// Measurement budgets for estimation or certification.
    #[command(args_override_self = true)]
    Plan(PlanArgs),
    /// Simulate randomized measurements and write a record file.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Estimate a moment from a record file.
    #[command(args_override_self = true)]
    Estimate(EstimateArgs),
    /// Test separability criteria on a record file.
    #[command(args_override_self = true)]
    Certify(CertifyArgs),
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    n: usize,
    /// k-separability: a number or `all`.
    #[arg(long)]
    k: Option<String>,
    /// m-producibility: a number or `all`.
    #[arg(long = "m-producible")]
    m_producible: Option<String>,
    #[arg(long)]
    fullsep: bool,
    #[arg(long)]
    wclass: bool,
    /// Moment order, 2 or 4.
    #[arg(long, default_value_t = 2)]
    t: u32,
}

#[derive(Args, Debug)]
struct GhzArgs {
    /// Qubit count, or a list such as `2:20` or `4,6,8`.
    #[arg(long)]
    n: String,
    /// White-noise fraction; adds the noisy-state R^(2).
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    /// Qubit count or `odd-asymptotic`.
    #[arg(long)]
    n: Option<String>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Table of p* over `--n-range` and `--ks`.
    #[arg(long)]
    sweep: bool,
    #[arg(long = "n-range", default_value = "2:60")]
    n_range: String,
    #[arg(long, default_value = "2,4,6,10,20")]
    ks: String,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// Target half-width relative to the GHZ value of R^(2).
    #[arg(long = "delta-rel", conflicts_with = "delta_abs")]
    delta_rel: Option<f64>,
    /// Target half-width in absolute units.
    #[arg(long = "delta-abs")]
    delta_abs: Option<f64>,
    /// Error-bar method; defaults to two-sided Cantelli for estimation and
    /// one-sided Cantelli for certification.
    #[arg(long)]
    method: Option<Method>,
    /// Fixed shots per setting (estimation only).
    #[arg(long)]
    k: Option<u64>,
    /// List of fixed shot counts for `--sweep-n`.
    #[arg(long)]
    ks: Option<String>,
    #[arg(long = "k-cap", default_value_t = DEFAULT_K_CAP)]
    k_cap: u64,
    /// Plan a certification of this criterion (e.g. `ksep:3`, `mprod:4`).
    #[arg(long)]
    criterion: Option<CriterionKind>,
    /// Noise of the target noisy GHZ state.
    #[arg(long, conflicts_with = "fidelity")]
    p: Option<f64>,
    /// GHZ fidelity of the target state.
    #[arg(long)]
    fidelity: Option<f64>,
    #[arg(long = "sweep-n", value_name = "A:B")]
    sweep_n: Option<String>,
    #[arg(long = "sweep-gamma", value_name = "A:B:STEP")]
    sweep_gamma: Option<String>,
    #[arg(long = "sweep-p", value_name = "A:B:STEP")]
    sweep_p: Option<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    /// `noisy-ghz`, `ghz`, `product`, `bell-product`, `ksep:K` or `mprod:M`.
    #[arg(long, default_value = "noisy-ghz")]
    state: String,
    #[arg(long, conflicts_with = "fidelity")]
    p: Option<f64>,
    #[arg(long)]
    fidelity: Option<f64>,
    /// Number of settings.
    #[arg(long)]
    m: usize,
    /// Shots per setting.
    #[arg(long)]
    k: u64,
    #[arg(long, required = true)]
    seed: Option<u64>,
    #[arg(long, default_value = "full")]
    mode: RecordMode,
    /// Record file; standard output when absent or `-`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Record file, `-` for standard input.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    t: u64,
    /// Qubit indices for a marginal moment, e.g. `0,1,2`.
    #[arg(long)]
    subset: Option<String>,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value = "cantelli-two-sided")]
    method: Method,
    /// Include the per-setting estimates.
    #[arg(long = "per-setting")]
    per_setting: bool,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value = "cantelli-one-sided")]
    method: Method,
    /// Comma-separated criteria; all applicable ones when absent.
    #[arg(long)]
    criteria: Option<String>,
}

const SUBCOMMANDS: [&str; 7] = [
    "bounds",
    "ghz-moments",
    "threshold",
    "plan",
    "simulate",
    "estimate",
    "certify",
];

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
    result: T,
}

/// Output of one command before rendering.
enum Output {
    Json(serde_json::Value, Vec<String>),
    Table(
        Vec<&'static str>,
        Vec<Vec<String>>,
        serde_json::Value,
        Vec<String>,
    ),
    /// Raw bytes already in their final form (record files on stdout).
    Raw(Vec<u8>),
}

/// Runs the CLI on `args` (including the program name), writing to the
/// given streams. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => return report(err, &e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            return report(err, &Error::validation("--threads must be positive"));
        }
        // fails only if a pool already exists, e.g. when called twice in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let name = command_name(&cli.command);
    let result = match &cli.command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::GhzMoments(a) => cmd_ghz_moments(a),
        Command::Threshold(a) => cmd_threshold(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Certify(a) => cmd_certify(a),
    };
    match result.and_then(|o| render(o, name, &cli, &mut ClosedPipeOk(out), err)) {
        Ok(()) => 0,
        Err(e) => report(err, &e),
    }
}

/// Treats a reader that went away (`randcert ... | head`) as success.
struct ClosedPipeOk<'a>(&'a mut dyn Write);

impl Write for ClosedPipeOk<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        match self.0.write(buf) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(buf.len()),
            r => r,
        }
    }

    fn flush(&mut self) -> std::io::Result<()> {
        match self.0.flush() {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r,
        }
    }
}

fn report(err: &mut dyn Write, e: &Error) -> i32 {
    let _ = writeln!(err, "error: {e}");
    e.exit_code()
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Bounds(_) => "bounds",
        Command::GhzMoments(_) => "ghz-moments",
        Command::Threshold(_) => "threshold",
        Command::Plan(_) => "plan",
        Command::Simulate(_) => "simulate",
        Command::Estimate(_) => "estimate",
        Command::Certify(_) => "certify",
    }
}

fn render(
    o: Output,
    name: &str,
    cli: &Cli,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let doc = |value, warnings: Vec<String>| -> Result<String> {
        let d = Document {
            command: name,
            version: env!("CARGO_PKG_VERSION"),
            generated_at: if cli.reproducible { None } else { Some(now()) },
            warnings,
            result: value,
        };
        serde_json::to_string_pretty(&d).map_err(|e| Error::Io(e.to_string()))
    };
    match o {
        Output::Raw(bytes) => out.write_all(&bytes).map_err(io)?,
        Output::Json(value, warnings) => {
            if cli.csv {
                return Err(Error::validation(format!(
                    "--csv is not available for {name}"
                )));
            }
            for w in &warnings {
                writeln!(err, "warning: {w}").map_err(io)?;
            }
            writeln!(out, "{}", doc(value, warnings)?).map_err(io)?;
        }
        Output::Table(header, rows, value, warnings) => {
            for w in &warnings {
                writeln!(err, "warning: {w}").map_err(io)?;
            }
            if cli.csv {
                writeln!(out, "{}", header.join(",")).map_err(io)?;
                for r in rows {
                    writeln!(out, "{}", r.join(",")).map_err(io)?;
                }
            } else {
                writeln!(out, "{}", doc(value, warnings)?).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

/// Splices config-file settings in as flags placed before the user's own,
/// so later (user) occurrences win. Top-level keys are global flags; a table
/// named after a subcommand supplies that command's flags.
fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Io(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))?;
    let Some(pos) = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(args);
    };
    let sub = args[pos].to_string_lossy().into_owned();
    let mut global = Vec::new();
    let mut local = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(t) if key == &sub => {
                for (k, v) in t {
                    push_flag(&mut local, k, v)?;
                }
            }
            toml::Value::Table(_) => {}
            v => push_flag(&mut global, key, v)?,
        }
    }
    let mut merged: Vec<OsString> = args[..pos].to_vec();
    merged.extend(global.into_iter().map(OsString::from));
    merged.push(args[pos].clone());
    merged.extend(local.into_iter().map(OsString::from));
    merged.extend(args[pos + 1..].iter().cloned());
    Ok(merged)
}

fn push_flag(out: &mut Vec<String>, key: &str, v: &toml::Value) -> Result<()> {
    let flag = format!("--{}", key.replace('_', "-"));
    let text = match v {
        toml::Value::Boolean(true) => {
            out.push(flag);
            return Ok(());
        }
        toml::Value::Boolean(false) => return Ok(()),
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Array(a) => a
            .iter()
            .map(|x| match x {
                toml::Value::String(s) => Ok(s.clone()),
                toml::Value::Integer(i) => Ok(i.to_string()),
                toml::Value::Float(f) => Ok(f.to_string()),
                _ => Err(Error::validation(format!(
                    "config key {key}: unsupported list entry"
                ))),
            })
            .collect::<Result<Vec<_>>>()?
            .join(","),
        _ => {
            return Err(Error::validation(format!(
                "config key {key}: unsupported value"
            )))
        }
    };
    out.push(format!("{flag}={text}"));
    Ok(())
}

/// `"4"`, `"2,4,6"`, `"2:20"` or mixtures like `"2:5,10"`.
fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::validation(format!("bad integer list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once(':') {
            Some((a, b)) => {
                let (a, b): (usize, usize) =
                    (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// `"a:b:step"` (inclusive) or a comma list.
fn parse_float_range(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::validation(format!("bad range {s:?}; expected A:B:STEP or a list"));
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if parts.len() == 1 {
        return s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect();
    }
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| p.parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (a, b, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || b < a {
        return Err(bad());
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(Error::resource(format!("range {s:?} has {count} points")));
    }
    Ok((0..count).map(|i| a + i as f64 * step).collect())
}

fn noise_from(n: usize, p: Option<f64>, fidelity: Option<f64>) -> Result<Option<f64>> {
    match (p, fidelity) {
        (Some(_), Some(_)) => Err(Error::validation("give either --p or --fidelity, not both")),
        (Some(p), None) => Ok(Some(p)),
        (None, Some(f)) => fidelity_to_p(n, f).map(Some),
        (None, None) => Ok(None),
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

#[derive(Serialize)]
struct BoundRow {
    n: usize,
    criterion: String,
    t: u32,
    value: ExactRational,
    value_f64: f64,
    /// Whether an `N`-qubit state can violate the bound.
    applicable: bool,
    saturating_state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assignment: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    assumptions: Vec<String>,
}

fn bound_row(n: usize, kind: CriterionKind, t: u32) -> Result<(BoundRow, Option<String>)> {
    let product = || BlockProduct::new(vec![Block::single(); n]).map(|b| b.to_string());
    let conj = || vec![GHZ_R4_ASSUMPTION.to_string()];
    let (value, sat, assignment, assumptions) = match (kind, t) {
        (CriterionKind::FullSep, 2) => (fullsep_bounds(n)?.0, Some(product()?), None, Vec::new()),
        (CriterionKind::FullSep, 4) => (fullsep_bounds(n)?.1, Some(product()?), None, Vec::new()),
        (CriterionKind::KSep(k), 2) => (
            ksep_bound_r2(n, k)?,
            Some(BlockProduct::ksep_saturating(n, k)?.to_string()),
            None,
            Vec::new(),
        ),
        (CriterionKind::KSep(k), 4) => (ksep_bound_r4(n, k)?, None, None, conj()),
        (CriterionKind::WClass, 2) => (wclass_bound_r2(n)?, None, None, Vec::new()),
        (CriterionKind::WClass, 4) => (
            global_r4_cap(n)?,
            None,
            None,
            vec![
                GHZ_R4_ASSUMPTION.to_string(),
                GLOBAL_R4_FALLBACK.to_string(),
            ],
        ),
        (CriterionKind::MProducible(m), 2) => {
            let (v, a) = mprod_bound_r2(n, m)?;
            (
                v,
                Some(assignment_blocks(&a)?.to_string()),
                Some(a),
                Vec::new(),
            )
        }
        (CriterionKind::MProducible(m), 4) => {
            let (v, a) = mprod_bound_r4(n, m)?;
            (v, None, Some(a), conj())
        }
        _ => {
            return Err(Error::validation(format!(
                "bounds exist for t = 2 and t = 4, got {t}"
            )))
        }
    };
    let warning = check_applicable(n, kind).err().map(|e| match e {
        Error::Inapplicable(msg) => msg,
        other => other.to_string(),
    });
    let value_f64 = value.to_f64();
    Ok((
        BoundRow {
            n,
            criterion: kind.to_string(),
            t,
            value,
            value_f64,
            applicable: warning.is_none(),
            saturating_state: sat,
            assignment,
            assumptions,
        },
        warning,
    ))
}

fn cmd_bounds(a: &BoundsArgs) -> Result<Output> {
    let n = a.n;
    let select =
        |spec: &Option<String>, all: std::ops::RangeInclusive<usize>| -> Result<Vec<usize>> {
            match spec.as_deref() {
                None => Ok(Vec::new()),
                Some("all") => Ok(all.collect()),
                Some(s) => parse_usize_list(s),
            }
        };
    let mut kinds = Vec::new();
    let any = a.k.is_some() || a.m_producible.is_some() || a.fullsep || a.wclass;
    if a.fullsep || !any {
        kinds.push(CriterionKind::FullSep);
    }
    if a.wclass || (!any && n >= 3) {
        kinds.push(CriterionKind::WClass);
    }
    if any {
        kinds.extend(
            select(&a.k, 2..=n / 2)?
                .into_iter()
                .map(CriterionKind::KSep),
        );
        kinds.extend(
            select(&a.m_producible, 2..=n.saturating_sub(1))?
                .into_iter()
                .map(CriterionKind::MProducible),
        );
    } else {
        kinds.extend((2..=n / 2).map(CriterionKind::KSep));
        kinds.extend((2..n).map(CriterionKind::MProducible));
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for kind in kinds {
        let (row, w) = bound_row(n, kind, a.t)?;
        if let Some(w) = w {
            // unsolicited rows are simply marked; explicit requests also warn
            if any {
                warnings.push(format!("{kind}: {w}"));
            }
        }
        rows.push(row);
    }
    let csv = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.criterion.clone(),
                r.t.to_string(),
                r.value.to_string(),
                format!("{:e}", r.value_f64),
                r.applicable.to_string(),
                opt(&r.saturating_state),
                r.assignment
                    .as_ref()
                    .map(|a| {
                        a.iter()
                            .map(ToString::to_string)
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default(),
            ]
        })
        .collect();
    Ok(Output::Table(
        vec![
            "n",
            "criterion",
            "t",
            "value",
            "value_f64",
            "applicable",
            "saturating_state",
            "assignment",
        ],
        csv,
        to_value(&rows)?,
        warnings,
    ))
}

#[derive(Serialize)]
struct GhzRow {
    n: usize,
    r2: ExactRational,
    r2_f64: f64,
    r4: ExactRational,
    r4_f64: f64,
    /// `3^N R^(2)`.
    sector_length: ExactRational,
    #[serde(skip_serializing_if = "Option::is_none")]
    noisy_r2: Option<f64>,
}

fn cmd_ghz_moments(a: &GhzArgs) -> Result<Output> {
    let mut rows = Vec::new();
    for n in parse_usize_list(&a.n)? {
        if n == 0 {
            return Err(Error::validation("number of qubits must be positive"));
        }
        let r2 = ghz_moment_closed(n, 2)?;
        let r4 = ghz_moment_closed(n, 4)?;
        let sector_length = r2.clone() * ExactRational::from_integer(3u32).pow(n as u32);
        let noisy_r2 = a.p.map(|p| noisy_ghz_r2(n, p)).transpose()?;
        rows.push(GhzRow {
            n,
            r2_f64: r2.to_f64(),
            r4_f64: r4.to_f64(),
            r2,
            r4,
            sector_length,
            noisy_r2,
        });
    }
    let csv = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.r2.to_string(),
                format!("{:e}", r.r2_f64),
                r.r4.to_string(),
                format!("{:e}", r.r4_f64),
                r.sector_length.to_string(),
                r.noisy_r2.map(|v| format!("{v:e}")).unwrap_or_default(),
            ]
        })
        .collect();
    Ok(Output::Table(
        vec![
            "n",
            "r2",
            "r2_f64",
            "r4",
            "r4_f64",
            "sector_length",
            "noisy_r2",
        ],
        csv,
        to_value(&rows)?,
        Vec::new(),
    ))
}

#[derive(Serialize)]
struct ThresholdRow {
    /// Qubit count, or `odd-asymptotic`.
    n: String,
    k: usize,
    p_star: f64,
}

const ASYMPTOTIC: &str = "odd-asymptotic";

fn cmd_threshold(a: &ThresholdArgs) -> Result<Output> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let asym = a.n.as_deref() == Some(ASYMPTOTIC);
    let row = |n: Option<usize>, k: usize| -> Result<ThresholdRow> {
        Ok(match n {
            Some(n) => ThresholdRow {
                n: n.to_string(),
                k,
                p_star: noise_threshold(n, k)?,
            },
            None => ThresholdRow {
                n: ASYMPTOTIC.into(),
                k,
                p_star: noise_threshold_asymptotic(k)?,
            },
        })
    };
    if a.sweep {
        let ks = parse_usize_list(&a.ks)?;
        if asym {
            for k in ks {
                rows.push(row(None, k)?);
            }
        } else {
            for n in parse_usize_list(&a.n_range)? {
                for &k in ks.iter().filter(|&&k| k >= 2 && k <= n / 2) {
                    rows.push(row(Some(n), k)?);
                }
            }
        }
    } else {
        let n = match a.n.as_deref() {
            None => return Err(Error::validation("--n is required unless --sweep is given")),
            Some(ASYMPTOTIC) => None,
            Some(s) => Some(s.parse::<usize>().map_err(|_| {
                Error::validation(format!("--n expects a count or {ASYMPTOTIC}, got {s:?}"))
            })?),
        };
        let r = row(n, a.k)?;
        if let Some(n) = n {
            if let Err(Error::Inapplicable(msg)) = check_applicable(n, CriterionKind::KSep(a.k)) {
                warnings.push(msg);
            }
        }
        rows.push(r);
    }
    let csv = rows
        .iter()
        .map(|r| vec![r.n.clone(), r.k.to_string(), format!("{:e}", r.p_star)])
        .collect();
    Ok(Output::Table(
        vec!["n", "k", "p_star"],
        csv,
        to_value(&rows)?,
        warnings,
    ))
}

#[derive(Serialize)]
struct PlanRow {
    n: usize,
    gamma: f64,
    p: Option<f64>,
    criterion: Option<String>,
    method: Method,
    delta: Option<f64>,
    k: Option<u64>,
    m: Option<u64>,
    m_tot: Option<u128>,
    /// `ok`, or the error kind that stopped this point.
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

impl PlanRow {
    fn csv(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.gamma.to_string(),
            opt(&self.p),
            opt(&self.criterion),
            self.method.to_string(),
            self.delta.map(|d| format!("{d:e}")).unwrap_or_default(),
            opt(&self.k),
            opt(&self.m),
            opt(&self.m_tot),
            self.status.clone(),
        ]
    }
}

struct PlanPoint {
    n: usize,
    gamma: f64,
    p: Option<f64>,
    k: Option<u64>,
}

fn plan_point(a: &PlanArgs, pt: &PlanPoint) -> Result<BudgetPlan> {
    match a.criterion {
        Some(c) => {
            if pt.k.is_some() {
                return Err(Error::validation(
                    "fixed K is only supported for estimation plans",
                ));
            }
            let p = pt
                .p
                .ok_or_else(|| Error::validation("certification plans need --p or --fidelity"))?;
            let method = a.method.unwrap_or(Method::CantelliOneSided);
            certification_budget(pt.n, c, noisy_ghz_r2(pt.n, p)?, pt.gamma, method, a.k_cap)
        }
        None => {
            let method = a.method.unwrap_or(Method::CantelliTwoSided);
            let ghz2 = ghz_moment_closed(pt.n, 2)?.to_f64();
            let delta_rel = match (a.delta_rel, a.delta_abs) {
                (Some(r), None) => r,
                (None, Some(d)) => d / ghz2,
                (None, None) => 0.1,
                _ => {
                    return Err(Error::validation(
                        "give either --delta-rel or --delta-abs, not both",
                    ))
                }
            };
            match pt.k {
                None => min_total_budget(pt.n, pt.gamma, delta_rel, method, a.k_cap),
                Some(k) => {
                    let m = required_m(pt.n, k, pt.gamma, delta_rel, method)?;
                    let vb = variance_upper_bound(pt.n, k, Hypothesis::Global)?;
                    let achieved = error_bar(method, m as usize, k, pt.gamma, vb.value)?.delta;
                    Ok(BudgetPlan {
                        n_qubits: pt.n,
                        criterion: None,
                        gamma: pt.gamma,
                        method,
                        delta: delta_rel * ghz2,
                        delta_rel: Some(delta_rel),
                        k,
                        m,
                        m_tot: m as u128 * k as u128,
                        achieved,
                        assumptions: vb.assumptions,
                    })
                }
            }
        }
    }
}

fn cmd_plan(a: &PlanArgs) -> Result<Output> {
    let sweeps = [
        a.sweep_n.is_some(),
        a.sweep_gamma.is_some(),
        a.sweep_p.is_some(),
    ];
    if sweeps.iter().filter(|&&s| s).count() > 1 {
        return Err(Error::validation(
            "use one of --sweep-n, --sweep-gamma, --sweep-p",
        ));
    }
    if a.sweep_p.is_some() && a.criterion.is_none() {
        return Err(Error::validation("--sweep-p needs --criterion"));
    }
    let need_n = || a.n.ok_or_else(|| Error::validation("--n is required"));
    let fixed_ks: Vec<Option<u64>> = match (&a.ks, a.k) {
        (Some(_), Some(_)) => return Err(Error::validation("give either --k or --ks, not both")),
        (Some(s), None) => parse_usize_list(s)?
            .into_iter()
            .map(|k| Some(k as u64))
            .collect(),
        (None, k) => vec![k],
    };
    let mut points = Vec::new();
    if let Some(s) = &a.sweep_n {
        for n in parse_usize_list(s)? {
            let p = noise_from(n, a.p, a.fidelity)?;
            for &k in &fixed_ks {
                points.push(PlanPoint {
                    n,
                    gamma: a.gamma,
                    p,
                    k,
                });
            }
        }
    } else if let Some(s) = &a.sweep_gamma {
        let n = need_n()?;
        let p = noise_from(n, a.p, a.fidelity)?;
        for gamma in parse_float_range(s)? {
            points.push(PlanPoint {
                n,
                gamma,
                p,
                k: fixed_ks[0],
            });
        }
    } else if let Some(s) = &a.sweep_p {
        if a.p.is_some() || a.fidelity.is_some() {
            return Err(Error::validation("--sweep-p replaces --p and --fidelity"));
        }
        let n = need_n()?;
        for p in parse_float_range(s)? {
            points.push(PlanPoint {
                n,
                gamma: a.gamma,
                p: Some(p),
                k: None,
            });
        }
    } else {
        let n = need_n()?;
        if a.ks.is_some() {
            return Err(Error::validation("--ks applies to --sweep-n"));
        }
        let p = noise_from(n, a.p, a.fidelity)?;
        let plan = plan_point(
            a,
            &PlanPoint {
                n,
                gamma: a.gamma,
                p,
                k: a.k,
            },
        )?;
        let row = PlanRow {
            n,
            gamma: a.gamma,
            p,
            criterion: plan.criterion.map(|c| c.to_string()),
            method: plan.method,
            delta: Some(plan.delta),
            k: Some(plan.k),
            m: Some(plan.m),
            m_tot: Some(plan.m_tot),
            status: "ok".into(),
            message: None,
        };
        return Ok(Output::Table(
            plan_header(),
            vec![row.csv()],
            to_value(&plan)?,
            Vec::new(),
        ));
    }
    let rows: Vec<PlanRow> = points
        .iter()
        .map(|pt| {
            let res = plan_point(a, pt);
            let method = a.method.unwrap_or(if a.criterion.is_some() {
                Method::CantelliOneSided
            } else {
                Method::CantelliTwoSided
            });
            let base = PlanRow {
                n: pt.n,
                gamma: pt.gamma,
                p: pt.p,
                criterion: a.criterion.map(|c| c.to_string()),
                method,
                delta: None,
                k: pt.k,
                m: None,
                m_tot: None,
                status: "ok".into(),
                message: None,
            };
            match res {
                Ok(plan) => PlanRow {
                    delta: Some(plan.delta),
                    k: Some(plan.k),
                    m: Some(plan.m),
                    m_tot: Some(plan.m_tot),
                    ..base
                },
                Err(e) => PlanRow {
                    status: error_kind(&e).into(),
                    message: Some(e.to_string()),
                    ..base
                },
            }
        })
        .collect();
    if rows.iter().all(|r| r.status == "validation") {
        if let Some(m) = &rows[0].message {
            return Err(Error::validation(
                m.trim_start_matches("validation error: ").to_string(),
            ));
        }
    }
    let csv = rows.iter().map(PlanRow::csv).collect();
    Ok(Output::Table(
        plan_header(),
        csv,
        to_value(&rows)?,
        Vec::new(),
    ))
}

fn plan_header() -> Vec<&'static str> {
    vec![
        "n",
        "gamma",
        "p",
        "criterion",
        "method",
        "delta",
        "k",
        "m",
        "m_tot",
        "status",
    ]
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Validation(_) => "validation",
        Error::Resource(_) => "resource",
        Error::Inapplicable(_) => "inapplicable",
        Error::Infeasible(_) => "infeasible",
        Error::Ingestion { .. } => "ingestion",
        Error::Io(_) => "io",
    }
}

fn build_state(n: usize, spec: &str, p: Option<f64>) -> Result<StateModel> {
    let spec = spec.trim().to_ascii_lowercase();
    let no_noise = |what: &str| -> Result<()> {
        if p.is_some() {
            return Err(Error::validation(format!(
                "--p/--fidelity do not apply to {what}"
            )));
        }
        Ok(())
    };
    Ok(match spec.as_str() {
        "noisy-ghz" | "noisy_ghz" => make_noisy_ghz(n, p.unwrap_or(0.0))?.into(),
        "ghz" => {
            no_noise("ghz")?;
            make_noisy_ghz(n, 0.0)?.into()
        }
        "product" => {
            no_noise("product")?;
            BlockProduct::new(vec![Block::single(); n])?.into()
        }
        "bell-product" => {
            no_noise("bell-product")?;
            if !n.is_multiple_of(2) {
                return Err(Error::validation(
                    "bell-product needs an even number of qubits",
                ));
            }
            BlockProduct::new(vec![Block::bell(); n / 2])?.into()
        }
        _ => {
            no_noise(&spec)?;
            match spec.parse::<CriterionKind>() {
                Ok(CriterionKind::KSep(k)) => BlockProduct::ksep_saturating(n, k)?.into(),
                Ok(CriterionKind::MProducible(m)) => assignment_blocks(&mprod_bound_r2(n, m)?.1)?.into(),
                _ => {
                    return Err(Error::validation(format!(
                        "unknown state {spec:?}; expected noisy-ghz, ghz, product, bell-product, ksep:K or mprod:M"
                    )))
                }
            }
        }
    })
}

#[derive(Serialize)]
struct SimulateSummary {
    output: String,
    settings: usize,
    header: RecordHeader,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Output> {
    let seed = a
        .seed
        .ok_or_else(|| Error::validation("--seed is required"))?;
    let p = noise_from(a.n, a.p, a.fidelity)?;
    let state = build_state(a.n, &a.state, p)?;
    let records = run_experiment(&state, a.m, a.k, seed, a.mode)?;
    let header = RecordHeader {
        version: RECORD_VERSION,
        n_qubits: a.n,
        k_shots: a.k,
        mode: a.mode,
        seed: Some(seed),
        state_descriptor: state.descriptor(),
    };
    match a.output.as_deref().filter(|p| p.as_os_str() != "-") {
        None => {
            let mut buf = Vec::new();
            write_records(&mut buf, &header, &records)?;
            Ok(Output::Raw(buf))
        }
        Some(path) => {
            let f =
                File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            write_records(BufWriter::new(f), &header, &records)?;
            let summary = SimulateSummary {
                output: path.display().to_string(),
                settings: records.len(),
                header,
            };
            Ok(Output::Json(to_value(&summary)?, Vec::new()))
        }
    }
}

fn open_records(
    path: &std::path::Path,
) -> Result<(RecordHeader, Vec<crate::sampling::ShotRecord>)> {
    if path.as_os_str() == "-" {
        return read_records(std::io::stdin().lock());
    }
    let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let r: Box<dyn BufRead> = Box::new(BufReader::new(f));
    read_records(r)
}

#[derive(Serialize)]
struct EstimateDoc {
    header: RecordHeader,
    subset: Option<Vec<usize>>,
    estimate: crate::estimation::MomentEstimate,
}

fn cmd_estimate(a: &EstimateArgs) -> Result<Output> {
    let (header, records) = open_records(&a.input)?;
    let subset = a.subset.as_deref().map(parse_usize_list).transpose()?;
    let stats = match &subset {
        None => records
            .iter()
            .map(|r| r.stats())
            .collect::<Result<Vec<_>>>()?,
        Some(s) => {
            if let Some(&q) = s.iter().find(|&&q| q >= header.n_qubits) {
                return Err(Error::validation(format!(
                    "subset index {q} out of range for N = {}",
                    header.n_qubits
                )));
            }
            records
                .iter()
                .map(|r| r.marginal_stats(s))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mut estimate = moment_estimate(&stats, a.t)?;
    let mut warnings = Vec::new();
    if a.t == 2 {
        let n_eff = subset.as_ref().map_or(header.n_qubits, Vec::len);
        let vb = variance_upper_bound(n_eff, estimate.k, Hypothesis::Global)?;
        estimate.error_bar = Some(error_bar(
            a.method, estimate.m, estimate.k, a.gamma, vb.value,
        )?);
        warnings.extend(vb.assumptions);
    } else {
        warnings.push(format!(
            "no error bar for t = {}: variance bounds cover R^(2) only",
            a.t
        ));
    }
    if !a.per_setting {
        estimate.per_setting.clear();
    }
    Ok(Output::Json(
        to_value(&EstimateDoc {
            header,
            subset,
            estimate,
        })?,
        warnings,
    ))
}

#[derive(Serialize)]
struct CertifyDoc {
    header: RecordHeader,
    report: crate::certify::CertificationReport,
}

fn cmd_certify(a: &CertifyArgs) -> Result<Output> {
    let (header, records) = open_records(&a.input)?;
    let n = header.n_qubits;
    let criteria = match &a.criteria {
        None => applicable_criteria(n),
        Some(s) => s
            .split(',')
            .map(|c| c.parse::<CriterionKind>())
            .collect::<Result<Vec<_>>>()?,
    };
    let stats = records
        .iter()
        .map(|r| r.stats())
        .collect::<Result<Vec<_>>>()?;
    let report = certify_criteria(&stats, n, a.gamma, a.method, &criteria)?;
    Ok(Output::Json(
        to_value(&CertifyDoc { header, report })?,
        Vec::new(),
    ))
}
