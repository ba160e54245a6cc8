//! `dseries`: reproducible experiments on divisor-series digit expansions.
//!
//! Exit codes: 0 success, 2 usage error, 3 resource/budget exceeded.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use num_traits::Pow;
use serde_json::json;

use dseries_core::analysis;
use dseries_core::construction::{self, CrtPlan, PlanMode, TailRule};
use dseries_core::digits::{read_digit_file, write_digit_file, Certification};
use dseries_core::nt::NtError;
use dseries_core::series::{
    self, CoefficientRule, SeriesBudget, SeriesError, SeriesSpec, TailVerdict,
};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "dseries", version, about = "Divisor-series digit experiments")]
struct Cli {
    /// Flat key-value config file; each line `key value` becomes `--key value`,
    /// a `command` line selects the subcommand. Replaces positional flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cap on worker threads (0 = all cores). Never changes outputs.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Seed recorded in artifacts for randomized workflows.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certified digit expansion of the series.
    Digits(DigitsArgs),
    /// Build a congruence plan and emit it as JSON.
    Plan(PlanArgs),
    /// Verify a plan's divisibility claims over an m range.
    Verify(VerifyArgs),
    /// Search for the smallest m0 satisfying the certificate conditions.
    FindM0(FindM0Args),
    /// Tail census over m below a limit.
    Census(CensusArgs),
    /// Report zero runs in a digit file.
    Runs(RunsArgs),
    /// Scan a digit file for surviving (preperiod, period) pairs.
    Falsify(FalsifyArgs),
}

#[derive(Args, Debug)]
struct DigitsArgs {
    #[arg(long)]
    base: u32,
    /// constant:<a> | alternating | periodic:<a,b,...> | explicit:<a,b,...>
    #[arg(long)]
    rule: String,
    /// Number of certified fractional digits to aim for.
    #[arg(long)]
    target: u64,
    /// Truncation budget (largest partial-sum length).
    #[arg(long, default_value_t = 1 << 16)]
    max_scale: u64,
    /// Digit file output path (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary output path.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    base: u32,
    #[arg(long)]
    k: u32,
    #[arg(long)]
    j0: u32,
    #[arg(long)]
    prime_floor: u64,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Plan JSON produced by the `plan` subcommand.
    #[arg(long)]
    plan: PathBuf,
    /// Check m in 0..m_limit.
    #[arg(long)]
    m_limit: u64,
    #[arg(long, default_value_t = 1 << 22)]
    trial_bound: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FindM0Args {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    rule: String,
    #[arg(long)]
    m_limit: u64,
    #[arg(long, value_enum, default_value_t = TailRuleArg::Off)]
    tail_rule: TailRuleArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CensusArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    rule: String,
    #[arg(long)]
    m_limit: u64,
    /// Largest tail-comparison window.
    #[arg(long, default_value_t = 1 << 16)]
    max_window: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunsArgs {
    /// Digit file as written by `digits`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    min_len: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FalsifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    max_preperiod: u64,
    #[arg(long)]
    max_period: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Paper,
    Claimed,
}

impl From<ModeArg> for PlanMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Paper => PlanMode::PaperFaithful,
            ModeArg::Claimed => PlanMode::ClaimedStrength,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum TailRuleArg {
    Off,
    Strict,
}

impl From<TailRuleArg> for TailRule {
    fn from(t: TailRuleArg) -> Self {
        match t {
            TailRuleArg::Off => TailRule::Off,
            TailRuleArg::Strict => TailRule::Strict,
        }
    }
}

fn parse_rule(text: &str) -> Result<CoefficientRule> {
    let (kind, rest) = match text.split_once(':') {
        Some((k, r)) => (k, Some(r)),
        None => (text, None),
    };
    let parse_list = |r: Option<&str>| -> Result<Vec<i64>> {
        let r = r.context("rule needs a value list after `:`")?;
        r.split(',')
            .map(|tok| tok.trim().parse::<i64>().context("bad coefficient"))
            .collect()
    };
    match kind {
        "constant" => {
            let a = rest
                .context("constant rule needs a value, e.g. constant:1")?
                .trim()
                .parse::<i64>()
                .context("bad constant coefficient")?;
            Ok(CoefficientRule::Constant(a))
        }
        "alternating" => Ok(CoefficientRule::Alternating),
        "periodic" => Ok(CoefficientRule::Periodic(parse_list(rest)?)),
        "explicit" => Ok(CoefficientRule::Explicit(parse_list(rest)?)),
        other => anyhow::bail!("unknown rule `{other}` (constant/alternating/periodic/explicit)"),
    }
}

/// Expand a flat key-value config file into argv form.
fn expand_config(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut command = None;
    let mut flags = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(char::is_whitespace)
            .map(|(k, v)| (k, v.trim()))
            .unwrap_or((line, ""));
        if key == "command" {
            command = Some(value.to_string());
        } else {
            flags.push(format!("--{key}"));
            if !value.is_empty() {
                flags.push(value.to_string());
            }
        }
    }
    let command = command.context("config file needs a `command` line")?;
    let mut argv = vec!["dseries".to_string(), command];
    argv.extend(flags);
    Ok(argv)
}

fn resolved_config(cli_seed: u64, command: &str, fields: serde_json::Value) -> serde_json::Value {
    json!({
        "command": command,
        "seed": cli_seed,
        "args": fields,
    })
}

fn write_text(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn csv_preamble(config: &serde_json::Value) -> String {
    format!(
        "# schema_version {SCHEMA_VERSION}\n# config {}\n",
        serde_json::to_string(config).unwrap()
    )
}

fn run_digits(args: &DigitsArgs, seed: u64) -> Result<()> {
    let rule = parse_rule(&args.rule)?;
    let spec = SeriesSpec::new(args.base, rule)?;
    let budget = SeriesBudget {
        max_truncation: args.max_scale,
        ..Default::default()
    };
    let prefix = series::certified_prefix(&spec, args.target, &budget)?;
    let cert = if prefix.exact {
        Certification::Exact
    } else {
        Certification::Certified(prefix.certified_length)
    };
    let mut buf = Vec::new();
    write_digit_file(&mut buf, &prefix.digits, cert)?;
    write_text(&args.out, std::str::from_utf8(&buf).unwrap())?;

    let config = resolved_config(
        seed,
        "digits",
        json!({
            "base": args.base,
            "rule": args.rule,
            "target": args.target,
            "max_scale": args.max_scale,
        }),
    );
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "M": prefix.truncation,
        "tail_bound": {
            "num": prefix.tail_bound.numer().to_string(),
            "den": prefix.tail_bound.denom().to_string(),
        },
        "certified_length": prefix.certified_length,
        "exact": prefix.exact,
        "met_target": prefix.met_target,
    });
    if args.summary.is_some() {
        write_text(&args.summary, &format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    }
    if !prefix.met_target {
        anyhow::bail!(Budget(format!(
            "budget exhausted at truncation {}: certified {} of {} digits",
            prefix.truncation, prefix.certified_length, args.target
        )));
    }
    Ok(())
}

fn run_plan(args: &PlanArgs, seed: u64) -> Result<()> {
    let plan = construction::build_plan(
        args.base,
        args.k,
        args.j0,
        args.prime_floor,
        args.mode.into(),
    )?;
    let config = resolved_config(
        seed,
        "plan",
        json!({
            "base": args.base, "k": args.k, "j0": args.j0,
            "prime_floor": args.prime_floor,
            "mode": match args.mode { ModeArg::Paper => "paper", ModeArg::Claimed => "claimed" },
        }),
    );
    let artifact = json!({
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "plan": serde_json::to_value(&plan)?,
    });
    write_text(&args.out, &format!("{}\n", serde_json::to_string_pretty(&artifact)?))?;
    Ok(())
}

fn load_plan(path: &Path) -> Result<CrtPlan> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading plan {}", path.display()))?;
    // accept both the bare plan and the full artifact wrapper
    if let Ok(plan) = CrtPlan::from_json(&text) {
        return Ok(plan);
    }
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let plan = value
        .get("plan")
        .context("no plan object in JSON artifact")?;
    Ok(serde_json::from_value(plan.clone())?)
}

fn run_verify(args: &VerifyArgs, seed: u64) -> Result<()> {
    let plan = load_plan(&args.plan)?;
    let report = construction::verify_plan(&plan, 0..args.m_limit, args.trial_bound);
    let config = resolved_config(
        seed,
        "verify",
        json!({
            "plan": args.plan.display().to_string(),
            "m_limit": args.m_limit,
            "trial_bound": args.trial_bound,
        }),
    );
    let mut out = csv_preamble(&config);
    out.push_str(&format!("# coprime_ok {}\n", report.coprime_ok));
    out.push_str("m,j,n,target_exponent,status,divisor_count,base_valuation\n");
    for row in &report.rows {
        let (status, d, v) = match &row.outcome {
            construction::SlotOutcome::Pass {
                divisor_count,
                base_valuation,
            } => ("pass", divisor_count.to_string(), base_valuation.to_string()),
            construction::SlotOutcome::Fail {
                divisor_count,
                base_valuation,
            } => ("fail", divisor_count.to_string(), base_valuation.to_string()),
            construction::SlotOutcome::Unverified => ("unverified", String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.m, row.j, row.n, row.target_exponent, status, d, v
        ));
    }
    write_text(&args.out, &out)?;
    Ok(())
}

fn run_find_m0(args: &FindM0Args, seed: u64) -> Result<()> {
    let plan = load_plan(&args.plan)?;
    let rule = parse_rule(&args.rule)?;
    let spec = SeriesSpec::new(plan.base, rule)?;
    let cert = construction::find_m0(&plan, &spec, args.m_limit, args.tail_rule.into())?;
    let config = resolved_config(
        seed,
        "find-m0",
        json!({
            "plan": args.plan.display().to_string(),
            "rule": args.rule,
            "m_limit": args.m_limit,
            "tail_rule": match args.tail_rule { TailRuleArg::Off => "off", TailRuleArg::Strict => "strict" },
        }),
    );
    let artifact = json!({
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "certificate": serde_json::to_value(&cert)?,
    });
    write_text(&args.out, &format!("{}\n", serde_json::to_string_pretty(&artifact)?))?;
    Ok(())
}

fn run_census(args: &CensusArgs, seed: u64) -> Result<()> {
    let plan = load_plan(&args.plan)?;
    let rule = parse_rule(&args.rule)?;
    let spec = SeriesSpec::new(plan.base, rule)?;
    let budget = SeriesBudget {
        max_window: args.max_window,
        ..Default::default()
    };
    let report = series::lemma1_census(&plan, &spec, args.m_limit, &budget)?;
    let config = resolved_config(
        seed,
        "census",
        json!({
            "plan": args.plan.display().to_string(),
            "rule": args.rule,
            "m_limit": args.m_limit,
            "max_window": args.max_window,
        }),
    );
    let mut out = csv_preamble(&config);
    out.push_str(&format!("# exceedance_count {}\n", report.exceedance_count));
    out.push_str(&format!("# unresolved_count {}\n", report.unresolved_count));
    out.push_str(&format!("# bound_shape {}\n", report.bound_shape));
    out.push_str("m,cutoff,threshold_num,threshold_den,verdict,window_used\n");
    for row in &report.rows {
        let den = Pow::pow(&BigUint::from(report.base), row.threshold_exp);
        let verdict = match row.verdict {
            TailVerdict::Above => "above",
            TailVerdict::Below => "below",
            TailVerdict::Unresolved => "unresolved",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.m, row.cutoff, row.threshold_num, den, verdict, row.window_used
        ));
    }
    write_text(&args.out, &out)?;
    Ok(())
}

fn run_runs(args: &RunsArgs, seed: u64) -> Result<()> {
    let text = fs::read(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let (digits, cert) = read_digit_file(&mut BufReader::new(text.as_slice()))?;
    let runs = analysis::find_zero_runs(&digits, cert, args.min_len)?;
    let config = resolved_config(
        seed,
        "runs",
        json!({
            "input": args.input.display().to_string(),
            "min_len": args.min_len,
        }),
    );
    let mut out = csv_preamble(&config);
    out.push_str("start,length,preceded_by_nonzero,within_certified\n");
    for run in &runs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            run.start, run.length, run.preceded_by_nonzero, run.within_certified
        ));
    }
    write_text(&args.out, &out)?;
    Ok(())
}

fn run_falsify(args: &FalsifyArgs, seed: u64) -> Result<()> {
    let text = fs::read(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let (mut digits, cert) = read_digit_file(&mut BufReader::new(text.as_slice()))?;
    if cert == Certification::Exact {
        // exact expansions end on zeros; pad so the scan has room
        digits = analysis::extend_exact(&digits, args.max_preperiod + 2 * args.max_period);
    }
    let verdict = analysis::periodicity_scan(&digits, cert_for(&digits, cert), args.max_preperiod, args.max_period)?;
    let config = resolved_config(
        seed,
        "falsify",
        json!({
            "input": args.input.display().to_string(),
            "max_preperiod": args.max_preperiod,
            "max_period": args.max_period,
        }),
    );
    let artifact = json!({
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "L": verdict.prefix_length,
        "S": verdict.max_preperiod,
        "P": verdict.max_period,
        "survivors": verdict.survivors,
        "summary": verdict.summary(),
    });
    write_text(&args.out, &format!("{}\n", serde_json::to_string_pretty(&artifact)?))?;
    Ok(())
}

fn cert_for(digits: &dseries_core::DigitString, cert: Certification) -> Certification {
    match cert {
        Certification::Exact => Certification::Certified(digits.digits.len() as u64),
        c => c,
    }
}

/// Marker for budget-exhaustion failures (exit code 3).
#[derive(Debug)]
struct Budget(String);

impl std::fmt::Display for Budget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for Budget {}

fn is_budget_error(err: &anyhow::Error) -> bool {
    if err.downcast_ref::<Budget>().is_some() {
        return true;
    }
    for cause in err.chain() {
        if let Some(nt) = cause.downcast_ref::<NtError>() {
            if matches!(nt, NtError::Resource { .. }) {
                return true;
            }
        }
        if let Some(s) = cause.downcast_ref::<SeriesError>() {
            if matches!(s, SeriesError::CensusScale) {
                return true;
            }
        }
        if let Some(p) = cause.downcast_ref::<construction::PlanError>() {
            if matches!(p, construction::PlanError::Resource { .. }) {
                return true;
            }
        }
    }
    false
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let config_path = raw
        .iter()
        .position(|a| a == "--config")
        .and_then(|i| raw.get(i + 1))
        .map(PathBuf::from);
    let cli = if let Some(path) = config_path {
        let argv = match expand_config(&path) {
            Ok(v) => v,
            Err(err) => {
                eprintln!("error: {err:#}");
                return ExitCode::from(2);
            }
        };
        Cli::parse_from(argv)
    } else {
        Cli::parse()
    };

    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }

    let Some(command) = cli.command else {
        eprintln!("error: a subcommand (or a config file with a `command` line) is required");
        return ExitCode::from(2);
    };

    let result = match &command {
        Command::Digits(args) => run_digits(args, cli.seed),
        Command::Plan(args) => run_plan(args, cli.seed),
        Command::Verify(args) => run_verify(args, cli.seed),
        Command::FindM0(args) => run_find_m0(args, cli.seed),
        Command::Census(args) => run_census(args, cli.seed),
        Command::Runs(args) => run_runs(args, cli.seed),
        Command::Falsify(args) => run_falsify(args, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_budget_error(&err) {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
