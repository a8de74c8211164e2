//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a check is violated, 2 on any input or
//! validation error. Errors are printed to stderr as JSON with a
//! machine-readable `code`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::constants::{lambda_eps, optimal_eps_for_time, prefactor_c, CdConstants};
use crate::distance::distance;
use crate::group::{builtin_heisenberg, validate_spec, GroupSpec, Point, ValidatedSpec};
use crate::lab::{CheckSpec, Lab, SlackRow};
use crate::report::{CheckReport, Estimate, Verdict};
use crate::sim::{estimate_entropy_decay, mehler_qt, sample_heat, sample_invariant, sde_qt, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "carnot-ou", version, about = "Ornstein-Uhlenbeck semigroups on step-2 Carnot groups")]
pub struct Cli {
    /// Group spec JSON; the Heisenberg group when omitted.
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Curvature constants, rate and prefactor.
    Constants(ConstantsArgs),
    /// Run the checks listed in a scenario file.
    Check(CheckArgs),
    /// Variance or entropy decay curve with its bound, as CSV.
    Decay(DecayArgs),
    /// Carnot-Carathéodory distance between two points.
    Distance(DistanceArgs),
    /// Sample endpoints or estimate `Q_t f(x)`.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Optimize ε for the bound at this time.
    #[arg(long)]
    pub opt_time: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub scenario: PathBuf,
    /// CSV summary path; overrides the scenario's.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecayKind {
    Variance,
    Entropy,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 4_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 200)]
    pub inner: usize,
    #[arg(long, default_value_t = 256)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[arg(long)]
    pub f: String,
    /// Comma-separated increasing times.
    #[arg(long)]
    pub times: String,
    #[arg(long, value_enum, default_value_t = DecayKind::Variance)]
    pub kind: DecayKind,
    #[arg(long, default_value_t = 2.0)]
    pub eps: f64,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub from: String,
    #[arg(long, allow_hyphen_values = true)]
    pub to: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    Heat,
    Invariant,
    Mehler,
    Sde,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimKind::Heat)]
    pub kind: SimKind,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[command(flatten)]
    pub sim: SimArgs,
}

/// Error with a code, reported as JSON and mapped to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    fn new(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

macro_rules! coded {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.code(), e.to_string())
            }
        }
    )*};
}

coded!(
    crate::group::GroupError,
    crate::constants::ConstantsError,
    crate::sim::SimError,
    crate::lab::LabError,
    crate::distance::DistanceError,
    crate::jet::ExprError
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("Io", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::new("Io", e.to_string())
    }
}

/// Group reference inside a scenario: a path or an inline spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecRef {
    Path(PathBuf),
    Inline(GroupSpec),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOutputs {
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub slack_csv: Option<PathBuf>,
}

/// A batch of checks with everything needed to rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub spec: Option<SpecRef>,
    #[serde(default = "one")]
    pub s: f64,
    pub constants: Option<CdConstants>,
    pub checks: Vec<CheckSpec>,
    pub seed: u64,
    #[serde(default)]
    pub sim: Option<ScenarioSim>,
    #[serde(default)]
    pub outputs: ScenarioOutputs,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSim {
    pub paths: Option<usize>,
    pub steps_per_unit_time: Option<usize>,
    pub inner_paths: Option<usize>,
}

fn load_spec(path: Option<&Path>) -> Result<ValidatedSpec, CliError> {
    let spec = match path {
        None => builtin_heisenberg(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::new("SpecNotFound", format!("{}: {e}", p.display())))?;
            GroupSpec::from_json(&text)?
        }
    };
    Ok(validate_spec(spec)?)
}

fn parse_times(text: &str) -> Result<Vec<f64>, CliError> {
    let times: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let times = times.map_err(|e| CliError::new("InvalidTimes", e.to_string()))?;
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(CliError::new("UnsortedTimes", "times must be non-negative and strictly increasing"));
    }
    Ok(times)
}

fn parse_point(spec: &ValidatedSpec, text: &str) -> Result<Point, CliError> {
    Point::parse(text, spec.n(), spec.m()).map_err(|m| CliError::new("PointShape", m))
}

fn sim_config(seed: u64, s: f64, a: &SimArgs) -> Result<SimConfig, CliError> {
    let cfg = SimConfig {
        seed,
        paths: a.paths,
        steps_per_unit_time: a.steps,
        s,
        inner_paths: a.inner,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Primary output plus the exit code it implies.
pub struct Output {
    pub text: String,
    pub code: i32,
}

fn json_text<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn cmd_constants(spec: &ValidatedSpec, a: &ConstantsArgs) -> Result<Output, CliError> {
    let c = CdConstants::carnot_ou(spec, a.s);
    c.validate()?;
    let mut obj = json!({
        "group": spec.name(),
        "s": a.s,
        "kappa": c.kappa,
        "rho1": c.rho1,
        "rho2": c.rho2,
        "rho3": c.rho3,
        "reverse_factor": c.reverse_factor(),
    });
    if let Some(eps) = a.eps {
        let lambda = lambda_eps(&c, eps)?;
        obj["epsilon"] = json!(eps);
        obj["lambda"] = json!(lambda);
        if lambda > 0.0 {
            let big_c = prefactor_c(&c, eps)?;
            obj["C"] = json!(big_c);
            obj["C_over_e"] = json!(big_c / std::f64::consts::E);
        }
    }
    if let Some(t) = a.opt_time {
        obj["plan"] = serde_json::to_value(optimal_eps_for_time(&c, t)?).expect("serializable");
    }
    Ok(Output {
        text: json_text(&obj),
        code: EXIT_OK,
    })
}

fn csv_text<F>(header: &[&str], fill: F) -> Result<String, CliError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    let bytes = w.into_inner().map_err(|e| CliError::new("Io", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// `name,t,lhs,rhs,slack,ci,verdict` rows.
pub fn summary_csv(reports: &[CheckReport]) -> Result<String, CliError> {
    csv_text(&["name", "t", "lhs", "rhs", "slack", "ci", "verdict"], |w| {
        for r in reports {
            w.write_record([
                r.name.clone(),
                opt_num(r.params.t),
                num(r.lhs.mean),
                num(r.rhs.mean),
                num(r.slack),
                num(r.tolerance),
                r.verdict.as_str().to_string(),
            ])?;
        }
        Ok(())
    })
}

/// `sample_id,epsilon,slack` rows.
pub fn slack_csv(rows: &[SlackRow]) -> Result<String, CliError> {
    csv_text(&["sample_id", "epsilon", "slack"], |w| {
        for r in rows {
            w.write_record([r.sample_id.to_string(), num(r.epsilon), num(r.slack)])?;
        }
        Ok(())
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a scenario file and builds the lab it describes. Relative paths in
/// the file are taken from the file's directory.
pub fn load_scenario(path: &Path, fallback_spec: Option<&Path>) -> Result<(Scenario, Lab), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new("ScenarioNotFound", format!("{}: {e}", path.display())))?;
    let scenario: Scenario = serde_json::from_str(&text).map_err(|e| CliError::new("InvalidScenario", e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let spec = match &scenario.spec {
        Some(SpecRef::Path(p)) => load_spec(Some(&resolve(base, p)))?,
        Some(SpecRef::Inline(g)) => validate_spec(g.clone())?,
        None => load_spec(fallback_spec)?,
    };
    let mut cfg = SimConfig {
        seed: scenario.seed,
        s: scenario.s,
        ..SimConfig::default()
    };
    if let Some(sim) = scenario.sim {
        cfg.paths = sim.paths.unwrap_or(cfg.paths);
        cfg.steps_per_unit_time = sim.steps_per_unit_time.unwrap_or(cfg.steps_per_unit_time);
        cfg.inner_paths = sim.inner_paths.unwrap_or(cfg.inner_paths);
    }
    let consts = scenario.constants.unwrap_or_else(|| CdConstants::carnot_ou(&spec, scenario.s));
    let lab = Lab::new(spec, scenario.s, consts, cfg)?;
    Ok((scenario, lab))
}

pub fn cmd_check(global_spec: Option<&Path>, a: &CheckArgs) -> Result<Output, CliError> {
    let (scenario, lab) = load_scenario(&a.scenario, global_spec)?;
    let cfg = *lab.config();
    let base = a.scenario.parent().unwrap_or(Path::new("."));
    let csv_path = a.csv.clone().or(scenario.outputs.csv.as_ref().map(|p| resolve(base, p)));
    let mut csv_file = match &csv_path {
        Some(p) => {
            let mut f = fs::File::create(p)?;
            f.write_all(summary_csv(&[])?.as_bytes())?;
            Some(f)
        }
        None => None,
    };
    // Sorted by name and run one at a time so the CSV grows as checks finish.
    let mut order: Vec<usize> = (0..scenario.checks.len()).collect();
    order.sort_by_key(|&i| check_name(&scenario.checks[i]));
    let mut reports = Vec::new();
    for i in order {
        let check = &scenario.checks[i];
        let sub = lab.with_config(cfg.with_seed(crate::rng::derive_seed(cfg.seed, i as u64)));
        let batch = match (check, &scenario.outputs.slack_csv) {
            (CheckSpec::CdSlack { corpus }, Some(p)) => {
                let (report, rows) = sub.check_cd_corpus(corpus)?;
                fs::write(resolve(base, p), slack_csv(&rows)?)?;
                vec![report]
            }
            _ => sub.run(check)?,
        };
        if let Some(f) = csv_file.as_mut() {
            let body = summary_csv(&batch)?;
            f.write_all(body.split_once("\r\n").map(|x| x.1).unwrap_or("").as_bytes())?;
            f.flush()?;
        }
        reports.extend(batch);
    }
    let code = if reports.iter().any(|r| r.verdict == Verdict::Violated) {
        EXIT_VIOLATED
    } else {
        EXIT_OK
    };
    let text = json_text(&reports);
    if let Some(p) = &scenario.outputs.report {
        fs::write(resolve(base, p), &text)?;
    }
    Ok(Output { text, code })
}

fn check_name(c: &CheckSpec) -> String {
    serde_json::to_value(c).ok().and_then(|v| v["name"].as_str().map(String::from)).unwrap_or_default()
}

pub fn cmd_decay(spec: &ValidatedSpec, seed: u64, a: &DecayArgs) -> Result<Output, CliError> {
    let times = parse_times(&a.times)?;
    let cfg = sim_config(seed, a.sim.s, &a.sim)?;
    let lab = Lab::carnot(spec.clone(), a.sim.s, cfg)?;
    let f = lab.parse(&a.f)?;
    let rows: Vec<(f64, Estimate, Estimate)> = match a.kind {
        DecayKind::Variance => {
            let (_, reports) = lab.check_variance_energy(&f, &times, a.eps)?;
            reports.into_iter().map(|r| (r.params.t.unwrap_or(0.0), r.lhs, r.rhs)).collect()
        }
        DecayKind::Entropy => {
            let big_c = prefactor_c(lab.constants(), a.eps)?;
            let lambda = lambda_eps(lab.constants(), a.eps)?;
            let mut grid = times.clone();
            if grid[0] > 0.0 {
                grid.insert(0, 0.0);
            }
            let curve = estimate_entropy_decay(spec, a.sim.s, &f, &grid, &cfg)?;
            let start = curve[0].1;
            curve
                .into_iter()
                .filter(|(t, _)| times.contains(t))
                .map(|(t, e)| (t, e, start.scale(big_c * (-2.0 * lambda * t).exp())))
                .collect()
        }
    };
    let mut violated = false;
    let text = csv_text(&["t", "value", "ci", "bound", "slack"], |w| {
        for (t, e, bound) in &rows {
            let slack = bound.mean - e.mean;
            violated |= Verdict::classify(slack, e.half_width.hypot(bound.half_width)) == Verdict::Violated;
            w.write_record([num(*t), num(e.mean), num(e.half_width), num(bound.mean), num(slack)])?;
        }
        Ok(())
    })?;
    Ok(Output {
        text,
        code: if violated { EXIT_VIOLATED } else { EXIT_OK },
    })
}

pub fn cmd_distance(spec: &ValidatedSpec, a: &DistanceArgs) -> Result<Output, CliError> {
    let p = parse_point(spec, &a.from)?;
    let q = parse_point(spec, &a.to)?;
    let d = distance(spec, &p, &q)?;
    let obj = if d.is_exact() {
        json!({"value": d.upper, "method": d.method})
    } else {
        json!({"lower": d.lower, "upper": d.upper, "method": d.method})
    };
    Ok(Output {
        text: json_text(&obj),
        code: EXIT_OK,
    })
}

pub fn cmd_simulate(spec: &ValidatedSpec, seed: u64, a: &SimulateArgs) -> Result<Output, CliError> {
    let cfg = sim_config(seed, a.sim.s, &a.sim)?;
    let endpoints = |ens: crate::sim::PathEnsemble| -> Result<String, CliError> {
        let mut header: Vec<String> = (1..=spec.n()).map(|i| format!("x{i}")).collect();
        header.extend((1..=spec.m()).map(|k| format!("z{k}")));
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        csv_text(&refs, |w| {
            for p in &ens.endpoints {
                w.write_record(p.coords().iter().map(|v| num(*v)))?;
            }
            Ok(())
        })
    };
    let text = match a.kind {
        SimKind::Heat => endpoints(sample_heat(spec, a.t, &cfg)?)?,
        SimKind::Invariant => endpoints(sample_invariant(spec, a.sim.s, &cfg)?)?,
        SimKind::Mehler | SimKind::Sde => {
            let f = a.f.as_deref().ok_or_else(|| CliError::new("MissingArgument", "--f is required"))?;
            let f = crate::jet::parse_expr(f, spec.n(), spec.m())?;
            let x = match &a.x {
                Some(x) => parse_point(spec, x)?,
                None => spec.origin(),
            };
            let e = if a.kind == SimKind::Mehler {
                mehler_qt(spec, a.sim.s, &f, a.t, &x, &cfg)?
            } else {
                sde_qt(spec, a.sim.s, &f, a.t, &x, &cfg)?
            };
            json_text(&e)
        }
    };
    Ok(Output { text, code: EXIT_OK })
}

/// Runs a parsed command line and returns the output and exit code.
pub fn execute(cli: &Cli) -> Result<Output, CliError> {
    let spec_path = cli.spec.as_deref();
    match &cli.command {
        Command::Constants(a) => cmd_constants(&load_spec(spec_path)?, a),
        Command::Check(a) => cmd_check(spec_path, a),
        Command::Decay(a) => cmd_decay(&load_spec(spec_path)?, cli.seed, a),
        Command::Distance(a) => cmd_distance(&load_spec(spec_path)?, a),
        Command::Simulate(a) => cmd_simulate(&load_spec(spec_path)?, cli.seed, a),
    }
}

/// Entry point for the binary: parses arguments, runs, writes output.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let go = || -> Result<Output, CliError> {
        let out = execute(&cli)?;
        match &cli.out {
            Some(p) => fs::write(p, &out.text)?,
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(out.text.as_bytes())?;
            }
        }
        Ok(out)
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(go),
            Err(e) => Err(CliError::new("Threads", e.to_string())),
        },
        None => go(),
    };
    match result {
        Ok(out) => out.code,
        Err(e) => {
            eprintln!("{}", json!({"error": e.code, "message": e.message}));
            EXIT_INVALID
        }
    }
}
