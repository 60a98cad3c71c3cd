//! Command-line front end: a JSON run configuration with flag overrides, one
//! subcommand per pipeline stage, JSON reports on stdout and CSV dumps in the
//! output directory.
//!
//! Exit status is 0 on success, 1 on a runtime or solver failure and 2 on a
//! configuration error. Failures print `{"error": {...}}` on stdout.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::boundary::{solve_boundaries, Boundaries, DpConfig, ValueGrid, DEFAULT_CONTACT_TOL};
use crate::detector::{detect, DetectError, Detection, EventStream};
use crate::fmt::to_json;
use crate::fode::{solve_fode, FodeConfig, DEFAULT_FODE_STEPS};
use crate::lfd::{
    estimate_h, estimate_jbar, find_lfd, gamma_mc, jbar_immediate, LfdConfig, PsiGrid,
};
use crate::model::{classify_regime, decide, Costs, Model, ModelError, PriorOdds, Regime};
use crate::pathsim::{simulate_records, write_paths_csv, Side};
use crate::stats::Moments;

/// Overrides for the value-iteration settings; unset fields take the
/// problem-dependent defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSettings {
    pub grid_points: Option<usize>,
    pub phi_min: Option<f64>,
    pub phi_max: Option<f64>,
    pub dt: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
}

impl DpSettings {
    pub fn resolve(&self, model: &Model, costs: &Costs) -> DpConfig {
        let d = DpConfig::for_problem(model, costs);
        DpConfig {
            grid_points: self.grid_points.unwrap_or(d.grid_points),
            phi_min: self.phi_min.unwrap_or(d.phi_min),
            phi_max: self.phi_max.unwrap_or(d.phi_max),
            dt: self.dt.unwrap_or(d.dt),
            tol: self.tol.unwrap_or(d.tol),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lambda0: f64,
    pub lambda1: f64,
    pub a: f64,
    pub b: f64,
    pub seed: u64,
    pub n_paths: u64,
    pub saddle_paths: u64,
    pub dp: DpSettings,
    pub contact_tol: f64,
    pub fode_steps: usize,
    pub phi_tol: f64,
    pub psi_grid: Option<PsiGrid>,
    /// Skip value iteration and use these thresholds.
    pub boundaries: Option<Boundaries>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lambda0: 1.0,
            lambda1: 5.0,
            a: 2.0,
            b: 2.0,
            seed: 0x5EED,
            n_paths: 1_000_000,
            saddle_paths: 100_000,
            dp: DpSettings::default(),
            contact_tol: DEFAULT_CONTACT_TOL,
            fode_steps: DEFAULT_FODE_STEPS,
            phi_tol: 1e-3,
            psi_grid: None,
            boundaries: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// A validated configuration.
#[derive(Debug, Clone, Copy)]
pub struct Problem {
    pub model: Model,
    pub costs: Costs,
    pub dp: DpConfig,
    pub lfd: LfdConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(None, format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config { field, message } => {
                CliError::Config { field, message: format!("{}: {message}", path.display()) }
            }
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            CliError::config(
                None,
                format!("line {}, column {}: {e}", e.line(), e.column()),
            )
        })
    }

    pub fn validate(&self) -> Result<Problem, CliError> {
        let model = Model::new(self.lambda0, self.lambda1).map_err(|e| {
            let field = if self.lambda0 > 0.0 && self.lambda0.is_finite() { "lambda1" } else { "lambda0" };
            CliError::config(Some(field), e.to_string())
        })?;
        let costs = Costs::new(self.a, self.b).map_err(|e| match e {
            ModelError::Cost { name, .. } => CliError::config(Some(name), e.to_string()),
            other => CliError::config(None, other.to_string()),
        })?;
        let positive = |field: &str, ok: bool, what: String| {
            if ok { Ok(()) } else { Err(CliError::config(Some(field), what)) }
        };
        positive("n_paths", self.n_paths >= 1, "n_paths must be >= 1".into())?;
        positive("saddle_paths", self.saddle_paths >= 1, "saddle_paths must be >= 1".into())?;
        positive("fode_steps", self.fode_steps >= 1, "fode_steps must be >= 1".into())?;
        positive(
            "phi_tol",
            self.phi_tol.is_finite() && self.phi_tol > 0.0,
            format!("phi_tol must be positive (got {})", self.phi_tol),
        )?;
        positive(
            "contact_tol",
            self.contact_tol.is_finite() && self.contact_tol > 0.0,
            format!("contact_tol must be positive (got {})", self.contact_tol),
        )?;
        if let Some(g) = self.psi_grid {
            positive(
                "psi_grid",
                g.min > 0.0 && g.max >= g.min && g.max.is_finite() && g.count >= 1,
                format!("psi_grid needs 0 < min <= max and count >= 1 (got {g:?})"),
            )?;
        }
        if let Some(b) = self.boundaries {
            let k = costs.indifference_odds();
            Boundaries::new(b.alpha_star, b.beta_star)
                .map_err(|e| CliError::config(Some("boundaries"), e.to_string()))?;
            positive(
                "boundaries",
                b.alpha_star < k && k < b.beta_star,
                format!("boundaries must satisfy alpha_star < b/a = {k} < beta_star"),
            )?;
        }
        let dp = self.dp.resolve(&model, &costs);
        dp.validate(&model).map_err(|e| CliError::config(Some("dp"), e.to_string()))?;
        let lfd = LfdConfig {
            dp,
            contact_tol: self.contact_tol,
            fode: FodeConfig { steps: self.fode_steps },
            boundaries: self.boundaries,
            n_paths: self.n_paths,
            saddle_paths: self.saddle_paths,
            phi_tol: self.phi_tol,
            psi_grid: self.psi_grid,
            seed: self.seed,
            ..LfdConfig::for_problem(&model, &costs)
        };
        Ok(Problem { model, costs, dp, lfd })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config { field: Option<String>, message: String },
    Runtime { message: String, detail: Option<Value> },
}

impl CliError {
    fn config(field: Option<&str>, message: String) -> Self {
        CliError::Config {
            field: field.map(str::to_owned),
            message,
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime {
            message: e.to_string(),
            detail: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime { .. } => 1,
        }
    }

    pub fn to_value(&self) -> Value {
        let body = match self {
            CliError::Config { field, message } => json!({
                "kind": "config",
                "field": field,
                "message": message,
            }),
            CliError::Runtime { message, detail } => json!({
                "kind": "runtime",
                "message": message,
                "detail": detail,
            }),
        };
        json!({ "error": body })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config { field: Some(field), message } => write!(f, "configuration error in `{field}`: {message}"),
            CliError::Config { field: None, message } => write!(f, "configuration error: {message}"),
            CliError::Runtime { message, .. } => write!(f, "{message}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "poisson-minimax", version, about = "Minimax sequential tests for a Poisson intensity")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo path count.
    #[arg(long, global = true)]
    pub paths: Option<u64>,
    /// Output directory for reports and CSV dumps.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Optimal stopping boundaries by value iteration.
    Solve,
    /// The functions f0, f1 on [alpha*/beta*, 1] and gamma*.
    Fode,
    /// Monte Carlo gamma* next to the ODE value.
    Gamma,
    /// Monte Carlo h at given prior odds.
    H {
        #[arg(long)]
        phi0: f64,
    },
    /// Least favorable prior odds and the saddle sweep.
    FindLfd,
    /// Bayes risk of the rule tuned to phi0 under prior odds psi.
    Jbar {
        #[arg(long)]
        phi0: f64,
        #[arg(long)]
        psi: f64,
    },
    /// Exit records of the rule tuned to phi0.
    Simulate {
        #[arg(long)]
        phi0: f64,
    },
    /// Runs the test over newline-delimited event times.
    Detect {
        /// File path, or `-` for standard input.
        #[arg(long)]
        stream: String,
        /// Prior odds.
        #[arg(long)]
        psi: f64,
        /// End of observation; defaults to the last event.
        #[arg(long)]
        horizon: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Fode => "fode",
            Command::Gamma => "gamma",
            Command::H { .. } => "h",
            Command::FindLfd => "find-lfd",
            Command::Jbar { .. } => "jbar",
            Command::Simulate { .. } => "simulate",
            Command::Detect { .. } => "detect",
        }
    }
}

/// A finished command: its JSON report and the CSV files written beside it.
#[derive(Debug, Clone)]
pub struct Output {
    pub report: Value,
    pub files: Vec<PathBuf>,
}

impl Output {
    pub fn json(&self) -> String {
        to_json(&self.report).expect("reports serialize")
    }
}

/// The effective configuration after flag overrides.
pub fn effective_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.paths {
        cfg.n_paths = n;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn boundaries_for(p: &Problem) -> Result<Boundaries, CliError> {
    if classify_regime(&p.model, &p.costs) == Regime::Trivial {
        return Err(CliError::runtime(
            "trivial regime: stopping at once is optimal and there is no continuation region",
        ));
    }
    match p.lfd.boundaries {
        Some(b) => Ok(b),
        None => Ok(solve_boundaries(&p.model, &p.costs, &p.dp, p.lfd.contact_tol)
            .map_err(CliError::runtime)?
            .0),
    }
}

fn require_inside(b: &Boundaries, flag: &str, phi: f64) -> Result<(), CliError> {
    if b.contains(phi) {
        Ok(())
    } else {
        Err(CliError::config(
            Some(flag),
            format!(
                "{phi} is outside the continuation region ({}, {})",
                b.alpha_star, b.beta_star
            ),
        ))
    }
}

fn write_file(dir: &Path, name: &str, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut w = io::BufWriter::new(file);
    write(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn grid_summary(b: &Boundaries, grid: &ValueGrid) -> Value {
    json!({
        "alpha_star": b.alpha_star,
        "beta_star": b.beta_star,
        "ratio": b.ratio(),
        "value_at_unit_odds": grid.value_at(1.0),
        "iterations": grid.iterations,
        "last_delta": grid.last_delta,
        "grid_points": grid.phis.len(),
    })
}

/// Runs one command and writes its artifacts. The JSON report is also saved
/// as `<command>.json` in the output directory.
pub fn execute(common: &CommonArgs, command: &Command) -> Result<Output, CliError> {
    let cfg = effective_config(common)?;
    let p = cfg.validate()?;
    let (model, costs) = (p.model, p.costs);
    let dir = cfg.output_dir.clone();
    let regime = classify_regime(&model, &costs);
    let mut files = Vec::new();

    let mut report = match command {
        Command::Solve => match regime {
            Regime::Trivial => json!({
                "regime": regime,
                "alpha_star": null,
                "beta_star": null,
                "ratio": null,
                "lfd": costs.indifference_odds(),
            }),
            Regime::NonTrivial => {
                let (b, grid) = solve_boundaries(&model, &costs, &p.dp, p.lfd.contact_tol).map_err(CliError::runtime)?;
                files.push(write_file(&dir, "grid.csv", |w| grid.write_csv(w))?);
                let mut v = grid_summary(&b, &grid);
                v["regime"] = value(&regime);
                v["lfd"] = Value::Null;
                v
            }
        },
        Command::Fode => {
            let b = boundaries_for(&p)?;
            let sol = solve_fode(&model, &costs, b.ratio(), &p.lfd.fode).map_err(CliError::runtime)?;
            files.push(write_file(&dir, "fode.csv", |w| sol.write_csv(w))?);
            let last = sol.grid.len() - 1;
            json!({
                "boundaries": b,
                "ratio": b.ratio(),
                "gamma_star": sol.gamma_star,
                "f0_at_ratio": sol.f0[last],
                "f1_at_ratio": sol.f1[last],
                "steps": last,
                "log_step": sol.log_step,
                "max_residual": sol.max_residual(&model, &costs),
            })
        }
        Command::Gamma => {
            let b = boundaries_for(&p)?;
            let sol = solve_fode(&model, &costs, b.ratio(), &p.lfd.fode).map_err(CliError::runtime)?;
            let mc = gamma_mc(&model, &costs, b.ratio(), cfg.n_paths, cfg.seed).map_err(CliError::runtime)?;
            json!({
                "boundaries": b,
                "ratio": b.ratio(),
                "fode": sol.gamma_star,
                "mc": mc,
                "difference_in_se": (mc.value - sol.gamma_star) / mc.se,
            })
        }
        Command::H { phi0 } => {
            let b = boundaries_for(&p)?;
            require_inside(&b, "phi0", *phi0)?;
            let h = estimate_h(&model, &costs, &b, *phi0, cfg.n_paths, cfg.seed).map_err(CliError::runtime)?;
            json!({ "boundaries": b, "h": h })
        }
        Command::FindLfd => {
            let r = find_lfd(&model, &costs, &p.lfd).map_err(|e| match e {
                crate::lfd::LfdError::NoSignChange { ref samples } => CliError::Runtime {
                    message: e.to_string(),
                    detail: Some(value(samples)),
                },
                other => CliError::runtime(other),
            })?;
            files.push(write_file(&dir, "saddle.csv", |w| r.write_saddle_csv(w))?);
            value(&r)
        }
        Command::Jbar { phi0, psi } => {
            if !(psi.is_finite() && *psi > 0.0) {
                return Err(CliError::config(Some("psi"), format!("psi must be positive (got {psi})")));
            }
            let immediate = jbar_immediate(&costs, *psi);
            match regime {
                Regime::Trivial => json!({
                    "phi0": phi0,
                    "psi": psi,
                    "jbar": { "value": immediate, "se": 0.0 },
                    "immediate": immediate,
                }),
                Regime::NonTrivial => {
                    let b = boundaries_for(&p)?;
                    require_inside(&b, "phi0", *phi0)?;
                    let e = estimate_jbar(&model, &costs, &b, *phi0, *psi, cfg.n_paths, cfg.seed)
                        .map_err(CliError::runtime)?;
                    json!({
                        "boundaries": b,
                        "phi0": phi0,
                        "psi": psi,
                        "jbar": e,
                        "immediate": immediate,
                    })
                }
            }
        }
        Command::Simulate { phi0 } => {
            let b = boundaries_for(&p)?;
            require_inside(&b, "phi0", *phi0)?;
            let interval = b.likelihood_interval(*phi0).map_err(CliError::runtime)?;
            let recs = simulate_records(&model, &interval, 1.0, cfg.n_paths, cfg.seed).map_err(CliError::runtime)?;
            files.push(write_file(&dir, "paths.csv", |w| write_paths_csv(w, &recs))?);
            let (mut lower, mut int, mut tau) = (Moments::default(), Moments::default(), Moments::default());
            for r in &recs {
                lower.push(if r.side == Side::Lower { 1.0 } else { 0.0 });
                int.push(r.int_l_minus_one());
                tau.push(r.tau);
            }
            json!({
                "boundaries": b,
                "phi0": phi0,
                "likelihood_interval": [interval.lower(), interval.upper()],
                "n_paths": cfg.n_paths,
                "p_lower": lower.estimate(),
                "mean_int_l_minus_1": int.estimate(),
                "mean_tau": tau.estimate(),
            })
        }
        Command::Detect { stream, psi, horizon } => {
            let prior = PriorOdds::new(*psi).map_err(|e| CliError::config(Some("psi"), e.to_string()))?;
            let parsed = if stream == "-" {
                EventStream::parse(io::stdin().lock())
            } else {
                let f = fs::File::open(stream)
                    .map_err(|e| CliError::config(Some("stream"), format!("{stream}: {e}")))?;
                EventStream::parse(BufReader::new(f))
            }
            .map_err(|e| CliError::config(Some("stream"), e.to_string()))?;
            let events = match horizon {
                Some(h) => parsed
                    .with_horizon(*h)
                    .map_err(|e| CliError::config(Some("horizon"), e.to_string()))?,
                None => parsed,
            };
            let outcome = match regime {
                Regime::Trivial => Detection::StoppedAtStart {
                    decision: decide(&costs, prior.psi()),
                    psi: prior.psi(),
                },
                Regime::NonTrivial => {
                    let b = boundaries_for(&p)?;
                    detect(&model, &costs, &b, prior, &events).map_err(|e| match e {
                        DetectError::Undecided { state } => CliError::Runtime {
                            message: e.to_string(),
                            detail: Some(value(&state)),
                        },
                        other => CliError::runtime(other),
                    })?
                }
            };
            let mut v = value(&outcome.summary());
            v["outcome"] = value(&outcome);
            v
        }
    };

    let mut echo = Map::new();
    echo.insert("command".into(), Value::String(command.name().into()));
    echo.insert("config".into(), value(&cfg));
    echo.insert("resolved_dp".into(), value(&p.dp));
    echo.insert("arguments".into(), value(command));
    report["config_echo"] = Value::Object(echo);

    let out = Output { report, files };
    let json = out.json();
    let path = write_file(&dir, &format!("{}.json", command.name()), |w| w.write_all(json.as_bytes()))?;
    let mut out = out;
    out.files.push(path);
    Ok(out)
}

/// Parses `args`, runs the command, prints the report or error and returns
/// the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.common, &cli.command) {
        Ok(out) => {
            print!("{}", out.json());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            print!("{}", to_json(&e.to_value()).expect("errors serialize"));
            e.exit_code()
        }
    }
}
