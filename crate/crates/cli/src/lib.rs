//! Command-line front end: runs scenarios, sweeps and the bundled presets, and writes CSV,
//! JSON and SVG artifacts.

pub mod checks;
pub mod output;
pub mod presets;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use extrudesim_core::plant::{Quantity, Violation};
use extrudesim_core::scenario::Scenario;
use extrudesim_core::sim::run_scenario;
use extrudesim_core::sweep::{run_sweep, set_json_path, BaseScenario, SweepDefinition, SweepGrid};
use extrudesim_core::Error;

use crate::output::{write_run, write_sweep};
use crate::presets::PresetOptions;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Exit {
    Ok = 0,
    Divergence = 1,
    Io = 2,
    Validation = 3,
    Cap = 4,
    Assertion = 5,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// A failed command: exit code plus the message printed on stderr.
#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl Failure {
    fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self { exit, message: message.into() }
    }
}

pub fn exit_for(e: &Error) -> Exit {
    match e {
        Error::Divergence { .. } => Exit::Divergence,
        Error::Io(_) | Error::Csv(_) => Exit::Io,
        Error::CapExceeded { .. } => Exit::Cap,
        _ => Exit::Validation,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = match &e {
            Error::Validation(v) => format_violations(v),
            _ => e.to_string(),
        };
        Self { exit: exit_for(&e), message }
    }
}

type CmdResult = std::result::Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "extrudesim", version, about = "Closed-loop simulation of a cascaded extrusion process")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario file.
    Run(RunArgs),
    /// Run a parameter sweep.
    Sweep(SweepArgs),
    /// Run a bundled case-study preset and check its expected properties.
    Preset(PresetArgs),
    /// Check a scenario or sweep file without simulating.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Override a field, e.g. `--set controllers.nozzle.k1=20`. VALUE is read as JSON,
    /// falling back to a plain string.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub set: Vec<String>,
    /// Seed for the plant uncertainty sampler.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write tracking.svg and control.svg.
    #[arg(long)]
    pub plot: bool,
    /// Run even when signals exceed their declared bounds.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub sweep: PathBuf,
    /// Output directory; defaults to the sweep's `output_dir`, then `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides the sweep's `parallelism`.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also write a heatmap (2 axes) or line chart (1 axis) per surface metric.
    #[arg(long)]
    pub plot: bool,
    /// Run grid points whose signals exceed their declared bounds.
    #[arg(long)]
    pub force: bool,
    /// Overrides apply to the base scenario.
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    /// One of case1, case2, case3, fig5a, fig5b.
    pub name: String,
    /// Output directory; defaults to `out/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the preset's sweeps.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Seed for every uncertainty sampler in the preset.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub file: PathBuf,
    /// Override a field before validating; same syntax as for `run`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub set: Vec<String>,
}

/// Sets up logging from `EXTRUDESIM_LOG` (default `warn`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("EXTRUDESIM_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn execute(cli: Cli) -> Exit {
    let res = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Preset(a) => cmd_preset(&a),
        Command::Validate(a) => cmd_validate(&a),
    };
    match res {
        Ok(()) => Exit::Ok,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.exit
        }
    }
}

fn read_json(path: &Path) -> std::result::Result<Value, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(Exit::Io, format!("cannot read `{}`: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::new(Exit::Io, format!("cannot parse `{}`: {e}", path.display())))
}

/// Splits `PATH=VALUE`; the value is JSON if it parses as such, otherwise a string.
pub fn parse_override(s: &str) -> std::result::Result<(String, Value), Failure> {
    let (path, raw) = s
        .split_once('=')
        .ok_or_else(|| Failure::new(Exit::Validation, format!("--set expects PATH=VALUE, got `{s}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path.trim().to_string(), value))
}

pub fn apply_overrides(doc: &mut Value, sets: &[String]) -> CmdResult {
    for s in sets {
        let (path, value) = parse_override(s)?;
        log::debug!("override {path} = {value}");
        set_json_path(doc, &path, value)?;
    }
    Ok(())
}

fn scenario_from(doc: Value, path: &Path) -> std::result::Result<Scenario, Failure> {
    Scenario::from_value(doc)
        .map_err(|e| Failure::new(Exit::Validation, format!("invalid scenario `{}`: {e}", path.display())))
}

pub fn format_violations(v: &[Violation]) -> String {
    let mut out = format!("{} bound violation(s):", v.len());
    for x in v {
        let what = match x.quantity {
            Quantity::Value => "|value|",
            Quantity::Derivative => "|derivative|",
        };
        out += &format!(
            "\n  {} {what} reaches {:.6} > bound {} on [{:.4}, {:.4}] s ({} samples)",
            x.signal, x.worst, x.bound, x.t_first, x.t_last, x.samples
        );
    }
    out
}

pub fn cmd_run(a: &RunArgs) -> CmdResult {
    let mut doc = read_json(&a.scenario)?;
    apply_overrides(&mut doc, &a.overrides.set)?;
    let mut sc = scenario_from(doc, &a.scenario)?;
    if let Some(seed) = a.overrides.seed {
        match sc.uncertainty.as_mut() {
            Some(u) => u.seed = seed,
            None => log::warn!("--seed ignored: scenario has no uncertainty block"),
        }
    }
    let run = run_scenario(&sc, a.force)?;
    if run.report.forced {
        eprintln!("warning: {}", format_violations(&run.report.violations));
    }
    let files = write_run(&run, &a.out, a.plot)?;
    let m = &run.report.metrics;
    println!(
        "{}: max_err1 {:.4}%  max_err2 {:.4}%  ss_err2 {:.4}%  effort_u2 {:.6}  cost_j {:.6}",
        run.report.scenario, m.max_err1_pct, m.max_err2_pct, m.ss_err2_pct, m.control_effort_u2, m.cost_j
    );
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

/// Loads a sweep file with the CLI overrides applied.
pub fn load_sweep(a: &SweepArgs) -> std::result::Result<SweepGrid, Failure> {
    let doc = read_json(&a.sweep)?;
    let mut def: SweepDefinition = serde_json::from_value(doc)
        .map_err(|e| Failure::new(Exit::Validation, format!("invalid sweep `{}`: {e}", a.sweep.display())))?;
    let dir = a.sweep.parent().unwrap_or(Path::new("."));
    let mut base = match &def.base_scenario {
        BaseScenario::Path(p) => read_json(&dir.join(p))?,
        BaseScenario::Inline(v) => (**v).clone(),
    };
    apply_overrides(&mut base, &a.overrides.set)?;
    def.base_scenario = BaseScenario::Inline(Box::new(base));
    let mut grid = SweepGrid::from_definition(def, dir)?;
    if let Some(seed) = a.overrides.seed {
        match grid.monte_carlo.as_mut() {
            Some(mc) => mc.sampler.seed = seed,
            None => log::warn!("--seed ignored: sweep has no monte_carlo block"),
        }
    }
    if let Some(j) = a.jobs {
        grid.parallelism = j;
    }
    grid.force |= a.force;
    Ok(grid)
}

pub fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let grid = load_sweep(a)?;
    let out = a.out.clone().or_else(|| grid.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let result = run_sweep(&grid)?;
    let summary = write_sweep(&result, &out, &grid.surface_metrics, a.plot)?;
    println!(
        "{}: {} run(s), {} ok, {} failed; wrote {}",
        summary.name,
        summary.total_runs,
        summary.ok_runs,
        summary.failed_runs.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_preset(a: &PresetArgs) -> CmdResult {
    if presets::find(&a.name).is_none() {
        return Err(Failure::new(
            Exit::Validation,
            format!("unknown preset `{}`; available: {}", a.name, presets::names().join(", ")),
        ));
    }
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&a.name));
    let opts = PresetOptions { seed: a.seed, jobs: a.jobs, plot: a.plot };
    let report = presets::run_preset(&a.name, &out, &opts)?;
    for c in &report.checks {
        println!("{} [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.criterion, c.id, c.detail);
    }
    println!("wrote {}", out.join("report.json").display());
    if report.passed {
        Ok(())
    } else {
        let n = report.checks.iter().filter(|c| !c.passed).count();
        Err(Failure::new(Exit::Assertion, format!("preset `{}`: {n} assertion(s) failed", a.name)))
    }
}

fn validate_scenario_doc(sc: &Scenario) -> std::result::Result<Vec<Violation>, Failure> {
    let rs = sc.resolve()?;
    for (who, c) in [("nozzle", rs.nozzle_certificate()), ("strand", rs.strand_certificate())] {
        let note = if c.satisfied { "meets" } else { "is below" };
        println!("{who} gain {} {note} its minimum {:.6} (margin {:.6})", c.configured_gain, c.min_gain, c.margin);
    }
    Ok(sc.bound_violations())
}

pub fn cmd_validate(a: &ValidateArgs) -> CmdResult {
    let doc = read_json(&a.file)?;
    if doc.get("axes").is_some() {
        let args = SweepArgs {
            sweep: a.file.clone(),
            out: None,
            jobs: None,
            plot: false,
            force: false,
            overrides: Overrides { set: a.set.clone(), seed: None },
        };
        let grid = load_sweep(&args)?;
        let mut bad = 0;
        for i in 0..grid.n_points() {
            let sc = grid.point_scenario(i)?;
            sc.resolve()?;
            let v = sc.bound_violations();
            if !v.is_empty() {
                bad += 1;
                println!("point {i} {:?}: {}", grid.point_values(i), format_violations(&v));
            }
        }
        println!("{}: {} point(s), {} run(s), cap {}", grid.name, grid.n_points(), grid.total_runs(), grid.max_runs);
        if grid.total_runs() > grid.max_runs {
            return Err(Failure::new(
                Exit::Cap,
                format!("{} runs exceed the cap of {}", grid.total_runs(), grid.max_runs),
            ));
        }
        if bad > 0 && !grid.force {
            return Err(Failure::new(Exit::Validation, format!("{bad} grid point(s) violate their bounds")));
        }
    } else {
        let mut doc = doc;
        apply_overrides(&mut doc, &a.set)?;
        let sc = scenario_from(doc, &a.file)?;
        let v = validate_scenario_doc(&sc)?;
        if !v.is_empty() {
            return Err(Failure::new(Exit::Validation, format_violations(&v)));
        }
    }
    println!("{}: ok", a.file.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_values() {
        assert_eq!(parse_override("a.b=3").unwrap(), ("a.b".into(), serde_json::json!(3)));
        assert_eq!(parse_override("a=signum").unwrap().1, serde_json::json!("signum"));
        assert_eq!(parse_override("a=[1,2]").unwrap().1, serde_json::json!([1, 2]));
        assert_eq!(parse_override("a=x=y").unwrap().1, serde_json::json!("x=y"));
        assert_eq!(parse_override("nothing").unwrap_err().exit, Exit::Validation);
    }

    #[test]
    fn error_mapping() {
        assert_eq!(exit_for(&Error::Divergence { t: 1.0, x1: 0.0, x2: 0.0 }), Exit::Divergence);
        assert_eq!(exit_for(&Error::CapExceeded { runs: 2, cap: 1 }), Exit::Cap);
        assert_eq!(exit_for(&Error::Validation(vec![])), Exit::Validation);
        assert_eq!(exit_for(&Error::Io(std::io::Error::other("x"))), Exit::Io);
    }
}
