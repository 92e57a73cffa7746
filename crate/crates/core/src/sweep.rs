//! Parameter grids over scenario documents.
//!
//! Axes address scenario fields by dotted JSON path (`controllers.strand.q`). Points are
//! enumerated row-major with the first axis slowest; Monte-Carlo samples come last. Runs
//! are independent and executed on a bounded worker pool, and results are assembled by
//! grid index so the output does not depend on the pool size.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::plant::{sample_plant, PlantParams, UncertaintySampler};
use crate::scenario::Scenario;
use crate::sim::{simulate, Metrics, METRIC_NAMES};
use crate::stats::mean_std;

pub const DEFAULT_MAX_RUNS: usize = 10_000;

/// Sets `path` inside `doc`. Intermediate segments must exist; the last segment may add a
/// new key to an object. Numeric segments index arrays.
pub fn set_json_path(doc: &mut Value, path: &str, new: Value) -> Result<()> {
    let err = |reason: &str| Error::JsonPath { path: path.to_string(), reason: reason.to_string() };
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(err("empty segment"));
    }
    let (last, parents) = segments.split_last().expect("split yields at least one segment");
    let mut cur = doc;
    for seg in parents {
        cur = match cur {
            Value::Object(map) => map.get_mut(*seg).ok_or_else(|| err(&format!("no key `{seg}`")))?,
            Value::Array(items) => {
                let i: usize = seg.parse().map_err(|_| err(&format!("`{seg}` is not an array index")))?;
                items.get_mut(i).ok_or_else(|| err(&format!("index {i} out of range")))?
            }
            _ => return Err(err(&format!("cannot descend into scalar at `{seg}`"))),
        };
    }
    match cur {
        Value::Object(map) => {
            map.insert(last.to_string(), new);
        }
        Value::Array(items) => {
            let i: usize = last.parse().map_err(|_| err(&format!("`{last}` is not an array index")))?;
            *items.get_mut(i).ok_or_else(|| err(&format!("index {i} out of range")))? = new;
        }
        _ => return Err(err("parent is a scalar")),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: RangeScale,
}

impl RangeSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let bad = |m: &str| Err(Error::InvalidSweep(m.to_string()));
        if self.count == 0 {
            return bad("range count must be >= 1");
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return bad("range ends must be finite");
        }
        if self.count == 1 {
            return Ok(vec![self.start]);
        }
        let n = (self.count - 1) as f64;
        match self.scale {
            RangeScale::Linear => {
                Ok((0..self.count).map(|i| self.start + (self.stop - self.start) * i as f64 / n).collect())
            }
            RangeScale::Log => {
                if self.start <= 0.0 || self.stop <= 0.0 {
                    return bad("log range needs positive ends");
                }
                let (a, b) = (self.start.log10(), self.stop.log10());
                Ok((0..self.count).map(|i| 10f64.powf(a + (b - a) * i as f64 / n)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub path: String,
    /// Column label; defaults to the path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub sampler: UncertaintySampler,
    pub n: usize,
}

/// Either a path to a scenario file (relative to the sweep file) or an inline scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseScenario {
    Path(String),
    Inline(Box<Value>),
}

fn default_parallelism() -> usize {
    1
}
fn default_max_runs() -> usize {
    DEFAULT_MAX_RUNS
}

/// Sweep document as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDefinition {
    #[serde(default)]
    pub name: String,
    pub base_scenario: BaseScenario,
    pub axes: Vec<AxisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSpec>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Metrics written as wide-format surfaces for 2-axis sweeps.
    #[serde(default)]
    pub surface_metrics: Vec<String>,
    /// Run points whose signals violate their bounds instead of rejecting the sweep.
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub path: String,
    pub values: Vec<f64>,
}

/// A sweep ready to launch.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub name: String,
    pub base: Value,
    pub axes: Vec<Axis>,
    pub monte_carlo: Option<MonteCarloSpec>,
    pub parallelism: usize,
    pub max_runs: usize,
    pub force: bool,
    pub surface_metrics: Vec<String>,
    pub output_dir: Option<PathBuf>,
}

impl SweepGrid {
    /// Loads a sweep file; a relative base scenario path resolves against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let def: SweepDefinition = serde_json::from_str(&text)?;
        Self::from_definition(def, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_definition(def: SweepDefinition, base_dir: &Path) -> Result<Self> {
        let base = match def.base_scenario {
            BaseScenario::Inline(v) => *v,
            BaseScenario::Path(p) => {
                let p = base_dir.join(p);
                serde_json::from_str(&fs::read_to_string(&p)?)?
            }
        };
        let axes = def
            .axes
            .into_iter()
            .map(|a| {
                let values = match (a.values, a.range) {
                    (Some(v), None) => v,
                    (None, Some(r)) => r.values()?,
                    _ => {
                        return Err(Error::InvalidSweep(format!(
                            "axis `{}` needs exactly one of `values` or `range`",
                            a.path
                        )))
                    }
                };
                Ok(Axis { name: a.label.unwrap_or_else(|| a.path.clone()), path: a.path, values })
            })
            .collect::<Result<Vec<_>>>()?;
        let grid = Self {
            name: def.name,
            base,
            axes,
            monte_carlo: def.monte_carlo,
            parallelism: def.parallelism,
            max_runs: def.max_runs,
            force: def.force,
            surface_metrics: def.surface_metrics,
            output_dir: def.output_dir.map(|d| base_dir.join(d)),
        };
        grid.check_shape()?;
        Ok(grid)
    }

    fn check_shape(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::InvalidSweep(format!("a sweep needs 1 or 2 axes, got {}", self.axes.len())));
        }
        if let Some(a) = self.axes.iter().find(|a| a.values.is_empty()) {
            return Err(Error::InvalidSweep(format!("axis `{}` has no values", a.name)));
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidSweep("parallelism must be >= 1".into()));
        }
        if let Some(mc) = &self.monte_carlo {
            if mc.n == 0 {
                return Err(Error::InvalidSweep("monte_carlo.n must be >= 1".into()));
            }
        }
        if let Some(m) = self.surface_metrics.iter().find(|m| !METRIC_NAMES.contains(&m.as_str())) {
            return Err(Error::UnknownMetric(m.clone()));
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn samples_per_point(&self) -> usize {
        self.monte_carlo.as_ref().map_or(1, |m| m.n.max(1))
    }

    pub fn total_runs(&self) -> usize {
        self.n_points() * self.samples_per_point()
    }

    /// Axis values of point `i`, first axis slowest.
    pub fn point_values(&self, mut i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.values.len();
            out[k] = axis.values[i % n];
            i /= n;
        }
        out
    }

    pub fn point_scenario(&self, i: usize) -> Result<Scenario> {
        let mut doc = self.base.clone();
        for (axis, v) in self.axes.iter().zip(self.point_values(i)) {
            set_json_path(&mut doc, &axis.path, axis_json(v))?;
        }
        Scenario::from_value(doc)
    }
}

/// Integral axis values go in as JSON integers so count fields such as `record_every` are
/// sweepable; float fields accept either form.
fn axis_json(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::from(v as i64)
    } else {
        serde_json::json!(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Diverged { t: f64, message: String },
    Failed { message: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Diverged { .. } => "diverged",
            Self::Failed { .. } => "failed",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Ok => "",
            Self::Diverged { message, .. } | Self::Failed { message } => message,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub axis_values: Vec<f64>,
    pub sample: Option<usize>,
    pub plant: PlantParams,
    pub status: RunStatus,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub name: String,
    pub axes: Vec<Axis>,
    pub samples_per_point: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failed(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.status != RunStatus::Ok)
    }

    /// Metric column in row order, NaN where a run failed.
    pub fn metric(&self, name: &str) -> Result<Vec<f64>> {
        if !METRIC_NAMES.contains(&name) {
            return Err(Error::UnknownMetric(name.to_string()));
        }
        Ok(self
            .rows
            .iter()
            .map(|r| r.metrics.and_then(|m| m.get(name)).unwrap_or(f64::NAN))
            .collect())
    }
}

struct Task {
    point: usize,
    sample: Option<usize>,
    scenario: Scenario,
}

fn run_task(task: &Task, axis_values: Vec<f64>) -> SweepRow {
    let plant = task.scenario.actual_plant.unwrap_or(task.scenario.plant);
    let (status, metrics) = match task.scenario.resolve().and_then(|r| simulate(&r)) {
        Ok((_, m)) => (RunStatus::Ok, Some(m)),
        Err(Error::Divergence { t, x1, x2 }) => (
            RunStatus::Diverged { t, message: format!("diverged at t = {t} s (x1 = {x1}, x2 = {x2})") },
            None,
        ),
        Err(e) => (RunStatus::Failed { message: e.to_string() }, None),
    };
    SweepRow { point: task.point, axis_values, sample: task.sample, plant, status, metrics }
}

/// Builds every run, checks the cap and validity of each grid point, then simulates all
/// runs. Individual run failures are recorded in the result rather than aborting.
pub fn run_sweep(grid: &SweepGrid) -> Result<SweepResult> {
    grid.check_shape()?;
    let runs = grid.total_runs();
    if runs > grid.max_runs {
        return Err(Error::CapExceeded { runs, cap: grid.max_runs });
    }

    let mut tasks = Vec::with_capacity(runs);
    for point in 0..grid.n_points() {
        let scenario = grid.point_scenario(point).map_err(|e| {
            Error::InvalidSweep(format!("grid point {point} {:?}: {e}", grid.point_values(point)))
        })?;
        scenario
            .resolve()
            .map_err(|e| Error::InvalidSweep(format!("grid point {point} {:?}: {e}", grid.point_values(point))))?;
        let violations = scenario.bound_violations();
        if !violations.is_empty() && !grid.force {
            return Err(Error::InvalidSweep(format!(
                "grid point {point} {:?} violates {} bound(s), first on {}",
                grid.point_values(point),
                violations.len(),
                violations[0].signal
            )));
        }
        match &grid.monte_carlo {
            None => tasks.push(Task { point, sample: None, scenario }),
            Some(mc) => {
                // same seed at every point: plants are shared across the grid
                let plants = sample_plant(&mc.sampler, &scenario.plant, mc.n)?;
                for (k, p) in plants.into_iter().enumerate() {
                    let mut sc = scenario.clone();
                    sc.actual_plant = Some(p);
                    sc.uncertainty = None;
                    tasks.push(Task { point, sample: Some(k), scenario: sc });
                }
            }
        }
    }

    log::info!("sweep `{}`: {} runs on {} worker(s)", grid.name, tasks.len(), grid.parallelism);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(grid.parallelism)
        .build()
        .map_err(|e| Error::InvalidSweep(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> =
        pool.install(|| tasks.par_iter().map(|t| run_task(t, grid.point_values(t.point))).collect());

    for r in rows.iter().filter(|r| r.status != RunStatus::Ok) {
        log::warn!("point {} sample {:?}: {}", r.point, r.sample, r.status.message());
    }
    Ok(SweepResult {
        name: grid.name.clone(),
        axes: grid.axes.clone(),
        samples_per_point: grid.samples_per_point(),
        rows,
    })
}

/// One metric over a 2-axis grid; rows follow the first axis, columns the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub metric: String,
    pub row_axis: String,
    pub col_axis: String,
    pub row_values: Vec<f64>,
    pub col_values: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

impl Surface {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.mean[i]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        self.mean.iter().map(|r| r[j]).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![format!("{}\\{}", self.row_axis, self.col_axis)];
        header.extend(self.col_values.iter().map(|c| format!("mean@{}", fmt_f64(*c))));
        header.extend(self.col_values.iter().map(|c| format!("std@{}", fmt_f64(*c))));
        w.write_record(&header)?;
        for (i, rv) in self.row_values.iter().enumerate() {
            let mut rec = vec![fmt_f64(*rv)];
            rec.extend(self.mean[i].iter().map(|v| fmt_f64(*v)));
            rec.extend(self.std[i].iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn error_surface(result: &SweepResult, metric: &str) -> Result<Surface> {
    if result.axes.len() != 2 {
        return Err(Error::NotTwoAxis(result.axes.len()));
    }
    let values = result.metric(metric)?;
    let (nr, nc) = (result.axes[0].values.len(), result.axes[1].values.len());
    let mut groups = vec![Vec::new(); nr * nc];
    for (row, v) in result.rows.iter().zip(values) {
        groups[row.point].push(v);
    }
    let mut mean = vec![vec![0.0; nc]; nr];
    let mut std = vec![vec![0.0; nc]; nr];
    for (p, g) in groups.iter().enumerate() {
        let (m, s) = mean_std(g);
        mean[p / nc][p % nc] = m;
        std[p / nc][p % nc] = s;
    }
    Ok(Surface {
        metric: metric.to_string(),
        row_axis: result.axes[0].name.clone(),
        col_axis: result.axes[1].name.clone(),
        row_values: result.axes[0].values.clone(),
        col_values: result.axes[1].values.clone(),
        mean,
        std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub point: usize,
    pub sample: Option<usize>,
    pub status: RunStatus,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub name: String,
    pub axes: Vec<Axis>,
    pub samples_per_point: usize,
    pub total_runs: usize,
    pub ok_runs: usize,
    pub failed_runs: Vec<FailedRun>,
    pub surfaces: Vec<String>,
}

/// Long-format table: one row per run.
pub fn write_results_csv<W: std::io::Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = vec!["point".into()];
    header.extend(result.axes.iter().map(|a| a.name.clone()));
    header.extend(["sample", "status", "message", "a1", "b1", "a2", "a21", "b2"].map(String::from));
    header.extend(METRIC_NAMES.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for row in &result.rows {
        let mut rec = vec![row.point.to_string()];
        rec.extend(row.axis_values.iter().map(|v| fmt_f64(*v)));
        rec.push(row.sample.map(|s| s.to_string()).unwrap_or_default());
        rec.push(row.status.label().to_string());
        rec.push(row.status.message().to_string());
        let p = row.plant;
        rec.extend([p.a1, p.b1, p.a2, p.a21, p.b2].iter().map(|v| fmt_f64(*v)));
        for m in METRIC_NAMES {
            rec.push(row.metrics.and_then(|x| x.get(m)).map(fmt_f64).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv`, one `surface_<metric>.csv` per requested metric (2-axis sweeps
/// only) and `summary.json` into `dir`.
pub fn write_outputs(result: &SweepResult, dir: &Path, surface_metrics: &[String]) -> Result<SweepSummary> {
    fs::create_dir_all(dir)?;
    write_results_csv(result, fs::File::create(dir.join("results.csv"))?)?;
    let mut surfaces = Vec::new();
    if result.axes.len() == 2 {
        for m in surface_metrics {
            let file = format!("surface_{m}.csv");
            error_surface(result, m)?.write_csv(fs::File::create(dir.join(&file))?)?;
            surfaces.push(file);
        }
    }
    let failed_runs: Vec<FailedRun> = result
        .failed()
        .map(|r| FailedRun { point: r.point, sample: r.sample, status: r.status.clone() })
        .collect();
    let summary = SweepSummary {
        name: result.name.clone(),
        axes: result.axes.clone(),
        samples_per_point: result.samples_per_point,
        total_runs: result.rows.len(),
        ok_runs: result.rows.len() - failed_runs.len(),
        failed_runs,
        surfaces,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
