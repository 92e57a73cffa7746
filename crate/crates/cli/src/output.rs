//! Writing run and sweep artifacts to disk.

use std::fs;
use std::path::{Path, PathBuf};

use extrudesim_core::sim::{RunOutput, Trajectory};
use extrudesim_core::stats::mean_std;
use extrudesim_core::sweep::{error_surface, write_outputs, SweepResult, SweepSummary};
use extrudesim_core::Result;

use crate::svg::{heatmap, line_chart, Series};

/// Writes `trajectory.csv` and `metrics.json`, plus `tracking.svg` and `control.svg`
/// when `plot` is set. Returns the written paths.
pub fn write_run(run: &RunOutput, dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let traj = dir.join("trajectory.csv");
    run.trajectory.write_csv(fs::File::create(&traj)?)?;
    let metrics = dir.join("metrics.json");
    fs::write(&metrics, serde_json::to_string_pretty(&run.report)? + "\n")?;
    let mut written = vec![traj, metrics];
    if plot {
        written.extend(write_run_plots(&run.trajectory, &run.report.scenario, dir)?);
    }
    Ok(written)
}

pub fn write_run_plots(traj: &Trajectory, name: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    let t = traj.times();
    let cols = |f: fn(&extrudesim_core::sim::Sample) -> f64| traj.column(f);
    let (x1, x1r, x2, x2r) = (cols(|s| s.x1), cols(|s| s.x1r), cols(|s| s.x2), cols(|s| s.x2r));
    let tracking = line_chart(
        &format!("{name}: tracking"),
        "t [s]",
        "velocity",
        &[
            Series { label: "x1", x: &t, y: &x1, dashed: false },
            Series { label: "x1r", x: &t, y: &x1r, dashed: true },
            Series { label: "x2", x: &t, y: &x2, dashed: false },
            Series { label: "x2r", x: &t, y: &x2r, dashed: true },
        ],
    );
    let (u1, u2, uc, usm, uopt) =
        (cols(|s| s.u1), cols(|s| s.u2), cols(|s| s.u_cancel), cols(|s| s.u_sm), cols(|s| s.u_opt));
    let control = line_chart(
        &format!("{name}: control inputs"),
        "t [s]",
        "input",
        &[
            Series { label: "u1", x: &t, y: &u1, dashed: false },
            Series { label: "u2", x: &t, y: &u2, dashed: false },
            Series { label: "u_cancel", x: &t, y: &uc, dashed: true },
            Series { label: "u_sm", x: &t, y: &usm, dashed: true },
            Series { label: "u_opt", x: &t, y: &uopt, dashed: true },
        ],
    );
    let (a, b) = (dir.join("tracking.svg"), dir.join("control.svg"));
    fs::write(&a, tracking)?;
    fs::write(&b, control)?;
    Ok(vec![a, b])
}

/// Per-point mean and standard deviation of a metric across Monte-Carlo samples.
pub fn point_stats(result: &SweepResult, metric: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let values = result.metric(metric)?;
    let n_points = result.axes.iter().map(|a| a.values.len()).product::<usize>();
    let mut groups = vec![Vec::new(); n_points];
    for (row, v) in result.rows.iter().zip(values) {
        groups[row.point].push(v);
    }
    Ok(groups.iter().map(|g| mean_std(g)).unzip())
}

/// Writes the standard sweep files, and with `plot` one chart per surface metric:
/// `heatmap_<metric>.svg` for 2-axis sweeps, `line_<metric>.svg` for 1-axis sweeps.
pub fn write_sweep(result: &SweepResult, dir: &Path, metrics: &[String], plot: bool) -> Result<SweepSummary> {
    let summary = write_outputs(result, dir, metrics)?;
    if plot {
        for m in metrics {
            if result.axes.len() == 2 {
                fs::write(dir.join(format!("heatmap_{m}.svg")), heatmap(&error_surface(result, m)?))?;
            } else {
                let (mean, std) = point_stats(result, m)?;
                let x = &result.axes[0].values;
                let lo: Vec<f64> = mean.iter().zip(&std).map(|(m, s)| m - s).collect();
                let hi: Vec<f64> = mean.iter().zip(&std).map(|(m, s)| m + s).collect();
                let mut series = vec![Series { label: "mean", x, y: &mean, dashed: false }];
                if result.samples_per_point > 1 {
                    series.push(Series { label: "mean - std", x, y: &lo, dashed: true });
                    series.push(Series { label: "mean + std", x, y: &hi, dashed: true });
                }
                let svg = line_chart(&format!("{}: {m}", result.name), &result.axes[0].name, m, &series);
                fs::write(dir.join(format!("line_{m}.svg")), svg)?;
            }
        }
    }
    Ok(summary)
}
