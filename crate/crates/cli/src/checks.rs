//! Trend and invariant checks evaluated on simulation output. Presets use these for their
//! manifests; the acceptance suite calls the same functions.

use serde::{Deserialize, Serialize};

use extrudesim_core::scenario::Scenario;
use extrudesim_core::sim::{band_reach, simulate, Trajectory};
use extrudesim_core::stats::{is_nonincreasing, spearman};
use extrudesim_core::sweep::Surface;
use extrudesim_core::Result;

/// Outcome of one manifest assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    /// Acceptance criterion this assertion belongs to.
    pub criterion: u8,
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(id: &str, criterion: u8, description: &str, passed: bool, detail: String) -> Self {
        Self { id: id.into(), criterion, description: description.into(), passed, detail }
    }
}

pub fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", items.join(", "))
}

/// Nonincreasing with a small relative slack for floating-point ties.
pub fn nonincreasing(v: &[f64]) -> bool {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter().all(|x| x.is_finite()) && is_nonincreasing(v, 1e-9 * scale)
}

pub fn nondecreasing(v: &[f64]) -> bool {
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    nonincreasing(&neg)
}

/// Centered moving average; entries without a full window are NaN.
fn moving_average(v: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    (0..v.len())
        .map(|k| {
            if k < half || k + half >= v.len() {
                return f64::NAN;
            }
            v[k - half..=k + half].iter().sum::<f64>() / (2 * half + 1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlidingMotionFit {
    pub reach_time: f64,
    /// Largest relative mismatch between the smoothed derivative of `x2_tilde` and
    /// `pole * x2_tilde` over the compared samples.
    pub worst_rel: f64,
    pub samples: usize,
}

/// Compares the smoothed central difference of `x2_tilde` with `pole * x2_tilde` after the
/// surface first enters the `delta` band. Only samples with `|x2_tilde| >= delta` are
/// compared; below that the residual surface motion dominates the signal. `None` if the
/// band is never reached or no sample qualifies.
pub fn sliding_motion_fit(traj: &Trajectory, pole: f64, delta: f64, window: usize) -> Option<SlidingMotionFit> {
    let t = traj.times();
    let e = traj.column(|s| s.err2());
    let s = traj.column(|s| s.s);
    let reach_time = band_reach(&t, &s, delta).reach_time?;
    let n = e.len();
    if n < 3 {
        return None;
    }
    let mut fd = vec![f64::NAN; n];
    for k in 1..n - 1 {
        fd[k] = (e[k + 1] - e[k - 1]) / (t[k + 1] - t[k - 1]);
    }
    let fd_s = moving_average(&fd, window);
    let e_s = moving_average(&e, window);
    let half = window / 2;
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in half + 1..n {
        // every difference in the smoothing window must start after the reach time
        if t[k - half - 1] < reach_time || !fd_s[k].is_finite() || e[k].abs() < delta {
            continue;
        }
        let want = pole * e_s[k];
        worst = worst.max((fd_s[k] - want).abs() / want.abs());
        count += 1;
    }
    (count > 0).then_some(SlidingMotionFit { reach_time, worst_rel: worst, samples: count })
}

/// Largest `|s|` over samples with `t0 <= t <= t1`.
pub fn max_abs_s(traj: &Trajectory, t0: f64, t1: f64) -> f64 {
    traj.samples.iter().filter(|x| x.t >= t0 && x.t <= t1).fold(0.0, |m, x| m.max(x.s.abs()))
}

/// LQ cost of `scenario` with the optimal feedback gain replaced by `factor` times the
/// Riccati gain, for each factor. Returns `(gain, cost_j)` pairs; factor 1 uses the
/// Riccati gain itself.
pub fn lq_costs(scenario: &Scenario, factors: &[f64]) -> Result<Vec<(f64, f64)>> {
    let g_star = scenario.resolve()?.strand.opt_gain;
    factors
        .iter()
        .map(|f| {
            let mut sc = scenario.clone();
            sc.controllers.strand.opt_gain = if *f == 1.0 { None } else { Some(f * g_star) };
            let (_, m) = simulate(&sc.resolve()?)?;
            Ok((f * g_star, m.cost_j))
        })
        .collect()
}

/// Spearman correlation of each row (along the column axis) and each column (along the row
/// axis) of a surface.
pub fn surface_spearman(s: &Surface) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let rows = (0..s.row_values.len()).map(|i| spearman(&s.col_values, s.row(i))).collect();
    let cols = (0..s.col_values.len()).map(|j| spearman(&s.row_values, &s.col(j))).collect();
    (rows, cols)
}
