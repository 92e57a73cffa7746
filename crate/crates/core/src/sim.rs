//! Fixed-step closed-loop simulation.
//!
//! Controls are computed once per step from the pre-step state and held while the plant
//! is advanced by classical RK4 (zero-order hold). Disturbances are evaluated at the RK4
//! stage times. The strand surface integral is advanced with the trapezoid rule once the
//! post-step tracking error is known.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::control::{
    nozzle_control, strand_control, update_sliding_surface, GainCertificate, K1ConditionForm, SlidingState,
    StrandOutput,
};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::plant::{plant_derivatives, PlantParams, Violation};
use crate::scenario::{ResolvedScenario, Scenario};

/// States beyond this magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Reference scales below this are treated as zero; errors are then reported in absolute units.
pub const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon_s: f64,
    pub step_s: f64,
    pub record_every: usize,
    pub steady_state_window_s: f64,
    pub sliding_band_delta: f64,
    /// Start of the post-disturbance window; `None` means the whole horizon.
    pub post_disturbance_start_s: Option<f64>,
    /// Band used for the nozzle reach time; defaults to `sliding_band_delta`.
    pub error_band_1: Option<f64>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSimConfig(m));
        if !(self.step_s.is_finite() && self.step_s > 0.0) {
            return bad(format!("step_s must be positive, got {}", self.step_s));
        }
        if !(self.horizon_s.is_finite() && self.horizon_s >= 10.0 * self.step_s) {
            return bad(format!("horizon_s must be at least 10 steps, got {}", self.horizon_s));
        }
        if self.record_every < 1 {
            return bad("record_every must be >= 1".into());
        }
        if !(self.steady_state_window_s > 0.0 && self.steady_state_window_s < self.horizon_s) {
            return bad(format!(
                "steady_state_window_s must lie in (0, horizon_s), got {}",
                self.steady_state_window_s
            ));
        }
        if !(self.sliding_band_delta.is_finite() && self.sliding_band_delta > 0.0) {
            return bad("sliding_band_delta must be positive".into());
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon_s / self.step_s).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub sliding: SlidingState,
}

impl SimState {
    pub fn initial(sc: &ResolvedScenario) -> Self {
        let (x2r0, _) = sc.x2r.eval(0.0);
        Self {
            t: 0.0,
            x1: sc.initial.x1,
            x2: sc.initial.x2,
            sliding: SlidingState::new(x2r0 - sc.initial.x2),
        }
    }
}

/// Signals and control actions at one controller update.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Controls {
    x1r: f64,
    x2r: f64,
    eta1: f64,
    eta2: f64,
    u1: f64,
    strand: StrandOutput,
}

fn controls_at(state: &SimState, sc: &ResolvedScenario) -> Controls {
    let (x1r, _) = sc.x1r.eval(state.t);
    let (x2r, _) = sc.x2r.eval(state.t);
    Controls {
        x1r,
        x2r,
        eta1: sc.eta1.eval(state.t),
        eta2: sc.eta2.eval(state.t),
        u1: nozzle_control(&sc.nozzle, x1r, state.x1),
        strand: strand_control(&sc.strand, state.x1, x2r, state.x2, &state.sliding),
    }
}

fn rk4(p: &PlantParams, sc: &ResolvedScenario, t: f64, x: (f64, f64), u: (f64, f64), dt: f64) -> (f64, f64) {
    let f = |t: f64, x1: f64, x2: f64| plant_derivatives(p, x1, x2, u.0, u.1, sc.eta1.eval(t), sc.eta2.eval(t));
    let h = 0.5 * dt;
    let k1 = f(t, x.0, x.1);
    let k2 = f(t + h, x.0 + h * k1.0, x.1 + h * k1.1);
    let k3 = f(t + h, x.0 + h * k2.0, x.1 + h * k2.1);
    let k4 = f(t + dt, x.0 + dt * k3.0, x.1 + dt * k3.1);
    (
        x.0 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        x.1 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

fn advance(state: &SimState, ctl: &Controls, sc: &ResolvedScenario, dt: f64, t_next: f64) -> Result<SimState> {
    let (x1, x2) = rk4(&sc.plant, sc, state.t, (state.x1, state.x2), (ctl.u1, ctl.strand.u2), dt);
    if !(x1.is_finite() && x2.is_finite()) || x1.abs() > DIVERGENCE_LIMIT || x2.abs() > DIVERGENCE_LIMIT {
        return Err(Error::Divergence { t: state.t, x1: state.x1, x2: state.x2 });
    }
    let (x2r_next, _) = sc.x2r.eval(t_next);
    let sliding = update_sliding_surface(state.sliding, &sc.strand, x2r_next - x2, dt);
    Ok(SimState { t: t_next, x1, x2, sliding })
}

/// One controller period: controls from `state`, held over `[t, t + dt]`.
pub fn step(state: &SimState, sc: &ResolvedScenario, dt: f64) -> Result<SimState> {
    let ctl = controls_at(state, sc);
    advance(state, &ctl, sc, dt, state.t + dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x1: f64,
    pub x1r: f64,
    pub x2: f64,
    pub x2r: f64,
    pub u1: f64,
    pub u2: f64,
    pub u_cancel: f64,
    pub u_sm: f64,
    pub u_opt: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub s: f64,
    #[serde(rename = "W1")]
    pub w1: f64,
    #[serde(rename = "W2")]
    pub w2: f64,
}

impl Sample {
    fn new(state: &SimState, ctl: &Controls) -> Self {
        let e1 = ctl.x1r - state.x1;
        Self {
            t: state.t,
            x1: state.x1,
            x1r: ctl.x1r,
            x2: state.x2,
            x2r: ctl.x2r,
            u1: ctl.u1,
            u2: ctl.strand.u2,
            u_cancel: ctl.strand.u_cancel,
            u_sm: ctl.strand.u_sm,
            u_opt: ctl.strand.u_opt,
            eta1: ctl.eta1,
            eta2: ctl.eta2,
            s: state.sliding.s,
            w1: 0.5 * e1 * e1,
            w2: 0.5 * state.sliding.s * state.sliding.s,
        }
    }

    pub fn err1(&self) -> f64 {
        self.x1r - self.x1
    }

    pub fn err2(&self) -> f64 {
        self.x2r - self.x2
    }

    fn fields(&self) -> [f64; 15] {
        [
            self.t, self.x1, self.x1r, self.x2, self.x2r, self.u1, self.u2, self.u_cancel, self.u_sm, self.u_opt,
            self.eta1, self.eta2, self.s, self.w1, self.w2,
        ]
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 15] =
    ["t", "x1", "x1r", "x2", "x2r", "u1", "u2", "u_cancel", "u_sm", "u_opt", "eta1", "eta2", "s", "W1", "W2"];

/// Recorded samples, strictly increasing in `t`. Each sample carries the controls applied
/// over the step that starts at its time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn column(&self, f: impl Fn(&Sample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_COLUMNS)?;
        for s in &self.samples {
            w.write_record(s.fields().iter().map(|v| fmt_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Peak nozzle tracking error over the horizon, percent of the reference scale.
    pub max_err1_pct: f64,
    pub max_err2_pct: f64,
    /// Peak tracking errors from the disturbance onset on.
    pub max_err1_post_pct: f64,
    pub max_err2_post_pct: f64,
    /// Mean absolute tracking errors over the trailing steady-state window.
    pub ss_err1_pct: f64,
    pub ss_err2_pct: f64,
    pub control_effort_u1: f64,
    pub control_effort_u2: f64,
    /// `integral(q * x2_tilde^2 + r * u2^2)`.
    pub cost_j: f64,
    pub reach_time_1: Option<f64>,
    pub reach_time_s: Option<f64>,
    pub fraction_in_band_s: f64,
    pub reference_scale_1: f64,
    pub reference_scale_2: f64,
    /// Set when the matching reference scale vanished and errors are absolute.
    pub absolute_err1: bool,
    pub absolute_err2: bool,
}

/// Names accepted by [`Metrics::get`].
pub const METRIC_NAMES: [&str; 14] = [
    "max_err1_pct",
    "max_err2_pct",
    "max_err1_post_pct",
    "max_err2_post_pct",
    "ss_err1_pct",
    "ss_err2_pct",
    "control_effort_u1",
    "control_effort_u2",
    "cost_j",
    "reach_time_1",
    "reach_time_s",
    "fraction_in_band_s",
    "reference_scale_1",
    "reference_scale_2",
];

impl Metrics {
    /// Numeric metric by name; absent reach times come back as NaN.
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "max_err1_pct" => self.max_err1_pct,
            "max_err2_pct" => self.max_err2_pct,
            "max_err1_post_pct" => self.max_err1_post_pct,
            "max_err2_post_pct" => self.max_err2_post_pct,
            "ss_err1_pct" => self.ss_err1_pct,
            "ss_err2_pct" => self.ss_err2_pct,
            "control_effort_u1" => self.control_effort_u1,
            "control_effort_u2" => self.control_effort_u2,
            "cost_j" => self.cost_j,
            "reach_time_1" => self.reach_time_1.unwrap_or(f64::NAN),
            "reach_time_s" => self.reach_time_s.unwrap_or(f64::NAN),
            "fraction_in_band_s" => self.fraction_in_band_s,
            "reference_scale_1" => self.reference_scale_1,
            "reference_scale_2" => self.reference_scale_2,
            _ => return None,
        })
    }
}

fn trapz(t: &[f64], y: impl Fn(usize) -> f64) -> f64 {
    (1..t.len()).map(|i| 0.5 * (t[i] - t[i - 1]) * (y(i) + y(i - 1))).sum()
}

/// Result of a band-entry scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandReach {
    /// First time the signal is within `delta` and never again exceeds `2 delta`.
    pub reach_time: Option<f64>,
    /// Share of samples from the reach time on with `|v| <= delta`; 0 when never reached.
    pub fraction_in_band: f64,
}

pub fn band_reach(times: &[f64], values: &[f64], delta: f64) -> BandReach {
    assert!(delta > 0.0, "band width must be positive");
    let start = values
        .iter()
        .rposition(|v| v.is_nan() || v.abs() > 2.0 * delta)
        .map_or(0, |j| j + 1);
    match (start..values.len()).find(|&i| values[i].abs() <= delta) {
        Some(i) => {
            let inside = values[i..].iter().filter(|v| v.abs() <= delta).count();
            BandReach { reach_time: Some(times[i]), fraction_in_band: inside as f64 / (values.len() - i) as f64 }
        }
        None => BandReach { reach_time: None, fraction_in_band: 0.0 },
    }
}

pub fn sliding_band_check(traj: &Trajectory, delta: f64) -> BandReach {
    band_reach(&traj.times(), &traj.column(|s| s.s), delta)
}

pub fn compute_metrics(traj: &Trajectory, cfg: &SimConfig, q: f64, r: f64) -> Result<Metrics> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let s = &traj.samples;
    let t = traj.times();
    let t_end = t[t.len() - 1];

    let scale1 = s.iter().fold(0.0_f64, |m, x| m.max(x.x1r.abs()));
    let scale2 = s.iter().fold(0.0_f64, |m, x| m.max(x.x2r.abs()));
    let pct = |v: f64, scale: f64| if scale < SCALE_FLOOR { v } else { 100.0 * v / scale };

    let peak = |from: f64, e: &dyn Fn(&Sample) -> f64| {
        s.iter().filter(|x| x.t >= from).fold(0.0_f64, |m, x| m.max(e(x).abs()))
    };
    let post = cfg.post_disturbance_start_s.unwrap_or(0.0);
    let e1 = |x: &Sample| x.err1();
    let e2 = |x: &Sample| x.err2();

    let ss_from = t_end - cfg.steady_state_window_s;
    let ss_mean = |e: &dyn Fn(&Sample) -> f64| {
        let (sum, n) = s.iter().filter(|x| x.t >= ss_from).fold((0.0, 0usize), |(a, n), x| (a + e(x).abs(), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    };

    let band1 = cfg.error_band_1.unwrap_or(cfg.sliding_band_delta);
    let reach1 = band_reach(&t, &traj.column(|x| x.err1()), band1);
    let reach_s = band_reach(&t, &traj.column(|x| x.s), cfg.sliding_band_delta);

    Ok(Metrics {
        max_err1_pct: pct(peak(0.0, &e1), scale1),
        max_err2_pct: pct(peak(0.0, &e2), scale2),
        max_err1_post_pct: pct(peak(post, &e1), scale1),
        max_err2_post_pct: pct(peak(post, &e2), scale2),
        ss_err1_pct: pct(ss_mean(&e1), scale1),
        ss_err2_pct: pct(ss_mean(&e2), scale2),
        control_effort_u1: trapz(&t, |i| s[i].u1 * s[i].u1),
        control_effort_u2: trapz(&t, |i| s[i].u2 * s[i].u2),
        cost_j: trapz(&t, |i| {
            let e = s[i].err2();
            q * e * e + r * s[i].u2 * s[i].u2
        }),
        reach_time_1: reach1.reach_time,
        reach_time_s: reach_s.reach_time,
        fraction_in_band_s: reach_s.fraction_in_band,
        reference_scale_1: scale1,
        reference_scale_2: scale2,
        absolute_err1: scale1 < SCALE_FLOOR,
        absolute_err2: scale2 < SCALE_FLOOR,
    })
}

/// Integrates the full horizon and records every `record_every`-th step plus the last one.
pub fn run_trajectory(sc: &ResolvedScenario) -> Result<Trajectory> {
    let cfg = &sc.sim;
    cfg.validate()?;
    let dt = cfg.step_s;
    let n = cfg.n_steps();
    let mut samples = Vec::with_capacity(n / cfg.record_every + 2);
    let mut state = SimState::initial(sc);
    for k in 0..=n {
        let ctl = controls_at(&state, sc);
        if k % cfg.record_every == 0 || k == n {
            samples.push(Sample::new(&state, &ctl));
        }
        if k == n {
            break;
        }
        // time from the step index, not by accumulation
        state = advance(&state, &ctl, sc, dt, (k + 1) as f64 * dt)?;
    }
    Ok(Trajectory { samples })
}

pub fn simulate(sc: &ResolvedScenario) -> Result<(Trajectory, Metrics)> {
    let traj = run_trajectory(sc)?;
    let metrics = compute_metrics(&traj, &sc.sim, sc.strand.q, sc.strand.r)?;
    Ok((traj, metrics))
}

/// Everything written to `metrics.json` for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub design_plant: PlantParams,
    pub plant: PlantParams,
    pub riccati_p: f64,
    pub opt_gain: f64,
    pub sliding_pole: f64,
    pub k21: f64,
    pub k1_condition_form: K1ConditionForm,
    pub nozzle_certificate: GainCertificate,
    pub nozzle_certificate_paper_literal: GainCertificate,
    pub strand_certificate: GainCertificate,
    pub forced: bool,
    pub violations: Vec<Violation>,
    pub steps: usize,
    pub samples: usize,
    pub metrics: Metrics,
}

/// Output of [`run_scenario`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub resolved: ResolvedScenario,
    pub trajectory: Trajectory,
    pub report: RunReport,
}

/// Resolves, bound-checks and simulates a scenario. Bound violations abort the run
/// unless `force` is set, in which case they are carried in the report.
pub fn run_scenario(scenario: &Scenario, force: bool) -> Result<RunOutput> {
    let resolved = scenario.resolve()?;
    let violations = scenario.bound_violations();
    if !violations.is_empty() {
        if !force {
            return Err(Error::Validation(violations));
        }
        log::warn!("scenario `{}` violates {} bound(s); continuing", scenario.name, violations.len());
    }
    let (trajectory, metrics) = simulate(&resolved)?;
    let report = RunReport {
        scenario: resolved.name.clone(),
        design_plant: resolved.design_plant,
        plant: resolved.plant,
        riccati_p: resolved.strand.p,
        opt_gain: resolved.strand.opt_gain,
        sliding_pole: resolved.strand.sliding_pole,
        k21: resolved.strand.k21,
        k1_condition_form: resolved.k1_condition_form,
        nozzle_certificate: resolved.nozzle_certificate(),
        nozzle_certificate_paper_literal: GainCertificate::nozzle(
            &resolved.design_plant,
            &resolved.bounds,
            K1ConditionForm::PaperLiteral,
            resolved.nozzle.k1,
        ),
        strand_certificate: resolved.strand_certificate(),
        forced: force && !violations.is_empty(),
        violations,
        steps: resolved.sim.n_steps(),
        samples: trajectory.len(),
        metrics,
    };
    Ok(RunOutput { resolved, trajectory, report })
}
