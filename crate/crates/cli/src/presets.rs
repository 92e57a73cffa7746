//! Bundled case-study presets and their expected-property manifests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use extrudesim_core::plant::DisturbanceProfile;
use extrudesim_core::scenario::Scenario;
use extrudesim_core::sim::{run_scenario, simulate, RunOutput};
use extrudesim_core::sweep::{error_surface, run_sweep, BaseScenario, SweepDefinition, SweepGrid, SweepResult};
use extrudesim_core::{Error, Result};

use crate::checks::{
    fmt_list, lq_costs, max_abs_s, nondecreasing, nonincreasing, sliding_motion_fit, surface_spearman, Check,
};
use crate::output::{point_stats, write_run, write_sweep};

pub struct Bundle {
    pub name: &'static str,
    pub description: &'static str,
    pub files: &'static [(&'static str, &'static str)],
}

macro_rules! files {
    ($dir:literal: $($f:literal),+) => {
        &[$(($f, include_str!(concat!("../presets/", $dir, "/", $f)))),+]
    };
}

pub static BUNDLES: [Bundle; 5] = [
    Bundle {
        name: "case1",
        description: "Nozzle tracking under a quadratic inlet-flow degradation pulse; K1 sweep.",
        files: files!("case1": "scenario.json", "sweep.json"),
    },
    Bundle {
        name: "case2",
        description: "Optimal-only strand control over several weightings, plus a regulation run for LQ optimality.",
        files: files!("case2": "scenario.json", "sweep.json", "regulation.json"),
    },
    Bundle {
        name: "case3",
        description: "Strand control with and without the sliding-mode term under a build-plate pulse.",
        files: files!("case3": "scenario.json"),
    },
    Bundle {
        name: "fig5a",
        description: "Post-disturbance nozzle error versus K1 over uncertain nozzle coefficients.",
        files: files!("fig5a": "scenario.json", "sweep.json"),
    },
    Bundle {
        name: "fig5b",
        description: "Steady-state error and effort over a log-spaced Q-R grid, optimal-only.",
        files: files!("fig5b": "scenario.json", "sweep.json"),
    },
];

pub fn names() -> Vec<&'static str> {
    BUNDLES.iter().map(|b| b.name).collect()
}

pub fn find(name: &str) -> Option<&'static Bundle> {
    BUNDLES.iter().find(|b| b.name == name)
}

impl Bundle {
    pub fn file(&self, name: &str) -> Option<&'static str> {
        self.files.iter().find(|(f, _)| *f == name).map(|(_, c)| *c)
    }

    pub fn json(&self, name: &str) -> Result<Value> {
        let text = self.file(name).ok_or_else(|| Error::InvalidSweep(format!("preset file `{name}` missing")))?;
        Ok(serde_json::from_str(text)?)
    }

    /// The bundled scenario, with the uncertainty seed replaced when `seed` is given.
    pub fn scenario_file(&self, name: &str, seed: Option<u64>) -> Result<Scenario> {
        let mut sc = Scenario::from_value(self.json(name)?)?;
        if let (Some(seed), Some(u)) = (seed, sc.uncertainty.as_mut()) {
            u.seed = seed;
        }
        Ok(sc)
    }

    pub fn scenario(&self, seed: Option<u64>) -> Result<Scenario> {
        self.scenario_file("scenario.json", seed)
    }

    /// The bundled sweep with its base scenario inlined. `None` if the preset has no sweep.
    pub fn sweep(&self, seed: Option<u64>, jobs: Option<usize>) -> Result<Option<SweepGrid>> {
        if self.file("sweep.json").is_none() {
            return Ok(None);
        }
        let mut def: SweepDefinition = serde_json::from_value(self.json("sweep.json")?)?;
        if let BaseScenario::Path(p) = &def.base_scenario {
            def.base_scenario = BaseScenario::Inline(Box::new(self.json(p)?));
        }
        let mut grid = SweepGrid::from_definition(def, Path::new("."))?;
        if let (Some(seed), Some(mc)) = (seed, grid.monte_carlo.as_mut()) {
            mc.sampler.seed = seed;
        }
        if let Some(j) = jobs {
            grid.parallelism = j;
        }
        Ok(Some(grid))
    }

    /// Seed in effect for a run with the given override, if anything in the preset is random.
    pub fn effective_seed(&self, seed: Option<u64>) -> Result<Option<u64>> {
        let sweep_seed = self.sweep(seed, None)?.and_then(|g| g.monte_carlo.map(|m| m.sampler.seed));
        let sc_seed = self.scenario(seed)?.uncertainty.map(|u| u.seed);
        Ok(sweep_seed.or(sc_seed))
    }
}

#[derive(Debug, Clone, Default)]
pub struct PresetOptions {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub plot: bool,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetReport {
    pub preset: String,
    pub description: String,
    pub seed: Option<u64>,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Output files relative to the preset output directory.
    pub outputs: Vec<String>,
}

struct Ctx<'a> {
    out: &'a Path,
    opts: &'a PresetOptions,
    outputs: Vec<String>,
}

impl Ctx<'_> {
    fn run(&mut self, sc: &Scenario, sub: &str) -> Result<RunOutput> {
        let run = run_scenario(sc, false)?;
        for p in write_run(&run, &self.out.join(sub), self.opts.plot)? {
            self.note(&p);
        }
        Ok(run)
    }

    fn sweep(&mut self, grid: &SweepGrid, sub: &str) -> Result<SweepResult> {
        let result = run_sweep(grid)?;
        let dir = self.out.join(sub);
        let summary = write_sweep(&result, &dir, &grid.surface_metrics, self.opts.plot)?;
        self.note(&dir.join("results.csv"));
        self.note(&dir.join("summary.json"));
        for s in summary.surfaces {
            self.note(&dir.join(s));
        }
        Ok(result)
    }

    fn note(&mut self, p: &Path) {
        let rel = p.strip_prefix(self.out).unwrap_or(p);
        self.outputs.push(rel.to_string_lossy().replace('\\', "/"));
    }
}

/// Runs a preset into `out`, evaluates its manifest and writes `report.json`.
pub fn run_preset(name: &str, out: &Path, opts: &PresetOptions) -> Result<PresetReport> {
    let bundle = find(name).ok_or_else(|| Error::InvalidSweep(format!("unknown preset `{name}`")))?;
    fs::create_dir_all(out.join("inputs"))?;
    for (f, content) in bundle.files {
        fs::write(out.join("inputs").join(f), content)?;
    }
    let mut ctx = Ctx { out, opts, outputs: Vec::new() };
    let base = bundle.scenario(opts.seed)?;
    let base_run = ctx.run(&base, "scenario")?;
    let grid = bundle.sweep(opts.seed, opts.jobs)?;

    let checks = match name {
        "case1" => {
            let grid = grid.expect("case1 has a sweep");
            let res = ctx.sweep(&grid, "sweep")?;
            k1_checks(&res, base.step_s, true)?
        }
        "fig5a" => {
            let grid = grid.expect("fig5a has a sweep");
            let res = ctx.sweep(&grid, "sweep")?;
            k1_checks(&res, base.step_s, false)?
        }
        "case2" => {
            let grid = grid.expect("case2 has a sweep");
            let res = ctx.sweep(&grid, "sweep")?;
            let reg = bundle.scenario_file("regulation.json", opts.seed)?;
            ctx.run(&reg, "regulation")?;
            let mut checks = q_checks(&res)?;
            checks.push(lq_optimality_check(&reg)?);
            checks
        }
        "case3" => {
            let mut off = base.clone();
            off.controllers.strand.enable_sm = false;
            let off_run = ctx.run(&off, "sm_off")?;
            let mut calm = base.clone();
            calm.disturbances.eta2 = DisturbanceProfile::Zero;
            ctx.run(&calm, "no_disturbance")?;
            let mut checks = sm_pairing_checks(&base_run, &off_run);
            checks.extend(sliding_checks(&base)?);
            checks
        }
        "fig5b" => {
            let grid = grid.expect("fig5b has a sweep");
            let res = ctx.sweep(&grid, "sweep")?;
            qr_surface_checks(&res)?
        }
        _ => unreachable!("bundle names are matched above"),
    };

    let report = PresetReport {
        preset: name.to_string(),
        description: bundle.description.to_string(),
        seed: bundle.effective_seed(opts.seed)?,
        passed: checks.iter().all(|c| c.passed),
        checks,
        outputs: ctx.outputs,
    };
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Post-disturbance error trend over a K1 sweep and, when `band` is set, the comparison of
/// the error at the largest gain with the chatter band `2 b1 K1 dt`.
pub fn k1_checks(res: &SweepResult, dt: f64, band: bool) -> Result<Vec<Check>> {
    let (mean, _) = point_stats(res, "max_err1_post_pct")?;
    let mut checks = vec![Check::new(
        "k1-post-error-nonincreasing",
        3,
        "post-disturbance max_err1_pct is nonincreasing in K1",
        nonincreasing(&mean),
        format!("k1 = {}, max_err1_post_pct = {}", fmt_list(&res.axes[0].values), fmt_list(&mean)),
    )];
    if band {
        let top = res.rows.last().expect("sweep has rows");
        let m = top.metrics.ok_or_else(|| Error::InvalidSweep("top-gain run failed".into()))?;
        let err = if m.absolute_err1 { m.max_err1_post_pct } else { m.max_err1_post_pct / 100.0 * m.reference_scale_1 };
        let k1 = *res.axes[0].values.last().expect("axis has values");
        let chatter = 2.0 * top.plant.b1 * k1 * dt;
        let ratio = err / chatter;
        checks.push(Check::new(
            "k1-top-gain-chatter-band",
            3,
            "at the largest K1 the post-disturbance error band equals 2 b1 K1 dt within 50%",
            (ratio - 1.0).abs() <= 0.5,
            format!("band = {err:.6e}, 2 b1 K1 dt = {chatter:.6e}, ratio = {ratio:.4}"),
        ));
    }
    Ok(checks)
}

/// Steady-state error and effort ordering over a one-axis Q sweep at fixed R.
pub fn q_checks(res: &SweepResult) -> Result<Vec<Check>> {
    let ss = res.metric("ss_err2_pct")?;
    let eff = res.metric("control_effort_u2")?;
    let q = fmt_list(&res.axes[0].values);
    Ok(vec![
        Check::new(
            "q-ss-error-nonincreasing",
            6,
            "ss_err2_pct is nonincreasing in Q at fixed R",
            nonincreasing(&ss),
            format!("q = {q}, ss_err2_pct = {}", fmt_list(&ss)),
        ),
        Check::new(
            "q-effort-nondecreasing",
            6,
            "control_effort_u2 is nondecreasing in Q at fixed R",
            nondecreasing(&eff),
            format!("q = {q}, control_effort_u2 = {}", fmt_list(&eff)),
        ),
    ])
}

pub const LQ_FACTORS: [f64; 4] = [0.5, 0.8, 1.2, 2.0];

/// Cost at the Riccati gain against perturbed static gains.
pub fn lq_optimality_check(reg: &Scenario) -> Result<Check> {
    let mut factors = vec![1.0];
    factors.extend(LQ_FACTORS);
    let costs = lq_costs(reg, &factors)?;
    let j_star = costs[0].1;
    let mut ok = true;
    let mut parts = vec![format!("J(g*) = {j_star:.8}")];
    for (f, (_, j)) in factors.iter().zip(&costs).skip(1) {
        let strict = *f == 0.5 || *f == 2.0;
        ok &= if strict { j_star < *j } else { j_star <= *j };
        parts.push(format!("J({f} g*) = {j:.8}"));
    }
    Ok(Check::new(
        "lq-optimality",
        5,
        "cost at the Riccati gain is no larger than at 0.5, 0.8, 1.2 and 2 times the gain",
        ok,
        parts.join(", "),
    ))
}

/// SM-on against SM-off under the same disturbance.
pub fn sm_pairing_checks(on: &RunOutput, off: &RunOutput) -> Vec<Check> {
    let (m_on, m_off) = (&on.report.metrics, &off.report.metrics);
    let increase = m_on.control_effort_u2 / m_off.control_effort_u2 - 1.0;
    vec![
        Check::new(
            "sm-reduces-post-error",
            7,
            "max post-disturbance strand error is strictly smaller with the sliding-mode term",
            m_on.max_err2_post_pct < m_off.max_err2_post_pct,
            format!("on = {:.6}%, off = {:.6}%", m_on.max_err2_post_pct, m_off.max_err2_post_pct),
        ),
        Check::new(
            "sm-effort-increase-below-10pct",
            7,
            "control_effort_u2 grows by less than 10% with the sliding-mode term",
            increase < 0.10,
            format!(
                "on = {:.6}, off = {:.6}, increase = {:.3}%",
                m_on.control_effort_u2,
                m_off.control_effort_u2,
                100.0 * increase
            ),
        ),
    ]
}

pub const SLIDING_WINDOW: usize = 11;

/// Sliding-motion dynamics without disturbance and band containment during the pulse. Both
/// need every step recorded, so they run in memory at `record_every = 1`.
pub fn sliding_checks(sc: &Scenario) -> Result<Vec<Check>> {
    let delta = sc.sliding_band_delta;
    let mut calm = sc.clone();
    calm.disturbances.eta2 = DisturbanceProfile::Zero;
    calm.record_every = 1;
    let rs = calm.resolve()?;
    let (traj, _) = simulate(&rs)?;
    let pole = rs.strand.sliding_pole;
    let fit = sliding_motion_fit(&traj, pole, delta, SLIDING_WINDOW);
    let motion = match fit {
        Some(f) => Check::new(
            "sliding-motion-matches-optimal-dynamics",
            4,
            "after |s| <= delta the smoothed derivative of x2_tilde matches (a2 - b2^2 P / r) x2_tilde within 5%",
            f.worst_rel <= 0.05,
            format!(
                "pole = {pole:.6}, reach at {:.4} s, worst relative mismatch {:.3e} over {} samples",
                f.reach_time, f.worst_rel, f.samples
            ),
        ),
        None => Check::new(
            "sliding-motion-matches-optimal-dynamics",
            4,
            "after |s| <= delta the smoothed derivative of x2_tilde matches (a2 - b2^2 P / r) x2_tilde within 5%",
            false,
            "surface never reached the band or no sample had |x2_tilde| >= delta".into(),
        ),
    };

    let mut pulsed = sc.clone();
    pulsed.record_every = 1;
    let rs = pulsed.resolve()?;
    let cert = rs.strand_certificate();
    let (traj, _) = simulate(&rs)?;
    let (t0, t1) = match pulsed.disturbances.eta2 {
        DisturbanceProfile::QuadraticPulse { t_start, t_end, .. } => (t_start, t_end),
        _ => return Err(Error::InvalidSweep("case3 needs a quadratic eta2 pulse".into())),
    };
    let peak = max_abs_s(&traj, t0, t1);
    let band = Check::new(
        "surface-stays-in-band-during-pulse",
        4,
        "with K22 above its minimum, |s| stays within 2 delta throughout the eta2 pulse",
        cert.satisfied && peak <= 2.0 * delta,
        format!(
            "k22 = {} (min {:.6}), max |s| on [{t0}, {t1}] = {peak:.6e}, 2 delta = {:.1e}",
            cert.configured_gain,
            cert.min_gain,
            2.0 * delta
        ),
    );
    Ok(vec![motion, band])
}

/// Trend checks on the Q-R surfaces: rows follow Q, columns follow R.
pub fn qr_surface_checks(res: &SweepResult) -> Result<Vec<Check>> {
    let ss = error_surface(res, "ss_err2_pct")?;
    let eff = error_surface(res, "control_effort_u2")?;
    let (_, ss_cols) = surface_spearman(&ss);
    let (eff_rows, _) = surface_spearman(&eff);
    let rho = |v: &[Option<f64>]| v.iter().map(|r| r.unwrap_or(f64::NAN)).collect::<Vec<_>>();

    let ss_mono = (0..ss.col_values.len()).all(|j| nonincreasing(&ss.col(j)));
    let ss_rho = rho(&ss_cols);
    let eff_mono = (0..eff.row_values.len()).all(|i| nonincreasing(eff.row(i)));
    let eff_rho = rho(&eff_rows);
    let top = ss.row(ss.row_values.len() - 1);
    let top_max = top.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    Ok(vec![
        Check::new(
            "ss-error-nonincreasing-in-q",
            6,
            "ss_err2_pct is nonincreasing along Q at every R, Spearman rho <= -0.9",
            ss_mono && ss_rho.iter().all(|r| *r <= -0.9),
            format!("monotone = {ss_mono}, rho per R = {}", fmt_list(&ss_rho)),
        ),
        Check::new(
            "effort-nonincreasing-in-r",
            6,
            "control_effort_u2 is nonincreasing along R at every Q, Spearman rho <= -0.9",
            eff_mono && eff_rho.iter().all(|r| *r <= -0.9),
            format!("monotone = {eff_mono}, rho per Q = {}", fmt_list(&eff_rho)),
        ),
        Check::new(
            "largest-q-below-5pct",
            6,
            "the largest Q reaches ss_err2_pct below 5% at every R",
            top_max < 5.0,
            format!("ss_err2_pct at Q = {} : {}", ss.row_values[ss.row_values.len() - 1], fmt_list(top)),
        ),
    ])
}
