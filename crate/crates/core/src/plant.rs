//! Plant dynamics, a-priori bounds, exogenous signals and parametric uncertainty.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar system coefficients of the nozzle (actuation) and strand (printing) subsystems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Actuation pole, 1/s. Must be negative.
    pub a1: f64,
    /// Inlet mass flow rate to nozzle velocity rate gain. Must be positive.
    pub b1: f64,
    /// Printing pole, 1/s. Must be negative.
    pub a2: f64,
    /// Coupling from nozzle velocity into the strand, 1/s.
    pub a21: f64,
    /// Plate velocity to strand velocity rate gain. Must be positive.
    pub b2: f64,
}

impl PlantParams {
    pub fn new(a1: f64, b1: f64, a2: f64, a21: f64, b2: f64) -> Result<Self> {
        let p = Self { a1, b1, a2, a21, b2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.a1, self.b1, self.a2, self.a21, self.b2];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPlant("all coefficients must be finite".into()));
        }
        if self.a1 >= 0.0 {
            return Err(Error::InvalidPlant(format!("a1 must be negative, got {}", self.a1)));
        }
        if self.a2 >= 0.0 {
            return Err(Error::InvalidPlant(format!("a2 must be negative, got {}", self.a2)));
        }
        if self.b1 <= 0.0 {
            return Err(Error::InvalidPlant(format!("b1 must be positive, got {}", self.b1)));
        }
        if self.b2 <= 0.0 {
            return Err(Error::InvalidPlant(format!("b2 must be positive, got {}", self.b2)));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }
}

/// A-priori bounds on disturbances, references and reference derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub eta1_bar: f64,
    pub eta2_bar: f64,
    pub x1r_bar: f64,
    pub x1rd_bar: f64,
    pub x2r_bar: f64,
    pub x2rd_bar: f64,
}

impl BoundsSpec {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("eta1_bar", self.eta1_bar),
            ("eta2_bar", self.eta2_bar),
            ("x1r_bar", self.x1r_bar),
            ("x1rd_bar", self.x1rd_bar),
            ("x2r_bar", self.x2r_bar),
            ("x2rd_bar", self.x2rd_bar),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidBounds(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Reference trajectory for one of the two velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReferenceSignal {
    Constant {
        value: f64,
    },
    /// Linear ramp from `start_value` with `slope`, held constant from `hold_time` on.
    RampToHold {
        #[serde(default)]
        start_value: f64,
        slope: f64,
        hold_time: f64,
    },
    /// Linear interpolation through `(t, value)` points, held flat outside them.
    PiecewiseLinear {
        points: Vec<(f64, f64)>,
    },
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl ReferenceSignal {
    pub fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match self {
            Self::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidSignal("constant reference must be finite".into()))
            }
            Self::RampToHold { start_value, slope, hold_time } => {
                if !finite(&[*start_value, *slope, *hold_time]) || *hold_time < 0.0 {
                    Err(Error::InvalidSignal("ramp-to-hold needs finite values and hold_time >= 0".into()))
                } else {
                    Ok(())
                }
            }
            Self::PiecewiseLinear { points } => {
                if points.is_empty() {
                    return Err(Error::InvalidSignal("piecewise-linear reference needs at least one point".into()));
                }
                if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return Err(Error::InvalidSignal("piecewise-linear points must be finite".into()));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidSignal("piecewise-linear times must be strictly increasing".into()));
                }
                Ok(())
            }
            Self::Sinusoid { amplitude, omega, offset, phase } => {
                if finite(&[*amplitude, *omega, *offset, *phase]) {
                    Ok(())
                } else {
                    Err(Error::InvalidSignal("sinusoid parameters must be finite".into()))
                }
            }
            _ => Ok(()),
        }
    }

    /// Value and right-sided derivative at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            Self::Constant { value } => (*value, 0.0),
            Self::RampToHold { start_value, slope, hold_time } => {
                if t < *hold_time {
                    (start_value + slope * t, *slope)
                } else {
                    (start_value + slope * hold_time, 0.0)
                }
            }
            Self::PiecewiseLinear { points } => eval_piecewise(points, t),
            Self::Sinusoid { amplitude, omega, offset, phase } => {
                let arg = omega * t + phase;
                (offset + amplitude * arg.sin(), amplitude * omega * arg.cos())
            }
        }
    }

    /// Analytic `(magnitude bound, derivative bound)` over `t >= 0`.
    pub fn declared_bounds(&self) -> (f64, f64) {
        match self {
            Self::Constant { value } => (value.abs(), 0.0),
            Self::RampToHold { start_value, slope, hold_time } => {
                let end = start_value + slope * hold_time;
                (start_value.abs().max(end.abs()), if *hold_time > 0.0 { slope.abs() } else { 0.0 })
            }
            Self::PiecewiseLinear { points } => {
                let mag = points.iter().fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
                let der = points
                    .windows(2)
                    .fold(0.0_f64, |m, w| m.max(((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()));
                (mag, der)
            }
            Self::Sinusoid { amplitude, omega, offset, .. } => {
                (offset.abs() + amplitude.abs(), (amplitude * omega).abs())
            }
        }
    }
}

fn eval_piecewise(points: &[(f64, f64)], t: f64) -> (f64, f64) {
    let (t0, v0) = points[0];
    if t < t0 {
        return (v0, 0.0);
    }
    // first segment whose right end lies strictly after t; breakpoints take the right segment's slope
    match points.windows(2).find(|w| t < w[1].0) {
        Some(w) => {
            let ((ta, va), (tb, vb)) = (w[0], w[1]);
            let slope = (vb - va) / (tb - ta);
            (va + slope * (t - ta), slope)
        }
        None => (points[points.len() - 1].1, 0.0),
    }
}

/// Additive disturbance acting on one subsystem.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisturbanceProfile {
    #[default]
    Zero,
    /// Parabolic bump on `[t_start, t_end]` peaking at `amplitude` at the midpoint.
    QuadraticPulse {
        amplitude: f64,
        t_start: f64,
        t_end: f64,
    },
    Constant {
        value: f64,
    },
    /// Linear interpolation of samples, held flat outside the sampled range.
    CustomSamples {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl DisturbanceProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Zero => Ok(()),
            Self::QuadraticPulse { amplitude, t_start, t_end } => {
                if !(amplitude.is_finite() && t_start.is_finite() && t_end.is_finite()) {
                    Err(Error::InvalidSignal("quadratic pulse parameters must be finite".into()))
                } else if t_start >= t_end {
                    Err(Error::InvalidSignal(format!(
                        "quadratic pulse needs t_start < t_end, got [{t_start}, {t_end}]"
                    )))
                } else {
                    Ok(())
                }
            }
            Self::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidSignal("constant disturbance must be finite".into()))
            }
            Self::Constant { .. } => Ok(()),
            Self::CustomSamples { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidSignal(
                        "custom samples need equally many (>= 1) times and values".into(),
                    ));
                }
                if times.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSignal("custom samples must be finite".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidSignal("custom sample times must be strictly increasing".into()));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::QuadraticPulse { amplitude, t_start, t_end } => {
                if t <= *t_start || t >= *t_end {
                    0.0
                } else {
                    let w = t_end - t_start;
                    amplitude * 4.0 * (t - t_start) * (t_end - t) / (w * w)
                }
            }
            Self::Constant { value } => *value,
            Self::CustomSamples { times, values } => {
                let pts: Vec<(f64, f64)> = times.iter().copied().zip(values.iter().copied()).collect();
                eval_piecewise(&pts, t).0
            }
        }
    }

    /// Earliest time at which the profile can be nonzero, `None` for the zero profile.
    pub fn onset(&self) -> Option<f64> {
        match self {
            Self::Zero => None,
            Self::QuadraticPulse { t_start, .. } => Some(*t_start),
            Self::Constant { value } => (*value != 0.0).then_some(0.0),
            Self::CustomSamples { times, values } => {
                if values.iter().all(|v| *v == 0.0) {
                    None
                } else {
                    // nonzero only after the last leading zero sample
                    let first_nz = values.iter().position(|v| *v != 0.0).unwrap_or(0);
                    Some(if first_nz == 0 { 0.0 } else { times[first_nz - 1] })
                }
            }
        }
    }
}

pub fn eval_reference(reference: &ReferenceSignal, t: f64) -> (f64, f64) {
    reference.eval(t)
}

pub fn eval_disturbance(disturbance: &DisturbanceProfile, t: f64) -> f64 {
    disturbance.eval(t)
}

/// Right-hand side of the cascaded plant.
#[inline]
pub fn plant_derivatives(
    p: &PlantParams,
    x1: f64,
    x2: f64,
    u1: f64,
    u2: f64,
    eta1: f64,
    eta2: f64,
) -> (f64, f64) {
    (
        p.a1 * x1 + p.b1 * u1 + eta1,
        p.a2 * x2 + p.a21 * x1 + p.b2 * u2 + eta2,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Value,
    Derivative,
}

/// A maximal run of consecutive grid samples that exceed one bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `x1r`, `x2r`, `eta1` or `eta2`.
    pub signal: String,
    pub quantity: Quantity,
    pub bound: f64,
    pub t_first: f64,
    pub t_last: f64,
    /// Largest absolute value seen inside the run.
    pub worst: f64,
    pub samples: usize,
}

/// Exogenous signals of a scenario, borrowed for validation.
#[derive(Debug, Clone, Copy)]
pub struct Signals<'a> {
    pub x1r: &'a ReferenceSignal,
    pub x2r: &'a ReferenceSignal,
    pub eta1: &'a DisturbanceProfile,
    pub eta2: &'a DisturbanceProfile,
}

/// Samples every signal on `[0, horizon]` with spacing `grid_step` and lists all bound
/// violations. An empty list means the scenario satisfies its bounds.
pub fn validate_scenario(
    bounds: &BoundsSpec,
    signals: Signals<'_>,
    horizon: f64,
    grid_step: f64,
) -> Vec<Violation> {
    assert!(horizon > 0.0 && grid_step > 0.0, "horizon and grid step must be positive");
    let n = (horizon / grid_step).ceil() as usize;
    let mut trackers = [
        RunTracker::new("x1r", Quantity::Value, bounds.x1r_bar),
        RunTracker::new("x1r", Quantity::Derivative, bounds.x1rd_bar),
        RunTracker::new("x2r", Quantity::Value, bounds.x2r_bar),
        RunTracker::new("x2r", Quantity::Derivative, bounds.x2rd_bar),
        RunTracker::new("eta1", Quantity::Value, bounds.eta1_bar),
        RunTracker::new("eta2", Quantity::Value, bounds.eta2_bar),
    ];
    let mut out = Vec::new();
    for k in 0..=n {
        let t = (k as f64 * grid_step).min(horizon);
        let (r1, r1d) = signals.x1r.eval(t);
        let (r2, r2d) = signals.x2r.eval(t);
        let vals = [r1, r1d, r2, r2d, signals.eta1.eval(t), signals.eta2.eval(t)];
        for (tracker, v) in trackers.iter_mut().zip(vals) {
            tracker.push(t, v, &mut out);
        }
    }
    for tracker in &mut trackers {
        tracker.flush(&mut out);
    }
    out.sort_by(|a, b| a.t_first.total_cmp(&b.t_first).then_with(|| a.signal.cmp(&b.signal)));
    out
}

struct RunTracker {
    signal: &'static str,
    quantity: Quantity,
    bound: f64,
    open: Option<Violation>,
}

impl RunTracker {
    fn new(signal: &'static str, quantity: Quantity, bound: f64) -> Self {
        Self { signal, quantity, bound, open: None }
    }

    fn push(&mut self, t: f64, v: f64, out: &mut Vec<Violation>) {
        // relative slack so analytically tight bounds are not flagged by rounding
        let tol = 1e-12 * (1.0 + self.bound);
        if !v.is_finite() || v.abs() > self.bound + tol {
            let run = self.open.get_or_insert_with(|| Violation {
                signal: self.signal.to_string(),
                quantity: self.quantity,
                bound: self.bound,
                t_first: t,
                t_last: t,
                worst: 0.0,
                samples: 0,
            });
            run.t_last = t;
            run.worst = run.worst.max(v.abs());
            run.samples += 1;
        } else {
            self.flush(out);
        }
    }

    fn flush(&mut self, out: &mut Vec<Violation>) {
        if let Some(v) = self.open.take() {
            out.push(v);
        }
    }
}

/// Perturbation applied to one plant coefficient, relative to its nominal value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamDistribution {
    #[default]
    None,
    /// `nominal * (1 + U(-fraction, fraction))`
    Uniform { fraction: f64 },
    /// `nominal * (1 + N(0, rel_std))`
    Gaussian { rel_std: f64 },
}

impl ParamDistribution {
    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            Self::None => Ok(()),
            Self::Uniform { fraction } if fraction.is_finite() && fraction >= 0.0 => Ok(()),
            Self::Gaussian { rel_std } if rel_std.is_finite() && rel_std >= 0.0 => Ok(()),
            _ => Err(Error::InvalidPlant(format!("distribution for {name} needs a finite, nonnegative spread"))),
        }
    }

    fn draw<R: Rng>(&self, nominal: f64, rng: &mut R) -> f64 {
        match *self {
            Self::None => nominal,
            Self::Uniform { fraction } => {
                if fraction == 0.0 {
                    nominal
                } else {
                    nominal * (1.0 + rng.random_range(-fraction..=fraction))
                }
            }
            Self::Gaussian { rel_std } => {
                // rel_std validated finite and nonnegative, so Normal::new cannot fail
                let n = Normal::new(0.0, rel_std).expect("valid normal");
                nominal * (1.0 + n.sample(rng))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintySampler {
    pub seed: u64,
    pub a1: ParamDistribution,
    pub b1: ParamDistribution,
    pub a2: ParamDistribution,
    pub a21: ParamDistribution,
    pub b2: ParamDistribution,
}

/// Rejection attempts per sample before giving up.
pub const RESAMPLE_CAP: usize = 100;

impl UncertaintySampler {
    pub fn validate(&self) -> Result<()> {
        self.a1.validate("a1")?;
        self.b1.validate("b1")?;
        self.a2.validate("a2")?;
        self.a21.validate("a21")?;
        self.b2.validate("b2")
    }
}

/// Draws `n` perturbed plants around `nominal`. Every returned plant satisfies the plant
/// invariants; a draw that violates them is redrawn up to [`RESAMPLE_CAP`] times.
pub fn sample_plant(sampler: &UncertaintySampler, nominal: &PlantParams, n: usize) -> Result<Vec<PlantParams>> {
    assert!(n >= 1, "sample count must be at least 1");
    sampler.validate()?;
    nominal.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut out = Vec::with_capacity(n);
    for index in 0..n {
        let mut accepted = None;
        for _ in 0..RESAMPLE_CAP {
            let candidate = PlantParams {
                a1: sampler.a1.draw(nominal.a1, &mut rng),
                b1: sampler.b1.draw(nominal.b1, &mut rng),
                a2: sampler.a2.draw(nominal.a2, &mut rng),
                a21: sampler.a21.draw(nominal.a21, &mut rng),
                b2: sampler.b2.draw(nominal.b2, &mut rng),
            };
            if candidate.is_valid() {
                accepted = Some(candidate);
                break;
            }
        }
        match accepted {
            Some(p) => out.push(p),
            None => return Err(Error::ResampleCapExceeded { index, attempts: RESAMPLE_CAP }),
        }
    }
    Ok(out)
}
