//! Nozzle and strand control laws, the scalar Riccati solution and the gain conditions
//! that guarantee finite-time reaching of the sliding surfaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{BoundsSpec, PlantParams};

/// Discontinuous part of a sliding-mode law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Switching {
    /// `sgn(e)` with `sgn(0) = 0`.
    Signum,
    /// `clamp(e / epsilon, -1, 1)`.
    BoundaryLayer { epsilon: f64 },
}

impl Switching {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Signum => Ok(()),
            Self::BoundaryLayer { epsilon } if epsilon.is_finite() && epsilon > 0.0 => Ok(()),
            Self::BoundaryLayer { epsilon } => Err(Error::InvalidController(format!(
                "boundary-layer width must be positive, got {epsilon}"
            ))),
        }
    }
}

pub fn switching_function(e: f64, mode: Switching) -> f64 {
    match mode {
        Switching::Signum => {
            if e > 0.0 {
                1.0
            } else if e < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Switching::BoundaryLayer { epsilon } => (e / epsilon).clamp(-1.0, 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NozzleControllerConfig {
    pub k1: f64,
    pub switching: Switching,
    /// Optional `[min, max]` clamp on the inlet mass flow rate. Off by default.
    pub u1_limits: Option<[f64; 2]>,
}

impl NozzleControllerConfig {
    pub fn new(k1: f64, switching: Switching) -> Result<Self> {
        let cfg = Self { k1, switching, u1_limits: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(Error::InvalidController(format!("k1 must be finite and >= 0, got {}", self.k1)));
        }
        if let Some([lo, hi]) = self.u1_limits {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidController(format!("u1 limits must satisfy min <= max, got [{lo}, {hi}]")));
            }
        }
        self.switching.validate()
    }
}

/// Nozzle flow law: `u1 = k1 * sw(x1r - x1)`.
pub fn nozzle_control(cfg: &NozzleControllerConfig, x1r: f64, x1: f64) -> f64 {
    let u = cfg.k1 * switching_function(x1r - x1, cfg.switching);
    match cfg.u1_limits {
        Some([lo, hi]) => u.clamp(lo, hi),
        None => u,
    }
}

/// Which algebraic form of the nozzle gain condition to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum K1ConditionForm {
    /// `(x1rd_bar + |a1| * x1r_bar + eta1_bar) / b1`, as produced by the Lyapunov majorization.
    #[default]
    Product,
    /// `(x1rd_bar + |a1| + x1r_bar + eta1_bar) / b1`, the sum as printed in the published
    /// condition. Kept for comparison only.
    PaperLiteral,
}

/// Smallest nozzle gain for which the reaching condition holds under the given bounds.
pub fn min_gain_k1(p: &PlantParams, b: &BoundsSpec, form: K1ConditionForm) -> f64 {
    let drift = match form {
        K1ConditionForm::Product => p.a1.abs() * b.x1r_bar,
        K1ConditionForm::PaperLiteral => p.a1.abs() + b.x1r_bar,
    };
    (b.x1rd_bar + drift + b.eta1_bar) / p.b1
}

/// Smallest strand sliding gain for which the reaching condition holds.
pub fn min_gain_k22(p: &PlantParams, b: &BoundsSpec) -> f64 {
    (b.x2rd_bar + p.a2.abs() * b.x2r_bar + b.eta2_bar) / p.b2
}

/// Configured gain compared against its reaching-condition threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub min_gain: f64,
    pub configured_gain: f64,
    /// `configured_gain - min_gain`.
    pub margin: f64,
    /// Margin on the Lyapunov decrease rate, `input_gain * margin` (alpha1 for the nozzle,
    /// the analogous constant for the strand surface).
    pub rate_margin: f64,
    pub satisfied: bool,
}

impl GainCertificate {
    pub fn new(min_gain: f64, configured_gain: f64, input_gain: f64) -> Self {
        let margin = configured_gain - min_gain;
        Self { min_gain, configured_gain, margin, rate_margin: input_gain * margin, satisfied: margin > 0.0 }
    }

    pub fn nozzle(p: &PlantParams, b: &BoundsSpec, form: K1ConditionForm, k1: f64) -> Self {
        Self::new(min_gain_k1(p, b, form), k1, p.b1)
    }

    pub fn strand(p: &PlantParams, b: &BoundsSpec, k22: f64) -> Self {
        Self::new(min_gain_k22(p, b), k22, p.b2)
    }
}

fn check_weights(q: f64, r: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidWeights(format!("r must be finite and > 0, got {r}")));
    }
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::InvalidWeights(format!("q must be finite and >= 0, got {q}")));
    }
    Ok(())
}

/// Nonnegative root of `2*a2*P + q = P^2 * b2^2 / r`.
///
/// Evaluated as `q / (sqrt(a2^2 + b2^2 q / r) - a2)`, algebraically equal to the textbook
/// root `r (a2 + sqrt(a2^2 + b2^2 q / r)) / b2^2` but free of cancellation when `q` is small.
pub fn solve_riccati(p: &PlantParams, q: f64, r: f64) -> Result<f64> {
    check_weights(q, r)?;
    if !(p.a2 < 0.0 && p.b2.is_finite() && p.b2 != 0.0) {
        return Err(Error::InvalidPlant(format!("Riccati solve needs a2 < 0 and b2 != 0, got a2 = {}, b2 = {}", p.a2, p.b2)));
    }
    let root = (p.a2 * p.a2 + p.b2 * p.b2 * q / r).sqrt();
    Ok(q / (root - p.a2))
}

/// Residual of the scalar Riccati equation at `pr`.
pub fn riccati_residual(p: &PlantParams, q: f64, r: f64, pr: f64) -> f64 {
    2.0 * p.a2 * pr + q - pr * pr * p.b2 * p.b2 / r
}

/// `-sqrt(a2^2 + b2^2 q / r)`, the pole of the optimal reduced dynamics.
pub fn optimal_closed_loop_pole(p: &PlantParams, q: f64, r: f64) -> f64 {
    -(p.a2 * p.a2 + p.b2 * p.b2 * q / r).sqrt()
}

/// Gain that cancels the nozzle-to-strand coupling.
pub fn cancellation_gain(p: &PlantParams) -> f64 {
    p.a21 / p.b2
}

/// Evolving memory of the strand controller: the integral term of the sliding surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlidingState {
    /// Running integral of `pole * x2_tilde`.
    pub z: f64,
    /// `x2_tilde - z` at the last update.
    pub s: f64,
}

impl SlidingState {
    pub fn new(x2_tilde0: f64) -> Self {
        Self { z: 0.0, s: x2_tilde0 }
    }

    /// The tracking error the surface was last evaluated at.
    pub fn x2_tilde(&self) -> f64 {
        self.s + self.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrandControllerConfig {
    pub k21: f64,
    pub k22: f64,
    pub q: f64,
    pub r: f64,
    /// Riccati solution for `(q, r)` on the design plant.
    pub p: f64,
    /// Gain of the optimal feedback term, `b2 * p / r` unless overridden.
    pub opt_gain: f64,
    /// Pole of the reduced dynamics the surface integrates, `a2 - b2 * opt_gain`.
    pub sliding_pole: f64,
    pub switching: Switching,
    pub enable_sm: bool,
    pub enable_opt: bool,
}

impl StrandControllerConfig {
    /// Designs the strand controller on `plant`: solves the Riccati equation and sets the
    /// cancellation gain to `a21 / b2`.
    pub fn design(
        plant: &PlantParams,
        k22: f64,
        q: f64,
        r: f64,
        switching: Switching,
        enable_sm: bool,
        enable_opt: bool,
    ) -> Result<Self> {
        plant.validate()?;
        if !(k22.is_finite() && k22 >= 0.0) {
            return Err(Error::InvalidController(format!("k22 must be finite and >= 0, got {k22}")));
        }
        switching.validate()?;
        let p = solve_riccati(plant, q, r)?;
        let opt_gain = plant.b2 * p / r;
        Ok(Self {
            k21: cancellation_gain(plant),
            k22,
            q,
            r,
            p,
            opt_gain,
            sliding_pole: plant.a2 - plant.b2 * opt_gain,
            switching,
            enable_sm,
            enable_opt,
        })
    }

    pub fn with_k21(mut self, k21: f64) -> Self {
        self.k21 = k21;
        self
    }

    /// Replaces the optimal feedback gain with a static gain `g`; the surface integrates
    /// the matching reduced dynamics `a2 - b2 * g`.
    pub fn with_opt_gain(mut self, plant: &PlantParams, g: f64) -> Self {
        self.opt_gain = g;
        self.sliding_pole = plant.a2 - plant.b2 * g;
        self
    }
}

/// Advances the surface integral by one trapezoid step from the previous tracking error
/// (held in `state`) to `x2_tilde`, and re-evaluates `s`.
pub fn update_sliding_surface(
    state: SlidingState,
    cfg: &StrandControllerConfig,
    x2_tilde: f64,
    dt: f64,
) -> SlidingState {
    debug_assert!(dt > 0.0);
    let prev = state.x2_tilde();
    let z = state.z + 0.5 * dt * cfg.sliding_pole * (prev + x2_tilde);
    SlidingState { z, s: x2_tilde - z }
}

/// Strand law output with its components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StrandOutput {
    pub u2: f64,
    pub u_cancel: f64,
    pub u_sm: f64,
    pub u_opt: f64,
}

/// `u2 = -k21 x1 + k22 sw(s) + opt_gain * (x2r - x2)` with the last two terms switchable.
pub fn strand_control(
    cfg: &StrandControllerConfig,
    x1: f64,
    x2r: f64,
    x2: f64,
    sliding: &SlidingState,
) -> StrandOutput {
    let u_cancel = -cfg.k21 * x1;
    let u_sm = if cfg.enable_sm { cfg.k22 * switching_function(sliding.s, cfg.switching) } else { 0.0 };
    let u_opt = if cfg.enable_opt { cfg.opt_gain * (x2r - x2) } else { 0.0 };
    StrandOutput { u2: u_cancel + u_sm + u_opt, u_cancel, u_sm, u_opt }
}

/// Continuous control that keeps the strand surface stationary. Diagnostic only.
pub fn equivalent_control(p: &PlantParams, x2r_dot: f64, x2r: f64, eta2: f64) -> f64 {
    (x2r_dot - p.a2 * x2r - eta2) / p.b2
}
