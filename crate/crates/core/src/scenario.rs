//! The scenario document: everything a closed-loop run needs, as loaded from JSON.

use serde::{Deserialize, Serialize};

use crate::control::{
    GainCertificate, K1ConditionForm, NozzleControllerConfig, StrandControllerConfig, Switching,
};
use crate::error::{Error, Result};
use crate::plant::{
    sample_plant, validate_scenario, BoundsSpec, DisturbanceProfile, PlantParams, ReferenceSignal, Signals,
    UncertaintySampler, Violation,
};
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct References {
    pub x1r: ReferenceSignal,
    pub x2r: ReferenceSignal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Disturbances {
    pub eta1: DisturbanceProfile,
    pub eta2: DisturbanceProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchingKind {
    #[default]
    Signum,
    BoundaryLayer,
}

fn switching_of(kind: SwitchingKind, epsilon: Option<f64>, who: &str) -> Result<Switching> {
    let sw = match (kind, epsilon) {
        (SwitchingKind::Signum, _) => Switching::Signum,
        (SwitchingKind::BoundaryLayer, Some(epsilon)) => Switching::BoundaryLayer { epsilon },
        (SwitchingKind::BoundaryLayer, None) => {
            return Err(Error::InvalidController(format!("{who}: boundary-layer switching needs `epsilon`")))
        }
    };
    sw.validate()?;
    Ok(sw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NozzleSpec {
    pub k1: f64,
    #[serde(default)]
    pub switching: SwitchingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1_limits: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoKeyword {
    #[serde(rename = "auto")]
    Auto,
}

/// `"auto"` selects `a21 / b2`; a number fixes the cancellation gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum K21Setting {
    Auto(AutoKeyword),
    Fixed(f64),
}

impl Default for K21Setting {
    fn default() -> Self {
        Self::Auto(AutoKeyword::Auto)
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrandSpec {
    pub k22: f64,
    pub q: f64,
    pub r: f64,
    #[serde(default)]
    pub switching: SwitchingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "yes")]
    pub enable_sm: bool,
    #[serde(default = "yes")]
    pub enable_opt: bool,
    #[serde(default)]
    pub k21: K21Setting,
    #[serde(default)]
    pub k1_condition_form: K1ConditionForm,
    /// Static replacement for the Riccati feedback gain `b2 P / r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opt_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Controllers {
    pub nozzle: NozzleSpec,
    pub strand: StrandSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    pub x1: f64,
    pub x2: f64,
}

fn default_record_every() -> usize {
    1
}
fn default_ss_window() -> f64 {
    10.0
}
fn default_delta() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Plant the controllers are designed on.
    pub plant: PlantParams,
    /// Plant actually simulated; defaults to `plant`, or to one draw of `uncertainty`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_plant: Option<PlantParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintySampler>,
    pub bounds: BoundsSpec,
    pub references: References,
    #[serde(default)]
    pub disturbances: Disturbances,
    pub controllers: Controllers,
    #[serde(default)]
    pub initial: InitialState,
    pub horizon_s: f64,
    pub step_s: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_ss_window")]
    pub steady_state_window_s: f64,
    #[serde(default = "default_delta")]
    pub sliding_band_delta: f64,
}

impl Scenario {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_value(v: serde_json::Value) -> Result<Self> {
        Ok(serde_json::from_value(v)?)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("scenario serializes")
    }

    pub fn signals(&self) -> Signals<'_> {
        Signals {
            x1r: &self.references.x1r,
            x2r: &self.references.x2r,
            eta1: &self.disturbances.eta1,
            eta2: &self.disturbances.eta2,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let onset = [self.disturbances.eta1.onset(), self.disturbances.eta2.onset()]
            .into_iter()
            .flatten()
            .reduce(f64::min);
        SimConfig {
            horizon_s: self.horizon_s,
            step_s: self.step_s,
            record_every: self.record_every,
            steady_state_window_s: self.steady_state_window_s,
            sliding_band_delta: self.sliding_band_delta,
            post_disturbance_start_s: onset,
            error_band_1: None,
        }
    }

    /// Pointwise bound check on a grid ten times finer than the integration step.
    pub fn bound_violations(&self) -> Vec<Violation> {
        validate_scenario(&self.bounds, self.signals(), self.horizon_s, self.step_s / 10.0)
    }

    /// Checks structure and builds the runtime objects. Bound violations are not errors
    /// here; see [`Scenario::bound_violations`].
    pub fn resolve(&self) -> Result<ResolvedScenario> {
        self.plant.validate()?;
        self.bounds.validate()?;
        self.references.x1r.validate()?;
        self.references.x2r.validate()?;
        self.disturbances.eta1.validate()?;
        self.disturbances.eta2.validate()?;
        let sim = self.sim_config();
        sim.validate()?;

        let actual = match (&self.actual_plant, &self.uncertainty) {
            (Some(p), _) => {
                p.validate()?;
                *p
            }
            (None, Some(sampler)) => sample_plant(sampler, &self.plant, 1)?[0],
            (None, None) => self.plant,
        };

        let n = &self.controllers.nozzle;
        let nozzle = NozzleControllerConfig {
            k1: n.k1,
            switching: switching_of(n.switching, n.epsilon, "nozzle")?,
            u1_limits: n.u1_limits,
        };
        nozzle.validate()?;

        let s = &self.controllers.strand;
        let mut strand = StrandControllerConfig::design(
            &self.plant,
            s.k22,
            s.q,
            s.r,
            switching_of(s.switching, s.epsilon, "strand")?,
            s.enable_sm,
            s.enable_opt,
        )?;
        if let K21Setting::Fixed(k21) = s.k21 {
            if !k21.is_finite() {
                return Err(Error::InvalidController("k21 must be finite".into()));
            }
            strand = strand.with_k21(k21);
        }
        if let Some(g) = s.opt_gain {
            if !g.is_finite() {
                return Err(Error::InvalidController("opt_gain must be finite".into()));
            }
            strand = strand.with_opt_gain(&self.plant, g);
        }
        if ![self.initial.x1, self.initial.x2].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidSimConfig("initial state must be finite".into()));
        }

        let mut sim = sim;
        sim.error_band_1 = Some(2.0 * actual.b1 * nozzle.k1 * self.step_s);

        Ok(ResolvedScenario {
            name: self.name.clone(),
            design_plant: self.plant,
            plant: actual,
            bounds: self.bounds,
            x1r: self.references.x1r.clone(),
            x2r: self.references.x2r.clone(),
            eta1: self.disturbances.eta1.clone(),
            eta2: self.disturbances.eta2.clone(),
            nozzle,
            strand,
            k1_condition_form: s.k1_condition_form,
            initial: self.initial,
            sim,
        })
    }
}

/// A scenario with its controllers designed and its simulated plant fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub name: String,
    pub design_plant: PlantParams,
    pub plant: PlantParams,
    pub bounds: BoundsSpec,
    pub x1r: ReferenceSignal,
    pub x2r: ReferenceSignal,
    pub eta1: DisturbanceProfile,
    pub eta2: DisturbanceProfile,
    pub nozzle: NozzleControllerConfig,
    pub strand: StrandControllerConfig,
    pub k1_condition_form: K1ConditionForm,
    pub initial: InitialState,
    pub sim: SimConfig,
}

impl ResolvedScenario {
    pub fn nozzle_certificate(&self) -> GainCertificate {
        GainCertificate::nozzle(&self.design_plant, &self.bounds, self.k1_condition_form, self.nozzle.k1)
    }

    pub fn strand_certificate(&self) -> GainCertificate {
        GainCertificate::strand(&self.design_plant, &self.bounds, self.strand.k22)
    }
}
