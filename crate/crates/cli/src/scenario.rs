//! JSON scenario schema and construction of plants, controllers, targets and
//! verification regions from it.

use std::sync::Arc;

use phem_core::contraction::Region;
use phem_core::controller::{ClosedLoopShape, Controller, LawKind};
use phem_core::error::{Error, Result};
use phem_core::matrix::Matrix;
use phem_core::plant::{EMPlant, MaglevParams, MemsParams, State};
use phem_core::sim::{IntegratorConfig, Method};
use phem_core::target::{DesiredTarget, ReferenceKind};
use phem_core::verify::CertificateGrade;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    pub target: TargetSpec,
    pub integrator: IntegratorSpec,
    pub initial_state: StateSpec,
    #[serde(default)]
    pub verification: VerificationSpec,
    /// Parameter-override cases simulated side by side; empty means one run
    /// labeled "base".
    #[serde(default)]
    pub sweep: Vec<SweepCase>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantSpec {
    Builtin { builtin: String },
    Mems { mems: MemsSpec },
    Maglev { maglev: MaglevSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemsSpec {
    pub c0: f64,
    pub c1: f64,
    pub mass: f64,
    pub a1: f64,
    pub a2: f64,
    pub r_m: f64,
    pub r_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaglevSpec {
    pub k: f64,
    pub r_e: f64,
    pub c: f64,
    pub b: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    /// One of `regulation-xe`, `regulation-z`, `tracking-xe`, `tracking-z`.
    pub law: String,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub d_d: f64,
    /// Shaped electrical damping `R̄_e`; exactly one of `r_e_bar`/`k_e`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_e_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_e: Option<f64>,
    /// Gain of the z-coordinate shaping.
    #[serde(default = "default_kc")]
    pub k_c: f64,
}

fn default_kc() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Constant { q_d: f64 },
    Sinusoid { offset: f64, amplitude: f64, omega: f64, #[serde(default)] phase: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    /// `implicit` (A-stable one-step) or `explicit` (adaptive Runge-Kutta).
    pub method: String,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub horizon: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_step: Option<f64>,
}

fn default_samples() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub x_e: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VerificationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSpec>,
    /// Weakest accepted certificate: `theorem`, `metric` or `empirical`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_grade: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    Box {
        bounds: Vec<[f64; 2]>,
        #[serde(default = "default_ppd")]
        points_per_dim: usize,
    },
    Tube {
        half_widths: Vec<f64>,
        horizon: f64,
        #[serde(default = "default_time_samples")]
        time_samples: usize,
    },
}

fn default_ppd() -> usize {
    9
}

fn default_time_samples() -> usize {
    24
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCase {
    pub label: String,
    #[serde(default)]
    pub overrides: serde_json::Map<String, serde_json::Value>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario schema: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization")
    }

    pub fn build_plant(&self) -> Result<Arc<EMPlant>> {
        let plant = match &self.plant {
            PlantSpec::Builtin { builtin } => EMPlant::builtin(builtin)?,
            PlantSpec::Mems { mems } => EMPlant::mems_optical_switch(MemsParams {
                c0: mems.c0,
                c1: mems.c1,
                mass: mems.mass,
                a1: mems.a1,
                a2: mems.a2,
                r_m: mems.r_m,
                r_e: mems.r_e,
            })?,
            PlantSpec::Maglev { maglev } => EMPlant::maglev(MaglevParams {
                k: maglev.k,
                r_e: maglev.r_e,
                c: maglev.c,
                b: maglev.b,
                mass: maglev.mass,
            })?,
        };
        Ok(Arc::new(plant))
    }

    pub fn law_kind(&self) -> Result<LawKind> {
        LawKind::parse(&self.controller.law)
    }

    pub fn build_target(&self, plant: &Arc<EMPlant>) -> Result<DesiredTarget> {
        let kind = self.law_kind()?;
        match (&self.target, kind.is_tracking()) {
            (TargetSpec::Constant { q_d }, false) => {
                DesiredTarget::equilibrium(plant.clone(), vec![*q_d])
            }
            (TargetSpec::Constant { q_d }, true) => {
                DesiredTarget::trajectory(plant.clone(), ReferenceKind::Constant { q_d: *q_d })
            }
            (TargetSpec::Sinusoid { offset, amplitude, omega, phase }, true) => {
                DesiredTarget::trajectory(
                    plant.clone(),
                    ReferenceKind::Sinusoid {
                        offset: *offset,
                        amplitude: *amplitude,
                        omega: *omega,
                        phase: *phase,
                    },
                )
            }
            (TargetSpec::Sinusoid { .. }, false) => Err(Error::Config(
                "regulation laws need a constant target".into(),
            )),
        }
    }

    pub fn build_controller(&self, plant: &Arc<EMPlant>) -> Result<Controller> {
        if plant.n_m() != 1 || plant.n_e() != 1 {
            return Err(Error::Config("scenario gains assume scalar plants".into()));
        }
        let c = &self.controller;
        let k_e = match (c.r_e_bar, c.k_e) {
            (Some(rb), None) => rb - plant.r_e[(0, 0)],
            (None, Some(ke)) => ke,
            _ => {
                return Err(Error::Config(
                    "specify exactly one of controller.r_e_bar / controller.k_e".into(),
                ))
            }
        };
        let shape = ClosedLoopShape::new(
            plant,
            Matrix::scalar(c.gamma),
            Matrix::scalar(c.d_d),
            Matrix::scalar(k_e),
        )?;
        let target = self.build_target(plant)?;
        target.validate(self.integrator.horizon, 10_000)?;
        Controller::with_builtin_shaping(self.law_kind()?, plant.clone(), shape, target, c.k_c)
    }

    pub fn build_region(&self, target: &DesiredTarget) -> Result<Region> {
        match &self.verification.region {
            Some(RegionSpec::Box { bounds, points_per_dim }) => Ok(Region::Box {
                bounds: bounds.iter().map(|b| (b[0], b[1])).collect(),
                points_per_dim: *points_per_dim,
            }),
            Some(RegionSpec::Tube { half_widths, horizon, time_samples }) => Ok(Region::Tube {
                half_widths: half_widths.clone(),
                horizon: *horizon,
                time_samples: *time_samples,
            }),
            None => {
                // default: ±50% box around the target configuration, or a
                // half-horizon tube for moving references
                if target.is_trajectory() {
                    let s0 = target.state(0.0)?.to_vec();
                    Ok(Region::Tube {
                        half_widths: s0
                            .iter()
                            .map(|v| 0.5 * v.abs().max(f64::MIN_POSITIVE))
                            .collect(),
                        horizon: self.integrator.horizon,
                        time_samples: default_time_samples(),
                    })
                } else {
                    let eq = target
                        .equilibrium_point()
                        .ok_or_else(|| Error::Config("target has no equilibrium".into()))?;
                    Ok(Region::around_point(&eq.to_vec(), 0.5))
                }
            }
        }
    }

    pub fn min_grade(&self) -> Result<CertificateGrade> {
        match &self.verification.min_grade {
            Some(g) => CertificateGrade::parse(g),
            None => Ok(CertificateGrade::Metric),
        }
    }

    pub fn build_integrator(&self) -> Result<IntegratorConfig> {
        let method = match self.integrator.method.as_str() {
            "implicit" => Method::ImplicitOneStep,
            "explicit" => Method::ExplicitRk,
            other => {
                return Err(Error::Config(format!(
                    "unknown integrator method '{other}' (use 'implicit' or 'explicit')"
                )))
            }
        };
        let mut cfg = IntegratorConfig::new(method, self.integrator.horizon);
        cfg.rel_tol = self.integrator.rel_tol;
        cfg.abs_tol = self.integrator.abs_tol;
        cfg.samples = self.integrator.samples;
        if let Some(m) = self.integrator.max_step {
            cfg.max_step = m;
        }
        if let Some(m) = self.integrator.min_step {
            cfg.min_step = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build_initial_state(&self) -> State {
        State::new(
            self.initial_state.q.clone(),
            self.initial_state.p.clone(),
            self.initial_state.x_e.clone(),
        )
    }

    /// Apply one dotted-path override (sweep cases may only touch these keys).
    pub fn apply_override(&mut self, key: &str, value: &serde_json::Value) -> Result<()> {
        let as_f64 = || -> Result<f64> {
            value
                .as_f64()
                .ok_or_else(|| Error::Config(format!("override '{key}' must be a number")))
        };
        match key {
            "controller.d_d" => self.controller.d_d = as_f64()?,
            "controller.gamma" => self.controller.gamma = as_f64()?,
            "controller.k_c" => self.controller.k_c = as_f64()?,
            "controller.r_e_bar" => {
                self.controller.r_e_bar = Some(as_f64()?);
                self.controller.k_e = None;
            }
            "controller.k_e" => {
                self.controller.k_e = Some(as_f64()?);
                self.controller.r_e_bar = None;
            }
            "integrator.horizon" => self.integrator.horizon = as_f64()?,
            "integrator.rel_tol" => self.integrator.rel_tol = as_f64()?,
            "integrator.abs_tol" => self.integrator.abs_tol = as_f64()?,
            "initial_state.q0" => self.initial_state.q[0] = as_f64()?,
            "initial_state.p0" => self.initial_state.p[0] = as_f64()?,
            "initial_state.xe0" => self.initial_state.x_e[0] = as_f64()?,
            other => {
                return Err(Error::Config(format!(
                    "override key '{other}' is not a declared sweep key"
                )))
            }
        }
        Ok(())
    }

    /// The simulation cases: each sweep entry applied to the base scenario,
    /// or the base itself when no sweep is declared.
    pub fn cases(&self) -> Result<Vec<(String, Scenario)>> {
        if self.sweep.is_empty() {
            return Ok(vec![("base".to_string(), self.clone())]);
        }
        let mut out = Vec::with_capacity(self.sweep.len());
        for case in &self.sweep {
            let mut sc = self.clone();
            sc.sweep.clear();
            for (k, v) in &case.overrides {
                sc.apply_override(k, v)?;
            }
            out.push((case.label.clone(), sc));
        }
        Ok(out)
    }
}

pub const BUNDLED: &[(&str, &str)] = &[
    ("mems_regulation", include_str!("../scenarios/mems_regulation.json")),
    ("mems_regulation_strict", include_str!("../scenarios/mems_regulation_strict.json")),
    ("mems_tracking", include_str!("../scenarios/mems_tracking.json")),
    ("maglev_tracking", include_str!("../scenarios/maglev_tracking.json")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == stem).map(|(_, s)| *s)
}

/// Load a scenario from a filesystem path, falling back to the bundled set.
pub fn load_scenario(path: &str) -> Result<Scenario> {
    if std::path::Path::new(path).exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {path}: {e}")))?;
        return Scenario::from_json(&text);
    }
    if let Some(text) = bundled_scenario(path) {
        return Scenario::from_json(text);
    }
    Err(Error::Config(format!(
        "scenario '{path}' is neither a file nor a bundled name ({})",
        bundled_names().join(", ")
    )))
}
