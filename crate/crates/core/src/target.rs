//! Desired equilibria and feasible reference trajectories, including the
//! electrical feedforward state that makes a mechanical reference realizable.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::matrix::norm2;
use crate::plant::{EMPlant, State};

/// Scalar mechanical reference with analytic derivatives up to third order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceKind {
    Constant { q_d: f64 },
    /// `q*(t) = offset + amplitude * sin(omega t + phase)`
    Sinusoid { offset: f64, amplitude: f64, omega: f64, phase: f64 },
}

impl ReferenceKind {
    /// `(q*, q̇*, q̈*, q⃛*)` at time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64, f64) {
        match *self {
            ReferenceKind::Constant { q_d } => (q_d, 0.0, 0.0, 0.0),
            ReferenceKind::Sinusoid { offset, amplitude, omega, phase } => {
                let s = (omega * t + phase).sin();
                let c = (omega * t + phase).cos();
                (
                    offset + amplitude * s,
                    amplitude * omega * c,
                    -amplitude * omega * omega * s,
                    -amplitude * omega * omega * omega * c,
                )
            }
        }
    }
}

#[derive(Clone)]
pub enum TargetKind {
    Equilibrium { q_d: Vec<f64>, x_ed: Vec<f64> },
    Trajectory { reference: ReferenceKind },
}

/// A desired equilibrium or a feasible desired trajectory, tied to a plant.
#[derive(Clone)]
pub struct DesiredTarget {
    plant: Arc<EMPlant>,
    pub kind: TargetKind,
}

impl DesiredTarget {
    /// Equilibrium target at `q_d`; the electrical state is derived from the
    /// assignable-equilibrium condition.
    pub fn equilibrium(plant: Arc<EMPlant>, q_d: Vec<f64>) -> Result<Self> {
        let x_ed = plant.equilibrium_electrical_state(&q_d)?;
        Ok(DesiredTarget { plant, kind: TargetKind::Equilibrium { q_d, x_ed } })
    }

    /// Equilibrium target with an explicitly supplied electrical state.
    pub fn equilibrium_explicit(
        plant: Arc<EMPlant>,
        q_d: Vec<f64>,
        x_ed: Vec<f64>,
    ) -> Result<Self> {
        plant.check_bounds(&q_d)?;
        Ok(DesiredTarget { plant, kind: TargetKind::Equilibrium { q_d, x_ed } })
    }

    /// Time-varying target for scalar plants with constant mass matrix.
    pub fn trajectory(plant: Arc<EMPlant>, reference: ReferenceKind) -> Result<Self> {
        if plant.n_m() != 1 || plant.n_e() != 1 {
            return Err(Error::Config("trajectory targets require n_m = n_e = 1".into()));
        }
        let q0 = match reference {
            ReferenceKind::Constant { q_d } => q_d,
            ReferenceKind::Sinusoid { offset, .. } => offset,
        };
        if plant.mass_d1(&[q0], 0).norm_max() != 0.0 {
            return Err(Error::Config(
                "trajectory feedforward assumes a constant mass matrix".into(),
            ));
        }
        Ok(DesiredTarget { plant, kind: TargetKind::Trajectory { reference } })
    }

    pub fn plant(&self) -> &Arc<EMPlant> {
        &self.plant
    }

    pub fn is_trajectory(&self) -> bool {
        matches!(self.kind, TargetKind::Trajectory { .. })
    }

    /// For equilibrium targets, the pinned configuration.
    pub fn equilibrium_point(&self) -> Option<State> {
        match &self.kind {
            TargetKind::Equilibrium { q_d, x_ed } => {
                Some(State::new(q_d.clone(), vec![0.0; q_d.len()], x_ed.clone()))
            }
            TargetKind::Trajectory { .. } => None,
        }
    }

    /// Radicand pieces of the electrical feedforward and their derivatives:
    /// `x*² = (M q̈* + V'(q*) + R_m q̇*) / (-Ψ'(q*)/2)`.
    fn feedforward_parts(&self, t: f64) -> Result<(f64, f64, f64, f64, f64, f64)> {
        let reference = match &self.kind {
            TargetKind::Trajectory { reference } => *reference,
            TargetKind::Equilibrium { .. } => {
                return Err(Error::Config("feedforward parts only exist for trajectories".into()))
            }
        };
        let (q, dq, ddq, dddq) = reference.eval(t);
        self.plant.check_bounds(&[q])?;
        let m = self.plant.mass(&[q])[(0, 0)];
        let rm = self.plant.r_m[(0, 0)];
        let vp = self.plant.potential_grad(&[q])[0];
        let vpp = self.plant.potential_hess(&[q])[(0, 0)];
        let dpsi = self.plant.elastance_d1(&[q], 0)[(0, 0)];
        let d2psi = self.plant.elastance_d2(&[q], 0, 0)[(0, 0)];
        let w = -0.5 * dpsi;
        if w <= 0.0 {
            return Err(Error::Config(
                "elastance must decrease with position along the reference".into(),
            ));
        }
        let num = m * ddq + vp + rm * dq;
        let dnum = m * dddq + vpp * dq + rm * ddq;
        let dw = -0.5 * d2psi * dq;
        Ok((q, dq, num, dnum, w, dw))
    }

    /// Desired state `η*(t)`.
    pub fn state(&self, t: f64) -> Result<State> {
        match &self.kind {
            TargetKind::Equilibrium { q_d, x_ed } => {
                Ok(State::new(q_d.clone(), vec![0.0; q_d.len()], x_ed.clone()))
            }
            TargetKind::Trajectory { .. } => {
                let (q, dq, num, _, w, _) = self.feedforward_parts(t)?;
                let x2 = num / w;
                if x2 <= 0.0 {
                    return Err(Error::Infeasible(format!(
                        "reference radicand {x2:.3e} is not positive at t = {t}"
                    )));
                }
                let m = self.plant.mass(&[q])[(0, 0)];
                Ok(State::new(vec![q], vec![m * dq], vec![x2.sqrt()]))
            }
        }
    }

    /// Desired state derivative `η̇*(t) = [q̇*, ṗ*, ẋ_e*]`.
    pub fn state_dot(&self, t: f64) -> Result<Vec<f64>> {
        match &self.kind {
            TargetKind::Equilibrium { q_d, .. } => Ok(vec![0.0; 2 * q_d.len() + 1]),
            TargetKind::Trajectory { reference } => {
                let (q, _dq, num, dnum, w, dw) = self.feedforward_parts(t)?;
                let (_, dq, ddq, _) = reference.eval(t);
                let x2 = num / w;
                if x2 <= 0.0 {
                    return Err(Error::Infeasible(format!(
                        "reference radicand {x2:.3e} is not positive at t = {t}"
                    )));
                }
                let x = x2.sqrt();
                let xdot = (dnum * w - num * dw) / (2.0 * x * w * w);
                let m = self.plant.mass(&[q])[(0, 0)];
                Ok(vec![dq, m * ddq, xdot])
            }
        }
    }

    /// Electrical feedforward `(x_e*(t), ẋ_e*(t))`.
    pub fn electrical_feedforward(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            TargetKind::Equilibrium { x_ed, .. } => Ok((x_ed.clone(), vec![0.0; x_ed.len()])),
            TargetKind::Trajectory { .. } => {
                let s = self.state(t)?;
                let sd = self.state_dot(t)?;
                Ok((s.x_e, vec![sd[2]]))
            }
        }
    }

    /// Sample radicand positivity over `[0, horizon]`; errors on the first
    /// violation.
    pub fn validate(&self, horizon: f64, samples: usize) -> Result<()> {
        if !self.is_trajectory() {
            return Ok(());
        }
        for i in 0..=samples {
            let t = horizon * (i as f64) / (samples as f64);
            let (_, _, num, _, w, _) = self.feedforward_parts(t)?;
            if num / w <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "reference radicand {:.3e} is not positive at t = {t:.6}",
                    num / w
                )));
            }
        }
        Ok(())
    }
}

/// Feasibility residual of `(η*, u*)` at time `t`:
/// `(‖η̇* - F ∇H(η*) - G u*‖, scale)` where the scale collects the magnitudes
/// of the three terms. A residual below `tol * scale` certifies realizability.
pub fn feasibility_residual(
    plant: &EMPlant,
    target: &DesiredTarget,
    u_star: &[f64],
    t: f64,
) -> Result<(f64, f64)> {
    let eta = target.state(t)?;
    let eta_dot = target.state_dot(t)?;
    let grad = plant.grad_hamiltonian(&eta)?;
    let zero_u = vec![0.0; plant.n_e()];
    let drift = plant.field_from_grad(&grad, &zero_u);
    let gu = plant.g_e.matvec(u_star);
    let mut residual = vec![0.0; plant.dim()];
    for (i, r) in residual.iter_mut().enumerate() {
        let input = if i >= 2 * plant.n_m() { gu[i - 2 * plant.n_m()] } else { 0.0 };
        *r = eta_dot[i] - drift[i] - input;
    }
    let mut gu_full = vec![0.0; plant.dim()];
    for i in 0..plant.n_e() {
        gu_full[2 * plant.n_m() + i] = gu[i];
    }
    let scale = norm2(&eta_dot) + norm2(&drift) + norm2(&gu_full);
    Ok((norm2(&residual), scale.max(f64::MIN_POSITIVE)))
}
