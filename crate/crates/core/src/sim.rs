//! Closed-loop and open-loop time integration.
//!
//! Two one-step schemes with embedded error control and dense output: an
//! explicit adaptive Runge-Kutta pair of order 5(4), and an A-stable implicit
//! one-step scheme (trapezoidal/backward-difference composite) for the stiff
//! electrostatic scenarios, where the electrical rate exceeds the mechanical
//! one by several orders of magnitude.
//!
//! Output lands on a uniform sampling grid regardless of the internal steps;
//! runs that leave the plant's configuration bounds return a truncated record
//! flagged with the offending time.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::matrix::{norm2, Matrix};
use crate::plant::{EMPlant, State};
use crate::target::DesiredTarget;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Dormand-Prince 5(4) explicit adaptive Runge-Kutta.
    ExplicitRk,
    /// TR-BDF2: A-stable implicit one-step with an embedded third-order
    /// error estimate.
    ImplicitOneStep,
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub horizon: f64,
    /// Number of uniform output intervals (the record has `samples + 1` rows).
    pub samples: usize,
    /// Per-component magnitudes scaling `abs_tol`; empty means derive from the
    /// initial state and target.
    pub state_scale: Vec<f64>,
}

impl IntegratorConfig {
    pub fn new(method: Method, horizon: f64) -> Self {
        IntegratorConfig {
            method,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: horizon / 10.0,
            min_step: horizon * 1e-14,
            horizon,
            samples: 2000,
            state_scale: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("integrator tolerances must be positive".into()));
        }
        if self.min_step >= self.max_step {
            return Err(Error::Config("min_step must be below max_step".into()));
        }
        if self.horizon <= 0.0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.samples < 2 {
            return Err(Error::Config("need at least 2 output samples".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AbortInfo {
    pub time: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub field_evals: usize,
    pub jacobians: usize,
}

/// Time-stamped record of a run on the uniform output grid.
#[derive(Debug, Clone)]
pub struct SimRecord {
    pub n_m: usize,
    pub n_e: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    /// Shaped energy along the run (closed loop) or stored energy (open loop).
    pub energy: Vec<f64>,
    /// `‖η - η*(t)‖` when a target is attached, else zeros.
    pub err_norm: Vec<f64>,
    pub aborted: Option<AbortInfo>,
    pub stats: StepStats,
}

impl SimRecord {
    pub fn state_at(&self, k: usize) -> State {
        State::from_flat(self.n_m, self.n_e, &self.states[k])
    }

    pub fn completed(&self) -> bool {
        self.aborted.is_none()
    }
}

/// Input selection for a run.
pub enum LoopSpec<'a> {
    OpenConstant(Vec<f64>),
    OpenTimeFn(&'a (dyn Fn(f64) -> Vec<f64> + 'a)),
    Closed(&'a Controller),
}

enum FieldOutcome {
    Ok(Vec<f64>),
    Domain { coordinate: usize, value: f64 },
}

fn eval_field(plant: &EMPlant, spec: &LoopSpec<'_>, t: f64, y: &[f64]) -> Result<FieldOutcome> {
    let eta = State::from_flat(plant.n_m(), plant.n_e(), y);
    let u = match spec {
        LoopSpec::OpenConstant(u) => u.clone(),
        LoopSpec::OpenTimeFn(f) => f(t),
        LoopSpec::Closed(c) => match c.control(&eta, t) {
            Ok(u) => u,
            Err(Error::Domain { coordinate, value }) => {
                return Ok(FieldOutcome::Domain { coordinate, value })
            }
            Err(e) => return Err(e),
        },
    };
    match plant.open_loop_field(&eta, &u) {
        Ok(f) => Ok(FieldOutcome::Ok(f)),
        Err(Error::Domain { coordinate, value }) => Ok(FieldOutcome::Domain { coordinate, value }),
        Err(e) => Err(e),
    }
}

/// Simulate the plant under the given input selection.
///
/// `target` attaches the error signal `η - η*(t)` to the record; for closed
/// loops the controller's own target is used when `target` is `None`.
pub fn simulate(
    plant: &EMPlant,
    spec: &LoopSpec<'_>,
    eta0: &State,
    config: &IntegratorConfig,
    target: Option<&DesiredTarget>,
) -> Result<SimRecord> {
    config.validate()?;
    plant.check_bounds(&eta0.q)?;
    let dim = plant.dim();
    let y0 = eta0.to_vec();
    if y0.len() != dim {
        return Err(Error::Dimension { expected: (dim, 1), got: (y0.len(), 1), what: "initial state" });
    }
    let owned_target;
    let target = match (target, spec) {
        (Some(t), _) => Some(t),
        (None, LoopSpec::Closed(c)) => {
            owned_target = c.target.clone();
            Some(&owned_target)
        }
        (None, _) => None,
    };

    // per-component error scales
    let mut scale = if config.state_scale.len() == dim {
        config.state_scale.clone()
    } else {
        let mut s: Vec<f64> = y0.iter().map(|v| v.abs()).collect();
        if let Some(t) = target {
            for k in 0..=8 {
                let tt = config.horizon * (k as f64) / 8.0;
                if let Ok(st) = t.state(tt) {
                    for (si, vi) in s.iter_mut().zip(st.to_vec()) {
                        *si = si.max(vi.abs());
                    }
                }
            }
        }
        let top = s.iter().fold(0.0f64, |a, &v| a.max(v)).max(f64::MIN_POSITIVE);
        for v in &mut s {
            if *v == 0.0 {
                *v = 1e-6 * top;
            }
        }
        s
    };
    for v in &mut scale {
        *v = v.max(f64::MIN_POSITIVE);
    }

    let sample_times: Vec<f64> = (0..=config.samples)
        .map(|k| config.horizon * (k as f64) / (config.samples as f64))
        .collect();

    let field = |t: f64, y: &[f64]| eval_field(plant, spec, t, y);
    // a committed state close to the configuration boundary means a stage
    // failure is a genuine exit rather than numerical trouble
    let near_bound = |y: &[f64]| -> bool {
        for i in 0..plant.n_m() {
            let (lo, hi) = plant.q_bounds[i];
            let s = 0.05 * plant.q_scale[i];
            if (lo.is_finite() && y[i] - lo < s) || (hi.is_finite() && hi - y[i] < s) {
                return true;
            }
        }
        false
    };
    let (samples, stats, aborted) = match config.method {
        Method::ExplicitRk => dopri5(&field, &near_bound, &y0, config, &scale, &sample_times)?,
        Method::ImplicitOneStep => trbdf2(&field, &near_bound, &y0, config, &scale, &sample_times)?,
    };

    let n_taken = samples.len();
    let mut record = SimRecord {
        n_m: plant.n_m(),
        n_e: plant.n_e(),
        times: sample_times[..n_taken].to_vec(),
        states: samples,
        inputs: Vec::with_capacity(n_taken),
        energy: Vec::with_capacity(n_taken),
        err_norm: Vec::with_capacity(n_taken),
        aborted,
        stats,
    };
    for (k, y) in record.states.iter().enumerate() {
        let t = record.times[k];
        let eta = State::from_flat(plant.n_m(), plant.n_e(), y);
        let (u, energy) = match spec {
            LoopSpec::OpenConstant(u) => (u.clone(), plant.hamiltonian(&eta).unwrap_or(f64::NAN)),
            LoopSpec::OpenTimeFn(f) => (f(t), plant.hamiltonian(&eta).unwrap_or(f64::NAN)),
            LoopSpec::Closed(c) => {
                let u = c.control(&eta, t).unwrap_or_else(|_| vec![f64::NAN; plant.n_e()]);
                let e = c.energy().value(&eta, t).unwrap_or(f64::NAN);
                (u, e)
            }
        };
        let err = match target {
            Some(tg) => match tg.state(t) {
                Ok(star) => {
                    let sv = star.to_vec();
                    let diff: Vec<f64> = y.iter().zip(&sv).map(|(a, b)| a - b).collect();
                    norm2(&diff)
                }
                Err(_) => f64::NAN,
            },
            None => 0.0,
        };
        record.inputs.push(u);
        record.energy.push(energy);
        record.err_norm.push(err);
    }
    Ok(record)
}

type FieldRef<'a> = &'a dyn Fn(f64, &[f64]) -> Result<FieldOutcome>;

fn error_norm(e: &[f64], y: &[f64], ynew: &[f64], rtol: f64, atol: f64, scale: &[f64]) -> f64 {
    let n = e.len();
    let mut acc = 0.0;
    for i in 0..n {
        let sc = atol * scale[i] + rtol * y[i].abs().max(ynew[i].abs());
        let r = e[i] / sc;
        acc += r * r;
    }
    (acc / n as f64).sqrt()
}

/// Dormand-Prince 5(4) with the standard quartic dense-output polynomial.
fn dopri5(
    field: FieldRef<'_>,
    near_bound: &dyn Fn(&[f64]) -> bool,
    y0: &[f64],
    cfg: &IntegratorConfig,
    scale: &[f64],
    sample_times: &[f64],
) -> Result<(Vec<Vec<f64>>, StepStats, Option<AbortInfo>)> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];
    const D: [f64; 7] = [
        -12715105075.0 / 11282082432.0,
        0.0,
        87487479700.0 / 32700410799.0,
        -10690763975.0 / 1880347072.0,
        701980252875.0 / 199316789632.0,
        -1453857185.0 / 822651844.0,
        69997945.0 / 29380423.0,
    ];
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0usize;
    let mut t = 0.0f64;
    let mut y = y0.to_vec();
    if !sample_times.is_empty() && sample_times[0] == 0.0 {
        out.push(y.clone());
        next_sample = 1;
    }
    let mut f_now = match field(t, &y)? {
        FieldOutcome::Ok(f) => f,
        FieldOutcome::Domain { coordinate, value } => {
            return Ok((
                out,
                stats,
                Some(AbortInfo {
                    time: t,
                    reason: format!("coordinate {coordinate} = {value:.6e} left the bounds"),
                }),
            ))
        }
    };
    stats.field_evals += 1;
    let mut h = {
        let d0 = error_norm(&y, &y, &y, cfg.rel_tol, cfg.abs_tol, scale).max(1e-10);
        let d1 = error_norm(&f_now, &y, &y, cfg.rel_tol, cfg.abs_tol, scale).max(1e-10);
        (0.01 * d0 / d1).min(cfg.max_step).max(cfg.min_step * 2.0)
    };
    let t_end = cfg.horizon;
    let max_steps = 200_000_000usize;
    let mut k = vec![vec![0.0f64; n]; 7];
    while t < t_end {
        if stats.accepted + stats.rejected > max_steps {
            return Err(Error::Integration { what: "step budget exhausted".into(), time: t });
        }
        h = h.min(t_end - t).min(cfg.max_step);
        if h < cfg.min_step {
            return Err(Error::Integration {
                what: format!(
                    "step underflow (h = {h:.3e}) in the explicit scheme; the problem is stiff, \
                     use the implicit one-step method"
                ),
                time: t,
            });
        }
        k[0].copy_from_slice(&f_now);
        let mut failed_domain = None;
        for s in 1..7 {
            let mut ys = y.clone();
            for j in 0..s {
                let a = A[s - 1][j];
                if a != 0.0 {
                    for i in 0..n {
                        ys[i] += h * a * k[j][i];
                    }
                }
            }
            match field(t + C[s - 1] * h, &ys)? {
                FieldOutcome::Ok(f) => k[s].copy_from_slice(&f),
                FieldOutcome::Domain { coordinate, value } => {
                    failed_domain = Some((coordinate, value));
                    break;
                }
            }
            stats.field_evals += 1;
        }
        if let Some((c, v)) = failed_domain {
            if h > 4.0 * cfg.min_step {
                h *= 0.25;
                stats.rejected += 1;
                continue;
            }
            if near_bound(&y) {
                return Ok((
                    out,
                    stats,
                    Some(AbortInfo {
                        time: t,
                        reason: format!("coordinate {c} = {v:.6e} left the bounds"),
                    }),
                ));
            }
            return Err(Error::Integration {
                what: format!(
                    "stage states leave the model domain at the minimal step (h = {h:.3e}); \
                     the problem is stiff, use the implicit one-step method"
                ),
                time: t,
            });
        }
        // the 5th-order solution reuses stage row 6
        let ynew: Vec<f64> = (0..n)
            .map(|i| {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(6) {
                    acc += h * A[5][j] * kj[i];
                }
                acc
            })
            .collect();
        // FSAL stage
        let f7 = match field(t + h, &ynew)? {
            FieldOutcome::Ok(f) => f,
            FieldOutcome::Domain { coordinate, value } => {
                if h > 4.0 * cfg.min_step {
                    h *= 0.25;
                    stats.rejected += 1;
                    continue;
                }
                return Ok((
                    out,
                    stats,
                    Some(AbortInfo {
                        time: t + h,
                        reason: format!(
                            "coordinate {coordinate} = {value:.6e} left the bounds"
                        ),
                    }),
                ));
            }
        };
        stats.field_evals += 1;
        k[6].copy_from_slice(&f7);
        let mut err = vec![0.0; n];
        for (j, kj) in k.iter().enumerate() {
            if E[j] != 0.0 {
                for i in 0..n {
                    err[i] += h * E[j] * kj[i];
                }
            }
        }
        let enorm = error_norm(&err, &y, &ynew, cfg.rel_tol, cfg.abs_tol, scale);
        if enorm <= 1.0 {
            while next_sample < sample_times.len() && sample_times[next_sample] <= t + h + 1e-300 {
                let ts = sample_times[next_sample];
                let theta = ((ts - t) / h).clamp(0.0, 1.0);
                let mut ys = vec![0.0; n];
                for i in 0..n {
                    let mut rc5 = 0.0;
                    for (j, kj) in k.iter().enumerate() {
                        if D[j] != 0.0 {
                            rc5 += D[j] * kj[i];
                        }
                    }
                    rc5 *= h;
                    let rc1 = y[i];
                    let rc2 = ynew[i] - y[i];
                    let rc3 = h * k[0][i] - rc2;
                    let rc4 = rc2 - h * k[6][i] - rc3;
                    ys[i] = rc1
                        + theta
                            * (rc2 + (1.0 - theta) * (rc3 + theta * (rc4 + (1.0 - theta) * rc5)));
                }
                out.push(ys);
                next_sample += 1;
            }
            t += h;
            y = ynew;
            f_now = f7;
            stats.accepted += 1;
            h *= (0.9 * enorm.powf(-0.2)).clamp(0.2, 5.0);
        } else {
            stats.rejected += 1;
            h *= (0.9 * enorm.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok((out, stats, None))
}

/// TR-BDF2 with simplified Newton iterations sharing one matrix factorization
/// per step, a filtered embedded error estimate and cubic Hermite dense output.
fn trbdf2(
    field: FieldRef<'_>,
    near_bound: &dyn Fn(&[f64]) -> bool,
    y0: &[f64],
    cfg: &IntegratorConfig,
    scale: &[f64],
    sample_times: &[f64],
) -> Result<(Vec<Vec<f64>>, StepStats, Option<AbortInfo>)> {
    let n = y0.len();
    let gamma = 2.0 - 2.0f64.sqrt();
    let d = gamma / 2.0;
    let w1 = 1.0 / (gamma * (2.0 - gamma));
    let w2 = (1.0 - gamma) * (1.0 - gamma) / (gamma * (2.0 - gamma));
    // defect against the embedded third-order quadrature
    let e1 = (2.0f64.sqrt() - 1.0) / 3.0;
    let e2 = -1.0 / 3.0;
    let e3 = (2.0 - 2.0f64.sqrt()) / 3.0;

    let mut stats = StepStats::default();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0usize;
    let mut t = 0.0f64;
    let mut y = y0.to_vec();
    if !sample_times.is_empty() && sample_times[0] == 0.0 {
        out.push(y.clone());
        next_sample = 1;
    }

    let mut f_now = match field(t, &y)? {
        FieldOutcome::Ok(f) => f,
        FieldOutcome::Domain { coordinate, value } => {
            return Ok((
                out,
                stats,
                Some(AbortInfo {
                    time: t,
                    reason: format!("coordinate {coordinate} = {value:.6e} left the bounds"),
                }),
            ))
        }
    };
    stats.field_evals += 1;
    let mut h = {
        let d1 = error_norm(&f_now, &y, &y, cfg.rel_tol, cfg.abs_tol, scale).max(1e-12);
        (0.01 / d1).min(cfg.max_step).max(cfg.min_step * 2.0)
    };
    let t_end = cfg.horizon;
    let max_steps = 50_000_000usize;

    enum NewtonEnd {
        Converged(Vec<f64>, Vec<f64>),
        Domain(usize, f64),
        Stalled,
    }

    while t < t_end {
        if stats.accepted + stats.rejected > max_steps {
            return Err(Error::Integration { what: "step budget exhausted".into(), time: t });
        }
        h = h.min(t_end - t).min(cfg.max_step);
        if h < cfg.min_step {
            return Err(Error::Integration {
                what: format!("step underflow (h = {h:.3e}) in the implicit scheme"),
                time: t,
            });
        }
        // Jacobian by forward differences at (t, y)
        let mut jac = Matrix::zeros(n, n);
        let mut domain_hit = None;
        for j in 0..n {
            let dy = 1e-7 * (y[j].abs() + 1e-3 * scale[j]);
            let mut yp = y.clone();
            yp[j] += dy;
            let col = match field(t, &yp)? {
                FieldOutcome::Ok(fp) => Some((fp, dy)),
                FieldOutcome::Domain { .. } => {
                    let mut ym = y.clone();
                    ym[j] -= dy;
                    match field(t, &ym)? {
                        FieldOutcome::Ok(fm) => {
                            stats.field_evals += 1;
                            for i in 0..n {
                                jac[(i, j)] = (f_now[i] - fm[i]) / dy;
                            }
                            None
                        }
                        FieldOutcome::Domain { coordinate, value } => {
                            domain_hit = Some((coordinate, value));
                            None
                        }
                    }
                }
            };
            stats.field_evals += 1;
            if let Some((fp, dy)) = col {
                for i in 0..n {
                    jac[(i, j)] = (fp[i] - f_now[i]) / dy;
                }
            }
            if domain_hit.is_some() {
                break;
            }
        }
        if let Some((c, v)) = domain_hit {
            return Ok((
                out,
                stats,
                Some(AbortInfo {
                    time: t,
                    reason: format!("coordinate {c} = {v:.6e} left the bounds"),
                }),
            ));
        }
        stats.jacobians += 1;
        // W = I - h d J, shared by both stages
        let mut wmat = jac.scale(-h * d);
        for i in 0..n {
            wmat[(i, i)] += 1.0;
        }
        let lu = match wmat.lu() {
            Ok(lu) => lu,
            Err(_) => {
                h *= 0.5;
                stats.rejected += 1;
                continue;
            }
        };

        let newton = |t_stage: f64, rhs_const: &[f64], start: &[f64], stats: &mut StepStats| -> Result<NewtonEnd> {
            // solve g = rhs_const + d*h*f(t_stage, g)
            let mut g = start.to_vec();
            for _ in 0..12 {
                let fg = match field(t_stage, &g)? {
                    FieldOutcome::Ok(f) => f,
                    FieldOutcome::Domain { coordinate, value } => {
                        return Ok(NewtonEnd::Domain(coordinate, value))
                    }
                };
                stats.field_evals += 1;
                let mut resid = vec![0.0; n];
                for i in 0..n {
                    resid[i] = rhs_const[i] + d * h * fg[i] - g[i];
                }
                let delta = lu.solve(&resid)?;
                for i in 0..n {
                    g[i] += delta[i];
                }
                let dn = error_norm(&delta, &g, &g, cfg.rel_tol, cfg.abs_tol, scale);
                if dn < 1e-2 {
                    let fg2 = match field(t_stage, &g)? {
                        FieldOutcome::Ok(f) => f,
                        FieldOutcome::Domain { coordinate, value } => {
                            return Ok(NewtonEnd::Domain(coordinate, value))
                        }
                    };
                    stats.field_evals += 1;
                    return Ok(NewtonEnd::Converged(g, fg2));
                }
            }
            Ok(NewtonEnd::Stalled)
        };

        // stage 1: trapezoidal to t + gamma h
        let mut rhs1 = y.clone();
        let mut start1 = y.clone();
        for i in 0..n {
            rhs1[i] += d * h * f_now[i];
            start1[i] += gamma * h * f_now[i];
        }
        let (yg, fg) = match newton(t + gamma * h, &rhs1, &start1, &mut stats)? {
            NewtonEnd::Converged(g, f) => (g, f),
            NewtonEnd::Domain(c, v) => {
                if h > 4.0 * cfg.min_step {
                    h *= 0.25;
                    stats.rejected += 1;
                    continue;
                }
                if near_bound(&y) {
                    return Ok((
                        out,
                        stats,
                        Some(AbortInfo {
                            time: t,
                            reason: format!("coordinate {c} = {v:.6e} left the bounds"),
                        }),
                    ));
                }
                return Err(Error::Integration {
                    what: format!(
                        "implicit stages leave the model domain at the minimal step (h = {h:.3e})"
                    ),
                    time: t,
                });
            }
            NewtonEnd::Stalled => {
                h *= 0.25;
                stats.rejected += 1;
                continue;
            }
        };
        // stage 2: BDF2 to t + h
        let mut rhs2 = vec![0.0; n];
        for i in 0..n {
            rhs2[i] = w1 * yg[i] - w2 * y[i];
        }
        let (ynew, fnew) = match newton(t + h, &rhs2, &yg, &mut stats)? {
            NewtonEnd::Converged(g, f) => (g, f),
            NewtonEnd::Domain(c, v) => {
                if h > 4.0 * cfg.min_step {
                    h *= 0.25;
                    stats.rejected += 1;
                    continue;
                }
                if near_bound(&y) {
                    return Ok((
                        out,
                        stats,
                        Some(AbortInfo {
                            time: t,
                            reason: format!("coordinate {c} = {v:.6e} left the bounds"),
                        }),
                    ));
                }
                return Err(Error::Integration {
                    what: format!(
                        "implicit stages leave the model domain at the minimal step (h = {h:.3e})"
                    ),
                    time: t,
                });
            }
            NewtonEnd::Stalled => {
                h *= 0.25;
                stats.rejected += 1;
                continue;
            }
        };
        // filtered embedded error estimate
        let mut est = vec![0.0; n];
        for i in 0..n {
            est[i] = h * (e1 * f_now[i] + e2 * fg[i] + e3 * fnew[i]);
        }
        let est = lu.solve(&est)?;
        let enorm = error_norm(&est, &y, &ynew, cfg.rel_tol, cfg.abs_tol, scale);
        if enorm <= 1.0 {
            while next_sample < sample_times.len() && sample_times[next_sample] <= t + h + 1e-300 {
                let ts = sample_times[next_sample];
                let th = ((ts - t) / h).clamp(0.0, 1.0);
                let h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th);
                let h10 = th * (1.0 - th) * (1.0 - th);
                let h01 = th * th * (3.0 - 2.0 * th);
                let h11 = th * th * (th - 1.0);
                let ys: Vec<f64> = (0..n)
                    .map(|i| h00 * y[i] + h10 * h * f_now[i] + h01 * ynew[i] + h11 * h * fnew[i])
                    .collect();
                out.push(ys);
                next_sample += 1;
            }
            t += h;
            y = ynew;
            f_now = fnew;
            stats.accepted += 1;
            h *= (0.9 * enorm.powf(-1.0 / 3.0)).clamp(0.2, 5.0);
        } else {
            stats.rejected += 1;
            h *= (0.9 * enorm.powf(-1.0 / 3.0)).clamp(0.1, 0.9);
        }
    }
    Ok((out, stats, None))
}
