//! The four static energy-shaping feedback laws and the closed-loop target
//! structure they induce.
//!
//! All four laws shape the electrical dynamics so the loop takes the form
//! `η̇ = F_d ∇H_d(η, t)` with
//!
//! ```text
//!        [ 0    I        0      ]
//! F_d =  [-I   -R_m      Γ      ]
//!        [ 0   -Γ'+D_d   J_e-R̄_e]
//! ```
//!
//! Two laws shape an energy term in the electrical state `x_e` directly
//! (regulation with fully damped mechanics, and its exponential-tracking
//! version); two shape in the mapped coordinate
//! `z = -G_e'(J_e-R̄_e)^{-T}(Γ'q + x_e)` for plants whose coupling energy is
//! linear in position (levitation-type devices, possibly undamped).

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::matrix::{axpy, Matrix};
use crate::plant::{EMPlant, State};
use crate::shaping::{cubic_shaping, quadratic_shaping_relative, ShapingArity, ShapingFn};
use crate::target::DesiredTarget;

/// Closed-loop interconnection/damping parameters `Γ, D_d, K_e` and the
/// induced `R̄_e = R_e + K_e`.
pub struct ClosedLoopShape {
    /// Momentum/electrical interconnection Γ (n_m x n_e).
    pub gamma: Matrix,
    /// Coupled damping D_d (n_e x n_m).
    pub d_d: Matrix,
    /// Electrical damping injection K_e (n_e x n_e).
    pub k_e: Matrix,
    /// Shaped electrical damping R̄_e = R_e + K_e (positive definite).
    pub r_e_bar: Matrix,
    je_rebar: Matrix,
    je_rebar_inv: Matrix,
    /// `-G_e' (J_e - R̄_e)^{-T}`, the linear map defining `z`.
    zmat: Matrix,
    n_m: usize,
    n_e: usize,
}

impl ClosedLoopShape {
    pub fn new(plant: &EMPlant, gamma: Matrix, d_d: Matrix, k_e: Matrix) -> Result<Self> {
        let (n_m, n_e) = (plant.n_m(), plant.n_e());
        let dims = |m: &Matrix, r: usize, c: usize, what: &'static str| -> Result<()> {
            if m.rows() != r || m.cols() != c {
                return Err(Error::Dimension { expected: (r, c), got: (m.rows(), m.cols()), what });
            }
            Ok(())
        };
        dims(&gamma, n_m, n_e, "Gamma")?;
        dims(&d_d, n_e, n_m, "D_d")?;
        dims(&k_e, n_e, n_e, "K_e")?;
        let r_e_bar = plant.r_e.add(&k_e);
        if !crate::analysis::is_positive_definite(&r_e_bar, 0.0)? {
            return Err(Error::NotPositiveDefinite("shaped electrical damping R_e_bar"));
        }
        let je_rebar = plant.j_e.sub(&r_e_bar);
        let je_rebar_inv = je_rebar
            .inverse()
            .map_err(|_| Error::Singular("J_e - R_e_bar must be invertible"))?;
        let zmat = plant.g_e.transpose().matmul(&je_rebar_inv.transpose()).scale(-1.0);
        Ok(ClosedLoopShape { gamma, d_d, k_e, r_e_bar, je_rebar, je_rebar_inv, zmat, n_m, n_e })
    }

    /// Build from a desired `R̄_e` instead of `K_e` (`K_e = R̄_e - R_e`).
    pub fn from_r_e_bar(plant: &EMPlant, gamma: Matrix, d_d: Matrix, r_e_bar: Matrix) -> Result<Self> {
        let k_e = r_e_bar.sub(&plant.r_e);
        Self::new(plant, gamma, d_d, k_e)
    }

    pub fn je_minus_rebar(&self) -> &Matrix {
        &self.je_rebar
    }

    pub fn je_minus_rebar_inv(&self) -> &Matrix {
        &self.je_rebar_inv
    }

    /// `z = -G_e'(J_e - R̄_e)^{-T} (Γ' q + x_e)`.
    pub fn z_map(&self, q: &[f64], x_e: &[f64]) -> Vec<f64> {
        let mut arg = self.gamma.transpose().matvec(q);
        axpy(&mut arg, 1.0, x_e);
        self.zmat.matvec(&arg)
    }

    /// Jacobian blocks `(∂z/∂q, ∂z/∂x_e)`; `z` is linear so they are constant.
    pub fn z_jacobian(&self) -> (Matrix, Matrix) {
        (self.zmat.matmul(&self.gamma.transpose()), self.zmat.clone())
    }

    /// The constant closed-loop structure matrix `F_d = J_d - R_d`.
    pub fn f_d(&self, plant: &EMPlant) -> Matrix {
        let (n_m, n_e) = (self.n_m, self.n_e);
        let n = 2 * n_m + n_e;
        let mut f = Matrix::zeros(n, n);
        f.set_block(0, n_m, &Matrix::identity(n_m));
        f.set_block(n_m, 0, &Matrix::identity(n_m).scale(-1.0));
        f.set_block(n_m, n_m, &plant.r_m.scale(-1.0));
        f.set_block(n_m, 2 * n_m, &self.gamma);
        f.set_block(2 * n_m, n_m, &self.d_d.sub(&self.gamma.transpose()));
        f.set_block(2 * n_m, 2 * n_m, &self.je_rebar);
        f
    }
}

/// Which feedback law, named by the coordinate it shapes and its goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    /// Regulation shaping an `x_e` energy; needs fully damped mechanics.
    RegulationXe,
    /// Regulation shaping in `z`; admits partially damped or undamped mechanics.
    RegulationZ,
    /// Exponential tracking shaping a (time-varying) `x_e` energy; `Γ = 0`.
    TrackingXe,
    /// Exponential tracking shaping in `z`.
    TrackingZ,
}

impl LawKind {
    pub fn shapes_z(&self) -> bool {
        matches!(self, LawKind::RegulationZ | LawKind::TrackingZ)
    }

    pub fn is_tracking(&self) -> bool {
        matches!(self, LawKind::TrackingXe | LawKind::TrackingZ)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LawKind::RegulationXe => "regulation-xe",
            LawKind::RegulationZ => "regulation-z",
            LawKind::TrackingXe => "tracking-xe",
            LawKind::TrackingZ => "tracking-z",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "regulation-xe" => Ok(LawKind::RegulationXe),
            "regulation-z" => Ok(LawKind::RegulationZ),
            "tracking-xe" => Ok(LawKind::TrackingXe),
            "tracking-z" => Ok(LawKind::TrackingZ),
            other => Err(Error::Config(format!("unknown law kind '{other}'"))),
        }
    }
}

/// The shaping terms for one law: `xe` acts on the electrical state (Φ₁, Θ₁,
/// or the coupling-matched φ for z-laws), `z` acts on the mapped coordinate.
pub struct LawShaping {
    pub xe: ShapingFn,
    pub z: Option<ShapingFn>,
}

/// `u = G_e^{-1} { (J_e - R̄_e) ∇φ(x_e, t) - K_e Ψ(q) x_e + D_d M^{-1}(q) p }`
///
/// Shared by the regulation law for fully damped mechanics (static φ) and its
/// exponential-tracking version (time-varying φ).
pub fn control_xe_shaped(
    plant: &EMPlant,
    shape: &ClosedLoopShape,
    phi: &ShapingFn,
    eta: &State,
    t: f64,
) -> Result<Vec<f64>> {
    plant.check_bounds(&eta.q)?;
    let psi_x = plant.elastance(&eta.q).matvec(&eta.x_e);
    let wp = plant.mass(&eta.q).inverse()?.matvec(&eta.p);
    let mut rhs = shape.je_minus_rebar().matvec(&phi.grad(&eta.x_e, t));
    axpy(&mut rhs, -1.0, &shape.k_e.matvec(&psi_x));
    axpy(&mut rhs, 1.0, &shape.d_d.matvec(&wp));
    plant.g_e.solve(&rhs)
}

/// `u = G_e^{-1} { (R_e - J_e) Ψ(q) x_e + (D_d - Γ') M^{-1}(q) p
///               + (J_e - R̄_e) ∇φ(x_e) } - ∇_z θ(z, t)`
///
/// Shared by the regulation law for (possibly) undamped mechanics (θ = Φ₂)
/// and its exponential-tracking version (θ = Θ₂).
pub fn control_z_shaped(
    plant: &EMPlant,
    shape: &ClosedLoopShape,
    phi_xe: &ShapingFn,
    theta_z: &ShapingFn,
    eta: &State,
    t: f64,
) -> Result<Vec<f64>> {
    plant.check_bounds(&eta.q)?;
    let psi_x = plant.elastance(&eta.q).matvec(&eta.x_e);
    let wp = plant.mass(&eta.q).inverse()?.matvec(&eta.p);
    let mut rhs = plant.r_e.sub(&plant.j_e).matvec(&psi_x);
    axpy(&mut rhs, 1.0, &shape.d_d.sub(&shape.gamma.transpose()).matvec(&wp));
    axpy(&mut rhs, 1.0, &shape.je_minus_rebar().matvec(&phi_xe.grad(&eta.x_e, t)));
    let mut u = plant.g_e.solve(&rhs)?;
    let z = shape.z_map(&eta.q, &eta.x_e);
    axpy(&mut u, -1.0, &theta_z.grad(&z, t));
    Ok(u)
}

/// Shaped closed-loop energy `H_d`, its gradient and Hessian.
pub struct ClosedLoopEnergy<'a> {
    pub plant: &'a EMPlant,
    pub shape: &'a ClosedLoopShape,
    pub shaping: &'a LawShaping,
    pub kind: LawKind,
    /// Constant making `H_d(η_d) = 0` for regulation targets.
    pub offset: f64,
}

impl ClosedLoopEnergy<'_> {
    /// Coupling-energy Hessian blocks, used to strip `H_e` out of `H` for the
    /// z-shaped laws: returns (qq, qx, xx) contributions.
    fn coupling_hessian(&self, eta: &State) -> (Matrix, Matrix, Matrix) {
        let (n_m, n_e) = (self.plant.n_m(), self.plant.n_e());
        let mut qq = Matrix::zeros(n_m, n_m);
        let mut qx = Matrix::zeros(n_m, n_e);
        for i in 0..n_m {
            let psii = self.plant.elastance_d1(&eta.q, i);
            for j in 0..n_m {
                let psij = self.plant.elastance_d2(&eta.q, i, j);
                qq[(i, j)] = 0.5 * psij.quad_form(&eta.x_e, &eta.x_e);
            }
            let row = psii.matvec(&eta.x_e);
            for j in 0..n_e {
                qx[(i, j)] = row[j];
            }
        }
        (qq, qx, self.plant.elastance(&eta.q))
    }

    fn coupling_grad_q(&self, eta: &State) -> Vec<f64> {
        (0..self.plant.n_m())
            .map(|i| 0.5 * self.plant.elastance_d1(&eta.q, i).quad_form(&eta.x_e, &eta.x_e))
            .collect()
    }

    pub fn value(&self, eta: &State, t: f64) -> Result<f64> {
        let base = self.plant.hamiltonian(eta)?;
        if self.kind.shapes_z() {
            let theta = self.shaping.z.as_ref().expect("z-law carries a z shaping");
            let z = self.shape.z_map(&eta.q, &eta.x_e);
            let he = self.plant.coupling_energy(&eta.q, &eta.x_e)?;
            Ok(base - he
                + self.shaping.xe.value(&eta.x_e, t)
                + theta.value(&z, t)
                + self.offset)
        } else {
            Ok(base + self.shaping.xe.value(&eta.x_e, t) + self.offset)
        }
    }

    pub fn grad(&self, eta: &State, t: f64) -> Result<Vec<f64>> {
        let (n_m, n_e) = (self.plant.n_m(), self.plant.n_e());
        let mut g = self.plant.grad_hamiltonian(eta)?;
        if self.kind.shapes_z() {
            let theta = self.shaping.z.as_ref().expect("z-law carries a z shaping");
            // strip the coupling energy H_e
            let ce_q = self.coupling_grad_q(eta);
            let psi_x = self.plant.elastance(&eta.q).matvec(&eta.x_e);
            for i in 0..n_m {
                g[i] -= ce_q[i];
            }
            for i in 0..n_e {
                g[2 * n_m + i] -= psi_x[i];
            }
            // add φ(x_e) and θ(z, t)
            let gphi = self.shaping.xe.grad(&eta.x_e, t);
            for i in 0..n_e {
                g[2 * n_m + i] += gphi[i];
            }
            let z = self.shape.z_map(&eta.q, &eta.x_e);
            let gth = theta.grad(&z, t);
            let (jq, jx) = self.shape.z_jacobian();
            let gq = jq.transpose().matvec(&gth);
            let gx = jx.transpose().matvec(&gth);
            for i in 0..n_m {
                g[i] += gq[i];
            }
            for i in 0..n_e {
                g[2 * n_m + i] += gx[i];
            }
        } else {
            let gphi = self.shaping.xe.grad(&eta.x_e, t);
            for i in 0..n_e {
                g[2 * n_m + i] += gphi[i];
            }
        }
        Ok(g)
    }

    pub fn hessian(&self, eta: &State, t: f64) -> Result<Matrix> {
        let (n_m, n_e) = (self.plant.n_m(), self.plant.n_e());
        let mut h = self.plant.hessian_hamiltonian(eta)?;
        if self.kind.shapes_z() {
            let theta = self.shaping.z.as_ref().expect("z-law carries a z shaping");
            let (qq, qx, xx) = self.coupling_hessian(eta);
            for i in 0..n_m {
                for j in 0..n_m {
                    h[(i, j)] -= qq[(i, j)];
                }
                for j in 0..n_e {
                    h[(i, 2 * n_m + j)] -= qx[(i, j)];
                    h[(2 * n_m + j, i)] -= qx[(i, j)];
                }
            }
            for i in 0..n_e {
                for j in 0..n_e {
                    h[(2 * n_m + i, 2 * n_m + j)] -= xx[(i, j)];
                }
            }
            let hphi = self.shaping.xe.hess(&eta.x_e, t);
            for i in 0..n_e {
                for j in 0..n_e {
                    h[(2 * n_m + i, 2 * n_m + j)] += hphi[(i, j)];
                }
            }
            let z = self.shape.z_map(&eta.q, &eta.x_e);
            let hth = theta.hess(&z, t);
            let (jq, jx) = self.shape.z_jacobian();
            let hqq = jq.transpose().matmul(&hth).matmul(&jq);
            let hqx = jq.transpose().matmul(&hth).matmul(&jx);
            let hxx = jx.transpose().matmul(&hth).matmul(&jx);
            for i in 0..n_m {
                for j in 0..n_m {
                    h[(i, j)] += hqq[(i, j)];
                }
                for j in 0..n_e {
                    h[(i, 2 * n_m + j)] += hqx[(i, j)];
                    h[(2 * n_m + j, i)] += hqx[(i, j)];
                }
            }
            for i in 0..n_e {
                for j in 0..n_e {
                    h[(2 * n_m + i, 2 * n_m + j)] += hxx[(i, j)];
                }
            }
        } else {
            let hphi = self.shaping.xe.hess(&eta.x_e, t);
            for i in 0..n_e {
                for j in 0..n_e {
                    h[(2 * n_m + i, 2 * n_m + j)] += hphi[(i, j)];
                }
            }
        }
        Ok(h)
    }
}

/// A feedback law bound to a plant, closed-loop shape, shaping terms and a
/// target. Construction does not verify side conditions; see [`crate::verify`].
pub struct Controller {
    pub kind: LawKind,
    plant: Arc<EMPlant>,
    pub shape: ClosedLoopShape,
    pub shaping: LawShaping,
    pub target: DesiredTarget,
    offset: f64,
}

impl Controller {
    pub fn new(
        kind: LawKind,
        plant: Arc<EMPlant>,
        shape: ClosedLoopShape,
        shaping: LawShaping,
        target: DesiredTarget,
    ) -> Result<Self> {
        if shaping.xe.arity != ShapingArity::ElectricalState {
            return Err(Error::Config("the xe shaping must act on the electrical state".into()));
        }
        match (&kind, &shaping.z) {
            (LawKind::RegulationZ | LawKind::TrackingZ, Some(zf))
                if zf.arity == ShapingArity::MappedCoordinate => {}
            (LawKind::RegulationXe | LawKind::TrackingXe, None) => {}
            _ => {
                return Err(Error::Config(format!(
                    "law {} expects {} z shaping",
                    kind.name(),
                    if kind.shapes_z() { "a" } else { "no" }
                )))
            }
        }
        if matches!(kind, LawKind::RegulationXe | LawKind::RegulationZ) && target.is_trajectory() {
            return Err(Error::Config("regulation laws require an equilibrium target".into()));
        }
        let mut ctrl = Controller { kind, plant, shape, shaping, target, offset: 0.0 };
        if let Some(eq) = ctrl.target.equilibrium_point() {
            let v = ctrl.energy().value(&eq, 0.0)?;
            ctrl.offset = -v;
        }
        Ok(ctrl)
    }

    /// Built-in shaping matching the case studies: quadratic terms (unit gain
    /// in `x_e`, gain `k_c` in `z`) with offsets derived from the feasibility
    /// equality, plus the coupling-matched cubic for the z-laws.
    pub fn with_builtin_shaping(
        kind: LawKind,
        plant: Arc<EMPlant>,
        shape: ClosedLoopShape,
        target: DesiredTarget,
        k_c: f64,
    ) -> Result<Self> {
        let shaping = match kind {
            LawKind::RegulationXe | LawKind::TrackingXe => {
                let center = xe_center_from_feasibility(&plant, &shape, &target)?;
                let reference = {
                    let target = target.clone();
                    Arc::new(move |t: f64| {
                        target.state(t).expect("reference leaves the plant domain").x_e
                    }) as Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>
                };
                LawShaping {
                    xe: quadratic_shaping_relative(
                        "quadratic-xe",
                        ShapingArity::ElectricalState,
                        1.0,
                        target.is_trajectory(),
                        center,
                        reference,
                    ),
                    z: None,
                }
            }
            LawKind::RegulationZ | LawKind::TrackingZ => {
                let phi = coupling_matched_cubic(&plant, &shape)?;
                let center = z_center_from_feasibility(&plant, &shape, &target, &phi, k_c)?;
                let reference = {
                    let target = target.clone();
                    let gamma_t = shape.gamma.transpose();
                    let zmat = shape.zmat.clone();
                    Arc::new(move |t: f64| {
                        let s = target.state(t).expect("reference leaves the plant domain");
                        let mut arg = gamma_t.matvec(&s.q);
                        axpy(&mut arg, 1.0, &s.x_e);
                        zmat.matvec(&arg)
                    }) as Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>
                };
                LawShaping {
                    xe: phi,
                    z: Some(quadratic_shaping_relative(
                        "quadratic-z",
                        ShapingArity::MappedCoordinate,
                        k_c,
                        target.is_trajectory(),
                        center,
                        reference,
                    )),
                }
            }
        };
        Controller::new(kind, plant, shape, shaping, target)
    }

    pub fn plant(&self) -> &Arc<EMPlant> {
        &self.plant
    }

    pub fn energy(&self) -> ClosedLoopEnergy<'_> {
        ClosedLoopEnergy {
            plant: &self.plant,
            shape: &self.shape,
            shaping: &self.shaping,
            kind: self.kind,
            offset: self.offset,
        }
    }

    pub fn f_d(&self) -> Matrix {
        self.shape.f_d(&self.plant)
    }

    /// Evaluate the feedback law at `(η, t)`.
    pub fn control(&self, eta: &State, t: f64) -> Result<Vec<f64>> {
        match self.kind {
            LawKind::RegulationXe | LawKind::TrackingXe => {
                control_xe_shaped(&self.plant, &self.shape, &self.shaping.xe, eta, t)
            }
            LawKind::RegulationZ | LawKind::TrackingZ => control_z_shaped(
                &self.plant,
                &self.shape,
                &self.shaping.xe,
                self.shaping.z.as_ref().expect("validated in new"),
                eta,
                t,
            ),
        }
    }

    /// The input the law produces along the desired motion, `u*(t) = u(η*(t), t)`.
    pub fn feedforward_input(&self, t: f64) -> Result<Vec<f64>> {
        let eta = self.target.state(t)?;
        self.control(&eta, t)
    }

    /// The target-structure field `F_d ∇H_d(η, t)`.
    pub fn target_field(&self, eta: &State, t: f64) -> Result<Vec<f64>> {
        let g = self.energy().grad(eta, t)?;
        Ok(self.f_d().matvec(&g))
    }

    /// The actual closed-loop field: plant dynamics under the law.
    pub fn closed_loop_field(&self, eta: &State, t: f64) -> Result<Vec<f64>> {
        let u = self.control(eta, t)?;
        self.plant.open_loop_field(eta, &u)
    }
}

/// Offset carrier for the quadratic `x_e` shaping: the feasibility equality
/// `ẋ_e* = D_d M⁻¹ p* + (J_e - R̄_e){Ψ(q*) x_e* + ∇φ(x_e*)}` pins
/// `∇φ(x_e*) = x_e* - center(t)`, i.e.
/// `center(t) = x_e* - (J_e-R̄_e)^{-1}(ẋ_e* - D_d M⁻¹ p*) + Ψ(q*) x_e*`... the
/// returned closure evaluates it exactly.
fn xe_center_from_feasibility(
    plant: &Arc<EMPlant>,
    shape: &ClosedLoopShape,
    target: &DesiredTarget,
) -> Result<Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>> {
    let plant = plant.clone();
    let target = target.clone();
    let inv = shape.je_minus_rebar_inv().clone();
    let d_d = shape.d_d.clone();
    // probe once so configuration errors surface at build time
    let _ = target.state(0.0)?;
    Ok(Arc::new(move |t: f64| {
        let s = target.state(t).expect("reference leaves the plant domain");
        let sd = target.state_dot(t).expect("reference leaves the plant domain");
        let n_m = plant.n_m();
        let wp = plant.mass(&s.q).inverse().expect("mass matrix singular").matvec(&s.p);
        let mut rhs: Vec<f64> = sd[2 * n_m..].to_vec();
        axpy(&mut rhs, -1.0, &d_d.matvec(&wp));
        // L(t) = (J_e-R̄_e)^{-1} rhs - Ψ(q*) x_e* ; center = x_e* - L
        let mut l = inv.matvec(&rhs);
        axpy(&mut l, -1.0, &plant.elastance(&s.q).matvec(&s.x_e));
        let mut center = s.x_e.clone();
        axpy(&mut center, -1.0, &l);
        center
    }))
}

/// The coupling-matched gradient for z-laws: for scalar plants with constant
/// `Ψ'`, `∇φ(x) = -Ψ' x²/(2Γ)` satisfies `∇_q H_e = -Γ ∇φ` exactly.
fn coupling_matched_cubic(plant: &EMPlant, shape: &ClosedLoopShape) -> Result<ShapingFn> {
    if plant.n_m() != 1 || plant.n_e() != 1 {
        return Err(Error::Config("built-in coupling-matched shaping needs n_m = n_e = 1".into()));
    }
    let gamma = shape.gamma[(0, 0)];
    if gamma == 0.0 {
        return Err(Error::Config("z-shaped laws need a nonzero Gamma".into()));
    }
    // the construction requires Ψ' constant in q (coupling linear in position)
    let q0 = match &target_probe(plant) {
        Some(q) => *q,
        None => 0.0,
    };
    let s = plant.q_scale[0];
    let d0 = plant.elastance_d1(&[q0], 0)[(0, 0)];
    let d1 = plant.elastance_d1(&[q0 - 0.25 * s], 0)[(0, 0)];
    let d2 = plant.elastance_d1(&[q0 + 0.25 * s], 0)[(0, 0)];
    let spread = (d1 - d0).abs().max((d2 - d0).abs());
    if spread > 1e-8 * d0.abs().max(1e-300) {
        return Err(Error::Config(
            "coupling energy is not linear in position; the z-shaped laws do not apply".into(),
        ));
    }
    Ok(cubic_shaping("coupling-matched-cubic", -d0 / (2.0 * gamma)))
}

fn target_probe(plant: &EMPlant) -> Option<f64> {
    let (lo, hi) = plant.q_bounds[0];
    let s = plant.q_scale[0];
    if lo.is_finite() && hi.is_finite() {
        Some(0.5 * (lo + hi))
    } else if hi.is_finite() {
        Some(hi - s)
    } else if lo.is_finite() {
        Some(lo + s)
    } else {
        Some(0.0)
    }
}

/// Center for the quadratic z shaping: the feasibility equality
/// `ẋ_e* = (D_d - Γ')M⁻¹p* + (J_e-R̄_e)∇φ(x_e*) - G_e k_c (z* - center)` gives
/// `center(t) = z* + (1/k_c) G_e⁻¹ [ẋ_e* - (D_d-Γ')M⁻¹p* - (J_e-R̄_e)∇φ(x_e*)]`.
fn z_center_from_feasibility(
    plant: &Arc<EMPlant>,
    shape: &ClosedLoopShape,
    target: &DesiredTarget,
    phi: &ShapingFn,
    k_c: f64,
) -> Result<Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>> {
    if k_c <= 0.0 {
        return Err(Error::Config(format!("k_c = {k_c} must be positive")));
    }
    let plant = plant.clone();
    let target = target.clone();
    let d_d_gamma = shape.d_d.sub(&shape.gamma.transpose());
    let je_rebar = shape.je_minus_rebar().clone();
    let zmat = shape.zmat.clone();
    let gamma_t = shape.gamma.transpose();
    // the z-map pieces are cheap copies; rebuild z* inline
    let phi_grad: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync> = {
        // cubic: grad = coef x²; recover coef from a probe
        let g1 = phi.grad(&[1.0], 0.0)[0];
        Arc::new(move |x: &[f64]| vec![g1 * x[0] * x[0]])
    };
    let _ = target.state(0.0)?;
    Ok(Arc::new(move |t: f64| {
        let s = target.state(t).expect("reference leaves the plant domain");
        let sd = target.state_dot(t).expect("reference leaves the plant domain");
        let n_m = plant.n_m();
        let wp = plant.mass(&s.q).inverse().expect("mass matrix singular").matvec(&s.p);
        let mut rhs: Vec<f64> = sd[2 * n_m..].to_vec();
        axpy(&mut rhs, -1.0, &d_d_gamma.matvec(&wp));
        axpy(&mut rhs, -1.0, &je_rebar.matvec(&phi_grad(&s.x_e)));
        let corr = plant.g_e.solve(&rhs).expect("G_e singular");
        let mut zstar_arg = gamma_t.matvec(&s.q);
        axpy(&mut zstar_arg, 1.0, &s.x_e);
        let mut center = zmat.matvec(&zstar_arg);
        axpy(&mut center, 1.0 / k_c, &corr);
        center
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::norm2;
    use crate::plant::{mems_equilibrium_charge, MaglevParams, MemsParams};
    use crate::target::ReferenceKind;

    fn mems() -> Arc<EMPlant> {
        Arc::new(EMPlant::mems_optical_switch(MemsParams::default()).unwrap())
    }

    fn maglev() -> Arc<EMPlant> {
        Arc::new(EMPlant::maglev(MaglevParams::default()).unwrap())
    }

    fn mems_shape(plant: &EMPlant, d_d: f64, r_bar: f64) -> ClosedLoopShape {
        ClosedLoopShape::from_r_e_bar(
            plant,
            Matrix::scalar(0.0),
            Matrix::scalar(d_d),
            Matrix::scalar(1.0 / r_bar),
        )
        .unwrap()
    }

    #[test]
    fn z_map_scalar_inversion() {
        // Γ = 0, J_e = 0, R̄_e = r, G_e = 1: z = x/r
        let plant = maglev();
        let shape = ClosedLoopShape::from_r_e_bar(
            &plant,
            Matrix::scalar(0.0),
            Matrix::scalar(0.0),
            Matrix::scalar(2.0),
        )
        .unwrap();
        let z = shape.z_map(&[0.3], &[1.2]);
        assert!((z[0] - 1.2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn z_map_maglev_form() {
        // Γ = 1/(2k), G_e = 1, J_e = 0: z = (q/(2k) + x)/R̄_e
        let p = MaglevParams::default();
        let plant = maglev();
        let gamma = 1.0 / (2.0 * p.k);
        let shape = ClosedLoopShape::from_r_e_bar(
            &plant,
            Matrix::scalar(gamma),
            Matrix::scalar(-1.0),
            Matrix::scalar(0.82),
        )
        .unwrap();
        let (q, x) = (0.001, 0.9);
        let z = shape.z_map(&[q], &[x]);
        assert!((z[0] - (q * gamma + x) / 0.82).abs() < 1e-15);
    }

    #[test]
    fn regulation_xe_holds_equilibrium() {
        let plant = mems();
        let shape = mems_shape(&plant, -1e-4, 100.0);
        let target = DesiredTarget::equilibrium(plant.clone(), vec![3e-5]).unwrap();
        let ctrl = Controller::with_builtin_shaping(
            LawKind::RegulationXe,
            plant.clone(),
            shape,
            target,
            1.0,
        )
        .unwrap();
        let eq = ctrl.target.equilibrium_point().unwrap();
        let f = ctrl.closed_loop_field(&eq, 0.0).unwrap();
        let gscale = norm2(&plant.grad_hamiltonian(&eq).unwrap());
        assert!(norm2(&f) <= 1e-10 * gscale.max(1.0), "field {f:?}");
        // H_d vanishes at the target and its gradient does too
        let e = ctrl.energy();
        assert!(e.value(&eq, 0.0).unwrap().abs() < 1e-18);
        assert!(norm2(&e.grad(&eq, 0.0).unwrap()) < 1e-12 * gscale.max(1.0));
    }

    #[test]
    fn xe_law_without_coupled_damping_ignores_momentum() {
        let plant = mems();
        let shape = mems_shape(&plant, 0.0, 100.0);
        let target = DesiredTarget::equilibrium(plant.clone(), vec![3e-5]).unwrap();
        let ctrl =
            Controller::with_builtin_shaping(LawKind::RegulationXe, plant, shape, target, 1.0)
                .unwrap();
        let mk = |p: f64| State::new(vec![2e-5], vec![p], vec![1e-11]);
        let u1 = ctrl.control(&mk(0.0), 0.0).unwrap();
        let u2 = ctrl.control(&mk(5e-12), 0.0).unwrap();
        assert_eq!(u1, u2);
    }

    #[test]
    fn regulation_law_matches_hand_formula() {
        // direct substitution at eta = (1.5e-5, 0, 0)
        let p = MemsParams::default();
        let plant = mems();
        let (r_e, r_bar, d_d) = (p.r_e, 100.0, -1.0);
        let shape = mems_shape(&plant, d_d, r_bar);
        let target = DesiredTarget::equilibrium(plant.clone(), vec![3e-5]).unwrap();
        let ctrl = Controller::with_builtin_shaping(
            LawKind::TrackingXe,
            plant.clone(),
            shape,
            target,
            1.0,
        )
        .unwrap();
        let q_d = 3e-5;
        let x_ed = mems_equilibrium_charge(&p, q_d);
        let l1 = -x_ed / (p.c1 * (q_d + p.c0));
        let k_e = 1.0 / r_bar - 1.0 / r_e;
        let eta = State::new(vec![1.5e-5], vec![0.0], vec![0.0]);
        let (q, x, pm) = (eta.q[0], eta.x_e[0], eta.p[0]);
        let expect = -(r_e / r_bar) * (x - x_ed + l1) - k_e * r_e * x / (p.c1 * (q + p.c0))
            + r_e * d_d / p.mass * pm;
        let u = ctrl.control(&eta, 0.0).unwrap();
        assert!(
            (u[0] - expect).abs() < 1e-10 * expect.abs().max(1.0),
            "law {} vs formula {}",
            u[0],
            expect
        );
        assert!(u[0].is_finite());
    }

    #[test]
    fn tracking_law_reproduces_scalar_display() {
        // u = -(r_e/r̄_e)(x - x* + L2) - K_e r_e x/(c1 (q + c0)) + r_e (D_d/m) p
        let p = MemsParams::default();
        let plant = mems();
        let (r_bar, d_d) = (100.0, -0.4);
        let shape = mems_shape(&plant, d_d, r_bar);
        let reference =
            ReferenceKind::Sinusoid { offset: 0.05, amplitude: 0.05, omega: 30.0, phase: 0.0 };
        let target = DesiredTarget::trajectory(plant.clone(), reference).unwrap();
        let ctrl = Controller::with_builtin_shaping(
            LawKind::TrackingXe,
            plant.clone(),
            shape,
            target.clone(),
            1.0,
        )
        .unwrap();
        let k_e = 1.0 / r_bar - 1.0 / p.r_e;
        for (t, q, x, pm) in [(0.05, 0.04, 2e-6, 1e-9), (0.31, 0.08, 4e-6, -2e-9)] {
            let s = target.state(t).unwrap();
            let sd = target.state_dot(t).unwrap();
            let (xs, xsd, ps) = (s.x_e[0], sd[2], s.p[0]);
            let l2 = -r_bar * xsd - xs / (p.c1 * (s.q[0] + p.c0)) + r_bar * d_d / p.mass * ps;
            let expect = -(p.r_e / r_bar) * (x - xs + l2) - k_e * p.r_e * x / (p.c1 * (q + p.c0))
                + p.r_e * d_d / p.mass * pm;
            let eta = State::new(vec![q], vec![pm], vec![x]);
            let u = ctrl.control(&eta, t).unwrap();
            assert!(
                (u[0] - expect).abs() < 1e-9 * expect.abs().max(1.0),
                "law {} vs display {}",
                u[0],
                expect
            );
        }
    }

    #[test]
    fn tracking_feasibility_residual_is_tiny() {
        let plant = mems();
        let shape = mems_shape(&plant, -0.4, 100.0);
        let reference =
            ReferenceKind::Sinusoid { offset: 0.05, amplitude: 0.05, omega: 30.0, phase: 0.0 };
        let target = DesiredTarget::trajectory(plant.clone(), reference).unwrap();
        let ctrl = Controller::with_builtin_shaping(
            LawKind::TrackingXe,
            plant.clone(),
            shape,
            target.clone(),
            1.0,
        )
        .unwrap();
        for k in 0..=100 {
            let t = 0.628 * (k as f64) / 100.0;
            let u = ctrl.feedforward_input(t).unwrap();
            let (res, scale) =
                crate::target::feasibility_residual(&plant, &target, &u, t).unwrap();
            assert!(res < 1e-10 * scale, "t = {t}: residual {res}, scale {scale}");
        }
    }

    #[test]
    fn broken_feedforward_leaves_residual() {
        let plant = mems();
        let reference =
            ReferenceKind::Sinusoid { offset: 0.05, amplitude: 0.05, omega: 30.0, phase: 0.0 };
        let target = DesiredTarget::trajectory(plant.clone(), reference).unwrap();
        // zero input cannot hold the reference
        let (res, scale) =
            crate::target::feasibility_residual(&plant, &target, &[0.0], 0.2).unwrap();
        assert!(res > 1e-6 * scale);
    }

    #[test]
    fn maglev_tracking_law_form_and_feasibility() {
        let p = MaglevParams::default();
        let plant = maglev();
        let gamma = 1.0 / (2.0 * p.k);
        let (r_bar, d_d, k_c) = (2.82, -1.0, 20.0);
        let shape = ClosedLoopShape::from_r_e_bar(
            &plant,
            Matrix::scalar(gamma),
            Matrix::scalar(d_d),
            Matrix::scalar(r_bar),
        )
        .unwrap();
        let reference =
            ReferenceKind::Sinusoid { offset: 0.002, amplitude: 0.001, omega: 1.0, phase: 0.0 };
        let target = DesiredTarget::trajectory(plant.clone(), reference).unwrap();
        let ctrl = Controller::with_builtin_shaping(
            LawKind::TrackingZ,
            plant.clone(),
            shape,
            target.clone(),
            k_c,
        )
        .unwrap();
        // feasibility along the reference
        for k in 0..=100 {
            let t = 5.0 * (k as f64) / 100.0;
            let u = ctrl.feedforward_input(t).unwrap();
            let (res, scale) =
                crate::target::feasibility_residual(&plant, &target, &u, t).unwrap();
            assert!(res < 1e-10 * scale, "t = {t}: residual {res}");
        }
        // scalar display with the feasibility-consistent offset:
        // u = R_e (c-q) x / k + (D_d - Γ) p/m - R̄_e x² - k_c (z - L3)
        let t = 1.3;
        let s = target.state(t).unwrap();
        let sd = target.state_dot(t).unwrap();
        let zs = (gamma * s.q[0] + s.x_e[0]) / r_bar;
        let l3 = zs
            + (sd[2] - (d_d - gamma) * s.p[0] / p.mass + r_bar * s.x_e[0] * s.x_e[0]) / k_c;
        let eta = State::new(vec![0.0015], vec![0.01], vec![1.1]);
        let (q, pm, x) = (eta.q[0], eta.p[0], eta.x_e[0]);
        let z = (gamma * q + x) / r_bar;
        let expect = p.r_e * (p.c - q) * x / p.k + (d_d - gamma) * pm / p.mass
            - r_bar * x * x
            - k_c * (z - l3);
        let u = ctrl.control(&eta, t).unwrap();
        assert!(
            (u[0] - expect).abs() < 1e-10 * expect.abs().max(1.0),
            "law {} vs display {}",
            u[0],
            expect
        );
    }

    #[test]
    fn z_law_momentum_term_vanishes_when_dd_equals_gamma_t() {
        let p = MaglevParams::default();
        let plant = maglev();
        let gamma = 1.0 / (2.0 * p.k);
        let shape = ClosedLoopShape::from_r_e_bar(
            &plant,
            Matrix::scalar(gamma),
            Matrix::scalar(gamma),
            Matrix::scalar(2.82),
        )
        .unwrap();
        let target = DesiredTarget::equilibrium_explicit(
            plant.clone(),
            vec![0.0],
            plant.equilibrium_electrical_state(&[0.0]).unwrap(),
        )
        .unwrap();
        let ctrl =
            Controller::with_builtin_shaping(LawKind::RegulationZ, plant, shape, target, 20.0)
                .unwrap();
        let mk = |pm: f64| State::new(vec![0.001], vec![pm], vec![1.0]);
        let u1 = ctrl.control(&mk(0.0), 0.0).unwrap();
        let u2 = ctrl.control(&mk(0.05), 0.0).unwrap();
        assert!((u1[0] - u2[0]).abs() < 1e-14 * u1[0].abs().max(1.0));
    }

    #[test]
    fn regulation_z_stationary_at_equilibrium() {
        let plant = maglev();
        let p = MaglevParams::default();
        let gamma = 1.0 / (2.0 * p.k);
        let shape = ClosedLoopShape::from_r_e_bar(
            &plant,
            Matrix::scalar(gamma),
            Matrix::scalar(-1e-3),
            Matrix::scalar(2.82),
        )
        .unwrap();
        let target = DesiredTarget::equilibrium_explicit(
            plant.clone(),
            vec![0.0],
            plant.equilibrium_electrical_state(&[0.0]).unwrap(),
        )
        .unwrap();
        let ctrl =
            Controller::with_builtin_shaping(LawKind::RegulationZ, plant.clone(), shape, target, 20.0)
                .unwrap();
        let eq = ctrl.target.equilibrium_point().unwrap();
        let e = ctrl.energy();
        assert!(e.value(&eq, 0.0).unwrap().abs() < 1e-15);
        let g = e.grad(&eq, 0.0).unwrap();
        let f = ctrl.closed_loop_field(&eq, 0.0).unwrap();
        let gscale = norm2(&plant.grad_hamiltonian(&eq).unwrap()).max(1.0);
        assert!(norm2(&g) < 1e-12 * gscale, "grad {g:?}");
        assert!(norm2(&f) < 1e-12 * gscale, "field {f:?}");
    }

    #[test]
    fn singular_r_e_bar_is_rejected() {
        let plant = mems();
        let err = ClosedLoopShape::from_r_e_bar(
            &plant,
            Matrix::scalar(0.0),
            Matrix::scalar(0.0),
            Matrix::scalar(0.0),
        );
        assert!(err.is_err());
    }
}
