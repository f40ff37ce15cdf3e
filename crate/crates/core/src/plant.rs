//! Open-loop weakly coupled electromechanical plant in port-Hamiltonian form.
//!
//! State `η = [q; p; x_e]` with energy
//! `H(η) = p' M⁻¹(q) p / 2 + V(q) + x_e' Ψ(q) x_e / 2` and dynamics
//!
//! ```text
//! q̇  =  ∇_p H
//! ṗ  = -∇_q H - R_m ∇_p H
//! ẋ_e = (J_e - R_e) ∇_{x_e} H + G_e u
//! ```
//!
//! Plants carry analytic first/second derivative callbacks for `M`, `V`, `Ψ`
//! where available; a central finite-difference fallback (relative step 1e-6)
//! fills the gaps and is flagged so verification reports can mention it.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::matrix::{dot, norm2, Matrix};

pub type QMatrixFn = Box<dyn Fn(&[f64]) -> Matrix + Send + Sync>;
pub type QMatrixD1Fn = Box<dyn Fn(&[f64], usize) -> Matrix + Send + Sync>;
pub type QMatrixD2Fn = Box<dyn Fn(&[f64], usize, usize) -> Matrix + Send + Sync>;
pub type QScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type QVectorFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A position-dependent symmetric matrix map with optional analytic partials.
pub struct MatrixMap {
    pub value: QMatrixFn,
    pub d1: Option<QMatrixD1Fn>,
    pub d2: Option<QMatrixD2Fn>,
}

impl MatrixMap {
    pub fn constant(m: Matrix) -> Self {
        let rows = m.rows();
        let cols = m.cols();
        let zero = Matrix::zeros(rows, cols);
        let z1 = zero.clone();
        let z2 = zero;
        MatrixMap {
            value: Box::new(move |_| m.clone()),
            d1: Some(Box::new(move |_, _| z1.clone())),
            d2: Some(Box::new(move |_, _, _| z2.clone())),
        }
    }
}

/// Scalar potential with optional analytic gradient/Hessian.
pub struct ScalarMap {
    pub value: QScalarFn,
    pub grad: Option<QVectorFn>,
    pub hess: Option<QMatrixFn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub x_e: Vec<f64>,
}

impl State {
    pub fn new(q: Vec<f64>, p: Vec<f64>, x_e: Vec<f64>) -> Self {
        State { q, p, x_e }
    }

    pub fn dim(&self) -> usize {
        self.q.len() + self.p.len() + self.x_e.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.p);
        v.extend_from_slice(&self.x_e);
        v
    }

    pub fn from_flat(n_m: usize, n_e: usize, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), 2 * n_m + n_e, "flat state length");
        State {
            q: flat[..n_m].to_vec(),
            p: flat[n_m..2 * n_m].to_vec(),
            x_e: flat[2 * n_m..].to_vec(),
        }
    }
}

/// Which derivative evaluations fall back to finite differences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FdFallbacks {
    pub mass_d1: bool,
    pub mass_d2: bool,
    pub potential_grad: bool,
    pub potential_hess: bool,
    pub elastance_d1: bool,
    pub elastance_d2: bool,
}

impl FdFallbacks {
    pub fn any(&self) -> bool {
        self.mass_d1
            || self.mass_d2
            || self.potential_grad
            || self.potential_hess
            || self.elastance_d1
            || self.elastance_d2
    }
}

pub struct EMPlant {
    pub name: String,
    n_m: usize,
    n_e: usize,
    mass: MatrixMap,
    potential: ScalarMap,
    elastance: MatrixMap,
    pub r_m: Matrix,
    pub j_e: Matrix,
    pub r_e: Matrix,
    pub g_e: Matrix,
    /// Exclusive box bounds on q; the model is only physical strictly inside.
    pub q_bounds: Vec<(f64, f64)>,
    /// Typical magnitude per q coordinate, used for finite-difference steps.
    pub q_scale: Vec<f64>,
}

pub const FD_REL_STEP: f64 = 1e-6;

impl EMPlant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        n_m: usize,
        n_e: usize,
        mass: MatrixMap,
        potential: ScalarMap,
        elastance: MatrixMap,
        r_m: Matrix,
        j_e: Matrix,
        r_e: Matrix,
        g_e: Matrix,
        q_bounds: Vec<(f64, f64)>,
        q_scale: Vec<f64>,
    ) -> Result<Self> {
        if n_m == 0 || n_e == 0 {
            return Err(Error::Config("state dimensions must be positive".into()));
        }
        if q_bounds.len() != n_m || q_scale.len() != n_m {
            return Err(Error::Config("q_bounds/q_scale must have n_m entries".into()));
        }
        let check_dims = |m: &Matrix, n: usize, what: &'static str| -> Result<()> {
            if m.rows() != n || m.cols() != n {
                return Err(Error::Dimension { expected: (n, n), got: (m.rows(), m.cols()), what });
            }
            Ok(())
        };
        check_dims(&r_m, n_m, "R_m")?;
        check_dims(&j_e, n_e, "J_e")?;
        check_dims(&r_e, n_e, "R_e")?;
        check_dims(&g_e, n_e, "G_e")?;
        if j_e.add(&j_e.transpose()).norm_max() > 1e-12 * (1.0 + j_e.norm_max()) {
            return Err(Error::Config("J_e must be skew-symmetric".into()));
        }
        if !crate::analysis::is_positive_semidefinite(&r_m, 1e-12)? {
            return Err(Error::NotPositiveDefinite("R_m must be positive semi-definite"));
        }
        if !crate::analysis::is_positive_semidefinite(&r_e, 1e-12)? {
            return Err(Error::NotPositiveDefinite("R_e must be positive semi-definite"));
        }
        g_e.lu().map_err(|_| Error::Singular("input matrix G_e"))?;
        let plant = EMPlant {
            name: name.into(),
            n_m,
            n_e,
            mass,
            potential,
            elastance,
            r_m,
            j_e,
            r_e,
            g_e,
            q_bounds,
            q_scale,
        };
        // probe M and Psi at an interior point
        let q0 = plant.interior_point();
        if !crate::analysis::is_positive_definite(&(plant.mass.value)(&q0), 1e-300)? {
            return Err(Error::NotPositiveDefinite("mass matrix at the reference configuration"));
        }
        if !crate::analysis::is_positive_definite(&(plant.elastance.value)(&q0), 1e-300)? {
            return Err(Error::NotPositiveDefinite("elastance matrix at the reference configuration"));
        }
        Ok(plant)
    }

    fn interior_point(&self) -> Vec<f64> {
        self.q_bounds
            .iter()
            .zip(&self.q_scale)
            .map(|(&(lo, hi), &s)| {
                if lo.is_finite() && hi.is_finite() {
                    0.5 * (lo + hi)
                } else if lo.is_finite() {
                    lo + s
                } else if hi.is_finite() {
                    hi - s
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn n_m(&self) -> usize {
        self.n_m
    }

    pub fn n_e(&self) -> usize {
        self.n_e
    }

    pub fn dim(&self) -> usize {
        2 * self.n_m + self.n_e
    }

    pub fn fd_fallbacks(&self) -> FdFallbacks {
        FdFallbacks {
            mass_d1: self.mass.d1.is_none(),
            mass_d2: self.mass.d2.is_none(),
            potential_grad: self.potential.grad.is_none(),
            potential_hess: self.potential.hess.is_none(),
            elastance_d1: self.elastance.d1.is_none(),
            elastance_d2: self.elastance.d2.is_none(),
        }
    }

    pub fn check_bounds(&self, q: &[f64]) -> Result<()> {
        for (i, (&qi, &(lo, hi))) in q.iter().zip(&self.q_bounds).enumerate() {
            if !(qi > lo && qi < hi) {
                return Err(Error::Domain { coordinate: i, value: qi });
            }
        }
        Ok(())
    }

    fn fd_step(&self, q: &[f64], i: usize) -> f64 {
        FD_REL_STEP * (q[i].abs() + self.q_scale[i])
    }

    pub fn mass(&self, q: &[f64]) -> Matrix {
        (self.mass.value)(q)
    }

    pub fn elastance(&self, q: &[f64]) -> Matrix {
        (self.elastance.value)(q)
    }

    pub fn potential(&self, q: &[f64]) -> f64 {
        (self.potential.value)(q)
    }

    pub fn mass_d1(&self, q: &[f64], i: usize) -> Matrix {
        self.matrix_d1(&self.mass, q, i)
    }

    pub fn elastance_d1(&self, q: &[f64], i: usize) -> Matrix {
        self.matrix_d1(&self.elastance, q, i)
    }

    pub fn elastance_d2(&self, q: &[f64], i: usize, j: usize) -> Matrix {
        self.matrix_d2(&self.elastance, q, i, j)
    }

    fn matrix_d1(&self, map: &MatrixMap, q: &[f64], i: usize) -> Matrix {
        if let Some(d1) = &map.d1 {
            return d1(q, i);
        }
        let h = self.fd_step(q, i);
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[i] += h;
        qm[i] -= h;
        (map.value)(&qp).sub(&(map.value)(&qm)).scale(0.5 / h)
    }

    fn matrix_d2(&self, map: &MatrixMap, q: &[f64], i: usize, j: usize) -> Matrix {
        if let Some(d2) = &map.d2 {
            return d2(q, i, j);
        }
        let h = self.fd_step(q, j);
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[j] += h;
        qm[j] -= h;
        self.matrix_d1(map, &qp, i).sub(&self.matrix_d1(map, &qm, i)).scale(0.5 / h)
    }

    pub fn potential_grad(&self, q: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.potential.grad {
            return g(q);
        }
        (0..self.n_m)
            .map(|i| {
                let h = self.fd_step(q, i);
                let mut qp = q.to_vec();
                let mut qm = q.to_vec();
                qp[i] += h;
                qm[i] -= h;
                ((self.potential.value)(&qp) - (self.potential.value)(&qm)) * 0.5 / h
            })
            .collect()
    }

    pub fn potential_hess(&self, q: &[f64]) -> Matrix {
        if let Some(hs) = &self.potential.hess {
            return hs(q);
        }
        let n = self.n_m;
        let mut out = Matrix::zeros(n, n);
        for j in 0..n {
            let h = self.fd_step(q, j);
            let mut qp = q.to_vec();
            let mut qm = q.to_vec();
            qp[j] += h;
            qm[j] -= h;
            let gp = self.potential_grad(&qp);
            let gm = self.potential_grad(&qm);
            for i in 0..n {
                out[(i, j)] = (gp[i] - gm[i]) * 0.5 / h;
            }
        }
        out.symmetrize()
    }

    /// Total energy in joules.
    pub fn hamiltonian(&self, eta: &State) -> Result<f64> {
        self.check_bounds(&eta.q)?;
        let w = self.mass(&eta.q).inverse()?;
        let psi = self.elastance(&eta.q);
        Ok(0.5 * w.quad_form(&eta.p, &eta.p)
            + self.potential(&eta.q)
            + 0.5 * psi.quad_form(&eta.x_e, &eta.x_e))
    }

    /// Coupling (capacitive/inductive) energy alone.
    pub fn coupling_energy(&self, q: &[f64], x_e: &[f64]) -> Result<f64> {
        self.check_bounds(q)?;
        Ok(0.5 * self.elastance(q).quad_form(x_e, x_e))
    }

    /// Analytic gradient `[∇_q H, ∇_p H, ∇_{x_e} H]`.
    pub fn grad_hamiltonian(&self, eta: &State) -> Result<Vec<f64>> {
        self.check_bounds(&eta.q)?;
        let n_m = self.n_m;
        let w = self.mass(&eta.q).inverse()?;
        let psi = self.elastance(&eta.q);
        let vg = self.potential_grad(&eta.q);
        let mut g = vec![0.0; self.dim()];
        let wp = w.matvec(&eta.p);
        for i in 0..n_m {
            // dW/dq_i = -W dM/dq_i W
            let mi = self.matrix_d1(&self.mass, &eta.q, i);
            let wi = w.matmul(&mi).matmul(&w).scale(-1.0);
            let psii = self.matrix_d1(&self.elastance, &eta.q, i);
            g[i] = 0.5 * wi.quad_form(&eta.p, &eta.p)
                + vg[i]
                + 0.5 * psii.quad_form(&eta.x_e, &eta.x_e);
        }
        g[n_m..2 * n_m].copy_from_slice(&wp);
        let px = psi.matvec(&eta.x_e);
        g[2 * n_m..].copy_from_slice(&px);
        Ok(g)
    }

    /// Full analytic Hessian of `H` at `eta`.
    pub fn hessian_hamiltonian(&self, eta: &State) -> Result<Matrix> {
        self.check_bounds(&eta.q)?;
        let (n_m, n_e) = (self.n_m, self.n_e);
        let n = self.dim();
        let w = self.mass(&eta.q).inverse()?;
        let psi = self.elastance(&eta.q);
        let vh = self.potential_hess(&eta.q);
        let mut h = Matrix::zeros(n, n);
        let mut wis: Vec<Matrix> = Vec::with_capacity(n_m);
        let mut mis: Vec<Matrix> = Vec::with_capacity(n_m);
        for i in 0..n_m {
            let mi = self.matrix_d1(&self.mass, &eta.q, i);
            wis.push(w.matmul(&mi).matmul(&w).scale(-1.0));
            mis.push(mi);
        }
        for i in 0..n_m {
            for j in 0..n_m {
                // d2W/dq_i dq_j = W (M_j W M_i + M_i W M_j - M_ij) W
                let mij = self.matrix_d2(&self.mass, &eta.q, i, j);
                let inner = mis[j]
                    .matmul(&w)
                    .matmul(&mis[i])
                    .add(&mis[i].matmul(&w).matmul(&mis[j]))
                    .sub(&mij);
                let wij = w.matmul(&inner).matmul(&w);
                let psij = self.matrix_d2(&self.elastance, &eta.q, i, j);
                h[(i, j)] = 0.5 * wij.quad_form(&eta.p, &eta.p)
                    + vh[(i, j)]
                    + 0.5 * psij.quad_form(&eta.x_e, &eta.x_e);
            }
            let wip = wis[i].matvec(&eta.p);
            for j in 0..n_m {
                h[(i, n_m + j)] = wip[j];
                h[(n_m + j, i)] = wip[j];
            }
            let psii = self.matrix_d1(&self.elastance, &eta.q, i);
            let pix = psii.matvec(&eta.x_e);
            for j in 0..n_e {
                h[(i, 2 * n_m + j)] = pix[j];
                h[(2 * n_m + j, i)] = pix[j];
            }
        }
        h.set_block(n_m, n_m, &w);
        h.set_block(2 * n_m, 2 * n_m, &psi);
        Ok(h)
    }

    /// Open-loop vector field with input `u`.
    pub fn open_loop_field(&self, eta: &State, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n_e {
            return Err(Error::Dimension {
                expected: (self.n_e, 1),
                got: (u.len(), 1),
                what: "input u",
            });
        }
        let g = self.grad_hamiltonian(eta)?;
        Ok(self.field_from_grad(&g, u))
    }

    /// Assemble the field from a precomputed gradient (shared with the
    /// closed-loop consistency checks).
    pub fn field_from_grad(&self, grad: &[f64], u: &[f64]) -> Vec<f64> {
        let (n_m, n_e) = (self.n_m, self.n_e);
        let gq = &grad[..n_m];
        let gp = &grad[n_m..2 * n_m];
        let gx = &grad[2 * n_m..];
        let mut out = vec![0.0; self.dim()];
        out[..n_m].copy_from_slice(gp);
        let rm_gp = self.r_m.matvec(gp);
        for i in 0..n_m {
            out[n_m + i] = -gq[i] - rm_gp[i];
        }
        let je_re = self.j_e.sub(&self.r_e);
        let xdot = je_re.matvec(gx);
        let gu = self.g_e.matvec(u);
        for i in 0..n_e {
            out[2 * n_m + i] = xdot[i] + gu[i];
        }
        out
    }

    /// Natural passive output `y = G_e' ∇_{x_e} H` (used by the passivity test).
    pub fn output(&self, eta: &State) -> Result<Vec<f64>> {
        let g = self.grad_hamiltonian(eta)?;
        Ok(self.g_e.transpose().matvec(&g[2 * self.n_m..]))
    }

    /// `(ok, residual)`: the configuration is an assignable equilibrium iff
    /// `∇_q H = 0` (within `tol`) and `p = 0`.
    pub fn assignable_equilibrium_check(&self, eta: &State, tol: f64) -> Result<(bool, f64)> {
        let g = self.grad_hamiltonian(eta)?;
        let gq_norm = norm2(&g[..self.n_m]);
        let p_norm = norm2(&eta.p);
        Ok((gq_norm <= tol && p_norm == 0.0, gq_norm.max(p_norm)))
    }

    /// Constant input holding an assignable equilibrium:
    /// `ū = G_e⁻¹ (R_e - J_e) Ψ(q_d) x_ed`.
    pub fn equilibrium_input(&self, q_d: &[f64], x_ed: &[f64]) -> Result<Vec<f64>> {
        self.check_bounds(q_d)?;
        let rhs = self.r_e.sub(&self.j_e).matvec(&self.elastance(q_d).matvec(x_ed));
        self.g_e.solve(&rhs)
    }

    /// Electrical state making `q_d` an assignable equilibrium (scalar plants):
    /// solves `V'(q_d) + x² Ψ'(q_d)/2 = 0` for `x >= 0`.
    pub fn equilibrium_electrical_state(&self, q_d: &[f64]) -> Result<Vec<f64>> {
        if self.n_m != 1 || self.n_e != 1 {
            return Err(Error::Config(
                "closed-form equilibrium electrical state needs n_m = n_e = 1".into(),
            ));
        }
        self.check_bounds(q_d)?;
        let vp = self.potential_grad(q_d)[0];
        let dpsi = self.matrix_d1(&self.elastance, q_d, 0)[(0, 0)];
        if dpsi >= 0.0 {
            return Err(Error::Config(
                "elastance must decrease with position for an attracting equilibrium".into(),
            ));
        }
        let x2 = vp / (-0.5 * dpsi);
        if x2 < 0.0 {
            return Err(Error::Infeasible(format!(
                "no real electrical state balances the mechanical force at q_d = {}",
                q_d[0]
            )));
        }
        Ok(vec![x2.sqrt()])
    }

    /// Rate of change of the stored energy along the open-loop field; equals
    /// `u' y` minus dissipation for a true pH model.
    pub fn energy_rate(&self, eta: &State, u: &[f64]) -> Result<f64> {
        let g = self.grad_hamiltonian(eta)?;
        let f = self.field_from_grad(&g, u);
        Ok(dot(&g, &f))
    }
}

/// Optical-switch (electrostatic MEMS) parameters; defaults are the values
/// used throughout the case study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemsParams {
    pub c0: f64,
    pub c1: f64,
    pub mass: f64,
    pub a1: f64,
    pub a2: f64,
    pub r_m: f64,
    pub r_e: f64,
}

impl Default for MemsParams {
    fn default() -> Self {
        MemsParams {
            c0: 15e-6,
            c1: 35.6e-9,
            mass: 2.35e-9,
            a1: 0.46,
            a2: 0.0973,
            r_m: 5.5e-7,
            r_e: 100.0,
        }
    }
}

/// Magnetic-levitation parameters; defaults are the case-study values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaglevParams {
    pub k: f64,
    pub r_e: f64,
    pub c: f64,
    pub b: f64,
    pub mass: f64,
}

impl Default for MaglevParams {
    fn default() -> Self {
        MaglevParams { k: 0.64042, r_e: 2.25, c: 0.005, b: 0.828, mass: 0.0844 }
    }
}

impl EMPlant {
    /// Electrostatic optical switch: `V = a1 q²/2 + a2 q⁴/4`,
    /// `Ψ = 1/(c1 (q + c0))`, `R_e = G_e = 1/r_e`.
    pub fn mems_optical_switch(p: MemsParams) -> Result<EMPlant> {
        let MemsParams { c0, c1, mass, a1, a2, r_m, r_e } = p;
        let elastance = MatrixMap {
            value: Box::new(move |q: &[f64]| Matrix::scalar(1.0 / (c1 * (q[0] + c0)))),
            d1: Some(Box::new(move |q: &[f64], _| {
                let d = q[0] + c0;
                Matrix::scalar(-1.0 / (c1 * d * d))
            })),
            d2: Some(Box::new(move |q: &[f64], _, _| {
                let d = q[0] + c0;
                Matrix::scalar(2.0 / (c1 * d * d * d))
            })),
        };
        let potential = ScalarMap {
            value: Box::new(move |q: &[f64]| 0.5 * a1 * q[0] * q[0] + 0.25 * a2 * q[0].powi(4)),
            grad: Some(Box::new(move |q: &[f64]| vec![a1 * q[0] + a2 * q[0].powi(3)])),
            hess: Some(Box::new(move |q: &[f64]| Matrix::scalar(a1 + 3.0 * a2 * q[0] * q[0]))),
        };
        EMPlant::new(
            "mems-optical-switch",
            1,
            1,
            MatrixMap::constant(Matrix::scalar(mass)),
            potential,
            elastance,
            Matrix::scalar(r_m),
            Matrix::scalar(0.0),
            Matrix::scalar(1.0 / r_e),
            Matrix::scalar(1.0 / r_e),
            vec![(-c0, f64::INFINITY)],
            vec![c0],
        )
    }

    /// Magnetic levitation: `V = b q`, `Ψ = (c - q)/k`, `G_e = 1`, requires `q < c`.
    pub fn maglev(p: MaglevParams) -> Result<EMPlant> {
        let MaglevParams { k, r_e, c, b, mass } = p;
        let elastance = MatrixMap {
            value: Box::new(move |q: &[f64]| Matrix::scalar((c - q[0]) / k)),
            d1: Some(Box::new(move |_: &[f64], _| Matrix::scalar(-1.0 / k))),
            d2: Some(Box::new(move |_: &[f64], _, _| Matrix::scalar(0.0))),
        };
        let potential = ScalarMap {
            value: Box::new(move |q: &[f64]| b * q[0]),
            grad: Some(Box::new(move |_: &[f64]| vec![b])),
            hess: Some(Box::new(move |_: &[f64]| Matrix::scalar(0.0))),
        };
        EMPlant::new(
            "maglev",
            1,
            1,
            MatrixMap::constant(Matrix::scalar(mass)),
            potential,
            elastance,
            Matrix::scalar(0.0),
            Matrix::scalar(0.0),
            Matrix::scalar(r_e),
            Matrix::scalar(1.0),
            vec![(f64::NEG_INFINITY, c)],
            vec![c],
        )
    }

    /// Built-in plant by name.
    pub fn builtin(name: &str) -> Result<EMPlant> {
        match name {
            "mems-optical-switch" => EMPlant::mems_optical_switch(MemsParams::default()),
            "maglev" => EMPlant::maglev(MaglevParams::default()),
            other => Err(Error::Config(format!("unknown built-in plant '{other}'"))),
        }
    }
}

/// The assignable electrical state for the optical switch at position `q_d`:
/// `x_ed = (c0 + q_d) sqrt(2 c1 q_d (a1 + a2 q_d²))`.
pub fn mems_equilibrium_charge(p: &MemsParams, q_d: f64) -> f64 {
    (p.c0 + q_d) * (2.0 * p.c1 * q_d * (p.a1 + p.a2 * q_d * q_d)).sqrt()
}
