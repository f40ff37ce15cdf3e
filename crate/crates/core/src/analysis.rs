//! Definiteness, Hurwitz and imaginary-axis tests, the pH dissipation
//! (Schur-complement) condition, Lyapunov/Riccati solves, and the
//! convergence-rate bound built on them.

use alloc::format;
use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::eigen::{eigenvalues, spectral_report, sym_eigenvalues, SpectralReport};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default tolerance for the Hurwitz test.
pub const HURWITZ_TOL: f64 = 1e-10;

/// Default tolerance for imaginary-axis detection, relative to `1 + ‖A‖`.
pub fn imaginary_axis_tol(a: &Matrix) -> f64 {
    1e-9 * (1.0 + a.norm_inf())
}

fn warn_if_asymmetric(a: &Matrix, what: &str) {
    if a.asymmetry() > 1e-8 {
        log::warn!("{what}: input asymmetry {:.3e} exceeds 1e-8; symmetrized", a.asymmetry());
    }
}

/// Smallest eigenvalue of the symmetrized input exceeds `tol`.
pub fn is_positive_definite(a: &Matrix, tol: f64) -> Result<bool> {
    a.require_square("positive-definiteness test")?;
    warn_if_asymmetric(a, "is_positive_definite");
    let w = sym_eigenvalues(&a.symmetrize())?;
    Ok(w[0] > tol)
}

/// Smallest eigenvalue of the symmetrized input exceeds `-tol`.
pub fn is_positive_semidefinite(a: &Matrix, tol: f64) -> Result<bool> {
    a.require_square("positive-semidefiniteness test")?;
    warn_if_asymmetric(a, "is_positive_semidefinite");
    let w = sym_eigenvalues(&a.symmetrize())?;
    Ok(w[0] > -tol)
}

/// All eigenvalues strictly in the open left half plane (`max Re < -tol`).
pub fn is_hurwitz(a: &Matrix, tol: f64) -> Result<(bool, SpectralReport)> {
    let report = spectral_report(a, tol)?;
    Ok((report.max_real_part < -tol, report))
}

/// True iff some eigenvalue satisfies `|Re| <= tol`.
pub fn has_imaginary_axis_eigenvalue(a: &Matrix, tol: f64) -> Result<bool> {
    let eigs = eigenvalues(a)?;
    Ok(eigs.iter().any(|e| e.re.abs() <= tol))
}

/// Dissipation condition for the shaped loop:
/// `R_m - D_d' R̄_e^{-1} D_d / 4 ⪰ 0` (strict: `≻ 0`).
///
/// `d_d` maps momenta into the electrical state (n_e x n_m).
pub fn ph_structure_condition(
    r_m: &Matrix,
    d_d: &Matrix,
    r_e_bar: &Matrix,
    strict: bool,
    tol: f64,
) -> Result<bool> {
    r_m.require_square("R_m")?;
    r_e_bar.require_square("R_e_bar")?;
    if d_d.rows() != r_e_bar.rows() || d_d.cols() != r_m.rows() {
        return Err(Error::Dimension {
            expected: (r_e_bar.rows(), r_m.rows()),
            got: (d_d.rows(), d_d.cols()),
            what: "coupled damping D_d",
        });
    }
    if !is_positive_definite(r_e_bar, tol)? {
        return Err(Error::NotPositiveDefinite("R_e_bar in the pH dissipation condition"));
    }
    let inv = r_e_bar.symmetrize().inverse()?;
    let schur = r_m.sub(&d_d.transpose().matmul(&inv).matmul(d_d).scale(0.25));
    if strict {
        is_positive_definite(&schur, tol)
    } else {
        is_positive_semidefinite(&schur, tol)
    }
}

/// Shaped dissipation matrix `B_T = [[R_m, -D_d'/2], [-D_d/2, R̄_e]]`.
pub fn shaped_dissipation(r_m: &Matrix, d_d: &Matrix, r_e_bar: &Matrix) -> Matrix {
    let nm = r_m.rows();
    let ne = r_e_bar.rows();
    let mut bt = Matrix::zeros(nm + ne, nm + ne);
    bt.set_block(0, 0, r_m);
    bt.set_block(0, nm, &d_d.transpose().scale(-0.5));
    bt.set_block(nm, 0, &d_d.scale(-0.5));
    bt.set_block(nm, nm, r_e_bar);
    bt
}

/// The 2n x 2n pencil used by the contraction test:
/// `[[F, γ F F'], [-(γ+ε) I, -F']]`.
pub fn q_test_matrix(f_d: &Matrix, gamma: f64, eps: f64) -> Matrix {
    let n = f_d.rows();
    let mut q = Matrix::zeros(2 * n, 2 * n);
    q.set_block(0, 0, f_d);
    q.set_block(0, n, &f_d.matmul(&f_d.transpose()).scale(gamma));
    q.set_block(n, 0, &Matrix::identity(n).scale(-(gamma + eps)));
    q.set_block(n, n, &f_d.transpose().scale(-1.0));
    q
}

/// Solve `A' X + X A = C` for symmetric `C` via the Kronecker normal system.
/// Requires `λ_i(A) + λ_j(A) != 0` for all pairs (holds when A is Hurwitz).
pub fn solve_lyapunov(a: &Matrix, c: &Matrix) -> Result<Matrix> {
    a.require_square("Lyapunov A")?;
    c.require_square("Lyapunov C")?;
    let n = a.rows();
    if c.rows() != n {
        return Err(Error::Dimension { expected: (n, n), got: (c.rows(), c.cols()), what: "Lyapunov C" });
    }
    // vec(A'X + XA) = (I ⊗ A' + A' ⊗ I) vec(X), column-major vec.
    let m = n * n;
    let mut k = Matrix::zeros(m, m);
    for col in 0..n {
        for row in 0..n {
            let ridx = col * n + row;
            // (A'X)_{row,col} = sum_s A(s,row) X(s,col)
            for s in 0..n {
                k[(ridx, col * n + s)] += a[(s, row)];
            }
            // (XA)_{row,col} = sum_s X(row,s) A(s,col)
            for s in 0..n {
                k[(ridx, s * n + row)] += a[(s, col)];
            }
        }
    }
    let mut rhs = vec![0.0; m];
    for col in 0..n {
        for row in 0..n {
            rhs[col * n + row] = c[(row, col)];
        }
    }
    let x = k.solve(&rhs)?;
    let mut out = Matrix::zeros(n, n);
    for col in 0..n {
        for row in 0..n {
            out[(row, col)] = x[col * n + row];
        }
    }
    Ok(out.symmetrize())
}

/// Residual `‖Ω F + F' Ω + (γ+ε) I + γ Ω F F' Ω‖`, relative to the term scale.
pub fn riccati_residual(omega: &Matrix, f_d: &Matrix, gamma: f64, eps: f64) -> f64 {
    let ff = f_d.matmul(&f_d.transpose());
    let lin = omega.matmul(f_d).add(&f_d.transpose().matmul(omega));
    let quad = omega.matmul(&ff).matmul(omega).scale(gamma);
    let res = lin.add(&quad).add(&Matrix::identity(f_d.rows()).scale(gamma + eps));
    let scale = lin.norm_max().max(quad.norm_max()).max(gamma + eps).max(1.0e-300);
    res.norm_max() / scale
}

/// Solve `Ω F + F' Ω + (γ+ε) I + γ Ω F F' Ω = 0` for the stabilizing
/// positive-definite solution (the one with minimal λmax among the
/// positive-definite solutions, which maximizes the rate bound).
///
/// `γ = 0` reduces to the plain Lyapunov solve. Requires `F` Hurwitz,
/// `0 <= γ < 1`, `ε > 0`.
pub fn solve_riccati(f_d: &Matrix, gamma: f64, eps: f64) -> Result<Matrix> {
    f_d.require_square("Riccati F_d")?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma = {gamma} outside [0, 1)")));
    }
    if eps <= 0.0 {
        return Err(Error::Config(format!("eps = {eps} must be positive")));
    }
    let n = f_d.rows();
    let (hurwitz, rep) = is_hurwitz(f_d, 0.0)?;
    if !hurwitz {
        return Err(Error::Infeasible(format!(
            "F_d is not Hurwitz (max Re = {:.3e})",
            rep.max_real_part
        )));
    }
    let q0 = Matrix::identity(n).scale(gamma + eps);
    // gamma = 0: Lyapunov equation.
    let base = solve_lyapunov(f_d, &q0.scale(-1.0))?;
    if gamma == 0.0 {
        return finish_riccati(base, f_d, gamma, eps);
    }
    // Feasibility gate: the associated pencil must stay off the imaginary axis.
    let q = q_test_matrix(f_d, gamma, eps);
    let tol = 1e-12 * (1.0 + q.norm_inf());
    if has_imaginary_axis_eigenvalue(&q, tol)? {
        return Err(Error::Infeasible(format!(
            "no positive-definite solution for gamma = {gamma:.3e}, eps = {eps:.3e} \
             (pencil has imaginary-axis eigenvalues; reduce eps or gamma)"
        )));
    }
    let s = f_d.matmul(&f_d.transpose()).scale(gamma);
    let mut omega = base;
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        let res_rel = riccati_residual(&omega, f_d, gamma, eps);
        if res_rel < 1e-13 {
            break;
        }
        // Newton step: (F + SΩ)' Δ + Δ (F + SΩ) = -R(Ω)
        let ak = f_d.add(&s.matmul(&omega));
        let lin = omega.matmul(f_d).add(&f_d.transpose().matmul(&omega));
        let quad = omega.matmul(&s).matmul(&omega);
        let r = lin.add(&quad).add(&q0);
        let mut delta = solve_lyapunov(&ak, &r.scale(-1.0))?;
        // damped update if the step grows the residual
        let mut step = 1.0;
        loop {
            let cand = omega.add(&delta.scale(step)).symmetrize();
            let cand_res = riccati_residual(&cand, f_d, gamma, eps);
            if cand_res < last || step < 1.0 / 64.0 {
                omega = cand;
                last = cand_res;
                break;
            }
            step *= 0.5;
        }
        let _ = &mut delta;
    }
    finish_riccati(omega, f_d, gamma, eps)
}

fn finish_riccati(omega: Matrix, f_d: &Matrix, gamma: f64, eps: f64) -> Result<Matrix> {
    let omega = omega.symmetrize();
    let res = riccati_residual(&omega, f_d, gamma, eps);
    if res > 1e-9 {
        return Err(Error::NotConverged { what: "Riccati Newton iteration", iterations: 200 });
    }
    let w = sym_eigenvalues(&omega)?;
    if w[0] <= 0.0 {
        return Err(Error::Infeasible(format!(
            "Riccati solution is not positive definite (lambda_min = {:.3e}); reduce eps",
            w[0]
        )));
    }
    Ok(omega)
}

/// Convergence-rate bound `σ = β₃ ε λ_min(Ω^{-1}) = β₃ ε / λ_max(Ω)`.
///
/// Returns `(σ, λ_min(Ω), λ_max(Ω))` so callers can report both extremes.
pub fn convergence_rate_sigma(omega: &Matrix, beta3: f64, eps: f64) -> Result<(f64, f64, f64)> {
    if beta3 <= 0.0 || eps <= 0.0 {
        return Err(Error::Config(format!("beta3 = {beta3}, eps = {eps} must be positive")));
    }
    let w = sym_eigenvalues(&omega.symmetrize())?;
    let (lmin, lmax) = (w[0], w[w.len() - 1]);
    if lmin <= 0.0 {
        return Err(Error::NotPositiveDefinite("metric Omega in convergence rate"));
    }
    Ok((beta3 * eps / lmax, lmin, lmax))
}

/// Minimum over frequency of `σ_min²(I + iω F^{-1})`.
///
/// The ε-pencil test passes exactly when `γ(γ+ε)` is below this number, so it
/// measures how much Hessian-band spread the contraction test can tolerate
/// (roughly the squared relative damping of the least-damped mode of `F`).
pub fn damping_functional(f: &Matrix) -> Result<f64> {
    f.require_square("damping functional")?;
    let n = f.rows();
    let finv = f.inverse()?;
    let eigs = eigenvalues(f)?;
    let wmax = eigs.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    // sigma_min^2(I + iw Finv) = lambda_min of (I - iw Finv')(I + iw Finv)
    //   = lambda_min of sym(I + w^2 Finv'Finv) + skew part contributions; use
    //   the Hermitian form: G = I + w^2 Finv'Finv + i w (Finv - Finv').
    // For a real-matrix evaluation split G = S + iK with S symmetric, K skew;
    // eigenvalues of the Hermitian G equal those of [[S, -K], [K, S]] (doubled).
    let ftf = finv.transpose().matmul(&finv);
    let skew = finv.sub(&finv.transpose());
    let eval = |w: f64| -> Result<f64> {
        let s = Matrix::identity(n).add(&ftf.scale(w * w));
        let k = skew.scale(w);
        let mut big = Matrix::zeros(2 * n, 2 * n);
        big.set_block(0, 0, &s);
        big.set_block(n, n, &s);
        big.set_block(0, n, &k.scale(-1.0));
        big.set_block(n, 0, &k);
        Ok(sym_eigenvalues(&big)?[0])
    };
    let mut best = eval(0.0)?;
    let samples = 400;
    let hi = 4.0 * wmax.max(1e-12);
    let mut wbest = 0.0;
    for i in 0..=samples {
        let w = hi * (i as f64) / (samples as f64);
        let v = eval(w)?;
        if v < best {
            best = v;
            wbest = w;
        }
    }
    // local refinement by ternary search around the best sample
    let mut lo = (wbest - hi / samples as f64).max(0.0);
    let mut hi2 = wbest + hi / samples as f64;
    for _ in 0..60 {
        let m1 = lo + (hi2 - lo) / 3.0;
        let m2 = hi2 - (hi2 - lo) / 3.0;
        if eval(m1)? < eval(m2)? {
            hi2 = m2;
        } else {
            lo = m1;
        }
    }
    best = best.min(eval(0.5 * (lo + hi2))?);
    Ok(best.max(0.0))
}


/// Largest eigenvalue of a symmetric matrix (symmetrized first).
pub fn sym_max_eigenvalue(a: &Matrix) -> Result<f64> {
    let w = sym_eigenvalues(&a.symmetrize())?;
    Ok(w[w.len() - 1])
}
