//! Independent oracles for the dense spectral kernels: characteristic
//! polynomial residuals via a complex LU determinant, a cross-check against a
//! second eigensolver, congruence invariance, and Riccati/Lyapunov residuals.

use nalgebra::DMatrix;
use phem_core::analysis::{
    has_imaginary_axis_eigenvalue, imaginary_axis_tol, is_positive_definite,
    is_positive_semidefinite, ph_structure_condition, riccati_residual, solve_lyapunov,
    solve_riccati,
};
use phem_core::eigen::eigenvalues;
use phem_core::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = scale * (rng.gen::<f64>() * 2.0 - 1.0);
        }
    }
    m
}

// ---- complex determinant oracle -------------------------------------------

type C = (f64, f64);

fn cmul(a: C, b: C) -> C {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn cdiv(a: C, b: C) -> C {
    let d = b.0 * b.0 + b.1 * b.1;
    ((a.0 * b.0 + a.1 * b.1) / d, (a.1 * b.0 - a.0 * b.1) / d)
}

fn cabs(a: C) -> f64 {
    a.0.hypot(a.1)
}

/// |det(λI - A)| by complex Gaussian elimination with partial pivoting.
fn charpoly_abs(a: &Matrix, lambda: C) -> f64 {
    let n = a.rows();
    let mut m: Vec<Vec<C>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = if i == j { lambda } else { (0.0, 0.0) };
                    (d.0 - a[(i, j)], d.1)
                })
                .collect()
        })
        .collect();
    let mut det: C = (1.0, 0.0);
    for k in 0..n {
        let mut piv = k;
        for i in (k + 1)..n {
            if cabs(m[i][k]) > cabs(m[piv][k]) {
                piv = i;
            }
        }
        if cabs(m[piv][k]) == 0.0 {
            return 0.0;
        }
        if piv != k {
            m.swap(piv, k);
            det = (-det.0, -det.1);
        }
        det = cmul(det, m[k][k]);
        for i in (k + 1)..n {
            let f = cdiv(m[i][k], m[k][k]);
            for j in k..n {
                let s = cmul(f, m[k][j]);
                m[i][j] = (m[i][j].0 - s.0, m[i][j].1 - s.1);
            }
        }
    }
    cabs(det)
}

#[test]
fn eigenvalues_have_small_charpoly_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..100 {
        let n = 2 + (trial % 7);
        let a = random_matrix(&mut rng, n, 3.0);
        let norm = a.norm_inf().max(1.0);
        let eigs = eigenvalues(&a).unwrap();
        assert_eq!(eigs.len(), n);
        for e in &eigs {
            let res = charpoly_abs(&a, (e.re, e.im));
            let bound = 1e-8 * norm.powi(n as i32);
            assert!(res < bound, "trial {trial}: residual {res} vs bound {bound}");
        }
    }
}

#[test]
fn eigenvalues_match_reference_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..60 {
        let n = 2 + (trial % 6);
        let a = random_matrix(&mut rng, n, 2.0);
        let mut ours = eigenvalues(&a).unwrap();
        let na = DMatrix::from_fn(n, n, |i, j| a[(i, j)]);
        let mut theirs: Vec<(f64, f64)> =
            na.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
        let key = |x: &(f64, f64)| (x.0, x.1);
        ours.sort_by(|p, q| key(&(p.re, p.im)).partial_cmp(&key(&(q.re, q.im))).unwrap());
        theirs.sort_by(|p, q| key(p).partial_cmp(&key(q)).unwrap());
        for (o, t) in ours.iter().zip(&theirs) {
            let d = (o.re - t.0).hypot(o.im - t.1);
            assert!(
                d < 1e-7 * a.norm_inf().max(1.0),
                "trial {trial}: {o:?} vs {t:?} (gap {d})"
            );
        }
    }
}

#[test]
fn definiteness_is_congruence_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let a = Matrix::from_rows(&[&[2.0, 0.4, 0.0], &[0.4, 1.5, -0.2], &[0.0, -0.2, 3.0]]);
    assert!(is_positive_definite(&a, 1e-12).unwrap());
    let mut done = 0;
    while done < 100 {
        let p = random_matrix(&mut rng, 3, 1.0);
        if p.lu().is_err() {
            continue;
        }
        let congruent = p.transpose().matmul(&a).matmul(&p);
        assert!(is_positive_definite(&congruent, 0.0).unwrap(), "trial {done}");
        done += 1;
    }
}

#[test]
fn ph_condition_with_zero_coupling_reduces_to_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for trial in 0..50 {
        let n = 1 + trial % 3;
        let s = random_matrix(&mut rng, n, 1.0);
        let r_m = s.add(&s.transpose()).scale(0.5);
        let r_e_bar = Matrix::identity(n);
        let zero = Matrix::zeros(n, n);
        let lhs = ph_structure_condition(&r_m, &zero, &r_e_bar, false, 1e-12).unwrap();
        let rhs = is_positive_semidefinite(&r_m, 1e-12).unwrap();
        assert_eq!(lhs, rhs, "trial {trial}");
    }
}

#[test]
fn imaginary_axis_test_is_transpose_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..60 {
        let n = 2 + trial % 5;
        let a = random_matrix(&mut rng, n, 2.0);
        let tol = imaginary_axis_tol(&a);
        let fwd = has_imaginary_axis_eigenvalue(&a, tol).unwrap();
        let bwd = has_imaginary_axis_eigenvalue(&a.transpose(), tol).unwrap();
        assert_eq!(fwd, bwd, "trial {trial}");
    }
}

#[test]
fn riccati_matrix_cases_satisfy_residual_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut solved = 0;
    for trial in 0..40 {
        let n = 2 + trial % 3;
        // well-damped stable matrix: -I - SS' + skew perturbation
        let s = random_matrix(&mut rng, n, 0.4);
        let skew = s.sub(&s.transpose()).scale(0.5);
        let f = Matrix::identity(n).scale(-1.0).add(&skew);
        let gamma = 0.3 + 0.4 * rng.gen::<f64>();
        let eps = 0.05 + 0.2 * rng.gen::<f64>();
        match solve_riccati(&f, gamma, eps) {
            Ok(omega) => {
                solved += 1;
                let res = riccati_residual(&omega, &f, gamma, eps);
                assert!(res < 1e-9, "trial {trial}: residual {res}");
                assert!(omega.sub(&omega.transpose()).norm_max() < 1e-12);
                assert!(is_positive_definite(&omega, 0.0).unwrap());
            }
            Err(e) => panic!("trial {trial}: well-damped case should solve, got {e}"),
        }
    }
    assert_eq!(solved, 40);
}

#[test]
fn lyapunov_residuals_on_random_stable_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for trial in 0..40 {
        let n = 2 + trial % 5;
        let s = random_matrix(&mut rng, n, 0.5);
        let a = Matrix::identity(n).scale(-1.5).add(&s);
        if a.lu().is_err() {
            continue;
        }
        let c0 = random_matrix(&mut rng, n, 1.0);
        let c = c0.add(&c0.transpose()).scale(-0.5);
        if let Ok(x) = solve_lyapunov(&a, &c) {
            let res = a.transpose().matmul(&x).add(&x.matmul(&a)).sub(&c);
            assert!(
                res.norm_max() < 1e-9 * (1.0 + x.norm_max()) * (1.0 + a.norm_max()),
                "trial {trial}: residual {}",
                res.norm_max()
            );
        }
    }
}
