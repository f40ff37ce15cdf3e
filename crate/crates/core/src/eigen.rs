//! Eigenvalue kernels: cyclic Jacobi for symmetric matrices and a balanced
//! Hessenberg + Francis double-shift QR iteration for general real matrices.
//!
//! Matrices in this crate are small (at most ~12x12), so plain dense
//! iterations are used. Accuracy is pinned by the characteristic-polynomial
//! residual property tests rather than by the method.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A real/imaginary pair; just enough complex arithmetic for spectra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Eigenvalues of a general real square matrix, plus the extreme real parts.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex>,
    pub max_real_part: f64,
    pub min_real_part: f64,
    pub tolerance_used: f64,
}

impl SpectralReport {
    fn from_eigs(eigs: Vec<Complex>, tol: f64) -> Self {
        let max_real_part = eigs.iter().fold(f64::NEG_INFINITY, |a, e| a.max(e.re));
        let min_real_part = eigs.iter().fold(f64::INFINITY, |a, e| a.min(e.re));
        SpectralReport { eigenvalues: eigs, max_real_part, min_real_part, tolerance_used: tol }
    }
}

/// Eigenvalues and orthonormal eigenvectors of a symmetric matrix by cyclic
/// Jacobi sweeps. Input is symmetrized first. Eigenvalues come back ascending,
/// vectors as the columns of the second return value.
pub fn sym_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    a.require_square("symmetric eigensolve")?;
    let n = a.rows();
    let mut m = a.symmetrize();
    let mut v = Matrix::identity(n);
    if n == 1 {
        return Ok((vec![m[(0, 0)]], v));
    }
    let max_sweeps = 64;
    for sweep in 0..max_sweeps {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        let scale = m.norm_max().max(1e-300);
        if off <= f64::EPSILON * scale {
            break;
        }
        if sweep == max_sweeps - 1 {
            return Err(Error::NotConverged { what: "Jacobi eigensolve", iterations: max_sweeps });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 0.25 * f64::EPSILON * scale {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut evals: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    order.sort_by(|&i, &j| evals[i].partial_cmp(&evals[j]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
    let mut vs = Matrix::zeros(n, n);
    for (newcol, &oldcol) in order.iter().enumerate() {
        for r in 0..n {
            vs[(r, newcol)] = v[(r, oldcol)];
        }
    }
    evals = sorted;
    Ok((evals, vs))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    Ok(sym_eigen(a)?.0)
}

/// Symmetric square root A^{1/2} (A must be positive definite).
pub fn sym_sqrt(a: &Matrix) -> Result<Matrix> {
    let (w, v) = sym_eigen(a)?;
    if w[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite("matrix square root"));
    }
    scaled_congruence(&v, &w, |x| x.sqrt())
}

/// Symmetric inverse square root A^{-1/2}.
pub fn sym_inv_sqrt(a: &Matrix) -> Result<Matrix> {
    let (w, v) = sym_eigen(a)?;
    if w[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite("matrix inverse square root"));
    }
    scaled_congruence(&v, &w, |x| 1.0 / x.sqrt())
}

fn scaled_congruence(v: &Matrix, w: &[f64], f: impl Fn(f64) -> f64) -> Result<Matrix> {
    let n = w.len();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v[(i, k)] * f(w[k]) * v[(j, k)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Eigenvalues of a general real matrix.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex>> {
    a.require_square("eigensolve")?;
    let n = a.rows();
    if !a.is_finite() {
        return Err(Error::Config(alloc::format!("non-finite entries in {n}x{n} eigensolve input")));
    }
    match n {
        1 => return Ok(vec![Complex::new(a[(0, 0)], 0.0)]),
        2 => return Ok(eig2(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]).to_vec()),
        _ => {}
    }
    let mut h = a.clone();
    balance(&mut h);
    hessenberg(&mut h);
    hqr(&mut h)
}

pub fn spectral_report(a: &Matrix, tol: f64) -> Result<SpectralReport> {
    Ok(SpectralReport::from_eigs(eigenvalues(a)?, tol))
}

fn eig2(a: f64, b: f64, c: f64, d: f64) -> [Complex; 2] {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // stable pairing: take the larger-magnitude root first
        let l1 = 0.5 * tr + if tr >= 0.0 { r } else { -r };
        let l2 = if l1 != 0.0 { det / l1 } else { 0.5 * tr - r };
        [Complex::new(l1, 0.0), Complex::new(l2, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex::new(0.5 * tr, im), Complex::new(0.5 * tr, -im)]
    }
}

/// Parlett-Reinsch balancing (similarity scaling by powers of 2).
fn balance(a: &mut Matrix) {
    let n = a.rows();
    let radix: f64 = 2.0;
    let sqrdx = radix * radix;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / radix;
                let mut f = 1.0;
                let s = c + r;
                let mut cc = c;
                while cc < g {
                    f *= radix;
                    cc *= sqrdx;
                }
                g = r * radix;
                while cc > g {
                    f /= radix;
                    cc /= sqrdx;
                }
                if (cc + r) / f < 0.95 * s {
                    done = false;
                    let ginv = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= ginv;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Householder reduction to upper Hessenberg form (in place, eigenvalues only).
fn hessenberg(a: &mut Matrix) {
    let n = a.rows();
    for k in 1..n.saturating_sub(1) {
        let mut scale = 0.0f64;
        for i in k..n {
            scale += a[(i, k - 1)].abs();
        }
        if scale == 0.0 {
            continue;
        }
        let mut h = 0.0;
        let mut v = vec![0.0; n];
        for i in (k..n).rev() {
            v[i] = a[(i, k - 1)] / scale;
            h += v[i] * v[i];
        }
        let g = if v[k] >= 0.0 { -h.sqrt() } else { h.sqrt() };
        h -= v[k] * g;
        v[k] -= g;
        // apply P = I - vv'/h from both sides
        for j in 0..n {
            let mut f = 0.0;
            for i in (k..n).rev() {
                f += v[i] * a[(i, j)];
            }
            f /= h;
            for i in k..n {
                a[(i, j)] -= f * v[i];
            }
        }
        for i in 0..n {
            let mut f = 0.0;
            for j in (k..n).rev() {
                f += v[j] * a[(i, j)];
            }
            f /= h;
            for j in k..n {
                a[(i, j)] -= f * v[j];
            }
        }
        a[(k, k - 1)] = scale * g;
        for i in (k + 1)..n {
            a[(i, k - 1)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
fn hqr(a: &mut Matrix) -> Result<Vec<Complex>> {
    let n = a.rows();
    let mut eigs = vec![Complex::new(0.0, 0.0); n];
    let mut anorm = 0.0f64;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    if anorm == 0.0 {
        return Ok(eigs);
    }
    let mut t = 0.0f64;
    let mut nn = n as isize - 1;
    let total_budget = 40 * n + 100;
    let mut total_its = 0usize;
    while nn >= 0 {
        let mut its = 0;
        loop {
            // search for a negligible subdiagonal element
            let mut l = nn;
            while l >= 1 {
                let s = a[((l - 1) as usize, (l - 1) as usize)].abs()
                    + a[(l as usize, l as usize)].abs();
                let s = if s == 0.0 { anorm } else { s };
                if a[(l as usize, (l - 1) as usize)].abs() <= f64::EPSILON * s {
                    a[(l as usize, (l - 1) as usize)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let x = a[(nn as usize, nn as usize)];
            if l == nn {
                eigs[nn as usize] = Complex::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let y = a[((nn - 1) as usize, (nn - 1) as usize)];
            let w = a[(nn as usize, (nn - 1) as usize)] * a[((nn - 1) as usize, nn as usize)];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                let xx = x + t;
                if q >= 0.0 {
                    let z = p + if p >= 0.0 { z } else { -z };
                    let l1 = xx + z;
                    let l2 = if z != 0.0 { xx - w / z } else { l1 };
                    eigs[(nn - 1) as usize] = Complex::new(l1, 0.0);
                    eigs[nn as usize] = Complex::new(l2, 0.0);
                } else {
                    eigs[(nn - 1) as usize] = Complex::new(xx + p, z);
                    eigs[nn as usize] = Complex::new(xx + p, -z);
                }
                nn -= 2;
                break;
            }
            if total_its >= total_budget {
                return Err(Error::NotConverged { what: "QR eigensolve", iterations: total_its });
            }
            let (mut x, mut y, mut w) = (x, y, w);
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 0..=nn as usize {
                    a[(i, i)] -= x;
                }
                let s = a[(nn as usize, (nn - 1) as usize)].abs()
                    + a[((nn - 1) as usize, (nn - 2) as usize)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total_its += 1;
            // look for two consecutive small subdiagonal elements
            let mut m = nn - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[(m as usize, m as usize)];
                let rr = x - z;
                let s = y - z;
                p = (rr * s - w) / a[((m + 1) as usize, m as usize)] + a[(m as usize, (m + 1) as usize)];
                q = a[((m + 1) as usize, (m + 1) as usize)] - z - rr - s;
                r = a[((m + 2) as usize, (m + 1) as usize)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m as usize, (m - 1) as usize)].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (a[((m - 1) as usize, (m - 1) as usize)].abs()
                        + z.abs()
                        + a[((m + 1) as usize, (m + 1) as usize)].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                a[(i as usize, (i - 2) as usize)] = 0.0;
                if i > m + 2 {
                    a[(i as usize, (i - 3) as usize)] = 0.0;
                }
            }
            // double QR step over rows l..nn, columns m..nn
            for k in m..=(nn - 1) {
                if k != m {
                    p = a[(k as usize, (k - 1) as usize)];
                    q = a[((k + 1) as usize, (k - 1) as usize)];
                    r = if k != nn - 1 { a[((k + 2) as usize, (k - 1) as usize)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s0 = (p * p + q * q + r * r).sqrt();
                let s = if p >= 0.0 { s0 } else { -s0 };
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        a[(k as usize, (k - 1) as usize)] = -a[(k as usize, (k - 1) as usize)];
                    }
                } else {
                    a[(k as usize, (k - 1) as usize)] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                for j in (k as usize)..=(nn as usize) {
                    let mut pp = a[(k as usize, j)] + q * a[((k + 1) as usize, j)];
                    if k != nn - 1 {
                        pp += r * a[((k + 2) as usize, j)];
                        a[((k + 2) as usize, j)] -= pp * z;
                    }
                    a[((k + 1) as usize, j)] -= pp * y;
                    a[(k as usize, j)] -= pp * x;
                }
                let mmin = if nn < k + 3 { nn } else { k + 3 };
                for i in (l as usize)..=(mmin as usize) {
                    let mut pp = x * a[(i, k as usize)] + y * a[(i, (k + 1) as usize)];
                    if k != nn - 1 {
                        pp += z * a[(i, (k + 2) as usize)];
                        a[(i, (k + 2) as usize)] -= pp * r;
                    }
                    a[(i, (k + 1) as usize)] -= pp * q;
                    a[(i, k as usize)] -= pp;
                }
            }
        }
    }
    Ok(eigs)
}
