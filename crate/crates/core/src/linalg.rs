//! Decompositions the estimators rely on: a complex SVD built on a cyclic
//! Jacobi eigensolver for Hermitian matrices, a relative-cutoff
//! pseudo-inverse, and an eigendecomposition for small diagonalizable
//! complex matrices (Schur for the eigenvalues, null-space extraction for
//! the eigenvectors).
//!
//! The SVD goes through the Gram matrix of the smaller side. Jacobi
//! rotations keep the computed basis unitary to machine precision and the
//! routine is deterministic; the price is that singular values below about
//! 1e-8 of the largest are squared away, which the rank logic accounts for.

use nalgebra::linalg::Schur;

use crate::error::{Error, Result};
use crate::tensor::{C64, CMat, CVec};

/// Singular values below this fraction of the largest are numerically
/// meaningless under the Gram-matrix route.
pub const SV_RELIABLE_REL: f64 = 1e-7;

pub struct SvdParts {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns.
    pub v: CMat,
}

fn check_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical(format!(
            "{what} input contains non-finite values"
        )));
    }
    Ok(())
}

/// Cyclic Jacobi eigendecomposition of a Hermitian matrix. Returns
/// eigenvalues in descending order with matching eigenvector columns.
pub fn hermitian_eigen(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "hermitian_eigen needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    check_finite(h, "eigendecomposition")?;
    let n = h.nrows();
    let mut a = h.clone();
    let mut v = CMat::identity(n, n);
    if n == 1 {
        return Ok((vec![a[(0, 0)].re], v));
    }
    let norm = a.norm().max(f64::MIN_POSITIVE);
    let tol = f64::EPSILON * norm;

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= tol * 1e-2 {
                    continue;
                }
                let phase = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // J[p,p]=c, J[p,q]=s·phase, J[q,p]=−s·conj(phase), J[q,q]=c
                let spq = phase * s;
                // A ← Jᴴ A J, applied as column then row updates
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * spq.conj();
                    a[(k, q)] = akp * spq + akq * c;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - aqk * spq;
                    a[(q, k)] = apk * spq.conj() + aqk * c;
                }
                // force exact Hermitian structure on the pivot entries
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * spq.conj();
                    v[(k, q)] = vkp * spq + vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.partial_cmp(&a[(i, i)].re).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMat::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        let col: CVec = v.column(i).into();
        vectors.set_column(c, &col);
    }
    Ok((eigvals, vectors))
}

/// Thin SVD via the Gram matrix of the smaller side.
pub fn svd(m: &CMat) -> Result<SvdParts> {
    check_finite(m, "SVD")?;
    let (rows, cols) = (m.nrows(), m.ncols());
    let k = rows.min(cols);
    if rows <= cols {
        // G = M Mᴴ, eigenvectors are the left singular vectors
        let g = m * m.adjoint();
        let (lambda, u) = hermitian_eigen(&g)?;
        let mut singular_values = Vec::with_capacity(k);
        let mut v = CMat::zeros(cols, k);
        let u = u.columns(0, k).into_owned();
        for i in 0..k {
            let s = lambda[i].max(0.0).sqrt();
            singular_values.push(s);
            if s > 0.0 {
                let ui: CVec = u.column(i).into();
                let vi = m.adjoint() * ui / C64::new(s, 0.0);
                v.set_column(i, &vi);
            }
        }
        Ok(SvdParts {
            u,
            singular_values,
            v,
        })
    } else {
        let g = m.adjoint() * m;
        let (lambda, v) = hermitian_eigen(&g)?;
        let mut singular_values = Vec::with_capacity(k);
        let mut u = CMat::zeros(rows, k);
        let v = v.columns(0, k).into_owned();
        for i in 0..k {
            let s = lambda[i].max(0.0).sqrt();
            singular_values.push(s);
            if s > 0.0 {
                let vi: CVec = v.column(i).into();
                let ui = m * vi / C64::new(s, 0.0);
                u.set_column(i, &ui);
            }
        }
        Ok(SvdParts {
            u,
            singular_values,
            v,
        })
    }
}

/// Moore-Penrose pseudo-inverse with a singular-value cutoff relative to the
/// largest singular value.
pub fn pinv(m: &CMat, rel_cutoff: f64) -> Result<CMat> {
    let parts = svd(m)?;
    let smax = parts.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = CMat::zeros(m.ncols(), m.nrows());
    if smax == 0.0 {
        return Ok(out);
    }
    for (i, &s) in parts.singular_values.iter().enumerate() {
        if s > rel_cutoff * smax {
            let vi = parts.v.column(i);
            let ui = parts.u.column(i);
            let scale = C64::new(1.0 / s, 0.0);
            for r in 0..out.nrows() {
                for c in 0..out.ncols() {
                    out[(r, c)] += vi[r] * scale * ui[c].conj();
                }
            }
        }
    }
    Ok(out)
}

/// Two-norm condition number.
pub fn cond2(m: &CMat) -> Result<f64> {
    let sv = svd(m)?.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Eigendecomposition of a small diagonalizable complex matrix. Eigenvalues
/// come from the complex Schur form (normalized first; the iteration's
/// threshold is absolute); each eigenvector is the null direction of
/// (A − λI) taken from its smallest singular vector. Intended for the L × L
/// shift-invariance matrices whose eigenvalues are distinct.
pub fn eig_small(a: &CMat) -> Result<(Vec<C64>, CMat)> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a, "eigendecomposition")?;
    let n = a.nrows();
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let work = if scale > 0.0 {
        a / C64::new(scale, 0.0)
    } else {
        a.clone()
    };
    let schur = Schur::try_new(work, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let back = if scale > 0.0 { scale } else { 1.0 };
    let eigvals: Vec<C64> = (0..n).map(|i| t[(i, i)] * back).collect();

    let mut vectors = CMat::zeros(n, n);
    let eye = CMat::identity(n, n);
    for (i, &lambda) in eigvals.iter().enumerate() {
        let shifted = a - &eye * lambda;
        // right null vector straight from the adjoint-side Gram matrix; the
        // generic SVD would reconstruct it by dividing by the near-zero
        // singular value
        let gram = shifted.adjoint() * &shifted;
        let (_, basis) = hermitian_eigen(&gram)?;
        let v: CVec = basis.column(n - 1).into();
        vectors.set_column(i, &v);
    }
    // residual guard: a silent bad eigenpair would corrupt everything
    // downstream, so surface it as a typed error instead
    let anorm = a.norm().max(f64::MIN_POSITIVE);
    for i in 0..n {
        let v: CVec = vectors.column(i).into();
        let resid = (a * &v - &v * eigvals[i]).norm();
        if !(resid <= 1e-6 * anorm) {
            return Err(Error::Numerical(format!(
                "eigenpair {i} residual {resid:.3e} exceeds tolerance"
            )));
        }
    }
    Ok((eigvals, vectors))
}

/// Dominant singular triplet (σ₁, u₁, v₁).
pub fn dominant_triplet(m: &CMat) -> Result<(f64, CVec, CVec)> {
    let parts = svd(m)?;
    let imax = parts
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numerical("empty SVD".into()))?;
    Ok((
        parts.singular_values[imax],
        parts.u.column(imax).into(),
        parts.v.column(imax).into(),
    ))
}

/// Solve the Hermitian system G X = RHS, adding a relative ridge on the
/// diagonal if the plain Cholesky factorization fails. Returns the solution
/// and whether the ridge was needed.
pub fn hermitian_solve_with_ridge(g: &CMat, rhs: &CMat, ridge_rel: f64) -> Result<(CMat, bool)> {
    let finite = |m: &CMat| m.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    if let Some(chol) = g.clone().cholesky() {
        let x = chol.solve(rhs);
        if finite(&x) {
            return Ok((x, false));
        }
    }
    let scale = g.diagonal().iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Singular("normal equations are zero or non-finite".into()));
    }
    let ridged = g + CMat::identity(g.nrows(), g.ncols()) * C64::new(ridge_rel * scale, 0.0);
    let chol = ridged
        .cholesky()
        .ok_or_else(|| Error::Singular("normal equations not positive definite".into()))?;
    let x = chol.solve(rhs);
    if !finite(&x) {
        return Err(Error::Singular("ridged solve produced non-finite values".into()));
    }
    Ok((x, true))
}
