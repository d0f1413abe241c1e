//! Eigen and singular-value kernels.
//!
//! Dense decompositions are used up to [`DENSE_EIG_CAP`], exploiting
//! block-diagonal structure when the sparsity pattern decomposes into
//! connected components. Above the cap, a Lanczos iteration with full
//! reorthogonalization runs on matrix-free operators (shift-invert through a
//! direct factorization for smallest singular values).

use crate::dense::{hermitian_eig, hermitian_part, thin_svd, DirectSolver};
use crate::error::{Error, Result};
use crate::sparse::CscMatrix;
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

/// Largest dimension handled by dense decompositions.
pub const DENSE_EIG_CAP: usize = 2000;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Eigensolver routing for smallest-singular-value computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    /// Dense below [`DENSE_EIG_CAP`], iterative above.
    Auto,
    Dense,
    Iterative,
}

// ---------------------------------------------------------------------------
// deterministic start vectors

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn seeded_unit_vector(n: usize, seed: u64) -> Vec<Complex64> {
    let mut s = seed ^ (n as u64).wrapping_mul(0xA24BAED4963EE407);
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| {
            let re = (splitmix(&mut s) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let im = (splitmix(&mut s) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            Complex64::new(re, im)
        })
        .collect();
    let nrm = vec_norm(&v);
    for z in &mut v {
        *z /= nrm;
    }
    v
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

// ---------------------------------------------------------------------------
// symmetric tridiagonal eigensolver (implicit QL with shifts)

/// Eigendecomposition of a symmetric tridiagonal matrix. Returns ascending
/// eigenvalues and the eigenvector matrix stored row-major (`z[i*n + j]` is
/// component `i` of eigenvector `j`).
pub fn symtridiag_eig(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    assert!(n >= 1 && off.len() + 1 == n);
    let mut d = diag.to_vec();
    let mut e = vec![0.0f64; n];
    e[..n - 1].copy_from_slice(off);
    let mut z = vec![0.0f64; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    let eps = f64::EPSILON;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Eigen("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    // sort ascending, permuting vectors
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&j| d[j]).collect();
    let mut zs = vec![0.0f64; n * n];
    for (jnew, &jold) in order.iter().enumerate() {
        for i in 0..n {
            zs[i * n + jnew] = z[i * n + jold];
        }
    }
    Ok((vals, zs))
}

// ---------------------------------------------------------------------------
// Lanczos with full reorthogonalization

pub struct RitzPair {
    pub value: f64,
    pub vector: Vec<Complex64>,
    pub residual: f64,
}

pub struct LanczosExtremes {
    pub lo: RitzPair,
    pub hi: RitzPair,
    pub iterations: usize,
    pub converged: bool,
}

/// Which end(s) of the spectrum the iteration must converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhichEnd {
    Smallest,
    Largest,
    Both,
}

/// Extreme eigenpairs of a Hermitian operator by Lanczos iteration with full
/// reorthogonalization. On exact breakdown the Krylov space is invariant and
/// the current Ritz extremes are returned as converged.
pub fn lanczos_extremes(
    op: &dyn Fn(&[Complex64], &mut [Complex64]),
    n: usize,
    which: WhichEnd,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<LanczosExtremes> {
    assert!(n >= 1);
    let max_iter = max_iter.min(n).max(1);
    let mut q_basis: Vec<Vec<Complex64>> = vec![seeded_unit_vector(n, seed)];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut work = vec![ZERO; n];

    let ritz = |alphas: &[f64], betas: &[f64], beta_next: f64, q_basis: &[Vec<Complex64>]| -> Result<(RitzPair, RitzPair)> {
        let k = alphas.len();
        let (vals, z) = symtridiag_eig(alphas, betas)?;
        let build = |idx: usize| -> RitzPair {
            let mut v = vec![ZERO; n];
            for (j, qj) in q_basis.iter().take(k).enumerate() {
                let w = z[j * k + idx];
                if w != 0.0 {
                    for (vi, qi) in v.iter_mut().zip(qj) {
                        *vi += qi * w;
                    }
                }
            }
            let nrm = vec_norm(&v);
            if nrm > 0.0 {
                for x in &mut v {
                    *x /= nrm;
                }
            }
            RitzPair {
                value: vals[idx],
                vector: v,
                residual: beta_next * z[(k - 1) * k + idx].abs(),
            }
        };
        Ok((build(0), build(k - 1)))
    };

    let mut beta_prev = 0.0f64;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let k = alphas.len(); // index of current vector
        let q = &q_basis[k];
        op(q, &mut work);
        let alpha = dot_conj(q, &work).re;
        alphas.push(alpha);
        // three-term update then full reorthogonalization (two passes)
        {
            let qk = &q_basis[k];
            for (w, qi) in work.iter_mut().zip(qk) {
                *w -= qi * alpha;
            }
        }
        if k > 0 {
            let qm = &q_basis[k - 1];
            for (w, qi) in work.iter_mut().zip(qm) {
                *w -= qi * beta_prev;
            }
        }
        for _ in 0..2 {
            for qi in &q_basis {
                let h = dot_conj(qi, &work);
                if h != ZERO {
                    for (w, qv) in work.iter_mut().zip(qi) {
                        *w -= qv * h;
                    }
                }
            }
        }
        let beta = vec_norm(&work);

        let scale_est = alphas
            .iter()
            .map(|a| a.abs())
            .fold(beta, f64::max)
            .max(f64::MIN_POSITIVE);
        let breakdown = beta <= 1e-14 * scale_est;
        let check_now = breakdown
            || alphas.len() == max_iter
            || alphas.len() % 10 == 0
            || alphas.len() <= 2;
        if check_now {
            let (lo, hi) = ritz(&alphas, &betas, beta, &q_basis)?;
            let conv_scale = lo.value.abs().max(hi.value.abs()).max(1e-300);
            let ok = match which {
                WhichEnd::Smallest => lo.residual <= tol * conv_scale,
                WhichEnd::Largest => hi.residual <= tol * conv_scale,
                WhichEnd::Both => {
                    lo.residual <= tol * conv_scale && hi.residual <= tol * conv_scale
                }
            };
            if ok || breakdown || alphas.len() == max_iter {
                return if ok || breakdown {
                    Ok(LanczosExtremes {
                        lo,
                        hi,
                        iterations,
                        converged: true,
                    })
                } else {
                    Err(Error::Eigen(format!(
                        "Lanczos hit iteration cap {max_iter}: residuals lo={:.3e} hi={:.3e} (tol {:.1e}, scale {:.3e})",
                        lo.residual, hi.residual, tol, conv_scale
                    )))
                };
            }
        }
        betas.push(beta);
        let mut qn = std::mem::replace(&mut work, vec![ZERO; n]);
        for x in &mut qn {
            *x /= beta;
        }
        q_basis.push(qn);
        beta_prev = beta;
    }
}

// ---------------------------------------------------------------------------
// structured dense helpers

fn gather_dense(m: &CscMatrix, idx: &[usize]) -> Array2<Complex64> {
    let pos: std::collections::HashMap<usize, usize> =
        idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut d = Array2::zeros((idx.len(), idx.len()));
    for (r, c, v) in m.iter() {
        if let (Some(&ri), Some(&ci)) = (pos.get(&r), pos.get(&c)) {
            d[(ri, ci)] += v;
        }
    }
    d
}

/// Smallest singular value and right singular vector via dense SVD, applied
/// per connected component of the sparsity pattern.
fn smallest_sigma_dense(m: &CscMatrix) -> Result<(f64, Vec<Complex64>)> {
    let n = m.nrows();
    let comps = m.pattern_components();
    let mut best = f64::INFINITY;
    let mut vec_out = vec![ZERO; n];
    for comp in &comps {
        let sub = gather_dense(m, comp);
        let (_, s, vt) = thin_svd(&sub)?;
        let k = s.len() - 1;
        if s[k] < best {
            best = s[k];
            vec_out.iter_mut().for_each(|z| *z = ZERO);
            for (local, &global) in comp.iter().enumerate() {
                vec_out[global] = vt[(k, local)].conj();
            }
        }
    }
    Ok((best, vec_out))
}

/// Smallest singular value `sigma_min(M)` with its right singular vector.
pub fn smallest_sigma(m: &CscMatrix, mode: SigmaMode) -> Result<(f64, Vec<Complex64>)> {
    if !m.is_square() {
        return Err(Error::Dimension("smallest_sigma needs a square matrix".into()));
    }
    let n = m.nrows();
    let dense = match mode {
        SigmaMode::Dense => true,
        SigmaMode::Iterative => false,
        SigmaMode::Auto => n <= DENSE_EIG_CAP,
    };
    if dense {
        return smallest_sigma_dense(m);
    }
    // shift-invert at zero: largest eigenvalue of (M^* M)^{-1}
    let lu = DirectSolver::factor(m)?;
    let op = move |x: &[Complex64], y: &mut [Complex64]| {
        let mut t = x.to_vec();
        lu.solve_conj_transpose(&mut t);
        lu.solve(&mut t);
        y.copy_from_slice(&t);
    };
    let res = lanczos_extremes(&op, n, WhichEnd::Largest, 1e-9, 600, 0x51F1)?;
    let theta = res.hi.value;
    if !(theta > 0.0) {
        return Err(Error::Eigen(format!(
            "shift-invert Lanczos produced non-positive eigenvalue {theta}"
        )));
    }
    Ok((1.0 / theta.sqrt(), res.hi.vector))
}

/// Extreme eigenvalues of the Hermitian part `(X + X^H)/2` of a dense matrix.
pub fn hermitian_part_extremes_dense(x: ArrayView2<'_, Complex64>) -> Result<(f64, f64)> {
    let h = hermitian_part(&x.to_owned());
    let (vals, _) = hermitian_eig(&h)?;
    Ok((vals[0], vals[vals.len() - 1]))
}

/// Extreme eigenvalues of the Hermitian part of `A^* B` for sparse factors,
/// dense below the cap and matrix-free Lanczos above.
pub fn product_hermitian_extremes(a: &CscMatrix, b: &CscMatrix) -> Result<(f64, f64)> {
    let n = a.nrows();
    if a.ncols() != b.ncols() || a.nrows() != b.nrows() || !a.is_square() {
        return Err(Error::Dimension("product extremes need equal square factors".into()));
    }
    if n <= DENSE_EIG_CAP {
        let ad = a.to_dense();
        let bd = b.to_dense();
        let prod = ad.t().mapv(|z| z.conj()).dot(&bd);
        return hermitian_part_extremes_dense(prod.view());
    }
    let op = move |x: &[Complex64], y: &mut [Complex64]| {
        // (A^* B + B^* A)/2 x
        let bx = b.apply(x);
        let mut t1 = vec![ZERO; n];
        a.matvec_conj_transpose(&bx, &mut t1);
        let ax = a.apply(x);
        let mut t2 = vec![ZERO; n];
        b.matvec_conj_transpose(&ax, &mut t2);
        for ((yi, u), v) in y.iter_mut().zip(&t1).zip(&t2) {
            *yi = (u + v) * 0.5;
        }
    };
    let res = lanczos_extremes(&op, n, WhichEnd::Both, 1e-8, 500, 0xE16)?;
    Ok((res.lo.value, res.hi.value))
}

/// Largest singular value of a sparse matrix by Lanczos on `M^* M`.
/// The returned value carries the iteration tolerance (1e-6); callers that
/// need a guaranteed upper bound should inflate it.
pub fn sigma_max(m: &CscMatrix) -> Result<f64> {
    let n = m.ncols();
    let op = move |x: &[Complex64], y: &mut [Complex64]| {
        let mx = m.apply(x);
        m.matvec_conj_transpose(&mx, y);
    };
    let res = lanczos_extremes(&op, n, WhichEnd::Largest, 1e-6, 400, 0x5167_3A)?;
    Ok(res.hi.value.max(0.0).sqrt())
}

/// Smallest eigenpair of a Hermitian dense matrix, splitting into connected
/// components when the matrix carries exact-zero block structure.
pub fn hermitian_smallest_structured(h: &Array2<Complex64>) -> Result<(f64, Vec<Complex64>)> {
    let n = h.nrows();
    // detect exploitable structure cheaply
    let nnz = h.iter().filter(|z| **z != ZERO).count();
    if nnz * 2 > n * n || n <= 4 {
        let (vals, vecs) = hermitian_eig(h)?;
        let v = vecs.column(0).to_vec();
        return Ok((vals[0], v));
    }
    let mut trips = Vec::with_capacity(nnz);
    for ((i, j), v) in h.indexed_iter() {
        if *v != ZERO {
            trips.push((i, j, *v));
        }
    }
    let pat = CscMatrix::from_triplets(n, n, &trips)?;
    let comps = pat.pattern_components();
    let mut best = f64::INFINITY;
    let mut vec_out = vec![ZERO; n];
    for comp in &comps {
        let sub = gather_dense(&pat, comp);
        let (vals, vecs) = hermitian_eig(&sub)?;
        if vals[0] < best {
            best = vals[0];
            vec_out.iter_mut().for_each(|z| *z = ZERO);
            for (local, &global) in comp.iter().enumerate() {
                vec_out[global] = vecs[(local, 0)];
            }
        }
    }
    Ok((best, vec_out))
}

/// Test oracle: smallest singular value by full dense SVD, no structure
/// exploitation. Capped at [`DENSE_EIG_CAP`].
pub fn dense_sigma_oracle(m: &CscMatrix) -> Result<f64> {
    if m.nrows() > DENSE_EIG_CAP || m.ncols() > DENSE_EIG_CAP {
        return Err(Error::Invalid(format!(
            "dense sigma oracle capped at {DENSE_EIG_CAP}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let s = crate::dense::singular_values(&m.to_dense())?;
    Ok(s[s.len() - 1])
}
