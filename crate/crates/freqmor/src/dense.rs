//! Dense complex kernels: a small pivoted LU (used for reduced systems and
//! as fallback when a matrix has no useful band structure) and thin wrappers
//! around the LAPACK-backed decompositions.

use crate::error::{Error, Result};
use crate::sparse::CscMatrix;
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, JobSvd, SVDDC, UPLO};
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Dense complex LU with partial pivoting, row-major storage.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    a: Vec<Complex64>,
    ipiv: Vec<usize>,
}

impl DenseLu {
    pub fn factor_slice(n: usize, data: &[Complex64]) -> Result<Self> {
        assert_eq!(data.len(), n * n);
        let mut a = data.to_vec();
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let mut jp = j;
            let mut best = a[j * n + j].norm_sqr();
            for i in (j + 1)..n {
                let v = a[i * n + j].norm_sqr();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            ipiv[j] = jp;
            if a[jp * n + j] == ZERO {
                return Err(Error::Solve {
                    point: format!("column {j}"),
                    reason: "singular matrix in dense LU".into(),
                });
            }
            if jp != j {
                for c in 0..n {
                    a.swap(j * n + c, jp * n + c);
                }
            }
            let d = a[j * n + j];
            for i in (j + 1)..n {
                let l = a[i * n + j] / d;
                a[i * n + j] = l;
                if l != ZERO {
                    for c in (j + 1)..n {
                        let u = a[j * n + c];
                        a[i * n + c] -= l * u;
                    }
                }
            }
        }
        Ok(Self { n, a, ipiv })
    }

    pub fn factor(m: &Array2<Complex64>) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() {
            return Err(Error::Dimension("dense LU needs a square matrix".into()));
        }
        let data: Vec<Complex64> = m.iter().cloned().collect();
        Self::factor_slice(n, &data)
    }

    pub fn factor_csc(m: &CscMatrix) -> Result<Self> {
        let n = m.nrows();
        let mut data = vec![ZERO; n * n];
        for (i, j, v) in m.iter() {
            data[i * n + j] += v;
        }
        Self::factor_slice(n, &data)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    // factor() swaps whole rows, so PA = LU: apply all swaps up front.
    pub fn solve(&self, b: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for j in 0..n {
            let jp = self.ipiv[j];
            if jp != j {
                b.swap(j, jp);
            }
        }
        for j in 0..n {
            let bj = b[j];
            if bj != ZERO {
                for i in (j + 1)..n {
                    b[i] -= self.a[i * n + j] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let x = b[j] / self.a[j * n + j];
            b[j] = x;
            if x != ZERO {
                for i in 0..j {
                    b[i] -= self.a[i * n + j] * x;
                }
            }
        }
    }

    // A^H = U^H L^H P, so x = P^T (L^{-H} U^{-H} b): undo the swaps last,
    // in reverse order.
    pub fn solve_conj_transpose(&self, b: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for j in 0..n {
            let mut acc = b[j];
            for i in 0..j {
                acc -= self.a[i * n + j].conj() * b[i];
            }
            b[j] = acc / self.a[j * n + j].conj();
        }
        for j in (0..n).rev() {
            let mut acc = b[j];
            for i in (j + 1)..n {
                acc -= self.a[i * n + j].conj() * b[i];
            }
            b[j] = acc;
        }
        for j in (0..n).rev() {
            let jp = self.ipiv[j];
            if jp != j {
                b.swap(j, jp);
            }
        }
    }

    pub fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve(&mut x);
        x
    }
}

/// Direct factorization of a sparse matrix, banded when the pattern allows,
/// dense otherwise.
#[derive(Debug, Clone)]
pub enum DirectSolver {
    Banded(crate::banded::BandedLu),
    Dense(DenseLu),
}

impl DirectSolver {
    pub fn factor(m: &CscMatrix) -> Result<Self> {
        let n = m.nrows();
        let (kl, ku) = m.bandwidths();
        if 2 * kl + ku + 1 <= n {
            Ok(Self::Banded(crate::banded::BandedLu::factor(m)?))
        } else {
            Ok(Self::Dense(DenseLu::factor_csc(m)?))
        }
    }

    pub fn solve(&self, b: &mut [Complex64]) {
        match self {
            Self::Banded(lu) => lu.solve(b),
            Self::Dense(lu) => lu.solve(b),
        }
    }

    pub fn solve_conj_transpose(&self, b: &mut [Complex64]) {
        match self {
            Self::Banded(lu) => lu.solve_conj_transpose(b),
            Self::Dense(lu) => lu.solve_conj_transpose(b),
        }
    }

    pub fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve(&mut x);
        x
    }
}

/// Hermitian part `(X + X^H) / 2`.
pub fn hermitian_part(x: &Array2<Complex64>) -> Array2<Complex64> {
    let xh = x.t().mapv(|z| z.conj());
    (x + &xh).mapv(|z| z * 0.5)
}

/// Full eigendecomposition of a Hermitian matrix (ascending eigenvalues).
pub fn hermitian_eig(a: &Array2<Complex64>) -> Result<(Array1<f64>, Array2<Complex64>)> {
    a.eigh(UPLO::Lower)
        .map_err(|e| Error::Eigen(format!("dense Hermitian eigensolve: {e}")))
}

/// Eigenvalues only, ascending.
pub fn hermitian_eigvals(a: &Array2<Complex64>) -> Result<Array1<f64>> {
    // eigh also returns vectors; values-only variant avoids the copy upstream
    let (vals, _) = hermitian_eig(a)?;
    Ok(vals)
}

/// Singular values of a dense complex matrix, descending.
pub fn singular_values(a: &Array2<Complex64>) -> Result<Array1<f64>> {
    let (_, s, _) = a
        .svddc(JobSvd::None)
        .map_err(|e| Error::Eigen(format!("dense SVD: {e}")))?;
    Ok(s)
}

/// Thin SVD `(U, S, V^H)` of a dense complex matrix.
pub fn thin_svd(
    a: &Array2<Complex64>,
) -> Result<(Array2<Complex64>, Array1<f64>, Array2<Complex64>)> {
    let (u, s, vt) = a
        .svddc(JobSvd::Some)
        .map_err(|e| Error::Eigen(format!("dense SVD: {e}")))?;
    Ok((
        u.ok_or_else(|| Error::Eigen("SVD returned no U".into()))?,
        s,
        vt.ok_or_else(|| Error::Eigen("SVD returned no VT".into()))?,
    ))
}

/// Thin SVD of a real matrix.
pub fn thin_svd_real(a: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (u, s, vt) = a
        .svddc(JobSvd::Some)
        .map_err(|e| Error::Eigen(format!("dense real SVD: {e}")))?;
    Ok((
        u.ok_or_else(|| Error::Eigen("SVD returned no U".into()))?,
        s,
        vt.ok_or_else(|| Error::Eigen("SVD returned no VT".into()))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dense_lu_roundtrip() {
        let a = array![
            [c(2.0, 1.0), c(-1.0, 0.0), c(0.5, -0.5)],
            [c(0.0, 3.0), c(1.0, 1.0), c(2.0, 0.0)],
            [c(1.0, 0.0), c(4.0, -2.0), c(-1.0, 1.0)]
        ];
        let lu = DenseLu::factor(&a).unwrap();
        let b = vec![c(1.0, 0.0), c(0.0, 1.0), c(2.0, -1.0)];
        let x = lu.solve_vec(&b);
        for i in 0..3 {
            let mut acc = ZERO;
            for j in 0..3 {
                acc += a[(i, j)] * x[j];
            }
            assert!((acc - b[i]).norm() < 1e-12);
        }
        let mut y = b.clone();
        lu.solve_conj_transpose(&mut y);
        for j in 0..3 {
            let mut acc = ZERO;
            for i in 0..3 {
                acc += a[(i, j)].conj() * y[i];
            }
            assert!((acc - b[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn hermitian_part_of_nilpotent() {
        let x = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let h = hermitian_part(&x);
        assert_eq!(h[(0, 1)], c(0.5, 0.0));
        assert_eq!(h[(1, 0)], c(0.5, 0.0));
        let vals = hermitian_eigvals(&h).unwrap();
        assert!((vals[0] + 0.5).abs() < 1e-14);
        assert!((vals[1] - 0.5).abs() < 1e-14);
    }
}
