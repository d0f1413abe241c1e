//! Real reduced bases from complex snapshot bases, and real reduced LTI
//! systems by Galerkin projection.
//!
//! The complex basis is stacked as `[Re(Phi) Im(Phi)]`, a thin SVD is taken,
//! and the rank is chosen by the relative energy criterion
//! `sqrt(tail / total) <= tau` on the singular values.

use crate::affine::CoefficientFn;
use crate::dense::{thin_svd_real, DenseLu};
use crate::error::{Error, Result};
use crate::fom::ParametricLti;
use crate::param::ParameterPoint;
use num_complex::Complex64;

use ndarray::{Array1, Array2};

/// Real orthonormal basis with the singular-value data that produced it.
#[derive(Debug, Clone)]
pub struct RealBasis {
    pub phi: Array2<f64>,
    pub singular_values: Vec<f64>,
    pub r: usize,
    pub tau: f64,
}

impl RealBasis {
    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    /// Re-evaluates the energy criterion from the stored singular values.
    pub fn rank_from_energy(&self, tau: f64) -> usize {
        rank_by_energy(&self.singular_values, tau)
    }
}

fn rank_by_energy(s: &[f64], tau: f64) -> usize {
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return 0;
    }
    let mut tail = total;
    for (k, x) in s.iter().enumerate() {
        tail -= x * x;
        if (tail.max(0.0) / total).sqrt() <= tau {
            return k + 1;
        }
    }
    s.len()
}

/// POD realification of a complex basis: SVD of `[Re Im]` with relative
/// energy truncation at `tau`.
pub fn realify(phi_c: &Array2<Complex64>, tau: f64) -> Result<RealBasis> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Invalid(format!("tau must be in (0, 1), got {tau}")));
    }
    let (n, r0) = (phi_c.nrows(), phi_c.ncols());
    if r0 == 0 {
        return Err(Error::Invalid("empty complex basis".into()));
    }
    let mut stacked = Array2::<f64>::zeros((n, 2 * r0));
    for ((i, j), z) in phi_c.indexed_iter() {
        stacked[(i, j)] = z.re;
        stacked[(i, r0 + j)] = z.im;
    }
    if stacked.iter().all(|x| *x == 0.0) {
        return Err(Error::Invalid("all-zero complex basis".into()));
    }
    let (u, s, _) = thin_svd_real(&stacked)?;
    let svals: Vec<f64> = s.to_vec();
    let r = rank_by_energy(&svals, tau);
    let phi = u.slice(ndarray::s![.., ..r]).to_owned();
    Ok(RealBasis {
        phi,
        singular_values: svals,
        r,
        tau,
    })
}

/// Builds the stacked basis matrix from reduced-basis columns.
pub fn columns_to_matrix(cols: &[Vec<Complex64>]) -> Result<Array2<Complex64>> {
    if cols.is_empty() {
        return Err(Error::Invalid("no basis columns".into()));
    }
    let n = cols[0].len();
    let mut m = Array2::zeros((n, cols.len()));
    for (j, col) in cols.iter().enumerate() {
        if col.len() != n {
            return Err(Error::Dimension("ragged basis columns".into()));
        }
        for (i, z) in col.iter().enumerate() {
            m[(i, j)] = *z;
        }
    }
    Ok(m)
}

/// Real reduced LTI system: projected time-domain operators plus the
/// projected frequency-domain operator for transfer evaluation.
pub struct ReducedLti {
    pub model_name: String,
    pub a_terms: Vec<(CoefficientFn, Array2<f64>)>,
    pub b_terms: Vec<(CoefficientFn, Array1<f64>)>,
    pub c_terms: Vec<(CoefficientFn, Array1<f64>)>,
    pub m_terms: Vec<(CoefficientFn, Array2<Complex64>)>,
    pub basis: RealBasis,
    pub param_box: Vec<[f64; 2]>,
    pub output_scale: f64,
}

impl ReducedLti {
    pub fn dim(&self) -> usize {
        self.basis.r
    }

    /// Assembles the real reduced `A(p)`.
    pub fn evaluate_a(&self, pt: &ParameterPoint) -> Result<Array2<f64>> {
        let r = self.dim();
        let mut out = Array2::zeros((r, r));
        for (idx, (cf, term)) in self.a_terms.iter().enumerate() {
            let th = cf.eval(pt);
            if !th.is_finite() {
                return Err(Error::NonFiniteCoefficient {
                    term: idx,
                    value: th,
                    point: pt.to_string(),
                });
            }
            out.scaled_add(th, term);
        }
        Ok(out)
    }

    pub fn evaluate_b(&self, pt: &ParameterPoint) -> Result<Array1<f64>> {
        let r = self.dim();
        let mut out = Array1::zeros(r);
        for (cf, term) in &self.b_terms {
            out.scaled_add(cf.eval(pt), term);
        }
        Ok(out)
    }

    pub fn evaluate_c(&self, pt: &ParameterPoint) -> Result<Array1<f64>> {
        let r = self.dim();
        let mut out = Array1::zeros(r);
        for (cf, term) in &self.c_terms {
            out.scaled_add(cf.eval(pt), term);
        }
        Ok(out)
    }

    /// Reduced transfer value via the projected frequency operator:
    /// solves the dense r x r system and applies the reduced output row.
    pub fn transfer(&self, pt: &ParameterPoint) -> Result<Complex64> {
        let r = self.dim();
        let mut mat = vec![Complex64::new(0.0, 0.0); r * r];
        for (cf, term) in &self.m_terms {
            let th = cf.eval(pt);
            if th == 0.0 {
                continue;
            }
            for (dst, src) in mat.iter_mut().zip(term.iter()) {
                *dst += src * th;
            }
        }
        let mut rhs: Vec<Complex64> = self
            .evaluate_b(pt)?
            .iter()
            .map(|x| Complex64::new(*x, 0.0))
            .collect();
        let lu = DenseLu::factor_slice(r, &mat).map_err(|_| Error::Solve {
            point: pt.to_string(),
            reason: "reduced frequency operator is singular".into(),
        })?;
        lu.solve(&mut rhs);
        let c = self.evaluate_c(pt)?;
        Ok(rhs
            .iter()
            .zip(c.iter())
            .map(|(w, ci)| w * *ci)
            .sum())
    }
}

fn project_matrix_real(
    phi: &Array2<f64>,
    term: &crate::sparse::CscMatrix,
) -> Result<Array2<f64>> {
    let (n, r) = (phi.nrows(), phi.ncols());
    // A_j Phi column by column, then Phi^T (A_j Phi)
    let mut aphi = Array2::<f64>::zeros((n, r));
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    let mut out_col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..r {
        for i in 0..n {
            col[i] = Complex64::new(phi[(i, j)], 0.0);
        }
        term.matvec(&col, &mut out_col);
        for i in 0..n {
            aphi[(i, j)] = out_col[i].re;
        }
    }
    Ok(phi.t().dot(&aphi))
}

fn project_matrix_complex(
    phi: &Array2<f64>,
    term: &crate::sparse::CscMatrix,
) -> Result<Array2<Complex64>> {
    let (n, r) = (phi.nrows(), phi.ncols());
    let mut out = Array2::<Complex64>::zeros((r, r));
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    let mut tcol = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..r {
        for i in 0..n {
            col[i] = Complex64::new(phi[(i, j)], 0.0);
        }
        term.matvec(&col, &mut tcol);
        for row in 0..r {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                acc += tcol[i] * phi[(i, row)];
            }
            out[(row, j)] = acc;
        }
    }
    Ok(out)
}

/// Galerkin projection of the time-domain system onto a real basis. The
/// full-order `A`, `b`, `c` must be real-valued.
pub fn project_time_domain(model: &ParametricLti, basis: &RealBasis) -> Result<ReducedLti> {
    if basis.n() != model.n {
        return Err(Error::Dimension("basis/model dimension mismatch".into()));
    }
    if !model.a.is_real() || !model.b.is_real() || !model.c.is_real() {
        return Err(Error::Invalid(
            "realification requires a real full-order system".into(),
        ));
    }
    let phi = &basis.phi;
    let r = basis.r;

    let mut a_terms = Vec::with_capacity(model.a.term_count());
    for (cf, term) in model.a.terms() {
        a_terms.push((cf.clone(), project_matrix_real(phi, term)?));
    }
    let project_vec = |v: &[Complex64]| -> Array1<f64> {
        let mut out = Array1::zeros(r);
        for k in 0..r {
            let mut acc = 0.0;
            for i in 0..v.len() {
                acc += phi[(i, k)] * v[i].re;
            }
            out[k] = acc;
        }
        out
    };
    let b_terms: Vec<(CoefficientFn, Array1<f64>)> = model
        .b
        .terms()
        .iter()
        .map(|(cf, v)| (cf.clone(), project_vec(v)))
        .collect();
    let c_terms: Vec<(CoefficientFn, Array1<f64>)> = model
        .c
        .terms()
        .iter()
        .map(|(cf, v)| (cf.clone(), project_vec(v)))
        .collect();
    let mut m_terms = Vec::with_capacity(model.m.term_count());
    for (cf, term) in model.m.terms() {
        m_terms.push((cf.clone(), project_matrix_complex(phi, term)?));
    }

    Ok(ReducedLti {
        model_name: model.name.clone(),
        a_terms,
        b_terms,
        c_terms,
        m_terms,
        basis: basis.clone(),
        param_box: model.param_box.clone(),
        output_scale: model.output_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::make_heat_symmetric;
    use crate::param::ParameterPoint;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn real_basis_passes_through() {
        // a real orthonormal complex basis keeps its span and rank
        let mut phi = Array2::<Complex64>::zeros((5, 2));
        phi[(0, 0)] = c(1.0, 0.0);
        phi[(3, 1)] = c(1.0, 0.0);
        let rb = realify(&phi, 1e-2).unwrap();
        assert_eq!(rb.r, 2);
        // principal angles: |Phi^T e| = 1 for original directions
        let p = &rb.phi;
        let col0: Vec<f64> = (0..2).map(|j| p[(0, j)]).collect();
        let col3: Vec<f64> = (0..2).map(|j| p[(3, j)]).collect();
        assert!((col0.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-10);
        assert!((col3.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn parallel_real_imaginary_parts_collapse() {
        // (1 + i)/2 * unit column: Re and Im stacks are parallel -> r = 1
        let mut phi = Array2::<Complex64>::zeros((4, 1));
        phi[(2, 0)] = c(0.5, 0.5);
        let rb = realify(&phi, 1e-2).unwrap();
        assert_eq!(rb.r, 1);
    }

    #[test]
    fn tiny_tau_keeps_everything() {
        let mut state = 7u64;
        let mut next = move || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let phi = Array2::from_shape_fn((12, 3), |_| c(next(), next()));
        let rb = realify(&phi, 1e-15).unwrap();
        assert_eq!(rb.r, 6);
    }

    #[test]
    fn energy_criterion_is_reproducible() {
        let mut phi = Array2::<Complex64>::zeros((6, 2));
        phi[(0, 0)] = c(1.0, 0.2);
        phi[(1, 0)] = c(0.0, -0.4);
        phi[(2, 1)] = c(0.7, 0.01);
        phi[(5, 1)] = c(0.0, 0.03);
        let rb = realify(&phi, 1e-2).unwrap();
        assert_eq!(rb.rank_from_energy(rb.tau), rb.r);
    }

    #[test]
    fn orthonormal_columns() {
        let mut phi = Array2::<Complex64>::zeros((8, 2));
        for i in 0..8 {
            phi[(i, 0)] = c((i as f64).sin(), (i as f64).cos());
            phi[(i, 1)] = c((i as f64 * 0.5).cos(), 0.3);
        }
        let rb = realify(&phi, 1e-3).unwrap();
        let g = rb.phi.t().dot(&rb.phi);
        for i in 0..rb.r {
            for j in 0..rb.r {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_zero_basis_rejected() {
        let phi = Array2::<Complex64>::zeros((4, 2));
        assert!(realify(&phi, 1e-2).is_err());
        assert!(realify(&Array2::<Complex64>::zeros((4, 2)), 0.0).is_err());
    }

    #[test]
    fn identity_projection_reproduces_model() {
        let model = make_heat_symmetric(3).unwrap();
        let n = model.n;
        let basis = RealBasis {
            phi: Array2::eye(n),
            singular_values: vec![1.0; n],
            r: n,
            tau: 1e-2,
        };
        let rom = project_time_domain(&model, &basis).unwrap();
        let pt = ParameterPoint::new(0.7, vec![1.3, 0.4]);
        let a_red = rom.evaluate_a(&pt).unwrap();
        let a_full = model.a.evaluate(&pt).unwrap().to_dense();
        for i in 0..n {
            for j in 0..n {
                assert!((a_red[(i, j)] - a_full[(i, j)].re).abs() < 1e-12);
            }
        }
        // transfer matches the full model
        let h_red = rom.transfer(&pt).unwrap();
        let h_full = model.solve_frequency(&pt).unwrap().h;
        assert!((h_red - h_full).norm() <= 1e-10 * h_full.norm().max(1.0));
    }

    #[test]
    fn coordinate_projection_of_diagonal() {
        // 1-column basis e1 on diag(-1,-2): A~ = (-1)
        use crate::affine::{frequency_domain_operator, AffineMatrix, AffineVector, CoefficientFn};
        use crate::sparse::CscMatrix;
        let a = AffineMatrix::new(vec![(
            CoefficientFn::one(),
            CscMatrix::from_triplets(2, 2, &[(0, 0, c(-1.0, 0.0)), (1, 1, c(-2.0, 0.0))]).unwrap(),
        )])
        .unwrap();
        let m = frequency_domain_operator(&a).unwrap();
        let model = ParametricLti {
            name: "diag".into(),
            n: 2,
            a,
            b: AffineVector::constant(vec![c(1.0, 0.0); 2]).unwrap(),
            c: AffineVector::constant(vec![c(1.0, 0.0); 2]).unwrap(),
            m,
            param_box: vec![],
            output_scale: 1.0,
        };
        let mut phi = Array2::zeros((2, 1));
        phi[(0, 0)] = 1.0;
        let basis = RealBasis {
            phi,
            singular_values: vec![1.0],
            r: 1,
            tau: 1e-2,
        };
        let rom = project_time_domain(&model, &basis).unwrap();
        let a_red = rom.evaluate_a(&ParameterPoint::new(0.0, vec![])).unwrap();
        assert!((a_red[(0, 0)] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn galerkin_preserves_dissipativity() {
        let model = make_heat_symmetric(6).unwrap();
        // basis from a couple of snapshots
        let sol1 = model
            .solve_frequency(&ParameterPoint::new(0.5, vec![1.0, 0.5]))
            .unwrap();
        let sol2 = model
            .solve_frequency(&ParameterPoint::new(5.0, vec![3.0, 1.5]))
            .unwrap();
        let phi_c = columns_to_matrix(&[sol1.w, sol2.w]).unwrap();
        let basis = realify(&phi_c, 1e-6).unwrap();
        let rom = project_time_domain(&model, &basis).unwrap();
        let mut state = 0xBEEFu64;
        let mut next = move || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let pt = ParameterPoint::new(0.0, vec![0.1 + 3.9 * next(), 2.0 * next()]);
            let a_red = rom.evaluate_a(&pt).unwrap();
            // numerical range of A~ stays in the left half plane: check the
            // largest eigenvalue of the symmetric part
            let sym = (&a_red + &a_red.t()).mapv(|x| 0.5 * x);
            let szd = sym.mapv(|x| Complex64::new(x, 0.0));
            let (vals, _) = crate::dense::hermitian_eig(&szd).unwrap();
            assert!(
                vals[vals.len() - 1] < 0.0,
                "dissipativity lost at {pt}: {}",
                vals[vals.len() - 1]
            );
        }
    }

    #[test]
    fn complex_data_rejected_for_time_domain() {
        use crate::affine::{AffineMatrix, AffineVector, CoefficientFn};
        use crate::sparse::CscMatrix;
        let a = AffineMatrix::new(vec![(
            CoefficientFn::one(),
            CscMatrix::from_triplets(2, 2, &[(0, 0, c(0.0, 1.0)), (1, 1, c(-1.0, 0.0))]).unwrap(),
        )])
        .unwrap();
        let m = crate::affine::frequency_domain_operator(&a).unwrap();
        let model = ParametricLti {
            name: "cplx".into(),
            n: 2,
            a,
            b: AffineVector::constant(vec![c(1.0, 0.0); 2]).unwrap(),
            c: AffineVector::constant(vec![c(1.0, 0.0); 2]).unwrap(),
            m,
            param_box: vec![],
            output_scale: 1.0,
        };
        let basis = RealBasis {
            phi: Array2::eye(2),
            singular_values: vec![1.0, 1.0],
            r: 2,
            tau: 1e-2,
        };
        assert!(project_time_domain(&model, &basis).is_err());
    }
}
