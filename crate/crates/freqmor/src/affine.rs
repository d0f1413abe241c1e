//! Affine parameter-dependent matrices and vectors.
//!
//! An affine operator is a list of (real coefficient function, constant
//! complex term) pairs; evaluation at a parameter point is the weighted sum
//! of the terms. Coefficient functions are closures tagged with a stable
//! identifier so operator definitions can be echoed into artifacts.

use crate::error::{Error, Result};
use crate::param::ParameterPoint;
use crate::sparse::{CscMatrix, UnionPattern};
use num_complex::Complex64;
use std::sync::Arc;

type CoeffClosure = Arc<dyn Fn(&ParameterPoint) -> f64 + Send + Sync>;

/// Real-valued scalar coefficient of one affine term.
#[derive(Clone)]
pub struct CoefficientFn {
    id: String,
    f: CoeffClosure,
}

impl CoefficientFn {
    pub fn new(id: impl Into<String>, f: impl Fn(&ParameterPoint) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            id: id.into(),
            f: Arc::new(f),
        }
    }

    pub fn one() -> Self {
        Self::new("1", |_| 1.0)
    }

    pub fn constant(v: f64) -> Self {
        Self::new(format!("{v}"), move |_| v)
    }

    pub fn omega() -> Self {
        Self::new("omega", |pt| pt.omega)
    }

    /// The `i`-th model parameter.
    pub fn param(i: usize) -> Self {
        Self::new(format!("p[{i}]"), move |pt| pt.p[i])
    }

    /// Negated wrapper, preserving a readable identifier.
    pub fn negated(inner: &CoefficientFn) -> Self {
        let f = inner.f.clone();
        Self {
            id: format!("-({})", inner.id),
            f: Arc::new(move |pt| -f(pt)),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn eval(&self, pt: &ParameterPoint) -> f64 {
        (self.f)(pt)
    }
}

impl std::fmt::Debug for CoefficientFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CoefficientFn({})", self.id)
    }
}

/// Matrix-valued affine operator `sum_j theta_j(P) * M_j`.
#[derive(Debug, Clone)]
pub struct AffineMatrix {
    nrows: usize,
    ncols: usize,
    terms: Vec<(CoefficientFn, CscMatrix)>,
    union: UnionPattern,
}

impl AffineMatrix {
    pub fn new(terms: Vec<(CoefficientFn, CscMatrix)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Invalid("affine matrix needs at least one term".into()));
        }
        let (nrows, ncols) = (terms[0].1.nrows(), terms[0].1.ncols());
        for (_, m) in &terms {
            if m.nrows() != nrows || m.ncols() != ncols {
                return Err(Error::Dimension("affine matrix terms differ in shape".into()));
            }
        }
        let mats: Vec<&CscMatrix> = terms.iter().map(|(_, m)| m).collect();
        let union = UnionPattern::build(&mats)?;
        Ok(Self {
            nrows,
            ncols,
            terms,
            union,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Number of affine terms Q.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[(CoefficientFn, CscMatrix)] {
        &self.terms
    }

    pub fn term_matrix(&self, j: usize) -> &CscMatrix {
        &self.terms[j].1
    }

    /// Evaluates every coefficient, erroring with the offending term index on
    /// a non-finite value.
    pub fn coefficients(&self, pt: &ParameterPoint) -> Result<Vec<f64>> {
        let mut thetas = Vec::with_capacity(self.terms.len());
        for (j, (cf, _)) in self.terms.iter().enumerate() {
            let v = cf.eval(pt);
            if !v.is_finite() {
                return Err(Error::NonFiniteCoefficient {
                    term: j,
                    value: v,
                    point: pt.to_string(),
                });
            }
            thetas.push(v);
        }
        Ok(thetas)
    }

    /// `sum_j theta_j(P) M_j` on the precomputed union pattern.
    pub fn evaluate(&self, pt: &ParameterPoint) -> Result<CscMatrix> {
        let thetas = self.coefficients(pt)?;
        let mats: Vec<&CscMatrix> = self.terms.iter().map(|(_, m)| m).collect();
        Ok(self.union.combine(&thetas, &mats))
    }

    /// Applies the evaluated operator to a vector without materializing it.
    pub fn apply(&self, pt: &ParameterPoint, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let thetas = self.coefficients(pt)?;
        let mut y = vec![Complex64::new(0.0, 0.0); self.nrows];
        let mut tmp = vec![Complex64::new(0.0, 0.0); self.nrows];
        for (th, (_, m)) in thetas.iter().zip(&self.terms) {
            if *th == 0.0 {
                continue;
            }
            m.matvec(x, &mut tmp);
            for (yi, ti) in y.iter_mut().zip(&tmp) {
                *yi += ti * *th;
            }
        }
        Ok(y)
    }

    /// True if every term matrix is real-valued.
    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|(_, m)| m.is_real())
    }

    /// Cheap structural fingerprint used to match serialized artifacts
    /// against a model definition.
    pub fn fingerprint(&self) -> (usize, usize, usize, u64) {
        let mut acc = 0u64;
        for (_, m) in &self.terms {
            for v in m.values() {
                acc = acc
                    .wrapping_mul(0x100000001b3)
                    .wrapping_add(v.re.to_bits() ^ v.im.to_bits().rotate_left(17));
            }
        }
        (self.nrows, self.ncols, self.terms.len(), acc)
    }
}

/// Vector-valued affine operator `sum_j theta_j(P) * b_j`.
#[derive(Debug, Clone)]
pub struct AffineVector {
    len: usize,
    terms: Vec<(CoefficientFn, Vec<Complex64>)>,
}

impl AffineVector {
    pub fn new(terms: Vec<(CoefficientFn, Vec<Complex64>)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Invalid("affine vector needs at least one term".into()));
        }
        let len = terms[0].1.len();
        for (_, v) in &terms {
            if v.len() != len {
                return Err(Error::Dimension("affine vector terms differ in length".into()));
            }
        }
        Ok(Self { len, terms })
    }

    /// Single parameter-independent term.
    pub fn constant(v: Vec<Complex64>) -> Result<Self> {
        Self::new(vec![(CoefficientFn::one(), v)])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[(CoefficientFn, Vec<Complex64>)] {
        &self.terms
    }

    pub fn coefficients(&self, pt: &ParameterPoint) -> Result<Vec<f64>> {
        let mut thetas = Vec::with_capacity(self.terms.len());
        for (j, (cf, _)) in self.terms.iter().enumerate() {
            let v = cf.eval(pt);
            if !v.is_finite() {
                return Err(Error::NonFiniteCoefficient {
                    term: j,
                    value: v,
                    point: pt.to_string(),
                });
            }
            thetas.push(v);
        }
        Ok(thetas)
    }

    pub fn evaluate(&self, pt: &ParameterPoint) -> Result<Vec<Complex64>> {
        let thetas = self.coefficients(pt)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.len];
        for (th, (_, v)) in thetas.iter().zip(&self.terms) {
            if *th == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(v) {
                *o += x * *th;
            }
        }
        Ok(out)
    }

    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|(_, v)| v.iter().all(|z| z.im == 0.0))
    }
}

/// Lifts an affine `A(p)` to the frequency-domain operator
/// `M(omega, p) = omega * (iI) - sum_j theta_j(p) A_j`,
/// i.e. one leading `(omega, iI)` term followed by the negated A-terms.
pub fn frequency_domain_operator(a: &AffineMatrix) -> Result<AffineMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "frequency-domain operator needs square A, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let mut terms = Vec::with_capacity(a.term_count() + 1);
    terms.push((
        CoefficientFn::omega(),
        CscMatrix::scaled_identity(n, Complex64::new(0.0, 1.0)),
    ));
    for (cf, m) in a.terms() {
        terms.push((CoefficientFn::negated(cf), m.clone()));
    }
    AffineMatrix::new(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::ParameterPoint;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag(vals: &[f64]) -> CscMatrix {
        let t: Vec<_> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, i, c(v, 0.0)))
            .collect();
        CscMatrix::from_triplets(vals.len(), vals.len(), &t).unwrap()
    }

    #[test]
    fn identity_term_evaluates_to_identity() {
        let a = AffineMatrix::new(vec![(CoefficientFn::one(), CscMatrix::identity(2))]).unwrap();
        let m = a.evaluate(&ParameterPoint::new(3.0, vec![7.0])).unwrap();
        let d = m.to_dense();
        assert_eq!(d[(0, 0)], c(1.0, 0.0));
        assert_eq!(d[(1, 1)], c(1.0, 0.0));
        assert_eq!(d[(0, 1)], c(0.0, 0.0));
    }

    #[test]
    fn frequency_operator_at_zero_frequency() {
        let a = AffineMatrix::new(vec![(CoefficientFn::one(), diag(&[-1.0, -2.0]))]).unwrap();
        let m = frequency_domain_operator(&a).unwrap();
        assert_eq!(m.term_count(), 2);
        let d = m
            .evaluate(&ParameterPoint::new(0.0, vec![]))
            .unwrap()
            .to_dense();
        assert_eq!(d[(0, 0)], c(1.0, 0.0));
        assert_eq!(d[(1, 1)], c(2.0, 0.0));
    }

    #[test]
    fn scalar_frequency_operator() {
        let a = AffineMatrix::new(vec![(CoefficientFn::one(), diag(&[-1.0]))]).unwrap();
        let m = frequency_domain_operator(&a).unwrap();
        let d = m
            .evaluate(&ParameterPoint::new(2.0, vec![]))
            .unwrap()
            .to_dense();
        assert!((d[(0, 0)] - c(1.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn term_count_grows_by_one() {
        let a = AffineMatrix::new(vec![
            (CoefficientFn::one(), diag(&[-1.0, -1.0])),
            (CoefficientFn::param(0), diag(&[0.0, -1.0])),
        ])
        .unwrap();
        let m = frequency_domain_operator(&a).unwrap();
        assert_eq!(m.term_count(), 3);
        // omega = 0 kills the iI term exactly
        let pt = ParameterPoint::new(0.0, vec![0.7]);
        let md = m.evaluate(&pt).unwrap().to_dense();
        let ad = a.evaluate(&pt).unwrap().to_dense();
        for i in 0..2 {
            for j in 0..2 {
                assert!((md[(i, j)] + ad[(i, j)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn vector_two_terms() {
        let b = AffineVector::new(vec![
            (CoefficientFn::one(), vec![c(1.0, 0.0), c(0.0, 0.0)]),
            (CoefficientFn::param(0), vec![c(0.0, 0.0), c(1.0, 0.0)]),
        ])
        .unwrap();
        let v = b.evaluate(&ParameterPoint::new(0.0, vec![3.0])).unwrap();
        assert_eq!(v[0], c(1.0, 0.0));
        assert_eq!(v[1], c(3.0, 0.0));
    }

    #[test]
    fn constant_vector_ignores_parameters() {
        let b = AffineVector::constant(vec![c(2.0, 1.0)]).unwrap();
        for pt in [
            ParameterPoint::new(0.0, vec![]),
            ParameterPoint::new(5.0, vec![]),
        ] {
            assert_eq!(b.evaluate(&pt).unwrap()[0], c(2.0, 1.0));
        }
    }

    #[test]
    fn non_finite_coefficient_names_term() {
        let a = AffineMatrix::new(vec![
            (CoefficientFn::one(), diag(&[1.0])),
            (CoefficientFn::new("bad", |_| f64::NAN), diag(&[1.0])),
        ])
        .unwrap();
        match a.evaluate(&ParameterPoint::new(0.0, vec![])) {
            Err(Error::NonFiniteCoefficient { term, .. }) => assert_eq!(term, 1),
            other => panic!("expected NonFiniteCoefficient, got {other:?}"),
        }
    }

    #[test]
    fn apply_matches_term_summation() {
        // linearity: evaluate(A, P) x == sum_j theta_j (M_j x)
        let a = AffineMatrix::new(vec![
            (CoefficientFn::omega(), CscMatrix::scaled_identity(3, c(0.0, 1.0))),
            (CoefficientFn::param(0), diag(&[1.0, 2.0, 3.0])),
        ])
        .unwrap();
        let pt = ParameterPoint::new(0.5, vec![-1.25]);
        let x = vec![c(1.0, -1.0), c(0.5, 2.0), c(-3.0, 0.25)];
        let y1 = a.apply(&pt, &x).unwrap();
        let y2 = a.evaluate(&pt).unwrap().apply(&x);
        for (u, v) in y1.iter().zip(&y2) {
            assert!((u - v).norm() <= 1e-14 * v.norm().max(1.0));
        }
    }
}
