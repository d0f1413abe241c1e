//! Parametric full-order LTI models in the frequency domain.
//!
//! A model carries the time-domain affine operators `A(p)`, `b(p)`, `c(p)`
//! together with the frequency-domain left-hand side `M(omega, p)`, and
//! solves the stationary problem `M(P) w = b(P)` by direct sparse
//! factorization. Four benchmark constructors are provided.

use crate::affine::{frequency_domain_operator, AffineMatrix, AffineVector, CoefficientFn};
use crate::dense::DirectSolver;
use crate::error::{Error, Result};
use crate::param::{ParameterGrid, ParameterPoint};
use crate::sparse::CscMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative residual accepted from the direct frequency solver.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

/// Parametric LTI system (single input, single output).
#[derive(Debug, Clone)]
pub struct ParametricLti {
    pub name: String,
    pub n: usize,
    /// Time-domain system operator `A(p)`, affine over the model parameters.
    pub a: AffineMatrix,
    /// Input column `b(p)`.
    pub b: AffineVector,
    /// Output row `c(p)` (stored as a vector; the output is `c(p)^T w`).
    pub c: AffineVector,
    /// Frequency-domain operator `M(omega, p)`.
    pub m: AffineMatrix,
    /// Closed parameter box, one `[lo, hi]` per model parameter.
    pub param_box: Vec<[f64; 2]>,
    /// Scaling applied to reported norms (`4/sqrt(n)` for the PDE models).
    pub output_scale: f64,
}

/// Solution of the stationary problem at one parameter point.
#[derive(Debug, Clone)]
pub struct FrequencySolution {
    pub point: ParameterPoint,
    pub w: Vec<Complex64>,
    /// Output transfer value `H = c(p)^T w`.
    pub h: Complex64,
}

impl ParametricLti {
    pub fn parameter_dim(&self) -> usize {
        self.param_box.len()
    }

    /// Checks that a point lies inside the declared closed parameter box.
    pub fn in_domain(&self, pt: &ParameterPoint) -> Result<()> {
        if pt.p.len() != self.param_box.len() {
            return Err(Error::Dimension(format!(
                "model {} expects {} parameters, point has {}",
                self.name,
                self.param_box.len(),
                pt.p.len()
            )));
        }
        if !pt.is_finite() {
            return Err(Error::Domain(format!("non-finite point {pt}")));
        }
        for (v, [lo, hi]) in pt.p.iter().zip(&self.param_box) {
            if v < lo || v > hi {
                return Err(Error::Domain(format!(
                    "parameter {v} outside [{lo}, {hi}] for model {}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Output vector `c(p)` at the model parameters of `pt`.
    pub fn output_vector(&self, pt: &ParameterPoint) -> Result<Vec<Complex64>> {
        self.c.evaluate(pt)
    }

    /// Direct sparse solve of `M(P) w = b(P)` with a residual check and one
    /// step of iterative refinement.
    pub fn solve_frequency(&self, pt: &ParameterPoint) -> Result<FrequencySolution> {
        self.in_domain(pt)?;
        let m = self.m.evaluate(pt)?;
        let rhs = self.b.evaluate(pt)?;
        let lu = DirectSolver::factor(&m).map_err(|e| Error::Solve {
            point: pt.to_string(),
            reason: e.to_string(),
        })?;
        let mut w = lu.solve_vec(&rhs);

        let bnorm = norm2(&rhs);
        let mut resid = residual(&m, &w, &rhs);
        if resid > SOLVE_RESIDUAL_TOL * bnorm {
            let mut corr = resid_vec(&m, &w, &rhs);
            lu.solve(&mut corr);
            for (wi, ci) in w.iter_mut().zip(&corr) {
                *wi += ci;
            }
            resid = residual(&m, &w, &rhs);
            if resid > SOLVE_RESIDUAL_TOL * bnorm {
                return Err(Error::Solve {
                    point: pt.to_string(),
                    reason: format!(
                        "relative residual {:.3e} above {SOLVE_RESIDUAL_TOL:.0e}",
                        resid / bnorm.max(f64::MIN_POSITIVE)
                    ),
                });
            }
        }

        let c = self.c.evaluate(pt)?;
        let h = c.iter().zip(&w).map(|(ci, wi)| ci * wi).sum();
        Ok(FrequencySolution {
            point: pt.clone(),
            w,
            h,
        })
    }

    /// Output transfer values over a grid, in grid order.
    pub fn transfer_function(&self, grid: &ParameterGrid) -> Result<Vec<Complex64>> {
        grid.points()
            .par_iter()
            .enumerate()
            .map(|(i, pt)| {
                self.solve_frequency(pt).map(|s| s.h).map_err(|e| Error::Solve {
                    point: format!("grid index {i}: {pt}"),
                    reason: e.to_string(),
                })
            })
            .collect()
    }
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn resid_vec(m: &CscMatrix, w: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mw = m.apply(w);
    b.iter().zip(&mw).map(|(bi, mi)| bi - mi).collect()
}

fn residual(m: &CscMatrix, w: &[Complex64], b: &[Complex64]) -> f64 {
    norm2(&resid_vec(m, w, b))
}

// ---------------------------------------------------------------------------
// benchmark constructors

/// Three-parameter Penzl model: three weakly damped 2x2 rotation blocks with
/// parameter-shifted frequencies plus a `diag(-1..-1000)` tail; n = 1006.
pub fn make_penzl() -> Result<ParametricLti> {
    let n = 1006usize;
    let mut a0 = Vec::with_capacity(n + 6);
    let freqs = [100.0, 200.0, 400.0];
    for (k, f) in freqs.iter().enumerate() {
        let r = 2 * k;
        a0.push((r, r, Complex64::new(-1.0, 0.0)));
        a0.push((r, r + 1, Complex64::new(*f, 0.0)));
        a0.push((r + 1, r, Complex64::new(-f, 0.0)));
        a0.push((r + 1, r + 1, Complex64::new(-1.0, 0.0)));
    }
    for i in 0..1000 {
        a0.push((6 + i, 6 + i, Complex64::new(-((i + 1) as f64), 0.0)));
    }
    let a0 = CscMatrix::from_triplets(n, n, &a0)?;

    let block = |k: usize| -> Result<CscMatrix> {
        let r = 2 * k;
        CscMatrix::from_triplets(n, n, &[(r, r + 1, ONE), (r + 1, r, -ONE)])
    };

    let a = AffineMatrix::new(vec![
        (CoefficientFn::one(), a0),
        (CoefficientFn::param(0), block(0)?),
        (CoefficientFn::param(1), block(1)?),
        (CoefficientFn::param(2), block(2)?),
    ])?;

    let mut bv = vec![ONE; n];
    for entry in bv.iter_mut().take(6) {
        *entry = Complex64::new(10.0, 0.0);
    }
    let b = AffineVector::constant(bv.clone())?;
    let c = AffineVector::constant(bv)?;
    let m = frequency_domain_operator(&a)?;

    Ok(ParametricLti {
        name: "penzl".into(),
        n,
        a,
        b,
        c,
        m,
        param_box: vec![[-20.0, 20.0]; 3],
        output_scale: 1.0,
    })
}

/// Node coordinates of the interior tensor grid on (-1,1).
fn interior_coords(grid_n: usize) -> (f64, Vec<f64>) {
    let h = 2.0 / (grid_n as f64 + 1.0);
    let xs = (0..grid_n).map(|i| -1.0 + (i as f64 + 1.0) * h).collect();
    (h, xs)
}

/// Second-difference operator along one axis on the interior tensor grid,
/// homogeneous Dirichlet boundary, optionally row-scaled by a nodal weight.
fn second_difference(
    grid_n: usize,
    along_x: bool,
    row_weight: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<CscMatrix> {
    let n = grid_n * grid_n;
    let (h, xs) = interior_coords(grid_n);
    let ih2 = 1.0 / (h * h);
    let mut trips = Vec::with_capacity(3 * n);
    for iy in 0..grid_n {
        for ix in 0..grid_n {
            let id = iy * grid_n + ix;
            let wgt = row_weight.map_or(1.0, |f| f(xs[ix], xs[iy]));
            let scale = wgt * ih2;
            trips.push((id, id, Complex64::new(-2.0 * scale, 0.0)));
            let (i, lim, stride) = if along_x {
                (ix, grid_n, 1usize)
            } else {
                (iy, grid_n, grid_n)
            };
            if i > 0 {
                trips.push((id, id - stride, Complex64::new(scale, 0.0)));
            }
            if i + 1 < lim {
                trips.push((id, id + stride, Complex64::new(scale, 0.0)));
            }
        }
    }
    CscMatrix::from_triplets(n, n, &trips)
}

/// Input indicator (forcing outside the radius-1/2 circle) and mean-value
/// output for the PDE models.
fn pde_io(grid_n: usize) -> Result<(AffineVector, AffineVector)> {
    let n = grid_n * grid_n;
    let (_, xs) = interior_coords(grid_n);
    let mut bv = vec![ZERO; n];
    for iy in 0..grid_n {
        for ix in 0..grid_n {
            if xs[ix] * xs[ix] + xs[iy] * xs[iy] > 0.25 {
                bv[iy * grid_n + ix] = ONE;
            }
        }
    }
    let cv = vec![Complex64::new(1.0 / n as f64, 0.0); n];
    Ok((AffineVector::constant(bv)?, AffineVector::constant(cv)?))
}

/// Symmetric parabolic model: `u_t = u_xx + p1 u_yy + p2 u + f`,
/// `p1 in [0.1, 4]`, `p2 in [0, 2]`.
pub fn make_heat_symmetric(grid_n: usize) -> Result<ParametricLti> {
    if grid_n < 3 {
        return Err(Error::Invalid("grid_n must be at least 3".into()));
    }
    let n = grid_n * grid_n;
    let dxx = second_difference(grid_n, true, None)?;
    let dyy = second_difference(grid_n, false, None)?;
    let a = AffineMatrix::new(vec![
        (CoefficientFn::one(), dxx),
        (CoefficientFn::param(0), dyy),
        (CoefficientFn::param(1), CscMatrix::identity(n)),
    ])?;
    let (b, c) = pde_io(grid_n)?;
    let m = frequency_domain_operator(&a)?;
    Ok(ParametricLti {
        name: "heat_symmetric".into(),
        n,
        a,
        b,
        c,
        m,
        param_box: vec![[0.1, 4.0], [0.0, 2.0]],
        output_scale: 4.0 / (n as f64).sqrt(),
    })
}

/// Vanishing diffusion model: `u_t = (1 + p1 x) u_xx + (1 + p2 y) u_yy + f`,
/// `p1, p2 in [-0.99, 0.99]`; the variable coefficients are sampled at nodes.
pub fn make_vanishing_diffusion(grid_n: usize) -> Result<ParametricLti> {
    if grid_n < 3 {
        return Err(Error::Invalid("grid_n must be at least 3".into()));
    }
    let dxx = second_difference(grid_n, true, None)?;
    let x_dxx = second_difference(grid_n, true, Some(&|x, _| x))?;
    let dyy = second_difference(grid_n, false, None)?;
    let y_dyy = second_difference(grid_n, false, Some(&|_, y| y))?;
    let a = AffineMatrix::new(vec![
        (CoefficientFn::one(), dxx),
        (CoefficientFn::param(0), x_dxx),
        (CoefficientFn::one(), dyy),
        (CoefficientFn::param(1), y_dyy),
    ])?;
    let (b, c) = pde_io(grid_n)?;
    let m = frequency_domain_operator(&a)?;
    Ok(ParametricLti {
        name: "vanishing_diffusion".into(),
        n: grid_n * grid_n,
        a,
        b,
        c,
        m,
        param_box: vec![[-0.99, 0.99], [-0.99, 0.99]],
        output_scale: 4.0 / (grid_n as f64 * grid_n as f64).sqrt(),
    })
}

/// Time-fractional heat model: the Laplace symbol `s^alpha` with
/// `s = i omega` splits into real coefficients on `I` and `iI`;
/// `alpha in [0.05, 1]` is the single model parameter.
pub fn make_fractional_heat(grid_n: usize) -> Result<ParametricLti> {
    if grid_n < 3 {
        return Err(Error::Invalid("grid_n must be at least 3".into()));
    }
    let n = grid_n * grid_n;
    let dxx = second_difference(grid_n, true, None)?;
    let dyy = second_difference(grid_n, false, None)?;
    let lap = AffineMatrix::new(vec![
        (CoefficientFn::one(), dxx.clone()),
        (CoefficientFn::one(), dyy.clone()),
    ])?;

    let mut neg_lap_trips = Vec::new();
    for (r, cidx, v) in dxx.iter().chain(dyy.iter()) {
        neg_lap_trips.push((r, cidx, -v));
    }
    let neg_lap = CscMatrix::from_triplets(n, n, &neg_lap_trips)?;

    let re_coeff = CoefficientFn::new("|omega|^alpha*cos(alpha*pi/2)", |pt: &ParameterPoint| {
        let alpha = pt.p[0];
        pt.omega.abs().powf(alpha) * (alpha * PI / 2.0).cos()
    });
    let im_coeff = CoefficientFn::new(
        "|omega|^alpha*sign(omega)*sin(alpha*pi/2)",
        |pt: &ParameterPoint| {
            let alpha = pt.p[0];
            let sign = if pt.omega > 0.0 {
                1.0
            } else if pt.omega < 0.0 {
                -1.0
            } else {
                0.0
            };
            pt.omega.abs().powf(alpha) * sign * (alpha * PI / 2.0).sin()
        },
    );
    let m = AffineMatrix::new(vec![
        (re_coeff, CscMatrix::identity(n)),
        (im_coeff, CscMatrix::scaled_identity(n, Complex64::new(0.0, 1.0))),
        (CoefficientFn::one(), neg_lap),
    ])?;

    let (b, c) = pde_io(grid_n)?;
    Ok(ParametricLti {
        name: "fractional_heat".into(),
        n,
        a: lap,
        b,
        c,
        m,
        param_box: vec![[0.05, 1.0]],
        output_scale: 4.0 / (n as f64).sqrt(),
    })
}

/// Constructor lookup used by the CLI; `grid_n` is ignored by `penzl`.
pub fn model_by_name(name: &str, grid_n: usize) -> Result<ParametricLti> {
    match name {
        "penzl" => make_penzl(),
        "heat_symmetric" => make_heat_symmetric(grid_n),
        "vanishing_diffusion" => make_vanishing_diffusion(grid_n),
        "fractional_heat" => make_fractional_heat(grid_n),
        other => Err(Error::Invalid(format!("unknown model '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::{smallest_sigma, SigmaMode};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag_model(vals: &[f64]) -> ParametricLti {
        let n = vals.len();
        let t: Vec<_> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, i, c(v, 0.0)))
            .collect();
        let a = AffineMatrix::new(vec![(
            CoefficientFn::one(),
            CscMatrix::from_triplets(n, n, &t).unwrap(),
        )])
        .unwrap();
        let m = frequency_domain_operator(&a).unwrap();
        let b = AffineVector::constant(vec![ONE; n]).unwrap();
        let cvec = AffineVector::constant(vec![ONE; n]).unwrap();
        ParametricLti {
            name: "diag".into(),
            n,
            a,
            b,
            c: cvec,
            m,
            param_box: vec![],
            output_scale: 1.0,
        }
    }

    #[test]
    fn diagonal_solve_at_zero_frequency() {
        let model = diag_model(&[-1.0, -2.0]);
        let sol = model
            .solve_frequency(&ParameterPoint::new(0.0, vec![]))
            .unwrap();
        assert!((sol.w[0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((sol.w[1] - c(0.5, 0.0)).norm() < 1e-12);
        assert!((sol.h - c(1.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn scalar_solve_at_unit_frequency() {
        let model = diag_model(&[-1.0]);
        let sol = model
            .solve_frequency(&ParameterPoint::new(1.0, vec![]))
            .unwrap();
        assert!((sol.w[0] - c(0.5, -0.5)).norm() < 1e-13);
    }

    #[test]
    fn transfer_constant_over_grid() {
        let model = diag_model(&[-1.0, -2.0]);
        let grid = crate::param::tensor_grid(&[0.0], &[]).unwrap();
        let h = model.transfer_function(&grid).unwrap();
        assert_eq!(h.len(), 1);
        assert!((h[0] - c(1.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn penzl_structure() {
        let model = make_penzl().unwrap();
        assert_eq!(model.n, 1006);
        assert_eq!(model.a.term_count(), 4);
        assert_eq!(model.m.term_count(), 5);
        let pt = ParameterPoint::new(0.0, vec![0.0, 0.0, 0.0]);
        let a = model.a.evaluate(&pt).unwrap().to_dense();
        assert_eq!(a[(0, 0)], c(-1.0, 0.0));
        assert_eq!(a[(0, 1)], c(100.0, 0.0));
        assert_eq!(a[(1, 0)], c(-100.0, 0.0));
        assert_eq!(a[(1, 1)], c(-1.0, 0.0));
        assert_eq!(a[(2, 3)], c(200.0, 0.0));
        assert_eq!(a[(4, 5)], c(400.0, 0.0));
        assert_eq!(a[(6, 6)], c(-1.0, 0.0));
        assert_eq!(a[(1005, 1005)], c(-1000.0, 0.0));
        // M at omega = 0 equals -A
        let m = model.m.evaluate(&pt).unwrap().to_dense();
        for idx in [(0, 0), (0, 1), (1, 0), (500, 500), (1005, 1005)] {
            assert_eq!(m[idx], -a[idx]);
        }
        // parameter shifts the off-diagonal blocks
        let pt2 = ParameterPoint::new(0.0, vec![5.0, -3.0, 1.5]);
        let a2 = model.a.evaluate(&pt2).unwrap().to_dense();
        assert_eq!(a2[(0, 1)], c(105.0, 0.0));
        assert_eq!(a2[(1, 0)], c(-105.0, 0.0));
        assert_eq!(a2[(2, 3)], c(197.0, 0.0));
        assert_eq!(a2[(5, 4)], c(-401.5, 0.0));
        // input/output data
        let b = model.b.evaluate(&pt).unwrap();
        assert!(b[..6].iter().all(|v| *v == c(10.0, 0.0)));
        assert!(b[6..].iter().all(|v| *v == c(1.0, 0.0)));
        let cv = model.c.evaluate(&pt).unwrap();
        assert_eq!(b, cv);
    }

    #[test]
    fn penzl_mode_peak_at_excited_frequency() {
        let model = make_penzl().unwrap();
        let p = vec![0.0, 0.0, 0.0];
        let h100 = model
            .solve_frequency(&ParameterPoint::new(100.0, p.clone()))
            .unwrap()
            .h;
        let h50 = model
            .solve_frequency(&ParameterPoint::new(50.0, p))
            .unwrap()
            .h;
        assert!(h100.norm() > h50.norm(), "{} !> {}", h100.norm(), h50.norm());
    }

    #[test]
    fn heat_symmetric_structure() {
        let grid_n = 8;
        let model = make_heat_symmetric(grid_n).unwrap();
        assert_eq!(model.n, grid_n * grid_n);
        assert_eq!(model.a.term_count(), 3);
        // at p = (1, 0) the operator is the plain 2D Laplacian: symmetric
        let pt = ParameterPoint::new(0.0, vec![1.0, 0.0]);
        let a = model.a.evaluate(&pt).unwrap().to_dense();
        for i in 0..model.n {
            for j in 0..i {
                assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
        // interior scaling: diagonal is -4/h^2
        let h = 2.0 / (grid_n as f64 + 1.0);
        assert!((a[(0, 0)].re + 4.0 / (h * h)).abs() < 1e-9);
    }

    #[test]
    fn heat_smallest_eigenvalue_approaches_continuum() {
        // sigma_min(M) at omega=0, p=(1,0) equals the smallest eigenvalue of
        // -A, which tends to 2*(pi/2)^2 on (-1,1)^2
        let model = make_heat_symmetric(64).unwrap();
        let pt = ParameterPoint::new(0.0, vec![1.0, 0.0]);
        let m = model.m.evaluate(&pt).unwrap();
        let (sigma, _) = smallest_sigma(&m, SigmaMode::Iterative).unwrap();
        let target = PI * PI / 2.0;
        assert!(
            (sigma - target).abs() < 0.02 * target,
            "sigma {sigma} vs {target}"
        );
    }

    #[test]
    fn vanishing_diffusion_structure() {
        let model = make_vanishing_diffusion(6).unwrap();
        assert_eq!(model.a.term_count(), 4);
        assert_eq!(model.param_box, vec![[-0.99, 0.99], [-0.99, 0.99]]);
        // p = 0 reduces to the Laplacian of the symmetric model at p = (1, 0)
        let sym = make_heat_symmetric(6).unwrap();
        let a_v = model
            .a
            .evaluate(&ParameterPoint::new(0.0, vec![0.0, 0.0]))
            .unwrap()
            .to_dense();
        let a_s = sym
            .a
            .evaluate(&ParameterPoint::new(0.0, vec![1.0, 0.0]))
            .unwrap()
            .to_dense();
        for i in 0..model.n {
            for j in 0..model.n {
                assert!((a_v[(i, j)] - a_s[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn fractional_coefficients_recover_integer_order() {
        let model = make_fractional_heat(4).unwrap();
        assert_eq!(model.m.term_count(), 3);
        let pt = ParameterPoint::new(2.5, vec![1.0]);
        let th = model.m.coefficients(&pt).unwrap();
        assert!(th[0].abs() < 1e-15);
        assert!((th[1] - 2.5).abs() < 1e-14);
        assert!((th[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fractional_half_power_at_unit_frequency() {
        let model = make_fractional_heat(4).unwrap();
        let pt = ParameterPoint::new(1.0, vec![0.5]);
        let th = model.m.coefficients(&pt).unwrap();
        let expect = (2.0f64).sqrt() / 2.0;
        assert!((th[0] - expect).abs() < 1e-14);
        assert!((th[1] - expect).abs() < 1e-14);
    }

    #[test]
    fn fractional_symbol_reconstruction() {
        let model = make_fractional_heat(4).unwrap();
        let mut state = 0xFACEu64;
        let mut next = move || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let omega = 10f64.powf(next() * 5.0 - 2.0);
            let alpha = 0.05 + 0.95 * next();
            let pt = ParameterPoint::new(omega, vec![alpha]);
            let th = model.m.coefficients(&pt).unwrap();
            let rebuilt = Complex64::new(th[0], th[1]);
            let truth = Complex64::new(0.0, omega).powf(alpha);
            assert!(
                (rebuilt - truth).norm() <= 1e-12 * truth.norm().max(1.0),
                "omega {omega} alpha {alpha}: {rebuilt} vs {truth}"
            );
        }
    }

    #[test]
    fn conjugate_symmetry_of_real_models() {
        let model = make_heat_symmetric(6).unwrap();
        for &(omega, p1, p2) in &[(0.3, 1.0, 0.0), (7.0, 2.5, 1.3), (150.0, 0.1, 2.0)] {
            let hp = model
                .solve_frequency(&ParameterPoint::new(omega, vec![p1, p2]))
                .unwrap()
                .h;
            let hm = model
                .solve_frequency(&ParameterPoint::new(-omega, vec![p1, p2]))
                .unwrap()
                .h;
            assert!((hm - hp.conj()).norm() <= 1e-12 * hp.norm());
        }
        let penzl = make_penzl().unwrap();
        let p = vec![3.0, -7.0, 12.0];
        let hp = penzl
            .solve_frequency(&ParameterPoint::new(90.0, p.clone()))
            .unwrap()
            .h;
        let hm = penzl
            .solve_frequency(&ParameterPoint::new(-90.0, p))
            .unwrap()
            .h;
        assert!((hm - hp.conj()).norm() <= 1e-12 * hp.norm());
    }

    #[test]
    fn out_of_box_parameters_rejected() {
        let model = make_heat_symmetric(4).unwrap();
        assert!(model
            .solve_frequency(&ParameterPoint::new(1.0, vec![5.0, 0.0]))
            .is_err());
        assert!(model
            .solve_frequency(&ParameterPoint::new(1.0, vec![1.0]))
            .is_err());
    }

    #[test]
    fn forcing_indicator_is_strictly_outside_circle() {
        let model = make_heat_symmetric(15).unwrap();
        let (_, xs) = interior_coords(15);
        let b = model
            .b
            .evaluate(&ParameterPoint::new(0.0, vec![1.0, 0.0]))
            .unwrap();
        for iy in 0..15 {
            for ix in 0..15 {
                let outside = xs[ix] * xs[ix] + xs[iy] * xs[iy] > 0.25;
                assert_eq!(b[iy * 15 + ix] != ZERO, outside);
            }
        }
    }

    #[test]
    fn solve_residual_invariant() {
        let model = make_vanishing_diffusion(8).unwrap();
        for &(omega, p1, p2) in &[(0.01, 0.9, -0.9), (10.0, -0.5, 0.5), (1000.0, 0.0, 0.0)] {
            let pt = ParameterPoint::new(omega, vec![p1, p2]);
            let sol = model.solve_frequency(&pt).unwrap();
            let m = model.m.evaluate(&pt).unwrap();
            let b = model.b.evaluate(&pt).unwrap();
            assert!(residual(&m, &sol.w, &b) <= SOLVE_RESIDUAL_TOL * norm2(&b));
        }
    }
}
